#pragma once

#include "eqsur/nn.hpp"

namespace eqsur {

/// Convolutional LSTM over latent states, with convolutional peephole
/// connections (the cell state enters the input/forget gates through its
/// own convolutions, and c_t enters the output gate) and a residual output
/// map z_{t+1} = z_t + h_t * psi + b. All gate convolutions are kernel-size-3
/// height-dependent steerable convolutions on the latent grid (circular
/// horizontal, zero vertical padding); the baseline variant swaps in
/// standard unconstrained 3D convolutions.
struct LSTMConfig {
    bool steerable = true;
    GroupKind group = GroupKind::D4;
    int latent_fields = 2;    // steerable: regular fields of z
    int hidden_fields = 4;    // steerable: regular fields of h, c
    int latent_channels = 16; // baseline channel counts
    int hidden_channels = 32;
    int m1 = 3, m2 = 3, m3 = 2;
    int k = 3;

    int z_channels() const {
        return steerable ? latent_fields * group_order(group) : latent_channels;
    }
    int h_channels() const {
        return steerable ? hidden_fields * group_order(group) : hidden_channels;
    }
    FieldType z_type() const;
    FieldType h_type() const;
};

template <typename T>
struct LSTMState {
    Tensor<T> h, c;
};

template <typename T>
class ConvLSTM {
public:
    ConvLSTM(const LSTMConfig& cfg, Rng& init);

    LSTMState<T> zero_state(int64_t batch) const;

    /// One gate update: (z_t, state_{t-1}) -> state_t.
    LSTMState<T> step(const Tensor<T>& z, const LSTMState<T>& state);

    /// Residual next-latent prediction from the current hidden state.
    Tensor<T> predict_next(const Tensor<T>& z, const Tensor<T>& h);

    /// Consume `warmup` with teacher inputs, then feed predictions back for
    /// `horizon` steps. Aborts with the step index on non-finite activations.
    std::vector<Tensor<T>> rollout(const std::vector<Tensor<T>>& warmup, int horizon);

    void bind(Tape<T>* tape);
    std::vector<ParamRef<T>> params();
    int64_t param_count() const;
    static int64_t count_parameters(const LSTMConfig& cfg);
    const LSTMConfig& config() const { return cfg_; }

private:
    LSTMConfig cfg_;
    // gate convolutions, named after the App-style psi^{xy} pairs
    std::unique_ptr<Conv3dLayer<T>> zi_, hi_, ci_, zf_, hf_, cf_, zc_, hc_, zo_, ho_, co_;
    std::unique_ptr<Conv3dLayer<T>> out_;
    BiasLayer<T> bi_, bf_, bc_, bo_, bout_;
};

/// Baseline LSTM hidden width with a parameter count as close as possible
/// to the steerable configuration's.
LSTMConfig match_lstm_baseline(const LSTMConfig& steerable_cfg);

} // namespace eqsur
