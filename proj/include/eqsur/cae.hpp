#pragma once

#include "eqsur/nn.hpp"

namespace eqsur {

/// Convolutional autoencoder configuration. Six encoder layers (kernel sizes
/// 5,5,5,5,5,3) with 2x max pooling after layers 1, 3 and 5; the decoder
/// mirrors them (3,5,5,5,5,5) with trilinear upsampling after layers 1, 3
/// and 5. Three poolings map N -> N/8 per axis; the latent keeps its spatial
/// structure (it is never flattened).
struct CAEConfig {
    enum class Variant { SteerableD4, SteerableC4, Baseline3dConv };
    Variant variant = Variant::SteerableD4;

    int n1 = 24, n2 = 24, n3 = 16;

    /// Hidden widths of encoder layers 1..5 in regular fields (steerable
    /// variants); the decoder mirrors them. Desk default 2,2,4,4,8.
    std::vector<int> encoder_fields = {2, 2, 4, 4, 8};
    /// Latent width in regular fields (C_latent = |G| * latent_fields).
    int latent_fields = 2;

    /// Baseline variant: hidden widths of encoder layers 1..5 in raw
    /// channels, plus the latent channel count (kept equal to the steerable
    /// latent for identical compression).
    std::vector<int> baseline_channels = {13, 13, 25, 25, 50};
    int baseline_latent_channels = 16;

    double dropout_rate = 0.0;
    bool use_bn = true; ///< batch normalization on hidden layers
    int kv = 0; ///< vertical sharing radius on hidden layers, 0 disables

    GroupKind group() const {
        return variant == Variant::SteerableC4 ? GroupKind::C4 : GroupKind::D4;
    }
    bool steerable() const { return variant != Variant::Baseline3dConv; }

    int latent_channels() const;
    int m1() const { return n1 / 8; }
    int m2() const { return n2 / 8; }
    int m3() const { return n3 / 8; }
    double compression_ratio() const; // latent elements / input elements

    FieldType input_type() const { return FieldType::rb_input(group()); }
    FieldType latent_type() const;

    /// Paper-scale configuration (48x48x32, C_latent = 32) used for the
    /// compression-arithmetic checks.
    static CAEConfig paper_scale();
    /// Desk-scale default (24x24x16, C_latent = 16).
    static CAEConfig desk(Variant variant = Variant::SteerableD4);

    std::string summary() const;
};

/// Widen/narrow the baseline channel plan until its parameter count matches
/// the steerable configuration within `tol` (fractional). Returns the
/// adapted baseline config.
CAEConfig match_baseline_to(const CAEConfig& steerable_cfg, double tol = 0.05);
/// C4 plan with parameter count as close as integer field counts allow to
/// the D4 configuration's.
CAEConfig match_c4_to(const CAEConfig& d4_cfg);

/// The autoencoder. encode: [B, 4, N1, N2, N3] -> [B, C_latent, M1, M2, M3];
/// decode: inverse shapes. Steerable variants are D4/C4-equivariant end to
/// end; the baseline deliberately is not (negative control).
template <typename T>
class CAE {
public:
    CAE(const CAEConfig& cfg, Rng& init);

    Tensor<T> encode(const Tensor<T>& snap, bool training = false, Rng* rng = nullptr);
    Tensor<T> decode(const Tensor<T>& z, bool training = false, Rng* rng = nullptr);

    void bind(Tape<T>* tape);
    std::vector<ParamRef<T>> params();
    int64_t param_count() const;
    const CAEConfig& config() const { return cfg_; }
    void set_dropout_rate(double rate) { cfg_.dropout_rate = rate; }

    static int64_t count_parameters(const CAEConfig& cfg);

private:
    struct Block {
        Conv3dLayer<T> conv;
        BiasLayer<T> bias;
        BatchNormLayer<T> bn;
        std::vector<int> dropout_map;
        int dropout_fields_n = 0;
        bool has_bn = false, has_act = false;
        bool pool = false, upsample = false;

        Block(const typename Conv3dLayer<T>::Spec& spec, Rng& init) : conv(spec, init) {}
    };

    Tensor<T> run_block(Block& blk, const Tensor<T>& x, bool training, Rng* rng);

    CAEConfig cfg_;
    std::vector<Block> encoder_, decoder_;
};

} // namespace eqsur
