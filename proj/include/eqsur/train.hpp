#pragma once

#include <map>

#include "eqsur/cae.hpp"
#include "eqsur/dataset.hpp"
#include "eqsur/lstm.hpp"

namespace eqsur::train {

struct TrainConfig {
    int batch = 16;
    double lr = 1e-3;
    int max_epochs = 40;
    int patience = 10;      ///< early stop after this many epochs without improvement
    int lr_plateau = 10;    ///< halve the learning rate on a validation plateau
    double dropout = 0.05;
    bool augment = true;
    uint64_t seed = 1;
    int samples_per_epoch = 0; ///< 0 = full pass over the training split

    // LSTM windows and scheduled sampling (teacher-forcing probability
    // decays 1 -> 0 linearly over ss_epochs)
    int w_train = 10, h_train = 20;
    int ss_epochs = 20;

    double divergence_abort = 1e3; ///< abort when the loss exceeds this
};

struct TrainReport {
    std::vector<double> train_loss, val_loss;
    std::vector<double> lr_trace;
    int best_epoch = -1;
    double best_val = 0.0;
    double wall_seconds = 0.0;
    int64_t param_count = 0;
    int clip_events = 0;

    std::string to_tsv() const;
};

/// Forecast evaluation: median-over-trajectories RMSE per horizon step
/// (standardized units) plus the reconstruction RMSE of the same split.
struct EvalReport {
    std::vector<double> rmse_curve; ///< one entry per horizon step
    double recon_rmse = 0.0;
    int trajectories = 0;
    int warmup = 0, horizon = 0;
    int64_t cae_params = 0, lstm_params = 0;
    double wall_seconds = 0.0;

    std::string to_tsv() const;
};

/// Self-supervised CAE training (Adam, MSE, batch norm active, optional D4
/// augmentation and field dropout, early stopping on validation loss). The
/// best-validation weights are restored into `cae` on return.
TrainReport train_cae(CAE<float>* cae, const TrainConfig& cfg, const data::Dataset& ds);

/// Mean reconstruction RMSE of a split (standardized units, eval mode).
double reconstruction_rmse(CAE<float>* cae, const data::Dataset& ds, const std::string& split,
                           GroupElement transform = {0, 0});

/// Map every snapshot through the encoder and persist a latent dataset that
/// links the producing checkpoint digest.
data::Dataset encode_dataset(CAE<float>* cae, const data::Dataset& ds,
                             const std::string& out_dir, const std::string& cae_digest);

/// LSTM training on precomputed latents: backpropagation through time over
/// (w_train + h_train) windows, scheduled sampling, gradient clipping at
/// norm 1 (incidents counted above norm 1e3, abort after 100 consecutive).
TrainReport train_lstm(ConvLSTM<float>* lstm, const TrainConfig& cfg,
                       const data::Dataset& latents);

/// Teacher-forcing probability of the scheduled-sampling ramp: 1 at epoch 0,
/// 0 from ss_epochs on, linear in between.
double teacher_probability(int epoch, int ss_epochs);

/// Autoregressive forecast evaluation on a split. `oracle` feeds ground
/// truth latents instead of the model's own predictions (the error
/// decomposition lower bound). Horizons beyond the data are truncated.
EvalReport evaluate_forecast(CAE<float>* cae, ConvLSTM<float>* lstm, const data::Dataset& ds,
                             const std::string& split, int warmup, int horizon,
                             bool oracle = false, GroupElement transform = {0, 0});

/// Write a simple vector-graphic line plot (one polyline per series).
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<std::pair<std::string, std::vector<double>>>& series);

/// Save / restore model parameters by name (checkpoint glue).
template <typename Model>
std::map<std::string, Tensor<float>> snapshot_params(Model* model) {
    std::map<std::string, Tensor<float>> out;
    for (auto& p : model->params()) out.emplace(p.name, p.slot->detached());
    return out;
}
template <typename Model>
void restore_params(Model* model, const std::map<std::string, Tensor<float>>& blobs) {
    for (auto& p : model->params()) {
        auto it = blobs.find(p.name);
        if (it == blobs.end()) throw ValidationError("restore_params: missing blob " + p.name);
        if (it->second.shape() != p.slot->shape())
            throw ValidationError("restore_params: shape mismatch on " + p.name);
        *p.slot = it->second;
    }
}

} // namespace eqsur::train
