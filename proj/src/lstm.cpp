#include <cmath>

#include "eqsur/lstm.hpp"

namespace eqsur {

FieldType LSTMConfig::z_type() const {
    if (steerable) return FieldType::regular(latent_fields, group);
    return FieldType{group, std::vector<RepKind>(latent_channels, RepKind::Trivial)};
}

FieldType LSTMConfig::h_type() const {
    if (steerable) return FieldType::regular(hidden_fields, group);
    return FieldType{group, std::vector<RepKind>(hidden_channels, RepKind::Trivial)};
}

namespace {

template <typename T>
std::unique_ptr<Conv3dLayer<T>> make_gate_conv(const LSTMConfig& cfg, bool from_latent,
                                               bool to_latent, Rng& init) {
    typename Conv3dLayer<T>::Spec spec;
    spec.k = cfg.k;
    spec.taps = cfg.k;
    spec.n1 = cfg.m1;
    spec.n2 = cfg.m2;
    spec.n3 = cfg.m3;
    if (cfg.steerable) {
        spec.variant = Conv3dLayer<T>::Variant::SteerableHeightDependent;
        spec.in_type = from_latent ? cfg.z_type() : cfg.h_type();
        spec.out_type = to_latent ? cfg.z_type() : cfg.h_type();
    } else {
        spec.variant = Conv3dLayer<T>::Variant::Baseline3d;
        spec.cin = from_latent ? cfg.latent_channels : cfg.hidden_channels;
        spec.cout = to_latent ? cfg.latent_channels : cfg.hidden_channels;
    }
    return std::make_unique<Conv3dLayer<T>>(spec, init);
}

} // namespace

template <typename T>
ConvLSTM<T>::ConvLSTM(const LSTMConfig& cfg, Rng& init) : cfg_(cfg) {
    zi_ = make_gate_conv<T>(cfg, true, false, init);
    hi_ = make_gate_conv<T>(cfg, false, false, init);
    ci_ = make_gate_conv<T>(cfg, false, false, init);
    zf_ = make_gate_conv<T>(cfg, true, false, init);
    hf_ = make_gate_conv<T>(cfg, false, false, init);
    cf_ = make_gate_conv<T>(cfg, false, false, init);
    zc_ = make_gate_conv<T>(cfg, true, false, init);
    hc_ = make_gate_conv<T>(cfg, false, false, init);
    zo_ = make_gate_conv<T>(cfg, true, false, init);
    ho_ = make_gate_conv<T>(cfg, false, false, init);
    co_ = make_gate_conv<T>(cfg, false, false, init);
    out_ = make_gate_conv<T>(cfg, false, true, init);

    const FieldType ht = cfg.h_type();
    const FieldType zt = cfg.z_type();
    bi_ = BiasLayer<T>(ht.field_of_channel(), ht.num_fields());
    bf_ = BiasLayer<T>(ht.field_of_channel(), ht.num_fields());
    bc_ = BiasLayer<T>(ht.field_of_channel(), ht.num_fields());
    bo_ = BiasLayer<T>(ht.field_of_channel(), ht.num_fields());
    bout_ = BiasLayer<T>(zt.field_of_channel(), zt.num_fields());
}

template <typename T>
LSTMState<T> ConvLSTM<T>::zero_state(int64_t batch) const {
    Shape s{batch, static_cast<int64_t>(cfg_.h_channels()), static_cast<int64_t>(cfg_.m1),
            static_cast<int64_t>(cfg_.m2), static_cast<int64_t>(cfg_.m3)};
    return {Tensor<T>::zeros(s), Tensor<T>::zeros(s)};
}

template <typename T>
LSTMState<T> ConvLSTM<T>::step(const Tensor<T>& z, const LSTMState<T>& state) {
    const Tensor<T>& h = state.h;
    const Tensor<T>& c = state.c;
    Tensor<T> i_t = sigmoid(bi_.forward(add(add(zi_->forward(z), hi_->forward(h)),
                                            ci_->forward(c))));
    Tensor<T> f_t = sigmoid(bf_.forward(add(add(zf_->forward(z), hf_->forward(h)),
                                            cf_->forward(c))));
    Tensor<T> c_t = add(hadamard(f_t, c),
                        hadamard(i_t, tanh_op(bc_.forward(add(zc_->forward(z), hc_->forward(h))))));
    Tensor<T> o_t = sigmoid(bo_.forward(add(add(zo_->forward(z), ho_->forward(h)),
                                            co_->forward(c_t))));
    Tensor<T> h_t = hadamard(o_t, tanh_op(c_t));
    return {h_t, c_t};
}

template <typename T>
Tensor<T> ConvLSTM<T>::predict_next(const Tensor<T>& z, const Tensor<T>& h) {
    return add(z, bout_.forward(out_->forward(h)));
}

template <typename T>
std::vector<Tensor<T>> ConvLSTM<T>::rollout(const std::vector<Tensor<T>>& warmup, int horizon) {
    if (warmup.empty()) throw ValidationError("rollout: warmup must contain at least one state");
    LSTMState<T> st = zero_state(warmup.front().extent(0));
    for (const Tensor<T>& z : warmup) st = step(z, st);
    std::vector<Tensor<T>> preds;
    Tensor<T> cur = warmup.back();
    for (int j = 0; j < horizon; ++j) {
        Tensor<T> next = predict_next(cur, st.h);
        if (!std::isfinite(static_cast<double>(next.max_abs())))
            throw NumericalError("rollout: non-finite activation at step " + std::to_string(j));
        preds.push_back(next);
        if (j + 1 < horizon) {
            st = step(next, st);
            cur = next;
        }
    }
    return preds;
}

template <typename T>
void ConvLSTM<T>::bind(Tape<T>* tape) {
    for (auto* conv : {zi_.get(), hi_.get(), ci_.get(), zf_.get(), hf_.get(), cf_.get(),
                       zc_.get(), hc_.get(), zo_.get(), ho_.get(), co_.get(), out_.get()})
        conv->bind(tape);
    for (auto* b : {&bi_, &bf_, &bc_, &bo_, &bout_}) b->bind(tape);
}

template <typename T>
std::vector<ParamRef<T>> ConvLSTM<T>::params() {
    std::vector<ParamRef<T>> out;
    const char* names[] = {"zi", "hi", "ci", "zf", "hf", "cf", "zc", "hc", "zo", "ho", "co"};
    Conv3dLayer<T>* convs[] = {zi_.get(), hi_.get(), ci_.get(), zf_.get(), hf_.get(), cf_.get(),
                               zc_.get(), hc_.get(), zo_.get(), ho_.get(), co_.get()};
    for (int i = 0; i < 11; ++i)
        out.push_back({std::string("lstm.psi_") + names[i], convs[i]->weight_slot()});
    out.push_back({"lstm.psi_out", out_->weight_slot()});
    bi_.collect("lstm.b_i", out);
    bf_.collect("lstm.b_f", out);
    bc_.collect("lstm.b_c", out);
    bo_.collect("lstm.b_o", out);
    bout_.collect("lstm.b_out", out);
    return out;
}

template <typename T>
int64_t ConvLSTM<T>::param_count() const {
    int64_t total = 0;
    for (auto* conv : {zi_.get(), hi_.get(), ci_.get(), zf_.get(), hf_.get(), cf_.get(),
                       zc_.get(), hc_.get(), zo_.get(), ho_.get(), co_.get(), out_.get()})
        total += conv->param_count();
    total += 4 * cfg_.h_type().num_fields() + cfg_.z_type().num_fields();
    return total;
}

template <typename T>
int64_t ConvLSTM<T>::count_parameters(const LSTMConfig& cfg) {
    Rng tmp(1);
    auto count = [&](bool from_latent, bool to_latent) {
        typename Conv3dLayer<T>::Spec spec;
        spec.k = cfg.k;
        spec.taps = cfg.k;
        spec.n1 = cfg.m1;
        spec.n2 = cfg.m2;
        spec.n3 = cfg.m3;
        if (cfg.steerable) {
            spec.variant = Conv3dLayer<T>::Variant::SteerableHeightDependent;
            spec.in_type = from_latent ? cfg.z_type() : cfg.h_type();
            spec.out_type = to_latent ? cfg.z_type() : cfg.h_type();
        } else {
            spec.variant = Conv3dLayer<T>::Variant::Baseline3d;
            spec.cin = from_latent ? cfg.latent_channels : cfg.hidden_channels;
            spec.cout = to_latent ? cfg.latent_channels : cfg.hidden_channels;
        }
        return Conv3dLayer<T>::count_parameters(spec);
    };
    // 4 latent->hidden gates, 7 hidden->hidden (incl. peepholes), 1 output
    int64_t total = 4 * count(true, false) + 7 * count(false, false) + count(false, true);
    total += 4 * cfg.h_type().num_fields() + cfg.z_type().num_fields();
    return total;
}

LSTMConfig match_lstm_baseline(const LSTMConfig& steerable_cfg) {
    const int64_t target = ConvLSTM<float>::count_parameters(steerable_cfg);
    LSTMConfig best;
    int64_t best_diff = -1;
    for (int hc = 2; hc <= 4 * steerable_cfg.h_channels(); ++hc) {
        LSTMConfig cand = steerable_cfg;
        cand.steerable = false;
        cand.latent_channels = steerable_cfg.z_channels();
        cand.hidden_channels = hc;
        const int64_t diff = std::llabs(ConvLSTM<float>::count_parameters(cand) - target);
        if (best_diff < 0 || diff < best_diff) {
            best_diff = diff;
            best = cand;
        }
    }
    return best;
}

template class ConvLSTM<float>;
template class ConvLSTM<double>;

} // namespace eqsur
