#include <cmath>
#include <sstream>

#include "eqsur/cae.hpp"

namespace eqsur {

int CAEConfig::latent_channels() const {
    if (!steerable()) return baseline_latent_channels;
    return latent_fields * group_order(group());
}

double CAEConfig::compression_ratio() const {
    const double latent = static_cast<double>(latent_channels()) * m1() * m2() * m3();
    const double input = 4.0 * n1 * n2 * n3;
    return latent / input;
}

FieldType CAEConfig::latent_type() const {
    if (!steerable())
        return FieldType{group(), std::vector<RepKind>(baseline_latent_channels, RepKind::Trivial)};
    return FieldType::regular(latent_fields, group());
}

CAEConfig CAEConfig::paper_scale() {
    CAEConfig cfg;
    cfg.n1 = cfg.n2 = 48;
    cfg.n3 = 32;
    cfg.encoder_fields = {4, 4, 8, 8, 16};
    cfg.latent_fields = 4; // C_latent = 32
    return cfg;
}

CAEConfig CAEConfig::desk(Variant variant) {
    CAEConfig cfg;
    cfg.variant = variant;
    if (variant == Variant::SteerableC4) {
        // ~1/sqrt(2) of the D4 channel widths keeps the free-parameter count
        // close (C4 constrains by 1/4 instead of 1/8)
        cfg.encoder_fields = {3, 3, 6, 6, 11};
        cfg.latent_fields = 4; // 16 channels, same compression
    }
    return cfg;
}

std::string CAEConfig::summary() const {
    std::ostringstream os;
    os << "variant=";
    switch (variant) {
        case Variant::SteerableD4: os << "steerable-d4"; break;
        case Variant::SteerableC4: os << "steerable-c4"; break;
        case Variant::Baseline3dConv: os << "baseline-3dconv"; break;
    }
    os << " grid=" << n1 << "x" << n2 << "x" << n3 << " latent=" << latent_channels() << "x"
       << m1() << "x" << m2() << "x" << m3() << " kv=" << kv;
    return os.str();
}

namespace {

struct LayerPlan {
    int k;            // horizontal kernel size == vertical taps
    int s1, s2, s3;   // input spatial extents
    bool pool = false, upsample = false, head = false;
};

/// Spatial/kernel schedule shared by all variants. Encoder kernel sizes
/// 5,5,5,5,5,3 with pooling after layers 1,3,5; decoder mirrors.
void make_schedule(const CAEConfig& cfg, std::vector<LayerPlan>* enc,
                   std::vector<LayerPlan>* dec) {
    const int n1 = cfg.n1, n2 = cfg.n2, n3 = cfg.n3;
    if (n1 % 8 || n2 % 8 || n3 % 8)
        throw ValidationError("CAE: spatial extents must be divisible by 8, got " +
                              std::to_string(n1) + "x" + std::to_string(n2) + "x" +
                              std::to_string(n3));
    *enc = {{5, n1, n2, n3, true, false, false},
            {5, n1 / 2, n2 / 2, n3 / 2, false, false, false},
            {5, n1 / 2, n2 / 2, n3 / 2, true, false, false},
            {5, n1 / 4, n2 / 4, n3 / 4, false, false, false},
            {5, n1 / 4, n2 / 4, n3 / 4, true, false, false},
            {3, n1 / 8, n2 / 8, n3 / 8, false, false, true}};
    *dec = {{3, n1 / 8, n2 / 8, n3 / 8, false, true, false},
            {5, n1 / 4, n2 / 4, n3 / 4, false, false, false},
            {5, n1 / 4, n2 / 4, n3 / 4, false, true, false},
            {5, n1 / 2, n2 / 2, n3 / 2, false, false, false},
            {5, n1 / 2, n2 / 2, n3 / 2, false, true, false},
            {5, n1, n2, n3, false, false, true}};
}

/// Channel plan per layer as (in, out) field/channel widths. For steerable
/// variants the widths are regular-field counts; for the baseline, raw
/// channels. Decoder mirrors the encoder.
struct WidthPlan {
    std::vector<int> enc_in, enc_out, dec_in, dec_out;
};

WidthPlan make_widths(const CAEConfig& cfg) {
    WidthPlan w;
    const bool st = cfg.steerable();
    const std::vector<int>& hidden = st ? cfg.encoder_fields : cfg.baseline_channels;
    if (hidden.size() != 5)
        throw ValidationError("CAE: channel plan must list 5 hidden widths");
    const int latent = st ? cfg.latent_fields : cfg.baseline_latent_channels;
    const int input = st ? -1 : 4; // steerable input handled by field type
    w.enc_in = {input, hidden[0], hidden[1], hidden[2], hidden[3], hidden[4]};
    w.enc_out = {hidden[0], hidden[1], hidden[2], hidden[3], hidden[4], latent};
    w.dec_in = {latent, hidden[4], hidden[3], hidden[2], hidden[1], hidden[0]};
    w.dec_out = {hidden[4], hidden[3], hidden[2], hidden[1], hidden[0], input};
    return w;
}

/// Build the 12 layer specs (encoder then decoder), threading the actual
/// output widths through: vertical sharing replaces a layer's out_w fields
/// by ceil(out_w/n) learned fields applied across the neighborhood, which
/// changes the realized channel count the next layer consumes.
template <typename T>
std::vector<typename Conv3dLayer<T>::Spec> make_specs(const CAEConfig& cfg) {
    std::vector<LayerPlan> enc, dec;
    make_schedule(cfg, &enc, &dec);
    WidthPlan w = make_widths(cfg);
    const GroupKind g = cfg.group();
    const int n = 2 * cfg.kv + 1;

    std::vector<typename Conv3dLayer<T>::Spec> specs;
    int prev_fields = -1; // actual field/channel count produced by the previous layer
    auto build = [&](const LayerPlan& lp, int out_w, bool enc_first, bool dec_last) {
        typename Conv3dLayer<T>::Spec spec;
        spec.k = lp.k;
        spec.taps = lp.k;
        spec.n1 = lp.s1;
        spec.n2 = lp.s2;
        spec.n3 = lp.s3;
        if (!cfg.steerable()) {
            spec.variant = Conv3dLayer<T>::Variant::Baseline3d;
            spec.cin = enc_first ? 4 : prev_fields;
            spec.cout = dec_last ? 4 : out_w;
            prev_fields = spec.cout;
        } else if (cfg.kv > 0 && !lp.head && !dec_last && n <= lp.s3) {
            // sharing applies only where the neighborhood fits the layer's
            // vertical extent; heads keep exact channel counts
            spec.variant = Conv3dLayer<T>::Variant::SteerableVerticalShared;
            spec.kv = cfg.kv;
            spec.in_type = enc_first ? FieldType::rb_input(g) : FieldType::regular(prev_fields, g);
            spec.out_type = FieldType::regular(std::max(1, (out_w + n - 1) / n), g);
            prev_fields = n * spec.out_type.num_fields();
        } else {
            spec.variant = Conv3dLayer<T>::Variant::SteerableHeightDependent;
            spec.in_type = enc_first ? FieldType::rb_input(g) : FieldType::regular(prev_fields, g);
            spec.out_type = dec_last ? FieldType::rb_input(g) : FieldType::regular(out_w, g);
            prev_fields = spec.out_type.num_fields();
        }
        specs.push_back(std::move(spec));
    };
    for (int i = 0; i < 6; ++i) build(enc[i], w.enc_out[i], i == 0, false);
    for (int i = 0; i < 6; ++i) build(dec[i], w.dec_out[i], false, i == 5);
    return specs;
}

/// Output field structure of a layer (for bias/norm/dropout maps).
template <typename T>
FieldType out_field_type(const CAEConfig& cfg, const typename Conv3dLayer<T>::Spec& spec) {
    if (spec.variant == Conv3dLayer<T>::Variant::Baseline3d)
        return FieldType{GroupKind::D4,
                         std::vector<RepKind>(static_cast<size_t>(spec.cout), RepKind::Trivial)};
    if (spec.variant == Conv3dLayer<T>::Variant::SteerableVerticalShared) {
        FieldType full{cfg.group(), {}};
        for (int j = 0; j < 2 * spec.kv + 1; ++j)
            for (RepKind r : spec.out_type.fields) full.fields.push_back(r);
        return full;
    }
    return spec.out_type;
}

} // namespace

template <typename T>
CAE<T>::CAE(const CAEConfig& cfg, Rng& init) : cfg_(cfg) {
    std::vector<LayerPlan> enc, dec;
    make_schedule(cfg, &enc, &dec);
    auto specs = make_specs<T>(cfg);

    auto build = [&](const LayerPlan& lp, const typename Conv3dLayer<T>::Spec& spec,
                     std::vector<Block>& dst) {
        Block blk(spec, init);
        FieldType ot = out_field_type<T>(cfg, spec);
        blk.bias = BiasLayer<T>(ot.field_of_channel(), ot.num_fields());
        blk.has_act = !lp.head;
        blk.has_bn = !lp.head && cfg.use_bn;
        if (blk.has_bn) blk.bn = BatchNormLayer<T>(ot.field_of_channel(), ot.num_fields());
        blk.dropout_map = ot.field_of_channel();
        blk.dropout_fields_n = ot.num_fields();
        blk.pool = lp.pool;
        blk.upsample = lp.upsample;
        dst.push_back(std::move(blk));
    };

    for (int i = 0; i < 6; ++i) build(enc[i], specs[i], encoder_);
    for (int i = 0; i < 6; ++i) build(dec[i], specs[6 + i], decoder_);

    // consecutive layers must agree on channel counts
    for (size_t i = 1; i < encoder_.size(); ++i)
        if (encoder_[i].conv.in_channels() != encoder_[i - 1].conv.out_channels())
            throw ValidationError("CAE: encoder layer " + std::to_string(i) +
                                  " channel mismatch");
    for (size_t i = 1; i < decoder_.size(); ++i)
        if (decoder_[i].conv.in_channels() != decoder_[i - 1].conv.out_channels())
            throw ValidationError("CAE: decoder layer " + std::to_string(i) +
                                  " channel mismatch");
}

template <typename T>
Tensor<T> CAE<T>::run_block(Block& blk, const Tensor<T>& x, bool training, Rng* rng) {
    Tensor<T> y = blk.bias.forward(blk.conv.forward(x));
    if (blk.has_bn) y = blk.bn.forward(y, training);
    if (blk.has_act) y = elu(y);
    if (training && cfg_.dropout_rate > 0.0 && blk.has_act) {
        if (!rng) throw ValidationError("CAE: dropout requires an RNG in training mode");
        y = dropout_fields(y, cfg_.dropout_rate, blk.dropout_map, blk.dropout_fields_n, *rng,
                           true);
    }
    if (blk.pool) y = max_pool3d(y);
    if (blk.upsample) y = upsample_trilinear2(y);
    return y;
}

template <typename T>
Tensor<T> CAE<T>::encode(const Tensor<T>& snap, bool training, Rng* rng) {
    if (snap.rank() != 5 || snap.extent(1) != 4 || snap.extent(2) != cfg_.n1 ||
        snap.extent(3) != cfg_.n2 || snap.extent(4) != cfg_.n3)
        throw ValidationError("CAE::encode: expected [B,4," + std::to_string(cfg_.n1) + "," +
                              std::to_string(cfg_.n2) + "," + std::to_string(cfg_.n3) +
                              "], got " + shape_str(snap.shape()));
    Tensor<T> y = snap;
    for (auto& blk : encoder_) y = run_block(blk, y, training, rng);
    return y;
}

template <typename T>
Tensor<T> CAE<T>::decode(const Tensor<T>& z, bool training, Rng* rng) {
    if (z.rank() != 5 || z.extent(1) != cfg_.latent_channels() || z.extent(2) != cfg_.m1() ||
        z.extent(3) != cfg_.m2() || z.extent(4) != cfg_.m3())
        throw ValidationError("CAE::decode: expected [B," +
                              std::to_string(cfg_.latent_channels()) + "," +
                              std::to_string(cfg_.m1()) + "," + std::to_string(cfg_.m2()) + "," +
                              std::to_string(cfg_.m3()) + "], got " + shape_str(z.shape()));
    Tensor<T> y = z;
    for (auto& blk : decoder_) y = run_block(blk, y, training, rng);
    return y;
}

template <typename T>
void CAE<T>::bind(Tape<T>* tape) {
    for (auto* seq : {&encoder_, &decoder_})
        for (auto& blk : *seq) {
            blk.conv.bind(tape);
            blk.bias.bind(tape);
            if (blk.has_bn) blk.bn.bind(tape);
        }
}

template <typename T>
std::vector<ParamRef<T>> CAE<T>::params() {
    std::vector<ParamRef<T>> out;
    int i = 0;
    for (auto& blk : encoder_) {
        const std::string base = "enc" + std::to_string(++i);
        out.push_back({base + ".w", blk.conv.weight_slot()});
        blk.bias.collect(base + ".b", out);
        if (blk.has_bn) blk.bn.collect(base + ".bn", out);
    }
    i = 0;
    for (auto& blk : decoder_) {
        const std::string base = "dec" + std::to_string(++i);
        out.push_back({base + ".w", blk.conv.weight_slot()});
        blk.bias.collect(base + ".b", out);
        if (blk.has_bn) blk.bn.collect(base + ".bn", out);
    }
    return out;
}

template <typename T>
int64_t CAE<T>::param_count() const {
    int64_t total = 0;
    for (const auto* seq : {&encoder_, &decoder_})
        for (const auto& blk : *seq) {
            total += blk.conv.param_count();
            total += blk.dropout_fields_n; // bias entries
            if (blk.has_bn) total += 2 * blk.dropout_fields_n;
        }
    return total;
}

template <typename T>
int64_t CAE<T>::count_parameters(const CAEConfig& cfg) {
    std::vector<LayerPlan> enc, dec;
    make_schedule(cfg, &enc, &dec);
    auto specs = make_specs<T>(cfg);
    int64_t total = 0;
    for (int i = 0; i < 12; ++i) {
        const LayerPlan& lp = (i < 6) ? enc[i] : dec[i - 6];
        total += Conv3dLayer<T>::count_parameters(specs[i]);
        FieldType ot = out_field_type<T>(cfg, specs[i]);
        total += ot.num_fields();                    // bias
        if (!lp.head) total += 2 * ot.num_fields();  // batch-norm affine
    }
    return total;
}

CAEConfig match_baseline_to(const CAEConfig& steerable_cfg, double tol) {
    const int64_t target = CAE<float>::count_parameters(steerable_cfg);
    CAEConfig best;
    int64_t best_diff = -1;
    // widen/narrow a reference plan with a continuous multiplier, rounding
    // to integer channel counts
    const std::vector<int> base = {16, 16, 32, 32, 64};
    for (double s = 0.2; s <= 4.0; s += 0.005) {
        CAEConfig cand = steerable_cfg;
        cand.variant = CAEConfig::Variant::Baseline3dConv;
        cand.baseline_latent_channels = steerable_cfg.latent_channels();
        cand.baseline_channels.clear();
        for (int c : base)
            cand.baseline_channels.push_back(std::max(2, static_cast<int>(std::lround(c * s))));
        const int64_t n = CAE<float>::count_parameters(cand);
        const int64_t diff = std::llabs(n - target);
        if (best_diff < 0 || diff < best_diff) {
            best_diff = diff;
            best = cand;
        }
    }
    if (static_cast<double>(best_diff) / static_cast<double>(target) > tol)
        throw NumericalError("match_baseline_to: could not match parameter counts within " +
                             std::to_string(tol));
    return best;
}

CAEConfig match_c4_to(const CAEConfig& d4_cfg) {
    const int64_t target = CAE<float>::count_parameters(d4_cfg);
    CAEConfig best;
    int64_t best_diff = -1;
    for (double s = 0.4; s <= 3.0; s += 0.01) {
        CAEConfig cand = d4_cfg;
        cand.variant = CAEConfig::Variant::SteerableC4;
        cand.latent_fields = d4_cfg.latent_channels() / 4; // same latent channels
        cand.encoder_fields.clear();
        for (int f : d4_cfg.encoder_fields)
            cand.encoder_fields.push_back(std::max(1, static_cast<int>(std::lround(f * 2 * s))));
        const int64_t n = CAE<float>::count_parameters(cand);
        const int64_t diff = std::llabs(n - target);
        if (best_diff < 0 || diff < best_diff) {
            best_diff = diff;
            best = cand;
        }
    }
    return best;
}

template class CAE<float>;
template class CAE<double>;

} // namespace eqsur
