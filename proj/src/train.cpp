#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "eqsur/adam.hpp"
#include "eqsur/train.hpp"

namespace eqsur::train {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

/// All snapshots of a split, one tensor per simulation.
std::vector<Tensor<float>> load_split(const data::Dataset& ds, const std::string& split) {
    std::vector<Tensor<float>> sims;
    for (int idx : ds.sims_in_split(split)) sims.push_back(ds.load_sim(idx));
    return sims;
}

/// Copy sample `snap` of `sim` into row b of a batch tensor.
void copy_sample(const Tensor<float>& sim, int64_t snap, Tensor<float>* batch, int64_t b) {
    const int64_t per = sim.size() / sim.extent(0);
    std::copy_n(sim.data() + snap * per, per, batch->data() + b * per);
}

Shape sample_shape(const Tensor<float>& sim, int64_t batch) {
    Shape s = sim.shape();
    s[0] = batch;
    return s;
}

double global_grad_norm(const std::vector<Tensor<float>>& grads) {
    double acc = 0.0;
    for (const auto& g : grads)
        for (int64_t i = 0; i < g.size(); ++i)
            acc += static_cast<double>(g.data()[i]) * g.data()[i];
    return std::sqrt(acc);
}

} // namespace

std::string TrainReport::to_tsv() const {
    std::ostringstream os;
    os << "# param_count\t" << param_count << "\n";
    os << "# best_epoch\t" << best_epoch << "\n";
    os << "# best_val\t" << best_val << "\n";
    os << "# wall_seconds\t" << wall_seconds << "\n";
    os << "# clip_events\t" << clip_events << "\n";
    os << "epoch\ttrain_loss\tval_loss\tlr\n";
    for (size_t e = 0; e < train_loss.size(); ++e)
        os << e << "\t" << train_loss[e] << "\t" << val_loss[e] << "\t" << lr_trace[e] << "\n";
    return os.str();
}

std::string EvalReport::to_tsv() const {
    std::ostringstream os;
    os << "# recon_rmse\t" << recon_rmse << "\n";
    os << "# trajectories\t" << trajectories << "\n";
    os << "# warmup\t" << warmup << "\n";
    os << "# horizon\t" << horizon << "\n";
    os << "# cae_params\t" << cae_params << "\n";
    os << "# lstm_params\t" << lstm_params << "\n";
    os << "# wall_seconds\t" << wall_seconds << "\n";
    os << "step\tmedian_rmse\n";
    for (size_t h = 0; h < rmse_curve.size(); ++h) os << h + 1 << "\t" << rmse_curve[h] << "\n";
    return os.str();
}

// ---------------------------------------------------------------------------
// CAE training
// ---------------------------------------------------------------------------

namespace {

double cae_split_loss(CAE<float>* cae, const std::vector<Tensor<float>>& sims, int batch) {
    double acc = 0.0;
    int64_t count = 0;
    for (const Tensor<float>& sim : sims) {
        const int64_t S = sim.extent(0);
        for (int64_t start = 0; start < S; start += batch) {
            const int64_t b = std::min<int64_t>(batch, S - start);
            Tensor<float> x(sample_shape(sim, b));
            for (int64_t i = 0; i < b; ++i) copy_sample(sim, start + i, &x, i);
            Tensor<float> r = cae->decode(cae->encode(x));
            acc += static_cast<double>(mse(r, x).item()) * static_cast<double>(b);
            count += b;
        }
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

} // namespace

TrainReport train_cae(CAE<float>* cae, const TrainConfig& cfg, const data::Dataset& ds) {
    const auto t0 = Clock::now();
    std::vector<Tensor<float>> train_sims = load_split(ds, "train");
    std::vector<Tensor<float>> val_sims = load_split(ds, "val");
    if (train_sims.empty()) throw ValidationError("train_cae: empty training split");

    cae->set_dropout_rate(cfg.dropout);

    std::vector<std::pair<int, int>> samples;
    for (size_t s = 0; s < train_sims.size(); ++s)
        for (int64_t t = 0; t < train_sims[s].extent(0); ++t)
            samples.push_back({static_cast<int>(s), static_cast<int>(t)});

    Rng rng(cfg.seed);
    Adam<float> opt({cfg.lr, 0.9, 0.999, 1e-8});
    auto refs = cae->params();
    std::vector<Tensor<float>*> slots;
    for (auto& p : refs) slots.push_back(p.slot);

    TrainReport rep;
    rep.param_count = cae->param_count();
    std::map<std::string, Tensor<float>> best;
    double best_val = 1e300;
    int best_epoch = -1, since_best = 0, since_decay = 0;

    const GroupKind gk = cae->config().group();
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        // deterministic shuffle
        for (int i = static_cast<int>(samples.size()) - 1; i > 0; --i)
            std::swap(samples[i], samples[rng.below(static_cast<uint64_t>(i + 1))]);
        const int64_t epoch_samples =
            cfg.samples_per_epoch > 0
                ? std::min<int64_t>(cfg.samples_per_epoch, samples.size())
                : static_cast<int64_t>(samples.size());

        double train_acc = 0.0;
        int64_t seen = 0;
        for (int64_t start = 0; start < epoch_samples; start += cfg.batch) {
            const int64_t b = std::min<int64_t>(cfg.batch, epoch_samples - start);
            Tensor<float> x(sample_shape(train_sims[0], b));
            for (int64_t i = 0; i < b; ++i)
                copy_sample(train_sims[samples[start + i].first], samples[start + i].second, &x,
                            i);
            if (cfg.augment) x = data::augment_d4(x, rng, gk);

            Tape<float> tape;
            cae->bind(&tape);
            Tensor<float> loss = mse(cae->decode(cae->encode(x, true, &rng), true, &rng), x);
            const double lv = loss.item();
            if (!std::isfinite(lv) || lv > cfg.divergence_abort) {
                cae->bind(nullptr);
                throw NumericalError("train_cae: divergence at epoch " + std::to_string(epoch) +
                                     " (loss = " + std::to_string(lv) + ")");
            }
            tape.backward(loss);
            std::vector<Tensor<float>> grads;
            for (size_t i = 0; i < refs.size(); ++i) {
                Tensor<float> leaf = *refs[i].slot;
                leaf.tape = &tape;
                leaf.node = tape.leaves()[i];
                grads.push_back(tape.grad(leaf));
            }
            cae->bind(nullptr);
            opt.step(slots, grads);
            train_acc += lv * static_cast<double>(b);
            seen += b;
        }

        const double val = cae_split_loss(cae, val_sims.empty() ? train_sims : val_sims,
                                          cfg.batch);
        rep.train_loss.push_back(train_acc / std::max<int64_t>(1, seen));
        rep.val_loss.push_back(val);
        rep.lr_trace.push_back(opt.effective_lr());

        if (val < best_val * (1.0 - 1e-6)) {
            best_val = val;
            best_epoch = epoch;
            best = snapshot_params(cae);
            since_best = 0;
            since_decay = 0;
        } else {
            ++since_best;
            ++since_decay;
            if (since_decay >= cfg.lr_plateau) {
                opt.scale_lr(0.5);
                since_decay = 0;
            }
            if (since_best >= cfg.patience) break;
        }
    }
    if (!best.empty()) restore_params(cae, best);
    rep.best_epoch = best_epoch;
    rep.best_val = best_val;
    rep.wall_seconds = seconds_since(t0);
    return rep;
}

double reconstruction_rmse(CAE<float>* cae, const data::Dataset& ds, const std::string& split,
                           GroupElement transform) {
    std::vector<Tensor<float>> sims = load_split(ds, split);
    if (sims.empty()) throw ValidationError("reconstruction_rmse: empty split " + split);
    if (!(transform == GroupElement{0, 0})) {
        FieldType rb = FieldType::rb_input(cae->config().group());
        for (auto& sim : sims) sim = act_on_field(transform, sim, rb);
    }
    return std::sqrt(cae_split_loss(cae, sims, 16));
}

// ---------------------------------------------------------------------------
// Latent dataset
// ---------------------------------------------------------------------------

data::Dataset encode_dataset(CAE<float>* cae, const data::Dataset& ds,
                             const std::string& out_dir, const std::string& cae_digest) {
    if (!ds.manifest().standardization)
        throw ValidationError("encode_dataset: dataset must be standardized first");
    data::DatasetManifest m = ds.manifest();
    m.sims.clear(); // latent entries are appended below
    m.is_latent = true;
    m.cae_checkpoint_digest = cae_digest;
    m.n1 = cae->config().m1();
    m.n2 = cae->config().m2();
    m.n3 = cae->config().m3();
    m.channels = cae->config().latent_channels();
    m.channel_names.assign(m.channels, "z");
    m.channel_field_types.assign(m.channels, "regular");
    m.standardization.reset(); // latents are consumed as produced
    data::Dataset out = data::Dataset::create(out_dir, m);

    for (size_t idx = 0; idx < ds.manifest().sims.size(); ++idx) {
        const data::SimEntry& src = ds.manifest().sims[idx];
        if (src.status != "ok") {
            data::SimEntry e = src;
            e.file = "latent_" + std::to_string(idx) + ".f32";
            out.write_sim(e, {});
            continue;
        }
        Tensor<float> snaps = ds.load_sim(static_cast<int>(idx));
        const int64_t S = snaps.extent(0);
        std::vector<Tensor<float>> latents;
        const int64_t chunk = 25;
        for (int64_t start = 0; start < S; start += chunk) {
            const int64_t b = std::min(chunk, S - start);
            Tensor<float> x(sample_shape(snaps, b));
            for (int64_t i = 0; i < b; ++i) copy_sample(snaps, start + i, &x, i);
            Tensor<float> z = cae->encode(x);
            const int64_t per = z.size() / b;
            for (int64_t i = 0; i < b; ++i) {
                Shape one = z.shape();
                one.erase(one.begin());
                latents.emplace_back(one, std::vector<float>(z.data() + i * per,
                                                             z.data() + (i + 1) * per));
            }
        }
        data::SimEntry e = src;
        e.file = "latent_" + std::to_string(idx) + ".f32";
        out.write_sim(e, latents);
    }
    return out;
}

// ---------------------------------------------------------------------------
// LSTM training (BPTT + scheduled sampling)
// ---------------------------------------------------------------------------

namespace {

/// Stack time slice `t` of the window batch into one tensor.
Tensor<float> window_slice(const std::vector<const Tensor<float>*>& sims,
                           const std::vector<std::pair<int, int>>& windows, int64_t lo,
                           int64_t b, int t) {
    const Tensor<float>& first = *sims[windows[lo].first];
    const int64_t per = first.size() / first.extent(0);
    Shape s = first.shape();
    s[0] = b;
    Tensor<float> out(s);
    for (int64_t i = 0; i < b; ++i) {
        const Tensor<float>& sim = *sims[windows[lo + i].first];
        const int64_t snap = windows[lo + i].second + t;
        std::copy_n(sim.data() + snap * per, per, out.data() + i * per);
    }
    return out;
}

double lstm_window_loss(ConvLSTM<float>* lstm, const std::vector<const Tensor<float>*>& sims,
                        const std::vector<std::pair<int, int>>& windows, int W, int H,
                        int batch) {
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t lo = 0; lo < static_cast<int64_t>(windows.size()); lo += batch) {
        const int64_t b = std::min<int64_t>(batch, windows.size() - lo);
        LSTMState<float> st = lstm->zero_state(b);
        Tensor<float> cur;
        for (int t = 0; t < W; ++t) {
            cur = window_slice(sims, windows, lo, b, t);
            st = lstm->step(cur, st);
        }
        for (int j = 0; j < H; ++j) {
            Tensor<float> pred = lstm->predict_next(cur, st.h);
            Tensor<float> truth = window_slice(sims, windows, lo, b, W + j);
            acc += static_cast<double>(mse(pred, truth).item()) * static_cast<double>(b);
            count += b;
            if (j + 1 < H) {
                st = lstm->step(pred, st);
                cur = pred;
            }
        }
    }
    return count ? acc / static_cast<double>(count) : 0.0;
}

} // namespace

double teacher_probability(int epoch, int ss_epochs) {
    if (ss_epochs <= 0) return 0.0;
    return std::max(0.0, 1.0 - static_cast<double>(epoch) / ss_epochs);
}

TrainReport train_lstm(ConvLSTM<float>* lstm, const TrainConfig& cfg,
                       const data::Dataset& latents) {
    const auto t0 = Clock::now();
    std::vector<Tensor<float>> train_sims = load_split(latents, "train");
    std::vector<Tensor<float>> val_sims = load_split(latents, "val");
    if (train_sims.empty()) throw ValidationError("train_lstm: empty training split");
    const int W = cfg.w_train, H = cfg.h_train;

    std::vector<const Tensor<float>*> train_ptrs, val_ptrs;
    for (auto& s : train_sims) train_ptrs.push_back(&s);
    for (auto& s : val_sims) val_ptrs.push_back(&s);

    std::vector<std::pair<int, int>> windows;
    for (size_t s = 0; s < train_sims.size(); ++s)
        for (int64_t t = 0; t + W + H <= train_sims[s].extent(0); ++t)
            windows.push_back({static_cast<int>(s), static_cast<int>(t)});
    if (windows.empty()) throw ValidationError("train_lstm: trajectories shorter than W + H");
    std::vector<std::pair<int, int>> val_windows;
    for (size_t s = 0; s < val_sims.size(); ++s)
        for (int64_t t = 0; t + W + H <= val_sims[s].extent(0); t += H)
            val_windows.push_back({static_cast<int>(s), static_cast<int>(t)});

    Rng rng(cfg.seed);
    Adam<float> opt({cfg.lr, 0.9, 0.999, 1e-8});
    auto refs = lstm->params();
    std::vector<Tensor<float>*> slots;
    for (auto& p : refs) slots.push_back(p.slot);

    TrainReport rep;
    rep.param_count = lstm->param_count();
    std::map<std::string, Tensor<float>> best;
    double best_val = 1e300;
    int best_epoch = -1, since_best = 0, since_decay = 0, consecutive_big = 0;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        const double teacher_p = teacher_probability(epoch, cfg.ss_epochs);
        for (int i = static_cast<int>(windows.size()) - 1; i > 0; --i)
            std::swap(windows[i], windows[rng.below(static_cast<uint64_t>(i + 1))]);
        const int64_t epoch_windows =
            cfg.samples_per_epoch > 0
                ? std::min<int64_t>(cfg.samples_per_epoch, windows.size())
                : static_cast<int64_t>(windows.size());

        double train_acc = 0.0;
        int64_t seen = 0;
        for (int64_t lo = 0; lo < epoch_windows; lo += cfg.batch) {
            const int64_t b = std::min<int64_t>(cfg.batch, epoch_windows - lo);
            Tape<float> tape;
            lstm->bind(&tape);
            LSTMState<float> st = lstm->zero_state(b);
            Tensor<float> cur;
            for (int t = 0; t < W; ++t) {
                cur = window_slice(train_ptrs, windows, lo, b, t);
                st = lstm->step(cur, st);
            }
            Tensor<float> loss;
            for (int j = 0; j < H; ++j) {
                Tensor<float> pred = lstm->predict_next(cur, st.h);
                Tensor<float> truth = window_slice(train_ptrs, windows, lo, b, W + j);
                Tensor<float> term = mse(pred, truth);
                loss = (j == 0) ? term : add(loss, term);
                if (j + 1 < H) {
                    // per-step teacher-forcing draw per the schedule
                    Tensor<float> next = rng.bernoulli(teacher_p) ? truth : pred;
                    st = lstm->step(next, st);
                    cur = next;
                }
            }
            loss = scale(loss, 1.0 / H);
            const double lv = loss.item();
            if (!std::isfinite(lv) || lv > cfg.divergence_abort) {
                lstm->bind(nullptr);
                throw NumericalError("train_lstm: divergence at epoch " +
                                     std::to_string(epoch));
            }
            tape.backward(loss);
            std::vector<Tensor<float>> grads;
            for (size_t i = 0; i < refs.size(); ++i) {
                Tensor<float> leaf = *refs[i].slot;
                leaf.tape = &tape;
                leaf.node = tape.leaves()[i];
                grads.push_back(tape.grad(leaf));
            }
            lstm->bind(nullptr);

            const double norm = global_grad_norm(grads);
            if (norm > 1.0) {
                for (auto& g : grads) g = scale(g, 1.0 / norm).detached();
                ++rep.clip_events;
            }
            if (norm > 1e3) {
                if (++consecutive_big > 100)
                    throw NumericalError("train_lstm: 100 consecutive exploding-gradient clips");
            } else {
                consecutive_big = 0;
            }
            opt.step(slots, grads);
            train_acc += lv * static_cast<double>(b);
            seen += b;
        }

        const double val = lstm_window_loss(
            lstm, val_ptrs.empty() ? train_ptrs : val_ptrs,
            val_windows.empty() ? windows : val_windows, W, H, cfg.batch);
        rep.train_loss.push_back(train_acc / std::max<int64_t>(1, seen));
        rep.val_loss.push_back(val);
        rep.lr_trace.push_back(opt.effective_lr());

        if (val < best_val * (1.0 - 1e-6)) {
            best_val = val;
            best_epoch = epoch;
            best = snapshot_params(lstm);
            since_best = 0;
            since_decay = 0;
        } else {
            ++since_best;
            ++since_decay;
            if (since_decay >= cfg.lr_plateau) {
                opt.scale_lr(0.5);
                since_decay = 0;
            }
            if (since_best >= cfg.patience) break;
        }
    }
    if (!best.empty()) restore_params(lstm, best);
    rep.best_epoch = best_epoch;
    rep.best_val = best_val;
    rep.wall_seconds = seconds_since(t0);
    return rep;
}

// ---------------------------------------------------------------------------
// Forecast evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate_forecast(CAE<float>* cae, ConvLSTM<float>* lstm, const data::Dataset& ds,
                             const std::string& split, int warmup, int horizon, bool oracle,
                             GroupElement transform) {
    const auto t0 = Clock::now();
    EvalReport rep;
    rep.warmup = warmup;
    rep.cae_params = cae->param_count();
    rep.lstm_params = lstm ? lstm->param_count() : 0;

    std::vector<Tensor<float>> sims = load_split(ds, split);
    if (sims.empty()) throw ValidationError("evaluate_forecast: empty split " + split);
    FieldType rb = FieldType::rb_input(cae->config().group());
    if (!(transform == GroupElement{0, 0}))
        for (auto& sim : sims) sim = act_on_field(transform, sim, rb);

    // reconstruction RMSE over the split (also the oracle decomposition
    // lower bound)
    double recon_acc = 0.0;
    int64_t recon_n = 0;
    for (const auto& sim : sims) {
        const int64_t S = sim.extent(0);
        for (int64_t lo = 0; lo < S; lo += 16) {
            const int64_t b = std::min<int64_t>(16, S - lo);
            Tensor<float> x(sample_shape(sim, b));
            for (int64_t i = 0; i < b; ++i) copy_sample(sim, lo + i, &x, i);
            recon_acc += static_cast<double>(mse(cae->decode(cae->encode(x)), x).item()) *
                         static_cast<double>(b);
            recon_n += b;
        }
    }
    rep.recon_rmse = std::sqrt(recon_acc / std::max<int64_t>(1, recon_n));

    int h_eff = horizon;
    for (const auto& sim : sims)
        h_eff = std::min<int>(h_eff, static_cast<int>(sim.extent(0)) - warmup);
    if (h_eff < horizon)
        std::fprintf(stderr, "[evaluate] horizon truncated to %d (ground truth exhausted)\n",
                     h_eff);
    rep.horizon = h_eff;
    rep.trajectories = static_cast<int>(sims.size());
    if (h_eff <= 0) {
        rep.wall_seconds = seconds_since(t0);
        return rep;
    }

    std::vector<std::vector<double>> per_traj; // [traj][step]
    for (const auto& sim : sims) {
        const int64_t S = sim.extent(0);
        // encode the needed prefix in one batch
        const int64_t need = warmup + h_eff;
        Tensor<float> x(sample_shape(sim, need));
        for (int64_t i = 0; i < need && i < S; ++i) copy_sample(sim, i, &x, i);
        Tensor<float> z = cae->encode(x);
        const int64_t per = z.size() / need;
        auto latent_at = [&](int64_t t) {
            Shape one = z.shape();
            one[0] = 1;
            return Tensor<float>(one, std::vector<float>(z.data() + t * per,
                                                         z.data() + (t + 1) * per));
        };

        std::vector<Tensor<float>> preds;
        if (oracle || !lstm) {
            for (int j = 0; j < h_eff; ++j) preds.push_back(latent_at(warmup + j));
        } else {
            std::vector<Tensor<float>> warm;
            for (int t = 0; t < warmup; ++t) warm.push_back(latent_at(t));
            preds = lstm->rollout(warm, h_eff);
        }

        // decode all predictions in one batch
        Shape zb = preds[0].shape();
        zb[0] = h_eff;
        Tensor<float> zall(zb);
        for (int j = 0; j < h_eff; ++j)
            std::copy_n(preds[j].data(), per, zall.data() + j * per);
        Tensor<float> dec = cae->decode(zall);

        const int64_t sper = sim.size() / S;
        std::vector<double> curve;
        for (int j = 0; j < h_eff; ++j) {
            double acc = 0.0;
            const float* p = dec.data() + j * sper;
            const float* q = sim.data() + (warmup + j) * sper;
            for (int64_t i = 0; i < sper; ++i) {
                const double d = static_cast<double>(p[i]) - q[i];
                acc += d * d;
            }
            curve.push_back(std::sqrt(acc / static_cast<double>(sper)));
        }
        per_traj.push_back(std::move(curve));
    }

    // median across trajectories per horizon step
    for (int j = 0; j < h_eff; ++j) {
        std::vector<double> vals;
        for (const auto& c : per_traj) vals.push_back(c[j]);
        std::sort(vals.begin(), vals.end());
        const size_t n = vals.size();
        rep.rmse_curve.push_back(n % 2 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]));
    }
    rep.wall_seconds = seconds_since(t0);
    return rep;
}

// ---------------------------------------------------------------------------
// SVG plot
// ---------------------------------------------------------------------------

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::vector<std::pair<std::string, std::vector<double>>>& series) {
    const int width = 720, height = 440, margin = 60;
    double lo = 1e300, hi = -1e300;
    size_t nmax = 1;
    for (const auto& [name, ys] : series) {
        for (double y : ys) {
            lo = std::min(lo, y);
            hi = std::max(hi, y);
        }
        nmax = std::max(nmax, ys.size());
    }
    if (lo > hi) {
        lo = 0;
        hi = 1;
    }
    if (hi - lo < 1e-12) hi = lo + 1e-12;
    const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    std::ofstream out(path, std::ios::trunc);
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
        << "'>\n<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
        << "</text>\n";
    // axes
    out << "<line x1='" << margin << "' y1='" << height - margin << "' x2='" << width - margin
        << "' y2='" << height - margin << "' stroke='black'/>\n";
    out << "<line x1='" << margin << "' y1='" << margin << "' x2='" << margin << "' y2='"
        << height - margin << "' stroke='black'/>\n";
    out << "<text x='" << margin - 8 << "' y='" << margin + 4
        << "' text-anchor='end' font-size='11'>" << hi << "</text>\n";
    out << "<text x='" << margin - 8 << "' y='" << height - margin
        << "' text-anchor='end' font-size='11'>" << lo << "</text>\n";

    int si = 0;
    for (const auto& [name, ys] : series) {
        out << "<polyline fill='none' stroke='" << colors[si % 6] << "' stroke-width='1.5' points='";
        for (size_t i = 0; i < ys.size(); ++i) {
            const double x = margin + (width - 2.0 * margin) * (nmax > 1 ? static_cast<double>(i) / (nmax - 1) : 0.5);
            const double y = height - margin - (height - 2.0 * margin) * (ys[i] - lo) / (hi - lo);
            out << x << "," << y << " ";
        }
        out << "'/>\n";
        out << "<text x='" << width - margin + 4 << "' y='" << margin + 16 * si
            << "' font-size='11' fill='" << colors[si % 6] << "'>" << name << "</text>\n";
        ++si;
    }
    out << "</svg>\n";
}

} // namespace eqsur::train
