#include <cstdio>
#include <filesystem>
#include <fstream>

#include "eqsur/dataset.hpp"
#include "json.hpp"

namespace eqsur::data {

using nlohmann::json;

std::string DatasetManifest::to_json() const {
    json j;
    j["version"] = version;
    j["grid"] = {{"n1", n1}, {"n2", n2}, {"n3", n3}};
    j["channels"] = channels;
    j["channel_names"] = channel_names;
    j["channel_field_types"] = channel_field_types;
    j["physics"] = {{"ra", ra}, {"pr", pr}, {"dt", dt}};
    j["schedule"] = {{"t_start", t_start}, {"t_end", t_end}, {"dt_snap", dt_snap}};
    j["element_order"] = element_order;
    j["flip_convention"] = flip_convention;
    j["is_latent"] = is_latent;
    if (!cae_checkpoint_digest.empty()) j["cae_checkpoint_digest"] = cae_checkpoint_digest;
    j["sims"] = json::array();
    for (const SimEntry& s : sims) {
        json e;
        e["seed"] = s.seed;
        e["file"] = s.file;
        e["snapshots"] = s.snapshots;
        e["status"] = s.status;
        if (s.failure_step >= 0) e["failure_step"] = s.failure_step;
        if (!s.error.empty()) e["error"] = s.error;
        e["digest"] = digest_hex(s.digest);
        if (!s.split.empty()) e["split"] = s.split;
        j["sims"].push_back(e);
    }
    if (standardization) {
        j["standardization"] = {{"mean", standardization->mean},
                                {"std", standardization->stddev},
                                {"provenance", standardization->provenance}};
    }
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    DatasetManifest m;
    m.version = j.at("version");
    m.n1 = j.at("grid").at("n1");
    m.n2 = j.at("grid").at("n2");
    m.n3 = j.at("grid").at("n3");
    m.channels = j.at("channels");
    m.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    m.channel_field_types = j.at("channel_field_types").get<std::vector<std::string>>();
    m.ra = j.at("physics").at("ra");
    m.pr = j.at("physics").at("pr");
    m.dt = j.at("physics").at("dt");
    m.t_start = j.at("schedule").at("t_start");
    m.t_end = j.at("schedule").at("t_end");
    m.dt_snap = j.at("schedule").at("dt_snap");
    m.element_order = j.at("element_order");
    m.flip_convention = j.at("flip_convention");
    m.is_latent = j.value("is_latent", false);
    m.cae_checkpoint_digest = j.value("cae_checkpoint_digest", std::string());
    for (const json& e : j.at("sims")) {
        SimEntry s;
        s.seed = e.at("seed");
        s.file = e.at("file");
        s.snapshots = e.at("snapshots");
        s.status = e.at("status");
        s.failure_step = e.value("failure_step", int64_t{-1});
        s.error = e.value("error", std::string());
        s.digest = std::stoull(e.at("digest").get<std::string>(), nullptr, 16);
        s.split = e.value("split", std::string());
        m.sims.push_back(std::move(s));
    }
    if (j.contains("standardization")) {
        Standardization st;
        st.mean = j["standardization"].at("mean").get<std::vector<double>>();
        st.stddev = j["standardization"].at("std").get<std::vector<double>>();
        st.provenance = j["standardization"].value("provenance", std::string());
        m.standardization = std::move(st);
    }
    return m;
}

uint64_t tensor_digest(const Tensor<float>& t) {
    return fnv1a(t.data(), sizeof(float) * static_cast<size_t>(t.size()));
}

Dataset Dataset::create(std::string dir, DatasetManifest manifest) {
    std::filesystem::create_directories(dir);
    Dataset ds;
    ds.dir_ = std::move(dir);
    ds.manifest_ = std::move(manifest);
    ds.save_manifest();
    return ds;
}

Dataset Dataset::open(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw ValidationError("Dataset::open: no manifest in " + dir);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Dataset ds;
    ds.dir_ = dir;
    ds.manifest_ = DatasetManifest::from_json(text);
    return ds;
}

void Dataset::save_manifest() const {
    std::ofstream out(dir_ + "/manifest.json", std::ios::trunc);
    out << manifest_.to_json();
}

void Dataset::write_sim(const SimEntry& entry, const std::vector<Tensor<float>>& snapshots) {
    SimEntry e = entry;
    e.snapshots = static_cast<int>(snapshots.size());
    const std::string path = dir_ + "/" + e.file;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    uint64_t digest = 0xcbf29ce484222325ull;
    for (const Tensor<float>& snap : snapshots) {
        out.write(reinterpret_cast<const char*>(snap.data()),
                  static_cast<std::streamsize>(sizeof(float) * snap.size()));
        digest = fnv1a(snap.data(), sizeof(float) * static_cast<size_t>(snap.size()), digest);
    }
    e.digest = digest;
    manifest_.sims.push_back(std::move(e));
    save_manifest();
}

Tensor<float> Dataset::load_sim(int sim_index, bool raw) const {
    if (sim_index < 0 || sim_index >= static_cast<int>(manifest_.sims.size()))
        throw ValidationError("load_sim: index out of range");
    const SimEntry& e = manifest_.sims[sim_index];
    const int64_t C = manifest_.channels, S = e.snapshots;
    const int64_t per = C * manifest_.n1 * manifest_.n2 * manifest_.n3;
    Tensor<float> out({S, C, manifest_.n1, manifest_.n2, manifest_.n3});
    std::ifstream in(dir_ + "/" + e.file, std::ios::binary);
    if (!in) throw ValidationError("load_sim: missing file " + e.file);
    in.read(reinterpret_cast<char*>(out.data()),
            static_cast<std::streamsize>(sizeof(float) * S * per));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * S * per))
        throw ValidationError("load_sim: short read on " + e.file);
    const uint64_t digest = fnv1a(out.data(), sizeof(float) * static_cast<size_t>(out.size()));
    if (digest != e.digest)
        throw ValidationError("load_sim: integrity digest mismatch on " + e.file);

    if (!raw && manifest_.standardization) {
        const auto& st = *manifest_.standardization;
        const int64_t spatial = per / C;
        float* p = out.data();
        for (int64_t s = 0; s < S; ++s)
            for (int64_t c = 0; c < C; ++c) {
                const float mu = static_cast<float>(st.mean[c]);
                const float inv = st.stddev[c] < 1e-12
                                      ? 0.0f
                                      : static_cast<float>(1.0 / st.stddev[c]);
                float* q = p + (s * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) q[i] = (q[i] - mu) * inv;
            }
    }
    return out;
}

std::vector<int> Dataset::sims_in_split(const std::string& split) const {
    std::vector<int> out;
    for (size_t i = 0; i < manifest_.sims.size(); ++i)
        if (manifest_.sims[i].split == split && manifest_.sims[i].status == "ok")
            out.push_back(static_cast<int>(i));
    return out;
}

void standardize(Dataset* ds) {
    auto train = ds->sims_in_split("train");
    if (train.empty()) throw ValidationError("standardize: empty training split");
    const int C = ds->manifest().channels;
    std::vector<double> sum(C, 0.0), sumsq(C, 0.0);
    int64_t count = 0;
    for (int sim : train) {
        Tensor<float> snaps = ds->load_sim(sim, /*raw=*/true);
        const int64_t S = snaps.extent(0);
        const int64_t spatial = snaps.size() / (S * C);
        const float* p = snaps.data();
        for (int64_t s = 0; s < S; ++s)
            for (int64_t c = 0; c < C; ++c) {
                const float* q = p + (s * C + c) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    sum[c] += q[i];
                    sumsq[c] += static_cast<double>(q[i]) * q[i];
                }
            }
        count += S * spatial;
    }
    Standardization st;
    st.provenance = "train split, " + std::to_string(train.size()) + " sims";
    for (int c = 0; c < C; ++c) {
        const double mu = sum[c] / count;
        const double var = std::max(0.0, sumsq[c] / count - mu * mu);
        st.mean.push_back(mu);
        st.stddev.push_back(std::sqrt(var));
    }
    ds->manifest().standardization = std::move(st);
    ds->save_manifest();
}

Tensor<float> unstandardize(const DatasetManifest& m, const Tensor<float>& batch) {
    if (!m.standardization) return batch;
    const auto& st = *m.standardization;
    const int64_t C = batch.extent(1);
    int64_t spatial = 1;
    for (int a = 2; a < batch.rank(); ++a) spatial *= batch.extent(a);
    Tensor<float> out(batch.shape(), batch.vec());
    float* p = out.data();
    for (int64_t b = 0; b < batch.extent(0); ++b)
        for (int64_t c = 0; c < C; ++c) {
            float* q = p + (b * C + c) * spatial;
            for (int64_t i = 0; i < spatial; ++i)
                q[i] = q[i] * static_cast<float>(st.stddev[c]) + static_cast<float>(st.mean[c]);
        }
    return out;
}

void split(Dataset* ds, double train_frac, double val_frac, double test_frac, uint64_t seed) {
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw ValidationError("split: fractions must sum to 1");
    auto& sims = ds->manifest().sims;
    std::vector<int> ok;
    for (size_t i = 0; i < sims.size(); ++i)
        if (sims[i].status == "ok") ok.push_back(static_cast<int>(i));
    const int n = static_cast<int>(ok.size());
    if (n < 3) throw ValidationError("split: fewer simulations than splits");
    // deterministic Fisher-Yates
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.below(static_cast<uint64_t>(i + 1)));
        std::swap(ok[i], ok[j]);
    }
    const int n_train = std::max(1, static_cast<int>(std::lround(train_frac * n)));
    const int n_val = std::max(1, static_cast<int>(std::lround(val_frac * n)));
    for (int idx = 0; idx < n; ++idx) {
        std::string s = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
        sims[ok[idx]].split = s;
    }
    ds->save_manifest();
}

Tensor<float> augment_d4(const Tensor<float>& batch, Rng& rng, GroupKind kind) {
    if (batch.extent(2) != batch.extent(3))
        throw ValidationError("augment_d4: horizontal grid must be square");
    FieldType ft = FieldType::rb_input(kind);
    const int64_t B = batch.extent(0);
    Tensor<float> out(batch.shape());
    const auto elements = group_elements(kind);
    const int64_t per = batch.size() / B;
    for (int64_t b = 0; b < B; ++b) {
        const GroupElement g = elements[rng.below(elements.size())];
        Tensor<float> one(Shape{1, batch.extent(1), batch.extent(2), batch.extent(3),
                                batch.extent(4)},
                          std::vector<float>(batch.data() + b * per,
                                             batch.data() + (b + 1) * per));
        Tensor<float> tr = act_on_field(g, one, ft);
        std::copy_n(tr.data(), per, out.data() + b * per);
    }
    return out;
}

Dataset run_ensemble(const solver::SolverConfig& cfg, int n_sims, double t_start, double t_end,
                     double dt_snap, const std::string& out_dir, bool verbose) {
    DatasetManifest m;
    m.n1 = cfg.n1;
    m.n2 = cfg.n2;
    m.n3 = cfg.n3;
    m.ra = cfg.ra;
    m.pr = cfg.pr;
    m.dt = cfg.dt;
    m.t_start = t_start;
    m.t_end = t_end;
    m.dt_snap = dt_snap;
    Dataset ds = Dataset::create(out_dir, std::move(m));

    Rng master(cfg.seed);
    for (int sim = 0; sim < n_sims; ++sim) {
        solver::SolverConfig sc = cfg;
        sc.seed = master.fork(static_cast<uint64_t>(sim)).next_u64();
        std::vector<Tensor<float>> snaps;
        solver::RunResult res = solver::simulate(
            sc, t_start, t_end, dt_snap,
            [&](const solver::SimState& s) { snaps.push_back(solver::snapshot(sc, s)); });
        SimEntry e;
        e.seed = sc.seed;
        e.file = "sim_" + std::to_string(sim) + ".f32";
        e.status = res.aborted ? "aborted" : "ok";
        e.failure_step = res.aborted ? res.failure_step : -1;
        e.error = res.error;
        ds.write_sim(e, snaps);
        if (verbose)
            std::fprintf(stderr, "[generate] sim %d/%d: %d snapshots%s\n", sim + 1, n_sims,
                         res.snapshots, res.aborted ? " (aborted)" : "");
    }
    return ds;
}

} // namespace eqsur::data
