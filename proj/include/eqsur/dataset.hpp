#pragma once

#include <optional>
#include <string>

#include "eqsur/group.hpp"
#include "eqsur/solver.hpp"

namespace eqsur::data {

/// Per-simulation record in the manifest.
struct SimEntry {
    uint64_t seed = 0;
    std::string file;
    int snapshots = 0;
    std::string status = "ok"; // "ok" | "aborted"
    int64_t failure_step = -1;
    std::string error;
    uint64_t digest = 0;   // FNV-1a of the snapshot file bytes
    std::string split;     // "", "train", "val", "test"
};

/// Per-channel standardization constants, computed from the training split
/// only and applied to every split.
struct Standardization {
    std::vector<double> mean, stddev;
    std::string provenance; // which sims the constants were computed from
};

/// Dataset manifest: UTF-8 structured text (JSON on disk). Snapshot files
/// are raw little-endian float32, row-major [snapshot, channel, x1, x2, x3].
struct DatasetManifest {
    int version = 1;
    int n1 = 0, n2 = 0, n3 = 0;
    int channels = 4;
    std::vector<std::string> channel_names = {"u1", "u2", "u3", "T"};
    std::vector<std::string> channel_field_types = {"standard2d", "standard2d", "trivial",
                                                    "trivial"};
    double ra = 0, pr = 0, dt = 0;
    double t_start = 0, t_end = 0, dt_snap = 0;
    // conventions, recorded so checkpoints/latents stay portable
    std::string element_order = "r0 r1 r2 r3 r0f r1f r2f r3f";
    std::string flip_convention = "reflection across the first horizontal axis";
    std::vector<SimEntry> sims;
    std::optional<Standardization> standardization;

    bool is_latent = false;
    std::string cae_checkpoint_digest; // for latent datasets

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
};

/// On-disk dataset: a directory with manifest.json plus one snapshot file
/// per simulation.
class Dataset {
public:
    static Dataset create(std::string dir, DatasetManifest manifest);
    static Dataset open(const std::string& dir);

    const DatasetManifest& manifest() const { return manifest_; }
    DatasetManifest& manifest() { return manifest_; }
    const std::string& dir() const { return dir_; }
    void save_manifest() const;

    /// Append one simulation's snapshots as a new file + manifest entry.
    void write_sim(const SimEntry& entry, const std::vector<Tensor<float>>& snapshots);

    /// All snapshots of one simulation, [S, C, n1, n2, n3]. Standardization
    /// is applied when the manifest carries constants (unless raw = true).
    Tensor<float> load_sim(int sim_index, bool raw = false) const;

    std::vector<int> sims_in_split(const std::string& split) const;

private:
    std::string dir_;
    DatasetManifest manifest_;
};

/// Compute per-channel constants over the training split and record them in
/// the manifest (std guarded below 1e-12: the channel maps to 0).
void standardize(Dataset* ds);

/// Inverse transform for reporting in physical units.
Tensor<float> unstandardize(const DatasetManifest& m, const Tensor<float>& batch);

/// Assign splits at simulation granularity (never within one trajectory),
/// deterministically from the seed. Fractions must sum to 1.
void split(Dataset* ds, double train_frac, double val_frac, double test_frac, uint64_t seed);

/// Independently transform every sample of [B, 4, N, N, N3] by a uniformly
/// drawn group element (velocity channels rotate as vectors).
Tensor<float> augment_d4(const Tensor<float>& batch, Rng& rng, GroupKind kind = GroupKind::D4);

/// Integrity digest of a tensor's raw bytes.
uint64_t tensor_digest(const Tensor<float>& t);

/// Run `n_sims` seeded simulations and persist them (per-simulation seeds
/// derived from cfg.seed; aborted runs are recorded with their failure
/// step). Returns the dataset.
Dataset run_ensemble(const solver::SolverConfig& cfg, int n_sims, double t_start, double t_end,
                     double dt_snap, const std::string& out_dir, bool verbose = true);

} // namespace eqsur::data
