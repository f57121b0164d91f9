#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "stairiqa/dataset.hpp"
#include "stairiqa/net.hpp"
#include "stairiqa/preprocess.hpp"
#include "stairiqa/trainer.hpp"

namespace stairiqa {

// Everything a reproducible experiment needs besides the data.
struct ExperimentConfig {
    BackboneConfig backbone;
    std::vector<bool> path_mask;
    TrainConfig train;
    PreprocessConfig preprocess;
    std::uint64_t master_seed = 1;
};

// Train / validation / test splits for one database: 80/20 by content group,
// then another content-aware carve of the training side for validation.
struct PreparedDb {
    DatasetManifest train;
    DatasetManifest validation;
    DatasetManifest test;
};

PreparedDb prepare_splits(const DatasetManifest& manifest, std::uint64_t split_seed);

// One subproblem per prepared database, head indices in list order.
std::vector<SubProblem> make_imdt_subproblems(const std::vector<PreparedDb>& dbs);

struct SplitRecord {
    std::string database_id;
    int split_index = 0;    // 1-based
    std::string head_id;    // head database id, or "ensemble"
    double srcc_value = 0.0;
    double plcc_value = 0.0;
    int sample_count = 0;
};

struct MedianRow {
    std::string database_id;
    std::string head_id;
    double srcc_median = 0.0;
    double plcc_median = 0.0;
    int splits = 0;
};

struct MetricsReport {
    std::vector<SplitRecord> records;
    std::vector<MedianRow> medians;
    std::uint64_t master_seed = 0;
    std::string config_hash;
    std::string checkpoint_id;
    int n_splits = 0;

    void compute_medians();
    std::string to_json() const;
    std::string to_csv() const;  // database,split,head,srcc,plcc
};

// The repeated-split protocol: for s = 1..n_splits, split with seed
// master_seed + s, train (IMDT across all manifests, or per-database when
// use_imdt is false), five-crop evaluate each database's test split, report
// per-split values and medians.
MetricsReport run_splits_protocol(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                                  int n_splits, bool use_imdt);

struct AblationCell {
    std::string variant;
    std::string database_id;
    std::uint64_t seed = 0;
    double srcc_value = 0.0;
    double plcc_value = 0.0;
};

struct AblationTable {
    std::vector<AblationCell> cells;

    double value(const std::string& variant, const std::string& database_id, std::uint64_t seed) const;
    std::string to_csv() const;
};

// Trains the 2x2 {staircase, imdt} grid plus nested fusion-path variants
// (path1..path{Ns-1}, none) on identical seeds and splits.
AblationTable run_ablation(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                           const std::vector<std::uint64_t>& seeds);

struct CrossDbResult {
    std::string held_out_id;
    std::vector<std::string> head_ids;       // training database per head
    std::vector<double> per_head_srcc;
    std::vector<double> per_head_plcc;
    double ensemble_srcc = 0.0;
    double ensemble_plcc = 0.0;
};

using PhaseHook = std::function<void(const std::string& phase, const std::string& detail)>;

// Leave-one-database-out: IMDT-train on the remaining databases, then score
// the untouched held-out database with every trained head (each at its own
// optimum) and with their unweighted mean.
std::vector<CrossDbResult> run_cross_db(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                                        const PhaseHook& hook = nullptr);

std::string cross_db_csv(const std::vector<CrossDbResult>& results);

// FNV-1a hash of the canonical config serialization, for report provenance.
std::string experiment_config_hash(const ExperimentConfig& config);

}  // namespace stairiqa
