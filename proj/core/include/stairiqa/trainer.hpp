#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stairiqa/dataset.hpp"
#include "stairiqa/net.hpp"
#include "stairiqa/preprocess.hpp"
#include "stairiqa/rng.hpp"

namespace stairiqa {

enum class Criterion { kSrcc, kPlcc };

const char* criterion_name(Criterion c);
Criterion criterion_from_name(const std::string& name);

struct TrainConfig {
    int loops = 3;               // L
    int epoch_upper_bound = 20;  // E
    int batch_size = 30;         // T
    double lr = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::uint64_t seed = 0;
    Criterion criterion = Criterion::kSrcc;

    void validate() const;
};

// One database's training task: its split pair and the regressor head that
// owns its quality scale.
struct SubProblem {
    std::string database_id;
    DatasetManifest train;
    DatasetManifest validation;
    int head_index = 0;

    std::int64_t size() const { return train.size(); }  // N_i
};

struct ScheduleEntry {
    int loop;         // k, 1-based
    int db_index;     // i, 0-based position in the subproblem list
    int epoch;        // j within this database, 1-based
    int epoch_budget; // E_i
};

// E_i = max(round(N_max / N_i), E); round = nearest, ties away from zero.
int compute_epoch_budget(std::int64_t n_i, std::int64_t n_max, int epoch_upper_bound);

// Lexicographic (loop, database, epoch) order; L * sum(E_i) entries.
std::vector<ScheduleEntry> build_schedule(const TrainConfig& config, const std::vector<SubProblem>& subproblems);

struct EpochRecord {
    int loop = 0;
    std::string db;
    int epoch = 0;
    double mean_loss = 0.0;
    double criterion = 0.0;
    bool snapshot_taken = false;
};

// Best (theta_s, theta_r^i) observed for one database, stored as a full-model
// value snapshot plus the criterion it achieved.
struct DatabaseOptimum {
    std::string database_id;
    int head_index = 0;
    double criterion = 0.0;
    std::vector<std::vector<double>> values;  // all_params() order
};

struct TrainState {
    ModelParams model;
    std::vector<DatabaseOptimum> best;
    std::size_t cursor = 0;  // next schedule entry
    Rng rng;
    std::vector<EpochRecord> log;
};

struct TrainResult {
    std::vector<DatabaseOptimum> optima;
    std::vector<EpochRecord> log;
    ModelParams model;  // final theta

    ModelParams optimum_model(std::size_t db) const;
};

// Validates the initial model on every database so the strict-improvement
// rule starts from the initial snapshot.
TrainState init_train_state(const TrainConfig& config, const std::vector<SubProblem>& subproblems,
                            ModelParams model, ImageStore& store);

// Runs schedule[state.cursor] (one epoch + validation + snapshot rule) and
// advances the cursor.
EpochRecord run_schedule_entry(TrainState& state, const TrainConfig& config,
                               const std::vector<SubProblem>& subproblems,
                               const std::vector<ScheduleEntry>& schedule, ImageStore& store);

TrainResult run_imdt(const TrainConfig& config, const std::vector<SubProblem>& subproblems, ModelParams model,
                     ImageStore& store);

// Single-database baseline: the same loop with m = 1.
TrainResult train_single(const TrainConfig& config, const SubProblem& subproblem, ModelParams model,
                         ImageStore& store);

// One seeded-shuffle pass over the training split in batches of T (final
// partial batch kept); updates shared and head-i parameters only. Returns the
// per-sample mean loss.
double train_epoch(TrainState& state, const TrainConfig& config, const SubProblem& subproblem, ImageStore& store);

// Five-crop criterion on the validation split.
double validate(const ModelParams& model, const SubProblem& subproblem, Criterion criterion, ImageStore& store);

// Five-crop scores for every manifest entry.
std::vector<double> predict_scores(const ModelParams& model, const DatasetManifest& manifest, int head,
                                   ImageStore& store);
std::vector<double> predict_scores_ensemble(const ModelParams& model, const DatasetManifest& manifest,
                                            ImageStore& store);

// Full mid-run persistence: parameters, Adam state, best snapshots, cursor,
// RNG state and log. Restoring continues the exact trajectory.
void save_train_state(const std::string& path, const TrainState& state);
TrainState load_train_state(const std::string& path);

std::string epoch_record_json(const EpochRecord& record);
void write_train_log(const std::string& path, const std::vector<EpochRecord>& log);

}  // namespace stairiqa
