#include "stairiqa/protocols.hpp"

#include <algorithm>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "stairiqa/metrics.hpp"
#include "stairiqa/text.hpp"

namespace stairiqa {

PreparedDb prepare_splits(const DatasetManifest& manifest, std::uint64_t split_seed) {
    PreparedDb out;
    auto [train_outer, test] = split_80_20(manifest, split_seed);
    auto [train, validation] = split_by_group(train_outer, 0.8, stream_seed(split_seed, "validation-carve"));
    out.train = std::move(train);
    out.validation = std::move(validation);
    out.test = std::move(test);
    return out;
}

namespace {

std::vector<double> labels_of(const DatasetManifest& manifest) {
    std::vector<double> labels;
    labels.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) labels.push_back(e.mos);
    return labels;
}

struct HeadEval {
    double srcc_value;
    double plcc_value;
};

HeadEval eval_scores(const std::vector<double>& scores, const std::vector<double>& labels) {
    return {srcc(scores, labels), plcc(scores, labels)};
}

std::vector<std::string> database_ids(const std::vector<DatasetManifest>& manifests) {
    std::vector<std::string> ids;
    for (const DatasetManifest& m : manifests) ids.push_back(m.database_id);
    return ids;
}

}  // namespace

std::vector<SubProblem> make_imdt_subproblems(const std::vector<PreparedDb>& dbs) {
    std::vector<SubProblem> subproblems;
    for (std::size_t i = 0; i < dbs.size(); ++i) {
        SubProblem sp;
        sp.database_id = dbs[i].train.database_id;
        sp.train = dbs[i].train;
        sp.validation = dbs[i].validation;
        sp.head_index = static_cast<int>(i);
        subproblems.push_back(std::move(sp));
    }
    return subproblems;
}

void MetricsReport::compute_medians() {
    medians.clear();
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<double, double>>> grouped;
    for (const SplitRecord& r : records) {
        grouped[{r.database_id, r.head_id}].push_back({r.srcc_value, r.plcc_value});
    }
    for (const auto& [key, values] : grouped) {
        MedianRow row;
        row.database_id = key.first;
        row.head_id = key.second;
        std::vector<double> s, p;
        for (const auto& [sv, pv] : values) {
            s.push_back(sv);
            p.push_back(pv);
        }
        row.srcc_median = median(s);
        row.plcc_median = median(p);
        row.splits = static_cast<int>(values.size());
        medians.push_back(std::move(row));
    }
}

std::string MetricsReport::to_json() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const SplitRecord& r : records) {
        recs.push_back({{"database", r.database_id},
                        {"split", r.split_index},
                        {"head", r.head_id},
                        {"srcc", r.srcc_value},
                        {"plcc", r.plcc_value},
                        {"n", r.sample_count}});
    }
    nlohmann::json meds = nlohmann::json::array();
    for (const MedianRow& m : medians) {
        meds.push_back({{"database", m.database_id},
                        {"head", m.head_id},
                        {"srcc_median", m.srcc_median},
                        {"plcc_median", m.plcc_median},
                        {"splits", m.splits}});
    }
    return nlohmann::json{{"records", recs},
                          {"medians", meds},
                          {"master_seed", master_seed},
                          {"config_hash", config_hash},
                          {"checkpoint", checkpoint_id},
                          {"n_splits", n_splits}}
        .dump(2);
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "database,split,head,srcc,plcc\n";
    for (const SplitRecord& r : records) {
        os << r.database_id << ',' << r.split_index << ',' << r.head_id << ',' << double_to_string(r.srcc_value)
           << ',' << double_to_string(r.plcc_value) << '\n';
    }
    return os.str();
}

MetricsReport run_splits_protocol(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                                  int n_splits, bool use_imdt) {
    if (manifests.empty()) throw std::invalid_argument("run_splits_protocol: no manifests");
    if (n_splits < 1) throw std::invalid_argument("run_splits_protocol: n_splits must be >= 1");
    config.preprocess.validate();

    MetricsReport report;
    report.master_seed = config.master_seed;
    report.config_hash = experiment_config_hash(config);
    report.n_splits = n_splits;

    for (int split = 1; split <= n_splits; ++split) {
        const std::uint64_t split_seed = config.master_seed + static_cast<std::uint64_t>(split);
        std::vector<PreparedDb> dbs;
        for (const DatasetManifest& m : manifests) dbs.push_back(prepare_splits(m, split_seed));

        ImageStore store(config.preprocess);
        TrainConfig train_config = config.train;
        train_config.seed = split_seed;

        const auto record_db = [&](const ModelParams& model, const PreparedDb& db, int head) {
            const std::vector<double> scores = predict_scores(model, db.test, head, store);
            const HeadEval ev = eval_scores(scores, labels_of(db.test));
            report.records.push_back(SplitRecord{db.test.database_id, split, db.test.database_id, ev.srcc_value,
                                                 ev.plcc_value, static_cast<int>(db.test.entries.size())});
        };

        if (use_imdt) {
            ModelParams model = build(config.backbone, static_cast<int>(dbs.size()), config.path_mask,
                                      stream_seed(split_seed, "model"), database_ids(manifests));
            const TrainResult result = run_imdt(train_config, make_imdt_subproblems(dbs), std::move(model), store);
            for (std::size_t i = 0; i < dbs.size(); ++i) {
                const ModelParams best = result.optimum_model(i);
                record_db(best, dbs[i], static_cast<int>(i));
            }
        } else {
            for (std::size_t i = 0; i < dbs.size(); ++i) {
                ModelParams model = build(config.backbone, 1, config.path_mask, stream_seed(split_seed, "model"),
                                          {dbs[i].train.database_id});
                SubProblem sp;
                sp.database_id = dbs[i].train.database_id;
                sp.train = dbs[i].train;
                sp.validation = dbs[i].validation;
                sp.head_index = 0;
                const TrainResult result = train_single(train_config, sp, std::move(model), store);
                const ModelParams best = result.optimum_model(0);
                record_db(best, dbs[i], 0);
            }
        }
    }
    report.compute_medians();
    return report;
}

// ---- ablation ---------------------------------------------------------------------

double AblationTable::value(const std::string& variant, const std::string& database_id, std::uint64_t seed) const {
    for (const AblationCell& c : cells) {
        if (c.variant == variant && c.database_id == database_id && c.seed == seed) return c.srcc_value;
    }
    throw std::invalid_argument("ablation cell not found: " + variant + "/" + database_id);
}

std::string AblationTable::to_csv() const {
    std::ostringstream os;
    os << "variant,database,seed,srcc,plcc\n";
    for (const AblationCell& c : cells) {
        os << c.variant << ',' << c.database_id << ',' << c.seed << ',' << double_to_string(c.srcc_value) << ','
           << double_to_string(c.plcc_value) << '\n';
    }
    return os.str();
}

namespace {

struct AblationVariant {
    std::string name;
    std::vector<bool> mask;
    bool imdt;
};

std::vector<AblationVariant> ablation_variants(std::size_t n_origins) {
    const std::vector<bool> all_on(n_origins, true);
    const std::vector<bool> all_off(n_origins, false);
    std::vector<AblationVariant> variants = {
        {"staircase+imdt", all_on, true},
        {"staircase", all_on, false},
        {"imdt", all_off, true},
        {"baseline", all_off, false},
    };
    // Nested fusion-path variants: path k enables origins k..Ns-1.
    for (std::size_t k = 1; k <= n_origins; ++k) {
        std::vector<bool> mask(n_origins, false);
        for (std::size_t j = k - 1; j < n_origins; ++j) mask[j] = true;
        variants.push_back({"path" + std::to_string(k), mask, false});
    }
    variants.push_back({"none", all_off, false});
    return variants;
}

}  // namespace

AblationTable run_ablation(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                           const std::vector<std::uint64_t>& seeds) {
    if (manifests.empty()) throw std::invalid_argument("run_ablation: no manifests");
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
    config.preprocess.validate();

    AblationTable table;
    for (const std::uint64_t seed : seeds) {
        std::vector<PreparedDb> dbs;
        for (const DatasetManifest& m : manifests) dbs.push_back(prepare_splits(m, seed));

        for (const AblationVariant& variant : ablation_variants(config.path_mask.size())) {
            ImageStore store(config.preprocess);
            TrainConfig train_config = config.train;
            train_config.seed = seed;

            const auto push_cell = [&](const ModelParams& model, const PreparedDb& db, int head) {
                const std::vector<double> scores = predict_scores(model, db.test, head, store);
                const HeadEval ev = eval_scores(scores, labels_of(db.test));
                table.cells.push_back(
                    AblationCell{variant.name, db.test.database_id, seed, ev.srcc_value, ev.plcc_value});
            };

            if (variant.imdt) {
                ModelParams model = build(config.backbone, static_cast<int>(dbs.size()), variant.mask,
                                          stream_seed(seed, "model"), database_ids(manifests));
                const TrainResult result = run_imdt(train_config, make_imdt_subproblems(dbs), std::move(model), store);
                for (std::size_t i = 0; i < dbs.size(); ++i) push_cell(result.optimum_model(i), dbs[i], static_cast<int>(i));
            } else {
                for (std::size_t i = 0; i < dbs.size(); ++i) {
                    ModelParams model = build(config.backbone, 1, variant.mask, stream_seed(seed, "model"),
                                              {dbs[i].train.database_id});
                    SubProblem sp;
                    sp.database_id = dbs[i].train.database_id;
                    sp.train = dbs[i].train;
                    sp.validation = dbs[i].validation;
                    sp.head_index = 0;
                    const TrainResult result = train_single(train_config, sp, std::move(model), store);
                    push_cell(result.optimum_model(0), dbs[i], 0);
                }
            }
        }
    }
    return table;
}

// ---- cross database ------------------------------------------------------------------

std::vector<CrossDbResult> run_cross_db(const std::vector<DatasetManifest>& manifests, const ExperimentConfig& config,
                                        const PhaseHook& hook) {
    if (manifests.size() < 3) {
        throw std::invalid_argument("run_cross_db needs at least 3 databases, got " +
                                    std::to_string(manifests.size()));
    }
    config.preprocess.validate();

    const auto notify = [&](const std::string& phase, const std::string& detail) {
        if (hook) hook(phase, detail);
    };

    std::vector<CrossDbResult> results;
    for (std::size_t held_out = 0; held_out < manifests.size(); ++held_out) {
        const DatasetManifest& target = manifests[held_out];
        std::vector<DatasetManifest> training;
        for (std::size_t i = 0; i < manifests.size(); ++i) {
            if (i != held_out) training.push_back(manifests[i]);
        }

        const std::uint64_t seed = config.master_seed + 1;
        std::vector<PreparedDb> dbs;
        for (const DatasetManifest& m : training) dbs.push_back(prepare_splits(m, seed));

        ImageStore store(config.preprocess);
        TrainConfig train_config = config.train;
        train_config.seed = stream_seed(seed, "cross:" + target.database_id);

        notify("train_begin", target.database_id);
        ModelParams model = build(config.backbone, static_cast<int>(dbs.size()), config.path_mask,
                                  stream_seed(train_config.seed, "model"), database_ids(training));
        const TrainResult trained = run_imdt(train_config, make_imdt_subproblems(dbs), std::move(model), store);
        notify("train_end", target.database_id);

        notify("eval_begin", target.database_id);
        CrossDbResult row;
        row.held_out_id = target.database_id;
        const std::vector<double> labels = labels_of(target);
        std::vector<double> ensemble(target.entries.size(), 0.0);
        for (std::size_t head = 0; head < dbs.size(); ++head) {
            const ModelParams best = trained.optimum_model(head);
            const std::vector<double> scores = predict_scores(best, target, static_cast<int>(head), store);
            const HeadEval ev = eval_scores(scores, labels);
            row.head_ids.push_back(training[head].database_id);
            row.per_head_srcc.push_back(ev.srcc_value);
            row.per_head_plcc.push_back(ev.plcc_value);
            for (std::size_t k = 0; k < scores.size(); ++k) ensemble[k] += scores[k];
        }
        for (double& v : ensemble) v /= static_cast<double>(dbs.size());
        const HeadEval ev = eval_scores(ensemble, labels);
        row.ensemble_srcc = ev.srcc_value;
        row.ensemble_plcc = ev.plcc_value;
        notify("eval_end", target.database_id);
        results.push_back(std::move(row));
    }
    return results;
}

std::string cross_db_csv(const std::vector<CrossDbResult>& results) {
    std::ostringstream os;
    os << "held_out,head,srcc,plcc\n";
    for (const CrossDbResult& r : results) {
        for (std::size_t i = 0; i < r.head_ids.size(); ++i) {
            os << r.held_out_id << ',' << r.head_ids[i] << ',' << double_to_string(r.per_head_srcc[i]) << ','
               << double_to_string(r.per_head_plcc[i]) << '\n';
        }
        os << r.held_out_id << ",ensemble," << double_to_string(r.ensemble_srcc) << ','
           << double_to_string(r.ensemble_plcc) << '\n';
    }
    return os.str();
}

std::string experiment_config_hash(const ExperimentConfig& config) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& s : config.backbone.stages) {
        stages.push_back({{"blocks", s.blocks}, {"out_channels", s.out_channels}, {"downsample", s.downsample}});
    }
    const nlohmann::json j{
        {"backbone",
         {{"input_channels", config.backbone.input_channels},
          {"stem_channels", config.backbone.stem_channels},
          {"residual_blocks", config.backbone.residual_blocks},
          {"stages", stages}}},
        {"path_mask", std::vector<bool>(config.path_mask.begin(), config.path_mask.end())},
        {"train",
         {{"loops", config.train.loops},
          {"epoch_upper_bound", config.train.epoch_upper_bound},
          {"batch_size", config.train.batch_size},
          {"lr", config.train.lr},
          {"adam_beta1", config.train.adam_beta1},
          {"adam_beta2", config.train.adam_beta2},
          {"adam_eps", config.train.adam_eps},
          {"criterion", criterion_name(config.train.criterion)}}},
        {"preprocess",
         {{"resize_min_dim", config.preprocess.resize_min_dim},
          {"crop", config.preprocess.crop},
          {"normalize_mean", config.preprocess.normalize_mean},
          {"normalize_std", config.preprocess.normalize_std}}},
        {"master_seed", config.master_seed},
    };
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
    return buf;
}

}  // namespace stairiqa
