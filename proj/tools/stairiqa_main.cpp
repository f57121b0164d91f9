// stairiqa: staircase-fusion image quality model with iterative mixed
// database training. Subcommands cover synthetic data generation, training,
// evaluation, single-image scoring, gradient verification and leave-one-out
// cross-database evaluation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stairiqa/checkpoint.hpp"
#include "stairiqa/gradcheck.hpp"
#include "stairiqa/metrics.hpp"
#include "stairiqa/protocols.hpp"
#include "stairiqa/run_config.hpp"
#include "stairiqa/synthetic.hpp"
#include "stairiqa/text.hpp"
#include "stairiqa/trainer.hpp"

namespace fs = std::filesystem;
using namespace stairiqa;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Input validation problems (bad flags, missing or malformed files) exit 2;
// failures during a run exit 1.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_outputs_index(const std::string& out_dir, const std::vector<std::string>& artifacts) {
    nlohmann::json index{{"outputs", artifacts}};
    write_text_file((fs::path(out_dir) / "outputs.json").string(), index.dump(2) + "\n");
}

std::uint64_t resolve_seed(std::uint64_t file_seed, const std::optional<std::uint64_t>& flag_seed) {
    std::uint64_t seed = file_seed;
    if (const char* env = std::getenv("STAIRIQA_SEED")) {
        try {
            seed = std::stoull(env);
        } catch (const std::exception&) {
            throw UsageError(std::string("STAIRIQA_SEED is not an integer: ") + env);
        }
    }
    if (flag_seed) seed = *flag_seed;
    return seed;
}

RunConfig load_run_config(const std::string& path, const std::optional<std::uint64_t>& flag_seed,
                          const std::optional<std::string>& flag_out) {
    RunConfig config;
    try {
        config = RunConfig::load(path);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    config.experiment.master_seed = resolve_seed(config.experiment.master_seed, flag_seed);
    if (flag_out) config.out_dir = *flag_out;
    if (config.dataset_manifests.empty()) throw UsageError(path + ": config lists no datasets");
    return config;
}

std::vector<DatasetManifest> load_all_manifests(const std::vector<std::string>& paths) {
    std::vector<DatasetManifest> manifests;
    for (const std::string& p : paths) {
        try {
            manifests.push_back(load_manifest(p));
        } catch (const std::exception& e) {
            throw UsageError(e.what());
        }
    }
    return manifests;
}

// ---- gen-data ------------------------------------------------------------------

int cmd_gen_data(const std::optional<std::string>& spec_path, const std::string& out_dir) {
    SyntheticSpec spec;
    if (spec_path) {
        if (!fs::exists(*spec_path)) throw UsageError("spec file not found: " + *spec_path);
        try {
            spec = SyntheticSpec::load(*spec_path);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    } else {
        spec = SyntheticSpec::desk_default();
    }

    const std::vector<GeneratedDatabase> generated = gen_synthetic_db(spec, out_dir);
    std::vector<std::string> artifacts;
    artifacts.push_back((fs::path(out_dir) / "synthetic_spec.json").string());
    write_text_file(artifacts.back(), spec.to_json_text() + "\n");
    for (const GeneratedDatabase& g : generated) {
        double lo = g.manifest.entries[0].mos, hi = lo;
        for (const ManifestEntry& e : g.manifest.entries) {
            lo = std::min(lo, e.mos);
            hi = std::max(hi, e.mos);
        }
        std::printf("%s: %lld images, MOS range [%.2f, %.2f] -> %s\n", g.manifest.database_id.c_str(),
                    static_cast<long long>(g.manifest.size()), lo, hi, g.manifest_path.c_str());
        artifacts.push_back(g.manifest_path);
        artifacts.push_back(g.magnitudes_path);
    }
    write_outputs_index(out_dir, artifacts);
    return kExitOk;
}

// ---- train ---------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& mode,
              const std::optional<std::uint64_t>& flag_seed, const std::optional<std::string>& flag_out) {
    if (mode != "imdt" && mode != "single") throw UsageError("--mode must be imdt or single, got " + mode);
    const RunConfig config = load_run_config(config_path, flag_seed, flag_out);
    if (mode == "single" && config.dataset_manifests.size() != 1) {
        throw UsageError("--mode single expects exactly one dataset manifest, config lists " +
                         std::to_string(config.dataset_manifests.size()));
    }
    const std::vector<DatasetManifest> manifests = load_all_manifests(config.dataset_manifests);

    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create out_dir " + config.out_dir + ": " + ec.message());

    std::vector<std::string> artifacts;
    const std::string resolved_path = (fs::path(config.out_dir) / "config.resolved.json").string();
    write_text_file(resolved_path, config.to_json_text() + "\n");
    artifacts.push_back(resolved_path);

    // Split seed matches split index 1 of the repeated-split protocol.
    const std::uint64_t split_seed = config.experiment.master_seed + 1;
    std::vector<PreparedDb> dbs;
    for (const DatasetManifest& m : manifests) dbs.push_back(prepare_splits(m, split_seed));

    const fs::path splits_dir = fs::path(config.out_dir) / "splits";
    for (const PreparedDb& db : dbs) {
        const fs::path dir = splits_dir / db.train.database_id;
        fs::create_directories(dir, ec);
        if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
        save_manifest((dir / "train.csv").string(), db.train);
        save_manifest((dir / "val.csv").string(), db.validation);
        save_manifest((dir / "test.csv").string(), db.test);
        artifacts.push_back((dir / "train.csv").string());
        artifacts.push_back((dir / "val.csv").string());
        artifacts.push_back((dir / "test.csv").string());
    }

    ImageStore store(config.experiment.preprocess);
    TrainConfig train_config = config.experiment.train;
    train_config.seed = split_seed;

    std::vector<std::string> head_ids;
    for (const DatasetManifest& m : manifests) head_ids.push_back(m.database_id);
    ModelParams model = build(config.experiment.backbone, static_cast<int>(dbs.size()), config.experiment.path_mask,
                              stream_seed(split_seed, "model"), head_ids);

    const std::vector<SubProblem> subproblems = make_imdt_subproblems(dbs);
    const TrainResult result = mode == "single" ? train_single(train_config, subproblems[0], std::move(model), store)
                                                : run_imdt(train_config, subproblems, std::move(model), store);

    const fs::path ckpt_dir = fs::path(config.out_dir) / "checkpoints";
    fs::create_directories(ckpt_dir, ec);
    if (ec) throw std::runtime_error("cannot create " + ckpt_dir.string() + ": " + ec.message());
    for (std::size_t i = 0; i < result.optima.size(); ++i) {
        const std::string path = (ckpt_dir / ("best_" + result.optima[i].database_id + ".siqa")).string();
        save_checkpoint(path, result.optimum_model(i), config.experiment.preprocess);
        artifacts.push_back(path);
        std::printf("%s: best %s %.4f -> %s\n", result.optima[i].database_id.c_str(),
                    criterion_name(train_config.criterion), result.optima[i].criterion, path.c_str());
    }
    const std::string final_path = (ckpt_dir / "final.siqa").string();
    save_checkpoint(final_path, result.model, config.experiment.preprocess);
    artifacts.push_back(final_path);

    const std::string log_path = (fs::path(config.out_dir) / "train_log.jsonl").string();
    write_train_log(log_path, result.log);
    artifacts.push_back(log_path);

    write_outputs_index(config.out_dir, artifacts);
    return kExitOk;
}

// ---- eval ----------------------------------------------------------------------

int cmd_eval(const std::string& checkpoint_path, const std::string& manifest_path, const std::string& head_id,
             const std::string& out_dir) {
    if (!fs::exists(checkpoint_path)) throw UsageError("checkpoint not found: " + checkpoint_path);
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint_full(checkpoint_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    DatasetManifest manifest;
    try {
        manifest = load_manifest(manifest_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    if (manifest.size() < 2) throw UsageError(manifest_path + ": correlation undefined for fewer than 2 images");

    const PreprocessConfig preprocess = ckpt.preprocess.value_or(PreprocessConfig{});
    ImageStore store(preprocess);

    int head = -1;
    if (head_id != "ensemble") {
        for (int i = 0; i < ckpt.model.num_heads(); ++i) {
            if (ckpt.model.heads[static_cast<std::size_t>(i)].database_id == head_id) head = i;
        }
        if (head < 0) {
            std::string available = "ensemble";
            for (const RegressorHead& h : ckpt.model.heads) available += ", " + h.database_id;
            throw UsageError("unknown head \"" + head_id + "\"; available: " + available);
        }
    }

    const std::vector<double> scores = head < 0 ? predict_scores_ensemble(ckpt.model, manifest, store)
                                                : predict_scores(ckpt.model, manifest, head, store);
    std::vector<double> labels;
    for (const ManifestEntry& e : manifest.entries) labels.push_back(e.mos);

    MetricsReport report;
    report.checkpoint_id = checkpoint_path;
    report.n_splits = 1;
    report.records.push_back(SplitRecord{manifest.database_id, 1, head_id, srcc(scores, labels),
                                         plcc(scores, labels), static_cast<int>(manifest.size())});
    report.compute_medians();

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create out dir " + out_dir + ": " + ec.message());
    write_text_file((fs::path(out_dir) / "eval_report.json").string(), report.to_json() + "\n");
    write_text_file((fs::path(out_dir) / "eval_report.csv").string(), report.to_csv());
    std::printf("%s head=%s n=%lld srcc=%.6f plcc=%.6f\n", manifest.database_id.c_str(), head_id.c_str(),
                static_cast<long long>(manifest.size()), report.records[0].srcc_value, report.records[0].plcc_value);
    return kExitOk;
}

// ---- score ---------------------------------------------------------------------

int cmd_score(const std::string& checkpoint_path, const std::string& image_path, const std::string& head_id) {
    if (!fs::exists(checkpoint_path)) throw UsageError("checkpoint not found: " + checkpoint_path);
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint_full(checkpoint_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
    int head = -1;
    for (int i = 0; i < ckpt.model.num_heads(); ++i) {
        if (ckpt.model.heads[static_cast<std::size_t>(i)].database_id == head_id) head = i;
    }
    if (head < 0) {
        std::string available;
        for (const RegressorHead& h : ckpt.model.heads) {
            if (!available.empty()) available += ", ";
            available += h.database_id;
        }
        throw UsageError("unknown head \"" + head_id + "\"; available: " + available);
    }

    ImageF image;
    try {
        image = to_float(read_ppm(image_path));
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }

    const PreprocessConfig preprocess = ckpt.preprocess.value_or(PreprocessConfig{});
    NoGradScope no_grad;
    const ImageF prepared_img = prepare(image, preprocess);
    const std::vector<ImageF> crops = five_crop(prepared_img, preprocess.crop);
    const Tensor batch = stack_images(crops, preprocess);
    const Tensor scores = forward(ckpt.model, batch, head);
    std::printf("%s\n", double_to_string(score_aggregate(scores.values())).c_str());
    return kExitOk;
}

// ---- grad-check ----------------------------------------------------------------

int cmd_grad_check(const std::string& size) {
    if (size != "tiny" && size != "small") throw UsageError("--size must be tiny or small, got " + size);
    GradCheckOptions options;
    options.large_shapes = size == "small";
    const std::vector<GradCheckResult> results = run_grad_checks(options);
    std::printf("%-18s %-12s %-10s %s\n", "op", "max_rel_err", "tolerance", "status");
    for (const GradCheckResult& r : results) {
        std::printf("%-18s %-12.3e %-10.1e %s\n", r.op.c_str(), r.max_rel_err, r.tolerance,
                    r.pass ? "pass" : "FAIL");
    }
    return all_passed(results) ? kExitOk : kExitRuntime;
}

// ---- cross-eval ----------------------------------------------------------------

int cmd_cross_eval(const std::string& config_path, const std::optional<std::uint64_t>& flag_seed,
                   const std::optional<std::string>& flag_out) {
    const RunConfig config = load_run_config(config_path, flag_seed, flag_out);
    if (config.dataset_manifests.size() < 3) {
        throw UsageError("cross-eval needs at least 3 datasets (train on all but one, test on the rest), config lists " +
                         std::to_string(config.dataset_manifests.size()));
    }
    const std::vector<DatasetManifest> manifests = load_all_manifests(config.dataset_manifests);

    const std::vector<CrossDbResult> results = run_cross_db(manifests, config.experiment);

    std::printf("held_out      per-head srcc (train db), ensemble\n");
    for (const CrossDbResult& r : results) {
        std::printf("%-12s", r.held_out_id.c_str());
        for (std::size_t i = 0; i < r.head_ids.size(); ++i) {
            std::printf("  %s=%.4f", r.head_ids[i].c_str(), r.per_head_srcc[i]);
        }
        std::printf("  ensemble=%.4f\n", r.ensemble_srcc);
    }

    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create out dir " + config.out_dir + ": " + ec.message());
    const std::string csv_path = (fs::path(config.out_dir) / "cross_db.csv").string();
    write_text_file(csv_path, cross_db_csv(results));
    write_outputs_index(config.out_dir, {csv_path});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"staircase feature-fusion image quality assessment toolkit"};
    app.require_subcommand(1);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "generate synthetic IQA databases");
    std::string gen_out;
    std::string gen_spec;
    gen->add_option("--spec", gen_spec, "synthetic spec JSON (defaults to the built-in desk-scale spec)");
    gen->add_option("--out", gen_out, "output directory")->required();

    // train
    auto* train = app.add_subcommand("train", "train on the configured databases");
    std::string train_config_path, train_mode = "imdt";
    std::optional<std::uint64_t> train_seed;
    std::optional<std::string> train_out;
    train->add_option("--config", train_config_path, "run config JSON")->required();
    train->add_option("--mode", train_mode, "imdt|single (default imdt)");
    train->add_option("--seed", train_seed, "override master seed");
    train->add_option("--out", train_out, "override output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "five-crop SRCC/PLCC of a checkpoint on a manifest");
    std::string eval_ckpt, eval_manifest, eval_head, eval_out = ".";
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--manifest", eval_manifest, "dataset manifest CSV")->required();
    eval->add_option("--head", eval_head, "head database id, or \"ensemble\"")->required();
    eval->add_option("--out", eval_out, "report output directory (default .)");

    // score
    auto* score = app.add_subcommand("score", "score one image");
    std::string score_ckpt, score_image, score_head;
    score->add_option("--checkpoint", score_ckpt, "checkpoint file")->required();
    score->add_option("--image", score_image, "PPM image")->required();
    score->add_option("--head", score_head, "head database id")->required();

    // grad-check
    auto* grad = app.add_subcommand("grad-check", "finite-difference verification of every op");
    std::string grad_size = "tiny";
    grad->add_option("--size", grad_size, "tiny|small (default tiny)");

    // cross-eval
    auto* cross = app.add_subcommand("cross-eval", "leave-one-database-out evaluation");
    std::string cross_config;
    std::optional<std::uint64_t> cross_seed;
    std::optional<std::string> cross_out;
    cross->add_option("--config", cross_config, "run config JSON")->required();
    cross->add_option("--seed", cross_seed, "override master seed");
    cross->add_option("--out", cross_out, "override output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(gen_spec.empty() ? std::nullopt : std::optional<std::string>(gen_spec), gen_out);
        }
        if (train->parsed()) return cmd_train(train_config_path, train_mode, train_seed, train_out);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_manifest, eval_head, eval_out);
        if (score->parsed()) return cmd_score(score_ckpt, score_image, score_head);
        if (grad->parsed()) return cmd_grad_check(grad_size);
        if (cross->parsed()) return cmd_cross_eval(cross_config, cross_seed, cross_out);
    } catch (const UsageError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitUsage;
}
