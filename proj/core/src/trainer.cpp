#include "stairiqa/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "binio.hpp"
#include "stairiqa/checkpoint.hpp"
#include "stairiqa/metrics.hpp"

namespace stairiqa {

const char* criterion_name(Criterion c) { return c == Criterion::kSrcc ? "srcc" : "plcc"; }

Criterion criterion_from_name(const std::string& name) {
    if (name == "srcc") return Criterion::kSrcc;
    if (name == "plcc") return Criterion::kPlcc;
    throw std::invalid_argument("unknown criterion \"" + name + "\", expected srcc or plcc");
}

void TrainConfig::validate() const {
    if (loops < 1) throw std::invalid_argument("train: loops must be >= 1");
    if (epoch_upper_bound < 1) throw std::invalid_argument("train: epoch_upper_bound must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be > 0");
}

int compute_epoch_budget(std::int64_t n_i, std::int64_t n_max, int epoch_upper_bound) {
    if (n_i <= 0 || n_max <= 0) throw std::invalid_argument("epoch budget: database sizes must be positive");
    if (n_i > n_max) throw std::invalid_argument("epoch budget: N_i exceeds N_max");
    if (epoch_upper_bound < 1) throw std::invalid_argument("epoch budget: E must be >= 1");
    const long long rounded = std::llround(static_cast<double>(n_max) / static_cast<double>(n_i));
    return std::max(static_cast<int>(rounded), epoch_upper_bound);
}

std::vector<ScheduleEntry> build_schedule(const TrainConfig& config, const std::vector<SubProblem>& subproblems) {
    config.validate();
    if (subproblems.empty()) throw std::invalid_argument("build_schedule: need at least one subproblem");
    std::int64_t n_max = 0;
    for (const SubProblem& sp : subproblems) {
        if (sp.size() <= 0) throw std::invalid_argument(sp.database_id + ": empty training split");
        n_max = std::max(n_max, sp.size());
    }
    std::vector<int> budgets;
    for (const SubProblem& sp : subproblems) {
        budgets.push_back(compute_epoch_budget(sp.size(), n_max, config.epoch_upper_bound));
    }
    std::vector<ScheduleEntry> schedule;
    for (int loop = 1; loop <= config.loops; ++loop) {
        for (std::size_t db = 0; db < subproblems.size(); ++db) {
            for (int epoch = 1; epoch <= budgets[db]; ++epoch) {
                schedule.push_back(ScheduleEntry{loop, static_cast<int>(db), epoch, budgets[db]});
            }
        }
    }
    return schedule;
}

namespace {

void check_subproblems(const std::vector<SubProblem>& subproblems, const ModelParams& model) {
    std::unordered_set<int> heads;
    for (const SubProblem& sp : subproblems) {
        if (sp.head_index < 0 || sp.head_index >= model.num_heads()) {
            throw std::invalid_argument(sp.database_id + ": head index " + std::to_string(sp.head_index) +
                                        " out of range for a model with " + std::to_string(model.num_heads()) +
                                        " heads");
        }
        if (!heads.insert(sp.head_index).second) {
            throw std::invalid_argument("two subproblems share head index " + std::to_string(sp.head_index));
        }
        if (sp.train.entries.empty()) throw std::invalid_argument(sp.database_id + ": empty training split");
        if (sp.validation.entries.empty()) throw std::invalid_argument(sp.database_id + ": empty validation split");
        std::unordered_set<std::string> train_paths;
        for (const ManifestEntry& e : sp.train.entries) train_paths.insert(e.image_path);
        for (const ManifestEntry& e : sp.validation.entries) {
            if (train_paths.count(e.image_path)) {
                throw std::invalid_argument(sp.database_id + ": train and validation overlap on " + e.image_path);
            }
        }
    }
}

std::vector<double> five_crop_scores(const ModelParams& model, const std::string& image_path, int head,
                                     ImageStore& store) {
    const ImageF& prepared_img = store.prepared(image_path);
    const std::vector<ImageF> crops = five_crop(prepared_img, store.config().crop);
    const Tensor batch = stack_images(crops, store.config());
    const Tensor scores = forward(model, batch, head);
    return scores.values();
}

}  // namespace

std::vector<double> predict_scores(const ModelParams& model, const DatasetManifest& manifest, int head,
                                   ImageStore& store) {
    NoGradScope no_grad;
    std::vector<double> out;
    out.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        out.push_back(score_aggregate(five_crop_scores(model, e.image_path, head, store)));
    }
    return out;
}

std::vector<double> predict_scores_ensemble(const ModelParams& model, const DatasetManifest& manifest,
                                            ImageStore& store) {
    NoGradScope no_grad;
    std::vector<double> out;
    out.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries) {
        double acc = 0.0;
        for (int head = 0; head < model.num_heads(); ++head) {
            acc += score_aggregate(five_crop_scores(model, e.image_path, head, store));
        }
        out.push_back(acc / model.num_heads());
    }
    return out;
}

double validate(const ModelParams& model, const SubProblem& subproblem, Criterion criterion, ImageStore& store) {
    if (subproblem.validation.size() < 2) {
        throw std::invalid_argument(subproblem.database_id + ": validation needs at least 2 items, correlation is " +
                                    "undefined otherwise");
    }
    const std::vector<double> scores = predict_scores(model, subproblem.validation, subproblem.head_index, store);
    std::vector<double> labels;
    labels.reserve(subproblem.validation.entries.size());
    for (const ManifestEntry& e : subproblem.validation.entries) labels.push_back(e.mos);
    return criterion == Criterion::kSrcc ? srcc(scores, labels) : plcc(scores, labels);
}

double train_epoch(TrainState& state, const TrainConfig& config, const SubProblem& subproblem, ImageStore& store) {
    ModelParams& model = state.model;
    std::vector<Parameter*> step_params = model.shared_params();
    for (Parameter* p : model.head_params(subproblem.head_index)) step_params.push_back(p);

    AdamConfig adam{config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps};

    std::vector<std::size_t> order(subproblem.train.entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    state.rng.shuffle(order);

    const int crop_size = store.config().crop;
    double loss_sum = 0.0;
    try {
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<ImageF> crops;
            std::vector<double> labels;
            crops.reserve(end - start);
            for (std::size_t k = start; k < end; ++k) {
                const ManifestEntry& e = subproblem.train.entries[order[k]];
                crops.push_back(random_crop(store.prepared(e.image_path), crop_size, state.rng));
                labels.push_back(e.mos);
            }
            const Tensor batch = stack_images(crops, store.config());
            const Tensor label_tensor(Shape{static_cast<std::int64_t>(labels.size())}, labels);
            const Tensor pred = forward(model, batch, subproblem.head_index);
            const Tensor loss = mse_loss(pred, label_tensor);
            loss_sum += loss.item() * static_cast<double>(end - start);
            backward(loss);
            adam_step(step_params, adam);
        }
    } catch (...) {
        Tape::current().clear();
        for (Parameter* p : step_params) p->value.zero_grad();
        throw;
    }
    return loss_sum / static_cast<double>(order.size());
}

TrainState init_train_state(const TrainConfig& config, const std::vector<SubProblem>& subproblems,
                            ModelParams model, ImageStore& store) {
    config.validate();
    if (subproblems.empty()) throw std::invalid_argument("init_train_state: need at least one subproblem");
    check_subproblems(subproblems, model);

    TrainState state;
    state.model = std::move(model);
    state.rng = Rng(stream_seed(config.seed, "imdt"));

    // Baseline: Algorithm line "C(opt) starts at the initial model" -- the
    // strict > rule then keeps the initial snapshot until something beats it.
    const auto initial_values = state.model.snapshot_values();
    for (const SubProblem& sp : subproblems) {
        DatabaseOptimum opt;
        opt.database_id = sp.database_id;
        opt.head_index = sp.head_index;
        opt.criterion = validate(state.model, sp, config.criterion, store);
        opt.values = initial_values;
        state.best.push_back(std::move(opt));
    }
    return state;
}

EpochRecord run_schedule_entry(TrainState& state, const TrainConfig& config,
                               const std::vector<SubProblem>& subproblems,
                               const std::vector<ScheduleEntry>& schedule, ImageStore& store) {
    if (state.cursor >= schedule.size()) throw std::invalid_argument("run_schedule_entry: schedule exhausted");
    const ScheduleEntry& entry = schedule[state.cursor];
    const SubProblem& sp = subproblems[static_cast<std::size_t>(entry.db_index)];

    EpochRecord record;
    record.loop = entry.loop;
    record.db = sp.database_id;
    record.epoch = entry.epoch;
    record.mean_loss = train_epoch(state, config, sp, store);
    record.criterion = validate(state.model, sp, config.criterion, store);

    DatabaseOptimum& best = state.best[static_cast<std::size_t>(entry.db_index)];
    if (record.criterion > best.criterion) {
        best.criterion = record.criterion;
        best.values = state.model.snapshot_values();
        record.snapshot_taken = true;
    }
    state.log.push_back(record);
    ++state.cursor;
    return record;
}

namespace {

TrainResult finish(TrainState&& state) {
    TrainResult result;
    result.optima = std::move(state.best);
    result.log = std::move(state.log);
    result.model = std::move(state.model);
    return result;
}

}  // namespace

ModelParams TrainResult::optimum_model(std::size_t db) const {
    ModelParams out = model.clone();
    out.restore_values(optima.at(db).values);
    return out;
}

TrainResult run_imdt(const TrainConfig& config, const std::vector<SubProblem>& subproblems, ModelParams model,
                     ImageStore& store) {
    TrainState state = init_train_state(config, subproblems, std::move(model), store);
    const std::vector<ScheduleEntry> schedule = build_schedule(config, subproblems);
    while (state.cursor < schedule.size()) {
        run_schedule_entry(state, config, subproblems, schedule, store);
    }
    return finish(std::move(state));
}

TrainResult train_single(const TrainConfig& config, const SubProblem& subproblem, ModelParams model,
                         ImageStore& store) {
    return run_imdt(config, {subproblem}, std::move(model), store);
}

// ---- persistence ---------------------------------------------------------------

namespace {

constexpr char kStateMagic[4] = {'S', 'I', 'Q', 'S'};
constexpr std::uint16_t kStateVersion = 1;
const char* kStateCheckpointSuffix = ".model";

void put_value_matrix(std::string& out, const std::vector<std::vector<double>>& values) {
    binio::put_u32(out, static_cast<std::uint32_t>(values.size()));
    for (const std::vector<double>& v : values) {
        binio::put_u64(out, v.size());
        for (double x : v) binio::put_f64(out, x);
    }
}

std::vector<std::vector<double>> get_value_matrix(binio::Reader& r) {
    std::vector<std::vector<double>> values(r.u32());
    for (std::vector<double>& v : values) {
        v.resize(r.u64());
        for (double& x : v) x = r.f64();
    }
    return values;
}

}  // namespace

void save_train_state(const std::string& path, const TrainState& state) {
    // Model structure and current values ride in an ordinary checkpoint next
    // to the state file.
    save_checkpoint(path + kStateCheckpointSuffix, state.model);

    using namespace binio;
    std::string out;
    put_bytes(out, kStateMagic, 4);
    put_u16(out, kStateVersion);

    const auto params = state.model.all_params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        put_str(out, p->name);
        put_u64(out, static_cast<std::uint64_t>(p->adam.step));
        put_u64(out, p->adam.m.size());
        for (double v : p->adam.m) put_f64(out, v);
        for (double v : p->adam.v) put_f64(out, v);
    }

    put_u32(out, static_cast<std::uint32_t>(state.best.size()));
    for (const DatabaseOptimum& opt : state.best) {
        put_str(out, opt.database_id);
        put_u32(out, static_cast<std::uint32_t>(opt.head_index));
        put_f64(out, opt.criterion);
        put_value_matrix(out, opt.values);
    }

    put_u64(out, state.cursor);
    put_str(out, state.rng.save_state());

    put_u32(out, static_cast<std::uint32_t>(state.log.size()));
    for (const EpochRecord& rec : state.log) put_str(out, epoch_record_json(rec));

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open train state for writing: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error("train state write failed: " + path);
}

TrainState load_train_state(const std::string& path) {
    TrainState state;
    state.model = load_checkpoint(path + kStateCheckpointSuffix);

    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open train state: " + path);
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    binio::Reader r(std::move(bytes), path);

    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kStateMagic, 4) != 0) throw std::runtime_error(path + ": not a train-state file");
    if (r.u16() != kStateVersion) throw std::runtime_error(path + ": unsupported train-state version");

    const std::uint32_t param_count = r.u32();
    for (std::uint32_t i = 0; i < param_count; ++i) {
        const std::string name = r.str();
        Parameter* p = state.model.find_param(name);
        if (!p) throw std::runtime_error(path + ": unknown parameter " + name);
        p->adam.step = static_cast<std::int64_t>(r.u64());
        const std::uint64_t n = r.u64();
        if (n != p->adam.m.size()) throw std::runtime_error(path + ": adam state size mismatch for " + name);
        for (double& v : p->adam.m) v = r.f64();
        for (double& v : p->adam.v) v = r.f64();
    }

    const std::uint32_t best_count = r.u32();
    for (std::uint32_t i = 0; i < best_count; ++i) {
        DatabaseOptimum opt;
        opt.database_id = r.str();
        opt.head_index = static_cast<int>(r.u32());
        opt.criterion = r.f64();
        opt.values = get_value_matrix(r);
        state.best.push_back(std::move(opt));
    }

    state.cursor = r.u64();
    state.rng.load_state(r.str());

    const std::uint32_t log_count = r.u32();
    for (std::uint32_t i = 0; i < log_count; ++i) {
        const nlohmann::json j = nlohmann::json::parse(r.str());
        EpochRecord rec;
        rec.loop = j.at("loop").get<int>();
        rec.db = j.at("db").get<std::string>();
        rec.epoch = j.at("epoch").get<int>();
        rec.mean_loss = j.at("mean_loss").get<double>();
        rec.criterion = j.at("criterion").get<double>();
        rec.snapshot_taken = j.at("snapshot_taken").get<bool>();
        state.log.push_back(std::move(rec));
    }
    if (!r.at_end()) throw std::runtime_error(path + ": trailing bytes");
    return state;
}

std::string epoch_record_json(const EpochRecord& record) {
    return nlohmann::json{{"loop", record.loop},         {"db", record.db},
                          {"epoch", record.epoch},       {"mean_loss", record.mean_loss},
                          {"criterion", record.criterion}, {"snapshot_taken", record.snapshot_taken}}
        .dump();
}

void write_train_log(const std::string& path, const std::vector<EpochRecord>& log) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open training log for writing: " + path);
    for (const EpochRecord& rec : log) out << epoch_record_json(rec) << '\n';
    if (!out) throw std::runtime_error("training log write failed: " + path);
}

}  // namespace stairiqa
