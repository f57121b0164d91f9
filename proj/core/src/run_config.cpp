#include "stairiqa/run_config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace stairiqa {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [key, value] : obj.items()) {
        if (!known.count(key)) {
            throw std::invalid_argument(where + ": unknown key \"" + key + "\"");
        }
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::desk_default() {
    RunConfig config;
    config.experiment.backbone.input_channels = 3;
    config.experiment.backbone.stem_channels = 8;
    config.experiment.backbone.residual_blocks = false;
    config.experiment.backbone.stages = {{1, 8, true}, {1, 16, true}, {1, 32, true}, {1, 64, true}};
    config.experiment.path_mask = {true, true, true};
    config.experiment.train.loops = 3;
    config.experiment.train.epoch_upper_bound = 5;
    config.experiment.train.batch_size = 10;
    config.experiment.train.lr = 0.01;
    config.experiment.train.criterion = Criterion::kSrcc;
    config.experiment.preprocess.resize_min_dim = 32;
    config.experiment.preprocess.crop = 28;
    config.experiment.master_seed = 1;
    config.out_dir = "runs/out";
    return config;
}

RunConfig RunConfig::from_json_text(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument(origin + ": invalid JSON: " + e.what());
    }
    if (!root.is_object()) throw std::invalid_argument(origin + ": config must be a JSON object");

    RunConfig config = desk_default();
    config.dataset_manifests.clear();

    reject_unknown_keys(root, {"datasets", "backbone", "path_mask", "train", "preprocess", "out_dir", "seed"},
                        origin);
    try {
        read_field(root, "datasets", config.dataset_manifests);
        read_field(root, "out_dir", config.out_dir);
        read_field(root, "seed", config.experiment.master_seed);

        if (root.contains("backbone")) {
            const json& b = root.at("backbone");
            reject_unknown_keys(b, {"input_channels", "stem_channels", "residual_blocks", "stages"},
                                origin + ".backbone");
            read_field(b, "input_channels", config.experiment.backbone.input_channels);
            read_field(b, "stem_channels", config.experiment.backbone.stem_channels);
            read_field(b, "residual_blocks", config.experiment.backbone.residual_blocks);
            if (b.contains("stages")) {
                config.experiment.backbone.stages.clear();
                for (const json& s : b.at("stages")) {
                    reject_unknown_keys(s, {"blocks", "out_channels", "downsample"}, origin + ".backbone.stages[]");
                    StageSpec spec;
                    read_field(s, "blocks", spec.blocks);
                    read_field(s, "out_channels", spec.out_channels);
                    read_field(s, "downsample", spec.downsample);
                    config.experiment.backbone.stages.push_back(spec);
                }
                // A stage list implies a fresh mask unless one is given.
                config.experiment.path_mask.assign(config.experiment.backbone.stages.size() - 1, true);
            }
        }
        if (root.contains("path_mask")) {
            config.experiment.path_mask = root.at("path_mask").get<std::vector<bool>>();
        }
        if (root.contains("train")) {
            const json& t = root.at("train");
            reject_unknown_keys(t,
                                {"loops", "epoch_upper_bound", "batch_size", "lr", "adam_beta1", "adam_beta2",
                                 "adam_eps", "criterion"},
                                origin + ".train");
            read_field(t, "loops", config.experiment.train.loops);
            read_field(t, "epoch_upper_bound", config.experiment.train.epoch_upper_bound);
            read_field(t, "batch_size", config.experiment.train.batch_size);
            read_field(t, "lr", config.experiment.train.lr);
            read_field(t, "adam_beta1", config.experiment.train.adam_beta1);
            read_field(t, "adam_beta2", config.experiment.train.adam_beta2);
            read_field(t, "adam_eps", config.experiment.train.adam_eps);
            if (t.contains("criterion")) {
                config.experiment.train.criterion = criterion_from_name(t.at("criterion").get<std::string>());
            }
        }
        if (root.contains("preprocess")) {
            const json& p = root.at("preprocess");
            reject_unknown_keys(p, {"resize_min_dim", "crop", "white_fill", "normalize_mean", "normalize_std"},
                                origin + ".preprocess");
            read_field(p, "resize_min_dim", config.experiment.preprocess.resize_min_dim);
            read_field(p, "crop", config.experiment.preprocess.crop);
            if (p.contains("white_fill") && !p.at("white_fill").is_null()) {
                const auto hw = p.at("white_fill").get<std::vector<int>>();
                if (hw.size() != 2) throw std::invalid_argument(origin + ": white_fill must be [height, width]");
                config.experiment.preprocess.white_fill_hw = {hw[0], hw[1]};
            }
            read_field(p, "normalize_mean", config.experiment.preprocess.normalize_mean);
            read_field(p, "normalize_std", config.experiment.preprocess.normalize_std);
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }

    config.validate();
    return config;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, path);
}

void RunConfig::validate() const {
    experiment.backbone.validate();
    if (experiment.path_mask.size() != experiment.backbone.stages.size() - 1) {
        throw std::invalid_argument("config: path_mask needs one flag per origin stage (" +
                                    std::to_string(experiment.backbone.stages.size() - 1) + "), got " +
                                    std::to_string(experiment.path_mask.size()));
    }
    experiment.train.validate();
    experiment.preprocess.validate();
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must not be empty");
}

std::string RunConfig::to_json_text() const {
    json stages = json::array();
    for (const StageSpec& s : experiment.backbone.stages) {
        stages.push_back({{"blocks", s.blocks}, {"out_channels", s.out_channels}, {"downsample", s.downsample}});
    }
    json preprocess{{"resize_min_dim", experiment.preprocess.resize_min_dim},
                    {"crop", experiment.preprocess.crop},
                    {"normalize_mean", experiment.preprocess.normalize_mean},
                    {"normalize_std", experiment.preprocess.normalize_std}};
    if (experiment.preprocess.white_fill_hw) {
        preprocess["white_fill"] = {experiment.preprocess.white_fill_hw->first,
                                    experiment.preprocess.white_fill_hw->second};
    } else {
        preprocess["white_fill"] = nullptr;
    }
    return json{{"datasets", dataset_manifests},
                {"out_dir", out_dir},
                {"seed", experiment.master_seed},
                {"backbone",
                 {{"input_channels", experiment.backbone.input_channels},
                  {"stem_channels", experiment.backbone.stem_channels},
                  {"residual_blocks", experiment.backbone.residual_blocks},
                  {"stages", stages}}},
                {"path_mask", std::vector<bool>(experiment.path_mask.begin(), experiment.path_mask.end())},
                {"train",
                 {{"loops", experiment.train.loops},
                  {"epoch_upper_bound", experiment.train.epoch_upper_bound},
                  {"batch_size", experiment.train.batch_size},
                  {"lr", experiment.train.lr},
                  {"adam_beta1", experiment.train.adam_beta1},
                  {"adam_beta2", experiment.train.adam_beta2},
                  {"adam_eps", experiment.train.adam_eps},
                  {"criterion", criterion_name(experiment.train.criterion)}}},
                {"preprocess", preprocess}}
        .dump(2);
}

}  // namespace stairiqa
