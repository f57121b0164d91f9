#include "stairiqa/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include <json.hpp>

#include "binio.hpp"

namespace stairiqa {

namespace {

constexpr char kMagic[4] = {'S', 'I', 'Q', 'A'};
constexpr std::uint16_t kVersion = 1;

nlohmann::json config_document(const ModelParams& model, const std::optional<PreprocessConfig>& preprocess) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageSpec& s : model.config.stages) {
        stages.push_back({{"blocks", s.blocks}, {"out_channels", s.out_channels}, {"downsample", s.downsample}});
    }
    std::vector<std::string> head_ids;
    for (const RegressorHead& h : model.heads) head_ids.push_back(h.database_id);
    nlohmann::json doc{
        {"backbone",
         {{"input_channels", model.config.input_channels},
          {"stem_channels", model.config.stem_channels},
          {"residual_blocks", model.config.residual_blocks},
          {"stages", stages},
          {"block", "conv3x3_relu"},
          {"fusion_unit", "1x1_relu_3x3_relu_1x1"}}},
        {"path_mask", std::vector<bool>(model.path_mask.begin(), model.path_mask.end())},
        {"seed", model.seed},
        {"head_ids", head_ids},
    };
    if (preprocess) {
        nlohmann::json p{{"resize_min_dim", preprocess->resize_min_dim},
                         {"crop", preprocess->crop},
                         {"normalize_mean", preprocess->normalize_mean},
                         {"normalize_std", preprocess->normalize_std}};
        if (preprocess->white_fill_hw) {
            p["white_fill"] = {preprocess->white_fill_hw->first, preprocess->white_fill_hw->second};
        } else {
            p["white_fill"] = nullptr;
        }
        doc["preprocess"] = std::move(p);
    }
    return doc;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& model,
                     const std::optional<PreprocessConfig>& preprocess) {
    using namespace binio;
    std::string out;
    put_bytes(out, kMagic, 4);
    put_u16(out, kVersion);
    put_str(out, config_document(model, preprocess).dump());

    const auto params = model.all_params();
    put_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const Parameter* p : params) {
        put_str(out, p->name);
        const Shape& shape = p->value.shape();
        put_u32(out, static_cast<std::uint32_t>(shape.size()));
        for (std::int64_t d : shape) put_u64(out, static_cast<std::uint64_t>(d));
        for (double v : p->value.values()) put_f64(out, v);
    }

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint_full(const std::string& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
    binio::Reader r(std::move(bytes), path);

    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error(path + ": not a SIQA checkpoint");
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
    }

    BackboneConfig backbone;
    std::vector<bool> mask;
    std::vector<std::string> head_ids;
    std::uint64_t seed = 0;
    std::optional<PreprocessConfig> preprocess;
    try {
        const nlohmann::json config = nlohmann::json::parse(r.str());
        const nlohmann::json& b = config.at("backbone");
        backbone.input_channels = b.at("input_channels").get<int>();
        backbone.stem_channels = b.at("stem_channels").get<int>();
        backbone.residual_blocks = b.at("residual_blocks").get<bool>();
        for (const nlohmann::json& s : b.at("stages")) {
            backbone.stages.push_back(StageSpec{s.at("blocks").get<int>(), s.at("out_channels").get<int>(),
                                                s.at("downsample").get<bool>()});
        }
        mask = config.at("path_mask").get<std::vector<bool>>();
        head_ids = config.at("head_ids").get<std::vector<std::string>>();
        seed = config.at("seed").get<std::uint64_t>();
        if (config.contains("preprocess")) {
            const nlohmann::json& p = config.at("preprocess");
            PreprocessConfig pc;
            pc.resize_min_dim = p.at("resize_min_dim").get<int>();
            pc.crop = p.at("crop").get<int>();
            pc.normalize_mean = p.at("normalize_mean").get<std::array<double, 3>>();
            pc.normalize_std = p.at("normalize_std").get<std::array<double, 3>>();
            if (!p.at("white_fill").is_null()) {
                const auto hw = p.at("white_fill").get<std::vector<int>>();
                pc.white_fill_hw = {hw.at(0), hw.at(1)};
            }
            preprocess = pc;
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path + ": bad config document: " + e.what());
    }

    ModelParams model = build(backbone, static_cast<int>(head_ids.size()), mask, seed, head_ids);

    const std::uint32_t count = r.u32();
    std::unordered_set<std::string> loaded;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const std::uint32_t rank = r.u32();
        Shape shape;
        for (std::uint32_t d = 0; d < rank; ++d) shape.push_back(static_cast<std::int64_t>(r.u64()));
        Parameter* p = model.find_param(name);
        if (!p) throw std::runtime_error(path + ": unknown parameter \"" + name + "\"");
        if (p->value.shape() != shape) {
            throw std::runtime_error(path + ": parameter " + name + " has shape " + shape_str(shape) +
                                     ", expected " + shape_str(p->value.shape()));
        }
        for (std::int64_t k = 0; k < p->value.size(); ++k) p->value[k] = r.f64();
        if (!loaded.insert(name).second) throw std::runtime_error(path + ": duplicate parameter " + name);
    }
    if (loaded.size() != model.all_params().size()) {
        throw std::runtime_error(path + ": checkpoint covers " + std::to_string(loaded.size()) + " of " +
                                 std::to_string(model.all_params().size()) + " parameters");
    }
    if (!r.at_end()) throw std::runtime_error(path + ": trailing bytes after last parameter");
    return Checkpoint{std::move(model), preprocess};
}

ModelParams load_checkpoint(const std::string& path) { return load_checkpoint_full(path).model; }

}  // namespace stairiqa
