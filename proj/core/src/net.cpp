#include "stairiqa/net.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "stairiqa/rng.hpp"

namespace stairiqa {

int BackboneConfig::stage_in_channels(int stage) const {
    return stage == 1 ? stem_channels : stages[static_cast<std::size_t>(stage - 2)].out_channels;
}

void BackboneConfig::validate() const {
    if (input_channels < 1) throw std::invalid_argument("backbone: input_channels must be >= 1");
    if (stem_channels < 1) throw std::invalid_argument("backbone: stem_channels must be >= 1");
    if (stages.empty()) throw std::invalid_argument("backbone: needs at least one stage");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].blocks < 1) {
            throw std::invalid_argument("backbone: stage " + std::to_string(i + 1) + " has no blocks");
        }
        if (stages[i].out_channels < 1) {
            throw std::invalid_argument("backbone: stage " + std::to_string(i + 1) + " has non-positive channels");
        }
    }
}

int hidden_units() { return 128; }

namespace {

Parameter init_conv(const std::string& name, int out_ch, int in_ch, int k, std::uint64_t seed) {
    Rng rng(stream_seed(seed, name));
    const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
    Tensor w(Shape{out_ch, in_ch, k, k}, 0.0);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.normal(0.0, std_dev);
    return Parameter(std::move(w), name);
}

Parameter init_linear(const std::string& name, int out_f, int in_f, std::uint64_t seed) {
    Rng rng(stream_seed(seed, name));
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_f));
    Tensor w(Shape{out_f, in_f}, 0.0);
    for (std::int64_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
    return Parameter(std::move(w), name);
}

Parameter zero_bias(const std::string& name, int n) { return Parameter(Tensor(Shape{n}, 0.0), name); }

ConvParams make_conv(const std::string& prefix, int out_ch, int in_ch, int k, std::uint64_t seed) {
    return ConvParams{init_conv(prefix + ".weight", out_ch, in_ch, k, seed), zero_bias(prefix + ".bias", out_ch)};
}

BottleneckUnit make_bottleneck(const std::string& prefix, int in_ch, int out_ch, int down_stride,
                               std::uint64_t seed, int source_stage) {
    if (in_ch % 4 != 0) {
        throw std::invalid_argument("fusion path channel count " + std::to_string(in_ch) + " at stage " +
                                    std::to_string(source_stage) + " is not divisible by 4");
    }
    const int mid = in_ch / 4;
    BottleneckUnit unit;
    unit.reduce = make_conv(prefix + ".reduce", mid, in_ch, 1, seed);
    unit.down = make_conv(prefix + ".down", mid, mid, 3, seed);
    unit.expand = make_conv(prefix + ".expand", out_ch, mid, 1, seed);
    unit.down_stride = down_stride;
    return unit;
}

}  // namespace

ModelParams build(const BackboneConfig& config, int num_heads, const std::vector<bool>& path_mask,
                  std::uint64_t seed, const std::vector<std::string>& head_ids) {
    config.validate();
    if (num_heads < 1) throw std::invalid_argument("build: num_heads must be >= 1");
    const int n_stages = config.num_stages();
    if (static_cast<int>(path_mask.size()) != n_stages - 1) {
        throw std::invalid_argument("build: path_mask must have one flag per origin stage (" +
                                    std::to_string(n_stages - 1) + "), got " + std::to_string(path_mask.size()));
    }
    if (!head_ids.empty() && static_cast<int>(head_ids.size()) != num_heads) {
        throw std::invalid_argument("build: head_ids count does not match num_heads");
    }

    ModelParams model;
    model.config = config;
    model.path_mask = path_mask;
    model.seed = seed;

    model.stem = make_conv("stem", config.stem_channels, config.input_channels, 3, seed);

    for (int s = 1; s <= n_stages; ++s) {
        const StageSpec& spec = config.stages[static_cast<std::size_t>(s - 1)];
        std::vector<ConvParams> blocks;
        int in_ch = config.stage_in_channels(s);
        for (int b = 1; b <= spec.blocks; ++b) {
            const std::string prefix = "stage" + std::to_string(s) + ".block" + std::to_string(b);
            blocks.push_back(make_conv(prefix, spec.out_channels, in_ch, 3, seed));
            in_ch = spec.out_channels;
        }
        model.stage_blocks.push_back(std::move(blocks));
    }

    for (int origin = 1; origin <= n_stages - 1; ++origin) {
        if (!path_mask[static_cast<std::size_t>(origin - 1)]) continue;
        FusionPath path;
        path.origin = origin;
        for (int j = origin; j <= n_stages - 1; ++j) {
            const std::string prefix = "path" + std::to_string(origin) + ".unit" + std::to_string(j);
            const int in_ch = config.stage_out_channels(j);
            const int out_ch = config.stage_out_channels(j + 1);
            const int stride = config.stages[static_cast<std::size_t>(j)].downsample ? 2 : 1;
            path.units.push_back(make_bottleneck(prefix, in_ch, out_ch, stride, seed, j));
        }
        model.paths.push_back(std::move(path));
    }

    const int pooled = config.stage_out_channels(n_stages);
    for (int h = 1; h <= num_heads; ++h) {
        const std::string prefix = "head" + std::to_string(h);
        RegressorHead head;
        head.fc1.weight = init_linear(prefix + ".fc1.weight", hidden_units(), pooled, seed);
        head.fc1.bias = zero_bias(prefix + ".fc1.bias", hidden_units());
        head.fc2.weight = init_linear(prefix + ".fc2.weight", 1, hidden_units(), seed);
        head.fc2.bias = zero_bias(prefix + ".fc2.bias", 1);
        head.database_id = head_ids.empty() ? prefix : head_ids[static_cast<std::size_t>(h - 1)];
        model.heads.push_back(std::move(head));
    }
    return model;
}

std::vector<Parameter*> ModelParams::shared_params() {
    std::vector<Parameter*> out;
    out.push_back(&stem.weight);
    out.push_back(&stem.bias);
    for (auto& stage : stage_blocks)
        for (auto& block : stage) {
            out.push_back(&block.weight);
            out.push_back(&block.bias);
        }
    for (auto& path : paths)
        for (auto& unit : path.units)
            for (ConvParams* conv : {&unit.reduce, &unit.down, &unit.expand}) {
                out.push_back(&conv->weight);
                out.push_back(&conv->bias);
            }
    return out;
}

std::vector<Parameter*> ModelParams::head_params(int head) {
    if (head < 0 || head >= num_heads()) {
        throw std::invalid_argument("head index " + std::to_string(head) + " out of range, have " +
                                    std::to_string(num_heads()) + " heads");
    }
    RegressorHead& h = heads[static_cast<std::size_t>(head)];
    return {&h.fc1.weight, &h.fc1.bias, &h.fc2.weight, &h.fc2.bias};
}

std::vector<Parameter*> ModelParams::all_params() {
    std::vector<Parameter*> out = shared_params();
    for (int h = 0; h < num_heads(); ++h) {
        for (Parameter* p : head_params(h)) out.push_back(p);
    }
    return out;
}

std::vector<const Parameter*> ModelParams::all_params() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<ModelParams*>(this)->all_params()) out.push_back(p);
    return out;
}

Parameter* ModelParams::find_param(const std::string& name) {
    for (Parameter* p : all_params()) {
        if (p->name == name) return p;
    }
    return nullptr;
}

ModelParams ModelParams::clone() const {
    std::vector<std::string> ids;
    for (const RegressorHead& h : heads) ids.push_back(h.database_id);
    ModelParams copy = build(config, num_heads(), path_mask, seed, ids);
    auto src = all_params();
    auto dst = copy.all_params();
    for (std::size_t i = 0; i < src.size(); ++i) {
        dst[i]->value.values() = src[i]->value.values();
        dst[i]->adam = src[i]->adam;
    }
    return copy;
}

std::vector<std::vector<double>> ModelParams::snapshot_values() const {
    std::vector<std::vector<double>> snap;
    for (const Parameter* p : all_params()) snap.push_back(p->value.values());
    return snap;
}

void ModelParams::restore_values(const std::vector<std::vector<double>>& snapshot) {
    auto params = all_params();
    if (params.size() != snapshot.size()) throw std::invalid_argument("restore_values: snapshot size mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.values().size() != snapshot[i].size()) {
            throw std::invalid_argument("restore_values: shape mismatch for " + params[i]->name);
        }
        params[i]->value.values() = snapshot[i];
    }
}

// ---- forward ------------------------------------------------------------------

namespace {

Tensor conv_block(const ConvParams& conv, const Tensor& x, int stride) {
    return relu(conv2d(x, conv.weight.value, conv.bias.value, stride, 1));
}

}  // namespace

FeatureMaps backbone_forward(const ModelParams& params, const Tensor& images) {
    const BackboneConfig& cfg = params.config;
    if (!images.defined() || images.rank() != 4 || images.dim(1) != cfg.input_channels) {
        throw std::invalid_argument("backbone_forward expects [N," + std::to_string(cfg.input_channels) +
                                    ",H,W] images");
    }
    std::int64_t h = images.dim(2), w = images.dim(3);
    if (h < 1 || w < 1) throw std::invalid_argument("backbone_forward: empty image plane");

    Tensor x = conv_block(params.stem, images, 1);

    FeatureMaps features;
    for (int s = 1; s <= cfg.num_stages(); ++s) {
        const StageSpec& spec = cfg.stages[static_cast<std::size_t>(s - 1)];
        const int first_stride = spec.downsample ? 2 : 1;
        const std::int64_t h_out = (h + 2 - 3) / first_stride + 1;
        const std::int64_t w_out = (w + 2 - 3) / first_stride + 1;
        if (h_out < 1 || w_out < 1) {
            throw std::invalid_argument("input too small: stage " + std::to_string(s) +
                                        " would produce an empty feature map");
        }
        const auto& blocks = params.stage_blocks[static_cast<std::size_t>(s - 1)];
        for (std::size_t b = 0; b < blocks.size(); ++b) {
            const int stride = b == 0 ? first_stride : 1;
            const bool skip = cfg.residual_blocks && stride == 1 &&
                              x.dim(1) == blocks[b].weight.value.dim(0);
            if (skip) {
                x = relu(add(conv2d(x, blocks[b].weight.value, blocks[b].bias.value, 1, 1), x));
            } else {
                x = conv_block(blocks[b], x, stride);
            }
        }
        h = h_out;
        w = w_out;
        features.stages.push_back(x);
    }
    return features;
}

Tensor bottleneck_downfuse(const BottleneckUnit& unit, const Tensor& x) {
    if (x.rank() != 4 || x.dim(1) != unit.reduce.weight.value.dim(1)) {
        throw std::invalid_argument("bottleneck_downfuse: expected " +
                                    std::to_string(unit.reduce.weight.value.dim(1)) + " channels, got " +
                                    shape_str(x.shape()));
    }
    Tensor y = relu(conv2d(x, unit.reduce.weight.value, unit.reduce.bias.value, 1, 0));
    y = relu(conv2d(y, unit.down.weight.value, unit.down.bias.value, unit.down_stride, 1));
    return conv2d(y, unit.expand.weight.value, unit.expand.bias.value, 1, 0);
}

Tensor staircase_fuse(const ModelParams& params, const FeatureMaps& features) {
    const int n_stages = params.config.num_stages();
    if (static_cast<int>(features.stages.size()) != n_stages) {
        throw std::invalid_argument("staircase_fuse: expected " + std::to_string(n_stages) + " stage features, got " +
                                    std::to_string(features.stages.size()));
    }
    const Tensor& last = features.stages[static_cast<std::size_t>(n_stages - 1)];
    if (params.paths.empty()) return last;

    Tensor acc;
    for (const FusionPath& path : params.paths) {
        // Climb the chain: merge each intermediate stage by addition, then a
        // final unit brings the result onto the last stage's shape.
        Tensor chain = features.stages[static_cast<std::size_t>(path.origin - 1)];
        for (int j = path.origin; j <= n_stages - 2; ++j) {
            const BottleneckUnit& unit = path.units[static_cast<std::size_t>(j - path.origin)];
            chain = add(bottleneck_downfuse(unit, chain), features.stages[static_cast<std::size_t>(j)]);
        }
        Tensor contribution = bottleneck_downfuse(path.units.back(), chain);
        acc = acc.defined() ? add(acc, contribution) : contribution;
    }
    return add(acc, last);
}

Tensor regress(const ModelParams& params, const Tensor& fused, int head) {
    if (head < 0 || head >= params.num_heads()) {
        throw std::invalid_argument("regress: head index " + std::to_string(head) + " out of range, have " +
                                    std::to_string(params.num_heads()) + " heads");
    }
    const RegressorHead& h = params.heads[static_cast<std::size_t>(head)];
    Tensor v = global_avg_pool(fused);
    if (v.dim(1) != h.fc1.weight.value.dim(1)) {
        throw std::invalid_argument("regress: pooled width " + std::to_string(v.dim(1)) +
                                    " does not match fc1 input " + std::to_string(h.fc1.weight.value.dim(1)));
    }
    v = relu(linear(v, h.fc1.weight.value, h.fc1.bias.value));
    v = linear(v, h.fc2.weight.value, h.fc2.bias.value);
    return reshape(v, Shape{v.dim(0)});
}

Tensor forward(const ModelParams& params, const Tensor& images, int head) {
    const FeatureMaps features = backbone_forward(params, images);
    const Tensor fused = staircase_fuse(params, features);
    return regress(params, fused, head);
}

}  // namespace stairiqa
