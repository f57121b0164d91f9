#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stairiqa/tensor.hpp"

namespace stairiqa {

struct StageSpec {
    int blocks = 1;
    int out_channels = 8;
    bool downsample = true;
};

struct BackboneConfig {
    int input_channels = 3;
    int stem_channels = 8;
    bool residual_blocks = false;  // adds identity skips on stride-1 blocks
    std::vector<StageSpec> stages;

    int num_stages() const { return static_cast<int>(stages.size()); }
    // Input channel count of stage i (1-based).
    int stage_in_channels(int stage) const;
    int stage_out_channels(int stage) const { return stages[static_cast<std::size_t>(stage - 1)].out_channels; }
    void validate() const;
};

struct ConvParams {
    Parameter weight;
    Parameter bias;
};

struct LinearParams {
    Parameter weight;
    Parameter bias;
};

// 1x1 reduce (C -> C/4) -> ReLU -> 3x3 (stride matches the destination
// stage) -> ReLU -> 1x1 expand (C/4 -> C_next). Maps a stage-j feature map
// onto the stage-(j+1) shape so the two can be added.
struct BottleneckUnit {
    ConvParams reduce;
    ConvParams down;
    ConvParams expand;
    int down_stride = 2;
};

// Fusion chain originating at one stage: units for every hop up to and
// including the final stage.
struct FusionPath {
    int origin = 1;  // 1-based stage index
    std::vector<BottleneckUnit> units;
};

// Two fully connected layers (P -> 128 -> 1) mapping pooled features to one
// database's quality scale.
struct RegressorHead {
    LinearParams fc1;
    LinearParams fc2;
    std::string database_id;
};

struct FeatureMaps {
    std::vector<Tensor> stages;  // F_1 .. F_Ns
};

class ModelParams {
public:
    ModelParams() = default;
    ModelParams(const ModelParams&) = delete;
    ModelParams& operator=(const ModelParams&) = delete;
    ModelParams(ModelParams&&) = default;
    ModelParams& operator=(ModelParams&&) = default;

    BackboneConfig config;
    std::vector<bool> path_mask;  // origins 1..Ns-1
    std::uint64_t seed = 0;

    ConvParams stem;
    std::vector<std::vector<ConvParams>> stage_blocks;
    std::vector<FusionPath> paths;  // enabled origins only, ascending
    std::vector<RegressorHead> heads;

    int num_heads() const { return static_cast<int>(heads.size()); }

    // Shared extractor parameters (backbone + fusion paths).
    std::vector<Parameter*> shared_params();
    std::vector<Parameter*> head_params(int head);
    std::vector<Parameter*> all_params();
    std::vector<const Parameter*> all_params() const;
    Parameter* find_param(const std::string& name);

    ModelParams clone() const;

    // Flat copies of every parameter's values, in all_params() order.
    std::vector<std::vector<double>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<double>>& snapshot);
};

// Seeded fan-in-scaled initialization. Each parameter draws from its own
// (seed, name) stream, so identical names get identical values regardless of
// which other parameters exist.
ModelParams build(const BackboneConfig& config, int num_heads, const std::vector<bool>& path_mask,
                  std::uint64_t seed, const std::vector<std::string>& head_ids = {});

int hidden_units();  // fc1 width

FeatureMaps backbone_forward(const ModelParams& params, const Tensor& images);
Tensor bottleneck_downfuse(const BottleneckUnit& unit, const Tensor& x);
Tensor staircase_fuse(const ModelParams& params, const FeatureMaps& features);
Tensor regress(const ModelParams& params, const Tensor& fused, int head);
Tensor forward(const ModelParams& params, const Tensor& images, int head);

}  // namespace stairiqa
