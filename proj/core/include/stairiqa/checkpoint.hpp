#pragma once

#include <optional>
#include <string>

#include "stairiqa/net.hpp"
#include "stairiqa/preprocess.hpp"

namespace stairiqa {

// Binary checkpoint: "SIQA" magic, u16 format version, length-prefixed JSON
// config document, then one record per parameter (name, rank, extents as u64,
// row-major little-endian 64-bit floats). Round-trips bit-exactly.
//
// The config document also carries the preprocessing settings the model was
// trained with, so scoring tools need nothing but the checkpoint.
struct Checkpoint {
    ModelParams model;
    std::optional<PreprocessConfig> preprocess;
};

void save_checkpoint(const std::string& path, const ModelParams& model,
                     const std::optional<PreprocessConfig>& preprocess = std::nullopt);
Checkpoint load_checkpoint_full(const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace stairiqa
