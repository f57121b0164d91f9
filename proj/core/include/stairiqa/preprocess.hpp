#pragma once

#include <array>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stairiqa/image.hpp"
#include "stairiqa/tensor.hpp"

namespace stairiqa {

struct PreprocessConfig {
    int resize_min_dim = 380;  // 0 disables resizing
    int crop = 320;            // training random-crop size; evaluation uses five-crop of the same size
    std::optional<std::pair<int, int>> white_fill_hw;  // replaces the resize step when set
    std::array<double, 3> normalize_mean{0.5, 0.5, 0.5};
    std::array<double, 3> normalize_std{0.5, 0.5, 0.5};

    void validate() const;
};

// White-fill or min-dim resize, whichever the config selects.
ImageF prepare(const ImageF& raw, const PreprocessConfig& config);

// [3,H,W] tensor with per-channel normalization applied.
Tensor image_to_tensor(const ImageF& img, const PreprocessConfig& config);

// Stacks equally-sized images into one [N,3,H,W] batch.
Tensor stack_images(const std::vector<ImageF>& images, const PreprocessConfig& config);

// Decode + prepare cache. One store per run; entries depend only on
// (path, config), so reuse across epochs is exact.
class ImageStore {
public:
    explicit ImageStore(PreprocessConfig config) : config_(std::move(config)) {}

    const PreprocessConfig& config() const { return config_; }
    const ImageF& prepared(const std::string& path);
    void clear() { cache_.clear(); }

private:
    PreprocessConfig config_;
    std::unordered_map<std::string, ImageF> cache_;
};

}  // namespace stairiqa
