#include "stairiqa/preprocess.hpp"

#include <stdexcept>

namespace stairiqa {

void PreprocessConfig::validate() const {
    if (crop < 1) throw std::invalid_argument("preprocess: crop must be >= 1");
    if (resize_min_dim < 0) throw std::invalid_argument("preprocess: resize_min_dim must be >= 0");
    if (resize_min_dim > 0 && crop > resize_min_dim) {
        throw std::invalid_argument("preprocess: crop " + std::to_string(crop) +
                                    " exceeds resize_min_dim " + std::to_string(resize_min_dim));
    }
    if (white_fill_hw) {
        if (white_fill_hw->first < crop || white_fill_hw->second < crop) {
            throw std::invalid_argument("preprocess: crop exceeds white-fill canvas");
        }
    }
    for (double s : normalize_std) {
        if (s <= 0.0) throw std::invalid_argument("preprocess: normalize_std must be positive");
    }
}

ImageF prepare(const ImageF& raw, const PreprocessConfig& config) {
    if (config.white_fill_hw) {
        return white_fill(raw, config.white_fill_hw->first, config.white_fill_hw->second);
    }
    if (config.resize_min_dim > 0) {
        return resize_min_dim(raw, config.resize_min_dim);
    }
    return raw;
}

Tensor image_to_tensor(const ImageF& img, const PreprocessConfig& config) {
    const std::int64_t h = img.height, w = img.width;
    Tensor out(Shape{3, h, w}, 0.0);
    double* d = out.data();
    for (int c = 0; c < 3; ++c) {
        const double mean = config.normalize_mean[static_cast<std::size_t>(c)];
        const double inv_std = 1.0 / config.normalize_std[static_cast<std::size_t>(c)];
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x)
                d[(c * h + y) * w + x] = (img.at(static_cast<int>(y), static_cast<int>(x), c) - mean) * inv_std;
    }
    return out;
}

Tensor stack_images(const std::vector<ImageF>& images, const PreprocessConfig& config) {
    if (images.empty()) throw std::invalid_argument("stack_images: empty batch");
    const int h = images[0].height, w = images[0].width;
    Tensor out(Shape{static_cast<std::int64_t>(images.size()), 3, h, w}, 0.0);
    const std::int64_t stride = static_cast<std::int64_t>(3) * h * w;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].height != h || images[i].width != w) {
            throw std::invalid_argument("stack_images: mismatched image sizes in batch");
        }
        const Tensor t = image_to_tensor(images[i], config);
        std::copy(t.data(), t.data() + stride, out.data() + static_cast<std::int64_t>(i) * stride);
    }
    return out;
}

const ImageF& ImageStore::prepared(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    const ImageF raw = to_float(read_ppm(path));
    return cache_.emplace(path, prepare(raw, config_)).first->second;
}

}  // namespace stairiqa
