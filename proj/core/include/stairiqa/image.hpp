#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stairiqa/rng.hpp"

namespace stairiqa {

// 8-bit interleaved RGB image, the on-disk representation (binary PPM, P6).
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;  // height*width*3, row-major, interleaved

    std::uint8_t& at(int y, int x, int c) { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    std::uint8_t at(int y, int x, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
};

// Real-valued working image, samples in [0,1] until normalization.
struct ImageF {
    int width = 0;
    int height = 0;
    std::vector<double> rgb;  // height*width*3, row-major, interleaved

    ImageF() = default;
    ImageF(int w, int h, double fill = 0.0)
        : width(w), height(h), rgb(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int y, int x, int c) { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
    double at(int y, int x, int c) const { return rgb[static_cast<std::size_t>((y * width + x) * 3 + c)]; }
};

ImageF to_float(const ImageU8& img);
ImageU8 to_u8(const ImageF& img);  // clamps to [0,1], rounds to nearest

// Binary PPM (P6, maxval 255) codec. Round-trips bit-exactly.
std::vector<std::uint8_t> encode_ppm(const ImageU8& img);
ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes);
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

// Bilinear resize to exactly (out_width, out_height).
ImageF resize(const ImageF& img, int out_width, int out_height);

// Scales so the smaller dimension equals target, aspect ratio preserved
// (other dimension rounded to nearest, never below target).
ImageF resize_min_dim(const ImageF& img, int target);

// Centers the image on a white canvas of (height, width); larger images are
// first resized to fit while preserving aspect.
ImageF white_fill(const ImageF& img, int height, int width);

ImageF crop(const ImageF& img, int top, int left, int size);
ImageF random_crop(const ImageF& img, int size, Rng& rng);

struct CropOffsets {
    int top, left;
};
// Four corners plus center; floor offsets for odd remainders.
std::vector<CropOffsets> five_crop_offsets(int height, int width, int size);
std::vector<ImageF> five_crop(const ImageF& img, int size);

// Arithmetic mean of exactly five per-crop scores.
double score_aggregate(const std::vector<double>& scores);

// Test/observability hook: invoked with every image path read from disk.
using ImageAccessLogger = void (*)(const std::string& path);
void set_image_access_logger(ImageAccessLogger logger);

}  // namespace stairiqa
