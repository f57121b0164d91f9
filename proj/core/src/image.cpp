#include "stairiqa/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace stairiqa {

namespace {

ImageAccessLogger g_access_logger = nullptr;

void check_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw std::invalid_argument("image dimensions must be >= 1, got " + std::to_string(width) + "x" +
                                    std::to_string(height));
    }
}

}  // namespace

void set_image_access_logger(ImageAccessLogger logger) { g_access_logger = logger; }

ImageF to_float(const ImageU8& img) {
    ImageF out(img.width, img.height);
    for (std::size_t i = 0; i < img.rgb.size(); ++i) out.rgb[i] = static_cast<double>(img.rgb[i]) / 255.0;
    return out;
}

ImageU8 to_u8(const ImageF& img) {
    ImageU8 out;
    out.width = img.width;
    out.height = img.height;
    out.rgb.resize(img.rgb.size());
    for (std::size_t i = 0; i < img.rgb.size(); ++i) {
        const double v = std::clamp(img.rgb[i], 0.0, 1.0) * 255.0;
        out.rgb[i] = static_cast<std::uint8_t>(std::lround(v));
    }
    return out;
}

// ---- PPM codec ---------------------------------------------------------------

std::vector<std::uint8_t> encode_ppm(const ImageU8& img) {
    check_dims(img.width, img.height);
    if (img.rgb.size() != static_cast<std::size_t>(img.width) * img.height * 3) {
        throw std::invalid_argument("image sample buffer size does not match dimensions");
    }
    char header[64];
    const int n = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n", img.width, img.height);
    std::vector<std::uint8_t> bytes(header, header + n);
    bytes.insert(bytes.end(), img.rgb.begin(), img.rgb.end());
    return bytes;
}

namespace {

[[noreturn]] void ppm_error(std::size_t offset, const std::string& what) {
    throw std::runtime_error("ppm: " + what + " at byte " + std::to_string(offset));
}

// Reads one whitespace-delimited unsigned integer; supports '#' comments per
// the PNM grammar.
std::size_t parse_ppm_int(const std::vector<std::uint8_t>& bytes, std::size_t pos, long& out) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) ppm_error(pos, "expected integer");
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
        v = v * 10 + (bytes[pos] - '0');
        if (v > 1000000000L) ppm_error(pos, "integer out of range");
        ++pos;
    }
    out = v;
    return pos;
}

}  // namespace

ImageU8 decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') ppm_error(0, "bad magic, expected P6");
    long width = 0, height = 0, maxval = 0;
    std::size_t pos = parse_ppm_int(bytes, 2, width);
    pos = parse_ppm_int(bytes, pos, height);
    pos = parse_ppm_int(bytes, pos, maxval);
    if (width < 1 || height < 1) ppm_error(pos, "non-positive dimensions");
    if (maxval != 255) ppm_error(pos, "unsupported maxval " + std::to_string(maxval) + ", expected 255");
    if (pos >= bytes.size()) ppm_error(pos, "truncated header");
    const char sep = static_cast<char>(bytes[pos]);
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n') ppm_error(pos, "expected whitespace after maxval");
    ++pos;
    const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
    if (bytes.size() - pos < need) ppm_error(bytes.size(), "truncated pixel data");

    ImageU8 img;
    img.width = static_cast<int>(width);
    img.height = static_cast<int>(height);
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                   bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return img;
}

ImageU8 read_ppm(const std::string& path) {
    if (g_access_logger) g_access_logger(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image file: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_ppm(bytes);
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": " + e.what());
    }
}

void write_ppm(const std::string& path, const ImageU8& img) {
    const std::vector<std::uint8_t> bytes = encode_ppm(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open image file for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- geometry ------------------------------------------------------------------

ImageF resize(const ImageF& img, int out_width, int out_height) {
    check_dims(out_width, out_height);
    if (out_width == img.width && out_height == img.height) return img;

    ImageF out(out_width, out_height);
    const double sx = static_cast<double>(img.width) / out_width;
    const double sy = static_cast<double>(img.height) / out_height;
    for (int y = 0; y < out_height; ++y) {
        // Pixel-center mapping; clamped at the borders.
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_width; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = img.at(y0, x0, c) * (1.0 - wx) + img.at(y0, x1, c) * wx;
                const double bot = img.at(y1, x0, c) * (1.0 - wx) + img.at(y1, x1, c) * wx;
                out.at(y, x, c) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return out;
}

ImageF resize_min_dim(const ImageF& img, int target) {
    if (target < 1) throw std::invalid_argument("resize_min_dim target must be >= 1");
    const int min_dim = std::min(img.width, img.height);
    if (min_dim == target) return img;
    const double scale = static_cast<double>(target) / min_dim;
    int out_w, out_h;
    if (img.width <= img.height) {
        out_w = target;
        out_h = std::max(target, static_cast<int>(std::lround(img.height * scale)));
    } else {
        out_h = target;
        out_w = std::max(target, static_cast<int>(std::lround(img.width * scale)));
    }
    return resize(img, out_w, out_h);
}

ImageF white_fill(const ImageF& img, int height, int width) {
    check_dims(width, height);
    ImageF fitted = img;
    if (img.width > width || img.height > height) {
        const double scale = std::min(static_cast<double>(width) / img.width, static_cast<double>(height) / img.height);
        const int w = std::max(1, std::min(width, static_cast<int>(std::lround(img.width * scale))));
        const int h = std::max(1, std::min(height, static_cast<int>(std::lround(img.height * scale))));
        fitted = resize(img, w, h);
    }
    if (fitted.width == width && fitted.height == height) return fitted;

    ImageF out(width, height, 1.0);  // white canvas
    const int top = (height - fitted.height) / 2;
    const int left = (width - fitted.width) / 2;
    for (int y = 0; y < fitted.height; ++y)
        for (int x = 0; x < fitted.width; ++x)
            for (int c = 0; c < 3; ++c) out.at(top + y, left + x, c) = fitted.at(y, x, c);
    return out;
}

ImageF crop(const ImageF& img, int top, int left, int size) {
    if (size < 1 || top < 0 || left < 0 || top + size > img.height || left + size > img.width) {
        throw std::invalid_argument("crop " + std::to_string(size) + "@(" + std::to_string(top) + "," +
                                    std::to_string(left) + ") exceeds image " + std::to_string(img.width) + "x" +
                                    std::to_string(img.height));
    }
    ImageF out(size, size);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(top + y, left + x, c);
    return out;
}

ImageF random_crop(const ImageF& img, int size, Rng& rng) {
    if (size > img.height || size > img.width) {
        throw std::invalid_argument("random_crop size " + std::to_string(size) + " exceeds image " +
                                    std::to_string(img.width) + "x" + std::to_string(img.height));
    }
    const int top = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.height - size + 1)));
    const int left = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width - size + 1)));
    return crop(img, top, left, size);
}

std::vector<CropOffsets> five_crop_offsets(int height, int width, int size) {
    if (size > height || size > width) {
        throw std::invalid_argument("five_crop size " + std::to_string(size) + " exceeds image " +
                                    std::to_string(width) + "x" + std::to_string(height));
    }
    const int bottom = height - size;
    const int right = width - size;
    return {
        {0, 0}, {0, right}, {bottom, 0}, {bottom, right}, {bottom / 2, right / 2},
    };
}

std::vector<ImageF> five_crop(const ImageF& img, int size) {
    std::vector<ImageF> crops;
    crops.reserve(5);
    for (const CropOffsets& o : five_crop_offsets(img.height, img.width, size)) {
        crops.push_back(crop(img, o.top, o.left, size));
    }
    return crops;
}

double score_aggregate(const std::vector<double>& scores) {
    if (scores.size() != 5) {
        throw std::invalid_argument("score_aggregate expects exactly 5 scores, got " + std::to_string(scores.size()));
    }
    double acc = 0.0;
    for (double s : scores) acc += s;
    return acc / 5.0;
}

}  // namespace stairiqa
