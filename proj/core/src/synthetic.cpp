#include "stairiqa/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "stairiqa/text.hpp"

namespace fs = std::filesystem;

namespace stairiqa {

SyntheticSpec SyntheticSpec::desk_default() {
    SyntheticSpec spec;
    spec.seed = 1234;
    spec.base_resolution = 32;
    spec.variants_per_scene = 2;
    spec.databases = {
        // Largest database: mixed distortions, raw 0-100 MOS.
        {"synth_a", 200, 2.5, 0.22, 0.8, 1.0, 0.0},
        // Blur-heavy mid-size database on a compressed, shifted scale.
        {"synth_b", 100, 3.5, 0.12, 0.5, 0.8, 20.0},
        // Small noise-heavy database on a further compressed scale.
        {"synth_c", 50, 1.5, 0.30, 0.9, 0.6, 40.0},
    };
    return spec;
}

SyntheticSpec SyntheticSpec::from_json_text(const std::string& text, const std::string& origin) {
    nlohmann::json root;
    try {
        root = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(origin + ": invalid JSON: " + e.what());
    }
    SyntheticSpec spec = desk_default();
    spec.databases.clear();
    try {
        for (const auto& [key, value] : root.items()) {
            static const std::set<std::string> known = {"seed", "base_resolution", "variants_per_scene", "databases"};
            if (!known.count(key)) throw std::invalid_argument(origin + ": unknown key \"" + key + "\"");
        }
        if (root.contains("seed")) spec.seed = root.at("seed").get<std::uint64_t>();
        if (root.contains("base_resolution")) spec.base_resolution = root.at("base_resolution").get<int>();
        if (root.contains("variants_per_scene")) spec.variants_per_scene = root.at("variants_per_scene").get<int>();
        if (!root.contains("databases")) throw std::invalid_argument(origin + ": missing \"databases\"");
        for (const nlohmann::json& d : root.at("databases")) {
            for (const auto& [key, value] : d.items()) {
                static const std::set<std::string> known = {"id",        "images",    "blur_max", "noise_max",
                                                            "quant_max", "mos_scale", "mos_offset"};
                if (!known.count(key)) throw std::invalid_argument(origin + ": unknown database key \"" + key + "\"");
            }
            SyntheticDbSpec db;
            db.id = d.at("id").get<std::string>();
            db.images = d.at("images").get<int>();
            if (d.contains("blur_max")) db.blur_max = d.at("blur_max").get<double>();
            if (d.contains("noise_max")) db.noise_max = d.at("noise_max").get<double>();
            if (d.contains("quant_max")) db.quant_max = d.at("quant_max").get<double>();
            if (d.contains("mos_scale")) db.mos_scale = d.at("mos_scale").get<double>();
            if (d.contains("mos_offset")) db.mos_offset = d.at("mos_offset").get<double>();
            spec.databases.push_back(std::move(db));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(origin + ": " + e.what());
    }
    return spec;
}

SyntheticSpec SyntheticSpec::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open synthetic spec: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text, path);
}

std::string SyntheticSpec::to_json_text() const {
    nlohmann::json dbs = nlohmann::json::array();
    for (const SyntheticDbSpec& db : databases) {
        dbs.push_back({{"id", db.id},
                       {"images", db.images},
                       {"blur_max", db.blur_max},
                       {"noise_max", db.noise_max},
                       {"quant_max", db.quant_max},
                       {"mos_scale", db.mos_scale},
                       {"mos_offset", db.mos_offset}});
    }
    return nlohmann::json{{"seed", seed},
                          {"base_resolution", base_resolution},
                          {"variants_per_scene", variants_per_scene},
                          {"databases", dbs}}
        .dump(2);
}

namespace {

void fill_gradient(ImageF& img, Rng& rng) {
    double c0[3], c1[3];
    for (int c = 0; c < 3; ++c) {
        c0[c] = rng.uniform(0.1, 0.9);
        c1[c] = rng.uniform(0.1, 0.9);
    }
    const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    const double dx = std::cos(angle), dy = std::sin(angle);
    const double diag = std::hypot(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double t = 0.5 + (x * dx + y * dy) / diag;
            const double w = std::clamp(t, 0.0, 1.0);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = c0[c] * (1.0 - w) + c1[c] * w;
        }
}

void draw_shapes(ImageF& img, Rng& rng) {
    const int count = 2 + static_cast<int>(rng.uniform_int(4));
    for (int s = 0; s < count; ++s) {
        double col[3];
        for (int c = 0; c < 3; ++c) col[c] = rng.uniform(0.05, 0.95);
        const bool circle = rng.uniform() < 0.5;
        const int cx = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width)));
        const int cy = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.height)));
        const int r = 2 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(img.width / 3)));
        for (int y = std::max(0, cy - r); y < std::min(img.height, cy + r + 1); ++y)
            for (int x = std::max(0, cx - r); x < std::min(img.width, cx + r + 1); ++x) {
                const bool inside = circle ? (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r : true;
                if (inside)
                    for (int c = 0; c < 3; ++c) img.at(y, x, c) = col[c];
            }
    }
}

// Smooth value noise: bilinear interpolation of a coarse random lattice, a
// cheap stand-in for natural texture.
void add_texture(ImageF& img, Rng& rng) {
    const int cell = 4;
    const int gw = img.width / cell + 2, gh = img.height / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
    for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
    const double amp = rng.uniform(0.03, 0.10);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const double fx = static_cast<double>(x) / cell, fy = static_cast<double>(y) / cell;
            const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy);
            const double wx = fx - x0, wy = fy - y0;
            const auto lat = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
            const double v = (lat(y0, x0) * (1 - wx) + lat(y0, x0 + 1) * wx) * (1 - wy) +
                             (lat(y0 + 1, x0) * (1 - wx) + lat(y0 + 1, x0 + 1) * wx) * wy;
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = std::clamp(img.at(y, x, c) + amp * v, 0.0, 1.0);
        }
}

ImageF box_blur(const ImageF& img, int radius) {
    if (radius < 1) return img;
    ImageF tmp(img.width, img.height);
    const double inv = 1.0 / (2 * radius + 1);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int xx = std::clamp(x + k, 0, img.width - 1);
                    acc += img.at(y, xx, c);
                }
                tmp.at(y, x, c) = acc * inv;
            }
    ImageF out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < 3; ++c) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    const int yy = std::clamp(y + k, 0, img.height - 1);
                    acc += tmp.at(yy, x, c);
                }
                out.at(y, x, c) = acc * inv;
            }
    return out;
}

ImageF block_quantize(const ImageF& img, double weight) {
    const int cell = 4;
    ImageF out = img;
    for (int by = 0; by < img.height; by += cell)
        for (int bx = 0; bx < img.width; bx += cell) {
            const int y1 = std::min(by + cell, img.height), x1 = std::min(bx + cell, img.width);
            double mean[3] = {0, 0, 0};
            const double n = static_cast<double>((y1 - by) * (x1 - bx));
            for (int y = by; y < y1; ++y)
                for (int x = bx; x < x1; ++x)
                    for (int c = 0; c < 3; ++c) mean[c] += img.at(y, x, c);
            for (double& m : mean) m /= n;
            for (int y = by; y < y1; ++y)
                for (int x = bx; x < x1; ++x)
                    for (int c = 0; c < 3; ++c)
                        out.at(y, x, c) = (1.0 - weight) * img.at(y, x, c) + weight * mean[c];
        }
    return out;
}

}  // namespace

ImageF render_scene(int resolution, Rng& rng) {
    ImageF img(resolution, resolution);
    fill_gradient(img, rng);
    draw_shapes(img, rng);
    add_texture(img, rng);
    return img;
}

ImageF apply_distortion(const ImageF& img, double u, const SyntheticDbSpec& db, Rng& rng) {
    ImageF out = img;
    // Fractional blur: blend the two neighbouring integer radii so the cue
    // moves continuously with u instead of in radius-sized steps.
    const double blur = u * db.blur_max;
    if (blur > 0.0) {
        const int r0 = static_cast<int>(blur);
        const double frac = blur - r0;
        const ImageF b0 = box_blur(out, r0);
        if (frac > 0.0) {
            const ImageF b1 = box_blur(out, r0 + 1);
            for (std::size_t i = 0; i < out.rgb.size(); ++i) {
                out.rgb[i] = (1.0 - frac) * b0.rgb[i] + frac * b1.rgb[i];
            }
        } else {
            out = b0;
        }
    }
    const double quant = u * db.quant_max;
    if (quant > 0.0) out = block_quantize(out, quant);
    const double sigma = u * db.noise_max;
    if (sigma > 0.0) {
        for (double& v : out.rgb) v = std::clamp(v + sigma * rng.normal(), 0.0, 1.0);
    }
    return out;
}

std::vector<GeneratedDatabase> gen_synthetic_db(const SyntheticSpec& spec, const std::string& out_dir) {
    if (spec.base_resolution < 8) throw std::invalid_argument("synthetic base_resolution must be >= 8");
    if (spec.variants_per_scene < 1) throw std::invalid_argument("variants_per_scene must be >= 1");
    if (spec.databases.empty()) throw std::invalid_argument("synthetic spec has no databases");

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir + ": " + ec.message());

    std::vector<GeneratedDatabase> result;
    for (const SyntheticDbSpec& db : spec.databases) {
        if (db.images < 1) throw std::invalid_argument(db.id + ": images must be >= 1");
        const fs::path db_dir = fs::path(out_dir) / db.id;
        const fs::path img_dir = db_dir / "images";
        fs::create_directories(img_dir, ec);
        if (ec) throw std::runtime_error("cannot create " + img_dir.string() + ": " + ec.message());

        DatasetManifest manifest;
        manifest.database_id = db.id;
        manifest.score_min = db.mos_offset;
        manifest.score_max = db.mos_scale * 100.0 + db.mos_offset;

        std::ofstream sidecar(db_dir / "magnitudes.csv", std::ios::trunc);
        sidecar << "image_path,magnitude\n";

        for (int i = 0; i < db.images; ++i) {
            const int scene = i / spec.variants_per_scene;
            Rng scene_rng(stream_seed(spec.seed, db.id + "/scene" + std::to_string(scene)));
            ImageF base = render_scene(spec.base_resolution, scene_rng);

            Rng img_rng(stream_seed(spec.seed, db.id + "/img" + std::to_string(i)));
            // First image of each database is the clean anchor.
            const double u = i == 0 ? 0.0 : img_rng.uniform();
            ImageF distorted = apply_distortion(base, u, db, img_rng);

            const double jitter = img_rng.uniform(-2.0, 2.0);
            const double mos = db.mos_scale * (100.0 * (1.0 - u) + jitter) + db.mos_offset;

            char name[32];
            std::snprintf(name, sizeof(name), "img_%04d.ppm", i);
            const fs::path img_path = img_dir / name;
            write_ppm(img_path.string(), to_u8(distorted));

            ManifestEntry entry;
            entry.image_path = img_path.string();
            entry.mos = mos;
            entry.group_id = "scene" + std::to_string(scene);
            manifest.entries.push_back(std::move(entry));
            sidecar << "images/" << name << ',' << double_to_string(u) << '\n';
        }
        if (!sidecar) throw std::runtime_error("write failed: " + (db_dir / "magnitudes.csv").string());
        sidecar.close();

        GeneratedDatabase gen;
        gen.manifest_path = (db_dir / "manifest.csv").string();
        gen.magnitudes_path = (db_dir / "magnitudes.csv").string();
        save_manifest(gen.manifest_path, manifest);
        gen.manifest = std::move(manifest);
        result.push_back(std::move(gen));
    }
    return result;
}

}  // namespace stairiqa
