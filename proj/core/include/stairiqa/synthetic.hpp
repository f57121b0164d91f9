#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stairiqa/dataset.hpp"
#include "stairiqa/image.hpp"

namespace stairiqa {

// Parameter ranges for one generated database. Distortion strength is a single
// draw u in [0,1] per image; every family is applied at u times its maximum, so
// quality degrades along several visual axes at once.
struct SyntheticDbSpec {
    std::string id;
    int images = 100;
    double blur_max = 2.5;        // box-blur radius at u = 1
    double noise_max = 0.22;      // additive Gaussian sigma at u = 1 (samples in [0,1])
    double quant_max = 0.8;       // blend weight of 4x4 block means at u = 1
    double mos_scale = 1.0;       // per-database rescaling of the raw 0-100 score
    double mos_offset = 0.0;
};

struct SyntheticSpec {
    std::uint64_t seed = 1234;
    int base_resolution = 32;
    int variants_per_scene = 2;  // images sharing one scene (and group_id)
    std::vector<SyntheticDbSpec> databases;

    // Three databases sized 200/100/50 with distinct distortion emphases and
    // MOS scales; small enough to train against on one CPU core.
    static SyntheticSpec desk_default();

    static SyntheticSpec from_json_text(const std::string& text, const std::string& origin = "<spec>");
    static SyntheticSpec load(const std::string& path);
    std::string to_json_text() const;
};

struct GeneratedDatabase {
    std::string manifest_path;
    std::string magnitudes_path;  // sidecar CSV image_path,magnitude
    DatasetManifest manifest;
};

// Renders procedural scenes, applies seeded distortions, writes PPM images,
// a manifest and a ground-truth magnitude sidecar per database under out_dir.
// Byte-for-byte deterministic in the spec.
std::vector<GeneratedDatabase> gen_synthetic_db(const SyntheticSpec& spec, const std::string& out_dir);

// Scene rendering and distortion primitives, exposed for tests.
ImageF render_scene(int resolution, Rng& rng);
ImageF apply_distortion(const ImageF& img, double u, const SyntheticDbSpec& db, Rng& rng);

}  // namespace stairiqa
