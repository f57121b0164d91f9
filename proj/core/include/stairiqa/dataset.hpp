#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stairiqa/rng.hpp"

namespace stairiqa {

struct ManifestEntry {
    std::string image_path;
    double mos = 0.0;
    std::string group_id;
};

// One IQA database: image paths, MOS labels, content-group ids.
struct DatasetManifest {
    std::string database_id;
    std::vector<ManifestEntry> entries;
    double score_min = 0.0;
    double score_max = 100.0;

    std::int64_t size() const { return static_cast<std::int64_t>(entries.size()); }
    std::vector<std::string> group_ids_in_order() const;
};

// CSV with header image_path,mos,group_id. Paths are resolved relative to the
// manifest file's directory; entries must reference existing files.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const std::string& path, const DatasetManifest& manifest);

// Content-aware 80/20 split: groups are shuffled by seed and assigned to the
// training side until it holds at least 80% of the images. No group straddles
// the boundary.
std::pair<DatasetManifest, DatasetManifest> split_80_20(const DatasetManifest& manifest, std::uint64_t seed);

// Same mechanism with a configurable training fraction (used to carve a
// validation set out of a training split).
std::pair<DatasetManifest, DatasetManifest> split_by_group(const DatasetManifest& manifest, double train_fraction,
                                                           std::uint64_t seed);

}  // namespace stairiqa
