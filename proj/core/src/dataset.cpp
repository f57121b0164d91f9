#include "stairiqa/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "stairiqa/text.hpp"

namespace fs = std::filesystem;

namespace stairiqa {

std::vector<std::string> DatasetManifest::group_ids_in_order() const {
    std::vector<std::string> groups;
    std::unordered_set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (seen.insert(e.group_id).second) groups.push_back(e.group_id);
    }
    return groups;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);

    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty manifest");
    {
        const std::vector<std::string> header = split_csv_line(line);
        if (header.size() != 3 || header[0] != "image_path" || header[1] != "mos" || header[2] != "group_id") {
            throw std::runtime_error(path + ": bad header, expected \"image_path,mos,group_id\", got \"" + line + "\"");
        }
    }

    const fs::path base = fs::path(path).parent_path();
    DatasetManifest manifest;
    manifest.database_id = fs::path(path).parent_path().filename().string();
    if (manifest.database_id.empty()) manifest.database_id = fs::path(path).stem().string();
    manifest.score_min = std::numeric_limits<double>::infinity();
    manifest.score_max = -std::numeric_limits<double>::infinity();

    std::unordered_set<std::string> seen_paths;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_csv_line(line);
        if (fields.size() != 3) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected 3 fields, got " +
                                     std::to_string(fields.size()));
        }
        ManifestEntry entry;
        entry.image_path = (base / fields[0]).lexically_normal().string();
        try {
            std::size_t used = 0;
            entry.mos = std::stod(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument(fields[1]);
        } catch (const std::exception&) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad mos value \"" + fields[1] + "\"");
        }
        if (!std::isfinite(entry.mos)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": non-finite mos");
        }
        entry.group_id = fields[2];
        if (entry.group_id.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty group_id");
        }
        if (!seen_paths.insert(entry.image_path).second) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": duplicate image path " + entry.image_path);
        }
        if (!fs::exists(entry.image_path)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": image not found: " + entry.image_path);
        }
        manifest.entries.push_back(std::move(entry));
        manifest.score_min = std::min(manifest.score_min, manifest.entries.back().mos);
        manifest.score_max = std::max(manifest.score_max, manifest.entries.back().mos);
    }
    if (manifest.entries.empty()) throw std::runtime_error(path + ": manifest has no entries");
    return manifest;
}

void save_manifest(const std::string& path, const DatasetManifest& manifest) {
    const fs::path base = fs::path(path).parent_path();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open manifest for writing: " + path);
    out << "image_path,mos,group_id\n";
    for (const ManifestEntry& e : manifest.entries) {
        out << fs::path(e.image_path).lexically_relative(base).generic_string() << ',' << double_to_string(e.mos)
            << ',' << e.group_id << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

std::pair<DatasetManifest, DatasetManifest> split_by_group(const DatasetManifest& manifest, double train_fraction,
                                                           std::uint64_t seed) {
    std::vector<std::string> groups = manifest.group_ids_in_order();
    if (groups.size() < 2) {
        throw std::invalid_argument(manifest.database_id + ": need at least 2 content groups to split, have " +
                                    std::to_string(groups.size()));
    }
    Rng rng(stream_seed(seed, "split:" + manifest.database_id));
    rng.shuffle(groups);

    std::unordered_map<std::string, std::int64_t> group_count;
    for (const ManifestEntry& e : manifest.entries) ++group_count[e.group_id];

    const double want = train_fraction * static_cast<double>(manifest.size());
    std::unordered_set<std::string> train_groups;
    std::int64_t train_count = 0;
    for (const std::string& g : groups) {
        if (static_cast<double>(train_count) >= want) break;
        train_groups.insert(g);
        train_count += group_count[g];
    }
    // Degenerate group sizes can swallow everything; keep the test side alive.
    if (train_groups.size() == groups.size()) {
        train_groups.erase(groups.back());
    }

    DatasetManifest train, test;
    train.database_id = manifest.database_id;
    test.database_id = manifest.database_id;
    train.score_min = test.score_min = manifest.score_min;
    train.score_max = test.score_max = manifest.score_max;
    for (const ManifestEntry& e : manifest.entries) {
        (train_groups.count(e.group_id) ? train : test).entries.push_back(e);
    }
    return {std::move(train), std::move(test)};
}

std::pair<DatasetManifest, DatasetManifest> split_80_20(const DatasetManifest& manifest, std::uint64_t seed) {
    return split_by_group(manifest, 0.8, seed);
}

}  // namespace stairiqa
