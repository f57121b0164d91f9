#pragma once

#include <string>
#include <vector>

#include "stairiqa/protocols.hpp"

namespace stairiqa {

// A full run description: experiment settings, dataset manifests, outputs.
// Parsed strictly from JSON (unknown keys rejected), defaults filled in, and
// always echoed back fully resolved.
struct RunConfig {
    std::vector<std::string> dataset_manifests;
    ExperimentConfig experiment;
    std::string out_dir = "runs/out";

    // Desk-scale defaults matching the bundled synthetic data.
    static RunConfig desk_default();

    static RunConfig from_json_text(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::string& path);

    std::string to_json_text() const;
    void validate() const;
};

}  // namespace stairiqa
