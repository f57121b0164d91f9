#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stairiqa {

struct GradCheckResult {
    std::string op;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    int instances = 0;
    bool pass = false;
};

struct GradCheckOptions {
    int instances = 20;
    double step = 1e-5;
    // The whole-model check uses a narrower step: with ~10^3 parameters the
    // odds of an h-window straddling a ReLU kink are otherwise non-trivial.
    double end_to_end_step = 1e-7;
    double op_tolerance = 1e-4;
    double end_to_end_tolerance = 1e-3;
    std::uint64_t seed = 90210;
    bool large_shapes = false;  // "--size small": wider random shape ranges
};

// Central-difference verification of every differentiable op plus the tiny
// two-stage end-to-end model. One row per op.
std::vector<GradCheckResult> run_grad_checks(const GradCheckOptions& options);

bool all_passed(const std::vector<GradCheckResult>& results);

// max over coordinates of |a-b| / max(1, |a|, |b|).
double max_rel_err(const std::vector<double>& analytic, const std::vector<double>& estimate);

}  // namespace stairiqa
