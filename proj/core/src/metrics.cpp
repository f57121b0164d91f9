#include "stairiqa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace stairiqa {

std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // mean of 1-based ranks i+1..j+1
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double plcc(std::span<const double> pred, std::span<const double> label) {
    if (pred.size() != label.size()) throw std::invalid_argument("plcc: length mismatch");
    const std::size_t n = pred.size();
    if (n < 2) throw std::invalid_argument("plcc undefined for fewer than 2 samples");

    double mean_p = 0.0, mean_l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_p += pred[i];
        mean_l += label[i];
    }
    mean_p /= static_cast<double>(n);
    mean_l /= static_cast<double>(n);

    double cov = 0.0, var_p = 0.0, var_l = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = pred[i] - mean_p;
        const double dl = label[i] - mean_l;
        cov += dp * dl;
        var_p += dp * dp;
        var_l += dl * dl;
    }
    if (var_p == 0.0 || var_l == 0.0) throw std::invalid_argument("plcc undefined for zero-variance input");
    return cov / std::sqrt(var_p * var_l);
}

double srcc(std::span<const double> pred, std::span<const double> label) {
    if (pred.size() != label.size()) throw std::invalid_argument("srcc: length mismatch");
    if (pred.size() < 2) throw std::invalid_argument("srcc undefined for fewer than 2 samples");
    const std::vector<double> rp = average_ranks(pred);
    const std::vector<double> rl = average_ranks(label);
    try {
        return plcc(rp, rl);
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("srcc undefined: an input has zero rank variance");
    }
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of empty set");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    if (n % 2 == 1) return values[n / 2];
    return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace stairiqa
