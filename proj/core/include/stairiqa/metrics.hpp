#pragma once

#include <span>
#include <vector>

namespace stairiqa {

// Average ranks (1-based); ties get the mean of the ranks they span.
std::vector<double> average_ranks(std::span<const double> values);

// Pearson linear correlation. Rejects inputs with zero variance.
double plcc(std::span<const double> pred, std::span<const double> label);

// Spearman rank-order correlation: Pearson on average-rank vectors.
double srcc(std::span<const double> pred, std::span<const double> label);

// Middle order statistic; mean of the two middle ones for even counts.
double median(std::vector<double> values);

}  // namespace stairiqa
