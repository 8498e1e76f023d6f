#pragma once

#include <string>
#include <vector>

#include "tagi/net.hpp"

namespace tagi::data {

enum class DatasetKind { regression, classification };

// Row-aligned example set. Image inputs live in [0, 1]; regression inputs are
// standardized with the statistics kept in `norm` so downstream consumers can
// report results in original units.
struct Dataset {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;
    DatasetKind kind = DatasetKind::regression;
    int class_count = 0;
    net::Normalization norm;

    std::size_t size() const { return inputs.size(); }
    int input_width() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }
    int target_width() const {
        return targets.empty() ? 0 : static_cast<int>(targets[0].size());
    }
};

// Parses the big-endian IDX pair (images magic 0x803, labels magic 0x801),
// scales pixels by 1/255 and one-hot encodes the labels.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// y = x^3 - 3x + v with v ~ N(0, sigma_v^2), x uniform on [lo, hi]. Inputs are
// standardized; targets are left in original units.
Dataset toy_cubic(int n, double sigma_v, double lo, double hi, std::uint64_t seed);
Dataset toy_cubic(int n, double sigma_v, std::uint64_t seed);  // range [-2, 2]

// Deterministic subset: stratified per class for classification, a seeded
// sample for regression.
Dataset subset(const Dataset& ds, int count, std::uint64_t seed);

// Generic regression CSV: header row, last column is the target; inputs
// standardized as in toy_cubic.
Dataset load_csv(const std::string& path);

// One-hot argmax of a target row.
int label_of(const std::vector<double>& target_row);

}  // namespace tagi::data
