#pragma once

#include <vector>

#include "tagi/engine.hpp"

namespace tagi::deriv {

// One multiplicative step of a branch: the weight factor Y^(l) entering the
// level above and the local derivative factor X^(l) = phi'(Z^(l)) at this
// level, together with the covariances tying the pair to the derivative
// factor one level up and to the differentiation target.
struct BranchStep {
    gma::Gaussian y;  // weight factor moments
    gma::Gaussian x;  // phi' factor moments (mean 1, var 0 at the input level)
    double cov_xup_y = 0.0;      // cov(X^(l+1), Y^(l))
    double cov_xup_x = 0.0;      // cov(X^(l+1), X^(l))
    double cov_x_target = 0.0;   // cov(X^(l), z_target)
};

// A branch of the derivative diagram: an alternating product of phi' factors
// and weight factors along one unit path from the output down to the target.
struct BranchFactors {
    gma::Gaussian top_x;              // X^(L) at the output unit
    double cov_top_x_target = 0.0;    // cov(X^(L), z_target)
    std::vector<BranchStep> steps;    // ordered from just below the output down to the target
    std::vector<int> units;           // unit index per level, output first (for reference/tests)
};

// Per input dimension: moments of the total derivative d A^(L) / d x_d.
struct DerivativeMoments {
    std::vector<double> mean;
    std::vector<double> var;
    std::vector<double> cov_with_input;
    // True when the variance includes pairwise cross-branch covariances
    // (all hidden widths <= 8); false when branches were treated as
    // independent because the network is too wide for pair enumeration.
    bool cross_paths_paired = false;
    int var_clamps = 0;
};

// Mean of a branch product via the descending two-term recursion (product of
// factor means plus the covariance correction at each step).
double branch_mean(const BranchFactors& branch);

// Variance of a branch product via the six-term recursion; negative results
// are clamped at zero and counted through `clamps` when provided.
double branch_var(const BranchFactors& branch, int* clamps = nullptr);

// Covariance of the branch product with the differentiation target: a
// two-term formula using cov(X one level above target, target) and
// cov(X at target level, target).
double branch_cov_with_input(const BranchFactors& branch);

// All branches from output unit `output_unit` down to unit `target_unit` of
// level `target_level` (0 = input). Moments are read from the forward state.
std::vector<BranchFactors> enumerate_branches(const engine::ForwardState& state,
                                              const net::ParameterPosterior& posterior,
                                              int output_unit, int target_level, int target_unit);

// Derivative moments for every input dimension, accumulated by a dynamic
// program over layers (no path enumeration). Requires output width 1.
DerivativeMoments derivative_moments(const net::NetworkSpec& spec,
                                     const net::ParameterPosterior& posterior,
                                     const engine::ForwardState& state);

// Reference implementation that sums explicitly enumerated branches; used to
// validate the dynamic program on narrow networks.
DerivativeMoments derivative_moments_enumerated(const net::NetworkSpec& spec,
                                                const net::ParameterPosterior& posterior,
                                                const engine::ForwardState& state);

// Pairwise covariance between two branch products sharing factors (same
// forward state, same output unit). The diagonal (p == q) reproduces
// branch_var exactly.
double branch_pair_cov(const engine::ForwardState& state, const net::ParameterPosterior& posterior,
                       const BranchFactors& p, const BranchFactors& q);

}  // namespace tagi::deriv
