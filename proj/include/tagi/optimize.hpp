#pragma once

#include <optional>
#include <vector>

#include "tagi/data.hpp"
#include "tagi/deriv.hpp"
#include "tagi/engine.hpp"
#include "tagi/net.hpp"

namespace tagi::optimize {

enum class Alpha { none, plus, minus };

struct OptimizerConfig {
    Alpha alpha = Alpha::none;
    int epochs = 50;
    double sigma_x0 = 0.01;          // prior sd of the search point, original units
    std::vector<double> x0_mean;     // starting location, original units
    double sigma_v = 0.1;            // observation noise for surrogate training
    std::uint64_t seed = 0;
    // Early stop when |derivative mean| stays below this for `early_stop_runs`
    // consecutive iterations; 0 disables. Always reported, never silent.
    double early_stop_tol = 1e-4;
    int early_stop_runs = 5;
};

struct TraceRow {
    int iter = 0;
    double x_mean = 0.0, x_var = 0.0;   // original units
    double dz_mean = 0.0, dz_var = 0.0; // original units
    double y_mean = 0.0;
};

struct OptimizationTrace {
    std::vector<TraceRow> rows;
    engine::InputBelief final_belief;          // original units
    std::optional<int> early_stopped_at;
    int sign_ties = 0;
    int var_clamps = 0;
};

// Conditions the input belief on a zero observation of the derivative node:
// mu -= cov/var' * mu', var -= cov^2/var' (clamped at 0), per dimension.
engine::InputBelief infer_step_unconstrained(const engine::InputBelief& belief,
                                             const deriv::DerivativeMoments& dm);

// Signed variant: the mean moves by alpha * sign(derivative mean) * |step|,
// with the same variance contraction. A zero sign counts as +1 and is tallied.
engine::InputBelief infer_step_constrained(const engine::InputBelief& belief,
                                           const deriv::DerivativeMoments& dm, Alpha alpha,
                                           int* sign_ties = nullptr);

// Interleaves surrogate training with input inference: each epoch walks the
// dataset once, taking one parameter update and one input-belief update per
// datum. Returns the full per-update trace.
OptimizationTrace optimize(const data::Dataset& dataset, const net::NetworkSpec& spec,
                           const OptimizerConfig& config);

}  // namespace tagi::optimize
