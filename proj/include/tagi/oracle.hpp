#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tagi::oracle {

// One verification check: `delta` is the worst observed discrepancy in units
// of `bound` (so pass == delta <= bound after normalization is applied by the
// check itself; both raw numbers are kept for the report).
struct CheckResult {
    std::string name;
    bool pass = false;
    double delta = 0.0;  // worst normalized discrepancy observed
    double bound = 0.0;  // pass threshold for `delta`
    std::string detail;
};

// Names of every check emitted by run_all, in order.
std::vector<std::string> check_names();

// Monte-Carlo validation of the product-moment operations on jointly Gaussian
// draws, and of the derivative covariance primitives on the linearized-layer
// Gaussian surrogate. delta is in standard errors; bound is 3.
std::vector<CheckResult> run_gma_mc(std::uint64_t seed, int sets, long samples,
                                    const std::string& mutate = "");

// Compares engine.backward against one-shot conditioning of the bookkept
// joint Gaussian on random small networks. Means are compared everywhere;
// variances wherever the quantity reaches each observed output through at
// most one path. delta is absolute; bound 1e-8.
CheckResult run_backward_joint(std::uint64_t seed, int nets, const std::string& mutate = "");

// Derivative-moment checks: finite differences of the predictive mean on a
// freshly trained 1-D net, and dynamic programming vs. explicit branch
// enumeration on random small networks.
std::vector<CheckResult> run_deriv_checks(std::uint64_t seed, const std::string& mutate = "");

// TD-target recursion vs. brute-force discounted sums for short horizons.
CheckResult run_td_brute(std::uint64_t seed, const std::string& mutate = "");

// Every check above with shared defaults; `mutate` names a check whose
// reference computation is deliberately biased, to prove the harness detects
// formula drift.
std::vector<CheckResult> run_all(std::uint64_t seed, const std::string& mutate = "",
                                 int sets = 50, long samples = 1000000);

}  // namespace tagi::oracle
