#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "tagi/gma.hpp"
#include "tagi/net.hpp"

namespace tagi::engine {

// Diagonal Gaussian belief over the network input.
struct InputBelief {
    std::vector<double> mean, var;
};

// Moments produced by one forward pass. Layer l of `layers` holds the
// pre-activations Z^(l+1) produced by linear layer l and the activation
// moments applied to them. Cross-covariances between each pre-activation and
// the quantities feeding it are materialized so the backward smoother reads
// them instead of re-deriving formulas:
//   cov_z_a[l][i*in+k] = cov(Z^(l+1)_i, A^(l)_k)   (for l = 0, A^(0) = X, so
//                        this row doubles as the input cross-covariance chain)
//   cov_z_w[l][i*in+k] = cov(Z^(l+1)_i, W^(l)_ik)
//   cov_z_b[l][i]      = cov(Z^(l+1)_i, B^(l)_i)
//   cov_a_z[l][i]      = cov(A^(l+1)_i, Z^(l+1)_i)
struct LayerState {
    std::vector<double> z_mean, z_var;
    std::vector<gma::ActivationMoments> act;
    std::vector<double> cov_z_a, cov_z_w, cov_z_b, cov_a_z;
};

struct ForwardState {
    net::NetworkSpec spec;
    InputBelief input;
    std::vector<gma::ActivationMoments> input_act;  // identity moments of X
    std::vector<LayerState> layers;

    const LayerState& output() const { return layers.back(); }
};

// Per-output observed value and Gaussian noise variance. An entry with
// noise_var = +infinity means "unobserved" (zero gain).
struct Observation {
    std::vector<double> value, noise_var;
};

// Posterior moments of the output layer after conditioning on an
// observation, for both the output activations and their pre-activations.
struct OutputPosterior {
    std::vector<double> a_mean, a_var, z_mean, z_var;
};

struct BackwardOptions {
    bool update_params = true;
    bool update_input = false;
};

struct BackwardResult {
    net::ParameterPosterior params;
    std::vector<std::vector<double>> z_mean, z_var;  // posterior hidden states per layer
    InputBelief input;
    int var_clamps = 0;     // negative posterior variances floored to zero
    int skipped_units = 0;  // zero prior variance with nonzero innovation
};

// Moment propagation: product means/variances under the layer independence
// assumptions, local linearization for activations.
ForwardState forward(const net::NetworkSpec& spec, const net::ParameterPosterior& posterior,
                     const InputBelief& input);

// Scalar Gaussian conditioning per output unit. The observation attaches to
// the output activation; for an Identity head this is exactly
// gain = var_Z / (var_Z + noise_var) on the pre-activation.
OutputPosterior condition_output(const ForwardState& state, const Observation& obs);

// Layer-wise smoother sweep from the output posterior down to the input:
// every quantity Q with a stored covariance to Z^(l+1) receives
//   mean += cov / var_Z * (mean_post - mean_prior)
//   var  += cov^2 / var_Z^2 * (var_post - var_prior)
// summed over the upstream units it feeds. Parameters and the lower layer are
// updated from the same innovation independently of one another.
BackwardResult backward(const ForwardState& state, const net::ParameterPosterior& posterior,
                        const OutputPosterior& output_post, const BackwardOptions& opts);

struct EpochStats {
    double nll = 0.0;   // mean predictive negative log-likelihood (proxy)
    double rmse = 0.0;  // root mean squared error of predictive means
    int var_clamps = 0;
    int skipped_units = 0;
};

// One training pass: per observation, forward + condition_output + backward
// with only the parameter update kept. Visit order is shuffled by `seed`.
// `batch` only controls chunking of the pass and leaves results identical to
// the batch=1 reference.
EpochStats train_epoch(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                       const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::vector<double>>& targets,
                       const std::vector<std::vector<double>>& noise_vars, std::uint64_t seed,
                       int batch = 1);

EpochStats train_epoch(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                       const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::vector<double>>& targets,
                       const net::ObservationModel& obs, std::uint64_t seed, int batch = 1);

// Forward a deterministic input; returns output activation means/variances.
std::pair<std::vector<double>, std::vector<double>> predict(const net::NetworkSpec& spec,
                                                            const net::ParameterPosterior& posterior,
                                                            const std::vector<double>& x);

// Argmax of the output activation means for a deterministic input.
int predict_class(const net::NetworkSpec& spec, const net::ParameterPosterior& posterior,
                  const std::vector<double>& x);

}  // namespace tagi::engine
