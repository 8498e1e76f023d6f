#include "tagi/optimize.hpp"

#include <cmath>
#include <stdexcept>

namespace tagi::optimize {

namespace {

void require_informative(const deriv::DerivativeMoments& dm) {
    for (const double v : dm.var) {
        if (v <= 0.0) {
            throw std::runtime_error(
                "optimize: derivative variance is zero (stationary derivative)");
        }
    }
}

}  // namespace

engine::InputBelief infer_step_unconstrained(const engine::InputBelief& belief,
                                             const deriv::DerivativeMoments& dm) {
    require_informative(dm);
    engine::InputBelief out = belief;
    for (std::size_t d = 0; d < out.mean.size(); ++d) {
        const double gain = dm.cov_with_input[d] / dm.var[d];
        out.mean[d] -= gain * dm.mean[d];
        out.var[d] -= gain * dm.cov_with_input[d];
        if (out.var[d] < 0.0) out.var[d] = 0.0;
    }
    return out;
}

engine::InputBelief infer_step_constrained(const engine::InputBelief& belief,
                                           const deriv::DerivativeMoments& dm, Alpha alpha,
                                           int* sign_ties) {
    if (alpha == Alpha::none) {
        throw std::invalid_argument("optimize: constrained step needs alpha = +1 or -1");
    }
    require_informative(dm);
    const double a = alpha == Alpha::plus ? 1.0 : -1.0;
    engine::InputBelief out = belief;
    for (std::size_t d = 0; d < out.mean.size(); ++d) {
        const double gain = dm.cov_with_input[d] / dm.var[d];
        double sign = dm.mean[d] > 0.0 ? 1.0 : (dm.mean[d] < 0.0 ? -1.0 : 0.0);
        if (sign == 0.0) {
            sign = 1.0;
            if (sign_ties != nullptr) ++*sign_ties;
        }
        out.mean[d] += a * sign * std::abs(gain * dm.mean[d]);
        out.var[d] -= gain * dm.cov_with_input[d];
        if (out.var[d] < 0.0) out.var[d] = 0.0;
    }
    return out;
}

OptimizationTrace optimize(const data::Dataset& dataset, const net::NetworkSpec& spec,
                           const OptimizerConfig& config) {
    if (dataset.size() == 0) throw std::invalid_argument("optimize: empty dataset");
    if (config.epochs < 0) throw std::invalid_argument("optimize: negative epoch count");
    if (config.sigma_x0 <= 0.0) throw std::invalid_argument("optimize: sigma_x0 must be > 0");
    const int in_w = spec.input_width;
    if (dataset.input_width() != in_w ||
        static_cast<int>(config.x0_mean.size()) != in_w) {
        throw std::invalid_argument("optimize: input width mismatch");
    }

    net::Normalization norm = dataset.norm;
    if (norm.empty()) {
        norm.mean.assign(static_cast<std::size_t>(in_w), 0.0);
        norm.sd.assign(static_cast<std::size_t>(in_w), 1.0);
    }
    auto to_original = [&](const engine::InputBelief& b) {
        engine::InputBelief o = b;
        for (int d = 0; d < in_w; ++d) {
            o.mean[d] = b.mean[d] * norm.sd[d] + norm.mean[d];
            o.var[d] = b.var[d] * norm.sd[d] * norm.sd[d];
        }
        return o;
    };

    net::ParameterPosterior posterior = net::init_posterior(spec, config.seed);

    engine::InputBelief belief;
    belief.mean.resize(static_cast<std::size_t>(in_w));
    belief.var.resize(static_cast<std::size_t>(in_w));
    for (int d = 0; d < in_w; ++d) {
        belief.mean[d] = (config.x0_mean[d] - norm.mean[d]) / norm.sd[d];
        const double sd = config.sigma_x0 / norm.sd[d];
        belief.var[d] = sd * sd;
    }

    OptimizationTrace trace;
    {
        const engine::InputBelief start = to_original(belief);
        trace.rows.push_back({0, start.mean[0], start.var[0], 0.0, 0.0, 0.0});
    }

    const double noise = config.sigma_v * config.sigma_v;
    int iter = 0;
    int calm_runs = 0;
    bool stopped = false;
    for (int epoch = 0; epoch < config.epochs && !stopped; ++epoch) {
        for (std::size_t i = 0; i < dataset.size() && !stopped; ++i) {
            // Surrogate refinement on one observation, parameters only.
            engine::InputBelief datum{dataset.inputs[i],
                                      std::vector<double>(static_cast<std::size_t>(in_w), 0.0)};
            engine::ForwardState fwd_t = engine::forward(spec, posterior, datum);
            engine::Observation obs;
            obs.value = dataset.targets[i];
            obs.noise_var.assign(dataset.targets[i].size(), noise);
            const auto out_post = engine::condition_output(fwd_t, obs);
            engine::BackwardOptions train_opts;
            auto back = engine::backward(fwd_t, posterior, out_post, train_opts);
            posterior = std::move(back.params);

            // One inference step on the search point.
            const engine::ForwardState fwd_x = engine::forward(spec, posterior, belief);
            const auto dm = deriv::derivative_moments(spec, posterior, fwd_x);
            trace.var_clamps += dm.var_clamps;
            belief = config.alpha == Alpha::none
                         ? infer_step_unconstrained(belief, dm)
                         : infer_step_constrained(belief, dm, config.alpha, &trace.sign_ties);
            ++iter;

            const engine::InputBelief now = to_original(belief);
            trace.rows.push_back({iter, now.mean[0], now.var[0], dm.mean[0] / norm.sd[0],
                                  dm.var[0] / (norm.sd[0] * norm.sd[0]),
                                  fwd_x.output().act[0].a_mean});

            double worst = 0.0;
            for (const double m : dm.mean) worst = std::max(worst, std::abs(m));
            calm_runs = (config.early_stop_tol > 0.0 && worst < config.early_stop_tol)
                            ? calm_runs + 1
                            : 0;
            if (config.early_stop_runs > 0 && calm_runs >= config.early_stop_runs) {
                trace.early_stopped_at = iter;
                stopped = true;
            }
        }
    }
    trace.final_belief = to_original(belief);
    return trace;
}

}  // namespace tagi::optimize
