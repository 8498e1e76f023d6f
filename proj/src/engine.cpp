#include "tagi/engine.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tagi/rng.hpp"

namespace tagi::engine {

namespace {

void check_dims(const net::NetworkSpec& spec, const net::ParameterPosterior& posterior,
                const InputBelief& input) {
    if (spec.layers.empty()) throw std::invalid_argument("engine: network has no layers");
    if (posterior.layers.size() != spec.layers.size()) {
        throw std::invalid_argument("engine: posterior/spec layer count mismatch");
    }
    if (input.mean.size() != static_cast<std::size_t>(spec.input_width) ||
        input.var.size() != input.mean.size()) {
        throw std::invalid_argument("engine: input belief width mismatch");
    }
    for (double v : input.var) {
        if (v < 0.0) throw std::invalid_argument("engine: negative input variance");
    }
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& p = posterior.layers[l];
        const std::size_t w = static_cast<std::size_t>(spec.layers[l].width) * spec.fan_in(l);
        const std::size_t b = static_cast<std::size_t>(spec.layers[l].width);
        if (p.w_mean.size() != w || p.w_var.size() != w || p.b_mean.size() != b ||
            p.b_var.size() != b) {
            throw std::invalid_argument("engine: posterior layer dimension mismatch");
        }
    }
}

// Clamp a posterior variance at zero, counting the event.
inline double clamp_var(double v, int& clamps) {
    if (v < 0.0) {
        ++clamps;
        return 0.0;
    }
    return v;
}

}  // namespace

ForwardState forward(const net::NetworkSpec& spec, const net::ParameterPosterior& posterior,
                     const InputBelief& input) {
    check_dims(spec, posterior, input);

    ForwardState state;
    state.spec = spec;
    state.input = input;
    state.input_act.resize(input.mean.size());
    for (std::size_t k = 0; k < input.mean.size(); ++k) {
        state.input_act[k] =
            gma::activation_moments({input.mean[k], input.var[k]}, gma::ActivationKind::identity);
    }

    state.layers.resize(spec.layers.size());
    const std::vector<gma::ActivationMoments>* below = &state.input_act;
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& p = posterior.layers[l];
        const int in = spec.fan_in(l);
        const int out = spec.layers[l].width;
        auto& ls = state.layers[l];
        ls.z_mean.assign(out, 0.0);
        ls.z_var.assign(out, 0.0);
        ls.cov_z_a.assign(static_cast<std::size_t>(out) * in, 0.0);
        ls.cov_z_w.assign(static_cast<std::size_t>(out) * in, 0.0);
        ls.cov_z_b.assign(out, 0.0);
        ls.cov_a_z.assign(out, 0.0);
        ls.act.resize(out);

        for (int i = 0; i < out; ++i) {
            const std::size_t row = static_cast<std::size_t>(i) * in;
            double zm = p.b_mean[i];
            double zv = p.b_var[i];
            for (int k = 0; k < in; ++k) {
                const auto& a = (*below)[k];
                const gma::GaussianPair wa{{p.w_mean[row + k], p.w_var[row + k]},
                                           {a.a_mean, a.a_var},
                                           0.0};
                zm += gma::product_mean(wa);
                zv += gma::product_var(wa);
                ls.cov_z_a[row + k] = p.w_mean[row + k] * a.a_var;
                ls.cov_z_w[row + k] = p.w_var[row + k] * a.a_mean;
            }
            ls.z_mean[i] = zm;
            ls.z_var[i] = zv;
            ls.cov_z_b[i] = p.b_var[i];
            ls.act[i] = gma::activation_moments({zm, zv}, spec.layers[l].activation);
            ls.cov_a_z[i] = ls.act[i].jacobian * zv;
        }
        below = &ls.act;
    }
    return state;
}

OutputPosterior condition_output(const ForwardState& state, const Observation& obs) {
    const auto& out = state.output();
    const std::size_t width = out.z_mean.size();
    if (obs.value.size() != width || obs.noise_var.size() != width) {
        throw std::invalid_argument("engine: observation width mismatch");
    }

    OutputPosterior post;
    post.a_mean.resize(width);
    post.a_var.resize(width);
    post.z_mean.resize(width);
    post.z_var.resize(width);
    for (std::size_t i = 0; i < width; ++i) {
        const auto& a = out.act[i];
        post.a_mean[i] = a.a_mean;
        post.a_var[i] = a.a_var;
        post.z_mean[i] = out.z_mean[i];
        post.z_var[i] = out.z_var[i];

        const double nv = obs.noise_var[i];
        if (nv < 0.0) throw std::invalid_argument("engine: negative observation noise");
        if (std::isinf(nv)) continue;  // unobserved output: zero gain

        const double denom = a.a_var + nv;
        const double innovation = obs.value[i] - a.a_mean;
        if (denom <= 0.0) {
            if (innovation == 0.0) continue;  // consistent degenerate observation
            throw std::domain_error("engine: degenerate observation (zero variance, y != mean)");
        }
        const double gain_a = a.a_var / denom;
        post.a_mean[i] = a.a_mean + gain_a * innovation;
        post.a_var[i] = (1.0 - gain_a) * a.a_var;

        const double cov_az = out.cov_a_z[i];
        const double gain_z = cov_az / denom;
        post.z_mean[i] = out.z_mean[i] + gain_z * innovation;
        post.z_var[i] = out.z_var[i] - gain_z * cov_az;
    }
    return post;
}

BackwardResult backward(const ForwardState& state, const net::ParameterPosterior& posterior,
                        const OutputPosterior& output_post, const BackwardOptions& opts) {
    const auto& spec = state.spec;
    const std::size_t n_layers = spec.layers.size();
    if (output_post.z_mean.size() != static_cast<std::size_t>(spec.output_width())) {
        throw std::invalid_argument("engine: output posterior width mismatch");
    }

    BackwardResult result;
    result.params = posterior;
    result.z_mean.resize(n_layers);
    result.z_var.resize(n_layers);
    result.input = state.input;

    result.z_mean.back() = output_post.z_mean;
    result.z_var.back() = output_post.z_var;
    for (auto& v : result.z_var.back()) v = clamp_var(v, result.var_clamps);

    // Innovation on the layer currently being smoothed from.
    std::vector<double> dm(output_post.z_mean.size());
    std::vector<double> dv(output_post.z_var.size());
    for (std::size_t i = 0; i < dm.size(); ++i) {
        dm[i] = result.z_mean.back()[i] - state.output().z_mean[i];
        dv[i] = result.z_var.back()[i] - state.output().z_var[i];
    }

    for (std::size_t l = n_layers; l-- > 0;) {
        const auto& ls = state.layers[l];
        const int in = spec.fan_in(l);
        const int out = spec.layers[l].width;
        const bool reach_down = l > 0 || opts.update_input;

        std::vector<double> acc_dm, acc_dv;
        if (reach_down) {
            acc_dm.assign(in, 0.0);
            acc_dv.assign(in, 0.0);
        }
        const std::vector<double>* low_cov_a_z = l > 0 ? &state.layers[l - 1].cov_a_z : nullptr;

        auto& pl = result.params.layers[l];
        for (int i = 0; i < out; ++i) {
            const double var_z = ls.z_var[i];
            if (var_z <= 0.0) {
                if (dm[i] != 0.0 || dv[i] != 0.0) ++result.skipped_units;
                continue;
            }
            const double rm = dm[i] / var_z;
            const double rv = dv[i] / (var_z * var_z);
            const std::size_t row = static_cast<std::size_t>(i) * in;

            if (opts.update_params) {
                for (int k = 0; k < in; ++k) {
                    const double cov_w = ls.cov_z_w[row + k];
                    pl.w_mean[row + k] += cov_w * rm;
                    pl.w_var[row + k] =
                        clamp_var(pl.w_var[row + k] + cov_w * cov_w * rv, result.var_clamps);
                }
                const double cov_b = ls.cov_z_b[i];
                pl.b_mean[i] += cov_b * rm;
                pl.b_var[i] = clamp_var(pl.b_var[i] + cov_b * cov_b * rv, result.var_clamps);
            }
            if (reach_down) {
                // cov(Z^(l+1)_i, Z^(l)_k) = E[W_ik] * cov(A^(l)_k, Z^(l)_k);
                // for the input layer cov(A, Z) degenerates to var(X_k).
                for (int k = 0; k < in; ++k) {
                    const double cov_low =
                        posterior.layers[l].w_mean[row + k] *
                        (l > 0 ? (*low_cov_a_z)[k] : state.input.var[k]);
                    acc_dm[k] += cov_low * rm;
                    acc_dv[k] += cov_low * cov_low * rv;
                }
            }
        }

        if (l > 0) {
            const auto& prev = state.layers[l - 1];
            auto& zm = result.z_mean[l - 1];
            auto& zv = result.z_var[l - 1];
            zm = prev.z_mean;
            zv = prev.z_var;
            for (int k = 0; k < in; ++k) {
                zm[k] += acc_dm[k];
                zv[k] = clamp_var(zv[k] + acc_dv[k], result.var_clamps);
            }
            // The clamped posterior is what downstream consumers see, so the
            // innovation handed to the next layer uses it too.
            dm.assign(in, 0.0);
            dv.assign(in, 0.0);
            for (int k = 0; k < in; ++k) {
                dm[k] = zm[k] - prev.z_mean[k];
                dv[k] = zv[k] - prev.z_var[k];
            }
        } else if (opts.update_input) {
            for (int k = 0; k < in; ++k) {
                result.input.mean[k] += acc_dm[k];
                result.input.var[k] =
                    clamp_var(result.input.var[k] + acc_dv[k], result.var_clamps);
            }
        }
    }
    return result;
}

EpochStats train_epoch(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                       const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::vector<double>>& targets,
                       const std::vector<std::vector<double>>& noise_vars, std::uint64_t seed,
                       int batch) {
    if (inputs.empty()) throw std::invalid_argument("engine: empty dataset");
    if (targets.size() != inputs.size() || noise_vars.size() != inputs.size()) {
        throw std::invalid_argument("engine: dataset size mismatch");
    }
    if (batch < 1) throw std::invalid_argument("engine: batch must be >= 1");

    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    rng::Rng rng(seed);
    rng::shuffle(order, rng);

    EpochStats stats;
    double se_sum = 0.0;
    std::size_t se_count = 0;

    // `batch` chunks the visit order; updates inside a chunk still apply
    // sequentially, so any batch size reproduces the batch=1 reference.
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch)) {
        const std::size_t stop =
            std::min(order.size(), start + static_cast<std::size_t>(batch));
        for (std::size_t pos = start; pos < stop; ++pos) {
            const std::size_t idx = order[pos];
            InputBelief belief{inputs[idx], std::vector<double>(inputs[idx].size(), 0.0)};
            ForwardState state = forward(spec, posterior, belief);

            const auto& out = state.output();
            for (std::size_t i = 0; i < out.act.size(); ++i) {
                const double nv = noise_vars[idx][i];
                if (std::isinf(nv)) continue;
                const double pv = out.act[i].a_var + nv;
                const double err = targets[idx][i] - out.act[i].a_mean;
                se_sum += err * err;
                ++se_count;
                stats.nll += 0.5 * std::log(2.0 * M_PI * pv) + 0.5 * err * err / pv;
            }

            OutputPosterior post = condition_output(state, {targets[idx], noise_vars[idx]});
            BackwardResult back = backward(state, posterior, post, {true, false});
            posterior = std::move(back.params);
            stats.var_clamps += back.var_clamps;
            stats.skipped_units += back.skipped_units;
        }
    }
    if (se_count > 0) {
        stats.rmse = std::sqrt(se_sum / static_cast<double>(se_count));
        stats.nll /= static_cast<double>(se_count);
    }
    return stats;
}

EpochStats train_epoch(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                       const std::vector<std::vector<double>>& inputs,
                       const std::vector<std::vector<double>>& targets,
                       const net::ObservationModel& obs, std::uint64_t seed, int batch) {
    const std::vector<std::vector<double>> noise(
        inputs.size(),
        std::vector<double>(static_cast<std::size_t>(spec.output_width()),
                            obs.sigma_v * obs.sigma_v));
    return train_epoch(spec, posterior, inputs, targets, noise, seed, batch);
}

std::pair<std::vector<double>, std::vector<double>> predict(const net::NetworkSpec& spec,
                                                            const net::ParameterPosterior& posterior,
                                                            const std::vector<double>& x) {
    InputBelief belief{x, std::vector<double>(x.size(), 0.0)};
    ForwardState state = forward(spec, posterior, belief);
    std::vector<double> mean(state.output().act.size()), var(state.output().act.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        mean[i] = state.output().act[i].a_mean;
        var[i] = state.output().act[i].a_var;
    }
    return {mean, var};
}

int predict_class(const net::NetworkSpec& spec, const net::ParameterPosterior& posterior,
                  const std::vector<double>& x) {
    const auto [mean, var] = predict(spec, posterior, x);
    int best = 0;
    for (std::size_t i = 1; i < mean.size(); ++i) {
        if (mean[i] > mean[best]) best = static_cast<int>(i);
    }
    return best;
}

}  // namespace tagi::engine
