#include "tagi/deriv.hpp"

#include <cmath>
#include <stdexcept>

namespace tagi::deriv {

namespace {

// Moments of one unit at a node level: level 0 is the input, level n >= 1 is
// the output of linear layer n-1.
struct UnitRef {
    gma::Gaussian z;
    const gma::ActivationMoments* act;
    gma::ActivationKind kind;
};

int level_width(const net::NetworkSpec& spec, int level) {
    return level == 0 ? spec.input_width : spec.layers[static_cast<std::size_t>(level) - 1].width;
}

UnitRef unit_ref(const engine::ForwardState& state, int level, int unit) {
    if (level == 0) {
        return {{state.input.mean[unit], state.input.var[unit]},
                &state.input_act[unit],
                gma::ActivationKind::identity};
    }
    const auto& ls = state.layers[static_cast<std::size_t>(level) - 1];
    return {{ls.z_mean[unit], ls.z_var[unit]},
            &ls.act[unit],
            state.spec.layers[static_cast<std::size_t>(level) - 1].activation};
}

gma::Gaussian weight_between(const net::ParameterPosterior& posterior,
                             const net::NetworkSpec& spec, int low_level, int up_unit,
                             int low_unit) {
    const auto& layer = posterior.layers[low_level];
    const std::size_t idx =
        static_cast<std::size_t>(up_unit) * spec.fan_in(low_level) + low_unit;
    return {layer.w_mean[idx], layer.w_var[idx]};
}

// Covariances between phi' at (low_level+1, up_unit) and the weight /
// derivative / pre-activation at (low_level, low_unit).
gma::DerivCovariances step_covs(const engine::ForwardState& state,
                                const net::ParameterPosterior& posterior, int low_level,
                                int up_unit, int low_unit) {
    const UnitRef up = unit_ref(state, low_level + 1, up_unit);
    const UnitRef low = unit_ref(state, low_level, low_unit);
    const gma::Gaussian w = weight_between(posterior, state.spec, low_level, up_unit, low_unit);
    return gma::tanh_deriv_covariances(up.z, *up.act, up.kind, w, low.z, *low.act, low.kind);
}

gma::Gaussian dphi_of(const UnitRef& u) { return {u.act->dphi_mean, u.act->dphi_var}; }

// Walking state for the descending branch recursion: partial-product mean and
// variance, plus the trailing factor u = E[Y one level up] * (mean two levels
// up) used by the covariance correction of the next step.
struct BranchWalk {
    double m, v, u;
    double m_before_last = 0.0, u_at_last = 1.0, eyx_last = 1.0, y_mean_last = 1.0;
};

BranchWalk walk_branch(const BranchFactors& branch) {
    if (branch.steps.empty()) throw std::invalid_argument("deriv: empty branch");
    BranchWalk s{branch.top_x.mean, branch.top_x.var, 1.0};
    for (const auto& step : branch.steps) {
        const double eyx = step.y.mean * step.x.mean;
        const double vyx = gma::product_var({step.y, step.x, 0.0});
        const double c = (step.cov_xup_y * step.x.mean + step.cov_xup_x * step.y.mean) * s.u;
        s.m_before_last = s.m;
        s.u_at_last = s.u;
        s.eyx_last = eyx;
        s.y_mean_last = step.y.mean;
        s.v = s.v * (vyx + eyx * eyx) + c * c + 2.0 * c * s.m * eyx + vyx * s.m * s.m;
        const double m_new = s.m * eyx + c;
        s.u = step.y.mean * s.m;
        s.m = m_new;
    }
    return s;
}

}  // namespace

double branch_mean(const BranchFactors& branch) { return walk_branch(branch).m; }

double branch_var(const BranchFactors& branch, int* clamps) {
    double v = walk_branch(branch).v;
    if (v < 0.0) {
        if (clamps != nullptr) ++*clamps;
        v = 0.0;
    }
    return v;
}

double branch_cov_with_input(const BranchFactors& branch) {
    const BranchWalk s = walk_branch(branch);
    const double cov_above = branch.steps.size() >= 2
                                 ? branch.steps[branch.steps.size() - 2].cov_x_target
                                 : branch.cov_top_x_target;
    const double cov_at = branch.steps.back().cov_x_target;
    return cov_above * s.u_at_last * s.eyx_last + cov_at * s.y_mean_last * s.m_before_last;
}

std::vector<BranchFactors> enumerate_branches(const engine::ForwardState& state,
                                              const net::ParameterPosterior& posterior,
                                              int output_unit, int target_level,
                                              int target_unit) {
    const auto& spec = state.spec;
    const int top = static_cast<int>(spec.layers.size());
    if (target_level < 0 || target_level >= top) {
        throw std::invalid_argument("deriv: target level out of range");
    }

    std::vector<BranchFactors> out;
    std::vector<int> units(static_cast<std::size_t>(top - target_level) + 1);
    units.front() = output_unit;
    units.back() = target_unit;

    // Depth-first over the unit choices at the strictly-between levels.
    const int free_levels = top - target_level - 1;  // levels top-1 .. target+1
    std::vector<int> choice(static_cast<std::size_t>(std::max(free_levels, 0)), 0);
    for (;;) {
        for (int f = 0; f < free_levels; ++f) units[static_cast<std::size_t>(f) + 1] = choice[f];

        BranchFactors branch;
        branch.units = units;
        const UnitRef out_ref = unit_ref(state, top, output_unit);
        branch.top_x = dphi_of(out_ref);
        branch.cov_top_x_target =
            (top == target_level + 1)
                ? step_covs(state, posterior, target_level, output_unit, target_unit).with_lower_z
                : 0.0;
        for (int s = 0; s < top - target_level; ++s) {
            const int low_level = top - 1 - s;
            const int up_unit = units[static_cast<std::size_t>(s)];
            const int low_unit = units[static_cast<std::size_t>(s) + 1];
            const auto covs = step_covs(state, posterior, low_level, up_unit, low_unit);
            const UnitRef low = unit_ref(state, low_level, low_unit);
            BranchStep step;
            step.y = weight_between(posterior, spec, low_level, up_unit, low_unit);
            step.x = low_level == target_level && target_level == 0
                         ? gma::Gaussian{1.0, 0.0}
                         : dphi_of(low);
            step.cov_xup_y = covs.with_weight;
            step.cov_xup_x = covs.with_lower_dphi;
            if (low_level == target_level) {
                step.cov_x_target = gma::dphi_z_cov(low.z, *low.act, low.kind);
            } else if (low_level == target_level + 1) {
                step.cov_x_target =
                    step_covs(state, posterior, target_level, low_unit, target_unit).with_lower_z;
            }
            branch.steps.push_back(step);
        }
        out.push_back(std::move(branch));

        // Advance the mixed-radix counter over free levels.
        int f = free_levels - 1;
        for (; f >= 0; --f) {
            const int width = level_width(spec, top - 1 - f);
            if (++choice[static_cast<std::size_t>(f)] < width) break;
            choice[static_cast<std::size_t>(f)] = 0;
        }
        if (f < 0) break;
    }
    return out;
}

namespace {

// Per-level accumulators of the dynamic program. Each entry sums, over all
// unit paths from the output down to this unit, a statistic of the partial
// branch product P (which includes this unit's phi' factor):
//   m  = sum of E[P]            m2 = sum of E[P]^2
//   v  = sum of var(P)          u  = sum of trailing factors u
//   u2 = sum of u^2             mu = sum of u * E[P]
struct DpLevel {
    std::vector<double> m, m2, v, u, u2, mu;
    explicit DpLevel(int width)
        : m(width, 0.0), m2(width, 0.0), v(width, 0.0), u(width, 0.0), u2(width, 0.0),
          mu(width, 0.0) {}
};

bool pairing_enabled(const net::NetworkSpec& spec) {
    long paths = 1;
    for (std::size_t l = 0; l + 1 < spec.layers.size(); ++l) {
        if (spec.layers[l].width > 8) return false;
        paths *= spec.layers[l].width;
        if (paths > 4096) return false;
    }
    return true;
}

double paired_cross_sum(const engine::ForwardState& state,
                        const net::ParameterPosterior& posterior,
                        const std::vector<BranchFactors>& branches) {
    double cross = 0.0;
    for (std::size_t p = 0; p < branches.size(); ++p) {
        for (std::size_t q = p + 1; q < branches.size(); ++q) {
            cross += 2.0 * branch_pair_cov(state, posterior, branches[p], branches[q]);
        }
    }
    return cross;
}

}  // namespace

DerivativeMoments derivative_moments(const net::NetworkSpec& spec,
                                     const net::ParameterPosterior& posterior,
                                     const engine::ForwardState& state) {
    if (spec.output_width() != 1) {
        throw std::invalid_argument("deriv: derivative_moments requires output width 1");
    }
    const int top = static_cast<int>(spec.layers.size());

    DpLevel acc(1);
    {
        const UnitRef out_ref = unit_ref(state, top, 0);
        const gma::Gaussian x = dphi_of(out_ref);
        acc.m[0] = x.mean;
        acc.m2[0] = x.mean * x.mean;
        acc.v[0] = x.var;
        acc.u[0] = 1.0;
        acc.u2[0] = 1.0;
        acc.mu[0] = x.mean;
    }

    DerivativeMoments result;
    result.mean.assign(spec.input_width, 0.0);
    result.var.assign(spec.input_width, 0.0);
    result.cov_with_input.assign(spec.input_width, 0.0);

    for (int level = top - 1; level >= 0; --level) {
        const int width_low = level_width(spec, level);
        const int width_up = level_width(spec, level + 1);
        DpLevel next(width_low);
        for (int i = 0; i < width_up; ++i) {
            if (acc.m[i] == 0.0 && acc.m2[i] == 0.0 && acc.v[i] == 0.0 && acc.u[i] == 0.0 &&
                acc.u2[i] == 0.0 && acc.mu[i] == 0.0) {
                continue;
            }
            for (int j = 0; j < width_low; ++j) {
                const UnitRef low = unit_ref(state, level, j);
                const gma::Gaussian x = level == 0 ? gma::Gaussian{1.0, 0.0} : dphi_of(low);
                const gma::Gaussian y = weight_between(posterior, spec, level, i, j);
                const auto covs = step_covs(state, posterior, level, i, j);
                const double kappa = covs.with_weight * x.mean + covs.with_lower_dphi * y.mean;
                const double eyx = y.mean * x.mean;
                const double vyx = gma::product_var({y, x, 0.0});

                next.m[j] += acc.m[i] * eyx + kappa * acc.u[i];
                next.m2[j] += eyx * eyx * acc.m2[i] + 2.0 * eyx * kappa * acc.mu[i] +
                              kappa * kappa * acc.u2[i];
                next.v[j] += acc.v[i] * (vyx + eyx * eyx) + kappa * kappa * acc.u2[i] +
                             2.0 * kappa * eyx * acc.mu[i] + vyx * acc.m2[i];
                next.u[j] += y.mean * acc.m[i];
                next.u2[j] += y.mean * y.mean * acc.m2[i];
                next.mu[j] += y.mean * (eyx * acc.m2[i] + kappa * acc.mu[i]);

                if (level == 0) {
                    // Covariance with the input: each path contributes
                    // cov(phi' one level up, x_j) * trailing factor * E[Y].
                    result.cov_with_input[j] += covs.with_lower_z * y.mean * acc.u[i];
                }
            }
        }
        acc = std::move(next);
    }

    for (int d = 0; d < spec.input_width; ++d) {
        result.mean[d] = acc.m[d];
        double v = acc.v[d];
        if (v < 0.0) {
            ++result.var_clamps;
            v = 0.0;
        }
        result.var[d] = v;
    }

    if (pairing_enabled(spec)) {
        result.cross_paths_paired = true;
        for (int d = 0; d < spec.input_width; ++d) {
            const auto branches = enumerate_branches(state, posterior, 0, 0, d);
            double v = result.var[d] + paired_cross_sum(state, posterior, branches);
            if (v < 0.0) {
                ++result.var_clamps;
                v = 0.0;
            }
            result.var[d] = v;
        }
    }
    return result;
}

DerivativeMoments derivative_moments_enumerated(const net::NetworkSpec& spec,
                                                const net::ParameterPosterior& posterior,
                                                const engine::ForwardState& state) {
    if (spec.output_width() != 1) {
        throw std::invalid_argument("deriv: derivative_moments requires output width 1");
    }
    DerivativeMoments result;
    result.mean.assign(spec.input_width, 0.0);
    result.var.assign(spec.input_width, 0.0);
    result.cov_with_input.assign(spec.input_width, 0.0);
    result.cross_paths_paired = pairing_enabled(spec);

    for (int d = 0; d < spec.input_width; ++d) {
        const auto branches = enumerate_branches(state, posterior, 0, 0, d);
        double mean = 0.0, var = 0.0, cov = 0.0;
        for (const auto& b : branches) {
            const BranchWalk walk = walk_branch(b);
            mean += walk.m;
            var += walk.v;  // raw; the per-dimension total is clamped below
            cov += branch_cov_with_input(b);
        }
        if (result.cross_paths_paired) var += paired_cross_sum(state, posterior, branches);
        if (var < 0.0) {
            ++result.var_clamps;
            var = 0.0;
        }
        result.mean[d] = mean;
        result.var[d] = var;
        result.cov_with_input[d] = cov;
    }
    return result;
}

double branch_pair_cov(const engine::ForwardState& state, const net::ParameterPosterior& posterior,
                       const BranchFactors& p, const BranchFactors& q) {
    if (p.steps.size() != q.steps.size() || p.units.front() != q.units.front()) {
        throw std::invalid_argument("deriv: branch pair must share output unit and depth");
    }
    const int top = static_cast<int>(state.spec.layers.size());
    const int n_steps = static_cast<int>(p.steps.size());

    // cov(X_p^(level+1), Y_q X_q at `level`) correction factor, mirroring the
    // single-branch covariance term with the cross-branch covariances.
    auto cross_kappa = [&](const BranchFactors& a, const BranchFactors& b, int s) {
        const int level = top - 1 - s;
        const int up_a = a.units[static_cast<std::size_t>(s)];
        const int up_b = b.units[static_cast<std::size_t>(s)];
        const int low_b = b.units[static_cast<std::size_t>(s) + 1];
        const auto& step_b = b.steps[static_cast<std::size_t>(s)];
        double cov_xy = 0.0;
        if (up_a == up_b) {
            cov_xy = step_covs(state, posterior, level, up_a, low_b).with_weight;
        }
        const double cov_xx =
            step_covs(state, posterior, level, up_a, low_b).with_lower_dphi;
        return cov_xy * step_b.x.mean + cov_xx * step_b.y.mean;
    };

    double c = p.top_x.var;  // shared output phi' factor
    double m_p = p.top_x.mean, m_q = q.top_x.mean;
    double u_p = 1.0, u_q = 1.0;

    for (int s = 0; s < n_steps; ++s) {
        const auto& sp = p.steps[static_cast<std::size_t>(s)];
        const auto& sq = q.steps[static_cast<std::size_t>(s)];
        const int up_p = p.units[static_cast<std::size_t>(s)];
        const int up_q = q.units[static_cast<std::size_t>(s)];
        const int low_p = p.units[static_cast<std::size_t>(s) + 1];
        const int low_q = q.units[static_cast<std::size_t>(s) + 1];

        const double eyx_p = sp.y.mean * sp.x.mean;
        const double eyx_q = sq.y.mean * sq.x.mean;
        const double c_a1b2 = cross_kappa(p, q, s) * u_p;
        const double c_b1a2 = cross_kappa(q, p, s) * u_q;
        const double c_yy = (up_p == up_q && low_p == low_q) ? sp.y.var : 0.0;
        const double c_xx = (low_p == low_q) ? sp.x.var : 0.0;
        const double c_b1b2 = c_yy * c_xx + c_yy * sp.x.mean * sq.x.mean +
                              c_xx * sp.y.mean * sq.y.mean;

        const double c_new = c * c_b1b2 + c_a1b2 * c_b1a2 + c * eyx_p * eyx_q +
                             c_a1b2 * eyx_p * m_q + c_b1a2 * m_p * eyx_q +
                             c_b1b2 * m_p * m_q;

        const double cp = (sp.cov_xup_y * sp.x.mean + sp.cov_xup_x * sp.y.mean) * u_p;
        const double cq = (sq.cov_xup_y * sq.x.mean + sq.cov_xup_x * sq.y.mean) * u_q;
        const double m_p_new = m_p * eyx_p + cp;
        const double m_q_new = m_q * eyx_q + cq;
        u_p = sp.y.mean * m_p;
        u_q = sq.y.mean * m_q;
        m_p = m_p_new;
        m_q = m_q_new;
        c = c_new;
    }
    return c;
}

}  // namespace tagi::deriv
