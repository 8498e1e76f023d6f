#include "tagi/attack.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "tagi/rng.hpp"

namespace tagi::attack {

namespace {

void validate_common(const net::Model& model, const std::vector<double>& x,
                     const AttackConfig& config) {
    if (model.epochs_trained == 0) {
        throw std::invalid_argument("attack: model has not been trained");
    }
    if (static_cast<int>(x.size()) != model.spec.input_width) {
        throw std::invalid_argument("attack: input width mismatch");
    }
    for (const double v : x) {
        if (v < config.pixel_lo || v > config.pixel_hi) {
            throw std::invalid_argument("attack: input outside the data range");
        }
    }
    if (config.sigma_x < 0.0) throw std::invalid_argument("attack: sigma_x must be >= 0");
    if (config.max_epochs < 0) throw std::invalid_argument("attack: max_epochs must be >= 0");
    if (config.sigma_v && *config.sigma_v <= 0.0) {
        throw std::invalid_argument("attack: sigma_v must be > 0");
    }
}

double obs_noise_var(const net::Model& model, const AttackConfig& config) {
    const double sv = config.sigma_v.value_or(model.obs.sigma_v);
    return sv * sv;
}

void finish_norms(AttackResult& r, const std::vector<double>& x) {
    double l2 = 0.0, linf = 0.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
        const double diff = std::abs(r.x_mean[d] - x[d]);
        l2 += diff * diff;
        linf = std::max(linf, diff);
    }
    r.l2 = std::sqrt(l2);
    r.linf = linf;
}

// Shared inference loop: `obs` is fixed across iterations, the posterior
// input belief of one iteration is the prior of the next.
AttackResult run_attack(const net::Model& model, const std::vector<double>& x,
                        const AttackConfig& config, const engine::Observation& obs,
                        int goal_class, bool goal_is_avoid) {
    // White-box setting: the attacker knows the parameters, so the inference
    // loop treats them as point values and only the input stays uncertain.
    net::ParameterPosterior point = model.posterior;
    for (auto& layer : point.layers) {
        std::fill(layer.w_var.begin(), layer.w_var.end(), 0.0);
        std::fill(layer.b_var.begin(), layer.b_var.end(), 0.0);
    }

    AttackResult result;
    result.pred_before = engine::predict_class(model.spec, model.posterior, x);
    result.x_mean = x;
    result.x_var.assign(x.size(), config.sigma_x * config.sigma_x);

    const bool done_already = goal_is_avoid ? result.pred_before != goal_class
                                            : result.pred_before == goal_class;
    if (done_already) {
        result.pred_after = result.pred_before;
        result.success = true;
        return result;
    }

    engine::BackwardOptions opts;
    opts.update_params = false;
    opts.update_input = true;

    engine::InputBelief belief{result.x_mean, result.x_var};
    for (int e = 1; e <= config.max_epochs; ++e) {
        const engine::ForwardState fwd = engine::forward(model.spec, point, belief);
        const auto out_post = engine::condition_output(fwd, obs);
        auto back = engine::backward(fwd, point, out_post, opts);
        // Trust region for the local linearization: the conditional mean move
        // is only trustworthy near the expansion point, so large per-pixel
        // jumps are truncated instead of followed.
        if (config.step_cap > 0.0) {
            for (std::size_t d = 0; d < belief.mean.size(); ++d) {
                const double delta = std::clamp(back.input.mean[d] - belief.mean[d],
                                                -config.step_cap, config.step_cap);
                back.input.mean[d] = belief.mean[d] + delta;
            }
        }
        belief = std::move(back.input);
        for (double& m : belief.mean) m = std::clamp(m, config.pixel_lo, config.pixel_hi);
        result.iterations = e;
        if (config.early_stop) {
            const int pred = engine::predict_class(model.spec, model.posterior, belief.mean);
            const bool hit = goal_is_avoid ? pred != goal_class : pred == goal_class;
            if (hit) break;
        }
    }
    result.x_mean = belief.mean;
    result.x_var = belief.var;
    result.pred_after = engine::predict_class(model.spec, model.posterior, result.x_mean);
    result.success = goal_is_avoid ? result.pred_after != goal_class
                                   : result.pred_after == goal_class;
    finish_norms(result, x);
    return result;
}

}  // namespace

AttackResult attack_targeted(const net::Model& model, const std::vector<double>& x,
                             const AttackConfig& config) {
    validate_common(model, x, config);
    const int classes = model.spec.output_width();
    if (config.target < 0 || config.target >= classes) {
        throw std::invalid_argument("attack: target class out of range");
    }
    engine::Observation obs;
    obs.value.assign(static_cast<std::size_t>(classes), 0.0);
    obs.value[static_cast<std::size_t>(config.target)] = 1.0;
    obs.noise_var.assign(static_cast<std::size_t>(classes), obs_noise_var(model, config));
    return run_attack(model, x, config, obs, config.target, /*goal_is_avoid=*/false);
}

AttackResult attack_untargeted(const net::Model& model, const std::vector<double>& x,
                               int true_label, const AttackConfig& config) {
    validate_common(model, x, config);
    const int classes = model.spec.output_width();
    if (true_label < 0 || true_label >= classes) {
        throw std::invalid_argument("attack: true label out of range");
    }
    engine::Observation obs;
    obs.value.assign(static_cast<std::size_t>(classes), 0.0);
    obs.noise_var.assign(static_cast<std::size_t>(classes),
                         std::numeric_limits<double>::infinity());
    obs.noise_var[static_cast<std::size_t>(true_label)] = obs_noise_var(model, config);
    return run_attack(model, x, config, obs, true_label, /*goal_is_avoid=*/true);
}

AttackReport evaluate_attacks(const net::Model& model, const data::Dataset& dataset,
                              const AttackConfig& config, int threads) {
    if (dataset.size() == 0) throw std::invalid_argument("attack: empty dataset");
    if (threads < 1) threads = 1;
    const int n = static_cast<int>(dataset.size());
    const int classes = model.spec.output_width();

    std::vector<ItemOutcome> items(static_cast<std::size_t>(n));

    auto work = [&](int i) {
        ItemOutcome& item = items[static_cast<std::size_t>(i)];
        const auto& x = dataset.inputs[static_cast<std::size_t>(i)];
        item.label = data::label_of(dataset.targets[static_cast<std::size_t>(i)]);
        item.clean_pred = engine::predict_class(model.spec, model.posterior, x);

        rng::Rng rng(rng::Rng::derive(config.seed, static_cast<std::uint64_t>(i)));
        int target = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes - 1)));
        if (target >= item.label) ++target;

        item.target = target;
        AttackConfig c = config;
        c.target = target;
        item.targeted = attack_targeted(model, x, c);
        item.untargeted = attack_untargeted(model, x, item.label, c);
    };

    if (threads == 1) {
        for (int i = 0; i < n; ++i) work(i);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (int i = t; i < n; i += threads) work(i);
            });
        }
        for (auto& th : pool) th.join();
    }

    AttackReport rep;
    rep.n = n;
    for (const ItemOutcome& item : items) {
        rep.clean_error += item.clean_pred != item.label ? 1.0 : 0.0;
        rep.targeted_error += item.targeted.pred_after != item.label ? 1.0 : 0.0;
        rep.targeted_success += item.targeted.success ? 1.0 : 0.0;
        rep.untargeted_error += item.untargeted.pred_after != item.label ? 1.0 : 0.0;
        rep.untargeted_success += item.untargeted.success ? 1.0 : 0.0;
        rep.targeted_mean_linf += item.targeted.linf;
        rep.targeted_mean_l2 += item.targeted.l2;
        rep.untargeted_mean_linf += item.untargeted.linf;
        rep.untargeted_mean_l2 += item.untargeted.l2;
        rep.mean_iterations_targeted += item.targeted.iterations;
        rep.mean_iterations_untargeted += item.untargeted.iterations;
    }
    const double dn = static_cast<double>(n);
    rep.clean_error /= dn;
    rep.targeted_error /= dn;
    rep.targeted_success /= dn;
    rep.untargeted_error /= dn;
    rep.untargeted_success /= dn;
    rep.targeted_mean_linf /= dn;
    rep.targeted_mean_l2 /= dn;
    rep.untargeted_mean_linf /= dn;
    rep.untargeted_mean_l2 /= dn;
    rep.mean_iterations_targeted /= dn;
    rep.mean_iterations_untargeted /= dn;
    rep.items = std::move(items);
    return rep;
}

std::string report_to_json(const AttackReport& report, const AttackConfig& config) {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["config"] = {{"sigma_x", config.sigma_x},
                   {"max_epochs", config.max_epochs},
                   {"seed", config.seed},
                   {"early_stop", config.early_stop},
                   {"sigma_v", config.sigma_v ? nlohmann::ordered_json(*config.sigma_v)
                                              : nlohmann::ordered_json(nullptr)},
                   {"step_cap", config.step_cap}};
    j["n"] = report.n;
    j["clean_error"] = report.clean_error;
    j["targeted"] = {{"error", report.targeted_error},
                     {"success", report.targeted_success},
                     {"mean_linf", report.targeted_mean_linf},
                     {"mean_l2", report.targeted_mean_l2},
                     {"mean_iterations", report.mean_iterations_targeted}};
    j["untargeted"] = {{"error", report.untargeted_error},
                       {"success", report.untargeted_success},
                       {"mean_linf", report.untargeted_mean_linf},
                       {"mean_l2", report.untargeted_mean_l2},
                       {"mean_iterations", report.mean_iterations_untargeted}};
    return j.dump(2) + "\n";
}

}  // namespace tagi::attack
