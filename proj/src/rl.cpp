#include "tagi/rl.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "tagi/deriv.hpp"

namespace tagi::rl {

namespace {

class QuadraticBandit final : public Environment {
  public:
    explicit QuadraticBandit(std::uint64_t) {}
    int state_dim() const override { return 1; }
    int action_dim() const override { return 1; }
    double action_low() const override { return -1.0; }
    double action_high() const override { return 1.0; }
    std::vector<double> reset() override { return {1.0}; }
    StepResult step(const std::vector<double>& action) override {
        const double a = action.at(0);
        const double d = a - 0.4;
        return {{1.0}, -d * d, true};
    }
};

class PointMass final : public Environment {
  public:
    explicit PointMass(std::uint64_t seed) : rng_(seed) {}
    int state_dim() const override { return 2; }
    int action_dim() const override { return 1; }
    double action_low() const override { return -1.0; }
    double action_high() const override { return 1.0; }
    std::vector<double> reset() override {
        pos_ = rng_.uniform(-1.0, 1.0);
        vel_ = 0.0;
        t_ = 0;
        return {pos_, vel_};
    }
    StepResult step(const std::vector<double>& action) override {
        const double f = std::clamp(action.at(0), -1.0, 1.0);
        vel_ = std::clamp(vel_ + f * kDt, -2.0, 2.0);
        pos_ = std::clamp(pos_ + vel_ * kDt, -2.0, 2.0);
        ++t_;
        const double reward = -pos_ * pos_ - 0.01 * f * f;
        return {{pos_, vel_}, reward, t_ >= 200};
    }

  private:
    static constexpr double kDt = 0.05;
    rng::Rng rng_;
    double pos_ = 0.0, vel_ = 0.0;
    int t_ = 0;
};

class ConstantZero final : public Environment {
  public:
    explicit ConstantZero(std::uint64_t) {}
    int state_dim() const override { return 1; }
    int action_dim() const override { return 1; }
    double action_low() const override { return -1.0; }
    double action_high() const override { return 1.0; }
    std::vector<double> reset() override {
        t_ = 0;
        return {0.0};
    }
    StepResult step(const std::vector<double>&) override {
        ++t_;
        return {{0.0}, 0.0, t_ >= 200};
    }

  private:
    int t_ = 0;
};

}  // namespace

std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed) {
    if (name == "quadratic_bandit") return std::make_unique<QuadraticBandit>(seed);
    if (name == "point_mass") return std::make_unique<PointMass>(seed);
    if (name == "constant_zero") return std::make_unique<ConstantZero>(seed);
    throw std::invalid_argument("rl: unknown environment: " + name);
}

net::NetworkSpec policy_spec(int state_dim, int action_dim) {
    net::NetworkSpec spec;
    spec.input_width = state_dim;
    spec.layers = {{128, gma::ActivationKind::relu},
                   {128, gma::ActivationKind::relu},
                   {action_dim, gma::ActivationKind::tanh}};
    return spec;
}

net::NetworkSpec value_spec(int state_dim, int action_dim) {
    net::NetworkSpec spec;
    spec.input_width = state_dim + action_dim;
    spec.layers = {{128, gma::ActivationKind::tanh},
                   {128, gma::ActivationKind::relu},
                   {128, gma::ActivationKind::relu},
                   {1, gma::ActivationKind::identity}};
    return spec;
}

std::vector<double> sample_action(const net::NetworkSpec& spec,
                                  const net::ParameterPosterior& posterior,
                                  const std::vector<double>& state, double sigma_v, double low,
                                  double high, rng::Rng& rng) {
    const auto [mean, var] = engine::predict(spec, posterior, state);
    std::vector<double> action(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double sd = std::sqrt(var[i] + sigma_v * sigma_v);
        action[i] = std::clamp(rng.normal(mean[i], sd), low, high);
    }
    return action;
}

TdTargets td_targets(const std::vector<Transition>& memory, double bootstrap_mean,
                     double bootstrap_sd, double gamma, double sigma_v) {
    if (memory.empty()) throw std::invalid_argument("rl: td_targets on empty memory");
    const std::size_t n = memory.size();
    TdTargets out;
    out.mean.resize(n);
    out.sd.resize(n);
    double m = bootstrap_mean;
    double v = bootstrap_sd * bootstrap_sd;
    for (std::size_t j = n; j-- > 0;) {
        m = memory[j].reward + gamma * m;
        v = gamma * gamma * v + sigma_v * sigma_v;
        out.mean[j] = m;
        out.sd[j] = std::sqrt(v);
    }
    return out;
}

engine::EpochStats update_value(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                                const std::vector<Transition>& memory, const TdTargets& targets,
                                const RlConfig& config, std::uint64_t seed) {
    if (memory.size() != targets.mean.size()) {
        throw std::invalid_argument("rl: memory/targets size mismatch");
    }
    std::vector<std::vector<double>> inputs, ys, noise;
    inputs.reserve(memory.size());
    ys.reserve(memory.size());
    noise.reserve(memory.size());
    for (std::size_t j = 0; j < memory.size(); ++j) {
        std::vector<double> row = memory[j].state;
        row.insert(row.end(), memory[j].action.begin(), memory[j].action.end());
        inputs.push_back(std::move(row));
        ys.push_back({targets.mean[j]});
        noise.push_back({targets.sd[j] * targets.sd[j]});
    }
    engine::EpochStats stats;
    for (int e = 0; e < config.epochs; ++e) {
        stats = engine::train_epoch(spec, posterior, inputs, ys, noise,
                                    rng::Rng::derive(seed, static_cast<std::uint64_t>(e)),
                                    config.batch);
    }
    return stats;
}

PolicyUpdateStats update_policy(const net::NetworkSpec& policy,
                                net::ParameterPosterior& policy_post,
                                const net::NetworkSpec& qnet,
                                const net::ParameterPosterior& qnet_post,
                                const std::vector<std::vector<double>>& states, double sigma_v,
                                const RlConfig& config, double action_low, double action_high) {
    PolicyUpdateStats stats;
    const int s_dim = policy.input_width;
    const int a_dim = policy.output_width();
    if (qnet.input_width != s_dim + a_dim) {
        throw std::invalid_argument("rl: qnet input width must be state+action");
    }

    engine::BackwardOptions param_only;
    param_only.update_params = true;
    param_only.update_input = false;

    for (const auto& s : states) {
        const engine::ForwardState fwd_p = engine::forward(
            policy, policy_post, {s, std::vector<double>(s.size(), 0.0)});
        const auto& head = fwd_p.output();

        engine::InputBelief q_in;
        q_in.mean = s;
        q_in.var.assign(s.size(), 0.0);
        for (int i = 0; i < a_dim; ++i) {
            q_in.mean.push_back(head.act[i].a_mean);
            q_in.var.push_back(head.act[i].a_var + sigma_v * sigma_v);
        }

        bool skipped = false;
        for (int it = 0; it < config.action_inference_iters && !skipped; ++it) {
            const engine::ForwardState fwd_q = engine::forward(qnet, qnet_post, q_in);
            const auto dm = deriv::derivative_moments(qnet, qnet_post, fwd_q);
            stats.var_clamps += dm.var_clamps;
            for (int i = 0; i < a_dim; ++i) {
                const std::size_t d = static_cast<std::size_t>(s_dim + i);
                if (dm.var[d] <= 0.0) {
                    skipped = true;
                    break;
                }
                const double gain = dm.cov_with_input[d] / dm.var[d];
                if (config.signed_action_step) {
                    const double sign = dm.mean[d] >= 0.0 ? 1.0 : -1.0;
                    q_in.mean[d] += sign * std::abs(gain * dm.mean[d]);
                } else {
                    q_in.mean[d] -= gain * dm.mean[d];
                }
                q_in.var[d] -= gain * dm.cov_with_input[d];
                if (q_in.var[d] < 0.0) q_in.var[d] = 0.0;
                q_in.mean[d] = std::clamp(q_in.mean[d], action_low, action_high);
            }
        }
        if (skipped) {
            ++stats.skipped_states;
            continue;
        }

        engine::Observation obs;
        obs.value.assign(static_cast<std::size_t>(a_dim), 0.0);
        obs.noise_var.assign(static_cast<std::size_t>(a_dim), 0.0);
        for (int i = 0; i < a_dim; ++i) {
            obs.value[static_cast<std::size_t>(i)] = q_in.mean[static_cast<std::size_t>(s_dim + i)];
            obs.noise_var[static_cast<std::size_t>(i)] =
                q_in.var[static_cast<std::size_t>(s_dim + i)];
        }
        const auto out_post = engine::condition_output(fwd_p, obs);
        auto back = engine::backward(fwd_p, policy_post, out_post, param_only);
        policy_post = std::move(back.params);
    }
    return stats;
}

RewardTrace train(Environment& env, const net::NetworkSpec& policy,
                  net::ParameterPosterior& policy_post, const net::NetworkSpec& qnet,
                  net::ParameterPosterior& qnet_post, const RlConfig& config) {
    if (config.horizon < 1) throw std::invalid_argument("rl: horizon must be >= 1");
    if (config.sigma_v_min > config.sigma_v0) {
        throw std::invalid_argument("rl: sigma_v_min must be <= sigma_v0");
    }
    if (config.decay <= 0.0 || config.decay > 1.0) {
        throw std::invalid_argument("rl: decay must be in (0, 1]");
    }
    if (config.gamma < 0.0 || config.gamma > 1.0) {
        throw std::invalid_argument("rl: gamma must be in [0, 1]");
    }

    rng::Rng rng(config.seed);
    RewardTrace trace;
    trace.rows.reserve(static_cast<std::size_t>(config.max_steps));

    std::vector<Transition> memory;
    memory.reserve(static_cast<std::size_t>(config.horizon));

    std::vector<double> state = env.reset();
    long episode = 1;
    double episode_return = 0.0;
    double trailing_sum = 0.0;  // over the last <=100 completed episodes
    std::uint64_t block = 0;

    for (long step = 1; step <= config.max_steps; ++step) {
        const long k = (step - 1) / 1024;
        const double sigma_v =
            std::max(config.sigma_v_min, config.sigma_v0 * std::pow(config.decay, k));

        const auto action = sample_action(policy, policy_post, state, sigma_v, env.action_low(),
                                          env.action_high(), rng);
        const auto sr = env.step(action);
        memory.push_back({state, action, sr.reward});
        episode_return += sr.reward;

        if (sr.done) {
            trace.episode_returns.push_back(episode_return);
            trailing_sum += episode_return;
            if (trace.episode_returns.size() > 100) {
                trailing_sum -= trace.episode_returns[trace.episode_returns.size() - 101];
            }
            episode_return = 0.0;
            ++episode;
            state = env.reset();
        } else {
            state = sr.state;
        }

        const std::size_t completed = trace.episode_returns.size();
        const double avg =
            completed == 0 ? 0.0
                           : trailing_sum / static_cast<double>(std::min<std::size_t>(completed, 100));
        trace.rows.push_back({step, episode, sr.reward, sigma_v, avg});

        if (static_cast<int>(memory.size()) == config.horizon) {
            const auto boot_action =
                sample_action(policy, policy_post, state, sigma_v, env.action_low(),
                              env.action_high(), rng);
            std::vector<double> boot_in = state;
            boot_in.insert(boot_in.end(), boot_action.begin(), boot_action.end());
            const auto [q_mean, q_var] = engine::predict(qnet, qnet_post, boot_in);
            const auto targets =
                td_targets(memory, q_mean[0], std::sqrt(q_var[0]), config.gamma, sigma_v);

            update_value(qnet, qnet_post, memory, targets, config,
                         rng::Rng::derive(config.seed, 0x10000000ull + block));

            std::vector<std::vector<double>> states;
            states.reserve(memory.size());
            for (const auto& t : memory) states.push_back(t.state);
            const auto pstats =
                update_policy(policy, policy_post, qnet, qnet_post, states, sigma_v, config,
                              env.action_low(), env.action_high());
            trace.skipped_states += pstats.skipped_states;

            memory.clear();
            ++block;
        }
    }
    return trace;
}

}  // namespace tagi::rl
