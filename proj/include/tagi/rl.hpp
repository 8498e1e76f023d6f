#pragma once

#include <memory>
#include <string>
#include <vector>

#include "tagi/engine.hpp"
#include "tagi/net.hpp"
#include "tagi/rng.hpp"

namespace tagi::rl {

struct RlConfig {
    int horizon = 1024;
    double sigma_v0 = 2.0;
    double decay = 0.9999;     // applied once per 1024 environment steps
    double sigma_v_min = 0.3;
    double gamma = 0.99;
    int batch = 16;
    int epochs = 1;
    std::uint64_t seed = 0;
    long max_steps = 100000;
    // Ablation: drive the action inference with the signed step (alpha = +1)
    // instead of the stationary-point step.
    bool signed_action_step = false;
    int action_inference_iters = 1;
};

struct Transition {
    std::vector<double> state, action;
    double reward = 0.0;
};

struct TdTargets {
    std::vector<double> mean, sd;
};

// Deterministic simulated environment; owns its randomness.
class Environment {
  public:
    virtual ~Environment() = default;
    virtual int state_dim() const = 0;
    virtual int action_dim() const = 0;
    virtual double action_low() const = 0;
    virtual double action_high() const = 0;
    virtual std::vector<double> reset() = 0;
    struct StepResult {
        std::vector<double> state;
        double reward = 0.0;
        bool done = false;
    };
    virtual StepResult step(const std::vector<double>& action) = 0;
};

// Built-in environments: "quadratic_bandit", "point_mass", "constant_zero".
std::unique_ptr<Environment> make_env(const std::string& name, std::uint64_t seed);

// Network shapes used by the training loop.
net::NetworkSpec policy_spec(int state_dim, int action_dim);
net::NetworkSpec value_spec(int state_dim, int action_dim);

// Draws an action from the policy's Gaussian predictive with sigma_v^2 added
// to each output variance, clipped to [low, high].
std::vector<double> sample_action(const net::NetworkSpec& spec,
                                  const net::ParameterPosterior& posterior,
                                  const std::vector<double>& state, double sigma_v, double low,
                                  double high, rng::Rng& rng);

// Backward recursion over the stored transitions, seeded with the bootstrap
// moments: mean_j = r_j + gamma * mean_{j+1}, var_j = gamma^2 var_{j+1} + sigma_v^2.
TdTargets td_targets(const std::vector<Transition>& memory, double bootstrap_mean,
                     double bootstrap_sd, double gamma, double sigma_v);

// One heteroscedastic training pass of the value network on ([s; a], target).
engine::EpochStats update_value(const net::NetworkSpec& spec, net::ParameterPosterior& posterior,
                                const std::vector<Transition>& memory, const TdTargets& targets,
                                const RlConfig& config, std::uint64_t seed);

struct PolicyUpdateStats {
    int skipped_states = 0;  // zero derivative variance
    int var_clamps = 0;
};

// Per state: infer the action that zeroes dq/da through the value network,
// then condition the policy output on that inferred action. The value
// network is read-only here.
PolicyUpdateStats update_policy(const net::NetworkSpec& policy,
                                net::ParameterPosterior& policy_post,
                                const net::NetworkSpec& qnet,
                                const net::ParameterPosterior& qnet_post,
                                const std::vector<std::vector<double>>& states, double sigma_v,
                                const RlConfig& config, double action_low, double action_high);

struct StepRow {
    long step = 0;
    long episode = 0;
    double reward = 0.0;
    double sigma_v = 0.0;
    double moving_avg_100 = 0.0;  // trailing average of completed episode returns
};

struct RewardTrace {
    std::vector<StepRow> rows;
    std::vector<double> episode_returns;
    int skipped_states = 0;
};

// Full training loop: act and store every step; every `horizon` steps compute
// the bootstrap at the next state, build TD targets, update the value then the
// policy, and clear the memory. sigma_v follows
// max(sigma_v_min, sigma_v0 * decay^floor(steps/1024)).
RewardTrace train(Environment& env, const net::NetworkSpec& policy,
                  net::ParameterPosterior& policy_post, const net::NetworkSpec& qnet,
                  net::ParameterPosterior& qnet_post, const RlConfig& config);

}  // namespace tagi::rl
