#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tagi/data.hpp"
#include "tagi/engine.hpp"
#include "tagi/net.hpp"

namespace tagi::attack {

struct AttackConfig {
    double sigma_x = 0.03;  // prior sd on every pixel
    int max_epochs = 100;
    int target = -1;  // class index; < 0 selects the untargeted mode helpers
    std::uint64_t seed = 0;
    // max_epochs is a ceiling; with early_stop the loop ends at the first
    // iteration whose prediction already matches the goal.
    bool early_stop = false;
    double pixel_lo = 0.0, pixel_hi = 1.0;
    // Observation noise sd for the label constraint. Unset falls back to the
    // model's training noise; smaller values give each inference iteration
    // more pull on the input belief.
    std::optional<double> sigma_v{};
    // Per-pixel, per-iteration cap on the mean move (trust region for the
    // local linearization); 0 disables the cap.
    double step_cap = 0.01;
};

struct AttackResult {
    std::vector<double> x_mean, x_var;  // perturbed input belief
    int iterations = 0;
    bool success = false;
    int pred_before = -1, pred_after = -1;
    double l2 = 0.0, linf = 0.0;
};

// Recursive input inference toward the one-hot observation of config.target;
// parameters stay frozen, pixel means are clamped to the data range after
// every iteration.
AttackResult attack_targeted(const net::Model& model, const std::vector<double>& x,
                             const AttackConfig& config);

// Pushes the input away from `true_label` by observing only that output at
// its one-hot "off" value; the other outputs stay unobserved.
AttackResult attack_untargeted(const net::Model& model, const std::vector<double>& x,
                               int true_label, const AttackConfig& config);

// Outcome of both attack modes on one dataset row.
struct ItemOutcome {
    int label = 0, clean_pred = 0, target = 0;
    AttackResult targeted, untargeted;
};

struct AttackReport {
    int n = 0;
    double clean_error = 0.0;
    double targeted_error = 0.0, targeted_success = 0.0;
    double untargeted_error = 0.0, untargeted_success = 0.0;
    double targeted_mean_linf = 0.0, targeted_mean_l2 = 0.0;
    double untargeted_mean_linf = 0.0, untargeted_mean_l2 = 0.0;
    double mean_iterations_targeted = 0.0, mean_iterations_untargeted = 0.0;
    std::vector<ItemOutcome> items;  // index-aligned with the dataset rows
};

// Runs both attack modes over the dataset rows (targets for the targeted mode
// are drawn per-image from seed-derived streams, never equal to the label)
// and aggregates the error rates and perturbation norms. Work items are
// independent; `threads` > 1 fans them out and merges by index.
AttackReport evaluate_attacks(const net::Model& model, const data::Dataset& dataset,
                              const AttackConfig& config, int threads = 1);

// Machine-readable form of the report, schema documented in
// docs/attack_report.schema.json.
std::string report_to_json(const AttackReport& report, const AttackConfig& config);

}  // namespace tagi::attack
