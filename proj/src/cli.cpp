#include "tagi/cli.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tagi/attack.hpp"
#include "tagi/data.hpp"
#include "tagi/engine.hpp"
#include "tagi/optimize.hpp"
#include "tagi/oracle.hpp"
#include "tagi/rl.hpp"
#include "tagi/rng.hpp"

namespace tagi::cli {

namespace {

constexpr std::uint64_t kDefaultSeed = 9;

std::string format_u64(std::uint64_t v) { return std::to_string(v); }

// One CSV cell; our fields are numbers and bare identifiers, so RFC 4180
// quoting never triggers, but keep the escape path for safety.
std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cli: cannot write '" + path + "'");
    const auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << ',';
            out << csv_cell(cells[i]);
        }
        out << "\r\n";
    };
    line(header);
    for (const auto& row : rows) line(row);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cli: cannot write '" + path + "'");
    out << text;
}

// Shared [global] handling: effective seed/output_dir recorded back into the
// config so resolved.conf shows what the run actually used.
struct GlobalArgs {
    std::uint64_t seed = kDefaultSeed;
    std::string out_dir = ".";
    int threads = 1;
};

GlobalArgs resolve_global(config::Config& cfg) {
    GlobalArgs g;
    g.seed = cfg.get_u64("global", "seed", kDefaultSeed);
    g.out_dir = cfg.get("global", "output_dir", ".");
    g.threads = cfg.get_int("global", "threads", 1);
    if (g.threads < 1) throw config::UsageError("config: global.threads must be >= 1");
    std::filesystem::create_directories(g.out_dir);
    cfg.set("global", "seed", format_u64(g.seed));
    cfg.set("global", "output_dir", g.out_dir);
    return g;
}

std::string path_join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

void write_resolved(const config::Config& cfg, const std::string& out_dir) {
    write_text(path_join(out_dir, "resolved.conf"), config::render(cfg));
}

data::Dataset load_train_dataset(config::Config& cfg, const std::string& section,
                                 std::uint64_t seed, double toy_sigma_v) {
    const std::string kind = cfg.get(section, "dataset_kind", "toy");
    cfg.set(section, "dataset_kind", kind);
    if (kind == "toy") {
        const int n = cfg.get_int(section, "toy_n", 400);
        if (n < 1) throw config::UsageError("config: " + section + ".toy_n must be >= 1");
        cfg.set(section, "toy_n", std::to_string(n));
        return data::toy_cubic(n, toy_sigma_v, rng::Rng::derive(seed, 1));
    }
    const std::string path = cfg.get(section, "dataset", "");
    if (path.empty()) {
        throw config::UsageError("config: " + section + ".dataset is required for dataset_kind " +
                                 kind);
    }
    if (kind == "csv") return data::load_csv(path);
    if (kind == "idx") {
        const std::string labels = cfg.get(section, "labels", "");
        if (labels.empty()) {
            throw config::UsageError("config: " + section + ".labels is required for idx data");
        }
        return data::load_idx(path, labels);
    }
    throw config::UsageError("config: unknown dataset_kind '" + kind + "'");
}

optimize::Alpha parse_alpha(const std::string& name) {
    if (name == "none") return optimize::Alpha::none;
    if (name == "plus" || name == "+1") return optimize::Alpha::plus;
    if (name == "minus" || name == "-1") return optimize::Alpha::minus;
    throw config::UsageError("config: optimize.alpha must be none, plus, or minus");
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) return "nan";
    return std::string(buf, ptr);
}

net::NetworkSpec parse_arch(const std::string& arch) {
    net::NetworkSpec spec;
    std::vector<std::string> tokens;
    std::string cur;
    for (const char c : arch) {
        if (c == '-') {
            tokens.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    tokens.push_back(cur);
    if (tokens.size() < 2) {
        throw config::UsageError("arch: need an input width and at least one layer in '" + arch +
                                 "'");
    }
    const auto parse_width = [&arch](const std::string& tok, std::size_t* digits) {
        std::size_t i = 0;
        while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
        if (i == 0) throw config::UsageError("arch: expected a width in '" + arch + "'");
        *digits = i;
        const int w = std::stoi(tok.substr(0, i));
        if (w < 1) throw config::UsageError("arch: widths must be >= 1 in '" + arch + "'");
        return w;
    };
    std::size_t digits = 0;
    spec.input_width = parse_width(tokens[0], &digits);
    if (digits != tokens[0].size()) {
        throw config::UsageError("arch: the input token takes no activation in '" + arch + "'");
    }
    for (std::size_t t = 1; t < tokens.size(); ++t) {
        const int width = parse_width(tokens[t], &digits);
        const std::string name = tokens[t].substr(digits);
        net::LayerSpec layer;
        layer.width = width;
        layer.activation =
            name.empty() ? gma::ActivationKind::identity : net::activation_from_name(name);
        spec.layers.push_back(layer);
    }
    return spec;
}

int cmd_train(config::Config& cfg) {
    const GlobalArgs g = resolve_global(cfg);
    const double sigma_v = cfg.get_double("train", "sigma_v", 0.1);
    if (sigma_v < 0.0) throw config::UsageError("config: train.sigma_v must be >= 0");
    const int epochs = cfg.get_int("train", "epochs", 50);
    if (epochs < 0) throw config::UsageError("config: train.epochs must be >= 0");
    const int batch = cfg.get_int("train", "batch", 1);
    if (batch < 1) throw config::UsageError("config: train.batch must be >= 1");

    data::Dataset ds = load_train_dataset(cfg, "train", g.seed, sigma_v);
    const int subset = cfg.get_int("train", "subset", 0);
    if (subset < 0) throw config::UsageError("config: train.subset must be >= 0");
    if (subset > 0) ds = data::subset(ds, subset, rng::Rng::derive(g.seed, 2));

    const std::string default_arch =
        cfg.get("train", "dataset_kind", "toy") == "toy" ? "1-64tanh-64relu-1" : "";
    const std::string arch = cfg.get("train", "arch", default_arch);
    if (arch.empty()) throw config::UsageError("config: train.arch is required");
    const net::NetworkSpec spec = parse_arch(arch);
    if (spec.input_width != static_cast<int>(ds.input_width())) {
        throw config::UsageError("config: arch input width " + std::to_string(spec.input_width) +
                                 " does not match dataset width " +
                                 std::to_string(ds.input_width()));
    }
    if (spec.output_width() != static_cast<int>(ds.target_width())) {
        throw config::UsageError("config: arch output width does not match dataset targets");
    }

    net::Model model;
    model.spec = spec;
    model.posterior = net::init_posterior(spec, rng::Rng::derive(g.seed, 3));
    model.obs.sigma_v = sigma_v;
    model.norm = ds.norm;
    model.seed = g.seed;

    std::vector<std::vector<std::string>> rows;
    for (int e = 0; e < epochs; ++e) {
        const engine::EpochStats stats =
            engine::train_epoch(spec, model.posterior, ds.inputs, ds.targets, model.obs,
                                rng::Rng::derive(g.seed, 100 + static_cast<std::uint64_t>(e)),
                                batch);
        rows.push_back({std::to_string(e), format_double(stats.rmse), format_double(stats.nll)});
        model.epochs_trained = e + 1;
    }

    const std::string model_path =
        cfg.get("global", "model_path", path_join(g.out_dir, "model.tagi"));
    net::save_model(model, model_path);
    write_csv(path_join(g.out_dir, "metrics.csv"), {"epoch", "rmse", "nll"}, rows);

    cfg.set("global", "model_path", model_path);
    cfg.set("train", "sigma_v", format_double(sigma_v));
    cfg.set("train", "epochs", std::to_string(epochs));
    cfg.set("train", "batch", std::to_string(batch));
    cfg.set("train", "subset", std::to_string(subset));
    cfg.set("train", "arch", arch);
    write_resolved(cfg, g.out_dir);

    std::cout << "train: " << ds.size() << " examples, " << epochs << " epochs";
    if (!rows.empty()) std::cout << ", final rmse " << rows.back()[1];
    std::cout << ", model " << model_path << "\n";
    return 0;
}

int cmd_optimize(config::Config& cfg) {
    const GlobalArgs g = resolve_global(cfg);
    optimize::OptimizerConfig oc;
    oc.seed = g.seed;
    if (!cfg.has("optimize", "x0")) throw config::UsageError("config: optimize.x0 is required");
    oc.x0_mean = {cfg.get_double("optimize", "x0", 0.0)};
    const std::string alpha = cfg.get("optimize", "alpha", "none");
    oc.alpha = parse_alpha(alpha);
    oc.epochs = cfg.get_int("optimize", "epochs", 50);
    if (oc.epochs < 0) throw config::UsageError("config: optimize.epochs must be >= 0");
    oc.sigma_x0 = cfg.get_double("optimize", "sigma_x0", 0.01);
    if (oc.sigma_x0 <= 0.0) throw config::UsageError("config: optimize.sigma_x0 must be > 0");
    oc.sigma_v = cfg.get_double("optimize", "sigma_v", 0.1);
    if (oc.sigma_v <= 0.0) throw config::UsageError("config: optimize.sigma_v must be > 0");
    const int toy_n = cfg.get_int("optimize", "toy_n", 100);
    if (toy_n < 1) throw config::UsageError("config: optimize.toy_n must be >= 1");
    const std::string arch = cfg.get("optimize", "arch", "1-64tanh-64relu-1");
    const net::NetworkSpec spec = parse_arch(arch);

    const data::Dataset ds = data::toy_cubic(toy_n, oc.sigma_v, rng::Rng::derive(g.seed, 1));
    const optimize::OptimizationTrace trace = optimize::optimize(ds, spec, oc);

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : trace.rows) {
        rows.push_back({std::to_string(r.iter), format_double(r.x_mean), format_double(r.x_var),
                        format_double(r.dz_mean), format_double(r.dz_var),
                        format_double(r.y_mean)});
    }
    write_csv(path_join(g.out_dir, "trace.csv"),
              {"iter", "x_mean", "x_var", "dz_mean", "dz_var", "y_mean"}, rows);

    cfg.set("optimize", "x0", format_double(oc.x0_mean[0]));
    cfg.set("optimize", "alpha", alpha);
    cfg.set("optimize", "epochs", std::to_string(oc.epochs));
    cfg.set("optimize", "sigma_x0", format_double(oc.sigma_x0));
    cfg.set("optimize", "sigma_v", format_double(oc.sigma_v));
    cfg.set("optimize", "toy_n", std::to_string(toy_n));
    cfg.set("optimize", "arch", arch);
    write_resolved(cfg, g.out_dir);

    std::cout << "optimize: final x_mean " << format_double(trace.final_belief.mean[0])
              << " x_var " << format_double(trace.final_belief.var[0]);
    if (trace.early_stopped_at) {
        std::cout << " (early stop at iteration " << *trace.early_stopped_at << ")";
    }
    std::cout << "\n";
    return 0;
}

int cmd_attack(config::Config& cfg) {
    const GlobalArgs g = resolve_global(cfg);
    const std::string model_path = cfg.get("global", "model_path", "");
    if (model_path.empty()) {
        throw config::UsageError("config: global.model_path is required for attack");
    }
    const std::string images = cfg.get("attack", "dataset", "");
    const std::string labels = cfg.get("attack", "labels", "");
    if (images.empty() || labels.empty()) {
        throw config::UsageError("config: attack.dataset and attack.labels are required");
    }

    const net::Model model = net::load_model(model_path);
    data::Dataset ds = data::load_idx(images, labels);
    const int subset = cfg.get_int("attack", "subset", 0);
    if (subset < 0) throw config::UsageError("config: attack.subset must be >= 0");
    if (subset > 0) ds = data::subset(ds, subset, rng::Rng::derive(g.seed, 2));
    if (ds.size() == 0) throw config::UsageError("attack: empty dataset");

    attack::AttackConfig ac;
    ac.sigma_x = cfg.get_double("attack", "sigma_x", 0.03);
    if (ac.sigma_x < 0.0) throw config::UsageError("config: attack.sigma_x must be >= 0");
    ac.max_epochs = cfg.get_int("attack", "max_epochs", 100);
    if (ac.max_epochs < 0) throw config::UsageError("config: attack.max_epochs must be >= 0");
    ac.seed = g.seed;
    ac.early_stop = cfg.get_bool("attack", "early_stop", false);
    ac.sigma_v = cfg.get_double("attack", "sigma_v", model.obs.sigma_v);
    if (*ac.sigma_v <= 0.0) throw config::UsageError("config: attack.sigma_v must be > 0");
    cfg.set("attack", "sigma_v", format_double(*ac.sigma_v));
    ac.step_cap = cfg.get_double("attack", "step_cap", ac.step_cap);
    if (ac.step_cap < 0.0) throw config::UsageError("config: attack.step_cap must be >= 0");
    cfg.set("attack", "step_cap", format_double(ac.step_cap));

    const attack::AttackReport report = attack::evaluate_attacks(model, ds, ac, g.threads);
    write_text(path_join(g.out_dir, "report.json"), attack::report_to_json(report, ac));

    const std::string per_image = cfg.get("attack", "per_image_csv", "");
    if (!per_image.empty()) {
        std::vector<std::string> header = {"index",
                                           "label",
                                           "target",
                                           "clean_pred",
                                           "targeted_success",
                                           "targeted_iterations",
                                           "targeted_linf",
                                           "targeted_l2",
                                           "untargeted_success",
                                           "untargeted_linf",
                                           "untargeted_l2"};
        const std::size_t width = ds.input_width();
        for (std::size_t p = 0; p < width; ++p) header.push_back("px" + std::to_string(p));
        std::vector<std::vector<std::string>> rows;
        for (std::size_t i = 0; i < report.items.size(); ++i) {
            const attack::ItemOutcome& item = report.items[i];
            std::vector<std::string> row = {std::to_string(i),
                                            std::to_string(item.label),
                                            std::to_string(item.target),
                                            std::to_string(item.clean_pred),
                                            item.targeted.success ? "1" : "0",
                                            std::to_string(item.targeted.iterations),
                                            format_double(item.targeted.linf),
                                            format_double(item.targeted.l2),
                                            item.untargeted.success ? "1" : "0",
                                            format_double(item.untargeted.linf),
                                            format_double(item.untargeted.l2)};
            for (const double px : item.targeted.x_mean) row.push_back(format_double(px));
            rows.push_back(std::move(row));
        }
        write_csv(path_join(g.out_dir, per_image), header, rows);
        cfg.set("attack", "per_image_csv", per_image);
    }

    cfg.set("global", "model_path", model_path);
    cfg.set("global", "threads", std::to_string(g.threads));
    cfg.set("attack", "sigma_x", format_double(ac.sigma_x));
    cfg.set("attack", "max_epochs", std::to_string(ac.max_epochs));
    cfg.set("attack", "early_stop", ac.early_stop ? "true" : "false");
    cfg.set("attack", "subset", std::to_string(subset));
    write_resolved(cfg, g.out_dir);

    std::cout << "attack: n " << report.n << ", clean_error " << format_double(report.clean_error)
              << ", targeted_success " << format_double(report.targeted_success)
              << ", untargeted_error " << format_double(report.untargeted_error) << "\n";
    return 0;
}

int cmd_rl(config::Config& cfg) {
    const GlobalArgs g = resolve_global(cfg);
    const std::string env_name = cfg.get("rl", "env", "");
    if (env_name.empty()) throw config::UsageError("config: rl.env is required");

    rl::RlConfig rc;
    rc.seed = g.seed;
    rc.horizon = cfg.get_int("rl", "horizon", 1024);
    rc.sigma_v0 = cfg.get_double("rl", "sigma_v0", 2.0);
    rc.decay = cfg.get_double("rl", "decay", 0.9999);
    rc.sigma_v_min = cfg.get_double("rl", "sigma_v_min", 0.3);
    rc.gamma = cfg.get_double("rl", "gamma", 0.99);
    rc.batch = cfg.get_int("rl", "batch", 16);
    rc.epochs = cfg.get_int("rl", "epochs", 1);
    rc.max_steps = cfg.get_int("rl", "max_steps", 100000);
    rc.signed_action_step = cfg.get_bool("rl", "signed_action_step", false);

    const auto env = rl::make_env(env_name, rng::Rng::derive(g.seed, 1));
    const net::NetworkSpec policy = rl::policy_spec(env->state_dim(), env->action_dim());
    const net::NetworkSpec qnet = rl::value_spec(env->state_dim(), env->action_dim());
    net::ParameterPosterior policy_post = net::init_posterior(policy, rng::Rng::derive(g.seed, 2));
    net::ParameterPosterior qnet_post = net::init_posterior(qnet, rng::Rng::derive(g.seed, 3));

    const rl::RewardTrace trace = rl::train(*env, policy, policy_post, qnet, qnet_post, rc);

    std::vector<std::vector<std::string>> rows;
    for (const auto& r : trace.rows) {
        rows.push_back({std::to_string(r.step), std::to_string(r.episode),
                        format_double(r.reward), format_double(r.sigma_v),
                        format_double(r.moving_avg_100)});
    }
    write_csv(path_join(g.out_dir, "rewards.csv"),
              {"step", "episode", "reward", "sigma_v", "moving_avg_100"}, rows);

    cfg.set("rl", "env", env_name);
    cfg.set("rl", "horizon", std::to_string(rc.horizon));
    cfg.set("rl", "sigma_v0", format_double(rc.sigma_v0));
    cfg.set("rl", "decay", format_double(rc.decay));
    cfg.set("rl", "sigma_v_min", format_double(rc.sigma_v_min));
    cfg.set("rl", "gamma", format_double(rc.gamma));
    cfg.set("rl", "batch", std::to_string(rc.batch));
    cfg.set("rl", "epochs", std::to_string(rc.epochs));
    cfg.set("rl", "max_steps", std::to_string(rc.max_steps));
    cfg.set("rl", "signed_action_step", rc.signed_action_step ? "true" : "false");
    write_resolved(cfg, g.out_dir);

    std::cout << "rl: " << trace.rows.size() << " steps, " << trace.episode_returns.size()
              << " episodes";
    if (!trace.rows.empty()) {
        std::cout << ", final moving_avg_100 " << format_double(trace.rows.back().moving_avg_100);
    }
    std::cout << "\n";
    return 0;
}

int cmd_oracle(config::Config& cfg) {
    const GlobalArgs g = resolve_global(cfg);
    const int sets = cfg.get_int("oracle", "sets", 50);
    if (sets < 1) throw config::UsageError("config: oracle.sets must be >= 1");
    const long samples = cfg.get_int("oracle", "samples", 1000000);
    if (samples < 100) throw config::UsageError("config: oracle.samples must be >= 100");
    const std::string mutate = cfg.get("oracle", "mutate", "");
    if (!mutate.empty()) {
        const auto names = oracle::check_names();
        if (std::find(names.begin(), names.end(), mutate) == names.end()) {
            throw config::UsageError("config: oracle.mutate names no known check: " + mutate);
        }
    }

    const std::vector<oracle::CheckResult> checks = oracle::run_all(g.seed, mutate, sets, samples);

    nlohmann::ordered_json j;
    j["seed"] = g.seed;
    j["mutate"] = mutate;
    bool all_pass = true;
    j["checks"] = nlohmann::ordered_json::array();
    for (const auto& c : checks) {
        j["checks"].push_back({{"name", c.name},
                               {"pass", c.pass},
                               {"delta", c.delta},
                               {"bound", c.bound},
                               {"detail", c.detail}});
        all_pass = all_pass && c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " delta "
                  << format_double(c.delta) << " bound " << format_double(c.bound) << "\n";
    }
    j["all_pass"] = all_pass;
    write_text(path_join(g.out_dir, "oracle_report.json"), j.dump(2) + "\n");

    cfg.set("oracle", "sets", std::to_string(sets));
    cfg.set("oracle", "samples", std::to_string(samples));
    cfg.set("oracle", "mutate", mutate);
    write_resolved(cfg, g.out_dir);
    return all_pass ? 0 : 1;
}

int run(int argc, const char* const* argv) {
    CLI::App app{"Tractable approximate Gaussian inference for feedforward networks"};
    app.require_subcommand(1);

    struct Flags {
        std::string config_path, output_dir, alpha, mutate;
        std::uint64_t seed = 0;
        int threads = 0, sets = 0;
        double x0 = 0.0;
        bool has_seed = false;
    };
    Flags f;

    const auto add_common = [&f](CLI::App* sub) {
        sub->add_option("--config", f.config_path, "key = value config file");
        sub->add_option("--seed", f.seed, "override [global] seed");
        sub->add_option("--output-dir", f.output_dir, "override [global] output_dir");
        sub->add_option("--threads", f.threads, "override [global] threads");
    };

    CLI::App* train = app.add_subcommand("train", "train a network, write model + metrics");
    CLI::App* opt = app.add_subcommand("optimize", "inference-based optimization trace");
    CLI::App* atk = app.add_subcommand("attack", "adversarial attack report over a dataset");
    CLI::App* rls = app.add_subcommand("rl", "continuous-action RL training rewards");
    CLI::App* orc = app.add_subcommand("oracle", "run the verification oracle suite");
    for (CLI::App* sub : {train, opt, atk, rls, orc}) add_common(sub);
    CLI::Option* alpha_opt = opt->add_option("--alpha", f.alpha, "none | plus | minus");
    CLI::Option* x0_opt = opt->add_option("--x0", f.x0, "starting point");
    CLI::Option* mutate_opt = orc->add_option("--mutate", f.mutate, "bias one named check");
    CLI::Option* sets_opt = orc->add_option("--sets", f.sets, "Monte-Carlo input sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        config::Config cfg;
        if (!f.config_path.empty()) cfg = config::parse_file(f.config_path);
        CLI::App* sub = app.get_subcommands().front();
        const std::string name = sub->get_name();
        config::validate(cfg, name);

        if (sub->count("--seed")) cfg.set("global", "seed", format_u64(f.seed));
        if (sub->count("--output-dir")) cfg.set("global", "output_dir", f.output_dir);
        if (sub->count("--threads")) cfg.set("global", "threads", std::to_string(f.threads));
        if (alpha_opt->count()) cfg.set("optimize", "alpha", f.alpha);
        if (x0_opt->count()) cfg.set("optimize", "x0", format_double(f.x0));
        if (mutate_opt->count()) cfg.set("oracle", "mutate", f.mutate);
        if (sets_opt->count()) cfg.set("oracle", "sets", std::to_string(f.sets));

        if (name == "train") return cmd_train(cfg);
        if (name == "optimize") return cmd_optimize(cfg);
        if (name == "attack") return cmd_attack(cfg);
        if (name == "rl") return cmd_rl(cfg);
        return cmd_oracle(cfg);
    } catch (const config::UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tagi::cli
