// Command-line front end: train / evaluate / trajectories / list-benchmarks /
// check. Exit codes: 0 success, 2 configuration error, 3 numerical divergence
// or failed numerical checks.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "mfac/reporting.hpp"
#include "mfac/self_check.hpp"

namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file '" + path + "'");
    json j;
    in >> j;
    return j;
}

std::map<std::string, double> parse_param_overrides(const std::vector<std::string>& kvs) {
    std::map<std::string, double> params;
    for (const std::string& kv : kvs) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("--param expects key=value, got '" + kv + "'");
        params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    }
    return params;
}

Eigen::VectorXd broadcast(const std::vector<double>& values, int dims, const char* what) {
    if (values.size() == 1) return Eigen::VectorXd::Constant(dims, values[0]);
    if (static_cast<int>(values.size()) != dims)
        throw std::invalid_argument(std::string(what) + ": expected 1 or " +
                                    std::to_string(dims) + " values");
    return Eigen::Map<const Eigen::VectorXd>(values.data(), dims);
}

struct CheckpointContext {
    mfac::RunConfig config;
    mfac::Benchmark bench;
    mfac::TrainerState state;
};

CheckpointContext load_context(const std::string& checkpoint_path) {
    const mfac::Checkpoint ckpt = mfac::load_checkpoint(checkpoint_path);
    const mfac::RunConfig cfg =
        mfac::resolve_run_config(json::parse(ckpt.config_fingerprint));
    mfac::Benchmark bench = mfac::make_benchmark(cfg.benchmark, cfg.params);
    mfac::TrainerState state = mfac::state_from_checkpoint(ckpt, bench.model);
    return {cfg, std::move(bench), std::move(state)};
}

int cmd_list_benchmarks() {
    for (const std::string& id : mfac::benchmark_ids()) {
        const mfac::Benchmark b = mfac::make_benchmark(id);
        std::cout << id << "\t" << b.title << "\t";
        for (std::size_t i = 0; i < b.params.size(); ++i) {
            if (i) std::cout << " ";
            std::cout << b.params[i].first << "=" << b.params[i].second;
        }
        std::cout << "\n";
    }
    return 0;
}

int cmd_check() {
    bool all_pass = true;
    for (const mfac::CheckResult& r : mfac::run_self_checks()) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " -- " << r.detail << "\n";
        all_pass = all_pass && r.pass;
    }
    std::cout << (all_pass ? "all checks passed" : "CHECKS FAILED") << "\n";
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"actor-critic mean-field control with moment neural networks"};
    app.require_subcommand(1);

    // train ------------------------------------------------------------
    auto* train = app.add_subcommand("train", "run the actor-critic training loop");
    std::string train_config, train_benchmark, train_out;
    std::vector<std::string> train_params;
    std::int64_t train_epochs = -1;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false, desk_scale = false, resume = false;
    train->add_option("--config", train_config, "JSON run configuration");
    train->add_option("-b,--benchmark", train_benchmark, "benchmark id (see list-benchmarks)");
    train->add_option("--param", train_params, "benchmark parameter override key=value");
    train->add_option("--epochs", train_epochs, "override the number of epochs");
    train->add_option("--seed", train_seed, "training seed")->each([&](const std::string&) {
        train_seed_set = true;
    });
    train->add_option("-o,--out", train_out, "output directory");
    train->add_flag("--desk-scale", desk_scale, "use the reduced desk-scale preset");
    train->add_flag("--resume", resume, "resume from the checkpoint in the output directory");

    // evaluate ----------------------------------------------------------
    auto* evaluate = app.add_subcommand("evaluate", "evaluation table from a checkpoint");
    std::string eval_checkpoint, eval_out, eval_rollout_dump;
    int eval_particles = -1;
    std::vector<double> eval_fractions;
    std::uint64_t eval_seed = 0;
    bool eval_seed_set = false;
    evaluate->add_option("--checkpoint", eval_checkpoint, "checkpoint file")->required();
    evaluate->add_option("-o,--out", eval_out, "output table path (default: <ckpt dir>/evaluation.tsv)");
    evaluate->add_option("--particles", eval_particles, "evaluation particles per grid point");
    evaluate->add_option("--fractions", eval_fractions, "evaluation grid fractions")
        ->delimiter(',');
    evaluate->add_option("--seed", eval_seed, "evaluation seed")->each([&](const std::string&) {
        eval_seed_set = true;
    });
    evaluate->add_option("--rollout-dump", eval_rollout_dump,
                         "also dump a mean-policy rollout from the first grid point");

    // trajectories --------------------------------------------------------
    auto* traj = app.add_subcommand("trajectories", "learned vs analytic control along paths");
    std::string traj_checkpoint, traj_out;
    int traj_count = 3, traj_particles = 1000;
    std::vector<double> traj_mean, traj_var;
    std::uint64_t traj_seed = 0;
    bool traj_seed_set = false;
    traj->add_option("--checkpoint", traj_checkpoint, "checkpoint file")->required();
    traj->add_option("-o,--out", traj_out, "output path (default: <ckpt dir>/trajectories.tsv)");
    traj->add_option("--count", traj_count, "number of paths to dump");
    traj->add_option("--particles", traj_particles, "cloud size behind the paths");
    traj->add_option("--mean", traj_mean, "initial mean (scalar or per coordinate)")
        ->delimiter(',');
    traj->add_option("--var", traj_var, "initial variance (scalar or per coordinate)")
        ->delimiter(',');
    traj->add_option("--seed", traj_seed, "sampling seed")->each([&](const std::string&) {
        traj_seed_set = true;
    });

    app.add_subcommand("list-benchmarks", "print benchmark ids and default parameters");
    app.add_subcommand("check", "run the oracle and gradient invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand("list-benchmarks")) return cmd_list_benchmarks();
        if (app.got_subcommand("check")) return cmd_check();

        if (app.got_subcommand("train")) {
            json j = train_config.empty() ? json::object() : load_json_file(train_config);
            if (!train_benchmark.empty()) j["benchmark"] = train_benchmark;
            if (desk_scale) j["desk_scale"] = true;
            if (train_seed_set) j["seed"] = train_seed;
            if (train_epochs >= 0) j["trainer"]["epochs"] = train_epochs;
            if (!train_out.empty()) j["output_dir"] = train_out;
            for (const auto& [key, value] : parse_param_overrides(train_params))
                j["params"][key] = value;
            const mfac::RunConfig cfg = mfac::resolve_run_config(j);
            const mfac::TrainOutcome outcome = mfac::run_training(cfg, resume, &std::cout);
            std::cout << "trained " << outcome.epochs_run << " epochs; checkpoint at "
                      << outcome.paths.checkpoint << "\n";
            return 0;
        }

        if (app.got_subcommand("evaluate")) {
            CheckpointContext ctx = load_context(eval_checkpoint);
            const int particles = eval_particles > 0 ? eval_particles : ctx.config.eval_particles;
            const std::vector<double> fractions =
                eval_fractions.empty() ? ctx.config.eval_fractions : eval_fractions;
            const std::uint64_t seed = eval_seed_set ? eval_seed : ctx.config.trainer.seed;
            const mfac::MultiIndexSet idx(ctx.bench.model.state_dim,
                                          ctx.config.trainer.moment_order);
            const auto grid = mfac::default_eval_grid(ctx.bench, fractions);
            const auto rows = mfac::build_evaluation_table(
                ctx.bench, grid, particles, seed, idx,
                mfac::critic_value_fn(ctx.state.critic, ctx.bench.model.horizon),
                &ctx.state.actor, &ctx.state.critic, ctx.config.trainer.steps);
            const std::string out_path =
                eval_out.empty()
                    ? (std::filesystem::path(eval_checkpoint).parent_path() / "evaluation.tsv")
                          .string()
                    : eval_out;
            mfac::write_evaluation_table(out_path, rows);
            std::cout << "wrote " << rows.size() << " rows to " << out_path << "\n";

            if (!eval_rollout_dump.empty()) {
                mfac::GaussianPolicy mean_policy = ctx.state.actor;
                mean_policy.set_lambda(0.0);
                mfac::ParticleCloud init;
                init.elems.push_back(mfac::GaussianInitFamily::fixed_cloud(
                    grid[0].mean, grid[0].variance, particles, mfac::RngStream(seed, 0), 0));
                const mfac::RolloutRecord rec = mfac::rollout(
                    mean_policy, ctx.bench.model, {ctx.bench.model.horizon, ctx.config.trainer.steps},
                    init, idx, mfac::make_noise(seed, 2));
                mfac::dump_rollout(eval_rollout_dump, rec);
                std::cout << "wrote rollout dump to " << eval_rollout_dump << "\n";
            }
            return 0;
        }

        if (app.got_subcommand("trajectories")) {
            CheckpointContext ctx = load_context(traj_checkpoint);
            const int d = ctx.bench.model.state_dim;
            mfac::EvalPoint point;
            point.mean = traj_mean.empty() ? (0.4 * ctx.bench.init.mean_scale).eval()
                                           : broadcast(traj_mean, d, "--mean");
            point.variance = traj_var.empty() ? (0.9 * ctx.bench.init.var_scale).eval()
                                              : broadcast(traj_var, d, "--var");
            const std::uint64_t seed = traj_seed_set ? traj_seed : ctx.config.trainer.seed;
            const mfac::MultiIndexSet idx(d, ctx.config.trainer.moment_order);
            const std::string out_path =
                traj_out.empty()
                    ? (std::filesystem::path(traj_checkpoint).parent_path() / "trajectories.tsv")
                          .string()
                    : traj_out;
            mfac::write_trajectories(out_path, ctx.bench, ctx.state.actor, point, traj_particles,
                                     traj_count, ctx.config.trainer.steps, seed, idx);
            std::cout << "wrote " << traj_count << " paths to " << out_path << "\n";
            return 0;
        }
    } catch (const mfac::DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return 3;
    } catch (const mfac::BlowupError& e) {
        std::cerr << "numerical divergence: " << e.what() << "\n";
        return 3;
    } catch (const mfac::CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
