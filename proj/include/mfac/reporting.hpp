#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mfac/benchmarks.hpp"
#include "mfac/checkpoint.hpp"
#include "mfac/training.hpp"

namespace mfac {

/// Resolved run description: benchmark, parameter overrides, trainer fields
/// and evaluation settings. Fully serializable; the JSON echo doubles as the
/// checkpoint fingerprint.
struct RunConfig {
    std::string benchmark = "systemic";
    bool desk_scale = false;
    std::map<std::string, double> params;
    TrainerConfig trainer;
    int eval_particles = 4000;
    std::vector<double> eval_fractions;  // resolved from the benchmark preset
    std::string output_dir = "run";
};

inline nlohmann::json to_json(const RunConfig& cfg) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["benchmark"] = cfg.benchmark;
    j["desk_scale"] = cfg.desk_scale;
    j["params"] = cfg.params;
    j["trainer"] = {{"actor_lr", cfg.trainer.actor_lr},
                    {"critic_lr", cfg.trainer.critic_lr},
                    {"batch", cfg.trainer.batch},
                    {"particles", cfg.trainer.particles},
                    {"steps", cfg.trainer.steps},
                    {"moment_order", cfg.trainer.moment_order},
                    {"epochs", cfg.trainer.epochs},
                    {"seed", cfg.trainer.seed},
                    {"lambda_bar", cfg.trainer.lambda_bar},
                    {"lambda_floor", cfg.trainer.lambda_floor},
                    {"clip_norm", cfg.trainer.clip_norm},
                    {"h_term_dt_weight", cfg.trainer.h_term_dt_weight},
                    {"hidden", cfg.trainer.hidden}};
    j["eval"] = {{"particles", cfg.eval_particles}, {"fractions", cfg.eval_fractions}};
    j["output_dir"] = cfg.output_dir;
    return j;
}

/// Build a RunConfig from JSON. Unspecified trainer fields fall back to the
/// chosen benchmark preset (paper scale, or desk scale when desk_scale).
inline RunConfig resolve_run_config(const nlohmann::json& j) {
    RunConfig cfg;
    cfg.benchmark = j.value("benchmark", cfg.benchmark);
    cfg.desk_scale = j.value("desk_scale", false);
    if (j.contains("params"))
        for (auto it = j["params"].begin(); it != j["params"].end(); ++it)
            cfg.params[it.key()] = it.value().get<double>();

    const Benchmark bench = make_benchmark(cfg.benchmark, cfg.params);
    cfg.trainer = cfg.desk_scale ? bench.desk_config : bench.paper_config;
    cfg.eval_fractions = bench.eval_fractions;

    if (j.contains("trainer")) {
        const nlohmann::json& t = j["trainer"];
        cfg.trainer.actor_lr = t.value("actor_lr", cfg.trainer.actor_lr);
        cfg.trainer.critic_lr = t.value("critic_lr", cfg.trainer.critic_lr);
        cfg.trainer.batch = t.value("batch", cfg.trainer.batch);
        cfg.trainer.particles = t.value("particles", cfg.trainer.particles);
        cfg.trainer.steps = t.value("steps", cfg.trainer.steps);
        cfg.trainer.moment_order = t.value("moment_order", cfg.trainer.moment_order);
        cfg.trainer.epochs = t.value("epochs", cfg.trainer.epochs);
        cfg.trainer.seed = t.value("seed", cfg.trainer.seed);
        cfg.trainer.lambda_bar = t.value("lambda_bar", cfg.trainer.lambda_bar);
        cfg.trainer.lambda_floor = t.value("lambda_floor", cfg.trainer.lambda_floor);
        cfg.trainer.clip_norm = t.value("clip_norm", cfg.trainer.clip_norm);
        cfg.trainer.h_term_dt_weight = t.value("h_term_dt_weight", cfg.trainer.h_term_dt_weight);
        if (t.contains("hidden")) cfg.trainer.hidden = t["hidden"].get<std::vector<int>>();
    }
    if (j.contains("seed")) cfg.trainer.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("eval")) {
        cfg.eval_particles = j["eval"].value("particles", cfg.eval_particles);
        if (j["eval"].contains("fractions"))
            cfg.eval_fractions = j["eval"]["fractions"].get<std::vector<double>>();
    }
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.trainer.validate();
    return cfg;
}

inline std::string config_fingerprint(const RunConfig& cfg) { return to_json(cfg).dump(); }

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Training orchestration
// ---------------------------------------------------------------------------

inline Checkpoint state_to_checkpoint(const TrainerState& state, const RunConfig& cfg) {
    Checkpoint ckpt;
    ckpt.benchmark_id = cfg.benchmark;
    ckpt.config_fingerprint = config_fingerprint(cfg);
    ckpt.seed = cfg.trainer.seed;
    ckpt.epoch = state.epoch;
    ckpt.actor_shape = state.actor.mean_net().shape();
    ckpt.actor_params = state.actor.mean_net().params();
    ckpt.actor_adam = {state.actor_adam.first_moment(), state.actor_adam.second_moment(),
                       state.actor_adam.steps()};
    ckpt.critic_shape = state.critic.shape();
    ckpt.critic_params = state.critic.params();
    ckpt.critic_adam = {state.critic_adam.first_moment(), state.critic_adam.second_moment(),
                        state.critic_adam.steps()};
    return ckpt;
}

inline TrainerState state_from_checkpoint(const Checkpoint& ckpt, const ModelSpec& model) {
    Mlp actor_net(ckpt.actor_shape);
    actor_net.params() = ckpt.actor_params;
    Mlp critic_net(ckpt.critic_shape);
    critic_net.params() = ckpt.critic_params;
    AdamState actor_adam(actor_net.param_count()), critic_adam(critic_net.param_count());
    actor_adam.first_moment() = ckpt.actor_adam.m;
    actor_adam.second_moment() = ckpt.actor_adam.v;
    actor_adam.set_steps(ckpt.actor_adam.steps);
    critic_adam.first_moment() = ckpt.critic_adam.m;
    critic_adam.second_moment() = ckpt.critic_adam.v;
    critic_adam.set_steps(ckpt.critic_adam.steps);
    return {GaussianPolicy(std::move(actor_net), model.horizon, 0.0), std::move(critic_net),
            std::move(actor_adam), std::move(critic_adam), ckpt.epoch};
}

struct TrainPaths {
    std::string manifest, metrics, checkpoint, crash_checkpoint;
};

inline TrainPaths train_paths(const std::string& output_dir) {
    namespace fs = std::filesystem;
    return {(fs::path(output_dir) / "manifest.json").string(),
            (fs::path(output_dir) / "metrics.csv").string(),
            (fs::path(output_dir) / "checkpoint.bin").string(),
            (fs::path(output_dir) / "crash_checkpoint.bin").string()};
}

inline void write_manifest(const std::string& path, const RunConfig& cfg) {
    const Benchmark bench = make_benchmark(cfg.benchmark, cfg.params);
    nlohmann::json j;
    j["schema_version"] = 1;
    j["config"] = to_json(cfg);
    nlohmann::json params;
    for (const auto& [key, value] : bench.params) params[key] = value;
    j["benchmark_params"] = params;
    j["benchmark_title"] = bench.title;
    std::ofstream out(path, std::ios::trunc);
    out << j.dump(2) << "\n";
}

/// Keep the header and the first `epochs` metric records; a resumed run then
/// appends from its checkpointed epoch and the final file is byte-identical
/// to an uninterrupted run.
inline void truncate_metrics(const std::string& path, std::int64_t epochs) {
    std::ifstream in(path);
    if (!in) return;
    std::vector<std::string> keep;
    std::string line;
    std::int64_t records = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && (line[0] == '#' || line.rfind("epoch", 0) == 0)) {
            keep.push_back(line);
        } else if (records < epochs) {
            keep.push_back(line);
            ++records;
        }
    }
    in.close();
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : keep) out << l << "\n";
}

struct TrainOutcome {
    TrainerState state;
    TrainPaths paths;
    std::int64_t epochs_run = 0;
};

/// Full training run: manifest first, one metrics record per epoch,
/// checkpoint every 100 epochs and at the end. With resume = true the run
/// continues from the saved checkpoint and reproduces an uninterrupted run
/// bit for bit. stop_after >= 0 ends the session early at that epoch (the
/// run is completed later via resume). On divergence a crash checkpoint is
/// saved and the error rethrown.
inline TrainOutcome run_training(const RunConfig& cfg, bool resume = false,
                                 std::ostream* console = nullptr,
                                 std::int64_t stop_after = -1) {
    namespace fs = std::filesystem;
    cfg.trainer.validate();
    const Benchmark bench = make_benchmark(cfg.benchmark, cfg.params);
    const MultiIndexSet idx(bench.model.state_dim, cfg.trainer.moment_order);
    const TrainPaths paths = train_paths(cfg.output_dir);
    fs::create_directories(cfg.output_dir);
    write_manifest(paths.manifest, cfg);

    if (console)
        if (auto warning = cfg.trainer.two_timescale_warning())
            *console << "warning: " << *warning << "\n";

    TrainerState state = make_trainer_state(bench.model, cfg.trainer, idx.size());
    if (resume && fs::exists(paths.checkpoint)) {
        const Checkpoint ckpt = load_checkpoint(paths.checkpoint);
        if (ckpt.config_fingerprint != config_fingerprint(cfg))
            throw std::invalid_argument("run_training: resume config differs from checkpoint");
        state = state_from_checkpoint(ckpt, bench.model);
        truncate_metrics(paths.metrics, state.epoch);
    } else {
        std::ofstream metrics(paths.metrics, std::ios::trunc);
        metrics << "# mfac-metrics v1\n";
        metrics << "epoch,lambda,critic_loss,actor_grad_norm,critic_grad_norm\n";
    }

    std::ofstream metrics(paths.metrics, std::ios::app);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        while (state.epoch < cfg.trainer.epochs &&
               (stop_after < 0 || state.epoch < stop_after)) {
            const EpochMetrics em =
                train_epoch(state, cfg.trainer, bench.model, bench.init, idx);
            metrics << em.epoch << ',' << detail::format_double(em.lambda) << ','
                    << detail::format_double(em.critic_loss) << ','
                    << detail::format_double(em.actor_grad_norm) << ','
                    << detail::format_double(em.critic_grad_norm) << "\n";
            if (state.epoch % 100 == 0) {
                metrics.flush();
                save_checkpoint(paths.checkpoint, state_to_checkpoint(state, cfg));
            }
            if (console && (state.epoch % 100 == 0 || state.epoch == cfg.trainer.epochs)) {
                const double secs = std::chrono::duration<double>(
                                        std::chrono::steady_clock::now() - t0)
                                        .count();
                *console << "epoch " << em.epoch << "  lambda " << em.lambda << "  critic loss "
                         << em.critic_loss << "  (" << secs << "s)\n";
            }
        }
    } catch (const DivergenceError&) {
        save_checkpoint(paths.crash_checkpoint, state_to_checkpoint(state, cfg));
        throw;
    } catch (const BlowupError&) {
        save_checkpoint(paths.crash_checkpoint, state_to_checkpoint(state, cfg));
        throw;
    }
    metrics.flush();
    save_checkpoint(paths.checkpoint, state_to_checkpoint(state, cfg));
    return {std::move(state), paths, cfg.trainer.epochs};
}

// ---------------------------------------------------------------------------
// Evaluation tables (Anal / Calc / MSE / RelError + convergence gap)
// ---------------------------------------------------------------------------

struct EvalPoint {
    Eigen::VectorXd mean, variance;
};

struct EvalRow {
    EvalPoint point;
    double anal = 0.0;
    double calc = 0.0;
    double mse = 0.0;
    double rel_error = 0.0;
    double sim_cost = std::numeric_limits<double>::quiet_NaN();
    double rem42_rel_gap = std::numeric_limits<double>::quiet_NaN();
};

/// Cross product of the evaluation fractions over every axis with a nonzero
/// family scale; degenerate axes stay pinned at zero.
inline std::vector<EvalPoint> default_eval_grid(const Benchmark& bench,
                                                const std::vector<double>& fractions) {
    const int d = bench.init.dim();
    std::vector<EvalPoint> grid;
    grid.push_back({Eigen::VectorXd::Zero(d), Eigen::VectorXd::Zero(d)});
    auto expand = [&grid](const std::function<void(EvalPoint&, double)>& apply,
                          const std::vector<double>& values) {
        std::vector<EvalPoint> next;
        for (const EvalPoint& base : grid)
            for (double v : values) {
                EvalPoint pt = base;
                apply(pt, v);
                next.push_back(pt);
            }
        grid = std::move(next);
    };
    for (int c = 0; c < d; ++c)
        if (bench.init.mean_scale[c] != 0.0) {
            const double scale = bench.init.mean_scale[c];
            expand([c, scale](EvalPoint& pt, double f) { pt.mean[c] = scale * f; }, fractions);
        }
    for (int c = 0; c < d; ++c)
        if (bench.init.var_scale[c] != 0.0) {
            const double scale = bench.init.var_scale[c];
            expand([c, scale](EvalPoint& pt, double f) { pt.variance[c] = scale * f; }, fractions);
        }
    return grid;
}

/// Batched critic evaluator: values at (t, columns of states, shared moments).
using ValueFn = std::function<Eigen::RowVectorXd(
    double t, const Eigen::MatrixXd& states, const Eigen::VectorXd& moments)>;

inline ValueFn critic_value_fn(const Mlp& critic, double horizon) {
    auto ws = std::make_shared<MlpWorkspace>();
    return [&critic, horizon, ws](double t, const Eigen::MatrixXd& states,
                                  const Eigen::VectorXd& moments) -> Eigen::RowVectorXd {
        critic.forward_batch(assemble_net_input(t, horizon, states, moments), *ws);
        return critic.output(*ws).row(0);
    };
}

/// One table row per grid point: Anal from the analytic oracle on the
/// sampled cloud, Calc/MSE/RelError from the supplied value function, and
/// (when an actor is given) the simulated-cost convergence gap.
inline std::vector<EvalRow> build_evaluation_table(
    const Benchmark& bench, const std::vector<EvalPoint>& grid, int particles,
    std::uint64_t seed, const MultiIndexSet& idx, const ValueFn& value_fn,
    const GaussianPolicy* actor = nullptr, const Mlp* critic = nullptr, int sim_steps = 0) {
    std::vector<EvalRow> rows;
    const RngStream rng(seed, 0);
    for (int r = 0; r < static_cast<int>(grid.size()); ++r) {
        const EvalPoint& pt = grid[static_cast<std::size_t>(r)];
        EvalRow row;
        row.point = pt;
        const Eigen::MatrixXd cloud =
            GaussianInitFamily::fixed_cloud(pt.mean, pt.variance, particles, rng, r);
        const Eigen::VectorXd moments = empirical_moments(cloud, idx);
        const Eigen::RowVectorXd calc_values = value_fn(0.0, cloud, moments);

        double anal = 0.0, calc = 0.0, mse = 0.0;
        for (int j = 0; j < particles; ++j) {
            const double v = bench.value(0.0, cloud.col(j), cloud);
            const double c = calc_values[j];
            anal += v;
            calc += c;
            mse += (c - v) * (c - v);
        }
        row.anal = anal / particles;
        row.calc = calc / particles;
        row.mse = mse / particles;
        row.rel_error = (row.calc - row.anal) / row.anal;

        if (actor && critic && sim_steps > 0) {
            ParticleCloud init;
            init.elems.push_back(cloud);
            const ConvergenceGap gap =
                evaluate_converged(*actor, *critic, bench.model, {bench.model.horizon, sim_steps},
                                   init, idx, make_noise(seed, 1000 + r));
            row.sim_cost = gap.simulated_cost;
            row.rem42_rel_gap = gap.rel_gap;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_evaluation_table(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path, std::ios::trunc);
    out << "# mfac-table v1\n";
    if (rows.empty()) return;
    const int d = static_cast<int>(rows[0].point.mean.size());
    for (int c = 0; c < d; ++c) out << "mean_" << c << '\t';
    for (int c = 0; c < d; ++c) out << "var_" << c << '\t';
    out << "anal\tcalc\tmse\trel_error\tsim_cost\trem42_rel_gap\n";
    for (const EvalRow& row : rows) {
        for (int c = 0; c < d; ++c) out << detail::format_double(row.point.mean[c]) << '\t';
        for (int c = 0; c < d; ++c) out << detail::format_double(row.point.variance[c]) << '\t';
        out << detail::format_double(row.anal) << '\t' << detail::format_double(row.calc) << '\t'
            << detail::format_double(row.mse) << '\t' << detail::format_double(row.rel_error)
            << '\t' << detail::format_double(row.sim_cost) << '\t'
            << detail::format_double(row.rem42_rel_gap) << "\n";
    }
}

// ---------------------------------------------------------------------------
// Trajectory comparison dumps
// ---------------------------------------------------------------------------

/// Paths driven by the learned mean policy (shared noise); the analytic
/// control is evaluated along the same learned-control state path so the
/// comparison isolates control error from state divergence.
inline void write_trajectories(const std::string& path, const Benchmark& bench,
                               const GaussianPolicy& actor, const EvalPoint& point,
                               int particles, int count, int steps, std::uint64_t seed,
                               const MultiIndexSet& idx) {
    if (count > particles)
        throw std::invalid_argument("write_trajectories: count exceeds particle number");
    GaussianPolicy mean_policy = actor;
    mean_policy.set_lambda(0.0);
    ParticleCloud init;
    const RngStream rng(seed, 0);
    init.elems.push_back(
        GaussianInitFamily::fixed_cloud(point.mean, point.variance, particles, rng, 0));
    const TimeGrid grid{bench.model.horizon, steps};
    const RolloutRecord rec =
        rollout(mean_policy, bench.model, grid, init, idx, make_noise(seed, 1));

    const int d = bench.model.state_dim;
    const int p = bench.model.action_dim;
    const bool has_analytic = static_cast<bool>(bench.control);

    // Learned control at the terminal knot (the record has none for k = n).
    MlpWorkspace ws;
    mean_policy.mean_batch(grid.knot(steps), rec.states[steps][0], rec.moments[steps][0], ws);
    const Eigen::MatrixXd terminal_mean = mean_policy.mean_net().output(ws);

    std::ofstream out(path, std::ios::trunc);
    out << "# mfac-trajectories v1\n";
    out << "# analytic-control: " << (has_analytic ? "yes" : "no") << "\n";
    out << "path\tstep\tt";
    for (int c = 0; c < d; ++c) out << "\tx_" << c;
    for (int c = 0; c < p; ++c) out << "\tcontrol_learned_" << c;
    if (has_analytic)
        for (int c = 0; c < p; ++c) out << "\tcontrol_analytic_" << c;
    out << "\n";
    for (int j = 0; j < count; ++j) {
        for (int k = 0; k <= steps; ++k) {
            const double t = grid.knot(k);
            out << j << '\t' << k << '\t' << detail::format_double(t);
            for (int c = 0; c < d; ++c)
                out << '\t' << detail::format_double(rec.states[k][0](c, j));
            for (int c = 0; c < p; ++c) {
                const double learned =
                    k < steps ? rec.actions[k][0](c, j) : terminal_mean(c, j);
                out << '\t' << detail::format_double(learned);
            }
            if (has_analytic) {
                const Eigen::VectorXd analytic =
                    bench.control(t, rec.states[k][0].col(j), rec.states[k][0]);
                for (int c = 0; c < p; ++c) out << '\t' << detail::format_double(analytic[c]);
            }
            out << "\n";
        }
    }
}

/// Columnar rollout dump, one row per (k, i, j).
inline void dump_rollout(const std::string& path, const RolloutRecord& rec) {
    std::ofstream out(path, std::ios::trunc);
    out << "# mfac-rollout v1\n";
    const int d = rec.batch() > 0 ? static_cast<int>(rec.states[0][0].rows()) : 0;
    const int p = rec.batch() > 0 && !rec.actions.empty()
                      ? static_cast<int>(rec.actions[0][0].rows())
                      : 0;
    out << "step\telement\tparticle\tt";
    for (int c = 0; c < d; ++c) out << "\tx_" << c;
    for (int c = 0; c < p; ++c) out << "\ta_" << c;
    out << "\trunning_cost\n";
    for (int k = 0; k < rec.grid.steps; ++k)
        for (int i = 0; i < rec.batch(); ++i)
            for (int j = 0; j < rec.particles(); ++j) {
                out << k << '\t' << i << '\t' << j << '\t'
                    << detail::format_double(rec.grid.knot(k));
                for (int c = 0; c < d; ++c)
                    out << '\t' << detail::format_double(rec.states[k][i](c, j));
                for (int c = 0; c < p; ++c)
                    out << '\t' << detail::format_double(rec.actions[k][i](c, j));
                out << '\t' << detail::format_double(rec.running[k][i][j]) << "\n";
            }
}

}  // namespace mfac
