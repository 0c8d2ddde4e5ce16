#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfac/mlp.hpp"
#include "mfac/model.hpp"
#include "mfac/policy.hpp"
#include "mfac/rollout.hpp"

namespace mfac {

struct UnsupportedModelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainerConfig {
    double actor_lr = 0.0005;
    double critic_lr = 0.01;
    int batch = 5;           // N initial distributions per epoch
    int particles = 1000;    // M samples per distribution
    int steps = 20;          // n time steps
    int moment_order = 2;    // L
    std::int64_t epochs = 2000;
    std::uint64_t seed = 0;
    double lambda_bar = 0.1;
    double lambda_floor = 0.0001;
    double clip_norm = 10.0;        // 0 disables the global-norm clip
    bool h_term_dt_weight = true;   // weight each per-step H term by dt
    std::vector<int> hidden = {20, 20, 20};

    ExplorationSchedule schedule() const { return {lambda_bar, lambda_floor, epochs}; }

    void validate() const {
        if (actor_lr < 0 || critic_lr < 0 || batch < 1 || particles < 2 || steps < 1 ||
            moment_order < 1 || epochs < 0)
            throw std::invalid_argument("TrainerConfig: invalid field");
    }

    /// Two-timescale rule: the critic should evolve at least an order of
    /// magnitude faster than the actor. Violations are allowed but warned.
    std::optional<std::string> two_timescale_warning() const {
        if (actor_lr > 0 && critic_lr < 10.0 * actor_lr)
            return "critic_lr (" + std::to_string(critic_lr) +
                   ") is less than 10x actor_lr (" + std::to_string(actor_lr) +
                   "); two-timescale rule violated";
        return std::nullopt;
    }
};

struct EpochMetrics {
    std::int64_t epoch = 0;
    double lambda = 0.0;
    double critic_loss = 0.0;
    double actor_grad_norm = 0.0;
    double critic_grad_norm = 0.0;
};

struct TrainerState {
    GaussianPolicy actor;
    Mlp critic;
    AdamState actor_adam;
    AdamState critic_adam;
    std::int64_t epoch = 0;
};

/// Fresh actor/critic pair for a model at the given moment order.
inline TrainerState make_trainer_state(const ModelSpec& model, const TrainerConfig& cfg,
                                       int moment_count) {
    const int input = 1 + model.state_dim + moment_count;
    Mlp actor_net = Mlp::glorot({input, cfg.hidden, model.action_dim},
                                detail::mix64(cfg.seed ^ 0xAC70ULL));
    Mlp critic_net = Mlp::glorot({input, cfg.hidden, 1},
                                 detail::mix64(cfg.seed ^ 0xC817ULL));
    const int ad = actor_net.param_count();
    const int cd = critic_net.param_count();
    return {GaussianPolicy(std::move(actor_net), model.horizon, cfg.lambda_bar),
            std::move(critic_net), AdamState(ad), AdamState(cd), 0};
}

/// Martingale regression loss
///   (1/MN) sum_{i,j,k<n} | g^{ij} + sum_{l>=k} f^{ij}_l dt - J_eta(t_k, X, mu) |^2 dt
/// with realized cost-to-go targets. Writes the exact eta-gradient into
/// *grad when given (overwriting it).
inline double critic_loss(const RolloutRecord& rec, const Mlp& critic,
                          Eigen::VectorXd* grad = nullptr) {
    const int n = rec.grid.steps;
    const int N = rec.batch();
    const int M = rec.particles();
    const double dt = rec.grid.dt();
    const double inv = 1.0 / (static_cast<double>(M) * N);
    if (grad) grad->setZero(critic.param_count());

    double loss = 0.0;
    MlpWorkspace ws;
    Eigen::VectorXd togo(M);
    std::vector<Eigen::RowVectorXd> diffs(static_cast<std::size_t>(n));
    for (int i = 0; i < N; ++i) {
        // One backward sweep accumulates the cost-to-go; diffs are kept so the
        // backward passes can run in fixed ascending-k order.
        togo = rec.terminal[i];
        for (int k = n - 1; k >= 0; --k) {
            togo += rec.running[k][i] * dt;
            diffs[static_cast<std::size_t>(k)] = -togo.transpose();
        }
        for (int k = 0; k < n; ++k) {
            const double t = rec.grid.knot(k);
            critic.forward_batch(
                assemble_net_input(t, rec.grid.horizon, rec.states[k][i], rec.moments[k][i]),
                ws);
            Eigen::RowVectorXd& diff = diffs[static_cast<std::size_t>(k)];
            diff += critic.output(ws).row(0);  // J - target
            loss += inv * dt * diff.squaredNorm();
            if (grad) critic.backward_batch((2.0 * inv * dt) * diff, ws, grad, nullptr);
        }
    }
    return loss;
}

/// Mean-field operator contribution to the policy gradient. Per (i, k) the
/// bracket
///   A(theta) = (1/M) sum_j [ D1(X^j) C_theta(t, m_j) + 1/2 D2^T(X^j) o vartheta_theta(t, m_j) ]
/// is dotted with the averaged critic moment-gradient
///   Gbar = grad_y (1/M) sum_j J_eta(t, X^j, mu_L)
/// and differentiation in theta happens strictly after both averages: Gbar is
/// a constant for the backward pass, so one reverse sweep per sample with a
/// D1/D2-assembled cotangent yields the exact gradient.
inline Eigen::VectorXd h_operator_term(const RolloutRecord& rec, const Mlp& critic,
                                       const GaussianPolicy& policy,
                                       const GaussianActionMaps& maps, const MultiIndexSet& idx,
                                       bool dt_weight = true) {
    if (!maps.available())
        throw UnsupportedModelError(
            "h_operator_term: model provides no closed-form Gaussian action maps");
    const int n = rec.grid.steps;
    const int N = rec.batch();
    const int M = rec.particles();
    const int d = idx.dimension();
    const int ld = idx.size();
    const int p = policy.action_dim();
    const double lambda = policy.lambda();
    const double weight = (dt_weight ? rec.grid.dt() : 1.0) / N;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.mean_net().param_count());
    MlpWorkspace ws_critic, ws_actor;
    Eigen::MatrixXd input_grad, cot(p, M), powers;
    Eigen::VectorXd gbar(ld), c_val(d), cj(p), d1w(d), d2w(d * d);
    Eigen::MatrixXd c_jac(d, p), th_val(d, d), th_jac(d * d, p);
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k < n; ++k) {
            const double t = rec.grid.knot(k);
            const Eigen::MatrixXd& x = rec.states[k][i];
            const Eigen::MatrixXd input =
                assemble_net_input(t, rec.grid.horizon, x, rec.moments[k][i]);

            critic.forward_batch(input, ws_critic);
            critic.backward_batch(Eigen::MatrixXd::Ones(1, M), ws_critic, nullptr, &input_grad);
            gbar = input_grad.bottomRows(ld).rowwise().sum() / static_cast<double>(M);

            policy.mean_net().forward_batch(input, ws_actor);
            const Eigen::MatrixXd& mean = policy.mean_net().output(ws_actor);
            for (int j = 0; j < M; ++j) {
                cj.setZero();
                if (maps.drift) {
                    maps.drift(t, mean.col(j), lambda, c_val, c_jac);
                    d1_weighted(x.col(j), idx, gbar, d1w, powers);
                    cj.noalias() += c_jac.transpose() * d1w;
                }
                if (maps.diffusion) {
                    maps.diffusion(t, mean.col(j), lambda, th_val, th_jac);
                    d2_weighted(x.col(j), idx, gbar, d2w, powers);
                    cj.noalias() += 0.5 * th_jac.transpose() * d2w;
                }
                cot.col(j) = (weight / M) * cj;
            }
            policy.mean_net().backward_batch(cot, ws_actor, &grad, nullptr);
        }
    }
    return grad;
}

/// Empirical policy gradient
///   G_M(theta) = grad_theta (1/MN) sum_{i,j,k} log p_theta(t_k, X, mu, alpha)
///                  [ J(t_{k+1}) - J(t_k) + f dt ]  +  H-term,
/// with the bracket treated as a constant: the score factor is
/// ((alpha - m)/lambda) shaped by one reverse sweep per (i,j,k). The H-term
/// cotangent rides on the same sweep; the result equals the score part plus
/// h_operator_term exactly.
inline Eigen::VectorXd policy_gradient(const RolloutRecord& rec, const Mlp& critic,
                                       const GaussianPolicy& policy,
                                       const GaussianActionMaps& maps, const MultiIndexSet& idx,
                                       bool h_dt_weight = true) {
    if (rec.lambda != policy.lambda())
        throw std::invalid_argument("policy_gradient: record lambda does not match policy lambda");
    if (policy.lambda() <= 0.0)
        throw std::invalid_argument("policy_gradient: requires lambda > 0");
    if (!maps.available())
        throw UnsupportedModelError(
            "policy_gradient: model provides no closed-form Gaussian action maps");
    const int n = rec.grid.steps;
    const int N = rec.batch();
    const int M = rec.particles();
    const int d = idx.dimension();
    const int ld = idx.size();
    const int p = policy.action_dim();
    const double dt = rec.grid.dt();
    const double lambda = policy.lambda();
    const double inv = 1.0 / (static_cast<double>(M) * N);
    const double h_weight = (h_dt_weight ? dt : 1.0) / N;

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(policy.mean_net().param_count());
    MlpWorkspace ws;
    Eigen::MatrixXd jvals(n + 1, M), cot, input_grad, powers;
    Eigen::MatrixXd gbars(ld, n);
    Eigen::VectorXd c_val(d), cj(p), d1w(d), d2w(d * d);
    Eigen::MatrixXd c_jac(d, p), th_val(d, d), th_jac(d * d, p);
    for (int i = 0; i < N; ++i) {
        for (int k = 0; k <= n; ++k) {
            critic.forward_batch(assemble_net_input(rec.grid.knot(k), rec.grid.horizon,
                                                    rec.states[k][i], rec.moments[k][i]),
                                 ws);
            jvals.row(k) = critic.output(ws).row(0);
            if (k < n) {
                critic.backward_batch(Eigen::MatrixXd::Ones(1, M), ws, nullptr, &input_grad);
                gbars.col(k) = input_grad.bottomRows(ld).rowwise().sum() / static_cast<double>(M);
            }
        }
        for (int k = 0; k < n; ++k) {
            const double t = rec.grid.knot(k);
            policy.mean_batch(t, rec.states[k][i], rec.moments[k][i], ws);
            const Eigen::MatrixXd& mean = policy.mean_net().output(ws);
            // bracket * d(log p)/dm, sample by sample
            const Eigen::RowVectorXd bracket =
                jvals.row(k + 1) - jvals.row(k) + dt * rec.running[k][i].transpose();
            cot = rec.actions[k][i] - mean;
            cot.array().rowwise() *= (inv / lambda) * bracket.array();
            for (int j = 0; j < M; ++j) {
                cj.setZero();
                if (maps.drift) {
                    maps.drift(t, mean.col(j), lambda, c_val, c_jac);
                    d1_weighted(rec.states[k][i].col(j), idx, gbars.col(k), d1w, powers);
                    cj.noalias() += c_jac.transpose() * d1w;
                }
                if (maps.diffusion) {
                    maps.diffusion(t, mean.col(j), lambda, th_val, th_jac);
                    d2_weighted(rec.states[k][i].col(j), idx, gbars.col(k), d2w, powers);
                    cj.noalias() += 0.5 * th_jac.transpose() * d2w;
                }
                cot.col(j) += (h_weight / M) * cj;
            }
            policy.mean_net().backward_batch(cot, ws, &grad, nullptr);
        }
    }
    return grad;
}

inline void clip_global_norm(Eigen::VectorXd& grad, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = grad.norm();
    if (norm > max_norm) grad *= max_norm / norm;
}

/// One epoch of the actor-critic scheme: sample initial clouds, roll out
/// under lambda(e), regress the critic, then take the policy-gradient step
/// with the freshly updated critic.
inline EpochMetrics train_epoch(TrainerState& state, const TrainerConfig& cfg,
                                const ModelSpec& model, const GaussianInitFamily& family,
                                const MultiIndexSet& idx) {
    const double lambda = cfg.schedule()(state.epoch);
    state.actor.set_lambda(lambda);
    const TimeGrid grid{model.horizon, cfg.steps};
    const RngStream rng(cfg.seed, state.epoch);
    const ParticleCloud cloud = family.sample(cfg.batch, cfg.particles, rng);
    const RolloutRecord rec =
        rollout(state.actor, model, grid, cloud, idx, make_noise(cfg.seed, state.epoch));

    EpochMetrics metrics;
    metrics.epoch = state.epoch;
    metrics.lambda = lambda;

    Eigen::VectorXd cgrad(state.critic.param_count());
    metrics.critic_loss = critic_loss(rec, state.critic, &cgrad);
    if (!std::isfinite(metrics.critic_loss))
        throw DivergenceError("train_epoch: non-finite critic loss");
    metrics.critic_grad_norm = cgrad.norm();
    clip_global_norm(cgrad, cfg.clip_norm);
    state.critic_adam.step(state.critic.params(), cgrad, {cfg.critic_lr});

    Eigen::VectorXd agrad = policy_gradient(rec, state.critic, state.actor, model.gaussian_maps,
                                            idx, cfg.h_term_dt_weight);
    metrics.actor_grad_norm = agrad.norm();
    clip_global_norm(agrad, cfg.clip_norm);
    state.actor_adam.step(state.actor.mean_net().params(), agrad, {cfg.actor_lr});

    ++state.epoch;
    return metrics;
}

struct ConvergenceGap {
    double simulated_cost = 0.0;
    double critic_value = 0.0;
    double gap = 0.0;       // critic - simulated
    double rel_gap = 0.0;   // gap / |simulated|
};

/// Self-check of Remark-4.2 type: run the deterministic mean policy
/// (lambda = 0) from fresh clouds, accumulate the realized cost and compare
/// with the critic's value at t = 0.
inline ConvergenceGap evaluate_converged(const GaussianPolicy& actor, const Mlp& critic,
                                         const ModelSpec& model, const TimeGrid& grid,
                                         const ParticleCloud& init, const MultiIndexSet& idx,
                                         const NoiseSource& noise) {
    GaussianPolicy mean_policy = actor;
    mean_policy.set_lambda(0.0);
    const RolloutRecord rec = rollout(mean_policy, model, grid, init, idx, noise);
    const int N = rec.batch();
    const int M = rec.particles();
    const double dt = rec.grid.dt();

    ConvergenceGap out;
    MlpWorkspace ws;
    for (int i = 0; i < N; ++i) {
        double cost = rec.terminal[i].sum();
        for (int k = 0; k < rec.grid.steps; ++k) cost += dt * rec.running[k][i].sum();
        out.simulated_cost += cost / M;
        critic.forward_batch(
            assemble_net_input(0.0, rec.grid.horizon, rec.states[0][i], rec.moments[0][i]), ws);
        out.critic_value += critic.output(ws).row(0).sum() / M;
    }
    out.simulated_cost /= N;
    out.critic_value /= N;
    out.gap = out.critic_value - out.simulated_cost;
    out.rel_gap = out.gap / std::max(std::abs(out.simulated_cost), 1e-300);
    return out;
}

}  // namespace mfac
