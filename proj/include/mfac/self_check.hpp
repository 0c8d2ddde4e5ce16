#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "mfac/benchmarks.hpp"
#include "mfac/training.hpp"

namespace mfac {

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline Eigen::MatrixXd random_cloud(const RngStream& rng, int tag, int particles, double mean_span,
                                    double var_span) {
    const double mean = mean_span * (2.0 * rng.uniform(Stream::init_mean, tag, 0, 0, 0) - 1.0);
    const double sd =
        std::sqrt(var_span * rng.uniform(Stream::init_var, tag, 0, 0, 0) + 1e-3);
    Eigen::MatrixXd cloud(1, particles);
    for (int j = 0; j < particles; ++j)
        cloud(0, j) = mean + sd * rng.normal(Stream::init_particle, tag, 0, j, 0);
    return cloud;
}

/// Small systemic-risk training instance for gradient oracles.
struct TinyInstance {
    ModelSpec model;
    MultiIndexSet idx;
    TimeGrid grid;
    GaussianPolicy actor;
    Mlp critic;
    RolloutRecord rec;
};

inline TinyInstance make_tiny_instance(std::uint64_t seed, int batch = 2, int particles = 3,
                                       int steps = 3, double lambda = 0.05) {
    SystemicRiskParams pr;
    ModelSpec model = systemic_model(pr);
    MultiIndexSet idx(1, 2);
    TimeGrid grid{pr.horizon, steps};
    const int input = 1 + 1 + idx.size();
    GaussianPolicy actor(Mlp::glorot({input, {4, 3}, 1}, mix64(seed ^ 0xA)), pr.horizon, lambda);
    Mlp critic = Mlp::glorot({input, {4, 3}, 1}, mix64(seed ^ 0xB));
    GaussianInitFamily family{Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)};
    const ParticleCloud cloud = family.sample(batch, particles, RngStream(seed, 0));
    RolloutRecord rec = rollout(actor, model, grid, cloud, idx, make_noise(seed, 0));
    return {std::move(model), std::move(idx), grid, std::move(actor), std::move(critic),
            std::move(rec)};
}

/// Surrogate objective whose theta-derivative is the policy gradient:
/// score term with frozen brackets plus the averaged-H inner product with
/// frozen critic moment-gradients.
inline double policy_surrogate(const TinyInstance& inst, const Eigen::VectorXd& actor_params,
                               const std::vector<Eigen::MatrixXd>& brackets,
                               const std::vector<Eigen::VectorXd>& gbars, bool h_dt_weight) {
    const RolloutRecord& rec = inst.rec;
    const int n = rec.grid.steps;
    const int N = rec.batch();
    const int M = rec.particles();
    const double lambda = rec.lambda;
    const double inv = 1.0 / (static_cast<double>(M) * N);
    const double weight = (h_dt_weight ? rec.grid.dt() : 1.0) / N;

    GaussianPolicy actor = inst.actor;
    actor.mean_net().params() = actor_params;
    const GaussianActionMaps& maps = inst.model.gaussian_maps;

    double value = 0.0;
    MlpWorkspace ws;
    Eigen::MatrixXd powers;
    Eigen::VectorXd c_val(1), d1w(1);
    Eigen::MatrixXd c_jac(1, 1);
    for (int i = 0; i < N; ++i)
        for (int k = 0; k < n; ++k) {
            const double t = rec.grid.knot(k);
            actor.mean_batch(t, rec.states[k][i], rec.moments[k][i], ws);
            const Eigen::MatrixXd& mean = actor.mean_net().output(ws);
            const Eigen::MatrixXd& bracket = brackets[static_cast<std::size_t>(i)];
            for (int j = 0; j < M; ++j) {
                value += inv * bracket(k, j) *
                         GaussianPolicy::log_density_from_mean(rec.actions[k][i].col(j),
                                                               mean.col(j), lambda);
                maps.drift(t, mean.col(j), lambda, c_val, c_jac);
                d1_weighted(rec.states[k][i].col(j), inst.idx,
                            gbars[static_cast<std::size_t>(i * n + k)], d1w, powers);
                value += (weight / M) * d1w[0] * c_val[0];
            }
        }
    return value;
}

}  // namespace detail

/// Criterion: the systemic preset reproduces the paper's analytic row
/// E[V(0, X0, mu0)] over the variance grid 0, 0.1, ..., 0.9.
inline CheckResult check_table1_anal(double tol = 5e-4) {
    const SystemicRiskParams pr;
    const double expected[10] = {0.3870, 0.4095, 0.4321, 0.4546, 0.4772,
                                 0.4997, 0.5223, 0.5448, 0.5674, 0.5900};
    double worst = 0.0;
    for (int r = 0; r < 10; ++r) {
        const double v = systemic_expected_value0(0.1 * r, pr);
        worst = std::max(worst, std::abs(v - expected[r]));
    }
    std::ostringstream detail;
    detail << "max |E[V] - table| = " << worst << " (tol " << tol << ")";
    return {"analytic-oracle reproduction (systemic value table)", worst <= tol, detail.str()};
}

/// Criterion: Master Bellman residual of both constructed non-LQ models at
/// random (t, x, cloud) points.
inline CheckResult check_master_residuals(int points = 50, double tol = 1e-6,
                                          int particles = 200) {
    const CosineModelParams cos_pr;
    const VolatilityModelParams vol_pr;
    const RngStream rng(2024, 0);
    double worst = 0.0;
    for (int r = 0; r < points; ++r) {
        const Eigen::MatrixXd cloud = detail::random_cloud(rng, r, particles, 0.5, 0.5);
        const double t = cos_pr.horizon * rng.uniform(Stream::eval_particle, r, 1, 0, 0);
        const double x = 2.0 * rng.normal(Stream::eval_particle, r, 2, 0, 0);
        worst = std::max(worst, std::abs(cosine_master_residual(t, x, cloud, cos_pr)));
        worst = std::max(worst, std::abs(volatility_master_residual(t, x, cloud, vol_pr)));
    }
    std::ostringstream detail;
    detail << "max |residual| = " << worst << " over " << points << " points (tol " << tol << ")";
    return {"master-equation residual (cosine + volatility)", worst <= tol, detail.str()};
}

/// Criterion: the trigonometric expansions of both forcing terms agree with
/// the unexpanded expectation forms.
inline CheckResult check_f_equivalence(int clouds = 100, double tol = 1e-10,
                                       int particles = 100) {
    const CosineModelParams cos_pr;
    const VolatilityModelParams vol_pr;
    const RngStream rng(77, 0);
    double worst = 0.0;
    for (int r = 0; r < clouds; ++r) {
        const Eigen::MatrixXd cloud = detail::random_cloud(rng, r, particles, 0.6, 0.5);
        const double t = cos_pr.horizon * rng.uniform(Stream::eval_particle, r, 1, 0, 0);
        const double x = 2.0 * rng.normal(Stream::eval_particle, r, 2, 0, 0);
        const TrigStats ts = trig_stats(cloud, cos_pr.kappa);
        worst = std::max(worst, std::abs(cosine_F(t, x, ts, cos_pr) -
                                         cosine_F_raw(t, x, cloud, cos_pr)));
        const VolTrigStats vs = vol_trig_stats(t, cloud, vol_pr);
        worst = std::max(worst, std::abs(volatility_F(t, x, vs, vol_pr) -
                                         volatility_F_raw(t, x, cloud, vol_pr)));
    }
    std::ostringstream detail;
    detail << "max |expanded - raw| = " << worst << " over " << clouds << " clouds (tol " << tol
           << ")";
    return {"forcing-term expansion equivalence", worst <= tol, detail.str()};
}

/// Criterion 4a: network parameter/input gradients against central finite
/// differences on random cases.
inline CheckResult check_network_gradients(int cases = 100, double tol = 1e-4) {
    const RngStream rng(5150, 0);
    double worst = 0.0;
    for (int r = 0; r < cases; ++r) {
        Mlp net = Mlp::glorot({4, {7, 6}, 2}, 9000 + static_cast<std::uint64_t>(r));
        for (int c = 0; c < net.param_count(); ++c)
            net.params()[c] = 2.0 * rng.uniform(Stream::weight_init, r, c, 0, 0) - 1.0;
        Eigen::VectorXd input(4);
        for (int c = 0; c < 4; ++c)
            input[c] = 3.0 * rng.uniform(Stream::eval_particle, r, c, 0, 0) - 1.5;
        worst = std::max(worst, finite_difference_check(net, input, 1e-5));
    }
    std::ostringstream detail;
    detail << "max gradient error = " << worst << " over " << cases << " cases (tol " << tol
           << ")";
    return {"network gradients vs finite differences", worst <= tol, detail.str()};
}

/// Criterion 4b: critic-loss eta-gradient against finite differences on an
/// M=3, N=2, n=3 instance.
inline CheckResult check_critic_gradient(double tol = 1e-4) {
    detail::TinyInstance inst = detail::make_tiny_instance(11);
    Eigen::VectorXd grad(inst.critic.param_count());
    critic_loss(inst.rec, inst.critic, &grad);
    const double step = 1e-5;
    Mlp probe = inst.critic;
    double worst = 0.0;
    for (int c = 0; c < probe.param_count(); ++c) {
        const double saved = probe.params()[c];
        probe.params()[c] = saved + step;
        const double up = critic_loss(inst.rec, probe);
        probe.params()[c] = saved - step;
        const double dn = critic_loss(inst.rec, probe);
        probe.params()[c] = saved;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(grad[c] - fd) / (std::abs(grad[c]) + step));
    }
    std::ostringstream detail;
    detail << "max relative error = " << worst << " (tol " << tol << ")";
    return {"critic-loss gradient vs finite differences", worst <= tol, detail.str()};
}

/// Criterion 4c: the full policy gradient against finite differences of the
/// frozen-bracket surrogate objective.
inline CheckResult check_policy_gradient_fd(double tol = 1e-4) {
    detail::TinyInstance inst = detail::make_tiny_instance(12);
    const RolloutRecord& rec = inst.rec;
    const int n = rec.grid.steps;
    const int N = rec.batch();
    const int M = rec.particles();

    // Freeze brackets J(t_{k+1}) - J(t_k) + f dt and the averaged critic
    // moment-gradients.
    std::vector<Eigen::MatrixXd> brackets(static_cast<std::size_t>(N));
    std::vector<Eigen::VectorXd> gbars;
    MlpWorkspace ws;
    Eigen::MatrixXd input_grad;
    for (int i = 0; i < N; ++i) {
        Eigen::MatrixXd jvals(n + 1, M);
        for (int k = 0; k <= n; ++k) {
            inst.critic.forward_batch(assemble_net_input(rec.grid.knot(k), rec.grid.horizon,
                                                         rec.states[k][i], rec.moments[k][i]),
                                      ws);
            jvals.row(k) = inst.critic.output(ws).row(0);
        }
        brackets[static_cast<std::size_t>(i)].resize(n, M);
        for (int k = 0; k < n; ++k)
            brackets[static_cast<std::size_t>(i)].row(k) =
                jvals.row(k + 1) - jvals.row(k) +
                rec.grid.dt() * rec.running[k][i].transpose();
        for (int k = 0; k < n; ++k) {
            inst.critic.forward_batch(assemble_net_input(rec.grid.knot(k), rec.grid.horizon,
                                                         rec.states[k][i], rec.moments[k][i]),
                                      ws);
            inst.critic.backward_batch(Eigen::MatrixXd::Ones(1, M), ws, nullptr, &input_grad);
            gbars.push_back(input_grad.bottomRows(inst.idx.size()).rowwise().sum() /
                            static_cast<double>(M));
        }
    }

    const Eigen::VectorXd grad = policy_gradient(rec, inst.critic, inst.actor,
                                                 inst.model.gaussian_maps, inst.idx, true);
    const double step = 1e-5;
    Eigen::VectorXd params = inst.actor.mean_net().params();
    double worst = 0.0;
    for (int c = 0; c < params.size(); ++c) {
        const double saved = params[c];
        params[c] = saved + step;
        const double up = detail::policy_surrogate(inst, params, brackets, gbars, true);
        params[c] = saved - step;
        const double dn = detail::policy_surrogate(inst, params, brackets, gbars, true);
        params[c] = saved;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(grad[c] - fd) / (std::abs(grad[c]) + step));
    }
    std::ostringstream detail;
    detail << "max relative error = " << worst << " (tol " << tol << ")";
    return {"policy gradient vs finite differences of the surrogate", worst <= tol, detail.str()};
}

/// Criterion: averaging-then-differentiating the H operator equals the
/// per-sample brute force exactly (linearity), and theta-independent action
/// maps give the exact zero vector.
inline CheckResult check_h_operator(double tol = 1e-10) {
    double worst = 0.0;
    for (std::uint64_t seed : {21ULL, 22ULL, 23ULL}) {
        detail::TinyInstance inst = detail::make_tiny_instance(seed, 2, 5, 2);
        const RolloutRecord& rec = inst.rec;
        const int n = rec.grid.steps;
        const int N = rec.batch();
        const int M = rec.particles();
        const double weight = rec.grid.dt() / N;

        const Eigen::VectorXd fast = h_operator_term(rec, inst.critic, inst.actor,
                                                     inst.model.gaussian_maps, inst.idx, true);

        // Brute force: one reverse sweep per sample, averaged afterwards.
        Eigen::VectorXd brute = Eigen::VectorXd::Zero(fast.size());
        MlpWorkspace ws;
        Eigen::MatrixXd input_grad, powers;
        Eigen::VectorXd c_val(1), d1w(1), cot(1);
        Eigen::MatrixXd c_jac(1, 1);
        for (int i = 0; i < N; ++i)
            for (int k = 0; k < n; ++k) {
                const double t = rec.grid.knot(k);
                const Eigen::MatrixXd input = assemble_net_input(
                    t, rec.grid.horizon, rec.states[k][i], rec.moments[k][i]);
                inst.critic.forward_batch(input, ws);
                inst.critic.backward_batch(Eigen::MatrixXd::Ones(1, M), ws, nullptr, &input_grad);
                const Eigen::VectorXd gbar =
                    input_grad.bottomRows(inst.idx.size()).rowwise().sum() /
                    static_cast<double>(M);
                for (int j = 0; j < M; ++j) {
                    inst.actor.mean_net().forward_batch(input.col(j), ws);
                    const Eigen::VectorXd mean = inst.actor.mean_net().output(ws).col(0);
                    inst.model.gaussian_maps.drift(t, mean, rec.lambda, c_val, c_jac);
                    d1_weighted(rec.states[k][i].col(j), inst.idx, gbar, d1w, powers);
                    cot[0] = c_jac(0, 0) * d1w[0];
                    Eigen::VectorXd sample_grad = Eigen::VectorXd::Zero(fast.size());
                    inst.actor.mean_net().backward_batch(cot, ws, &sample_grad, nullptr);
                    brute += (weight / M) * sample_grad;
                }
            }
        worst = std::max(worst, (fast - brute).lpNorm<Eigen::Infinity>() /
                                    std::max(1.0, fast.lpNorm<Eigen::Infinity>()));
    }

    // theta-independent maps: constant C_theta with zero Jacobian.
    detail::TinyInstance inst = detail::make_tiny_instance(33, 2, 4, 2);
    GaussianActionMaps frozen;
    frozen.drift = [](double, const Eigen::Ref<const Eigen::VectorXd>&, double,
                      Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::MatrixXd> jac) {
        value.setConstant(0.7);
        jac.setZero();
    };
    const Eigen::VectorXd zero =
        h_operator_term(inst.rec, inst.critic, inst.actor, frozen, inst.idx, true);
    const bool zero_ok = zero.isZero(0.0);

    std::ostringstream detail;
    detail << "max |averaged - per-sample| = " << worst << " (tol " << tol
           << "), theta-independent maps give exact zero: " << (zero_ok ? "yes" : "no");
    return {"H-operator linearity identity and zero case", worst <= tol && zero_ok, detail.str()};
}

/// Criterion: exploration schedule values, log-density closed form, score
/// sample mean within 5 standard errors at M = 10^4.
inline CheckResult check_schedule_and_policy() {
    std::ostringstream detail;
    bool pass = true;

    const std::int64_t nhat = 6000;
    const ExplorationSchedule sched{0.1, 0.0001, nhat};
    const double s_neg10 = 1.0 / (1.0 + std::exp(10.0));
    const double s_pos10 = 1.0 / (1.0 + std::exp(-10.0));
    const double lam0 = 0.0999 * (1.0 - s_neg10) + 0.0001;
    const double lam_mid = 0.05005;
    const double lam_end = 0.0999 * (1.0 - s_pos10) + 0.0001;
    pass = pass && std::abs(sched(0) - lam0) <= 1e-6;
    pass = pass && std::abs(sched(nhat / 2) - lam_mid) <= 1e-6;
    pass = pass && std::abs(sched(nhat) - lam_end) <= 1e-6;
    pass = pass && sched(0) <= 0.1 && sched(nhat) >= 0.0001;
    for (std::int64_t e = 0; e < nhat; ++e)
        if (!(sched(e + 1) < sched(e))) {
            pass = false;
            detail << "schedule not strictly decreasing at e=" << e << "; ";
            break;
        }

    Eigen::VectorXd a(1), m(1);
    a << 0.3;
    m << 0.3;
    const double at_mean = GaussianPolicy::log_density_from_mean(a, m, 1.0 / (2.0 * M_PI));
    pass = pass && std::abs(at_mean) <= 1e-12;
    a << 0.5;
    const double ld = GaussianPolicy::log_density_from_mean(a, m, 0.1);
    const double closed = -0.5 * std::log(2.0 * M_PI * 0.1) - 0.04 / 0.2;
    pass = pass && std::abs(ld - closed) <= 1e-12;
    const Eigen::VectorXd ga = GaussianPolicy::log_density_grad_action(a, m, 0.1);
    pass = pass && std::abs(ga[0] + 2.0) <= 1e-12;

    // Empirical score mean at a fixed (t, x, mu).
    const int draws = 10000;
    const double lambda = 0.05;
    const RngStream rng(808, 0);
    double sum = 0.0, sumsq = 0.0;
    for (int j = 0; j < draws; ++j) {
        const double z = rng.normal(Stream::action, 0, 0, j, 0);
        const double score = z / std::sqrt(lambda);  // (alpha - m)/lambda with alpha = m + sqrt(lambda) z
        sum += score;
        sumsq += score * score;
    }
    const double mean = sum / draws;
    const double sd = std::sqrt((sumsq - draws * mean * mean) / (draws - 1));
    const double se = sd / std::sqrt(static_cast<double>(draws));
    pass = pass && std::abs(mean) <= 5.0 * se;
    detail << "schedule values ok, log-density closed form ok, |score mean| = " << std::abs(mean)
           << " <= 5 SE = " << 5.0 * se;
    return {"exploration schedule and Gaussian policy", pass, detail.str()};
}

/// The value-function convention at sigma != 1: the additive term R must
/// satisfy dR/dt = -sigma^2 K, and K its Riccati equation
/// dK/dt = 2 K^2 + 2 (kappa+q) K - (p - q^2)/2, with K(T) = c/2, R(T) = 0.
inline CheckResult check_lq_sigma_convention() {
    SystemicRiskParams pr;
    pr.sigma = 2.0;
    const double step = 1e-5;
    double worst = 0.0;
    for (double t : {0.15, 0.4, 0.85}) {
        const double dR = (systemic_R(t + step, pr) - systemic_R(t - step, pr)) / (2.0 * step);
        worst = std::max(worst, std::abs(dR + pr.sigma * pr.sigma * systemic_K(t, pr)));
        const double dK = (systemic_K(t + step, pr) - systemic_K(t - step, pr)) / (2.0 * step);
        const double kt = systemic_K(t, pr);
        const double riccati =
            2.0 * kt * kt + 2.0 * (pr.kappa + pr.q) * kt - 0.5 * (pr.p - pr.q * pr.q);
        worst = std::max(worst, std::abs(dK - riccati));
    }
    const bool terminal_ok = std::abs(systemic_K(pr.horizon, pr) - 0.5 * pr.c) <= 1e-12 &&
                             std::abs(systemic_R(pr.horizon, pr)) <= 1e-12;
    std::ostringstream detail;
    detail << "max ODE residual = " << worst << " at sigma = 2 (tol 1e-5), terminal conditions "
           << (terminal_ok ? "exact" : "BROKEN");
    return {"LQ value convention at sigma != 1", worst <= 1e-5 && terminal_ok, detail.str()};
}

/// Fast invariant suite behind `mfac check`.
inline std::vector<CheckResult> run_self_checks() {
    return {check_table1_anal(),       check_master_residuals(),  check_f_equivalence(),
            check_network_gradients(), check_critic_gradient(),   check_policy_gradient_fd(),
            check_h_operator(),        check_schedule_and_policy(), check_lq_sigma_convention()};
}

}  // namespace mfac
