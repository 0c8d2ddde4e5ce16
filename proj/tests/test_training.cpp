#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "mfac/self_check.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mfac::GaussianPolicy;
using mfac::Mlp;
using mfac::MultiIndexSet;
using mfac::RolloutRecord;

namespace {

mfac::detail::TinyInstance tiny(std::uint64_t seed, int batch = 2, int particles = 3,
                                int steps = 3, double lambda = 0.05) {
    return mfac::detail::make_tiny_instance(seed, batch, particles, steps, lambda);
}

}  // namespace

TEST_CASE("critic loss is zero when costs vanish and the critic is zero", "[training]") {
    auto inst = tiny(1);
    for (auto& per_k : inst.rec.running)
        for (auto& f : per_k) f.setZero();
    for (auto& g : inst.rec.terminal) g.setZero();
    Mlp zero_critic(inst.critic.shape());
    REQUIRE(mfac::critic_loss(inst.rec, zero_critic) == 0.0);
}

TEST_CASE("constant critic against zero costs integrates to c^2 T", "[training]") {
    auto inst = tiny(2);
    for (auto& per_k : inst.rec.running)
        for (auto& f : per_k) f.setZero();
    for (auto& g : inst.rec.terminal) g.setZero();
    Mlp critic(inst.critic.shape());
    const double c = 0.8;
    critic.bias(critic.layer_count() - 1)[0] = c;  // output bias only
    REQUIRE(mfac::critic_loss(inst.rec, critic) ==
            Catch::Approx(c * c * inst.grid.horizon).epsilon(1e-12));
}

TEST_CASE("duplicating every particle leaves the critic loss unchanged", "[training]") {
    auto inst = tiny(3);
    RolloutRecord doubled = inst.rec;
    const int m = inst.rec.particles();
    for (int k = 0; k <= inst.grid.steps; ++k)
        for (auto i = 0; i < inst.rec.batch(); ++i) {
            MatrixXd s(1, 2 * m);
            s << inst.rec.states[k][i], inst.rec.states[k][i];
            doubled.states[k][i] = s;
            doubled.moments[k][i] = mfac::empirical_moments(s, inst.idx);
        }
    for (int k = 0; k < inst.grid.steps; ++k)
        for (auto i = 0; i < inst.rec.batch(); ++i) {
            MatrixXd a(1, 2 * m);
            a << inst.rec.actions[k][i], inst.rec.actions[k][i];
            doubled.actions[k][i] = a;
            VectorXd f(2 * m);
            f << inst.rec.running[k][i], inst.rec.running[k][i];
            doubled.running[k][i] = f;
        }
    for (auto i = 0; i < inst.rec.batch(); ++i) {
        VectorXd g(2 * m);
        g << inst.rec.terminal[i], inst.rec.terminal[i];
        doubled.terminal[i] = g;
    }
    REQUIRE(mfac::critic_loss(doubled, inst.critic) ==
            Catch::Approx(mfac::critic_loss(inst.rec, inst.critic)).epsilon(1e-12));
}

TEST_CASE("critic-loss gradient matches finite differences", "[training]") {
    const auto result = mfac::check_critic_gradient(1e-4);
    INFO(result.detail);
    REQUIRE(result.pass);
}

TEST_CASE("h operator vanishes for theta-independent action maps", "[training]") {
    const auto result = mfac::check_h_operator(1e-10);
    INFO(result.detail);
    REQUIRE(result.pass);
}

TEST_CASE("drift-control h term reduces to the symbolic form at L = 1", "[training]") {
    // With d = 1, L = 1 the tensor D1 is identically 1, so the term is
    // dt * grad_theta[(1/M) sum_j m_theta] * dJbar/dy per (i, k).
    mfac::SystemicRiskParams pr;
    mfac::ModelSpec model = mfac::systemic_model(pr);
    MultiIndexSet idx(1, 1);
    const int input = 1 + 1 + idx.size();
    GaussianPolicy actor(Mlp::glorot({input, {4}, 1}, 61), pr.horizon, 0.03);
    Mlp critic = Mlp::glorot({input, {4}, 1}, 62);
    mfac::GaussianInitFamily family{VectorXd::Zero(1), VectorXd::Ones(1)};
    const mfac::ParticleCloud cloud = family.sample(1, 4, mfac::RngStream(8, 0));
    const RolloutRecord rec =
        mfac::rollout(actor, model, {pr.horizon, 2}, cloud, idx, mfac::make_noise(8, 0));

    const VectorXd fast =
        mfac::h_operator_term(rec, critic, actor, model.gaussian_maps, idx, true);

    VectorXd manual = VectorXd::Zero(fast.size());
    mfac::MlpWorkspace ws;
    MatrixXd input_grad;
    const int m = rec.particles();
    for (int k = 0; k < 2; ++k) {
        const double t = rec.grid.knot(k);
        const MatrixXd net_in =
            mfac::assemble_net_input(t, pr.horizon, rec.states[k][0], rec.moments[k][0]);
        critic.forward_batch(net_in, ws);
        critic.backward_batch(MatrixXd::Ones(1, m), ws, nullptr, &input_grad);
        const double jbar_y = input_grad.bottomRows(1).sum() / m;  // dJbar/dy_1 averaged
        actor.mean_net().forward_batch(net_in, ws);
        // grad_theta of (1/M) sum_j m_theta, scaled by dt * dJbar/dy.
        actor.mean_net().backward_batch(
            (rec.grid.dt() * jbar_y / m) * MatrixXd::Ones(1, m), ws, &manual, nullptr);
    }
    REQUIRE((fast - manual).lpNorm<Eigen::Infinity>() <=
            1e-12 * std::max(1.0, fast.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("policy gradient equals its score part plus the standalone h term", "[training]") {
    auto inst = tiny(17, 2, 4, 3);
    const VectorXd full = mfac::policy_gradient(inst.rec, inst.critic, inst.actor,
                                                inst.model.gaussian_maps, inst.idx, true);
    // Score-only part: zero out the h contribution by freezing the maps.
    mfac::GaussianActionMaps frozen;
    frozen.drift = [](double, const Eigen::Ref<const VectorXd>&, double,
                      Eigen::Ref<VectorXd> value, Eigen::Ref<MatrixXd> jac) {
        value.setZero();
        jac.setZero();
    };
    const VectorXd score_only =
        mfac::policy_gradient(inst.rec, inst.critic, inst.actor, frozen, inst.idx, true);
    const VectorXd h = mfac::h_operator_term(inst.rec, inst.critic, inst.actor,
                                             inst.model.gaussian_maps, inst.idx, true);
    REQUIRE((full - (score_only + h)).lpNorm<Eigen::Infinity>() <=
            1e-12 * std::max(1.0, full.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("policy gradient is exactly zero with on-mean actions and flat critic", "[training]") {
    auto inst = tiny(5, 1, 3, 2, 0.05);
    // Re-record actions exactly at the policy mean and zero the costs.
    mfac::MlpWorkspace ws;
    for (int k = 0; k < inst.grid.steps; ++k) {
        inst.actor.mean_batch(inst.grid.knot(k), inst.rec.states[k][0], inst.rec.moments[k][0],
                              ws);
        inst.rec.actions[k][0] = inst.actor.mean_net().output(ws);
        inst.rec.running[k][0].setZero();
    }
    inst.rec.terminal[0].setZero();
    Mlp flat_critic(inst.critic.shape());  // constant zero critic
    const VectorXd grad = mfac::policy_gradient(inst.rec, flat_critic, inst.actor,
                                                inst.model.gaussian_maps, inst.idx, true);
    REQUIRE(grad.isZero(0.0));
}

TEST_CASE("single-particle single-step gradient matches the symbolic formula", "[training]") {
    auto inst = tiny(6, 1, 2, 1, 0.05);
    const RolloutRecord& rec = inst.rec;
    const double dt = rec.grid.dt();
    const int m = rec.particles();

    const VectorXd grad = mfac::policy_gradient(rec, inst.critic, inst.actor,
                                                inst.model.gaussian_maps, inst.idx, true);

    // By hand: (1/M) sum_j score_j * bracket_j * grad m(x_j) + dt (1/M) sum_j
    // (D1^T Gbar)(x_j) grad m(x_j), all through one backward per sample.
    mfac::MlpWorkspace ws;
    MatrixXd input_grad, powers;
    VectorXd manual = VectorXd::Zero(grad.size());
    const MatrixXd in0 =
        mfac::assemble_net_input(0.0, rec.grid.horizon, rec.states[0][0], rec.moments[0][0]);
    const MatrixXd in1 = mfac::assemble_net_input(rec.grid.knot(1), rec.grid.horizon,
                                                  rec.states[1][0], rec.moments[1][0]);
    inst.critic.forward_batch(in1, ws);
    const Eigen::RowVectorXd j1 = inst.critic.output(ws).row(0);
    inst.critic.forward_batch(in0, ws);
    const Eigen::RowVectorXd j0 = inst.critic.output(ws).row(0);
    inst.critic.backward_batch(MatrixXd::Ones(1, m), ws, nullptr, &input_grad);
    const VectorXd gbar = input_grad.bottomRows(inst.idx.size()).rowwise().sum() / m;

    inst.actor.mean_net().forward_batch(in0, ws);
    const MatrixXd mean = inst.actor.mean_net().output(ws);
    VectorXd d1w(1);
    for (int j = 0; j < m; ++j) {
        const double bracket = j1[j] - j0[j] + dt * rec.running[0][0][j];
        const double score = (rec.actions[0][0](0, j) - mean(0, j)) / rec.lambda;
        mfac::d1_weighted(rec.states[0][0].col(j), inst.idx, gbar, d1w, powers);
        VectorXd sample = VectorXd::Zero(grad.size());
        mfac::MlpWorkspace ws_j;
        inst.actor.mean_net().forward_batch(in0.col(j), ws_j);
        inst.actor.mean_net().backward_batch(MatrixXd::Ones(1, 1), ws_j, &sample, nullptr);
        manual += (score * bracket / m + dt * d1w[0] / m) * sample;
    }
    REQUIRE((grad - manual).lpNorm<Eigen::Infinity>() <=
            1e-12 * std::max(1.0, grad.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("policy gradient matches finite differences of the surrogate", "[training]") {
    const auto result = mfac::check_policy_gradient_fd(1e-4);
    INFO(result.detail);
    REQUIRE(result.pass);
}

namespace {

// Test-side surrogate for arbitrary dimension and action maps: score term
// with frozen brackets plus A(theta) . Gbar with frozen Gbar.
double generic_surrogate(const mfac::ModelSpec& model, const MultiIndexSet& idx,
                         const RolloutRecord& rec, const GaussianPolicy& actor,
                         const Mlp& critic, const VectorXd& params) {
    const int n = rec.grid.steps, num_elems = rec.batch(), m = rec.particles();
    const double dt = rec.grid.dt(), lambda = rec.lambda;
    const double inv = 1.0 / (static_cast<double>(m) * num_elems);
    const double w = dt / num_elems;
    const int d = idx.dimension();

    GaussianPolicy probe = actor;
    probe.mean_net().params() = params;
    double value = 0.0;
    mfac::MlpWorkspace ws;
    MatrixXd input_grad;
    VectorXd c_val(d), th_flat(d * d);
    MatrixXd c_jac(d, probe.action_dim()), th_val(d, d), th_jac(d * d, probe.action_dim());
    for (int i = 0; i < num_elems; ++i) {
        MatrixXd jvals(n + 1, m);
        for (int k = 0; k <= n; ++k) {
            critic.forward_batch(mfac::assemble_net_input(rec.grid.knot(k), rec.grid.horizon,
                                                          rec.states[k][i], rec.moments[k][i]),
                                 ws);
            jvals.row(k) = critic.output(ws).row(0);
        }
        for (int k = 0; k < n; ++k) {
            critic.forward_batch(mfac::assemble_net_input(rec.grid.knot(k), rec.grid.horizon,
                                                          rec.states[k][i], rec.moments[k][i]),
                                 ws);
            critic.backward_batch(MatrixXd::Ones(1, m), ws, nullptr, &input_grad);
            const VectorXd gbar = input_grad.bottomRows(idx.size()).rowwise().sum() / m;
            probe.mean_batch(rec.grid.knot(k), rec.states[k][i], rec.moments[k][i], ws);
            const MatrixXd& mean = probe.mean_net().output(ws);
            for (int j = 0; j < m; ++j) {
                const double bracket = jvals(k + 1, j) - jvals(k, j) + dt * rec.running[k][i][j];
                value += inv * bracket *
                         GaussianPolicy::log_density_from_mean(rec.actions[k][i].col(j),
                                                               mean.col(j), lambda);
                if (model.gaussian_maps.drift) {
                    model.gaussian_maps.drift(rec.grid.knot(k), mean.col(j), lambda, c_val, c_jac);
                    value += (w / m) *
                             (mfac::d1_tensor(rec.states[k][i].col(j), idx) * c_val).dot(gbar);
                }
                if (model.gaussian_maps.diffusion) {
                    model.gaussian_maps.diffusion(rec.grid.knot(k), mean.col(j), lambda, th_val,
                                                  th_jac);
                    for (int a = 0; a < d; ++a)
                        for (int b = 0; b < d; ++b) th_flat[a * d + b] = th_val(a, b);
                    value += (w / m) * 0.5 *
                             (mfac::d2_tensor(rec.states[k][i].col(j), idx) * th_flat).dot(gbar);
                }
            }
        }
    }
    return value;
}

double fd_worst_error(const mfac::ModelSpec& model, const MultiIndexSet& idx,
                      const RolloutRecord& rec, GaussianPolicy& actor, const Mlp& critic) {
    const VectorXd grad =
        mfac::policy_gradient(rec, critic, actor, model.gaussian_maps, idx, true);
    VectorXd params = actor.mean_net().params();
    const double step = 1e-5;
    double worst = 0.0;
    for (int c = 0; c < params.size(); ++c) {
        const double saved = params[c];
        params[c] = saved + step;
        const double up = generic_surrogate(model, idx, rec, actor, critic, params);
        params[c] = saved - step;
        const double dn = generic_surrogate(model, idx, rec, actor, critic, params);
        params[c] = saved;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(grad[c] - fd) / (std::abs(grad[c]) + step));
    }
    return worst;
}

}  // namespace

TEST_CASE("policy gradient passes finite differences in two dimensions", "[training]") {
    mfac::SystemicRiskParams pr;
    mfac::ModelSpec model = mfac::systemic_model(pr, 2);
    MultiIndexSet idx(2, 2);
    const int input = 1 + 2 + idx.size();
    GaussianPolicy actor(Mlp::glorot({input, {5, 4}, 2}, 71), pr.horizon, 0.05);
    Mlp critic = Mlp::glorot({input, {5, 4}, 1}, 72);
    mfac::GaussianInitFamily family{VectorXd::Zero(2), VectorXd::Ones(2)};
    const mfac::ParticleCloud cloud = family.sample(2, 3, mfac::RngStream(5, 0));
    const RolloutRecord rec =
        mfac::rollout(actor, model, {pr.horizon, 2}, cloud, idx, mfac::make_noise(5, 0));
    REQUIRE(fd_worst_error(model, idx, rec, actor, critic) < 1e-4);
}

TEST_CASE("policy gradient passes finite differences with controlled volatility", "[training]") {
    const mfac::VolatilityModelParams pr;
    mfac::ModelSpec model = mfac::volatility_model(pr);
    MultiIndexSet idx(1, 3);
    const int input = 1 + 1 + idx.size();
    GaussianPolicy actor(Mlp::glorot({input, {5, 4}, 1}, 81), pr.horizon, 0.05);
    // Keep the sampled volatility away from zero for a stable rollout.
    actor.mean_net().bias(actor.mean_net().layer_count() - 1)[0] = 0.8;
    Mlp critic = Mlp::glorot({input, {5, 4}, 1}, 82);
    mfac::GaussianInitFamily family{0.2 * VectorXd::Ones(1), 0.5 * VectorXd::Ones(1)};
    const mfac::ParticleCloud cloud = family.sample(2, 3, mfac::RngStream(6, 0));
    const RolloutRecord rec =
        mfac::rollout(actor, model, {pr.horizon, 2}, cloud, idx, mfac::make_noise(6, 0));
    REQUIRE(fd_worst_error(model, idx, rec, actor, critic) < 1e-4);
}

TEST_CASE("lambda mismatch between record and policy is rejected", "[training]") {
    auto inst = tiny(7);
    inst.actor.set_lambda(inst.rec.lambda * 2.0);
    REQUIRE_THROWS_AS(mfac::policy_gradient(inst.rec, inst.critic, inst.actor,
                                            inst.model.gaussian_maps, inst.idx, true),
                      std::invalid_argument);
}

TEST_CASE("missing gaussian maps raise an unsupported-model error", "[training]") {
    auto inst = tiny(8);
    mfac::GaussianActionMaps none;
    REQUIRE_THROWS_AS(
        mfac::h_operator_term(inst.rec, inst.critic, inst.actor, none, inst.idx, true),
        mfac::UnsupportedModelError);
}

TEST_CASE("zero learning rates freeze the corresponding network", "[training]") {
    mfac::SystemicRiskParams pr;
    mfac::ModelSpec model = mfac::systemic_model(pr);
    MultiIndexSet idx(1, 2);
    mfac::GaussianInitFamily family{VectorXd::Zero(1), VectorXd::Ones(1)};

    mfac::TrainerConfig cfg;
    cfg.batch = 2;
    cfg.particles = 30;
    cfg.steps = 3;
    cfg.epochs = 2;
    cfg.seed = 5;
    cfg.hidden = {6, 5};

    SECTION("actor_lr = 0 leaves theta unchanged") {
        cfg.actor_lr = 0.0;
        mfac::TrainerState state = mfac::make_trainer_state(model, cfg, idx.size());
        const VectorXd theta = state.actor.mean_net().params();
        const VectorXd eta = state.critic.params();
        mfac::train_epoch(state, cfg, model, family, idx);
        REQUIRE(state.actor.mean_net().params() == theta);
        REQUIRE(state.critic.params() != eta);
    }
    SECTION("critic_lr = 0 leaves eta unchanged") {
        cfg.critic_lr = 0.0;
        mfac::TrainerState state = mfac::make_trainer_state(model, cfg, idx.size());
        const VectorXd eta = state.critic.params();
        mfac::train_epoch(state, cfg, model, family, idx);
        REQUIRE(state.critic.params() == eta);
    }
}

TEST_CASE("two-timescale violations warn but pass validation", "[training]") {
    mfac::TrainerConfig cfg;
    cfg.actor_lr = 0.01;
    cfg.critic_lr = 0.02;
    REQUIRE(cfg.two_timescale_warning().has_value());
    cfg.critic_lr = 0.1;
    REQUIRE_FALSE(cfg.two_timescale_warning().has_value());
    REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("convergence gap is zero for a free model with a zero critic", "[training]") {
    mfac::SystemicRiskParams pr;
    mfac::ModelSpec model = mfac::systemic_model(pr);
    model.running_cost = [](double, const Eigen::Ref<const VectorXd>&, const VectorXd&,
                            const Eigen::Ref<const VectorXd>&) { return 0.0; };
    model.terminal_cost = [](const Eigen::Ref<const VectorXd>&, const VectorXd&) { return 0.0; };
    MultiIndexSet idx(1, 2);
    GaussianPolicy actor(Mlp::glorot({4, {5}, 1}, 3), pr.horizon, 0.1);
    Mlp critic({4, {5}, 1});
    mfac::GaussianInitFamily family{VectorXd::Zero(1), VectorXd::Ones(1)};
    const mfac::ParticleCloud init = family.sample(2, 20, mfac::RngStream(4, 0));
    const mfac::ConvergenceGap gap = mfac::evaluate_converged(
        actor, critic, model, {pr.horizon, 4}, init, idx, mfac::make_noise(4, 1));
    REQUIRE(gap.simulated_cost == 0.0);
    REQUIRE(gap.critic_value == 0.0);
    REQUIRE(gap.gap == 0.0);
}

TEST_CASE("gradient clipping preserves direction and caps the norm", "[training]") {
    VectorXd g(3);
    g << 3.0, 4.0, 0.0;
    VectorXd clipped = g;
    mfac::clip_global_norm(clipped, 2.5);
    REQUIRE(clipped.norm() == Catch::Approx(2.5).epsilon(1e-12));
    REQUIRE(clipped[0] / clipped[1] == Catch::Approx(0.75).epsilon(1e-12));
    VectorXd small = g;
    mfac::clip_global_norm(small, 10.0);
    REQUIRE(small == g);
    VectorXd off = g;
    mfac::clip_global_norm(off, 0.0);  // disabled
    REQUIRE(off == g);
}
