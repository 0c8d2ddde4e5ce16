#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "mfac/policy.hpp"
#include "mfac/rng.hpp"

using Eigen::VectorXd;
using mfac::ExplorationSchedule;
using mfac::GaussianPolicy;

TEST_CASE("schedule hits the hand-computed sigmoid values", "[policy]") {
    const std::int64_t nhat = 2000;
    const ExplorationSchedule sched{0.1, 0.0001, nhat};
    // e = Nhat/2: argument 0, S = 1/2.
    REQUIRE(sched(nhat / 2) == Catch::Approx(0.05005).margin(1e-12));
    // e = 0: argument -10.
    REQUIRE(sched(0) ==
            Catch::Approx(0.0999 * (1.0 - 1.0 / (1.0 + std::exp(10.0))) + 0.0001).margin(1e-12));
    // e = Nhat: argument +10.
    REQUIRE(sched(nhat) ==
            Catch::Approx(0.0999 * (1.0 - 1.0 / (1.0 + std::exp(-10.0))) + 0.0001).margin(1e-12));
}

TEST_CASE("schedule is strictly decreasing within its bounds", "[policy]") {
    for (std::int64_t nhat : {333LL, 2000LL, 6000LL}) {
        const ExplorationSchedule sched{0.1, 0.0001, nhat};
        REQUIRE(sched(0) <= 0.1);
        REQUIRE(sched(nhat) >= 0.0001);
        for (std::int64_t e = 0; e < nhat; ++e) REQUIRE(sched(e + 1) < sched(e));
    }
}

TEST_CASE("log density closed form", "[policy]") {
    VectorXd a(1), m(1);

    SECTION("normalizer cancels at lambda = 1/(2 pi)") {
        a << 0.4;
        m << 0.4;
        REQUIRE(std::abs(GaussianPolicy::log_density_from_mean(a, m, 1.0 / (2.0 * M_PI))) <=
                1e-15);
    }
    SECTION("hand evaluation at lambda 0.1, deviation 0.2") {
        a << 0.7;
        m << 0.5;
        const double expected = -0.5 * std::log(0.2 * M_PI) - 0.2;
        REQUIRE(GaussianPolicy::log_density_from_mean(a, m, 0.1) ==
                Catch::Approx(expected).margin(1e-12));
    }
    SECTION("isotropic extension in higher action dimension") {
        VectorXd a2(3), m2(3);
        a2 << 0.1, 0.2, 0.3;
        m2 = a2;
        REQUIRE(GaussianPolicy::log_density_from_mean(a2, m2, 0.25) ==
                Catch::Approx(-1.5 * std::log(2.0 * M_PI * 0.25)).margin(1e-12));
    }
    SECTION("action gradient") {
        a << 0.7;
        m << 0.5;
        REQUIRE(GaussianPolicy::log_density_grad_action(a, m, 0.1)[0] ==
                Catch::Approx(-2.0).margin(1e-12));
    }
    SECTION("non-positive lambda is rejected") {
        a << 0.0;
        m << 0.0;
        REQUIRE_THROWS_AS(GaussianPolicy::log_density_from_mean(a, m, 0.0),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(GaussianPolicy::log_density_from_mean(a, m, -0.1),
                          std::invalid_argument);
    }
}

TEST_CASE("log density integrates to one over a quadrature grid", "[policy]") {
    // Gaussian normalization sanity for the 1-d kernel.
    VectorXd m(1);
    m << 0.3;
    const double lambda = 0.07;
    double integral = 0.0;
    const double h = 0.001;
    for (double x = -3.0; x <= 3.6; x += h) {
        VectorXd a(1);
        a << x;
        integral += h * std::exp(GaussianPolicy::log_density_from_mean(a, m, lambda));
    }
    REQUIRE(integral == Catch::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("empirical score mean vanishes within five standard errors", "[policy]") {
    // Draws alpha ~ N(m, lambda) at a fixed (t, x, mu) and checks the
    // Monte-Carlo mean of grad_theta log p against its standard error.
    const int draws = 10000;
    const double lambda = 0.04;
    mfac::Mlp net = mfac::Mlp::glorot({4, {6}, 1}, 44);
    GaussianPolicy policy(std::move(net), 1.0, lambda);
    VectorXd x(1), moments(2);
    x << 0.4;
    moments << 0.1, 0.3;
    const VectorXd mean = policy.mean(0.5, x, moments);

    VectorXd theta_dir = VectorXd::Zero(policy.mean_net().param_count());
    {
        // Direction grad_theta m is shared by every draw.
        mfac::MlpWorkspace ws;
        policy.mean_batch(0.5, x, moments, ws);
        policy.mean_net().backward_batch(Eigen::MatrixXd::Ones(1, 1), ws, &theta_dir, nullptr);
    }

    const mfac::RngStream rng(321, 0);
    double sum = 0.0, sumsq = 0.0;
    for (int j = 0; j < draws; ++j) {
        const double alpha = mean[0] + std::sqrt(lambda) * rng.normal(mfac::Stream::action, 0, 0, j, 0);
        const double score = (alpha - mean[0]) / lambda;
        sum += score;
        sumsq += score * score;
    }
    const double score_mean = sum / draws;
    const double sd = std::sqrt((sumsq - draws * score_mean * score_mean) / (draws - 1));
    const double se = sd / std::sqrt(static_cast<double>(draws));
    for (int c = 0; c < theta_dir.size(); ++c)
        REQUIRE(std::abs(score_mean * theta_dir[c]) <= 5.0 * se * std::abs(theta_dir[c]) + 1e-300);
}

TEST_CASE("policy rejects negative exploration variance", "[policy]") {
    GaussianPolicy policy(mfac::Mlp({4, {4}, 1}), 1.0, 0.1);
    REQUIRE_THROWS_AS(policy.set_lambda(-1e-3), std::invalid_argument);
}
