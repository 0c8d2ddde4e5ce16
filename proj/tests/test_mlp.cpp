#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>

#include "mfac/mlp.hpp"

using Eigen::MatrixXd;
using Eigen::VectorXd;
using mfac::AdamConfig;
using mfac::AdamState;
using mfac::Mlp;
using mfac::MlpShape;
using mfac::MlpWorkspace;

namespace {

VectorXd random_vec(int n, std::uint64_t seed, double scale = 1.0) {
    const mfac::RngStream rng(seed, 0);
    VectorXd v(n);
    for (int i = 0; i < n; ++i)
        v[i] = scale * (2.0 * rng.uniform(mfac::Stream::eval_particle, 0, 0, i, 0) - 1.0);
    return v;
}

Mlp random_net(MlpShape shape, std::uint64_t seed) {
    Mlp net(shape);
    net.params() = random_vec(net.param_count(), seed);
    return net;
}

// Central finite differences of <cotangent, forward(input)> in the parameters.
VectorXd fd_param_grad(const Mlp& net, const VectorXd& input, const VectorXd& cot, double step) {
    Mlp probe = net;
    VectorXd fd(net.param_count());
    for (int c = 0; c < net.param_count(); ++c) {
        const double saved = probe.params()[c];
        probe.params()[c] = saved + step;
        const double up = cot.dot(probe.forward(input));
        probe.params()[c] = saved - step;
        const double dn = cot.dot(probe.forward(input));
        probe.params()[c] = saved;
        fd[c] = (up - dn) / (2.0 * step);
    }
    return fd;
}

}  // namespace

TEST_CASE("zero parameters give zero output", "[mlp]") {
    Mlp net({4, {20, 20, 20}, 2});
    REQUIRE(net.forward(random_vec(4, 3)).isZero(0.0));
}

TEST_CASE("single-neuron chain computes a scaled tanh", "[mlp]") {
    Mlp net({1, {1}, 1});
    net.weight(0)(0, 0) = 1.0;
    net.weight(1)(0, 0) = 0.7;
    VectorXd in(1);
    in << 0.35;
    REQUIRE(net.forward(in)[0] == Catch::Approx(0.7 * std::tanh(0.35)).epsilon(1e-12));
}

TEST_CASE("dead input coordinate cannot move the output", "[mlp]") {
    Mlp net = Mlp::glorot({3, {8}, 1}, 99);
    net.weight(0).col(1).setZero();
    VectorXd a = random_vec(3, 5), b = a;
    b[1] += 10.0;
    REQUIRE(net.forward(a) == net.forward(b));
}

TEST_CASE("parameter count follows the layer layout", "[mlp]") {
    MlpShape shape{4, {20, 20, 20}, 1};
    REQUIRE(shape.param_count() == (4 * 20 + 20) + 2 * (20 * 20 + 20) + (20 * 1 + 1));
    REQUIRE(Mlp(shape).param_count() == shape.param_count());
}

TEST_CASE("zero cotangent gives zero gradients", "[mlp]") {
    Mlp net = random_net({3, {6, 5}, 2}, 11);
    VectorXd pg = VectorXd::Zero(net.param_count()), ig;
    net.backward(random_vec(3, 12), VectorXd::Zero(2), &pg, &ig);
    REQUIRE(pg.isZero(0.0));
    REQUIRE(ig.isZero(0.0));
}

TEST_CASE("parameter gradients match finite differences", "[mlp]") {
    const double step = 1e-5;
    for (int rep = 0; rep < 8; ++rep) {
        Mlp net = random_net({4, {6, 5}, 2}, 20 + rep);
        const VectorXd input = random_vec(4, 40 + rep);
        const VectorXd cot = random_vec(2, 60 + rep);
        VectorXd pg = VectorXd::Zero(net.param_count());
        net.backward(input, cot, &pg, nullptr);
        const VectorXd fd = fd_param_grad(net, input, cot, step);
        for (int c = 0; c < pg.size(); ++c)
            REQUIRE(std::abs(pg[c] - fd[c]) / (std::abs(pg[c]) + step) < 1e-5);
    }
}

TEST_CASE("input gradients match finite differences", "[mlp]") {
    const double step = 1e-5;
    Mlp net = random_net({6, {8, 8}, 1}, 77);
    const VectorXd input = random_vec(6, 78);
    VectorXd ig;
    VectorXd ones = VectorXd::Ones(1);
    net.backward(input, ones, nullptr, &ig);
    for (int c = 0; c < 6; ++c) {
        VectorXd up = input, dn = input;
        up[c] += step;
        dn[c] -= step;
        const double fd = (net.forward(up)[0] - net.forward(dn)[0]) / (2.0 * step);
        REQUIRE(std::abs(ig[c] - fd) / (std::abs(ig[c]) + step) < 1e-5);
    }
}

TEST_CASE("random gradient check suite stays under 1e-4", "[mlp]") {
    for (int rep = 0; rep < 100; ++rep) {
        Mlp net = random_net({3, {7, 6}, 2}, 1000 + rep);
        const VectorXd input = random_vec(3, 2000 + rep, 1.5);
        REQUIRE(mfac::finite_difference_check(net, input, 1e-5) < 1e-4);
    }
}

TEST_CASE("finite-difference checker on a linear network is exact", "[mlp]") {
    Mlp net = random_net({5, {}, 3}, 8);
    REQUIRE(mfac::finite_difference_check(net, random_vec(5, 9), 1e-4) < 1e-10);
}

TEST_CASE("finite-difference error shrinks with the step on a smooth net", "[mlp]") {
    // Weights large enough that truncation dominates roundoff down to 1e-5.
    Mlp net = Mlp::glorot({4, {20, 20, 20}, 1}, 3);
    net.params() *= 1.6;
    VectorXd input(4);
    input << 0.3, -0.6, 0.9, 0.2;
    const double e3 = mfac::finite_difference_check(net, input, 1e-3);
    const double e4 = mfac::finite_difference_check(net, input, 1e-4);
    const double e5 = mfac::finite_difference_check(net, input, 1e-5);
    REQUIRE(e5 < 1e-4);
    REQUIRE(e3 >= e4);
    REQUIRE(e4 >= e5);
}

TEST_CASE("forward and backward are bit-deterministic", "[mlp]") {
    Mlp net = random_net({5, {9, 9}, 2}, 31);
    const VectorXd input = random_vec(5, 32);
    const VectorXd cot = random_vec(2, 33);
    VectorXd pg1 = VectorXd::Zero(net.param_count()), pg2 = pg1, ig1, ig2;
    net.backward(input, cot, &pg1, &ig1);
    net.backward(input, cot, &pg2, &ig2);
    REQUIRE(net.forward(input) == net.forward(input));
    REQUIRE(pg1 == pg2);
    REQUIRE(ig1 == ig2);
}

TEST_CASE("width mismatch is rejected", "[mlp]") {
    Mlp net({4, {5}, 1});
    REQUIRE_THROWS_AS(net.forward(random_vec(3, 1)), std::invalid_argument);
}

TEST_CASE("glorot init bounds weights and zeroes biases", "[mlp]") {
    Mlp net = Mlp::glorot({7, {20}, 3}, 1234);
    REQUIRE(net.bias(0).isZero(0.0));
    REQUIRE(net.bias(1).isZero(0.0));
    const double bound0 = std::sqrt(6.0 / (7 + 20));
    REQUIRE(net.weight(0).array().abs().maxCoeff() <= bound0);
    REQUIRE(net.weight(0).array().abs().maxCoeff() > 0.0);
    // Different seeds give different nets.
    REQUIRE(Mlp::glorot({7, {20}, 3}, 1).params() != Mlp::glorot({7, {20}, 3}, 2).params());
}

TEST_CASE("adam leaves parameters alone on a zero first gradient", "[mlp]") {
    AdamState adam(4);
    VectorXd params = random_vec(4, 2);
    const VectorXd before = params;
    adam.step(params, VectorXd::Zero(4), {0.01});
    REQUIRE(params == before);
    REQUIRE(adam.steps() == 1);
}

TEST_CASE("first adam step with unit gradient moves by about -lr", "[mlp]") {
    AdamState adam(3);
    VectorXd params = VectorXd::Zero(3);
    adam.step(params, VectorXd::Ones(3), {0.01});
    for (int c = 0; c < 3; ++c) REQUIRE(std::abs(params[c] + 0.01) < 1e-6);
}

TEST_CASE("sign-flipped gradient flips the first update exactly", "[mlp]") {
    const VectorXd grad = random_vec(5, 91).array() + 1.5;
    AdamState a1(5), a2(5);
    VectorXd p1 = VectorXd::Zero(5), p2 = VectorXd::Zero(5);
    a1.step(p1, grad, {0.02});
    a2.step(p2, -grad, {0.02});
    REQUIRE(p1 == -p2);
}

TEST_CASE("adam step size stays bounded by the learning rate", "[mlp]") {
    const double lr = 0.01;
    AdamState adam(6);
    VectorXd params = VectorXd::Zero(6);
    for (int iter = 0; iter < 300; ++iter) {
        VectorXd prev = params;
        // Smoothly varying gradient sequence, mixed signs and scales.
        VectorXd grad = random_vec(6, 500 + iter, std::pow(10.0, (iter % 7) - 3));
        adam.step(params, grad, {lr});
        REQUIRE((params - prev).lpNorm<Eigen::Infinity>() <= lr * (1.0 + 1e-6));
    }
}

TEST_CASE("non-finite gradients abort the step", "[mlp]") {
    AdamState adam(2);
    VectorXd params = VectorXd::Zero(2), grad(2);
    grad << 1.0, std::numeric_limits<double>::quiet_NaN();
    REQUIRE_THROWS_AS(adam.step(params, grad, {0.01}), mfac::DivergenceError);
}
