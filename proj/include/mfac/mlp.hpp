#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfac/rng.hpp"

namespace mfac {

/// Thrown when a training step hits non-finite numbers.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MlpShape {
    int input = 1;
    std::vector<int> hidden;  // may be empty (pure affine map)
    int output = 1;

    bool operator==(const MlpShape&) const = default;

    int param_count() const {
        int total = 0, in = input;
        for (int h : hidden) {
            total += h * in + h;
            in = h;
        }
        return total + output * in + output;
    }
};

/// Scratch buffers for batched forward/backward passes. One workspace per
/// worker; passes are pure given the parameter snapshot.
struct MlpWorkspace {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts.back() = output
    Eigen::MatrixXd delta, delta_prev;
};

/// Feedforward network, tanh on hidden layers, identity output. Parameters
/// live in one flat vector: per affine layer the weight matrix (out x in,
/// column-major) followed by the bias. The layout is fixed so parameter
/// vectors and checkpoints are reproducible.
class Mlp {
public:
    explicit Mlp(MlpShape shape) : shape_(std::move(shape)) {
        int offset = 0, in = shape_.input;
        for (std::size_t l = 0; l <= shape_.hidden.size(); ++l) {
            const int out = (l < shape_.hidden.size()) ? shape_.hidden[l] : shape_.output;
            layers_.push_back({offset, offset + out * in, out, in});
            offset += out * in + out;
            in = out;
        }
        params_ = Eigen::VectorXd::Zero(offset);
    }

    /// Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases.
    static Mlp glorot(MlpShape shape, std::uint64_t seed) {
        Mlp net(std::move(shape));
        const RngStream rng(seed, 0);
        for (std::size_t l = 0; l < net.layers_.size(); ++l) {
            const Layer& ly = net.layers_[l];
            const double bound = std::sqrt(6.0 / (ly.in + ly.out));
            auto w = net.weight(l);
            for (int c = 0; c < ly.in; ++c)
                for (int r = 0; r < ly.out; ++r)
                    w(r, c) = bound * (2.0 * rng.uniform(Stream::weight_init,
                                                         static_cast<std::int64_t>(l), r, c, 0) -
                                       1.0);
        }
        return net;
    }

    const MlpShape& shape() const { return shape_; }
    int input_width() const { return shape_.input; }
    int output_width() const { return shape_.output; }
    int param_count() const { return static_cast<int>(params_.size()); }
    int layer_count() const { return static_cast<int>(layers_.size()); }

    const Eigen::VectorXd& params() const { return params_; }
    Eigen::VectorXd& params() { return params_; }

    Eigen::Map<Eigen::MatrixXd> weight(std::size_t l) {
        const Layer& ly = layers_[l];
        return {params_.data() + ly.w_offset, ly.out, ly.in};
    }
    Eigen::Map<Eigen::VectorXd> bias(std::size_t l) {
        const Layer& ly = layers_[l];
        return {params_.data() + ly.b_offset, ly.out};
    }
    Eigen::Map<const Eigen::MatrixXd> weight(std::size_t l) const {
        const Layer& ly = layers_[l];
        return {params_.data() + ly.w_offset, ly.out, ly.in};
    }
    Eigen::Map<const Eigen::VectorXd> bias(std::size_t l) const {
        const Layer& ly = layers_[l];
        return {params_.data() + ly.b_offset, ly.out};
    }

    /// Batched forward pass; columns are samples. Activations stay in ws for
    /// a following backward_batch.
    void forward_batch(const Eigen::Ref<const Eigen::MatrixXd>& input, MlpWorkspace& ws) const {
        if (input.rows() != shape_.input)
            throw std::invalid_argument("Mlp::forward_batch: input width mismatch, got " +
                                        std::to_string(input.rows()) + " expected " +
                                        std::to_string(shape_.input));
        ws.acts.resize(layers_.size() + 1);
        ws.acts[0] = input;
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            Eigen::MatrixXd& a = ws.acts[l + 1];
            a.noalias() = weight(l) * ws.acts[l];
            a.colwise() += bias(l);
            // tanh through the vectorized exp kernel; Eigen's double tanh is
            // scalar and dominates the epoch cost otherwise.
            if (l + 1 < layers_.size())
                a.array() = 1.0 - 2.0 / ((2.0 * a.array()).exp() + 1.0);
        }
    }

    const Eigen::MatrixXd& output(const MlpWorkspace& ws) const { return ws.acts.back(); }

    /// Reverse-mode pass over the activations left by forward_batch.
    /// Accumulates (+=) d<cotangent, output>/d(params) into param_grad when
    /// given, and writes the input gradient when given.
    void backward_batch(const Eigen::Ref<const Eigen::MatrixXd>& cotangent, MlpWorkspace& ws,
                        Eigen::VectorXd* param_grad, Eigen::MatrixXd* input_grad) const {
        if (param_grad && param_grad->size() != params_.size())
            throw std::invalid_argument("Mlp::backward_batch: gradient size mismatch");
        ws.delta = cotangent;
        for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
            const Layer& ly = layers_[static_cast<std::size_t>(l)];
            if (param_grad) {
                Eigen::Map<Eigen::MatrixXd> gw(param_grad->data() + ly.w_offset, ly.out, ly.in);
                gw.noalias() += ws.delta * ws.acts[static_cast<std::size_t>(l)].transpose();
                Eigen::Map<Eigen::VectorXd> gb(param_grad->data() + ly.b_offset, ly.out);
                gb.noalias() += ws.delta.rowwise().sum();
            }
            if (l > 0) {
                ws.delta_prev.noalias() = weight(static_cast<std::size_t>(l)).transpose() * ws.delta;
                ws.delta_prev.array() *=
                    1.0 - ws.acts[static_cast<std::size_t>(l)].array().square();
                std::swap(ws.delta, ws.delta_prev);
            } else if (input_grad) {
                input_grad->noalias() = weight(0).transpose() * ws.delta;
            }
        }
    }

    /// Single-sample forward.
    Eigen::VectorXd forward(const Eigen::Ref<const Eigen::VectorXd>& input) const {
        MlpWorkspace ws;
        forward_batch(input, ws);
        return ws.acts.back().col(0);
    }

    /// Single-sample reverse-mode: gradients of <cotangent, forward(input)>.
    void backward(const Eigen::Ref<const Eigen::VectorXd>& input,
                  const Eigen::Ref<const Eigen::VectorXd>& cotangent,
                  Eigen::VectorXd* param_grad, Eigen::VectorXd* input_grad) const {
        MlpWorkspace ws;
        forward_batch(input, ws);
        Eigen::MatrixXd ig;
        backward_batch(cotangent, ws, param_grad, input_grad ? &ig : nullptr);
        if (input_grad) *input_grad = ig.col(0);
    }

private:
    struct Layer {
        int w_offset, b_offset, out, in;
    };

    MlpShape shape_;
    std::vector<Layer> layers_;
    Eigen::VectorXd params_;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam. The accumulators start at zero and the step counter
/// advances by exactly one per update.
class AdamState {
public:
    explicit AdamState(int dim)
        : m_(Eigen::VectorXd::Zero(dim)), v_(Eigen::VectorXd::Zero(dim)), steps_(0) {}

    std::int64_t steps() const { return steps_; }
    const Eigen::VectorXd& first_moment() const { return m_; }
    const Eigen::VectorXd& second_moment() const { return v_; }

    void step(Eigen::VectorXd& params, const Eigen::Ref<const Eigen::VectorXd>& grad,
              const AdamConfig& cfg) {
        if (params.size() != m_.size() || grad.size() != m_.size())
            throw std::invalid_argument("AdamState::step: dimension mismatch");
        if (!grad.allFinite())
            throw DivergenceError("AdamState::step: non-finite gradient");
        ++steps_;
        m_ = cfg.beta1 * m_ + (1.0 - cfg.beta1) * grad;
        v_ = cfg.beta2 * v_ + (1.0 - cfg.beta2) * grad.array().square().matrix();
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(steps_));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(steps_));
        params.array() -=
            cfg.lr * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + cfg.eps);
    }

    /// Direct accessors for checkpointing.
    Eigen::VectorXd& first_moment() { return m_; }
    Eigen::VectorXd& second_moment() { return v_; }
    void set_steps(std::int64_t s) { steps_ = s; }

private:
    Eigen::VectorXd m_, v_;
    std::int64_t steps_;
};

/// Max over parameter and input coordinates of
/// |analytic - central difference| / (|analytic| + step),
/// for the scalar map input -> sum(forward(input)).
inline double finite_difference_check(const Mlp& net,
                                      const Eigen::Ref<const Eigen::VectorXd>& input,
                                      double step) {
    if (step < 1e-7 || step > 1e-3)
        throw std::invalid_argument("finite_difference_check: step outside [1e-7, 1e-3]");
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(net.output_width());
    Eigen::VectorXd pg = Eigen::VectorXd::Zero(net.param_count());
    Eigen::VectorXd ig;
    net.backward(input, ones, &pg, &ig);

    Mlp probe = net;
    double worst = 0.0;
    for (int c = 0; c < net.param_count(); ++c) {
        const double saved = probe.params()[c];
        probe.params()[c] = saved + step;
        const double up = probe.forward(input).sum();
        probe.params()[c] = saved - step;
        const double dn = probe.forward(input).sum();
        probe.params()[c] = saved;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(pg[c] - fd) / (std::abs(pg[c]) + step));
    }
    Eigen::VectorXd x = input;
    for (int c = 0; c < net.input_width(); ++c) {
        const double saved = x[c];
        x[c] = saved + step;
        const double up = net.forward(x).sum();
        x[c] = saved - step;
        const double dn = net.forward(x).sum();
        x[c] = saved;
        const double fd = (up - dn) / (2.0 * step);
        worst = std::max(worst, std::abs(ig[c] - fd) / (std::abs(ig[c]) + step));
    }
    return worst;
}

}  // namespace mfac
