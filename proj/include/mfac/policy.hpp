#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "mfac/mlp.hpp"

namespace mfac {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Moment-network input block for one (t, batch of states, shared moments):
/// row 0 is t/T, rows 1..d the raw state, the rest the moment vector.
inline Eigen::MatrixXd assemble_net_input(double t, double horizon,
                                          const Eigen::Ref<const Eigen::MatrixXd>& states,
                                          const Eigen::Ref<const Eigen::VectorXd>& moments) {
    const int cols = static_cast<int>(states.cols());
    Eigen::MatrixXd input(1 + states.rows() + moments.size(), cols);
    input.row(0).setConstant(t / horizon);
    input.middleRows(1, states.rows()) = states;
    input.bottomRows(moments.size()).colwise() = moments;
    return input;
}

/// Epoch-indexed exploration variance
///   lambda(e) = (lambda_bar - lambda_floor) * (1 - S((20 e - 10 Nhat)/Nhat)) + lambda_floor
/// with S the sigmoid. Strictly decreasing from ~lambda_bar to ~lambda_floor.
struct ExplorationSchedule {
    double lambda_bar = 0.1;
    double lambda_floor = 0.0001;
    std::int64_t total_epochs = 6000;

    double operator()(std::int64_t epoch) const {
        const double arg = (20.0 * static_cast<double>(epoch) -
                            10.0 * static_cast<double>(total_epochs)) /
                           static_cast<double>(total_epochs);
        return (lambda_bar - lambda_floor) * (1.0 - sigmoid(arg)) + lambda_floor;
    }
};

/// Gaussian randomized policy N(m_theta(t, x, mu_L), lambda I_p). The mean
/// network sees (t/T, x, mu_L); state and moments are fed raw.
class GaussianPolicy {
public:
    GaussianPolicy(Mlp mean_net, double horizon, double lambda)
        : mean_net_(std::move(mean_net)), horizon_(horizon), lambda_(lambda) {
        if (horizon <= 0.0) throw std::invalid_argument("GaussianPolicy: horizon must be > 0");
    }

    const Mlp& mean_net() const { return mean_net_; }
    Mlp& mean_net() { return mean_net_; }
    double horizon() const { return horizon_; }
    int action_dim() const { return mean_net_.output_width(); }

    double lambda() const { return lambda_; }
    void set_lambda(double lambda) {
        if (lambda < 0.0) throw std::invalid_argument("GaussianPolicy: lambda must be >= 0");
        lambda_ = lambda;
    }

    /// Policy means for a batch of particles sharing one moment vector;
    /// result is p x M.
    void mean_batch(double t, const Eigen::Ref<const Eigen::MatrixXd>& states,
                    const Eigen::Ref<const Eigen::VectorXd>& moments, MlpWorkspace& ws) const {
        mean_net_.forward_batch(assemble_net_input(t, horizon_, states, moments), ws);
    }

    Eigen::VectorXd mean(double t, const Eigen::Ref<const Eigen::VectorXd>& state,
                         const Eigen::Ref<const Eigen::VectorXd>& moments) const {
        MlpWorkspace ws;
        mean_batch(t, state, moments, ws);
        return ws.acts.back().col(0);
    }

    /// log p_theta(a) = -(p/2) log(2 pi lambda) - |a - m|^2 / (2 lambda).
    static double log_density_from_mean(const Eigen::Ref<const Eigen::VectorXd>& action,
                                        const Eigen::Ref<const Eigen::VectorXd>& mean,
                                        double lambda) {
        if (lambda <= 0.0)
            throw std::invalid_argument("GaussianPolicy::log_density: lambda must be > 0");
        const double p = static_cast<double>(action.size());
        return -0.5 * p * std::log(2.0 * 3.14159265358979323846 * lambda) -
               (action - mean).squaredNorm() / (2.0 * lambda);
    }

    double log_density(double t, const Eigen::Ref<const Eigen::VectorXd>& state,
                       const Eigen::Ref<const Eigen::VectorXd>& moments,
                       const Eigen::Ref<const Eigen::VectorXd>& action) const {
        return log_density_from_mean(action, mean(t, state, moments), lambda_);
    }

    /// d log p / d a = -(a - m) / lambda.
    static Eigen::VectorXd log_density_grad_action(
        const Eigen::Ref<const Eigen::VectorXd>& action,
        const Eigen::Ref<const Eigen::VectorXd>& mean, double lambda) {
        if (lambda <= 0.0)
            throw std::invalid_argument("GaussianPolicy::log_density_grad_action: lambda must be > 0");
        return -(action - mean) / lambda;
    }

private:
    Mlp mean_net_;
    double horizon_;
    double lambda_;
};

}  // namespace mfac
