#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace mfac {

struct TimeGrid {
    double horizon = 1.0;
    int steps = 100;

    double dt() const { return horizon / steps; }
    double knot(int k) const { return k * dt(); }
};

/// Closed forms of the Gaussian-averaged action maps
///   C_theta(t,x,mu)        = E_{a ~ N(m, lambda I)}[C(t,a)]
///   vartheta_theta(t,x,mu) = E_{a ~ N(m, lambda I)}[vartheta(t,a)]
/// as functions of the policy mean m, together with their Jacobians in m
/// (needed to backpropagate through the mean network). A null member means
/// the map is identically zero.
struct GaussianActionMaps {
    /// value: d vector; jac: d x p (row = output coordinate).
    std::function<void(double t, const Eigen::Ref<const Eigen::VectorXd>& mean, double lambda,
                       Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::MatrixXd> jac)>
        drift;
    /// value: d x d matrix; jac: (d*d) x p, rows packed as i*d+j.
    std::function<void(double t, const Eigen::Ref<const Eigen::VectorXd>& mean, double lambda,
                       Eigen::Ref<Eigen::MatrixXd> value, Eigen::Ref<Eigen::MatrixXd> jac)>
        diffusion;

    bool available() const { return static_cast<bool>(drift) || static_cast<bool>(diffusion); }
};

/// Blackbox model contract. beta, the diffusion, and the costs are unknown
/// to the learner and are only ever invoked by the simulator; the action
/// maps C and the Gaussian closed forms are the known side.
///
/// Every mean-field functional the model needs at one (time, batch element)
/// is computed once per step by cloud_stats; the per-particle callables
/// receive that opaque summary instead of the cloud, so a step costs O(M).
struct ModelSpec {
    int state_dim = 1;
    int action_dim = 1;
    double horizon = 1.0;

    /// Distribution functionals of one cloud slice (d x M, columns are
    /// particles); layout is private to the model.
    std::function<Eigen::VectorXd(double t, const Eigen::Ref<const Eigen::MatrixXd>& cloud)>
        cloud_stats;

    /// Unknown drift component beta(t, x, mu).
    std::function<void(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::VectorXd& stats, Eigen::Ref<Eigen::VectorXd> out)>
        drift_beta;

    /// Diffusion matrix sigma(t, x, mu, a), applied to the Brownian increment.
    std::function<void(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::VectorXd& stats, const Eigen::Ref<const Eigen::VectorXd>& a,
                       Eigen::Ref<Eigen::MatrixXd> out)>
        diffusion;

    /// Running cost f(t, x, mu, a) observed per particle and step.
    std::function<double(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::VectorXd& stats, const Eigen::Ref<const Eigen::VectorXd>& a)>
        running_cost;

    /// Terminal cost g(x, mu).
    std::function<double(const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::VectorXd& stats)>
        terminal_cost;

    /// Known action drift C(t, a); null means C == 0.
    std::function<void(double t, const Eigen::Ref<const Eigen::VectorXd>& a,
                       Eigen::Ref<Eigen::VectorXd> out)>
        action_drift;

    GaussianActionMaps gaussian_maps;

    void validate() const {
        if (state_dim < 1 || action_dim < 1 || horizon <= 0.0)
            throw std::invalid_argument("ModelSpec: bad dimensions or horizon");
        if (!cloud_stats || !drift_beta || !diffusion || !running_cost || !terminal_cost)
            throw std::invalid_argument("ModelSpec: missing blackbox callable");
    }
};

}  // namespace mfac
