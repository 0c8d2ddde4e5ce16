#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mfac/model.hpp"
#include "mfac/rollout.hpp"
#include "mfac/training.hpp"

namespace mfac {

// ---------------------------------------------------------------------------
// Systemic risk (linear-quadratic, drift control)
//   b = kappa (mu_bar - x) + a,  sigma constant
//   f = a^2/2 - q a (mu_bar - x) + (p/2)(mu_bar - x)^2,  g = (c/2)(x - mu_bar)^2
// ---------------------------------------------------------------------------

struct SystemicRiskParams {
    double kappa = 0.6;
    double sigma = 1.0;
    double p = 2.0;
    double q = 0.8;
    double c = 2.0;
    double horizon = 1.0;

    double sqrt_delta() const {
        const double delta = (kappa + q) * (kappa + q) + p - q * q;
        if (q * q > p || delta <= 0.0)
            throw std::invalid_argument("SystemicRiskParams: requires q^2 <= p and Delta > 0");
        return std::sqrt(delta);
    }
};

inline double systemic_K(double t, const SystemicRiskParams& pr) {
    const double sd = pr.sqrt_delta();
    const double tau = pr.horizon - t;
    const double sh = std::sinh(sd * tau), ch = std::cosh(sd * tau);
    const double kqc = pr.kappa + pr.q + pr.c;
    return -0.5 * (pr.kappa + pr.q - sd * (sd * sh + kqc * ch) / (sd * ch + kqc * sh));
}

// The value adds R(t) as printed (R already carries the full sigma^2
// dependence); V = K (x - mu_bar)^2 + R reproduces the paper's Table 1 and
// keeps d/dt R = -sigma^2 K, which the tests verify at sigma != 1.
inline double systemic_R(double t, const SystemicRiskParams& pr) {
    const double sd = pr.sqrt_delta();
    const double tau = pr.horizon - t;
    const double kqc = pr.kappa + pr.q + pr.c;
    return 0.5 * pr.sigma * pr.sigma *
               std::log(std::cosh(sd * tau) + kqc / sd * std::sinh(sd * tau)) -
           0.5 * pr.sigma * pr.sigma * (pr.kappa + pr.q) * tau;
}

inline double systemic_value(double t, double x, double mean, const SystemicRiskParams& pr) {
    const double dev = x - mean;
    return systemic_K(t, pr) * dev * dev + systemic_R(t, pr);
}

/// alpha*(t) = (2 K(t) + q)(E[X_t] - X_t).
inline double systemic_optimal_control(double t, double x, double mean,
                                       const SystemicRiskParams& pr) {
    return (2.0 * systemic_K(t, pr) + pr.q) * (mean - x);
}

/// E[V(0, X_0, mu_0)] = K(0) Var(mu_0) + R(0) for Gaussian mu_0.
inline double systemic_expected_value0(double variance, const SystemicRiskParams& pr) {
    return systemic_K(0.0, pr) * variance + systemic_R(0.0, pr);
}

/// d-dimensional extension: independent copies per coordinate, so the value
/// is the sum of the univariate values over marginal means.
inline double multid_lq_value(double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& marginal_means,
                              const SystemicRiskParams& pr) {
    double v = 0.0;
    for (int c = 0; c < x.size(); ++c) v += systemic_value(t, x[c], marginal_means[c], pr);
    return v;
}

// ---------------------------------------------------------------------------
// Optimal trading (linear-quadratic, drift control)
//   b = a,  f = a^2 + 2 P a,  g = gamma (x - mu_bar)^2
// ---------------------------------------------------------------------------

struct TradingParams {
    double price = 3.0;   // P, transaction price
    double gamma = 3.0;   // risk aversion
    double sigma = 1.0;
    double horizon = 0.5;

    void validate() const {
        if (price <= 0.0 || gamma <= 0.0)
            throw std::invalid_argument("TradingParams: P and gamma must be > 0");
    }
};

inline double trading_K(double t, const TradingParams& pr) {
    return pr.gamma / (1.0 + pr.gamma * (pr.horizon - t));
}

inline double trading_R(double t, const TradingParams& pr) {
    const double tau = pr.horizon - t;
    return pr.sigma * pr.sigma * std::log(1.0 + pr.gamma * tau) - pr.price * pr.price * tau;
}

inline double trading_value(double t, double x, double mean, const TradingParams& pr) {
    const double dev = x - mean;
    return trading_K(t, pr) * dev * dev + trading_R(t, pr);
}

/// alpha*(t) = -K(t)(X_t - E[X_t]) - P.
inline double trading_optimal_control(double t, double x, double mean, const TradingParams& pr) {
    return -trading_K(t, pr) * (x - mean) - pr.price;
}

inline double trading_expected_value0(double variance, const TradingParams& pr) {
    return trading_K(0.0, pr) * variance + trading_R(0.0, pr);
}

// ---------------------------------------------------------------------------
// Non-LQ cosine-drift model (drift control)
//   b = kappa (mu_bar - x) + a,  sigma constant
//   f = F(t,x,mu) + a^2/2,  g = E_xi[cos(x - xi)]
// with F constructed so that V = e^{T-t} E_xi[cos(x - xi)] solves the Master
// Bellman equation.
// ---------------------------------------------------------------------------

struct CosineModelParams {
    double kappa = 1.0;
    double sigma = 1.0;
    double horizon = 0.4;

    void validate() const {
        if (kappa <= 0.0 || sigma <= 0.0 || horizon <= 0.0)
            throw std::invalid_argument("CosineModelParams: parameters must be > 0");
    }
};

/// Trigonometric functionals of a 1-d cloud with beta = kappa (mu_bar - xi).
struct TrigStats {
    double mean = 0.0;
    double cos_bar = 0.0;   // E[cos xi]
    double sin_bar = 0.0;   // E[sin xi]
    double sincos = 0.0;    // E[sin xi cos xi]
    double sin2 = 0.0;      // E[sin^2 xi]
    double cos2 = 0.0;      // E[cos^2 xi]
    double beta_cos = 0.0;  // E[beta(t,xi,mu) cos xi]
    double beta_sin = 0.0;  // E[beta(t,xi,mu) sin xi]
};

inline TrigStats trig_stats(const Eigen::Ref<const Eigen::MatrixXd>& cloud, double kappa) {
    const int m = static_cast<int>(cloud.cols());
    TrigStats s;
    for (int j = 0; j < m; ++j) s.mean += cloud(0, j);
    s.mean /= m;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        const double co = std::cos(xi), si = std::sin(xi);
        const double beta = kappa * (s.mean - xi);
        s.cos_bar += co;
        s.sin_bar += si;
        s.sincos += si * co;
        s.sin2 += si * si;
        s.cos2 += co * co;
        s.beta_cos += beta * co;
        s.beta_sin += beta * si;
    }
    s.cos_bar /= m;
    s.sin_bar /= m;
    s.sincos /= m;
    s.sin2 /= m;
    s.cos2 /= m;
    s.beta_cos /= m;
    s.beta_sin /= m;
    return s;
}

/// Forcing term in the trigonometric expansion.
inline double cosine_F(double t, double x, const TrigStats& s, const CosineModelParams& pr) {
    const double tau = pr.horizon - t;
    const double et = std::exp(tau), e2t = std::exp(2.0 * tau);
    const double s2 = 1.0 + pr.sigma * pr.sigma;
    const double beta_x = pr.kappa * (s.mean - x);
    const double cx = std::cos(x), sx = std::sin(x);
    return cx * (et * (s2 * s.cos_bar + s.beta_sin - beta_x * s.sin_bar) -
                 2.0 * e2t * (s.sincos * s.sin_bar - s.sin2 * s.cos_bar)) +
           sx * (et * (s2 * s.sin_bar - s.beta_cos + beta_x * s.cos_bar) -
                 2.0 * e2t * (s.sincos * s.cos_bar - s.cos2 * s.sin_bar));
}

/// Same quantity from the unexpanded definition
///   F = e^tau E[(w - sigma^2 w'')(x-xi) + (beta(xi) - beta(x)) w'(x-xi)]
///       - 2 e^{2 tau} E_{xi,xi'}[w'(x-xi) w'(xi-xi')],  w = cos.
/// O(M^2); used as the oracle against transcription slips in cosine_F.
inline double cosine_F_raw(double t, double x, const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                           const CosineModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    const double tau = pr.horizon - t;
    const double et = std::exp(tau), e2t = std::exp(2.0 * tau);
    const double s2 = 1.0 + pr.sigma * pr.sigma;
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += cloud(0, j);
    mean /= m;
    const double beta_x = pr.kappa * (mean - x);
    double single = 0.0, dbl = 0.0;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        const double beta_xi = pr.kappa * (mean - xi);
        single += s2 * std::cos(x - xi) + (beta_xi - beta_x) * (-std::sin(x - xi));
        double inner = 0.0;
        for (int jj = 0; jj < m; ++jj) inner += -std::sin(xi - cloud(0, jj));
        dbl += -std::sin(x - xi) * (inner / m);
    }
    return et * single / m - 2.0 * e2t * dbl / m;
}

inline double cosine_value(double t, double x, const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                           const CosineModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    double v = 0.0;
    for (int j = 0; j < m; ++j) v += std::cos(x - cloud(0, j));
    return std::exp(pr.horizon - t) * v / m;
}

/// alpha* = -U = 2 e^{T-t} E[sin(x - xi)].
inline double cosine_optimal_control(double t, double x,
                                     const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                                     const CosineModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    double v = 0.0;
    for (int j = 0; j < m; ++j) v += std::sin(x - cloud(0, j));
    return 2.0 * std::exp(pr.horizon - t) * v / m;
}

/// Left-hand side of the Master Bellman equation for the cosine model at
/// (t, x, mu). Zero (up to rounding) by construction of F.
inline double cosine_master_residual(double t, double x,
                                     const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                                     const CosineModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    const double tau = pr.horizon - t;
    const double et = std::exp(tau);
    const double sig2 = pr.sigma * pr.sigma;
    const TrigStats s = trig_stats(cloud, pr.kappa);

    auto u_at = [&](double y) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += std::sin(y - cloud(0, j));
        return -2.0 * et * acc / m;  // U = 2 d/dx V
    };
    auto beta_at = [&](double y) { return pr.kappa * (s.mean - y); };

    double ec = 0.0, es = 0.0;
    for (int j = 0; j < m; ++j) {
        ec += std::cos(x - cloud(0, j));
        es += std::sin(x - cloud(0, j));
    }
    ec /= m;
    es /= m;
    const double v = et * ec;
    const double vx = -et * es;
    const double vxx = -v;

    double lions = 0.0;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        lions += (beta_at(xi) - u_at(xi)) * et * std::sin(x - xi) +
                 0.5 * sig2 * (-et * std::cos(x - xi));
    }
    lions /= m;

    const double ux = u_at(x);
    return -v + (beta_at(x) - ux) * vx + 0.5 * sig2 * vxx + lions + cosine_F(t, x, s, pr) +
           0.5 * ux * ux;
}

// ---------------------------------------------------------------------------
// Controlled-volatility model (non-LQ)
//   b = kappa (mu_bar - x),  sigma(t,x,mu,a) = a
//   f = F(t,x,mu) + (P/2) a^2 - a,  g = E_xi[cos(x - xi)]
// Optimal volatility a* = 1 / (P + dU/dx); P = 2.2 e^T keeps it bounded.
// ---------------------------------------------------------------------------

struct VolatilityModelParams {
    double kappa = 1.0;
    double horizon = 0.4;
    double penalty = 2.2 * std::exp(0.4);  // P

    void validate() const {
        if (penalty <= 2.0 * std::exp(horizon))
            throw std::invalid_argument(
                "VolatilityModelParams: requires P > 2 e^T so the control stays bounded");
    }
};

/// Trig functionals of a cloud for the volatility model; includes the nested
/// 1/(2 A(xi)^2) expectations with A(xi) = P - 2 e^tau E[cos(xi - xi')].
struct VolTrigStats {
    double mean = 0.0;
    double cos_bar = 0.0;
    double sin_bar = 0.0;
    double beta_cos = 0.0;
    double beta_sin = 0.0;
    double inv2_cos = 0.0;  // E[cos xi / (2 A(xi)^2)]
    double inv2_sin = 0.0;  // E[sin xi / (2 A(xi)^2)]
};

inline VolTrigStats vol_trig_stats(double t, const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                                   const VolatilityModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    const double et = std::exp(pr.horizon - t);
    VolTrigStats s;
    for (int j = 0; j < m; ++j) s.mean += cloud(0, j);
    s.mean /= m;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        const double co = std::cos(xi), si = std::sin(xi);
        const double beta = pr.kappa * (s.mean - xi);
        s.cos_bar += co;
        s.sin_bar += si;
        s.beta_cos += beta * co;
        s.beta_sin += beta * si;
    }
    s.cos_bar /= m;
    s.sin_bar /= m;
    s.beta_cos /= m;
    s.beta_sin /= m;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        const double a = pr.penalty - 2.0 * et * (std::cos(xi) * s.cos_bar + std::sin(xi) * s.sin_bar);
        s.inv2_cos += std::cos(xi) / (2.0 * a * a);
        s.inv2_sin += std::sin(xi) / (2.0 * a * a);
    }
    s.inv2_cos /= m;
    s.inv2_sin /= m;
    return s;
}

/// Forcing term of the volatility model in trigonometric form. The final two
/// expectations carry a single 1/2 (as the unexpanded F dictates and the
/// Master-equation residual confirms).
inline double volatility_F(double t, double x, const VolTrigStats& s,
                           const VolatilityModelParams& pr) {
    const double et = std::exp(pr.horizon - t);
    const double cx = std::cos(x), sx = std::sin(x);
    const double axis = cx * s.cos_bar + sx * s.sin_bar;  // E[cos(x - xi)]
    const double bx = pr.penalty - 2.0 * et * axis;
    const double beta_x = pr.kappa * (s.mean - x);
    return -0.5 * pr.penalty / (bx * bx) + 1.0 / bx +
           et * axis * (1.0 + 0.5 / (bx * bx)) +
           et * (beta_x * sx * s.cos_bar - beta_x * cx * s.sin_bar - s.beta_cos * sx +
                 s.beta_sin * cx) +
           et * (cx * s.inv2_cos + sx * s.inv2_sin);
}

/// Unexpanded volatility forcing term (O(M^2) oracle).
inline double volatility_F_raw(double t, double x,
                               const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                               const VolatilityModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    const double et = std::exp(pr.horizon - t);
    double mean = 0.0;
    for (int j = 0; j < m; ++j) mean += cloud(0, j);
    mean /= m;
    auto ecos_at = [&](double y) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += std::cos(y - cloud(0, j));
        return acc / m;
    };
    auto beta_at = [&](double y) { return pr.kappa * (mean - y); };
    const double ax = pr.penalty - 2.0 * et * ecos_at(x);
    double beta_term = 0.0, nested = 0.0;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        beta_term += (beta_at(x) - beta_at(xi)) * std::sin(x - xi);
        const double axi = pr.penalty - 2.0 * et * ecos_at(xi);
        nested += std::cos(x - xi) / (2.0 * axi * axi);
    }
    beta_term /= m;
    nested /= m;
    return -0.5 * pr.penalty / (ax * ax) + 1.0 / ax +
           ecos_at(x) * et * (1.0 + 0.5 / (ax * ax)) + et * beta_term + et * nested;
}

inline double volatility_value(double t, double x,
                               const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                               const VolatilityModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    double v = 0.0;
    for (int j = 0; j < m; ++j) v += std::cos(x - cloud(0, j));
    return std::exp(pr.horizon - t) * v / m;
}

/// a* = 1 / (P + dU/dx) with dU/dx = -2 e^{T-t} E[cos(x - xi)].
inline double volatility_optimal_control(double t, double x,
                                         const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                                         const VolatilityModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    double ec = 0.0;
    for (int j = 0; j < m; ++j) ec += std::cos(x - cloud(0, j));
    ec /= m;
    const double denom = pr.penalty - 2.0 * std::exp(pr.horizon - t) * ec;
    if (std::abs(denom) < 1e-6)
        throw std::invalid_argument("volatility_optimal_control: near-singular denominator");
    return 1.0 / denom;
}

/// Master Bellman residual for the volatility model; zero by construction.
inline double volatility_master_residual(double t, double x,
                                         const Eigen::Ref<const Eigen::MatrixXd>& cloud,
                                         const VolatilityModelParams& pr) {
    const int m = static_cast<int>(cloud.cols());
    const double tau = pr.horizon - t;
    const double et = std::exp(tau);
    const VolTrigStats s = vol_trig_stats(t, cloud, pr);

    auto ecos_at = [&](double y) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += std::cos(y - cloud(0, j));
        return acc / m;
    };
    auto astar_at = [&](double y) { return 1.0 / (pr.penalty - 2.0 * et * ecos_at(y)); };
    auto beta_at = [&](double y) { return pr.kappa * (s.mean - y); };

    double ec = 0.0, es = 0.0;
    for (int j = 0; j < m; ++j) {
        ec += std::cos(x - cloud(0, j));
        es += std::sin(x - cloud(0, j));
    }
    ec /= m;
    es /= m;
    const double v = et * ec;
    const double vx = -et * es;
    const double vxx = -v;
    const double ax = astar_at(x);

    double lions = 0.0;
    for (int j = 0; j < m; ++j) {
        const double xi = cloud(0, j);
        const double axi = astar_at(xi);
        lions += beta_at(xi) * et * std::sin(x - xi) +
                 0.5 * axi * axi * (-et * std::cos(x - xi));
    }
    lions /= m;

    return -v + beta_at(x) * vx + 0.5 * ax * ax * vxx + lions + volatility_F(t, x, s, pr) +
           0.5 * pr.penalty * ax * ax - ax;
}

// ---------------------------------------------------------------------------
// Blackbox model builders
// ---------------------------------------------------------------------------

namespace detail {

/// Gaussian drift map for C(t,a) = a: C_theta = m with identity Jacobian.
inline GaussianActionMaps identity_drift_maps(int d) {
    GaussianActionMaps maps;
    maps.drift = [d](double, const Eigen::Ref<const Eigen::VectorXd>& mean, double,
                     Eigen::Ref<Eigen::VectorXd> value, Eigen::Ref<Eigen::MatrixXd> jac) {
        value = mean;
        jac = Eigen::MatrixXd::Identity(d, d);
    };
    return maps;
}

inline Eigen::VectorXd coordinate_means(const Eigen::Ref<const Eigen::MatrixXd>& cloud) {
    return cloud.rowwise().mean();
}

}  // namespace detail

inline ModelSpec systemic_model(const SystemicRiskParams& pr, int dims = 1) {
    ModelSpec m;
    m.state_dim = dims;
    m.action_dim = dims;
    m.horizon = pr.horizon;
    m.cloud_stats = [](double, const Eigen::Ref<const Eigen::MatrixXd>& cloud) {
        return detail::coordinate_means(cloud);
    };
    m.drift_beta = [pr](double, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::VectorXd& stats, Eigen::Ref<Eigen::VectorXd> out) {
        out = pr.kappa * (stats - x);
    };
    m.diffusion = [pr, dims](double, const Eigen::Ref<const Eigen::VectorXd>&,
                             const Eigen::VectorXd&, const Eigen::Ref<const Eigen::VectorXd>&,
                             Eigen::Ref<Eigen::MatrixXd> out) {
        out = pr.sigma * Eigen::MatrixXd::Identity(dims, dims);
    };
    m.running_cost = [pr](double, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::VectorXd& stats,
                          const Eigen::Ref<const Eigen::VectorXd>& a) {
        double f = 0.0;
        for (int c = 0; c < x.size(); ++c) {
            const double dev = stats[c] - x[c];
            f += 0.5 * a[c] * a[c] - pr.q * a[c] * dev + 0.5 * pr.p * dev * dev;
        }
        return f;
    };
    m.terminal_cost = [pr](const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::VectorXd& stats) {
        double g = 0.0;
        for (int c = 0; c < x.size(); ++c) {
            const double dev = x[c] - stats[c];
            g += 0.5 * pr.c * dev * dev;
        }
        return g;
    };
    m.action_drift = [](double, const Eigen::Ref<const Eigen::VectorXd>& a,
                        Eigen::Ref<Eigen::VectorXd> out) { out = a; };
    m.gaussian_maps = detail::identity_drift_maps(dims);
    return m;
}

inline ModelSpec trading_model(const TradingParams& pr) {
    pr.validate();
    ModelSpec m;
    m.horizon = pr.horizon;
    m.cloud_stats = [](double, const Eigen::Ref<const Eigen::MatrixXd>& cloud) {
        return detail::coordinate_means(cloud);
    };
    m.drift_beta = [](double, const Eigen::Ref<const Eigen::VectorXd>&, const Eigen::VectorXd&,
                      Eigen::Ref<Eigen::VectorXd> out) { out.setZero(); };
    m.diffusion = [pr](double, const Eigen::Ref<const Eigen::VectorXd>&, const Eigen::VectorXd&,
                       const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::MatrixXd> out) {
        out(0, 0) = pr.sigma;
    };
    m.running_cost = [pr](double, const Eigen::Ref<const Eigen::VectorXd>&,
                          const Eigen::VectorXd&, const Eigen::Ref<const Eigen::VectorXd>& a) {
        return a[0] * a[0] + 2.0 * pr.price * a[0];
    };
    m.terminal_cost = [pr](const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::VectorXd& stats) {
        const double dev = x[0] - stats[0];
        return pr.gamma * dev * dev;
    };
    m.action_drift = [](double, const Eigen::Ref<const Eigen::VectorXd>& a,
                        Eigen::Ref<Eigen::VectorXd> out) { out = a; };
    m.gaussian_maps = detail::identity_drift_maps(1);
    return m;
}

inline ModelSpec cosine_model(const CosineModelParams& pr) {
    pr.validate();
    ModelSpec m;
    m.horizon = pr.horizon;
    m.cloud_stats = [pr](double, const Eigen::Ref<const Eigen::MatrixXd>& cloud) {
        const TrigStats s = trig_stats(cloud, pr.kappa);
        Eigen::VectorXd v(8);
        v << s.mean, s.cos_bar, s.sin_bar, s.sincos, s.sin2, s.cos2, s.beta_cos, s.beta_sin;
        return v;
    };
    m.drift_beta = [pr](double, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::VectorXd& stats, Eigen::Ref<Eigen::VectorXd> out) {
        out[0] = pr.kappa * (stats[0] - x[0]);
    };
    m.diffusion = [pr](double, const Eigen::Ref<const Eigen::VectorXd>&, const Eigen::VectorXd&,
                       const Eigen::Ref<const Eigen::VectorXd>&, Eigen::Ref<Eigen::MatrixXd> out) {
        out(0, 0) = pr.sigma;
    };
    m.running_cost = [pr](double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::VectorXd& stats,
                          const Eigen::Ref<const Eigen::VectorXd>& a) {
        TrigStats s;
        s.mean = stats[0];
        s.cos_bar = stats[1];
        s.sin_bar = stats[2];
        s.sincos = stats[3];
        s.sin2 = stats[4];
        s.cos2 = stats[5];
        s.beta_cos = stats[6];
        s.beta_sin = stats[7];
        return cosine_F(t, x[0], s, pr) + 0.5 * a[0] * a[0];
    };
    m.terminal_cost = [](const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::VectorXd& stats) {
        return std::cos(x[0]) * stats[1] + std::sin(x[0]) * stats[2];
    };
    m.action_drift = [](double, const Eigen::Ref<const Eigen::VectorXd>& a,
                        Eigen::Ref<Eigen::VectorXd> out) { out = a; };
    m.gaussian_maps = detail::identity_drift_maps(1);
    return m;
}

inline ModelSpec volatility_model(const VolatilityModelParams& pr) {
    pr.validate();
    ModelSpec m;
    m.horizon = pr.horizon;
    m.cloud_stats = [pr](double t, const Eigen::Ref<const Eigen::MatrixXd>& cloud) {
        const VolTrigStats s = vol_trig_stats(t, cloud, pr);
        Eigen::VectorXd v(7);
        v << s.mean, s.cos_bar, s.sin_bar, s.beta_cos, s.beta_sin, s.inv2_cos, s.inv2_sin;
        return v;
    };
    m.drift_beta = [pr](double, const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::VectorXd& stats, Eigen::Ref<Eigen::VectorXd> out) {
        out[0] = pr.kappa * (stats[0] - x[0]);
    };
    // sigma(t,x,mu,a) = a: the control is the volatility itself.
    m.diffusion = [](double, const Eigen::Ref<const Eigen::VectorXd>&, const Eigen::VectorXd&,
                     const Eigen::Ref<const Eigen::VectorXd>& a, Eigen::Ref<Eigen::MatrixXd> out) {
        out(0, 0) = a[0];
    };
    m.running_cost = [pr](double t, const Eigen::Ref<const Eigen::VectorXd>& x,
                          const Eigen::VectorXd& stats,
                          const Eigen::Ref<const Eigen::VectorXd>& a) {
        VolTrigStats s;
        s.mean = stats[0];
        s.cos_bar = stats[1];
        s.sin_bar = stats[2];
        s.beta_cos = stats[3];
        s.beta_sin = stats[4];
        s.inv2_cos = stats[5];
        s.inv2_sin = stats[6];
        return volatility_F(t, x[0], s, pr) + 0.5 * pr.penalty * a[0] * a[0] - a[0];
    };
    m.terminal_cost = [](const Eigen::Ref<const Eigen::VectorXd>& x,
                         const Eigen::VectorXd& stats) {
        return std::cos(x[0]) * stats[1] + std::sin(x[0]) * stats[2];
    };
    // C == 0; vartheta_theta = m^2 + lambda with d/dm = 2m.
    m.gaussian_maps.diffusion = [](double, const Eigen::Ref<const Eigen::VectorXd>& mean,
                                   double lambda, Eigen::Ref<Eigen::MatrixXd> value,
                                   Eigen::Ref<Eigen::MatrixXd> jac) {
        value(0, 0) = mean[0] * mean[0] + lambda;
        jac(0, 0) = 2.0 * mean[0];
    };
    return m;
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

struct Benchmark {
    std::string id;
    std::string title;
    int dims = 1;
    ModelSpec model;
    GaussianInitFamily init;
    TrainerConfig paper_config;
    TrainerConfig desk_config;
    std::vector<double> eval_fractions;
    std::vector<std::pair<std::string, double>> params;

    /// Analytic value V(t, x, mu) with mu the empirical cloud measure.
    std::function<double(double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud)> value;
    /// Analytic optimal control; empty when unavailable.
    std::function<Eigen::VectorXd(double t, const Eigen::VectorXd& x,
                                  const Eigen::MatrixXd& cloud)>
        control;
    /// Closed-form E[V(0, X_0, mu_0)] for Gaussian mu_0; empty when unavailable.
    std::function<double(const Eigen::VectorXd& mean, const Eigen::VectorXd& variance)>
        expected_value0;
};

inline const std::vector<std::string>& benchmark_ids() {
    static const std::vector<std::string> ids = {"systemic",   "systemic2d", "systemic3d",
                                                 "trading",    "cosine",     "volatility"};
    return ids;
}

/// Build a benchmark preset by id, optionally overriding named parameters.
inline Benchmark make_benchmark(const std::string& id,
                                const std::map<std::string, double>& overrides = {}) {
    auto get = [&overrides](const std::string& key, double fallback) {
        auto it = overrides.find(key);
        return it == overrides.end() ? fallback : it->second;
    };
    auto check_keys = [&overrides](std::initializer_list<const char*> known) {
        for (const auto& kv : overrides) {
            bool ok = false;
            for (const char* k : known)
                if (kv.first == k) ok = true;
            if (!ok)
                throw std::invalid_argument("make_benchmark: unknown parameter '" + kv.first + "'");
        }
    };

    Benchmark b;
    b.id = id;
    if (id == "systemic" || id == "systemic2d" || id == "systemic3d") {
        check_keys({"kappa", "sigma", "p", "q", "c", "T"});
        const int dims = (id == "systemic2d") ? 2 : (id == "systemic3d") ? 3 : 1;
        SystemicRiskParams pr;
        pr.kappa = get("kappa", pr.kappa);
        pr.sigma = get("sigma", pr.sigma);
        pr.p = get("p", pr.p);
        pr.q = get("q", pr.q);
        pr.c = get("c", pr.c);
        pr.horizon = get("T", pr.horizon);
        pr.sqrt_delta();  // validates
        b.title = std::to_string(dims) + "-d systemic risk (LQ, drift control)";
        b.dims = dims;
        b.model = systemic_model(pr, dims);
        b.init = {Eigen::VectorXd::Zero(dims), Eigen::VectorXd::Ones(dims)};
        b.paper_config.batch = 10;
        b.paper_config.particles = 10000;
        b.paper_config.steps = dims == 1 ? 100 : 50;
        b.paper_config.moment_order = 2;
        b.paper_config.epochs = dims == 3 ? 9000 : 6000;
        b.paper_config.actor_lr = dims == 2 ? 0.001 : 0.0005;
        b.paper_config.critic_lr = 0.01;
        b.eval_fractions = dims == 1
                               ? std::vector<double>{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}
                               : std::vector<double>{0.1, 0.5, 0.9};
        b.params = {{"kappa", pr.kappa}, {"sigma", pr.sigma}, {"p", pr.p},
                    {"q", pr.q},         {"c", pr.c},         {"T", pr.horizon}};
        b.value = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            return multid_lq_value(t, x, detail::coordinate_means(cloud), pr);
        };
        b.control = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            const Eigen::VectorXd means = detail::coordinate_means(cloud);
            Eigen::VectorXd a(x.size());
            for (int c = 0; c < x.size(); ++c)
                a[c] = systemic_optimal_control(t, x[c], means[c], pr);
            return a;
        };
        b.expected_value0 = [pr](const Eigen::VectorXd&, const Eigen::VectorXd& variance) {
            double v = 0.0;
            for (int c = 0; c < variance.size(); ++c) v += systemic_expected_value0(variance[c], pr);
            return v;
        };
    } else if (id == "trading") {
        check_keys({"P", "gamma", "sigma", "T"});
        TradingParams pr;
        pr.price = get("P", pr.price);
        pr.gamma = get("gamma", pr.gamma);
        pr.sigma = get("sigma", pr.sigma);
        pr.horizon = get("T", pr.horizon);
        b.title = "optimal trading (LQ, drift control)";
        b.model = trading_model(pr);
        b.init = {0.4 * Eigen::VectorXd::Ones(1), 0.5 * Eigen::VectorXd::Ones(1)};
        b.paper_config.batch = 10;
        b.paper_config.particles = 10000;
        b.paper_config.steps = 100;
        b.paper_config.moment_order = 2;
        b.paper_config.epochs = 9000;
        b.paper_config.actor_lr = 0.0005;
        b.paper_config.critic_lr = 0.01;
        b.eval_fractions = {0.1, 0.5, 0.9};
        b.params = {{"P", pr.price}, {"gamma", pr.gamma}, {"sigma", pr.sigma}, {"T", pr.horizon}};
        b.value = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            return trading_value(t, x[0], cloud.row(0).mean(), pr);
        };
        b.control = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            Eigen::VectorXd a(1);
            a[0] = trading_optimal_control(t, x[0], cloud.row(0).mean(), pr);
            return a;
        };
        b.expected_value0 = [pr](const Eigen::VectorXd&, const Eigen::VectorXd& variance) {
            return trading_expected_value0(variance[0], pr);
        };
    } else if (id == "cosine") {
        check_keys({"kappa", "sigma", "T"});
        CosineModelParams pr;
        pr.kappa = get("kappa", pr.kappa);
        pr.sigma = get("sigma", pr.sigma);
        pr.horizon = get("T", pr.horizon);
        b.title = "non-LQ cosine-drift model (drift control)";
        b.model = cosine_model(pr);
        b.init = {0.2 * Eigen::VectorXd::Ones(1), 0.5 * Eigen::VectorXd::Ones(1)};
        b.paper_config.batch = 10;
        b.paper_config.particles = 20000;
        b.paper_config.steps = 40;
        b.paper_config.moment_order = 3;
        b.paper_config.epochs = 9000;
        b.paper_config.actor_lr = 0.0005;
        b.paper_config.critic_lr = 0.02;
        b.eval_fractions = {0.1, 0.5, 0.9};
        b.params = {{"kappa", pr.kappa}, {"sigma", pr.sigma}, {"T", pr.horizon}};
        b.value = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            return cosine_value(t, x[0], cloud, pr);
        };
        b.control = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            Eigen::VectorXd a(1);
            a[0] = cosine_optimal_control(t, x[0], cloud, pr);
            return a;
        };
    } else if (id == "volatility") {
        check_keys({"kappa", "T", "P"});
        VolatilityModelParams pr;
        pr.kappa = get("kappa", pr.kappa);
        pr.horizon = get("T", pr.horizon);
        pr.penalty = get("P", 2.2 * std::exp(pr.horizon));
        pr.validate();
        b.title = "non-LQ controlled-volatility model";
        b.model = volatility_model(pr);
        b.init = {0.2 * Eigen::VectorXd::Ones(1), 0.5 * Eigen::VectorXd::Ones(1)};
        b.paper_config.batch = 10;
        b.paper_config.particles = 20000;
        b.paper_config.steps = 40;
        b.paper_config.moment_order = 3;
        b.paper_config.epochs = 9000;
        b.paper_config.actor_lr = 0.0005;
        b.paper_config.critic_lr = 0.025;
        b.eval_fractions = {0.1, 0.5, 0.9};
        b.params = {{"kappa", pr.kappa}, {"T", pr.horizon}, {"P", pr.penalty}};
        b.value = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            return volatility_value(t, x[0], cloud, pr);
        };
        b.control = [pr](double t, const Eigen::VectorXd& x, const Eigen::MatrixXd& cloud) {
            Eigen::VectorXd a(1);
            a[0] = volatility_optimal_control(t, x[0], cloud, pr);
            return a;
        };
    } else {
        throw std::invalid_argument("make_benchmark: unknown benchmark id '" + id + "'");
    }

    b.desk_config = b.paper_config;
    b.desk_config.batch = 5;
    b.desk_config.particles = 1000;
    b.desk_config.steps = 20;
    b.desk_config.epochs = 2000;
    if (b.id == "systemic" || b.id == "systemic2d" || b.id == "systemic3d") {
        b.desk_config.actor_lr = 0.0005;
        b.desk_config.critic_lr = 0.01;
        b.desk_config.moment_order = 2;
    }
    return b;
}

}  // namespace mfac
