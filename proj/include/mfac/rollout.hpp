#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfac/model.hpp"
#include "mfac/moments.hpp"
#include "mfac/policy.hpp"
#include "mfac/rng.hpp"

namespace mfac {

/// N batched empirical distributions of M d-dimensional particles.
/// elems[i] is d x M with columns as particles.
struct ParticleCloud {
    std::vector<Eigen::MatrixXd> elems;

    int batch() const { return static_cast<int>(elems.size()); }
    int dim() const { return elems.empty() ? 0 : static_cast<int>(elems[0].rows()); }
    int particles() const { return elems.empty() ? 0 : static_cast<int>(elems[0].cols()); }
};

/// Per-draw noise source. Tests may substitute permuted or degenerate
/// sources; training binds counter-based streams via make_noise so every
/// draw is schedule-independent.
struct NoiseSource {
    std::function<double(Stream, int k, int i, int j, int c)> draw;
    std::uint64_t seed = 0;
    std::int64_t epoch = 0;
};

inline NoiseSource make_noise(std::uint64_t seed, std::int64_t epoch) {
    RngStream rng(seed, epoch);
    return {[rng](Stream s, int k, int i, int j, int c) { return rng.normal(s, k, i, j, c); },
            seed, epoch};
}

/// Everything one forward pass over the grid produced.
struct RolloutRecord {
    TimeGrid grid;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    std::int64_t epoch = 0;

    std::vector<std::vector<Eigen::MatrixXd>> states;   // (n+1) x N, each d x M
    std::vector<std::vector<Eigen::MatrixXd>> actions;  // n x N, each p x M
    std::vector<std::vector<Eigen::VectorXd>> running;  // n x N, each M
    std::vector<Eigen::VectorXd> terminal;              // N, each M
    std::vector<std::vector<Eigen::VectorXd>> moments;  // (n+1) x N, each L_d

    int batch() const { return states.empty() ? 0 : static_cast<int>(states[0].size()); }
    int particles() const {
        return batch() == 0 ? 0 : static_cast<int>(states[0][0].cols());
    }
};

/// Raised when a state goes non-finite; carries the offending slot.
struct BlowupError : std::runtime_error {
    int step, element, particle;
    BlowupError(int k, int i, int j)
        : std::runtime_error("state blow-up at step " + std::to_string(k) + ", element " +
                             std::to_string(i) + ", particle " + std::to_string(j)),
          step(k), element(i), particle(j) {}
};

/// One Euler-Maruyama step
///   x' = x + (beta(t,x,mu) + C(t,a)) dt + sigma(t,x,mu,a) sqrt(dt) z.
inline Eigen::VectorXd euler_step(const Eigen::Ref<const Eigen::VectorXd>& x, double t,
                                  const Eigen::VectorXd& stats,
                                  const Eigen::Ref<const Eigen::VectorXd>& action,
                                  const Eigen::Ref<const Eigen::VectorXd>& noise,
                                  const ModelSpec& model, double dt) {
    if (dt <= 0.0) throw std::invalid_argument("euler_step: dt must be > 0");
    const int d = model.state_dim;
    Eigen::VectorXd drift(d);
    model.drift_beta(t, x, stats, drift);
    if (model.action_drift) {
        Eigen::VectorXd c(d);
        model.action_drift(t, action, c);
        drift += c;
    }
    Eigen::MatrixXd sigma(d, d);
    model.diffusion(t, x, stats, action, sigma);
    return x + drift * dt + sigma * (std::sqrt(dt) * noise);
}

/// Forward induction over the grid: per step and batch element the moments
/// are estimated, actions are sampled from N(m_theta, lambda I), the running
/// cost is observed and all particles advance with independent noise. The
/// terminal cost is observed at t_n.
inline RolloutRecord rollout(const GaussianPolicy& policy, const ModelSpec& model,
                             const TimeGrid& grid, const ParticleCloud& init,
                             const MultiIndexSet& idx, const NoiseSource& noise) {
    const int n = grid.steps;
    const int N = init.batch();
    const int M = init.particles();
    const int d = model.state_dim;
    const int p = model.action_dim;
    if (init.dim() != d) throw std::invalid_argument("rollout: cloud dimension mismatch");
    const double lambda = policy.lambda();
    const double dt = grid.dt();

    RolloutRecord rec;
    rec.grid = grid;
    rec.lambda = lambda;
    rec.seed = noise.seed;
    rec.epoch = noise.epoch;
    rec.states.assign(n + 1, std::vector<Eigen::MatrixXd>(N));
    rec.actions.assign(n, std::vector<Eigen::MatrixXd>(N));
    rec.running.assign(n, std::vector<Eigen::VectorXd>(N));
    rec.terminal.assign(N, Eigen::VectorXd(M));
    rec.moments.assign(n + 1, std::vector<Eigen::VectorXd>(N));
    for (int i = 0; i < N; ++i) rec.states[0][i] = init.elems[i];

    MlpWorkspace ws;
    const double sqrt_lambda = std::sqrt(lambda);
    const double sqrt_dt = std::sqrt(dt);
    Eigen::VectorXd z(d), drift(d), cdrift(d);
    Eigen::MatrixXd sigma(d, d);
    for (int k = 0; k < n; ++k) {
        const double t = grid.knot(k);
        for (int i = 0; i < N; ++i) {
            const Eigen::MatrixXd& x = rec.states[k][i];
            rec.moments[k][i] = empirical_moments(x, idx);
            const Eigen::VectorXd stats = model.cloud_stats(t, x);

            policy.mean_batch(t, x, rec.moments[k][i], ws);
            Eigen::MatrixXd& a = rec.actions[k][i];
            a = policy.mean_net().output(ws);
            if (lambda > 0.0)
                for (int j = 0; j < M; ++j)
                    for (int c = 0; c < p; ++c)
                        a(c, j) += sqrt_lambda * noise.draw(Stream::action, k, i, j, c);

            rec.running[k][i].resize(M);
            Eigen::MatrixXd& xn = rec.states[k + 1][i];
            xn.resize(d, M);
            for (int j = 0; j < M; ++j) {
                rec.running[k][i][j] = model.running_cost(t, x.col(j), stats, a.col(j));
                for (int c = 0; c < d; ++c) z[c] = noise.draw(Stream::noise, k, i, j, c);
                model.drift_beta(t, x.col(j), stats, drift);
                if (model.action_drift) {
                    model.action_drift(t, a.col(j), cdrift);
                    drift += cdrift;
                }
                model.diffusion(t, x.col(j), stats, a.col(j), sigma);
                xn.col(j) = x.col(j) + drift * dt + sigma * (sqrt_dt * z);
                if (!xn.col(j).allFinite()) throw BlowupError(k, i, j);
            }
        }
    }
    const double tn = grid.knot(n);
    for (int i = 0; i < N; ++i) {
        const Eigen::MatrixXd& x = rec.states[n][i];
        rec.moments[n][i] = empirical_moments(x, idx);
        const Eigen::VectorXd stats = model.cloud_stats(tn, x);
        for (int j = 0; j < M; ++j) rec.terminal[i][j] = model.terminal_cost(x.col(j), stats);
    }
    return rec;
}

/// Gaussian initial-distribution family: per epoch and batch element the
/// mean and variance are redrawn as mean_scale * U[0,1) and
/// var_scale * U[0,1) per coordinate, then M particles are sampled.
struct GaussianInitFamily {
    Eigen::VectorXd mean_scale;
    Eigen::VectorXd var_scale;

    int dim() const { return static_cast<int>(mean_scale.size()); }

    ParticleCloud sample(int batch, int particles, const RngStream& rng) const {
        const int d = dim();
        ParticleCloud cloud;
        cloud.elems.resize(batch);
        for (int i = 0; i < batch; ++i) {
            Eigen::VectorXd mean(d), stddev(d);
            for (int c = 0; c < d; ++c) {
                mean[c] = mean_scale[c] * rng.uniform(Stream::init_mean, 0, i, 0, c);
                stddev[c] = std::sqrt(var_scale[c] * rng.uniform(Stream::init_var, 0, i, 0, c));
            }
            Eigen::MatrixXd& x = cloud.elems[i];
            x.resize(d, particles);
            for (int j = 0; j < particles; ++j)
                for (int c = 0; c < d; ++c)
                    x(c, j) = mean[c] + stddev[c] * rng.normal(Stream::init_particle, 0, i, j, c);
        }
        return cloud;
    }

    /// One cloud at pinned (mean, variance); used by evaluation grids.
    static Eigen::MatrixXd fixed_cloud(const Eigen::Ref<const Eigen::VectorXd>& mean,
                                       const Eigen::Ref<const Eigen::VectorXd>& variance,
                                       int particles, const RngStream& rng, int tag) {
        const int d = static_cast<int>(mean.size());
        Eigen::MatrixXd x(d, particles);
        for (int j = 0; j < particles; ++j)
            for (int c = 0; c < d; ++c)
                x(c, j) = mean[c] + std::sqrt(variance[c]) *
                                        rng.normal(Stream::eval_particle, tag, 0, j, c);
        return x;
    }
};

}  // namespace mfac
