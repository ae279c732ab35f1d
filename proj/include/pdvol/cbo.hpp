#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pdvol/parallel.hpp"
#include "pdvol/rng.hpp"

namespace pdvol {

enum class CboMode { maximize, minimize };

/// Consensus-based optimization settings. The SDE rates (a, sigma) follow
/// the paper's convention of per-unit-time coefficients; dt is the optimizer
/// step the paper leaves implicit.
struct CboConfig {
    double a = 1.0;       // drift toward consensus
    double b = 400.0;     // Laplace weight exponent
    double sigma = 1.0;   // diffusion
    std::size_t n_particles = 100;
    std::size_t n_steps = 1000;
    double dt = 0.01;
    std::vector<std::pair<double, double>> bounds;  // per-dimension (low, high)
    std::uint64_t seed = 0;
    unsigned n_workers = 0;

    void validate() const {
        if (!(a > 0.0) || !(b > 0.0) || !(sigma > 0.0) || !(dt > 0.0)) {
            throw std::invalid_argument("CboConfig: a, b, sigma, dt must be positive");
        }
        if (n_particles < 2) {
            throw std::invalid_argument("CboConfig: need at least 2 particles");
        }
        if (bounds.empty()) {
            throw std::invalid_argument("CboConfig: bounds must be given per dimension");
        }
        for (const auto& [lo, hi] : bounds) {
            if (!(lo <= hi)) {
                throw std::invalid_argument("CboConfig: bound low > high");
            }
        }
    }
};

struct Swarm {
    std::size_t n_particles = 0;
    std::size_t dim = 0;
    std::vector<double> positions;  // n_particles x dim row-major
    std::vector<double> objective_values;
    std::vector<double> consensus;

    std::span<double> particle(std::size_t k) { return {positions.data() + k * dim, dim}; }
    std::span<const double> particle(std::size_t k) const {
        return {positions.data() + k * dim, dim};
    }
};

/// Laplace-weighted average sum_k theta_k exp(b s (l_k - l_best)) / sum_k exp(...),
/// with s = +1 (maximize) or -1 (minimize). The max-shift by l_best cancels
/// algebraically and keeps exp() in range at large b.
inline std::vector<double> weighted_consensus(std::span<const double> positions, std::size_t m,
                                              std::size_t dim, std::span<const double> values,
                                              double b, CboMode mode) {
    if (m == 0 || positions.size() != m * dim || values.size() != m) {
        throw std::invalid_argument("weighted_consensus: inconsistent sizes");
    }
    const double s = mode == CboMode::maximize ? 1.0 : -1.0;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k) {
        if (!std::isfinite(values[k])) {
            throw std::invalid_argument("weighted_consensus: non-finite objective value");
        }
        best = std::max(best, s * values[k]);
    }
    std::vector<double> out(dim, 0.0);
    double weight_sum = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double w = std::exp(b * (s * values[k] - best));
        weight_sum += w;
        for (std::size_t j = 0; j < dim; ++j) {
            out[j] += w * positions[k * dim + j];
        }
    }
    if (!(weight_sum > 0.0)) {
        throw std::logic_error("weighted_consensus: weights underflowed after max-shift");
    }
    for (double& v : out) {
        v /= weight_sum;
    }
    return out;
}

struct CboTracePoint {
    std::size_t step;
    double best_value;
    std::vector<double> consensus;
};

struct CboResult {
    std::vector<double> theta_hat;  // final consensus
    double best_value = 0.0;        // best evaluated point's value
    std::vector<double> best_point;
    std::vector<CboTracePoint> trace;
    std::size_t n_nonfinite_evals = 0;
};

/// Euler-Maruyama particle iteration of the CBO dynamics
///   d theta_k = a (theta_b - theta_k) dt + sigma diag(theta_b - theta_k) dW_k,
/// with uniform initialization on the box, componentwise anisotropic noise,
/// and projection back into the box. Deterministic given cfg.seed; particle k
/// owns substream (seed, k), so evaluation order cannot change results.
/// A particle whose objective comes back non-finite is assigned the worst
/// finite value of the sweep (weight ~ 0) instead of aborting the run.
inline CboResult cbo_optimize(const std::function<double(std::span<const double>)>& objective,
                              CboMode mode, const CboConfig& cfg, bool record_trace = false) {
    cfg.validate();
    const std::size_t m = cfg.n_particles;
    const std::size_t dim = cfg.bounds.size();

    Swarm swarm;
    swarm.n_particles = m;
    swarm.dim = dim;
    swarm.positions.resize(m * dim);
    swarm.objective_values.assign(m, 0.0);

    std::vector<Rng> streams;
    streams.reserve(m);
    for (std::size_t k = 0; k < m; ++k) {
        streams.emplace_back(cfg.seed, k);
        for (std::size_t j = 0; j < dim; ++j) {
            swarm.positions[k * dim + j] =
                streams.back().uniform(cfg.bounds[j].first, cfg.bounds[j].second);
        }
    }

    CboResult result;
    result.best_value = mode == CboMode::maximize ? -std::numeric_limits<double>::infinity()
                                                  : std::numeric_limits<double>::infinity();
    const double s = mode == CboMode::maximize ? 1.0 : -1.0;

    const auto evaluate_sweep = [&] {
        parallel_for(
            m, [&](std::size_t k) { swarm.objective_values[k] = objective(swarm.particle(k)); },
            cfg.n_workers);
        double worst = std::numeric_limits<double>::infinity();
        bool any_finite = false;
        for (std::size_t k = 0; k < m; ++k) {
            if (std::isfinite(swarm.objective_values[k])) {
                any_finite = true;
                worst = std::min(worst, s * swarm.objective_values[k]);
            }
        }
        if (!any_finite) {
            throw std::runtime_error("cbo_optimize: objective non-finite at every particle");
        }
        for (std::size_t k = 0; k < m; ++k) {
            if (!std::isfinite(swarm.objective_values[k])) {
                ++result.n_nonfinite_evals;
                swarm.objective_values[k] = s * worst;  // worst finite value
            }
            const double value = swarm.objective_values[k];
            if (s * value > s * result.best_value) {
                result.best_value = value;
                result.best_point.assign(swarm.particle(k).begin(), swarm.particle(k).end());
            }
        }
    };

    const double drift = cfg.a * cfg.dt;
    const double noise = cfg.sigma * std::sqrt(cfg.dt);
    for (std::size_t step = 0; step < cfg.n_steps; ++step) {
        evaluate_sweep();
        swarm.consensus =
            weighted_consensus(swarm.positions, m, dim, swarm.objective_values, cfg.b, mode);
        if (record_trace) {
            result.trace.push_back({step, result.best_value, swarm.consensus});
        }
        for (std::size_t k = 0; k < m; ++k) {
            auto theta = swarm.particle(k);
            for (std::size_t j = 0; j < dim; ++j) {
                const double gap = swarm.consensus[j] - theta[j];
                double next = theta[j] + drift * gap + noise * gap * streams[k].normal();
                next = std::clamp(next, cfg.bounds[j].first, cfg.bounds[j].second);
                theta[j] = next;
            }
        }
    }
    evaluate_sweep();
    swarm.consensus =
        weighted_consensus(swarm.positions, m, dim, swarm.objective_values, cfg.b, mode);
    if (record_trace) {
        result.trace.push_back({cfg.n_steps, result.best_value, swarm.consensus});
    }
    result.theta_hat = swarm.consensus;
    return result;
}

inline void save_trace_csv(const CboResult& result, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << "step,best_value";
    if (!result.trace.empty()) {
        for (std::size_t j = 0; j < result.trace.front().consensus.size(); ++j) {
            out << ",consensus_" << j;
        }
    }
    out << '\n';
    out.precision(17);
    for (const auto& point : result.trace) {
        out << point.step << ',' << point.best_value;
        for (const double c : point.consensus) {
            out << ',' << c;
        }
        out << '\n';
    }
}

}  // namespace pdvol
