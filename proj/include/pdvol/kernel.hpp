#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace pdvol {

/// Parameters of the delta-regularized power-law kernel
/// (1-alpha) / ((t+delta)^(1-alpha) (t-u+delta)^alpha).
struct KernelConfig {
    double alpha = 1.0;
    double delta = 1e-2;
    double dt = 1.0 / 365.0;

    void validate() const {
        if (!(alpha > 0.5 && alpha < 1.5)) {
            throw std::invalid_argument("KernelConfig: alpha must lie in (0.5, 1.5)");
        }
        if (!(delta > 0.0)) {
            throw std::invalid_argument("KernelConfig: delta must be positive");
        }
        if (!(dt > 0.0)) {
            throw std::invalid_argument("KernelConfig: dt must be positive");
        }
    }
};

/// Log-price history on the uniform grid t_m = m*dt, plus index bookkeeping.
struct KernelState {
    std::vector<double> history;
};

/// Precomputed lag weights w_k = (k*dt + delta)^(-alpha). The lag t_i - t_m
/// only takes grid multiples, so a full O(N^2) grid pass needs just O(N)
/// pow calls.
class KernelWeights {
public:
    KernelWeights(const KernelConfig& cfg, std::size_t max_lag) : cfg_(cfg) {
        cfg.validate();
        lag_.resize(max_lag + 1);
        for (std::size_t k = 0; k <= max_lag; ++k) {
            lag_[k] = std::pow(static_cast<double>(k) * cfg.dt + cfg.delta, -cfg.alpha);
        }
    }

    double lag(std::size_t k) const { return lag_[k]; }
    std::size_t max_lag() const { return lag_.size() - 1; }
    const KernelConfig& config() const { return cfg_; }

    /// (1-alpha) * dt / (t_i + delta)^(1-alpha)
    double prefactor(std::size_t i) const {
        return (1.0 - cfg_.alpha) * cfg_.dt *
               std::pow(static_cast<double>(i) * cfg_.dt + cfg_.delta, cfg_.alpha - 1.0);
    }

private:
    KernelConfig cfg_;
    std::vector<double> lag_;
};

namespace detail {

inline void check_index(std::span<const double> history, std::size_t i, const char* who) {
    if (history.empty()) {
        throw std::out_of_range(std::string(who) + ": empty history");
    }
    if (i >= history.size()) {
        throw std::out_of_range(std::string(who) + ": index " + std::to_string(i) +
                                " out of range (history length " + std::to_string(history.size()) + ")");
    }
}

}  // namespace detail

/// Discrete delta-approximated moving average
///   (1-a) sum_{m=0}^{i} S(t_m) dt / ((t_i+d)^{1-a} (t_i-t_m+d)^a) + S(t_i) 1{a=1}.
/// For alpha = 1 the sum's (1-alpha) factor vanishes and the indicator term
/// makes the result exactly S(t_i).
inline double moving_average(std::span<const double> history, std::size_t i,
                             const KernelWeights& weights) {
    detail::check_index(history, i, "moving_average");
    const KernelConfig& cfg = weights.config();
    if (cfg.alpha == 1.0) {
        return history[i];
    }
    double sum = 0.0;
    for (std::size_t m = 0; m <= i; ++m) {
        sum += history[m] * weights.lag(i - m);
    }
    return weights.prefactor(i) * sum;
}

inline double moving_average(const KernelState& state, std::size_t i, const KernelConfig& cfg) {
    cfg.validate();
    detail::check_index(state.history, i, "moving_average");
    return moving_average(state.history, i, KernelWeights(cfg, i));
}

/// Discrete relative level
///   R(t_i) = (1-a) sum_{m=0}^{i} (S(t_m) - S(t_i)) dt / ((t_i+d)^{1-a} (t_i-t_m+d)^a).
/// Constant paths and alpha = 1 both give exactly 0.
inline double relative_level(std::span<const double> history, std::size_t i,
                             const KernelWeights& weights) {
    detail::check_index(history, i, "relative_level");
    const KernelConfig& cfg = weights.config();
    if (cfg.alpha == 1.0) {
        return 0.0;
    }
    const double s_i = history[i];
    double sum = 0.0;
    for (std::size_t m = 0; m <= i; ++m) {
        sum += (history[m] - s_i) * weights.lag(i - m);
    }
    return weights.prefactor(i) * sum;
}

inline double relative_level(const KernelState& state, std::size_t i, const KernelConfig& cfg) {
    cfg.validate();
    detail::check_index(state.history, i, "relative_level");
    return relative_level(state.history, i, KernelWeights(cfg, i));
}

/// Non-negative / non-positive split; R = 0 goes to the plus branch.
inline std::pair<double, double> sign_split(double r) {
    if (r >= 0.0) {
        return {r, 0.0};
    }
    return {0.0, -r};
}

/// Closed-form kernel mass (1-a) int_0^t (t-u+d)^(-a) du / (t+d)^(1-a)
///   = 1 - (d/(t+d))^(1-a),
/// i.e. the moving average of a constant path c equals c times this (alpha != 1).
inline double kernel_mass(double t, const KernelConfig& cfg) {
    if (cfg.alpha == 1.0) {
        return 0.0;
    }
    return 1.0 - std::pow(cfg.delta / (t + cfg.delta), 1.0 - cfg.alpha);
}

/// Discrete kernel mass: (1-a) dt sum_{m=0}^{i} w_{i-m} / (t_i+d)^{1-a}.
/// Shift covariance of the moving average is exact against this quantity.
inline double discrete_kernel_mass(std::size_t i, const KernelWeights& weights) {
    if (weights.config().alpha == 1.0) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t m = 0; m <= i; ++m) {
        sum += weights.lag(i - m);
    }
    return weights.prefactor(i) * sum;
}

/// Full-grid pass: moving average and relative level at every index of the
/// history in one O(N^2) sweep. Row i costs O(i); there is no O(1) update
/// because the weight depends on the lag t_i - t_m.
struct KernelGrid {
    std::vector<double> moving_average;
    std::vector<double> relative_level;
};

inline KernelGrid kernel_grid(std::span<const double> history, const KernelWeights& weights) {
    const std::size_t n = history.size();
    if (n == 0) {
        throw std::invalid_argument("kernel_grid: empty history");
    }
    if (weights.max_lag() + 1 < n) {
        throw std::invalid_argument("kernel_grid: weight table shorter than history");
    }
    const KernelConfig& cfg = weights.config();
    KernelGrid grid;
    grid.moving_average.resize(n);
    grid.relative_level.resize(n);
    if (cfg.alpha == 1.0) {
        for (std::size_t i = 0; i < n; ++i) {
            grid.moving_average[i] = history[i];
            grid.relative_level[i] = 0.0;
        }
        return grid;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const double s_i = history[i];
        double sum = 0.0;
        double diff_sum = 0.0;  // difference form keeps R exactly 0 on constant paths
        for (std::size_t m = 0; m <= i; ++m) {
            const double w = weights.lag(i - m);
            sum += history[m] * w;
            diff_sum += (history[m] - s_i) * w;
        }
        const double pref = weights.prefactor(i);
        grid.moving_average[i] = pref * sum;
        grid.relative_level[i] = pref * diff_sum;
    }
    return grid;
}

}  // namespace pdvol
