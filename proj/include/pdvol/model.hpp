#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdvol/kernel.hpp"
#include "pdvol/parallel.hpp"
#include "pdvol/rng.hpp"
#include "pdvol/series.hpp"

namespace pdvol {

/// Calibrated price-model parameter set {alpha, r, lambda, V0, V1, V2}
/// plus the kernel regularizer delta and the grid step.
struct ModelParams {
    double alpha = 1.0;
    double r = 0.0;       // drift, 1/yr
    double lambda = 0.0;  // mean reversion, 1/yr
    double v0 = 0.0;
    double v1 = 0.0;
    double v2 = 0.0;
    double delta = 1e-2;
    double dt = 1.0 / 365.0;

    KernelConfig kernel() const { return KernelConfig{alpha, delta, dt}; }

    void validate() const {
        kernel().validate();
        if (lambda < 0.0 || v0 < 0.0 || v1 < 0.0 || v2 < 0.0) {
            throw std::invalid_argument("ModelParams: lambda and V0,V1,V2 must be >= 0");
        }
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"alpha", alpha}, {"r", r},   {"lambda", lambda}, {"v0", v0},
                              {"v1", v1},       {"v2", v2}, {"delta", delta},   {"dt", dt}};
    }

    static ModelParams from_json(const nlohmann::json& j) {
        ModelParams p;
        p.alpha = j.at("alpha").get<double>();
        p.r = j.at("r").get<double>();
        p.lambda = j.at("lambda").get<double>();
        p.v0 = j.at("v0").get<double>();
        p.v1 = j.at("v1").get<double>();
        p.v2 = j.at("v2").get<double>();
        p.delta = j.value("delta", 1e-2);
        p.dt = j.value("dt", 1.0 / 365.0);
        return p;
    }
};

/// Piecewise-constant storage drift coefficients. window_days == 0 means a
/// single window covering the whole horizon.
struct StorageParams {
    std::vector<double> gamma1{0.0};
    std::vector<double> gamma2{0.0};
    std::int64_t window_days = 0;

    void validate() const {
        if (gamma1.empty() || gamma1.size() != gamma2.size()) {
            throw std::invalid_argument("StorageParams: gamma vectors must be non-empty, equal length");
        }
        if (window_days < 0) {
            throw std::invalid_argument("StorageParams: window_days must be >= 0");
        }
        if (window_days == 0 && gamma1.size() != 1) {
            throw std::invalid_argument("StorageParams: full-horizon window takes scalar gammas");
        }
    }

    std::size_t window_index(std::int64_t day) const {
        if (window_days <= 0) {
            return 0;
        }
        const std::size_t idx = static_cast<std::size_t>(day / window_days);
        return std::min(idx, gamma1.size() - 1);
    }

    /// Number of windows needed to cover horizon_days: ceil(T / window).
    static std::size_t window_count(std::int64_t horizon_days, std::int64_t window_days) {
        if (window_days <= 0) {
            return 1;
        }
        return static_cast<std::size_t>((horizon_days + window_days - 1) / window_days);
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"gamma1", gamma1}, {"gamma2", gamma2}, {"window_days", window_days}};
    }

    static StorageParams from_json(const nlohmann::json& j) {
        StorageParams p;
        p.gamma1 = j.at("gamma1").get<std::vector<double>>();
        p.gamma2 = j.at("gamma2").get<std::vector<double>>();
        p.window_days = j.value("window_days", std::int64_t{0});
        return p;
    }
};

/// One path's running state at grid index step_index.
struct SimState {
    double log_price = 0.0;
    double x = 0.0;  // deseasonalized storage
    std::vector<double> history;
    std::size_t step_index = 0;
};

struct SimulationError : std::runtime_error {
    std::size_t path;
    std::size_t step;
    SimulationError(std::size_t path_, std::size_t step_, const std::string& what_)
        : std::runtime_error("path " + std::to_string(path_) + ", step " + std::to_string(step_) +
                             ": " + what_),
          path(path_),
          step(step_) {}
};

struct PathEnsemble {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    std::vector<double> log_prices;  // n_paths x (n_steps+1), row-major
    std::vector<double> vols;        // n_paths x n_steps
    std::vector<double> storage_x;   // n_paths x (n_steps+1)
    std::uint64_t seed = 0;
    double dt = 1.0 / 365.0;

    double log_price(std::size_t path, std::size_t step) const {
        return log_prices[path * (n_steps + 1) + step];
    }
    double price(std::size_t path, std::size_t step) const {
        return std::exp(log_price(path, step));
    }
    double vol(std::size_t path, std::size_t step) const { return vols[path * n_steps + step]; }
    double x(std::size_t path, std::size_t step) const {
        return storage_x[path * (n_steps + 1) + step];
    }
    std::span<const double> log_price_row(std::size_t path) const {
        return {log_prices.data() + path * (n_steps + 1), n_steps + 1};
    }
};

namespace detail {

inline double clamp_unit(double x_plus_p) {
    // keeps the vol denominator positive when negative gammas push X+P
    // outside (0,1]; the X dynamics themselves stay unclamped
    constexpr double kFloor = 1e-6;
    if (x_plus_p < kFloor) {
        return kFloor;
    }
    if (x_plus_p > 1.0) {
        return 1.0;
    }
    return x_plus_p;
}

inline double volatility_terms(double x_plus_p, double ma_gap_abs, const ModelParams& p) {
    const double xp = clamp_unit(x_plus_p);
    const double denom = xp * (1.0 - xp) + p.delta;
    return p.v0 + p.v1 / denom + p.v2 * std::sqrt(ma_gap_abs + p.delta);
}

}  // namespace detail

/// sigma(t_i) = V0 + V1 / ((X+P)(1-X-P) + delta) + V2 sqrt(|MA_i - S(0)| + delta),
/// with the moving average taken over state.history up to and including t_i.
inline double volatility(const SimState& state, double p_daily, const ModelParams& params) {
    params.validate();
    if (state.history.empty() || state.step_index >= state.history.size()) {
        throw std::invalid_argument("volatility: invalid state history/index");
    }
    double gap = 0.0;
    if (params.v2 != 0.0) {
        const KernelWeights weights(params.kernel(), state.step_index);
        const double ma = moving_average(state.history, state.step_index, weights);
        gap = std::abs(ma - state.history.front());
    }
    const double sigma = detail::volatility_terms(state.x + p_daily, gap, params);
    if (!std::isfinite(sigma)) {
        throw std::runtime_error("volatility: non-finite result (internal error)");
    }
    return sigma;
}

/// One forward Euler update of (log-price, storage) given the normal draw z.
/// sigma and R are evaluated at t_i before the state advances.
inline SimState euler_step(const SimState& state, double p_daily, const ModelParams& params,
                           const StorageParams& storage, double z) {
    storage.validate();
    const double sigma = volatility(state, p_daily, params);
    double rel = 0.0;
    const std::size_t window = storage.window_index(static_cast<std::int64_t>(state.step_index));
    const double g1 = storage.gamma1[window];
    const double g2 = storage.gamma2[window];
    if (g1 != 0.0 || g2 != 0.0) {
        const KernelWeights weights(params.kernel(), state.step_index);
        rel = relative_level(state.history, state.step_index, weights);
    }
    const auto [r_plus, r_minus] = sign_split(rel);
    const double xp = state.x + p_daily;

    SimState next = state;
    next.log_price = state.log_price +
                     (params.r - 0.5 * sigma * sigma - params.lambda * state.log_price) * params.dt +
                     sigma * std::sqrt(params.dt) * z;
    next.x = state.x + params.dt * (g1 * r_plus * (1.0 - xp) - g2 * r_minus * xp);
    if (!std::isfinite(next.log_price) || !std::isfinite(next.x)) {
        throw SimulationError(0, state.step_index, "non-finite state after Euler update");
    }
    next.history.push_back(next.log_price);
    next.step_index = state.step_index + 1;
    return next;
}

/// Simulates n_paths independent trajectories of (log-price, vol, storage).
/// Path k draws from the substream (seed, k), so results are bit-identical
/// for any worker count. p_daily must supply P(t_i) for i = 0..n_steps.
inline PathEnsemble simulate_ensemble(const ModelParams& params, const StorageParams& storage,
                                      const DailySeries& p_daily, double s0, double x0,
                                      std::size_t n_steps, std::size_t n_paths, std::uint64_t seed,
                                      unsigned n_workers = 0) {
    params.validate();
    storage.validate();
    if (p_daily.size() < n_steps + 1) {
        throw std::invalid_argument("simulate_ensemble: p_daily shorter than n_steps+1");
    }
    if (n_paths < 1) {
        throw std::invalid_argument("simulate_ensemble: n_paths must be >= 1");
    }

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.n_steps = n_steps;
    ens.seed = seed;
    ens.dt = params.dt;
    ens.log_prices.resize(n_paths * (n_steps + 1));
    ens.vols.resize(n_paths * n_steps);
    ens.storage_x.resize(n_paths * (n_steps + 1));

    const KernelWeights weights(params.kernel(), n_steps);
    const bool need_ma = params.v2 != 0.0;
    bool need_rel = false;
    for (std::size_t w = 0; w < storage.gamma1.size(); ++w) {
        need_rel = need_rel || storage.gamma1[w] != 0.0 || storage.gamma2[w] != 0.0;
    }

    parallel_for(
        n_paths,
        [&](std::size_t k) {
            Rng rng(seed, k);
            double* s = ens.log_prices.data() + k * (n_steps + 1);
            double* x = ens.storage_x.data() + k * (n_steps + 1);
            double* v = ens.vols.data() + k * n_steps;
            s[0] = s0;
            x[0] = x0;
            for (std::size_t i = 0; i < n_steps; ++i) {
                double gap = 0.0;
                double rel = 0.0;
                if (need_ma || need_rel) {
                    double sum = 0.0;
                    double diff_sum = 0.0;
                    for (std::size_t m = 0; m <= i; ++m) {
                        const double w = weights.lag(i - m);
                        sum += s[m] * w;
                        diff_sum += (s[m] - s[i]) * w;
                    }
                    const double pref = weights.prefactor(i);
                    double ma = pref * sum;
                    if (params.alpha == 1.0) {
                        ma = s[i];
                        rel = 0.0;
                    } else {
                        rel = pref * diff_sum;
                    }
                    gap = std::abs(ma - s0);
                }
                const double sigma = detail::volatility_terms(x[i] + p_daily.values[i], gap, params);
                const std::size_t window = storage.window_index(static_cast<std::int64_t>(i));
                const double g1 = storage.gamma1[window];
                const double g2 = storage.gamma2[window];
                const auto [r_plus, r_minus] = sign_split(rel);
                const double xp = x[i] + p_daily.values[i];
                const double z = rng.normal();
                s[i + 1] = s[i] + (params.r - 0.5 * sigma * sigma - params.lambda * s[i]) * params.dt +
                           sigma * std::sqrt(params.dt) * z;
                x[i + 1] = x[i] + params.dt * (g1 * r_plus * (1.0 - xp) - g2 * r_minus * xp);
                v[i] = sigma;
                if (!std::isfinite(s[i + 1]) || !std::isfinite(x[i + 1]) || !std::isfinite(sigma)) {
                    throw SimulationError(k, i, "non-finite state after Euler update");
                }
            }
        },
        n_workers);
    return ens;
}

/// Deterministic daily storage fit: integrates Eq.-style X updates with R
/// computed from the observed log-price path. No randomness.
inline DailySeries simulate_storage_given_prices(const DailySeries& observed_log_prices,
                                                 const StorageParams& storage,
                                                 const DailySeries& p_daily, double x0, double alpha,
                                                 double delta, double dt = 1.0 / 365.0) {
    storage.validate();
    if (observed_log_prices.size() != p_daily.size()) {
        throw std::invalid_argument("simulate_storage_given_prices: series length mismatch");
    }
    const std::size_t n = observed_log_prices.size();
    const KernelConfig cfg{alpha, delta, dt};
    const KernelWeights weights(cfg, n - 1);
    const KernelGrid grid = kernel_grid(observed_log_prices.values, weights);

    DailySeries out;
    out.start_date = observed_log_prices.start_date;
    out.kind = DailyKind::storage_daily;
    out.values.resize(n);
    out.values[0] = x0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t window = storage.window_index(static_cast<std::int64_t>(i));
        const auto [r_plus, r_minus] = sign_split(grid.relative_level[i]);
        const double xp = out.values[i] + p_daily.values[i];
        out.values[i + 1] = out.values[i] + dt * (storage.gamma1[window] * r_plus * (1.0 - xp) -
                                                  storage.gamma2[window] * r_minus * xp);
        if (!std::isfinite(out.values[i + 1])) {
            throw SimulationError(0, i, "non-finite storage fit");
        }
    }
    return out;
}

/// CSV matrix dump (row = path) plus a JSON sidecar with params and seed.
inline void save_ensemble(const PathEnsemble& ens, const ModelParams& params,
                          const StorageParams& storage, const std::string& csv_path,
                          const std::string& sidecar_path) {
    std::ofstream out(csv_path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + csv_path);
    }
    out.precision(17);
    for (std::size_t k = 0; k < ens.n_paths; ++k) {
        for (std::size_t i = 0; i <= ens.n_steps; ++i) {
            out << ens.log_price(k, i) << (i == ens.n_steps ? '\n' : ',');
        }
    }
    std::ofstream side(sidecar_path);
    if (!side) {
        throw std::runtime_error("cannot write file: " + sidecar_path);
    }
    side << nlohmann::json{{"model", params.to_json()},
                           {"storage", storage.to_json()},
                           {"seed", ens.seed},
                           {"n_paths", ens.n_paths},
                           {"n_steps", ens.n_steps},
                           {"dt", ens.dt}}
                .dump(2)
         << '\n';
}

}  // namespace pdvol
