#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdvol/cbo.hpp"
#include "pdvol/kernel.hpp"
#include "pdvol/model.hpp"
#include "pdvol/series.hpp"
#include "pdvol/timeseries.hpp"

namespace pdvol {

/// Observed data feeding the price likelihood: aligned daily log-prices,
/// periodic storage P, and deseasonalized storage X on the same grid.
struct PriceObjectiveInput {
    DailySeries log_prices;
    DailySeries p_daily;
    DailySeries x_daily;
    double delta = 1e-2;
    double dt = 1.0 / 365.0;

    void validate() const {
        if (log_prices.kind != DailyKind::log_price) {
            throw std::invalid_argument("PriceObjectiveInput: log_prices.kind must be log_price");
        }
        if (log_prices.size() != p_daily.size() || log_prices.size() != x_daily.size()) {
            throw std::invalid_argument("PriceObjectiveInput: series must share one grid");
        }
        if (log_prices.size() < 2) {
            throw std::invalid_argument("PriceObjectiveInput: need at least two observations");
        }
        if (!(delta > 0.0) || !(dt > 0.0)) {
            throw std::invalid_argument("PriceObjectiveInput: delta and dt must be positive");
        }
    }
};

namespace detail {

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double v) {
        const double y = v - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

}  // namespace detail

/// Rescaled log-likelihood of the observed increments under theta:
///   l = - sum_j ln|sigma_j| - sum_j [dS_j - (r - sigma_j^2/2 - lambda S_j) dt]^2 / (2 dt sigma_j^2),
/// where sigma_j is the Euler volatility evaluated on the observed history
/// and the observed X+P. The constant -(n/2) ln(2 pi dt) of the full
/// likelihood is dropped.
inline double rescaled_log_likelihood(const ModelParams& theta, const PriceObjectiveInput& input) {
    input.validate();
    const std::size_t n = input.log_prices.size();
    const std::vector<double>& s = input.log_prices.values;
    const KernelConfig cfg{theta.alpha, input.delta, input.dt};
    cfg.validate();
    if (theta.lambda < 0.0 || theta.v0 < 0.0 || theta.v1 < 0.0 || theta.v2 < 0.0) {
        throw std::invalid_argument("rescaled_log_likelihood: negative lambda or V components");
    }

    std::vector<double> ma;
    if (theta.v2 != 0.0) {
        const KernelWeights weights(cfg, n - 1);
        ma = kernel_grid(s, weights).moving_average;
    }

    detail::KahanSum log_term;
    detail::KahanSum quad_term;
    const double dt = input.dt;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double gap = theta.v2 != 0.0 ? std::abs(ma[j] - s[0]) : 0.0;
        const double xp = input.x_daily.values[j] + input.p_daily.values[j];
        ModelParams local = theta;
        local.delta = input.delta;
        const double sigma = detail::volatility_terms(xp, gap, local);
        if (!(sigma > 0.0)) {
            throw std::runtime_error("rescaled_log_likelihood: sigma = 0 (degenerate config)");
        }
        const double drift = (theta.r - 0.5 * sigma * sigma - theta.lambda * s[j]) * dt;
        const double dev = s[j + 1] - s[j] - drift;
        log_term.add(std::log(std::abs(sigma)));
        quad_term.add(dev * dev / (2.0 * dt * sigma * sigma));
    }
    return -log_term.sum - quad_term.sum;
}

/// Weekly mean-square error between the observed deseasonalized storage and
/// the storage fit driven by the observed prices at the candidate gammas.
inline double storage_mse(const StorageParams& gammas, double alpha, double delta,
                          const PriceObjectiveInput& observed, const WeeklySeries& x_weekly_observed,
                          double x0) {
    observed.validate();
    const DailySeries fit = simulate_storage_given_prices(observed.log_prices, gammas,
                                                          observed.p_daily, x0, alpha, delta,
                                                          observed.dt);
    const WeeklySeries fit_weekly = daily_to_weekly_average(fit);
    if (fit_weekly.size() != x_weekly_observed.size()) {
        throw std::invalid_argument("storage_mse: weekly series length mismatch (" +
                                    std::to_string(fit_weekly.size()) + " vs " +
                                    std::to_string(x_weekly_observed.size()) + ")");
    }
    double mse = 0.0;
    for (std::size_t i = 0; i < fit_weekly.size(); ++i) {
        const double d = x_weekly_observed.values[i] - fit_weekly.values[i];
        mse += d * d;
    }
    return mse;
}

inline std::vector<std::pair<double, double>> default_price_bounds() {
    return {{0.5 + 1e-6, 1.5 - 1e-6}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}, {0.0, 10.0}};
}

struct PriceCalibration {
    ModelParams params;
    double objective_value = 0.0;
    std::string selected;  // "consensus" or "best_particle"
    CboResult cbo;
};

/// Step 1 of the two-step calibration: CBO maximization of the rescaled
/// log-likelihood over theta = (alpha, r, lambda, V0, V1, V2). Reports the
/// better of the final consensus and the best evaluated particle.
inline PriceCalibration calibrate_price(const PriceObjectiveInput& input, CboConfig cfg,
                                        bool record_trace = false) {
    input.validate();
    if (cfg.bounds.empty()) {
        cfg.bounds = default_price_bounds();
    }
    if (cfg.bounds.size() != 6) {
        throw std::invalid_argument("calibrate_price: bounds must cover 6 parameters");
    }

    const auto objective = [&input](std::span<const double> theta) -> double {
        ModelParams p;
        p.alpha = theta[0];
        p.r = theta[1];
        p.lambda = theta[2];
        p.v0 = theta[3];
        p.v1 = theta[4];
        p.v2 = theta[5];
        p.delta = input.delta;
        p.dt = input.dt;
        try {
            return rescaled_log_likelihood(p, input);
        } catch (const std::exception&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    PriceCalibration out;
    out.cbo = cbo_optimize(objective, CboMode::maximize, cfg, record_trace);
    const double consensus_value = objective(out.cbo.theta_hat);
    const std::vector<double>& pick =
        consensus_value >= out.cbo.best_value ? out.cbo.theta_hat : out.cbo.best_point;
    out.selected = consensus_value >= out.cbo.best_value ? "consensus" : "best_particle";
    out.params.alpha = pick[0];
    out.params.r = pick[1];
    out.params.lambda = pick[2];
    out.params.v0 = pick[3];
    out.params.v1 = pick[4];
    out.params.v2 = pick[5];
    out.params.delta = input.delta;
    out.params.dt = input.dt;
    out.objective_value = rescaled_log_likelihood(out.params, input);
    return out;
}

struct StorageCalibration {
    StorageParams params;
    double mse = 0.0;                      // total over all weeks
    std::vector<double> window_mse;        // per-window partial MSE at the optimum
    std::vector<std::size_t> window_weeks; // weeks owned by each window
};

/// Step 2: per-window CBO minimization of the storage MSE. Windows run
/// sequentially in time order because the storage fit is path-continuous:
/// window j+1 starts from window j's terminal fitted value. A weekly block
/// belongs to the window containing its last day, so a block straddling a
/// window edge reads already-fixed fit values for its early days and never
/// depends on windows that are not calibrated yet.
inline StorageCalibration calibrate_storage(double alpha_hat, double delta,
                                            std::int64_t window_days,
                                            const PriceObjectiveInput& input,
                                            const WeeklySeries& x_weekly, double x0, CboConfig cfg) {
    input.validate();
    if (cfg.bounds.empty()) {
        cfg.bounds = {{-300.0, 300.0}, {-300.0, 300.0}};
    }
    if (cfg.bounds.size() != 2) {
        throw std::invalid_argument("calibrate_storage: bounds must cover (gamma1, gamma2)");
    }
    const std::size_t n = input.log_prices.size();
    const std::int64_t horizon_days = static_cast<std::int64_t>(n) - 1;
    const std::size_t n_windows = StorageParams::window_count(horizon_days, window_days);
    const std::size_t n_weeks = (n + 6) / 7;
    if (x_weekly.size() != n_weeks) {
        throw std::invalid_argument("calibrate_storage: x_weekly length must be ceil(n/7)");
    }

    // R depends only on (alpha, delta) and the observed prices: compute once.
    const KernelConfig kcfg{alpha_hat, delta, input.dt};
    const KernelWeights weights(kcfg, n - 1);
    const std::vector<double> rel = kernel_grid(input.log_prices.values, weights).relative_level;

    const auto window_lo = [&](std::size_t win) -> std::size_t {
        return window_days <= 0 ? 0 : static_cast<std::size_t>(win) * window_days;
    };
    const auto window_hi = [&](std::size_t win) -> std::size_t {  // exclusive day bound
        if (window_days <= 0 || win + 1 == n_windows) {
            return n;
        }
        return std::min<std::size_t>(n, (win + 1) * static_cast<std::size_t>(window_days));
    };

    // weeks owned by each window, by the day index of the week's last point
    std::vector<std::size_t> first_week(n_windows, n_weeks), past_week(n_windows, 0);
    for (std::size_t w = 0; w < n_weeks; ++w) {
        const std::size_t end_day = std::min(n - 1, 7 * w + 6);
        std::size_t win = window_days <= 0 ? 0 : end_day / static_cast<std::size_t>(window_days);
        win = std::min(win, n_windows - 1);
        first_week[win] = std::min(first_week[win], w);
        past_week[win] = std::max(past_week[win], w + 1);
    }
    for (std::size_t win = 0; win < n_windows; ++win) {
        if (first_week[win] == n_weeks) {
            throw std::invalid_argument("calibrate_storage: window " + std::to_string(win) +
                                        " owns no weekly observation");
        }
    }

    std::vector<double> fixed_fit;  // fitted X on all days before the current window
    fixed_fit.reserve(n);

    // Partial MSE over the weeks owned by `win` when its days evolve at
    // (g1, g2). Days before the window read fixed_fit. The window's fitted
    // states (days lo..hi) can be captured for the hand-off to window win+1.
    const auto window_objective = [&](std::size_t win, double g1, double g2,
                                      std::vector<double>* capture) -> double {
        const std::size_t lo = window_lo(win);
        const std::size_t hi = window_hi(win);
        const std::size_t wk0 = first_week[win];
        double xcur = lo == 0 ? x0 : fixed_fit[lo];
        if (capture) {
            capture->clear();
        }
        double mse = 0.0;
        std::size_t week = lo / 7;
        double block_sum = 0.0;
        std::size_t block_len = 0;
        // preload the part of a straddling week that lies before the window
        for (std::size_t day = 7 * week; day < lo; ++day) {
            block_sum += fixed_fit[day];
            ++block_len;
        }
        for (std::size_t day = lo; day < hi; ++day) {
            if (capture) {
                capture->push_back(xcur);
            }
            block_sum += xcur;
            ++block_len;
            if (day % 7 == 6 || day == n - 1) {
                if (week >= wk0 && week < past_week[win]) {
                    const double d = x_weekly.values[week] - block_sum / block_len;
                    mse += d * d;
                }
                ++week;
                block_sum = 0.0;
                block_len = 0;
            }
            if (day + 1 < n) {
                const auto [r_plus, r_minus] = sign_split(rel[day]);
                const double xp = xcur + input.p_daily.values[day];
                xcur += input.dt * (g1 * r_plus * (1.0 - xp) - g2 * r_minus * xp);
                if (!std::isfinite(xcur)) {
                    return std::numeric_limits<double>::infinity();
                }
            }
        }
        if (capture && hi < n) {
            capture->push_back(xcur);  // state at the next window's first day
        }
        return mse;
    };

    StorageCalibration out;
    out.params.window_days = window_days;
    out.params.gamma1.clear();
    out.params.gamma2.clear();
    out.window_mse.resize(n_windows);
    out.window_weeks.resize(n_windows);

    for (std::size_t win = 0; win < n_windows; ++win) {
        CboConfig wcfg = cfg;
        wcfg.seed = cfg.seed + win;  // independent swarm per window
        const auto objective = [&](std::span<const double> g) -> double {
            return window_objective(win, g[0], g[1], nullptr);
        };
        const CboResult res = cbo_optimize(objective, CboMode::minimize, wcfg);
        const double consensus_value = objective(res.theta_hat);
        const std::vector<double>& pick =
            consensus_value <= res.best_value ? res.theta_hat : res.best_point;
        out.params.gamma1.push_back(pick[0]);
        out.params.gamma2.push_back(pick[1]);
        out.window_weeks[win] = past_week[win] - first_week[win];

        std::vector<double> xs;
        out.window_mse[win] = window_objective(win, pick[0], pick[1], &xs);
        const std::size_t lo = window_lo(win);
        const std::size_t hi = window_hi(win);
        fixed_fit.resize(lo);
        for (std::size_t day = lo; day <= hi && day - lo < xs.size(); ++day) {
            fixed_fit.push_back(xs[day - lo]);
        }
    }
    out.params.validate();
    out.mse = storage_mse(out.params, alpha_hat, delta, input, x_weekly, x0);
    return out;
}

/// Calibration output mirroring the parameter-table layout.
struct CalibrationReport {
    ModelParams theta_hat;
    double objective_value = 0.0;
    Date window_start;
    Date window_end;
    StorageParams storage_hat;
    double mse = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json windows = nlohmann::json::array();
        for (std::size_t w = 0; w < storage_hat.gamma1.size(); ++w) {
            windows.push_back({{"gamma1", storage_hat.gamma1[w]}, {"gamma2", storage_hat.gamma2[w]}});
        }
        return nlohmann::json{{"interval", {{"start", window_start.to_string()},
                                            {"end", window_end.to_string()}}},
                              {"price", theta_hat.to_json()},
                              {"objective_value", objective_value},
                              {"storage",
                               {{"window_days", storage_hat.window_days},
                                {"windows", windows},
                                {"mse", mse}}}};
    }
};

}  // namespace pdvol
