#pragma once

#include <cmath>
#include <cstdint>

#include "pdvol/calib.hpp"
#include "pdvol/model.hpp"
#include "pdvol/timeseries.hpp"

namespace pdvol::testing {

/// Annual-cycle stand-in for the fitted periodic storage component.
inline DailySeries synthetic_p_daily(std::size_t n, double mean = 0.55, double amp = 0.25,
                                     double phase = 0.8) {
    DailySeries p;
    p.kind = DailyKind::storage_daily;
    p.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / 365.0;
        p.values.push_back(mean + amp * std::cos(2.0 * M_PI * (t - phase)));
    }
    return p;
}

struct SyntheticData {
    PriceObjectiveInput input;
    WeeklySeries x_weekly;  // weekly averages of the simulated storage path
    double x0 = 0.0;
};

/// One simulated trajectory of the full model packaged as observed data.
inline SyntheticData make_synthetic(const ModelParams& theta, const StorageParams& gammas,
                                    std::size_t n_steps, double s0_log, double x0,
                                    std::uint64_t seed) {
    SyntheticData out;
    const DailySeries p = synthetic_p_daily(n_steps + 1);
    const PathEnsemble ens = simulate_ensemble(theta, gammas, p, s0_log, x0, n_steps, 1, seed);

    out.input.log_prices.kind = DailyKind::log_price;
    out.input.log_prices.values.assign(ens.log_price_row(0).begin(), ens.log_price_row(0).end());
    out.input.p_daily = p;
    out.input.x_daily.kind = DailyKind::storage_daily;
    out.input.x_daily.values.resize(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i) {
        out.input.x_daily.values[i] = ens.x(0, i);
    }
    out.input.delta = theta.delta;
    out.input.dt = theta.dt;
    out.x_weekly = daily_to_weekly_average(out.input.x_daily);
    out.x0 = x0;
    return out;
}

/// Table-style stable parameter row (the 11/2019-03/2020 interval).
inline ModelParams stable_theta() {
    ModelParams m;
    m.alpha = 0.8734;
    m.r = 2.2244;
    m.lambda = 4.8764;
    m.v0 = 0.7193;
    m.v1 = 0.0341;
    m.v2 = 0.1893;
    m.delta = 1e-2;
    m.dt = 1.0 / 365.0;
    return m;
}

}  // namespace pdvol::testing
