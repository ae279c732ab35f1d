#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdvol/series.hpp"

namespace pdvol {

inline constexpr double kWeeksPerYear = 365.0 / 7.0;

/// Normalized weekly storage split into a fitted Fourier periodic part and
/// the deseasonalized residual. periodic + residual reproduces the input.
struct SeasonalDecomposition {
    double period = kWeeksPerYear;  // in weeks
    int harmonics = 0;
    std::vector<double> cosine_coeffs;
    std::vector<double> sine_coeffs;
    double mean_level = 0.0;
    WeeklySeries periodic;
    WeeklySeries residual;

    /// Fitted periodic value at a time measured in weeks from the series start.
    double periodic_value(double t_weeks) const {
        double v = mean_level;
        for (int k = 1; k <= harmonics; ++k) {
            const double arg = 2.0 * M_PI * k * t_weeks / period;
            v += cosine_coeffs[k - 1] * std::cos(arg) + sine_coeffs[k - 1] * std::sin(arg);
        }
        return v;
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"period", period},
                              {"mean", mean_level},
                              {"cos", cosine_coeffs},
                              {"sin", sine_coeffs}};
    }

    static SeasonalDecomposition from_json(const nlohmann::json& j) {
        SeasonalDecomposition d;
        d.period = j.at("period").get<double>();
        d.mean_level = j.at("mean").get<double>();
        d.cosine_coeffs = j.at("cos").get<std::vector<double>>();
        d.sine_coeffs = j.at("sin").get<std::vector<double>>();
        d.harmonics = static_cast<int>(d.cosine_coeffs.size());
        return d;
    }
};

/// Divides raw weekly storage by the capacity. cap <= 0 selects the series
/// maximum (so the normalized peak is exactly 1).
inline WeeklySeries normalize_storage(const WeeklySeries& raw, double cap = 0.0) {
    if (raw.kind != WeeklyKind::raw) {
        throw std::invalid_argument("normalize_storage: input kind must be raw");
    }
    raw.validate();
    double max_value = raw.values.front();
    for (const double v : raw.values) {
        if (!(v > 0.0)) {
            throw std::invalid_argument("normalize_storage: non-positive storage value");
        }
        max_value = std::max(max_value, v);
    }
    if (cap <= 0.0) {
        cap = max_value;
    } else if (cap < max_value) {
        throw std::invalid_argument("normalize_storage: cap smaller than series maximum");
    }
    WeeklySeries out;
    out.start_date = raw.start_date;
    out.kind = WeeklyKind::normalized;
    out.values.reserve(raw.size());
    for (const double v : raw.values) {
        out.values.push_back(v / cap);
    }
    return out;
}

/// Least-squares fit of mean + sum_k a_k cos(2*pi*k*t/L) + b_k sin(2*pi*k*t/L)
/// on the weekly grid t = 0,1,2,... A direct LS solve is used instead of a
/// DFT because series lengths are not integer multiples of the period.
inline SeasonalDecomposition fourier_fit(const WeeklySeries& normalized,
                                         double period = kWeeksPerYear,
                                         int harmonics = 3) {
    if (normalized.kind != WeeklyKind::normalized) {
        throw std::invalid_argument("fourier_fit: input kind must be normalized");
    }
    if (harmonics < 1) {
        throw std::invalid_argument("fourier_fit: harmonics must be >= 1");
    }
    const std::size_t n = normalized.size();
    const std::size_t n_params = 2 * static_cast<std::size_t>(harmonics) + 1;
    if (n < n_params) {
        throw std::invalid_argument("fourier_fit: series length " + std::to_string(n) +
                                    " too short for " + std::to_string(harmonics) + " harmonics");
    }

    Eigen::MatrixXd design(n, n_params);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
        design(i, 0) = 1.0;
        for (int k = 1; k <= harmonics; ++k) {
            const double arg = 2.0 * M_PI * k * static_cast<double>(i) / period;
            design(i, 2 * k - 1) = std::cos(arg);
            design(i, 2 * k) = std::sin(arg);
        }
        y(i) = normalized.values[i];
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    if (qr.rank() < static_cast<Eigen::Index>(n_params)) {
        throw std::runtime_error("fourier_fit: rank-deficient design matrix");
    }
    const Eigen::VectorXd coeffs = qr.solve(y);

    SeasonalDecomposition d;
    d.period = period;
    d.harmonics = harmonics;
    d.mean_level = coeffs(0);
    d.cosine_coeffs.resize(harmonics);
    d.sine_coeffs.resize(harmonics);
    for (int k = 1; k <= harmonics; ++k) {
        d.cosine_coeffs[k - 1] = coeffs(2 * k - 1);
        d.sine_coeffs[k - 1] = coeffs(2 * k);
    }
    d.periodic.start_date = normalized.start_date;
    d.periodic.kind = WeeklyKind::periodic;
    d.periodic.values.resize(n);
    d.residual.start_date = normalized.start_date;
    d.residual.kind = WeeklyKind::residual;
    d.residual.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        d.periodic.values[i] = d.periodic_value(static_cast<double>(i));
        d.residual.values[i] = normalized.values[i] - d.periodic.values[i];
    }
    return d;
}

/// Step-function conversion: each weekly value repeated for 7 days.
/// requested_length < 0 keeps the full 7*n_weeks days; otherwise the result
/// is truncated to requested_length (which must be coverable by the weeks).
inline DailySeries weekly_to_daily(const WeeklySeries& w, std::int64_t requested_length = -1) {
    if (w.values.empty()) {
        throw std::invalid_argument("weekly_to_daily: empty input");
    }
    const std::int64_t full = static_cast<std::int64_t>(w.size()) * 7;
    std::int64_t n = requested_length < 0 ? full : requested_length;
    if (n > full) {
        throw std::invalid_argument("weekly_to_daily: insufficient weeks for requested length " +
                                    std::to_string(n));
    }
    DailySeries out;
    out.start_date = w.start_date;
    out.kind = DailyKind::storage_daily;
    out.values.reserve(n);
    for (std::int64_t i = 0; i < n; ++i) {
        out.values.push_back(w.values[static_cast<std::size_t>(i / 7)]);
    }
    return out;
}

/// Block averages of 7 consecutive daily values. The final partial block is
/// averaged over its actual length (denominator 7 ∧ remaining points).
inline WeeklySeries daily_to_weekly_average(const DailySeries& d) {
    if (d.values.empty()) {
        throw std::invalid_argument("daily_to_weekly_average: empty input");
    }
    WeeklySeries out;
    out.start_date = d.start_date;
    out.kind = WeeklyKind::residual;
    const std::size_t n = d.size();
    const std::size_t weeks = (n + 6) / 7;
    out.values.reserve(weeks);
    for (std::size_t w = 0; w < weeks; ++w) {
        const std::size_t lo = 7 * w;
        const std::size_t hi = std::min(n, lo + 7);
        double sum = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            sum += d.values[i];
        }
        out.values.push_back(sum / static_cast<double>(hi - lo));
    }
    return out;
}

inline void save_decomposition_json(const SeasonalDecomposition& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << d.to_json().dump(2) << '\n';
}

}  // namespace pdvol
