#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "pdvol/kernel.hpp"

namespace pdvol {

/// Adaptive Gauss-Kronrod integral of fn over [a, b] with absolute error
/// at most tol. Gauss-Kronrod terminates on a relative target, so the
/// request tightens until the absolute estimate clears tol; throws when the
/// refinement limit is hit first.
inline double adaptive_integral(const std::function<double(double)>& fn, double a, double b,
                                double tol) {
    if (!(tol > 0.0)) {
        throw std::invalid_argument("adaptive_integral: tol must be positive");
    }
    double rel = 1e-8;
    for (int attempt = 0; attempt < 8; ++attempt) {
        double error = 0.0;
        const double value = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(
            fn, a, b, /*max_depth=*/22, /*tol=*/rel, &error);
        if (error <= tol && std::isfinite(value)) {
            return value;
        }
        rel /= 64.0;
    }
    throw std::runtime_error("adaptive_integral: refinement limit reached before absolute error " +
                             std::to_string(tol));
}

/// Continuous-path oracle for the delta-approximated moving average.
/// Integrates the kernel expression directly; independent of the discrete
/// sums it is used to check.
inline double quadrature_moving_average(const std::function<double(double)>& path_fn, double t,
                                        const KernelConfig& cfg, double tol) {
    if (!(cfg.alpha > 0.5 && cfg.alpha < 1.5) || !(cfg.delta > 0.0)) {
        throw std::invalid_argument("quadrature_moving_average: bad alpha or delta");
    }
    if (cfg.alpha == 1.0) {
        return path_fn(t);
    }
    if (t <= 0.0) {
        return 0.0;
    }
    const double pref = (1.0 - cfg.alpha) * std::pow(t + cfg.delta, cfg.alpha - 1.0);
    const auto integrand = [&](double u) {
        return path_fn(u) * std::pow(t - u + cfg.delta, -cfg.alpha);
    };
    return pref * adaptive_integral(integrand, 0.0, t, tol / std::abs(pref));
}

/// Continuous-path oracle for the relative level R(t).
inline double quadrature_relative_level(const std::function<double(double)>& path_fn, double t,
                                        const KernelConfig& cfg, double tol) {
    if (!(cfg.alpha > 0.5 && cfg.alpha < 1.5) || !(cfg.delta > 0.0)) {
        throw std::invalid_argument("quadrature_relative_level: bad alpha or delta");
    }
    if (cfg.alpha == 1.0 || t <= 0.0) {
        return 0.0;
    }
    const double s_t = path_fn(t);
    const double pref = (1.0 - cfg.alpha) * std::pow(t + cfg.delta, cfg.alpha - 1.0);
    const auto integrand = [&](double u) {
        return (path_fn(u) - s_t) * std::pow(t - u + cfg.delta, -cfg.alpha);
    };
    return pref * adaptive_integral(integrand, 0.0, t, tol / std::abs(pref));
}

}  // namespace pdvol
