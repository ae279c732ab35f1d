#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pdvol/kernel.hpp"
#include "pdvol/quadrature.hpp"

using namespace pdvol;

namespace {

std::vector<double> sample_path(double (*f)(double), double t_end, double dt) {
    const auto n = static_cast<std::size_t>(std::llround(t_end / dt));
    std::vector<double> v(n + 1);
    for (std::size_t m = 0; m <= n; ++m) {
        v[m] = f(static_cast<double>(m) * dt);
    }
    return v;
}

double linear_path(double u) { return u; }
double sine_path(double u) { return std::sin(2.0 * M_PI * u); }
double quad_path(double u) { return (u - 0.3) * (u - 0.3); }

}  // namespace

TEST_CASE("moving_average with alpha = 1 returns the current value exactly") {
    KernelConfig cfg{1.0, 0.01, 1.0 / 365.0};
    KernelState state{{2.0, 2.5, -1.0, 0.3}};
    for (std::size_t i = 0; i < state.history.size(); ++i) {
        CHECK(moving_average(state, i, cfg) == state.history[i]);
        CHECK(relative_level(state, i, cfg) == 0.0);
    }
}

TEST_CASE("moving_average single-term sum at i = 0") {
    // (1-a) * S(0) * dt / ((0+d)^{1-a} d^a) = (1-a) S(0) dt / d
    const KernelConfig cfg{0.75, 0.01, 1.0 / 365.0};
    KernelState state{{2.0}};
    const double expected = 0.25 * 2.0 * (1.0 / 365.0) / 0.01;
    CHECK(moving_average(state, 0, cfg) == Catch::Approx(expected).epsilon(1e-14));
}

TEST_CASE("moving_average on a constant path converges to the closed form") {
    // closed form c (1 - (d/(t+d))^{1-a}), checked at dt and dt/2
    const double c = 2.0;
    const KernelConfig base{0.75, 0.01, 0.0};
    const double t_end = 1.0;
    const double closed = c * kernel_mass(t_end, base);
    CHECK(closed == Catch::Approx(1.3690).margin(5e-4));  // the hand value

    double prev_err = 0.0;
    for (int halvings = 0; halvings < 3; ++halvings) {
        KernelConfig cfg = base;
        cfg.dt = 1.0 / (365.0 * (1 << halvings));
        const auto n = static_cast<std::size_t>(std::llround(t_end / cfg.dt));
        const std::vector<double> path(n + 1, c);
        const KernelWeights weights(cfg, n);
        const double err = std::abs(moving_average(path, n, weights) - closed);
        if (halvings > 0) {
            CHECK(err < prev_err);                      // monotone
            CHECK(std::log2(prev_err / err) > 0.9);     // order >= 1
        }
        prev_err = err;
    }
}

TEST_CASE("moving_average for alpha > 1 on a constant path") {
    // the delta-approximation extends the definition beyond alpha = 1;
    // kernel mass goes negative and grows like (t/d)^{a-1}
    const KernelConfig cfg{1.25, 0.01, 1.0 / 3650.0};
    const double c = 1.5;
    const double t_end = 0.5;
    const auto n = static_cast<std::size_t>(std::llround(t_end / cfg.dt));
    const std::vector<double> path(n + 1, c);
    const KernelWeights weights(cfg, n);
    const double closed = c * kernel_mass(t_end, cfg);
    CHECK(closed < 0.0);
    CHECK(moving_average(path, n, weights) == Catch::Approx(closed).margin(2e-2 * std::abs(closed)));
}

TEST_CASE("relative_level is zero on constant paths and matches quadrature on a linear path") {
    const KernelConfig cfg{0.75, 0.01, 1.0 / 365.0};
    KernelState constant{{1.3, 1.3, 1.3, 1.3, 1.3}};
    for (std::size_t i = 0; i < constant.history.size(); ++i) {
        CHECK(relative_level(constant, i, cfg) == 0.0);
    }

    // linear path S(u) = u at t = 1: discrete sum at a fine grid against the
    // adaptive quadrature of the continuous integrand, to 1e-6
    KernelConfig fine = cfg;
    fine.dt = 1e-6;
    const auto n = static_cast<std::size_t>(std::llround(1.0 / fine.dt));
    const std::vector<double> path = sample_path(linear_path, 1.0, fine.dt);
    const KernelWeights weights(fine, n);
    const double discrete = relative_level(path, n, weights);
    const double oracle = quadrature_relative_level(linear_path, 1.0, fine, 1e-9);
    CHECK(discrete < 0.0);
    CHECK(std::abs(discrete - oracle) < 1e-6);
}

TEST_CASE("sign_split identities") {
    CHECK(sign_split(0.5) == std::pair{0.5, 0.0});
    CHECK(sign_split(-0.3) == std::pair{0.0, 0.3});
    CHECK(sign_split(0.0) == std::pair{0.0, 0.0});  // boundary to the plus branch
    for (double r : {-2.7, -1e-14, 0.0, 3.14, 1e9}) {
        const auto [p, m] = sign_split(r);
        CHECK(p >= 0.0);
        CHECK(m >= 0.0);
        CHECK(p - m == r);
        CHECK(p * m == 0.0);
    }
}

TEST_CASE("quadrature oracle reproduces the constant-path closed form") {
    const KernelConfig cfg{0.75, 0.01, 1.0 / 365.0};
    const auto const_two = [](double) { return 2.0; };
    const double value = quadrature_moving_average(const_two, 1.0, cfg, 1e-8);
    CHECK(value == Catch::Approx(2.0 * kernel_mass(1.0, cfg)).margin(1e-8));

    for (double alpha : {0.6, 0.9, 1.2, 1.45}) {
        for (double t : {0.25, 1.0}) {
            KernelConfig k{alpha, 0.02, 1.0 / 365.0};
            const auto const_c = [](double) { return 0.7; };
            CHECK(quadrature_moving_average(const_c, t, k, 1e-9) ==
                  Catch::Approx(0.7 * kernel_mass(t, k)).margin(1e-8));
        }
    }

    KernelConfig one{1.0, 0.01, 1.0 / 365.0};
    const auto wavy = [](double u) { return std::sin(u) + 2.0; };
    CHECK(quadrature_moving_average(wavy, 0.8, one, 1e-9) == wavy(0.8));
}

TEST_CASE("grid refinement drives relative_level toward the quadrature oracle") {
    const KernelConfig base{0.75, 0.01, 0.0};
    for (auto f : {sine_path, quad_path}) {
        const double oracle = quadrature_relative_level(f, 1.0, base, 1e-10);
        double prev = 0.0;
        for (int halvings = 0; halvings < 3; ++halvings) {
            KernelConfig cfg = base;
            cfg.dt = 1.0 / (3650.0 * (1 << halvings));
            const auto n = static_cast<std::size_t>(std::llround(1.0 / cfg.dt));
            const std::vector<double> path = sample_path(f, 1.0, cfg.dt);
            const KernelWeights weights(cfg, n);
            const double err = std::abs(relative_level(path, n, weights) - oracle);
            if (halvings > 0) {
                CHECK(err <= prev * 1.05);
            }
            prev = err;
        }
    }
}

TEST_CASE("shift covariance: adding c to the path shifts the moving average by c * mass") {
    const KernelConfig cfg{0.8, 0.015, 1.0 / 365.0};
    std::vector<double> path = {0.4, 0.9, 0.1, -0.3, 0.8, 0.85, 0.2};
    const std::size_t i = path.size() - 1;
    const KernelWeights weights(cfg, i);
    const double before = moving_average(path, i, weights);
    const double r_before = relative_level(path, i, weights);
    const double shift = 3.7;
    for (double& v : path) {
        v += shift;
    }
    const double after = moving_average(path, i, weights);
    const double r_after = relative_level(path, i, weights);
    CHECK(after - before == Catch::Approx(shift * discrete_kernel_mass(i, weights)).epsilon(1e-12));
    CHECK(r_after == Catch::Approx(r_before).margin(1e-12));  // exact cancellation
}

TEST_CASE("kernel_grid matches single evaluations") {
    const KernelConfig cfg{1.1, 0.01, 1.0 / 365.0};
    const std::vector<double> path = {0.5, 0.52, 0.49, 0.6, 0.61, 0.58};
    const KernelWeights weights(cfg, path.size() - 1);
    const KernelGrid grid = kernel_grid(path, weights);
    for (std::size_t i = 0; i < path.size(); ++i) {
        CHECK(grid.moving_average[i] == Catch::Approx(moving_average(path, i, weights)).epsilon(1e-13));
        CHECK(grid.relative_level[i] == Catch::Approx(relative_level(path, i, weights)).margin(1e-13));
    }
}

TEST_CASE("kernel index and config validation") {
    const KernelConfig cfg{0.75, 0.01, 1.0 / 365.0};
    KernelState state{{1.0, 2.0}};
    CHECK_THROWS_AS(moving_average(state, 2, cfg), std::out_of_range);
    CHECK_THROWS_AS(relative_level(state, 5, cfg), std::out_of_range);
    CHECK_THROWS(KernelConfig{0.4, 0.01, 1.0 / 365.0}.validate());
    CHECK_THROWS(KernelConfig{0.75, 0.0, 1.0 / 365.0}.validate());
    CHECK_THROWS(KernelConfig{0.75, 0.01, 0.0}.validate());
}
