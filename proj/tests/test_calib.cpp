#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "helpers.hpp"
#include "pdvol/calib.hpp"

using namespace pdvol;
using pdvol::testing::make_synthetic;
using pdvol::testing::stable_theta;
using pdvol::testing::synthetic_p_daily;

namespace {

/// Full transition log-likelihood, written independently of the library's
/// rescaled form: per-step Gaussian log density of the observed increment.
double full_log_likelihood(const ModelParams& theta, const PriceObjectiveInput& input) {
    const std::size_t n = input.log_prices.size();
    const std::vector<double>& s = input.log_prices.values;
    std::vector<double> ma(n, 0.0);
    if (theta.v2 != 0.0) {
        const KernelWeights w(KernelConfig{theta.alpha, input.delta, input.dt}, n - 1);
        ma = kernel_grid(s, w).moving_average;
    }
    long double total = 0.0L;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double xp = input.x_daily.values[j] + input.p_daily.values[j];
        const double xpc = std::clamp(xp, 1e-6, 1.0);
        const double sigma = theta.v0 + theta.v1 / (xpc * (1.0 - xpc) + input.delta) +
                             theta.v2 * std::sqrt(std::abs(ma[j] - s[0]) + input.delta);
        const double drift = (theta.r - 0.5 * sigma * sigma - theta.lambda * s[j]) * input.dt;
        const double dev = s[j + 1] - s[j] - drift;
        total += -0.5L * std::log(2.0 * M_PI * input.dt * sigma * sigma) -
                 dev * dev / (2.0 * input.dt * sigma * sigma);
    }
    return static_cast<double>(total);
}

PriceObjectiveInput two_point_input(double s0, double s1, double dt) {
    PriceObjectiveInput in;
    in.log_prices.kind = DailyKind::log_price;
    in.log_prices.values = {s0, s1};
    in.p_daily.values = {0.5, 0.5};
    in.x_daily.values = {0.0, 0.0};
    in.delta = 1e-2;
    in.dt = dt;
    return in;
}

}  // namespace

TEST_CASE("rescaled log-likelihood hand value: flat increment, unit sigma") {
    // sigma = 1 via V0 = 1, drift = (0.5 - 0.5) * 1 = 0, deviation 0 => l = 0
    ModelParams theta;
    theta.alpha = 1.0;
    theta.r = 0.5;
    theta.v0 = 1.0;
    const PriceObjectiveInput in = two_point_input(2.0, 2.0, 1.0);
    CHECK(rescaled_log_likelihood(theta, in) == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("perfect drift match leaves only the log-sigma sum") {
    ModelParams theta = stable_theta();
    const std::size_t n = 120;
    const DailySeries p = synthetic_p_daily(n);
    PriceObjectiveInput in;
    in.log_prices.kind = DailyKind::log_price;
    in.p_daily = p;
    in.x_daily.values.assign(n, 0.02);
    in.delta = theta.delta;
    in.dt = theta.dt;

    // build the path so each increment equals its drift exactly
    std::vector<double>& s = in.log_prices.values;
    s.push_back(0.9);
    double expected = 0.0;
    const KernelConfig kc{theta.alpha, theta.delta, theta.dt};
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const KernelWeights w(kc, j);
        const double ma = moving_average(s, j, w);
        const double xp = 0.02 + p.values[j];
        const double sigma = theta.v0 + theta.v1 / (xp * (1.0 - xp) + theta.delta) +
                             theta.v2 * std::sqrt(std::abs(ma - s[0]) + theta.delta);
        expected -= std::log(sigma);
        s.push_back(s.back() + (theta.r - 0.5 * sigma * sigma - theta.lambda * s.back()) * theta.dt);
    }
    CHECK(rescaled_log_likelihood(theta, in) == Catch::Approx(expected).margin(1e-9));
}

TEST_CASE("rescaled and full likelihood differ by exactly (n/2) ln(2 pi dt)") {
    const auto data = make_synthetic(stable_theta(), StorageParams{{12.0}, {15.0}, 0}, 200,
                                     std::log(2.4), 0.03, 99);
    const std::size_t increments = data.input.log_prices.size() - 1;
    const double constant = -0.5 * static_cast<double>(increments) *
                            std::log(2.0 * M_PI * data.input.dt);
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        ModelParams theta;
        theta.alpha = rng.uniform(0.55, 1.45);
        theta.r = rng.uniform(0.0, 6.0);
        theta.lambda = rng.uniform(0.0, 6.0);
        theta.v0 = rng.uniform(0.05, 2.0);
        theta.v1 = rng.uniform(0.0, 0.5);
        theta.v2 = rng.uniform(0.0, 2.0);
        theta.delta = data.input.delta;
        theta.dt = data.input.dt;
        const double rescaled = rescaled_log_likelihood(theta, data.input);
        const double full = full_log_likelihood(theta, data.input);
        CHECK(std::abs(full - rescaled - constant) < 1e-10 * std::max(1.0, std::abs(full)));
        CHECK(std::abs(full - rescaled - constant) < 1e-8);
    }
}

TEST_CASE("degenerate all-zero volatility components are rejected") {
    ModelParams theta;
    theta.alpha = 0.9;
    const PriceObjectiveInput in = two_point_input(1.0, 1.1, 1.0 / 365.0);
    CHECK_THROWS(rescaled_log_likelihood(theta, in));
}

TEST_CASE("in-sample likelihood peaks near the generating parameters") {
    // MLE consistency, small version: l(theta*) beats +-10% coordinate bumps
    const ModelParams theta = stable_theta();
    const StorageParams gammas{{14.0}, {18.0}, 0};
    int wins = 0, total = 0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto data = make_synthetic(theta, gammas, 1400, std::log(2.4), 0.03, seed);
        const double at_star = rescaled_log_likelihood(theta, data.input);
        for (int coord = 0; coord < 6; ++coord) {
            for (const double bump : {0.9, 1.1}) {
                ModelParams pert = theta;
                double* fields[] = {&pert.alpha, &pert.r, &pert.lambda,
                                    &pert.v0,    &pert.v1, &pert.v2};
                *fields[coord] *= bump;
                ++total;
                if (at_star >= rescaled_log_likelihood(pert, data.input)) {
                    ++wins;
                }
            }
        }
    }
    CHECK(wins >= (total * 8) / 10);
}

TEST_CASE("storage MSE properties") {
    const ModelParams theta = stable_theta();

    SECTION("zero gammas against a flat observation give zero MSE") {
        const auto data = make_synthetic(theta, StorageParams{}, 140, std::log(2.0), 0.05, 3);
        WeeklySeries flat = data.x_weekly;
        for (double& v : flat.values) {
            v = 0.05;
        }
        CHECK(storage_mse(StorageParams{}, theta.alpha, theta.delta, data.input, flat, 0.05) ==
              Catch::Approx(0.0).margin(1e-24));
    }
    SECTION("constant prices make the MSE independent of gamma") {
        PriceObjectiveInput in;
        in.log_prices.kind = DailyKind::log_price;
        in.log_prices.values.assign(70, 1.1);
        in.p_daily = synthetic_p_daily(70);
        in.x_daily.values.assign(70, 0.0);
        WeeklySeries obs;
        obs.values.assign(10, 0.02);
        const double a = storage_mse(StorageParams{{5.0}, {7.0}, 0}, 0.8, 1e-2, in, obs, 0.0);
        const double b = storage_mse(StorageParams{{-50.0}, {90.0}, 0}, 0.8, 1e-2, in, obs, 0.0);
        CHECK(a == b);
        CHECK(a == Catch::Approx(10 * 0.02 * 0.02).epsilon(1e-12));
    }
    SECTION("generated data has zero MSE at the true gammas and larger nearby") {
        const StorageParams star{{16.0}, {22.0}, 0};
        const auto data = make_synthetic(theta, star, 280, std::log(2.4), 0.04, 17);
        const double at_star =
            storage_mse(star, theta.alpha, theta.delta, data.input, data.x_weekly, 0.04);
        CHECK(at_star < 1e-20);
        for (const double dg : {-4.0, 4.0}) {
            CHECK(storage_mse(StorageParams{{16.0 + dg}, {22.0}, 0}, theta.alpha, theta.delta,
                              data.input, data.x_weekly, 0.04) > at_star);
            CHECK(storage_mse(StorageParams{{16.0}, {22.0 + dg}, 0}, theta.alpha, theta.delta,
                              data.input, data.x_weekly, 0.04) > at_star);
        }
    }
}

TEST_CASE("calibrate_price with degenerate bounds returns that point") {
    const auto data = make_synthetic(stable_theta(), StorageParams{{10.0}, {10.0}, 0}, 100,
                                     std::log(2.2), 0.02, 7);
    CboConfig cfg;
    cfg.a = 10.0;
    cfg.b = 10.0;
    cfg.sigma = 1.0;
    cfg.n_particles = 4;
    cfg.n_steps = 3;
    cfg.dt = 0.01;
    const ModelParams theta = stable_theta();
    cfg.bounds = {{theta.alpha, theta.alpha}, {theta.r, theta.r},   {theta.lambda, theta.lambda},
                  {theta.v0, theta.v0},       {theta.v1, theta.v1}, {theta.v2, theta.v2}};
    const PriceCalibration cal = calibrate_price(data.input, cfg);
    CHECK(cal.params.alpha == theta.alpha);
    CHECK(cal.params.v2 == theta.v2);
    CHECK(cal.objective_value ==
          Catch::Approx(rescaled_log_likelihood(theta, data.input)).epsilon(1e-12));
}

TEST_CASE("calibrate_storage shapes: full horizon scalar, 14-day windows over 280 days") {
    const ModelParams theta = stable_theta();
    const StorageParams star{{15.0}, {20.0}, 0};
    const auto data = make_synthetic(theta, star, 280, std::log(2.4), 0.04, 23);

    CboConfig cfg;
    cfg.a = 1500.0;
    cfg.b = 1500.0;
    cfg.sigma = 30.0;
    cfg.n_particles = 80;
    cfg.n_steps = 300;
    cfg.dt = 1e-3;
    cfg.seed = 5;
    cfg.bounds = {{-100.0, 100.0}, {-100.0, 100.0}};

    SECTION("full horizon") {
        CboConfig full = cfg;
        full.n_steps = 600;
        const StorageCalibration cal = calibrate_storage(theta.alpha, theta.delta, 0, data.input,
                                                         data.x_weekly, 0.04, full);
        REQUIRE(cal.params.gamma1.size() == 1);
        CHECK(cal.mse < 1e-5);
        CHECK(std::abs(cal.params.gamma1[0] - 15.0) < 2.0);
        CHECK(std::abs(cal.params.gamma2[0] - 20.0) < 2.0);
    }
    SECTION("14-day windows give ceil(280/14) = 20 pairs") {
        CboConfig fast = cfg;
        fast.n_particles = 40;
        fast.n_steps = 150;
        const StorageCalibration cal = calibrate_storage(theta.alpha, theta.delta, 14, data.input,
                                                         data.x_weekly, 0.04, fast);
        CHECK(cal.params.gamma1.size() == 20);
        CHECK(cal.params.gamma2.size() == 20);
        CHECK(cal.params.window_days == 14);
        CHECK(cal.mse < 1e-4);
    }
}

TEST_CASE("calibration determinism under seed") {
    const auto data = make_synthetic(stable_theta(), StorageParams{{12.0}, {9.0}, 0}, 120,
                                     std::log(2.1), 0.03, 41);
    CboConfig cfg;
    cfg.a = 1500.0;
    cfg.b = 1500.0;
    cfg.sigma = 30.0;
    cfg.n_particles = 30;
    cfg.n_steps = 80;
    cfg.dt = 1e-3;
    cfg.seed = 12;
    cfg.bounds = {{-60.0, 60.0}, {-60.0, 60.0}};
    const StorageCalibration a =
        calibrate_storage(0.8734, 1e-2, 0, data.input, data.x_weekly, 0.03, cfg);
    const StorageCalibration b =
        calibrate_storage(0.8734, 1e-2, 0, data.input, data.x_weekly, 0.03, cfg);
    CHECK(a.params.gamma1 == b.params.gamma1);
    CHECK(a.params.gamma2 == b.params.gamma2);
    CHECK(a.mse == b.mse);
}

TEST_CASE("window independence: early windows ignore later data changes") {
    const ModelParams theta = stable_theta();
    const StorageParams star{{15.0}, {20.0}, 0};
    auto data = make_synthetic(theta, star, 140, std::log(2.4), 0.04, 29);

    CboConfig cfg;
    cfg.a = 1500.0;
    cfg.b = 1500.0;
    cfg.sigma = 30.0;
    cfg.n_particles = 30;
    cfg.n_steps = 100;
    cfg.dt = 1e-3;
    cfg.seed = 3;
    cfg.bounds = {{-60.0, 60.0}, {-60.0, 60.0}};

    const StorageCalibration before =
        calibrate_storage(theta.alpha, theta.delta, 70, data.input, data.x_weekly, 0.04, cfg);
    // perturb the last weekly observations only (window 1 territory)
    for (std::size_t i = 15; i < data.x_weekly.size(); ++i) {
        data.x_weekly.values[i] += 0.05;
    }
    const StorageCalibration after =
        calibrate_storage(theta.alpha, theta.delta, 70, data.input, data.x_weekly, 0.04, cfg);
    CHECK(before.params.gamma1[0] == after.params.gamma1[0]);
    CHECK(before.params.gamma2[0] == after.params.gamma2[0]);
}

TEST_CASE("calibration report json carries the table layout") {
    CalibrationReport report;
    report.theta_hat = stable_theta();
    report.objective_value = 123.4;
    report.window_start = Date{2019, 11, 1};
    report.window_end = Date{2020, 3, 31};
    report.storage_hat = StorageParams{{1.0, 2.0}, {3.0, 4.0}, 70};
    report.mse = 0.5;
    const auto j = report.to_json();
    CHECK(j.at("price").at("alpha").get<double>() == 0.8734);
    CHECK(j.at("storage").at("windows").size() == 2);
    CHECK(j.at("interval").at("start").get<std::string>() == "2019-11-01");
}
