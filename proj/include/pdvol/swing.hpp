#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdvol/model.hpp"
#include "pdvol/nn.hpp"
#include "pdvol/parallel.hpp"

namespace pdvol {

/// Put-type swing contract: L rights over the exercise dates, at most
/// local_cap per date, q(K-S)^+ per exercised right, terminal penalty
/// -A (K-S(T))^+ Q(T) on unused rights.
struct SwingContract {
    double strike = 1.0;                    // K > 0
    int global_rights = 1;                  // L
    int local_cap = 1;                      // L~
    std::vector<std::size_t> exercise_days; // grid indices tau_0 < ... < tau_M
    std::size_t maturity_day = 0;           // grid index of T, > tau_M
    double penalty_scale = 0.0;             // A >= 0
    double discount_rate = 0.0;             // mu >= 0
    double dt = 1.0 / 365.0;

    void validate() const {
        if (!(strike > 0.0)) {
            throw std::invalid_argument("SwingContract: strike must be positive");
        }
        if (local_cap < 1 || global_rights < local_cap) {
            throw std::invalid_argument("SwingContract: need local_cap >= 1 and L >= local_cap");
        }
        if (exercise_days.empty()) {
            throw std::invalid_argument("SwingContract: no exercise dates");
        }
        const std::size_t m_plus_1 = exercise_days.size();
        if (static_cast<std::size_t>(global_rights) >
            m_plus_1 * static_cast<std::size_t>(local_cap)) {
            throw std::invalid_argument("SwingContract: L exceeds (M+1) * local_cap");
        }
        for (std::size_t i = 1; i < exercise_days.size(); ++i) {
            if (exercise_days[i] <= exercise_days[i - 1]) {
                throw std::invalid_argument("SwingContract: exercise dates must increase");
            }
        }
        if (maturity_day <= exercise_days.back()) {
            throw std::invalid_argument("SwingContract: maturity must follow the last exercise date");
        }
        if (penalty_scale < 0.0 || discount_rate < 0.0) {
            throw std::invalid_argument("SwingContract: penalty and discount must be >= 0");
        }
    }

    std::size_t n_dates() const { return exercise_days.size(); }  // M + 1

    nlohmann::json to_json() const {
        return nlohmann::json{{"strike", strike},
                              {"global_rights", global_rights},
                              {"local_cap", local_cap},
                              {"exercise_days", exercise_days},
                              {"maturity_day", maturity_day},
                              {"penalty_scale", penalty_scale},
                              {"discount_rate", discount_rate},
                              {"dt", dt}};
    }

    static SwingContract from_json(const nlohmann::json& j) {
        SwingContract c;
        c.strike = j.at("strike").get<double>();
        c.global_rights = j.at("global_rights").get<int>();
        c.local_cap = j.at("local_cap").get<int>();
        c.exercise_days = j.at("exercise_days").get<std::vector<std::size_t>>();
        c.maturity_day = j.at("maturity_day").get<std::size_t>();
        c.penalty_scale = j.value("penalty_scale", 0.0);
        c.discount_rate = j.value("discount_rate", 0.0);
        c.dt = j.value("dt", 1.0 / 365.0);
        return c;
    }
};

/// Phi(tau_i, s, l, q) = q (K - s)^+ 1{l >= q}.
inline double payoff(double s, int rights_remaining, int q, double strike) {
    if (rights_remaining < q) {
        return 0.0;
    }
    return q * std::max(strike - s, 0.0);
}

/// G(S(T), Q(T)) = -A (K - S(T))^+ Q(T).
inline double penalty(double s_maturity, int rights_left, double penalty_scale, double strike) {
    return -penalty_scale * std::max(strike - s_maturity, 0.0) * rights_left;
}

/// Rights update per the indicator convention: no deduction when l < q.
inline int rights_update(int l, int q) { return l >= q ? l - q : l; }

/// V(tau_i, path k, rights l) for i = 0..M+1 (i = M+1 is the terminal layer).
struct ValueGrid {
    std::size_t n_layers = 0;  // M + 2
    std::size_t n_paths = 0;
    int n_rights = 0;  // L + 1 states
    std::vector<double> values;

    double& at(std::size_t layer, std::size_t path, int rights) {
        return values[(layer * n_paths + path) * (n_rights) + rights];
    }
    double at(std::size_t layer, std::size_t path, int rights) const {
        return values[(layer * n_paths + path) * (n_rights) + rights];
    }
};

struct SwingPricerConfig {
    int hidden_width = 10;
    nn::Activation activation = nn::Activation::sigmoid;
    nn::TrainMethod method = nn::TrainMethod::lm;
    nn::TrainConfig train;
    std::size_t history_stride = 1;  // feed every k-th grid point to the nets
    unsigned n_workers = 0;
};

struct SwingDiagnostics {
    // exercise_fraction[{i, l}][q] = fraction of paths taking q at date i with l rights
    std::map<std::pair<std::size_t, int>, std::vector<double>> exercise_fraction;
    std::vector<double> final_train_mse;  // one per trained network
    double regression_error_total = 0.0;  // sum over (i, j) of D * train MSE
};

struct SwingPriceResult {
    double price = 0.0;
    ValueGrid grid;
    std::map<std::pair<std::size_t, int>, nn::TrainResult> bank;  // (date i, rights j) -> net
    SwingDiagnostics diagnostics;
};

namespace detail {

/// History matrix for regression at exercise date index i: price path values
/// at grid days 0..tau_i (optionally strided), one row per path.
inline Eigen::MatrixXd history_matrix(const PathEnsemble& ens, std::size_t day,
                                      std::size_t stride) {
    const std::size_t cols = day / stride + 1;
    Eigen::MatrixXd X(ens.n_paths, cols);
    for (std::size_t k = 0; k < ens.n_paths; ++k) {
        for (std::size_t c = 0; c < cols; ++c) {
            X(k, c) = std::exp(ens.log_price(k, std::min(c * stride, day)));
        }
    }
    // always include the date itself as the last column
    for (std::size_t k = 0; k < ens.n_paths; ++k) {
        X(k, cols - 1) = std::exp(ens.log_price(k, day));
    }
    return X;
}

}  // namespace detail

/// Backward dynamic-programming swing pricer. For each exercise date i (from
/// M down to 1) and rights state j, a feed-forward network regresses the next
/// layer's values on the price history up to tau_i; the date-i values then
/// maximize immediate payoff plus discounted continuation over q, smallest q
/// winning ties. The time-0 price averages the tau_1 values over paths.
inline SwingPriceResult price_backward(const PathEnsemble& ens, const SwingContract& contract,
                                       const SwingPricerConfig& cfg, std::uint64_t seed) {
    contract.validate();
    if (contract.maturity_day > ens.n_steps) {
        throw std::invalid_argument("price_backward: ensemble does not cover maturity");
    }
    if (ens.n_paths < 2) {
        throw std::invalid_argument("price_backward: need at least 2 paths");
    }
    const std::size_t n_dates = contract.n_dates();  // M + 1
    const std::size_t m_index = n_dates - 1;         // M
    const int n_rights = contract.global_rights + 1;
    const double mu = contract.discount_rate;
    const double dt = contract.dt;

    SwingPriceResult out;
    out.grid.n_layers = n_dates + 1;
    out.grid.n_paths = ens.n_paths;
    out.grid.n_rights = n_rights;
    out.grid.values.assign(out.grid.n_layers * ens.n_paths * n_rights, 0.0);

    // terminal layer: V(tau_{M+1}, k, l) = G(S_T, l)
    for (std::size_t k = 0; k < ens.n_paths; ++k) {
        const double s_t = ens.price(k, contract.maturity_day);
        for (int l = 0; l < n_rights; ++l) {
            out.grid.at(n_dates, k, l) = penalty(s_t, l, contract.penalty_scale, contract.strike);
        }
    }

    // backward over exercise dates M..1; date 0 is the plain average below
    for (std::size_t i = m_index; i >= 1; --i) {
        const std::size_t day = contract.exercise_days[i];
        const double next_time = i == m_index ? contract.maturity_day * dt
                                              : contract.exercise_days[i + 1] * dt;
        const double disc = std::exp(-mu * (next_time - day * dt));
        const Eigen::MatrixXd X = detail::history_matrix(ens, day, cfg.history_stride);

        // continuation networks Theta^{i,j} for every reachable rights state
        std::vector<Eigen::VectorXd> continuation(n_rights);
        std::vector<double> net_mse(n_rights, 0.0);
        std::vector<nn::TrainResult> trained(n_rights);
        parallel_for(
            static_cast<std::size_t>(n_rights),
            [&](std::size_t j) {
                Eigen::VectorXd targets(ens.n_paths);
                for (std::size_t k = 0; k < ens.n_paths; ++k) {
                    targets(k) = out.grid.at(i + 1, k, static_cast<int>(j));
                }
                nn::NetworkShape shape;
                shape.d0 = static_cast<int>(X.cols());
                shape.m1 = cfg.hidden_width;
                shape.d1 = 1;
                shape.activation = cfg.activation;
                nn::TrainConfig tc = cfg.train;
                tc.seed = seed ^ (0x9E37ULL * (i * 64 + j + 1));
                const nn::NetworkParams net0 = nn::init(shape, tc.seed);
                trained[j] = nn::train(net0, X, targets, cfg.method, tc);
                continuation[j] = nn::predict_batch(trained[j], X);
                net_mse[j] = trained[j].history.empty()
                                 ? 0.0
                                 : trained[j].history[static_cast<std::size_t>(
                                       trained[j].best_epoch)].train_mse;
            },
            cfg.n_workers);
        for (int j = 0; j < n_rights; ++j) {
            out.bank.emplace(std::make_pair(i, j), std::move(trained[j]));
            out.diagnostics.final_train_mse.push_back(net_mse[j]);
            out.diagnostics.regression_error_total += net_mse[j] * static_cast<double>(ens.n_paths);
        }

        // date-i values: max over q of payoff + discounted continuation
        std::vector<std::vector<std::size_t>> q_counts(n_rights,
                                                       std::vector<std::size_t>(contract.local_cap + 1, 0));
        for (std::size_t k = 0; k < ens.n_paths; ++k) {
            const double s = ens.price(k, day);
            for (int l = 0; l < n_rights; ++l) {
                const int q_max = std::min(l, contract.local_cap);
                double best = -std::numeric_limits<double>::infinity();
                int best_q = 0;
                for (int q = 0; q <= q_max; ++q) {
                    const double value =
                        payoff(s, l, q, contract.strike) + disc * continuation[l - q](k);
                    if (value > best) {  // strict: smallest q wins ties
                        best = value;
                        best_q = q;
                    }
                }
                if (!std::isfinite(best)) {
                    throw std::runtime_error("price_backward: non-finite value at date " +
                                             std::to_string(i));
                }
                out.grid.at(i, k, l) = best;
                ++q_counts[l][best_q];
            }
        }
        for (int l = 0; l < n_rights; ++l) {
            std::vector<double> fr(q_counts[l].size());
            for (std::size_t q = 0; q < fr.size(); ++q) {
                fr[q] = static_cast<double>(q_counts[l][q]) / static_cast<double>(ens.n_paths);
            }
            out.diagnostics.exercise_fraction[{i, l}] = fr;
        }
    }

    // date 0: F_{tau_0} is trivial, continuation is the plain ensemble average
    {
        const std::size_t day0 = contract.exercise_days[0];
        const double next_time =
            n_dates > 1 ? contract.exercise_days[1] * dt : contract.maturity_day * dt;
        const double disc = std::exp(-mu * (next_time - day0 * dt));
        const std::size_t next_layer = 1;
        const double s0 = ens.price(0, day0);
        const int big_l = contract.global_rights;
        double best = -std::numeric_limits<double>::infinity();
        int best_q = 0;
        for (int q = 0; q <= std::min(big_l, contract.local_cap); ++q) {
            double mean = 0.0;
            for (std::size_t k = 0; k < ens.n_paths; ++k) {
                mean += out.grid.at(next_layer, k, big_l - q);
            }
            mean /= static_cast<double>(ens.n_paths);
            const double value = payoff(s0, big_l, q, contract.strike) + disc * mean;
            if (value > best) {
                best = value;
                best_q = q;
            }
        }
        out.price = best;
        for (std::size_t k = 0; k < ens.n_paths; ++k) {
            out.grid.at(0, k, big_l) = best;
        }
        std::vector<double> fr(contract.local_cap + 1, 0.0);
        fr[best_q] = 1.0;
        out.diagnostics.exercise_fraction[{0, big_l}] = fr;
    }
    return out;
}

/// Exact bounds on the empirical ensemble for tiny instances (M <= 2, L <= 2):
/// the best open-loop (deterministic schedule) value is a lower bound of the
/// adapted optimum, per-path optimal schedules give the perfect-foresight
/// upper bound.
struct TinyOracleResult {
    double open_loop = 0.0;
    double foresight = 0.0;
    double open_loop_se = 0.0;
    double foresight_se = 0.0;
};

inline TinyOracleResult oracle_price_tiny(const PathEnsemble& ens, const SwingContract& contract) {
    contract.validate();
    const std::size_t n_dates = contract.n_dates();
    if (n_dates > 3 || contract.global_rights > 2) {
        throw std::invalid_argument("oracle_price_tiny: instance too large (need M <= 2, L <= 2)");
    }

    // enumerate all schedules q_0..q_M in {0..local_cap}
    std::vector<std::vector<int>> schedules;
    std::vector<int> current(n_dates, 0);
    const int base = contract.local_cap + 1;
    const std::size_t total = static_cast<std::size_t>(std::pow(base, n_dates));
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t rem = code;
        for (std::size_t i = 0; i < n_dates; ++i) {
            current[i] = static_cast<int>(rem % base);
            rem /= base;
        }
        schedules.push_back(current);
    }

    const double mu = contract.discount_rate;
    const double dt = contract.dt;
    const auto schedule_value = [&](const std::vector<int>& q, std::size_t k) {
        int rights = contract.global_rights;
        double value = 0.0;
        for (std::size_t i = 0; i < n_dates; ++i) {
            const double s = ens.price(k, contract.exercise_days[i]);
            const double disc = std::exp(-mu * (contract.exercise_days[i] * dt -
                                                contract.exercise_days[0] * dt));
            value += disc * payoff(s, rights, q[i], contract.strike);
            rights = rights_update(rights, q[i]);
        }
        const double disc_t = std::exp(-mu * (contract.maturity_day * dt -
                                              contract.exercise_days[0] * dt));
        value += disc_t * penalty(ens.price(k, contract.maturity_day), rights,
                                  contract.penalty_scale, contract.strike);
        return value;
    };

    const std::size_t d = ens.n_paths;
    // open loop: best schedule of the ensemble average
    double best_mean = -std::numeric_limits<double>::infinity();
    double best_var = 0.0;
    for (const auto& q : schedules) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
            const double v = schedule_value(q, k);
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / d;
        if (mean > best_mean) {
            best_mean = mean;
            best_var = std::max(0.0, sum2 / d - mean * mean);
        }
    }
    // foresight: per-path best schedule
    double fsum = 0.0, fsum2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& q : schedules) {
            best = std::max(best, schedule_value(q, k));
        }
        fsum += best;
        fsum2 += best * best;
    }
    TinyOracleResult out;
    out.open_loop = best_mean;
    out.open_loop_se = std::sqrt(best_var / static_cast<double>(d));
    out.foresight = fsum / d;
    out.foresight_se =
        std::sqrt(std::max(0.0, fsum2 / d - out.foresight * out.foresight) / static_cast<double>(d));
    return out;
}

inline nlohmann::json pricing_report_json(const SwingPriceResult& res, const SwingContract& contract,
                                          std::uint64_t seed) {
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& [key, fractions] : res.diagnostics.exercise_fraction) {
        stats.push_back({{"date_index", key.first}, {"rights", key.second}, {"fraction_by_q", fractions}});
    }
    return nlohmann::json{{"price", res.price},
                          {"contract", contract.to_json()},
                          {"seed", seed},
                          {"exercise_stats", stats},
                          {"regression_final_train_mse", res.diagnostics.final_train_mse}};
}

}  // namespace pdvol
