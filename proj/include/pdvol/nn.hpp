#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdvol/rng.hpp"

namespace pdvol::nn {

enum class Activation { sigmoid, relu };

inline std::string to_string(Activation a) { return a == Activation::sigmoid ? "sigmoid" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "sigmoid") {
        return Activation::sigmoid;
    }
    if (s == "relu") {
        return Activation::relu;
    }
    throw std::invalid_argument("unknown activation: " + s);
}

/// One-hidden-layer feed-forward shape; the output layer activation is the
/// identity.
struct NetworkShape {
    int d0 = 1;  // input dim
    int m1 = 10; // hidden width
    int d1 = 1;  // output dim
    Activation activation = Activation::sigmoid;

    void validate() const {
        if (d0 < 1 || m1 < 1 || d1 < 1) {
            throw std::invalid_argument("NetworkShape: all dims must be >= 1");
        }
    }

    /// m1 (d0+1) + (m1+1) d1
    int param_count() const { return m1 * (d0 + 1) + (m1 + 1) * d1; }
};

struct NetworkParams {
    NetworkShape shape;
    Eigen::MatrixXd w1;  // m1 x d0
    Eigen::VectorXd b1;  // m1
    Eigen::MatrixXd w2;  // d1 x m1
    Eigen::VectorXd b2;  // d1

    /// Flat layout: w1 (column-major), b1, w2 (column-major), b2.
    Eigen::VectorXd flatten() const {
        Eigen::VectorXd out(shape.param_count());
        Eigen::Index at = 0;
        out.segment(at, w1.size()) = Eigen::Map<const Eigen::VectorXd>(w1.data(), w1.size());
        at += w1.size();
        out.segment(at, b1.size()) = b1;
        at += b1.size();
        out.segment(at, w2.size()) = Eigen::Map<const Eigen::VectorXd>(w2.data(), w2.size());
        at += w2.size();
        out.segment(at, b2.size()) = b2;
        return out;
    }

    void unflatten(const Eigen::VectorXd& p) {
        Eigen::Index at = 0;
        Eigen::Map<Eigen::VectorXd>(w1.data(), w1.size()) = p.segment(at, w1.size());
        at += w1.size();
        b1 = p.segment(at, b1.size());
        at += b1.size();
        Eigen::Map<Eigen::VectorXd>(w2.data(), w2.size()) = p.segment(at, w2.size());
        at += w2.size();
        b2 = p.segment(at, b2.size());
    }
};

/// Glorot-uniform weights, zero biases, deterministic per seed.
inline NetworkParams init(const NetworkShape& shape, std::uint64_t seed) {
    shape.validate();
    NetworkParams net;
    net.shape = shape;
    net.w1.resize(shape.m1, shape.d0);
    net.b1 = Eigen::VectorXd::Zero(shape.m1);
    net.w2.resize(shape.d1, shape.m1);
    net.b2 = Eigen::VectorXd::Zero(shape.d1);
    Rng rng(seed);
    const double s1 = std::sqrt(6.0 / (shape.d0 + shape.m1));
    for (Eigen::Index i = 0; i < net.w1.size(); ++i) {
        net.w1.data()[i] = rng.uniform(-s1, s1);
    }
    const double s2 = std::sqrt(6.0 / (shape.m1 + shape.d1));
    for (Eigen::Index i = 0; i < net.w2.size(); ++i) {
        net.w2.data()[i] = rng.uniform(-s2, s2);
    }
    return net;
}

namespace detail {

inline Eigen::ArrayXXd activate(const Eigen::ArrayXXd& z, Activation a) {
    if (a == Activation::sigmoid) {
        return 1.0 / (1.0 + (-z).exp());
    }
    return z.max(0.0);
}

/// Derivative through the activation; ReLU kinks use subgradient 0.
inline Eigen::ArrayXXd activate_prime(const Eigen::ArrayXXd& z, Activation a) {
    if (a == Activation::sigmoid) {
        const Eigen::ArrayXXd s = activate(z, a);
        return s * (1.0 - s);
    }
    return (z > 0.0).cast<double>();
}

}  // namespace detail

inline Eigen::VectorXd forward(const NetworkParams& net, const Eigen::VectorXd& x) {
    const Eigen::ArrayXd z = (net.w1 * x + net.b1).array();
    const Eigen::VectorXd h = detail::activate(z, net.shape.activation).matrix();
    return net.w2 * h + net.b2;
}

/// Batch forward: X is n x d0, result n x d1.
inline Eigen::MatrixXd forward_batch(const NetworkParams& net, const Eigen::MatrixXd& X) {
    Eigen::MatrixXd z = X * net.w1.transpose();
    z.rowwise() += net.b1.transpose();
    const Eigen::MatrixXd h = detail::activate(z.array(), net.shape.activation).matrix();
    Eigen::MatrixXd y = h * net.w2.transpose();
    y.rowwise() += net.b2.transpose();
    return y;
}

/// Gradient of the scalar output w.r.t. every parameter, in flatten() order.
/// Requires d1 == 1.
inline Eigen::VectorXd jacobian(const NetworkParams& net, const Eigen::VectorXd& x) {
    if (net.shape.d1 != 1) {
        throw std::invalid_argument("jacobian: output dim must be 1");
    }
    const int d0 = net.shape.d0;
    const int m1 = net.shape.m1;
    const Eigen::ArrayXd z = (net.w1 * x + net.b1).array();
    const Eigen::ArrayXd h = detail::activate(z, net.shape.activation);
    const Eigen::ArrayXd hp = detail::activate_prime(z, net.shape.activation);
    const Eigen::ArrayXd a = net.w2.row(0).transpose().array() * hp;  // dy/db1

    Eigen::VectorXd g(net.shape.param_count());
    // w1 block, column-major: entry (j, i) at index i*m1 + j
    for (int i = 0; i < d0; ++i) {
        g.segment(static_cast<Eigen::Index>(i) * m1, m1) = (a * x(i)).matrix();
    }
    Eigen::Index at = static_cast<Eigen::Index>(d0) * m1;
    g.segment(at, m1) = a.matrix();
    at += m1;
    g.segment(at, m1) = h.matrix();
    at += m1;
    g(at) = 1.0;
    return g;
}

/// Per-feature affine map fitted on the training split.
struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& X) {
        Standardizer s;
        s.mean = X.colwise().mean();
        Eigen::MatrixXd centered = X.rowwise() - s.mean.transpose();
        s.scale = (centered.array().square().colwise().mean()).sqrt();
        for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
            if (!(s.scale(i) > 1e-12)) {
                s.scale(i) = 1.0;
            }
        }
        return s;
    }

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const {
        return (X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }

    Eigen::VectorXd apply_one(const Eigen::VectorXd& x) const {
        return ((x - mean).array() / scale.array()).matrix();
    }
};

enum class TrainMethod { lm, scg };

struct TrainConfig {
    int max_epochs = 200;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    double lm_lambda0 = 1e-3;
    double lm_up = 10.0;
    double lm_down = 0.1;
    int early_stop_patience = 20;
    std::uint64_t seed = 0;
    double goal_mse = 1e-12;

    void validate() const {
        if (max_epochs < 1) {
            throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
        }
        if (val_fraction < 0.0 || test_fraction < 0.0 || val_fraction + test_fraction >= 1.0) {
            throw std::invalid_argument("TrainConfig: split fractions must sum below 1");
        }
        if (!(lm_up > 1.0) || !(lm_down < 1.0) || !(lm_down > 0.0)) {
            throw std::invalid_argument("TrainConfig: lm_up must exceed 1, lm_down lie in (0,1)");
        }
    }
};

struct EpochStats {
    double train_mse;
    double val_mse;
    double test_mse;
};

struct TrainResult {
    NetworkParams net;  // parameters from the best-validation epoch
    Standardizer standardizer;
    std::vector<EpochStats> history;
    int best_epoch = 0;
    std::vector<std::size_t> train_idx, val_idx, test_idx;
};

namespace detail {

inline double mse_of(const Eigen::VectorXd& residuals) {
    if (residuals.size() == 0) {
        return 0.0;
    }
    return residuals.squaredNorm() / static_cast<double>(residuals.size());
}

struct BatchEval {
    Eigen::MatrixXd z;  // pre-activation, n x m1
    Eigen::MatrixXd h;  // activation, n x m1
    Eigen::VectorXd y;  // output, n
};

inline BatchEval eval_batch(const NetworkParams& net, const Eigen::MatrixXd& X) {
    BatchEval ev;
    ev.z = X * net.w1.transpose();
    ev.z.rowwise() += net.b1.transpose();
    ev.h = activate(ev.z.array(), net.shape.activation).matrix();
    ev.y = ev.h * net.w2.row(0).transpose();
    ev.y.array() += net.b2(0);
    return ev;
}

/// Jacobian of outputs w.r.t. parameters over a batch (n x P), flatten() order.
inline Eigen::MatrixXd jacobian_batch(const NetworkParams& net, const Eigen::MatrixXd& X,
                                      const BatchEval& ev) {
    const int d0 = net.shape.d0;
    const int m1 = net.shape.m1;
    const Eigen::Index n = X.rows();
    const Eigen::MatrixXd hp = activate_prime(ev.z.array(), net.shape.activation).matrix();
    Eigen::MatrixXd a = hp;
    a.array().rowwise() *= net.w2.row(0).array();  // n x m1, dy/db1 per sample

    Eigen::MatrixXd J(n, net.shape.param_count());
    for (int i = 0; i < d0; ++i) {
        J.middleCols(static_cast<Eigen::Index>(i) * m1, m1) = a.array().colwise() * X.col(i).array();
    }
    Eigen::Index at = static_cast<Eigen::Index>(d0) * m1;
    J.middleCols(at, m1) = a;
    at += m1;
    J.middleCols(at, m1) = ev.h;
    at += m1;
    J.col(at).setOnes();
    return J;
}

/// Gradient of train MSE (2/n) J^T r without materializing J.
inline Eigen::VectorXd mse_gradient(const NetworkParams& net, const Eigen::MatrixXd& X,
                                    const Eigen::VectorXd& y) {
    const BatchEval ev = eval_batch(net, X);
    const Eigen::VectorXd r = ev.y - y;
    const double scale = 2.0 / static_cast<double>(X.rows());
    const Eigen::MatrixXd hp = activate_prime(ev.z.array(), net.shape.activation).matrix();
    Eigen::MatrixXd a = hp;
    a.array().rowwise() *= net.w2.row(0).array();
    a.array().colwise() *= r.array();  // n x m1

    Eigen::VectorXd g(net.shape.param_count());
    const int m1 = net.shape.m1;
    const Eigen::MatrixXd gw1 = a.transpose() * X;  // m1 x d0
    Eigen::Index at = 0;
    g.segment(at, gw1.size()) = Eigen::Map<const Eigen::VectorXd>(gw1.data(), gw1.size()) * scale;
    at += gw1.size();
    g.segment(at, m1) = a.colwise().sum().transpose() * scale;
    at += m1;
    g.segment(at, m1) = (ev.h.array().colwise() * r.array()).colwise().sum().transpose() * scale;
    at += m1;
    g(at) = r.sum() * scale;
    return g;
}

}  // namespace detail

/// Trains on a seeded train/val/test split with input standardization fitted
/// on the training split. Returns the parameters of the epoch with minimum
/// validation MSE. method lm: damped Gauss-Newton steps, each accepted step
/// strictly decreases the train MSE; method scg: Moller's scaled conjugate
/// gradient on the full batch.
inline TrainResult train(const NetworkParams& initial, const Eigen::MatrixXd& inputs,
                         const Eigen::VectorXd& targets, TrainMethod method,
                         const TrainConfig& cfg) {
    cfg.validate();
    const Eigen::Index n = inputs.rows();
    if (n < 10) {
        throw std::invalid_argument("train: need at least 10 samples");
    }
    if (targets.size() != n) {
        throw std::invalid_argument("train: inputs/targets row mismatch");
    }
    if (!targets.allFinite() || !inputs.allFinite()) {
        throw std::invalid_argument("train: non-finite inputs or targets");
    }
    if (initial.shape.d0 != inputs.cols() || initial.shape.d1 != 1) {
        throw std::invalid_argument("train: network shape does not match data");
    }

    TrainResult result;

    // seeded shuffle split
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(cfg.seed, 117);
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(idx[i - 1], idx[j]);
    }
    const auto n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(n));
    const auto n_test = static_cast<std::size_t>(cfg.test_fraction * static_cast<double>(n));
    const std::size_t n_train = static_cast<std::size_t>(n) - n_val - n_test;
    result.train_idx.assign(idx.begin(), idx.begin() + n_train);
    result.val_idx.assign(idx.begin() + n_train, idx.begin() + n_train + n_val);
    result.test_idx.assign(idx.begin() + n_train + n_val, idx.end());

    const auto gather = [&](const std::vector<std::size_t>& rows, Eigen::MatrixXd& X,
                            Eigen::VectorXd& y) {
        X.resize(rows.size(), inputs.cols());
        y.resize(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            X.row(i) = inputs.row(rows[i]);
            y(i) = targets(rows[i]);
        }
    };
    Eigen::MatrixXd Xtr, Xval, Xte;
    Eigen::VectorXd ytr, yval, yte;
    gather(result.train_idx, Xtr, ytr);
    gather(result.val_idx, Xval, yval);
    gather(result.test_idx, Xte, yte);

    result.standardizer = Standardizer::fit(Xtr);
    Xtr = result.standardizer.apply(Xtr);
    if (Xval.rows() > 0) {
        Xval = result.standardizer.apply(Xval);
    }
    if (Xte.rows() > 0) {
        Xte = result.standardizer.apply(Xte);
    }

    NetworkParams net = initial;
    const auto split_mse = [&](const NetworkParams& p, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y) {
        if (X.rows() == 0) {
            return 0.0;
        }
        return detail::mse_of(detail::eval_batch(p, X).y - y);
    };

    double best_val = std::numeric_limits<double>::infinity();
    NetworkParams best_net = net;
    int stale = 0;
    const bool have_val = Xval.rows() > 0;

    const auto record_epoch = [&](double train_mse) {
        const double val_mse = split_mse(net, Xval, yval);
        const double test_mse = split_mse(net, Xte, yte);
        result.history.push_back({train_mse, val_mse, test_mse});
        const double crit = have_val ? val_mse : train_mse;
        if (crit < best_val) {
            best_val = crit;
            best_net = net;
            result.best_epoch = static_cast<int>(result.history.size()) - 1;
            stale = 0;
        } else {
            ++stale;
        }
    };

    if (method == TrainMethod::lm) {
        double lambda = cfg.lm_lambda0;
        double train_mse = split_mse(net, Xtr, ytr);
        record_epoch(train_mse);
        Eigen::VectorXd p = net.flatten();
        for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
            if (train_mse <= cfg.goal_mse || stale > cfg.early_stop_patience) {
                break;
            }
            const detail::BatchEval ev = detail::eval_batch(net, Xtr);
            const Eigen::VectorXd r = ev.y - ytr;
            const Eigen::MatrixXd J = detail::jacobian_batch(net, Xtr, ev);
            const Eigen::MatrixXd H = J.transpose() * J;
            const Eigen::VectorXd g = J.transpose() * r;

            bool accepted = false;
            while (lambda < 1e14) {
                Eigen::MatrixXd damped = H;
                damped.diagonal().array() += lambda;
                const Eigen::LDLT<Eigen::MatrixXd> solver(damped);
                if (solver.info() != Eigen::Success) {
                    throw std::runtime_error("train(lm): singular normal equations");
                }
                const Eigen::VectorXd step = solver.solve(-g);
                NetworkParams cand = net;
                cand.unflatten(p + step);
                const double cand_mse = split_mse(cand, Xtr, ytr);
                if (std::isfinite(cand_mse) && cand_mse < train_mse) {
                    p += step;
                    net = cand;
                    train_mse = cand_mse;
                    lambda = std::max(lambda * cfg.lm_down, 1e-15);
                    accepted = true;
                    break;
                }
                lambda *= cfg.lm_up;
            }
            if (!accepted) {
                break;  // no descent direction left at this precision
            }
            record_epoch(train_mse);
        }
    } else {
        // Moller's scaled conjugate gradient, full batch
        const auto energy = [&](const Eigen::VectorXd& pv) {
            NetworkParams tmp = net;
            tmp.unflatten(pv);
            return split_mse(tmp, Xtr, ytr);
        };
        const auto grad_at = [&](const Eigen::VectorXd& pv) {
            NetworkParams tmp = net;
            tmp.unflatten(pv);
            return detail::mse_gradient(tmp, Xtr, ytr);
        };

        Eigen::VectorXd p = net.flatten();
        const Eigen::Index np = p.size();
        double lambda = 5e-7;
        double lambda_bar = 0.0;
        const double sigma0 = 5e-5;
        Eigen::VectorXd r = -grad_at(p);
        Eigen::VectorXd d = r;
        bool success = true;
        double delta_k = 0.0;
        double train_mse = energy(p);
        record_epoch(train_mse);
        for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
            if (train_mse <= cfg.goal_mse || stale > cfg.early_stop_patience) {
                break;
            }
            const double d_norm2 = d.squaredNorm();
            if (!(d_norm2 > 0.0)) {
                break;
            }
            if (success) {
                const double sigma = sigma0 / std::sqrt(d_norm2);
                const Eigen::VectorXd s = (grad_at(p + sigma * d) - grad_at(p)) / sigma;
                delta_k = d.dot(s);
            }
            delta_k += (lambda - lambda_bar) * d_norm2;
            if (delta_k <= 0.0) {
                lambda_bar = 2.0 * (lambda - delta_k / d_norm2);
                delta_k = -delta_k + lambda * d_norm2;
                lambda = lambda_bar;
            }
            const double mu = d.dot(r);
            const double alpha = mu / delta_k;
            const double e_old = energy(p);
            const double e_new = energy(p + alpha * d);
            const double comparison = 2.0 * delta_k * (e_old - e_new) / (mu * mu);
            if (comparison >= 0.0 && std::isfinite(e_new)) {
                p += alpha * d;
                net.unflatten(p);
                train_mse = e_new;
                const Eigen::VectorXd r_new = -grad_at(p);
                lambda_bar = 0.0;
                success = true;
                if ((epoch + 1) % np == 0) {
                    d = r_new;
                } else {
                    const double beta = (r_new.squaredNorm() - r_new.dot(r)) / mu;
                    d = r_new + beta * d;
                }
                r = r_new;
                if (comparison >= 0.75) {
                    lambda *= 0.25;
                }
                record_epoch(train_mse);
            } else {
                lambda_bar = lambda;
                success = false;
            }
            if (comparison < 0.25) {
                lambda += delta_k * (1.0 - comparison) / d_norm2;
            }
            if (!std::isfinite(lambda) || lambda > 1e100) {
                break;
            }
        }
    }

    result.net = best_net;
    return result;
}

/// Prediction on raw (unstandardized) inputs using a training result.
inline double predict(const TrainResult& trained, const Eigen::VectorXd& x) {
    return forward(trained.net, trained.standardizer.apply_one(x))(0);
}

inline Eigen::VectorXd predict_batch(const TrainResult& trained, const Eigen::MatrixXd& X) {
    return detail::eval_batch(trained.net, trained.standardizer.apply(X)).y;
}

inline nlohmann::json to_json(const TrainResult& trained) {
    const NetworkParams& net = trained.net;
    const Eigen::VectorXd flat = net.flatten();
    return nlohmann::json{
        {"shape", {{"d0", net.shape.d0}, {"m1", net.shape.m1}, {"d1", net.shape.d1}}},
        {"activation", to_string(net.shape.activation)},
        {"standardizer",
         {{"mean", std::vector<double>(trained.standardizer.mean.data(),
                                       trained.standardizer.mean.data() + trained.standardizer.mean.size())},
          {"scale", std::vector<double>(trained.standardizer.scale.data(),
                                        trained.standardizer.scale.data() +
                                            trained.standardizer.scale.size())}}},
        {"params", std::vector<double>(flat.data(), flat.data() + flat.size())},
        {"best_epoch", trained.best_epoch}};
}

inline TrainResult from_json(const nlohmann::json& j) {
    TrainResult out;
    NetworkShape shape;
    shape.d0 = j.at("shape").at("d0").get<int>();
    shape.m1 = j.at("shape").at("m1").get<int>();
    shape.d1 = j.at("shape").at("d1").get<int>();
    shape.activation = activation_from_string(j.at("activation").get<std::string>());
    out.net = init(shape, 0);
    const auto params = j.at("params").get<std::vector<double>>();
    if (static_cast<int>(params.size()) != shape.param_count()) {
        throw std::invalid_argument("network json: wrong parameter count");
    }
    out.net.unflatten(Eigen::Map<const Eigen::VectorXd>(params.data(), params.size()));
    const auto mean = j.at("standardizer").at("mean").get<std::vector<double>>();
    const auto scale = j.at("standardizer").at("scale").get<std::vector<double>>();
    out.standardizer.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
    out.standardizer.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size());
    out.best_epoch = j.value("best_epoch", 0);
    return out;
}

inline void save_history_csv(const TrainResult& trained, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write file: " + path);
    }
    out << "epoch,train_mse,val_mse,test_mse\n";
    out.precision(17);
    for (std::size_t e = 0; e < trained.history.size(); ++e) {
        out << e << ',' << trained.history[e].train_mse << ',' << trained.history[e].val_mse << ','
            << trained.history[e].test_mse << '\n';
    }
}

}  // namespace pdvol::nn
