/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "sumgp/gp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Cholesky>

namespace sumgp {

namespace {

constexpr double kSqrt5 = 2.2360679774997896;
constexpr double kLog2Pi = 1.8378770664093453;

std::atomic<long> g_clamp_warnings{0};

void check_dim(const Vector& x, int dim, const char* where) {
    if (x.size() != dim) {
        throw Error(std::string(where) + ": point has dimension " +
                    std::to_string(x.size()) + ", expected " + std::to_string(dim));
    }
}

struct Standardization {
    double mean = 0.0;
    double scale = 1.0;
};

Standardization standardize_stats(const Vector& y) {
    Standardization s;
    const int n = static_cast<int>(y.size());
    if (n == 0) return s;
    s.mean = y.mean();
    if (n >= 2) {
        const double var = (y.array() - s.mean).square().sum() / (n - 1);
        const double sd = std::sqrt(var);
        if (sd > 1e-12) s.scale = sd;
    }
    return s;
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& X, const GpHyperparams& hp) {
    const int n = static_cast<int>(X.rows());
    Eigen::MatrixXd K(n, n);
    for (int a = 0; a < n; ++a) {
        K(a, a) = hp.signal_variance;
        for (int b = 0; b < a; ++b) {
            double r2 = 0.0;
            for (int j = 0; j < X.cols(); ++j) {
                const double d = (X(a, j) - X(b, j)) / hp.lengthscales[j];
                r2 += d * d;
            }
            const double r = std::sqrt(r2);
            const double v = hp.signal_variance *
                (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) * std::exp(-kSqrt5 * r);
            K(a, b) = v;
            K(b, a) = v;
        }
    }
    return K;
}

// Cholesky of K + noise*I, escalating jitter 1e-8 -> 1e-6 -> 1e-4.
Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& K, double noise,
                                     double* jitter_used = nullptr) {
    const int n = static_cast<int>(K.rows());
    const double jitters[] = {0.0, 1e-8, 1e-6, 1e-4};
    for (double jit : jitters) {
        Eigen::MatrixXd A = K;
        A.diagonal().array() += noise + jit;
        Eigen::LLT<Eigen::MatrixXd> llt(A);
        if (llt.info() == Eigen::Success) {
            Eigen::MatrixXd L = llt.matrixL();
            if (L.diagonal().minCoeff() > 0.0 && L.allFinite()) {
                if (jitter_used) *jitter_used = jit;
                return L;
            }
        }
    }
    throw Error("cholesky_with_jitter: matrix not positive definite after jitter "
                "escalation (n=" + std::to_string(n) + ")");
}

double lml_from_factor(const Eigen::MatrixXd& L, const Vector& y_std,
                       const Vector& alpha) {
    const int n = static_cast<int>(y_std.size());
    return -0.5 * y_std.dot(alpha) - L.diagonal().array().log().sum() -
           0.5 * n * kLog2Pi;
}

double lml_standardized(const Eigen::MatrixXd& X, const Vector& y_std,
                        const GpHyperparams& hp) {
    const Eigen::MatrixXd K = kernel_matrix(X, hp);
    const Eigen::MatrixXd L = cholesky_with_jitter(K, hp.noise_variance);
    Vector alpha = L.triangularView<Eigen::Lower>().solve(y_std);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);
    return lml_from_factor(L, y_std, alpha);
}

Vector lml_gradient_standardized(const Eigen::MatrixXd& X, const Vector& y_std,
                                 const GpHyperparams& hp) {
    const int n = static_cast<int>(X.rows());
    const int d = static_cast<int>(X.cols());
    const Eigen::MatrixXd Kf = kernel_matrix(X, hp);
    const Eigen::MatrixXd L = cholesky_with_jitter(Kf, hp.noise_variance);
    Vector alpha = L.triangularView<Eigen::Lower>().solve(y_std);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha);

    Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
    L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
    const Eigen::MatrixXd W = alpha * alpha.transpose() - Kinv;

    Vector grad(d + 2);
    // dK/dlog(l_j) = sf2 * (5/3) * (1 + sqrt5*r) * exp(-sqrt5*r) * diff_j^2/l_j^2
    Eigen::MatrixXd F(n, n);
    for (int a = 0; a < n; ++a) {
        F(a, a) = 0.0;
        for (int b = 0; b < a; ++b) {
            double r2 = 0.0;
            for (int j = 0; j < d; ++j) {
                const double dd = (X(a, j) - X(b, j)) / hp.lengthscales[j];
                r2 += dd * dd;
            }
            const double r = std::sqrt(r2);
            const double f = hp.signal_variance * (5.0 / 3.0) * (1.0 + kSqrt5 * r) *
                             std::exp(-kSqrt5 * r);
            F(a, b) = f;
            F(b, a) = f;
        }
    }
    for (int j = 0; j < d; ++j) {
        double g = 0.0;
        const double lj2 = hp.lengthscales[j] * hp.lengthscales[j];
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < a; ++b) {
                const double diff = X(a, j) - X(b, j);
                g += 2.0 * W(a, b) * F(a, b) * diff * diff / lj2;
            }
        }
        grad[j] = 0.5 * g;
    }
    grad[d] = 0.5 * (W.array() * Kf.array()).sum();
    grad[d + 1] = 0.5 * hp.noise_variance * W.trace();
    return grad;
}

struct LogParams {
    Vector eta; // (log l_1..d, log sf2, log sn2)
};

GpHyperparams from_log(const Vector& eta, int d) {
    GpHyperparams hp;
    hp.lengthscales = eta.head(d).array().exp();
    hp.signal_variance = std::exp(eta[d]);
    hp.noise_variance = std::exp(eta[d + 1]);
    return hp;
}

Vector to_log(const GpHyperparams& hp) {
    const int d = static_cast<int>(hp.lengthscales.size());
    Vector eta(d + 2);
    eta.head(d) = hp.lengthscales.array().log();
    eta[d] = std::log(hp.signal_variance);
    eta[d + 1] = std::log(hp.noise_variance);
    return eta;
}

Vector clamp_log(Vector eta, int d) {
    for (int j = 0; j < d; ++j) {
        eta[j] = std::clamp(eta[j], std::log(kLengthscaleLo), std::log(kLengthscaleHi));
    }
    eta[d] = std::clamp(eta[d], std::log(kSignalVarLo), std::log(kSignalVarHi));
    eta[d + 1] = std::clamp(eta[d + 1], std::log(kNoiseVarLo), std::log(kNoiseVarHi));
    return eta;
}

// Projected gradient ascent with backtracking; returns best LML reached.
double ascend(const Eigen::MatrixXd& X, const Vector& y_std, Vector& eta,
              int max_iters) {
    const int d = static_cast<int>(X.cols());
    double f = lml_standardized(X, y_std, from_log(eta, d));
    for (int it = 0; it < max_iters; ++it) {
        Vector g = lml_gradient_standardized(X, y_std, from_log(eta, d));
        const double gnorm = g.norm();
        if (gnorm < 1e-7) break;
        const Vector dir = g / gnorm;
        double step = 0.25;
        bool improved = false;
        while (step > 1e-8) {
            const Vector cand = clamp_log(eta + step * dir, d);
            double fc;
            try {
                fc = lml_standardized(X, y_std, from_log(cand, d));
            } catch (const Error&) {
                step *= 0.5;
                continue;
            }
            if (fc > f) {
                eta = cand;
                if (fc - f < 1e-7 * (1.0 + std::abs(f))) {
                    return fc; // converged
                }
                f = fc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    return f;
}

} // namespace

GpHyperparams GpHyperparams::defaults(int dim) {
    GpHyperparams hp;
    hp.lengthscales = Vector::Constant(dim, 0.5);
    hp.signal_variance = 1.0;
    hp.noise_variance = 1e-4;
    return hp;
}

double matern52(const Vector& x1, const Vector& x2, const GpHyperparams& hp) {
    if (x1.size() != x2.size() || x1.size() != hp.lengthscales.size()) {
        throw Error("matern52: dimension mismatch");
    }
    double r2 = 0.0;
    for (int j = 0; j < x1.size(); ++j) {
        const double d = (x1[j] - x2[j]) / hp.lengthscales[j];
        r2 += d * d;
    }
    const double r = std::sqrt(r2);
    return hp.signal_variance * (1.0 + kSqrt5 * r + (5.0 / 3.0) * r2) *
           std::exp(-kSqrt5 * r);
}

double log_marginal_likelihood(const GpData& data, const GpHyperparams& hp) {
    if (data.size() < 1) throw Error("log_marginal_likelihood: empty dataset");
    const Standardization s = standardize_stats(data.targets);
    const Vector y_std = (data.targets.array() - s.mean) / s.scale;
    return lml_standardized(data.inputs, y_std, hp);
}

Vector lml_gradient(const GpData& data, const GpHyperparams& hp) {
    if (data.size() < 1) throw Error("lml_gradient: empty dataset");
    const Standardization s = standardize_stats(data.targets);
    const Vector y_std = (data.targets.array() - s.mean) / s.scale;
    return lml_gradient_standardized(data.inputs, y_std, hp);
}

GpHyperparams fit_hyperparams(const GpData& data, std::uint64_t seed,
                              bool* fit_failed) {
    if (fit_failed) *fit_failed = false;
    const int d = data.dim();
    if (data.size() < 2) return GpHyperparams::defaults(d);

    const Standardization s = standardize_stats(data.targets);
    const Vector y_std = (data.targets.array() - s.mean) / s.scale;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto log_uniform = [&](double lo, double hi) {
        return std::exp(std::log(lo) + unit(rng) * (std::log(hi) - std::log(lo)));
    };

    constexpr int kStarts = 8;
    constexpr int kMaxAscentIters = 60;
    bool any_ok = false;
    double best_f = -std::numeric_limits<double>::infinity();
    Vector best_eta;
    for (int si = 0; si < kStarts; ++si) {
        GpHyperparams start;
        if (si == 0) {
            start = GpHyperparams::defaults(d);
        } else {
            start.lengthscales = Vector(d);
            for (int j = 0; j < d; ++j) {
                start.lengthscales[j] = log_uniform(kLengthscaleLo, kLengthscaleHi);
            }
            start.signal_variance = log_uniform(kSignalVarLo, kSignalVarHi);
            start.noise_variance = log_uniform(kNoiseVarLo, kNoiseVarHi);
        }
        Vector eta = clamp_log(to_log(start), d);
        double f;
        try {
            f = ascend(data.inputs, y_std, eta, kMaxAscentIters);
        } catch (const Error&) {
            continue;
        }
        any_ok = true;
        if (f > best_f) {
            best_f = f;
            best_eta = eta;
        }
    }
    if (!any_ok) {
        if (fit_failed) *fit_failed = true;
        return GpHyperparams::defaults(d);
    }
    return from_log(best_eta, d);
}

long variance_clamp_warnings() { return g_clamp_warnings.load(); }

GpModel::GpModel(GpData data, GpHyperparams hp)
    : data_(std::move(data)), hp_(std::move(hp)) {
    dim_ = data_.size() > 0 ? data_.dim() : static_cast<int>(hp_.lengthscales.size());
    const Standardization s = standardize_stats(data_.targets);
    y_mean_ = s.mean;
    y_scale_ = s.scale;
    factorize();
}

GpModel::GpModel(GpData data, GpHyperparams hp, double y_mean, double y_scale)
    : data_(std::move(data)), hp_(std::move(hp)), y_mean_(y_mean), y_scale_(y_scale) {
    dim_ = data_.size() > 0 ? data_.dim() : static_cast<int>(hp_.lengthscales.size());
    factorize();
}

GpModel GpModel::prior(int dim, GpHyperparams hp) {
    GpData data;
    data.inputs = Eigen::MatrixXd(0, dim);
    data.targets = Vector(0);
    return GpModel(std::move(data), std::move(hp));
}

void GpModel::factorize() {
    if (hp_.lengthscales.size() != dim_) {
        throw Error("GpModel: hyperparameter dimension mismatch");
    }
    const int n = data_.size();
    if (n == 0) {
        chol_.resize(0, 0);
        alpha_.resize(0);
        return;
    }
    const Eigen::MatrixXd K = kernel_matrix(data_.inputs, hp_);
    chol_ = cholesky_with_jitter(K, hp_.noise_variance);
    const Vector y_std = (data_.targets.array() - y_mean_) / y_scale_;
    alpha_ = chol_.triangularView<Eigen::Lower>().solve(y_std);
    chol_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
}

GpModel::Posterior GpModel::posterior(const Vector& x) const {
    check_dim(x, dim_, "GpModel::posterior");
    const int n = data_.size();
    if (n == 0) {
        return {y_mean_, hp_.signal_variance * y_scale_ * y_scale_};
    }
    Vector kstar(n);
    for (int a = 0; a < n; ++a) {
        kstar[a] = matern52(data_.inputs.row(a).transpose(), x, hp_);
    }
    const double mean = y_mean_ + y_scale_ * kstar.dot(alpha_);
    const Vector v = chol_.triangularView<Eigen::Lower>().solve(kstar);
    double var = hp_.signal_variance - v.squaredNorm();
    if (var < 0.0) {
        if (var < -1e-10) g_clamp_warnings.fetch_add(1);
        var = 0.0;
    }
    return {mean, var * y_scale_ * y_scale_};
}

GpModel GpModel::add_point(const Vector& x, double y) const {
    check_dim(x, dim_, "GpModel::add_point");
    GpData nd;
    const int n = data_.size();
    nd.inputs = Eigen::MatrixXd(n + 1, dim_);
    nd.inputs.topRows(n) = data_.inputs;
    nd.inputs.row(n) = x.transpose();
    nd.targets = Vector(n + 1);
    nd.targets.head(n) = data_.targets;
    nd.targets[n] = y;
    if (n == 0) {
        return GpModel(std::move(nd), hp_);
    }
    return GpModel(std::move(nd), hp_, y_mean_, y_scale_);
}

double GpModel::lml() const {
    if (data_.size() < 1) throw Error("GpModel::lml: empty model");
    const Vector y_std = (data_.targets.array() - y_mean_) / y_scale_;
    return lml_from_factor(chol_, y_std, alpha_);
}

nlohmann::json GpModel::to_json() const {
    nlohmann::json j;
    j["dim"] = dim_;
    j["target_mean"] = y_mean_;
    j["target_scale"] = y_scale_;
    j["lengthscales"] = std::vector<double>(
        hp_.lengthscales.data(), hp_.lengthscales.data() + hp_.lengthscales.size());
    j["signal_variance"] = hp_.signal_variance;
    j["noise_variance"] = hp_.noise_variance;
    auto inputs = nlohmann::json::array();
    auto targets = nlohmann::json::array();
    for (int a = 0; a < data_.size(); ++a) {
        auto row = nlohmann::json::array();
        for (int jx = 0; jx < dim_; ++jx) row.push_back(data_.inputs(a, jx));
        inputs.push_back(row);
        targets.push_back(data_.targets[a]);
    }
    j["inputs"] = inputs;
    j["targets"] = targets;
    return j;
}

} // namespace sumgp
