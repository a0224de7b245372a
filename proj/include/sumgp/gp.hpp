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
#pragma once

#include <cstdint>
#include <optional>

#include <Eigen/Core>
#include <json.hpp>

#include "sumgp/error.hpp"
#include "sumgp/param_space.hpp"

namespace sumgp {

/// Matern-5/2 ARD hyperparameters. Targets are standardized before
/// fitting, so signal/noise variances live in normalized-target units.
struct GpHyperparams {
    Vector lengthscales;          // one per input dimension, > 0
    double signal_variance = 1.0; // > 0
    double noise_variance = 1e-6; // >= kJitterFloor

    static GpHyperparams defaults(int dim);
};

/// Hyperparameter box constraints (log-space optimization stays inside).
constexpr double kLengthscaleLo = 0.01;
constexpr double kLengthscaleHi = 10.0;
constexpr double kSignalVarLo = 1e-4;
constexpr double kSignalVarHi = 1e4;
constexpr double kNoiseVarLo = 1e-8;
constexpr double kNoiseVarHi = 1.0;
constexpr double kJitterFloor = 1e-8;

/// Training set in the unit cube.
struct GpData {
    Eigen::MatrixXd inputs; // n x d, rows are points in [0,1]^d
    Vector targets;         // length n

    int size() const { return static_cast<int>(inputs.rows()); }
    int dim() const { return static_cast<int>(inputs.cols()); }
};

/// Matern-5/2 covariance between two points.
double matern52(const Vector& x1, const Vector& x2, const GpHyperparams& hp);

/// Log marginal likelihood of the data under hp, with targets
/// standardized (centered, and scaled by the standard deviation when
/// n >= 2) before evaluation.
double log_marginal_likelihood(const GpData& data, const GpHyperparams& hp);

/// Analytic LML gradient over (log l_1..d, log sf2, log sn2).
Vector lml_gradient(const GpData& data, const GpHyperparams& hp);

/// Multi-start (1 default + 7 random) projected gradient ascent on the
/// LML in log-parameter space. Returns defaults when n < 2 or when every
/// start fails to factorize (sets *fit_failed if given).
GpHyperparams fit_hyperparams(const GpData& data, std::uint64_t seed,
                              bool* fit_failed = nullptr);

/// Number of posterior-variance clamps beyond the -1e-10 tolerance seen
/// process-wide (diagnostic only).
long variance_clamp_warnings();

/// Exact GP posterior with a cached Cholesky factorization. Immutable:
/// add_point returns a new model.
class GpModel {
public:
    /// Builds the model, computing target standardization from the data.
    GpModel(GpData data, GpHyperparams hp);

    /// Empty model over a d-dimensional cube: posterior is the prior.
    static GpModel prior(int dim, GpHyperparams hp);
    static GpModel prior(int dim) { return prior(dim, GpHyperparams::defaults(dim)); }

    struct Posterior {
        double mean;
        double variance;
    };
    Posterior posterior(const Vector& x) const;

    /// Appends a point keeping hyperparameters and standardization fixed
    /// (except when growing from 0 points, where standardization is
    /// defined by the first target).
    GpModel add_point(const Vector& x, double y) const;

    double lml() const;

    const GpData& data() const { return data_; }
    const GpHyperparams& hyperparams() const { return hp_; }
    int size() const { return data_.size(); }
    int dim() const { return dim_; }
    double target_mean() const { return y_mean_; }
    double target_scale() const { return y_scale_; }

    nlohmann::json to_json() const;

private:
    GpModel(GpData data, GpHyperparams hp, double y_mean, double y_scale);
    void factorize();

    GpData data_;
    GpHyperparams hp_;
    int dim_ = 0;
    double y_mean_ = 0.0;
    double y_scale_ = 1.0;
    Eigen::MatrixXd chol_;  // lower triangular factor of K + noise*I
    Vector alpha_;          // (K + noise*I)^-1 y_standardized
};

} // namespace sumgp
