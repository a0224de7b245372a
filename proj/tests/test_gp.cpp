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
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include "sumgp/gp.hpp"

using namespace sumgp;

namespace {

GpData rand_gp_data(std::mt19937_64& rng, int n, int d, double spread = 1.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, spread);
    GpData data;
    data.inputs = Eigen::MatrixXd(n, d);
    data.targets = Vector(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) data.inputs(i, j) = unit(rng);
        data.targets[i] = gauss(rng);
    }
    return data;
}

GpHyperparams random_hp(std::mt19937_64& rng, int d) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GpHyperparams hp;
    hp.lengthscales = Vector(d);
    for (int j = 0; j < d; ++j) hp.lengthscales[j] = 0.1 + unit(rng);
    hp.signal_variance = 0.3 + unit(rng);
    hp.noise_variance = 0.001 + 0.05 * unit(rng);
    return hp;
}

// Independent slow-path oracle: explicit inverse and determinant, with
// the same target standardization as the library.
struct DenseOracle {
    Eigen::MatrixXd Kn;
    Eigen::MatrixXd Kn_inv;
    Vector y_std;
    double y_mean, y_scale;
    GpData data;
    GpHyperparams hp;

    DenseOracle(const GpData& d, const GpHyperparams& h) : data(d), hp(h) {
        const int n = d.size();
        y_mean = d.targets.mean();
        y_scale = 1.0;
        if (n >= 2) {
            const double sd = std::sqrt(
                (d.targets.array() - y_mean).square().sum() / (n - 1));
            if (sd > 1e-12) y_scale = sd;
        }
        y_std = (d.targets.array() - y_mean) / y_scale;
        Kn = Eigen::MatrixXd(n, n);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                Kn(a, b) = matern52(d.inputs.row(a).transpose(),
                                    d.inputs.row(b).transpose(), h);
            }
        }
        Kn.diagonal().array() += h.noise_variance;
        Kn_inv = Kn.inverse();
    }

    double lml() const {
        const int n = data.size();
        return -0.5 * y_std.dot(Kn_inv * y_std) - 0.5 * std::log(Kn.determinant()) -
               0.5 * n * std::log(2.0 * M_PI);
    }

    std::pair<double, double> posterior(const Vector& x) const {
        const int n = data.size();
        Vector kstar(n);
        for (int a = 0; a < n; ++a) {
            kstar[a] = matern52(data.inputs.row(a).transpose(), x, hp);
        }
        const double mean = y_mean + y_scale * kstar.dot(Kn_inv * y_std);
        const double var = hp.signal_variance - kstar.dot(Kn_inv * kstar);
        return {mean, var * y_scale * y_scale};
    }
};

} // namespace

TEST_CASE("matern52 closed form, symmetry, and diagonal") {
    GpHyperparams hp;
    hp.lengthscales = Vector::Constant(1, 1.0);
    hp.signal_variance = 1.0;

    Vector a(1), b(1);
    a[0] = 0.3;
    b[0] = 0.3;
    CHECK(matern52(a, b, hp) == 1.0); // r = 0 gives exactly sf2

    b[0] = 1.3; // |x1 - x2| = 1
    const double s5 = std::sqrt(5.0);
    const double expect = (1.0 + s5 + 5.0 / 3.0) * std::exp(-s5);
    CHECK(matern52(a, b, hp) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(matern52(a, b, hp) == doctest::Approx(0.52399411).epsilon(1e-7));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    GpHyperparams hp3 = random_hp(rng, 3);
    for (int i = 0; i < 100; ++i) {
        Vector x(3), y(3);
        for (int j = 0; j < 3; ++j) {
            x[j] = unit(rng);
            y[j] = unit(rng);
        }
        CHECK(matern52(x, y, hp3) == matern52(y, x, hp3));
    }

    Vector wrong(2);
    CHECK_THROWS_AS(matern52(a, wrong, hp), Error);
}

TEST_CASE("log marginal likelihood closed form for one point") {
    GpData data;
    data.inputs = Eigen::MatrixXd(1, 2);
    data.inputs << 0.4, 0.6;
    data.targets = Vector::Constant(1, 3.7); // centered away to 0

    GpHyperparams hp = GpHyperparams::defaults(2);
    hp.signal_variance = 0.8;
    hp.noise_variance = 0.05;
    const double expect =
        -0.5 * std::log(0.8 + 0.05) - 0.5 * std::log(2.0 * M_PI);
    CHECK(log_marginal_likelihood(data, hp) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("log marginal likelihood matches the dense oracle") {
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 5; ++rep) {
        const GpData data = rand_gp_data(rng, 5, 2);
        const GpHyperparams hp = random_hp(rng, 2);
        const DenseOracle oracle(data, hp);
        const double got = log_marginal_likelihood(data, hp);
        CHECK(got == doctest::Approx(oracle.lml()).epsilon(1e-8));
    }
}

TEST_CASE("duplicate points survive via jitter") {
    std::mt19937_64 rng(23);
    GpData data = rand_gp_data(rng, 6, 2);
    data.inputs.row(5) = data.inputs.row(0);
    data.targets[5] = data.targets[0];
    GpHyperparams hp = GpHyperparams::defaults(2);
    hp.noise_variance = kJitterFloor;
    CHECK(std::isfinite(log_marginal_likelihood(data, hp)));
    const GpModel model(data, hp);
    CHECK(std::isfinite(model.posterior(Vector::Constant(2, 0.5)).mean));
}

TEST_CASE("analytic LML gradient matches central finite differences") {
    std::mt19937_64 rng(31);
    const double h = 1e-5;
    for (int rep = 0; rep < 5; ++rep) {
        const int d = 1 + rep % 3;
        const GpData data = rand_gp_data(rng, 8, d);
        const GpHyperparams hp = random_hp(rng, d);
        const Vector grad = lml_gradient(data, hp);
        REQUIRE(grad.size() == d + 2);
        for (int p = 0; p < d + 2; ++p) {
            auto perturbed = [&](double delta) {
                GpHyperparams hq = hp;
                if (p < d) {
                    hq.lengthscales[p] = hp.lengthscales[p] * std::exp(delta);
                } else if (p == d) {
                    hq.signal_variance = hp.signal_variance * std::exp(delta);
                } else {
                    hq.noise_variance = hp.noise_variance * std::exp(delta);
                }
                return log_marginal_likelihood(data, hq);
            };
            const double fd = (perturbed(h) - perturbed(-h)) / (2.0 * h);
            const double rel = std::abs(grad[p] - fd) / std::max(std::abs(fd), 1e-3);
            CHECK(rel < 1e-4);
        }
    }
}

TEST_CASE("gradient of a one-point dataset matches scalar calculus") {
    GpData data;
    data.inputs = Eigen::MatrixXd::Constant(1, 1, 0.5);
    data.targets = Vector::Constant(1, 2.0); // centered to zero
    GpHyperparams hp = GpHyperparams::defaults(1);
    hp.signal_variance = 0.7;
    hp.noise_variance = 0.2;
    // LML = -1/2 log(sf2 + sn2) - 1/2 log 2pi with y_std = 0, so
    // d/dlog sn2 = -1/2 * sn2 / (sf2 + sn2).
    const Vector grad = lml_gradient(data, hp);
    CHECK(grad[2] == doctest::Approx(-0.5 * 0.2 / 0.9).epsilon(1e-10));
    CHECK(grad[1] == doctest::Approx(-0.5 * 0.7 / 0.9).epsilon(1e-10));
    CHECK(grad[0] == doctest::Approx(0.0));
}

TEST_CASE("fit_hyperparams is deterministic and never below the default start") {
    std::mt19937_64 rng(41);
    const GpData data = rand_gp_data(rng, 15, 2);
    const GpHyperparams a = fit_hyperparams(data, 99);
    const GpHyperparams b = fit_hyperparams(data, 99);
    CHECK(a.lengthscales == b.lengthscales);
    CHECK(a.signal_variance == b.signal_variance);
    CHECK(a.noise_variance == b.noise_variance);

    const double fitted = log_marginal_likelihood(data, a);
    const double at_default =
        log_marginal_likelihood(data, GpHyperparams::defaults(2));
    CHECK(fitted >= at_default - 1e-9);
}

TEST_CASE("fit_hyperparams falls back to defaults on tiny datasets") {
    std::mt19937_64 rng(43);
    const GpData data = rand_gp_data(rng, 1, 3);
    const GpHyperparams hp = fit_hyperparams(data, 0);
    CHECK(hp.lengthscales == GpHyperparams::defaults(3).lengthscales);
}

TEST_CASE("constant targets drive the fit to the noise floor") {
    GpData data;
    data.inputs = Eigen::MatrixXd::Random(12, 2).array().abs();
    data.targets = Vector::Constant(12, 1.5);
    const GpHyperparams hp = fit_hyperparams(data, 3);
    CHECK(hp.noise_variance < 1e-6);
    CHECK(hp.signal_variance < 1e-2);
}

TEST_CASE("fit recovers known lengthscales within a factor of two") {
    // Draw targets from a GP with known hyperparameters.
    std::mt19937_64 rng(57);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = 40, d = 2;
    GpHyperparams truth;
    truth.lengthscales = Vector::Constant(d, 0.3);
    truth.signal_variance = 1.0;
    truth.noise_variance = 1e-4;

    GpData data;
    data.inputs = Eigen::MatrixXd(n, d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) data.inputs(i, j) = unit(rng);
    }
    Eigen::MatrixXd K(n, n);
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            K(a, b) = matern52(data.inputs.row(a).transpose(),
                               data.inputs.row(b).transpose(), truth);
        }
    }
    K.diagonal().array() += truth.noise_variance;
    const Eigen::MatrixXd L = Eigen::LLT<Eigen::MatrixXd>(K).matrixL();
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vector z(n);
    for (int i = 0; i < n; ++i) z[i] = gauss(rng);
    data.targets = L * z;

    const GpHyperparams fit = fit_hyperparams(data, 7);
    for (int j = 0; j < d; ++j) {
        CHECK(fit.lengthscales[j] > 0.15);
        CHECK(fit.lengthscales[j] < 0.6);
    }
}

TEST_CASE("posterior interpolates, reverts to the prior, and matches the oracle") {
    std::mt19937_64 rng(61);
    GpData data = rand_gp_data(rng, 5, 2);
    GpHyperparams hp = GpHyperparams::defaults(2);
    hp.lengthscales = Vector::Constant(2, 0.05);
    hp.noise_variance = kJitterFloor;
    const GpModel model(data, hp);

    // Interpolation at a training input with noise at the jitter floor.
    const auto at0 = model.posterior(data.inputs.row(0).transpose());
    CHECK(at0.mean == doctest::Approx(data.targets[0]).epsilon(1e-6));

    // Far from all data the posterior reverts to the prior.
    const Vector far = Vector::Constant(2, 25.0);
    const auto pfar = model.posterior(far);
    CHECK(pfar.mean ==
          doctest::Approx(model.target_mean()).epsilon(1e-6));
    const double prior_var =
        hp.signal_variance * model.target_scale() * model.target_scale();
    CHECK(pfar.variance == doctest::Approx(prior_var).epsilon(1e-6));

    // Dense-inverse oracle agreement.
    GpHyperparams hp2 = random_hp(rng, 2);
    const GpModel model2(data, hp2);
    const DenseOracle oracle(data, hp2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 10; ++rep) {
        Vector x(2);
        x << unit(rng), unit(rng);
        const auto got = model2.posterior(x);
        const auto [m, v] = oracle.posterior(x);
        CHECK(got.mean == doctest::Approx(m).epsilon(1e-8));
        CHECK(got.variance == doctest::Approx(v).epsilon(1e-8));
    }
}

TEST_CASE("posterior variance is non-negative everywhere") {
    std::mt19937_64 rng(67);
    const GpData data = rand_gp_data(rng, 30, 2);
    GpHyperparams hp = GpHyperparams::defaults(2);
    hp.noise_variance = kJitterFloor;
    const GpModel model(data, hp);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int rep = 0; rep < 200; ++rep) {
        Vector x(2);
        x << unit(rng), unit(rng);
        CHECK(model.posterior(x).variance >= 0.0);
    }
}

TEST_CASE("add_point conditions the posterior without touching far regions") {
    std::mt19937_64 rng(71);
    GpData data = rand_gp_data(rng, 6, 2);
    GpHyperparams hp = GpHyperparams::defaults(2);
    hp.lengthscales = Vector::Constant(2, 0.05); // short range for locality
    const GpModel model(data, hp);

    Vector x(2);
    x << 0.5, 0.5;
    const double var_before = model.posterior(x).variance;
    const GpModel grown = model.add_point(x, 0.3);
    CHECK(grown.size() == model.size() + 1);
    CHECK(grown.posterior(x).variance < var_before);

    Vector far(2);
    far << 0.95, 0.05;
    CHECK(std::abs(grown.posterior(far).mean - model.posterior(far).mean) < 1e-6);
    CHECK(std::abs(grown.posterior(far).variance - model.posterior(far).variance) <
          1e-6);
}

TEST_CASE("empty model plus add_point behaves as a one-point GP") {
    const GpModel empty = GpModel::prior(2);
    CHECK(empty.size() == 0);
    const auto prior = empty.posterior(Vector::Constant(2, 0.2));
    CHECK(prior.mean == 0.0);
    CHECK(prior.variance == doctest::Approx(1.0));

    Vector x(2);
    x << 0.4, 0.7;
    const GpModel one = empty.add_point(x, 2.5);

    GpData data;
    data.inputs = Eigen::MatrixXd(1, 2);
    data.inputs.row(0) = x.transpose();
    data.targets = Vector::Constant(1, 2.5);
    const GpModel direct(data, GpHyperparams::defaults(2));

    for (double t : {0.0, 0.3, 0.9}) {
        const Vector q = Vector::Constant(2, t);
        CHECK(one.posterior(q).mean == direct.posterior(q).mean);
        CHECK(one.posterior(q).variance == direct.posterior(q).variance);
    }
}

TEST_CASE("model JSON dump carries data and hyperparameters") {
    std::mt19937_64 rng(73);
    const GpData data = rand_gp_data(rng, 4, 3);
    const GpModel model(data, GpHyperparams::defaults(3));
    const auto j = model.to_json();
    CHECK(j["dim"] == 3);
    CHECK(j["inputs"].size() == 4);
    CHECK(j["targets"].size() == 4);
    CHECK(j["lengthscales"].size() == 3);
}
