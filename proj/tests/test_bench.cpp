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
#include <filesystem>
#include <fstream>

#include "sumgp/bench.hpp"

using namespace sumgp;

namespace {

// Shrunk preset for fast end-to-end checks.
ExperimentPreset small_preset(const std::string& name, int iterations) {
    ExperimentPreset p = build_preset(name);
    p.iterations = iterations;
    p.grid.width = 32;
    p.grid.height = 24;
    return p;
}

std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    return dir;
}

BoTrace synthetic_trace(std::initializer_list<std::pair<long, double>> points) {
    BoTrace t;
    int iter = 0;
    double best = 1e30;
    for (const auto& [sims, err] : points) {
        TraceRecord r;
        r.iteration = iter++;
        r.sim_count = sims;
        r.total_error = err;
        best = std::min(best, err);
        r.best_error = best;
        t.records.push_back(r);
    }
    return t;
}

} // namespace

TEST_CASE("preset roster shapes") {
    const ExperimentPreset e1 = build_preset("exp1");
    CHECK(e1.space.objects().size() == 4);
    CHECK(e1.scenes.size() == 3);
    CHECK(e1.space.total_dims() == 5);
    CHECK(e1.theta_star.size() == 5);
    CHECK(e1.schedule.empty());
    CHECK(e1.iterations == 200);
    REQUIRE(e1.trial_seeds.size() == 10);
    for (std::uint64_t s = 0; s < 10; ++s) CHECK(e1.trial_seeds[s] == s);

    const ExperimentPreset e2 = build_preset("exp2");
    CHECK(e2.space.objects().size() == 5);
    CHECK(e2.scenes.size() == 6);
    CHECK(e2.space.total_dims() == 7);

    const ExperimentPreset e3 = build_preset("exp3");
    CHECK(e3.space.objects().size() == 6);
    CHECK(e3.scenes.size() == 8);
    CHECK(e3.space.total_dims() == 9);
    CHECK(e3.schedule.empty());

    const ExperimentPreset e4 = build_preset("exp4");
    CHECK(e4.space.total_dims() == 9);
    CHECK(e4.scenes.size() == 8);
    REQUIRE(e4.schedule.size() == 3);
    CHECK(e4.schedule.at(0) == std::vector<int>{0, 1, 2});
    CHECK(e4.schedule.at(50) == std::vector<int>{3, 4, 5});
    CHECK(e4.schedule.at(100) == std::vector<int>{6, 7});

    // Shared prefix: exp4's roster, scenes and truth extend exp1's.
    for (int j = 0; j < 5; ++j) CHECK(e4.theta_star[j] == e1.theta_star[j]);
    for (int i = 0; i < 3; ++i) CHECK(e4.scenes[i].name == e1.scenes[i].name);

    CHECK_THROWS_AS(build_preset("exp9"), Error);
}

TEST_CASE("preset JSON round-trip") {
    const ExperimentPreset p = build_preset("exp4");
    const ExperimentPreset back = ExperimentPreset::from_json(p.to_json());
    CHECK(back.name == p.name);
    CHECK(back.space.total_dims() == p.space.total_dims());
    CHECK(back.scenes.size() == p.scenes.size());
    CHECK(back.theta_star == p.theta_star);
    CHECK(back.iterations == p.iterations);
    CHECK(back.schedule == p.schedule);
    CHECK(back.trial_seeds == p.trial_seeds);
    CHECK(back.grid.width == p.grid.width);
}

TEST_CASE("noise-free observations reward zero at the true parameters") {
    for (const char* name : {"exp1", "exp2", "exp3"}) {
        ExperimentPreset p = small_preset(name, 1);
        const auto obs = p.make_observations();
        CHECK(obs.size() == p.scenes.size());
        for (const Observation& o : obs) {
            const Vector theta_k = slice_params(p.space, p.theta_star, o.k);
            const Heightmap pred =
                surrogate_simulate(p.space, o.scene, theta_k, p.grid);
            CHECK(reward(o.observed, pred) == 0.0);
        }
    }
}

TEST_CASE("aggregate_trials computes interpolated percentiles") {
    std::vector<TrialCurve> trials;
    for (double err : {1.0, 2.0, 3.0, 4.0}) {
        trials.push_back({0, synthetic_trace({{10, err}})});
    }
    const auto agg = aggregate_trials(trials);
    REQUIRE(agg.size() == 1);
    CHECK(agg[0].iter == 0);
    CHECK(agg[0].sim_count_median == 10.0);
    CHECK(agg[0].err_p25 == doctest::Approx(1.75));
    CHECK(agg[0].err_p50 == doctest::Approx(2.5));
    CHECK(agg[0].err_p75 == doctest::Approx(3.25));

    trials.push_back({0, synthetic_trace({{10, 1.0}, {11, 0.5}})});
    CHECK_THROWS_AS(aggregate_trials(trials), Error);
    CHECK_THROWS_AS(aggregate_trials({}), Error);
}

TEST_CASE("error_at_budget interpolates the median curve") {
    LearningCurve curve;
    curve.mode = "sum-partial";
    curve.trials.push_back({0, synthetic_trace({{10, 4.0}, {20, 2.0}, {30, 1.0}})});
    curve.aggregate = aggregate_trials(curve.trials);

    CHECK(error_at_budget(curve, 10.0) == doctest::Approx(4.0));
    CHECK(error_at_budget(curve, 15.0) == doctest::Approx(3.0));
    CHECK(error_at_budget(curve, 30.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(error_at_budget(curve, 9.0), Error);
    CHECK_THROWS_AS(error_at_budget(curve, 31.0), Error);

    const CompareResult self = compare(curve, curve, 20.0);
    CHECK(self.err_a == self.err_b);
    CHECK(self.ratio == doctest::Approx(1.0));

    LearningCurve other = curve;
    other.trials[0].trace.records[1].total_error = 4.0;
    other.aggregate = aggregate_trials(other.trials);
    const CompareResult r = compare(other, curve, 20.0);
    CHECK(r.err_a == doctest::Approx(4.0));
    CHECK(r.err_b == doctest::Approx(2.0));
    CHECK(r.ratio == doctest::Approx(2.0));
}

TEST_CASE("run_trials is deterministic and budget-exact across modes") {
    const ExperimentPreset p = small_preset("exp1", 3);
    const std::vector<Mode> modes = {Mode::SumPartial, Mode::NaiveFull};
    const auto curves = run_trials(p, modes, 3);
    REQUIRE(curves.size() == 2);

    const int n = static_cast<int>(p.scenes.size());
    for (const auto& [mode, curve] : curves) {
        REQUIRE(curve.trials.size() == 3);
        for (const TrialCurve& t : curve.trials) {
            REQUIRE(t.trace.records.size() == 3);
            for (int it = 0; it < 3; ++it) {
                const long expect = mode == Mode::SumPartial
                                        ? 5L * n + (it + 1)
                                        : static_cast<long>(n) * (5 + it + 1);
                CHECK(t.trace.records[it].sim_count == expect);
            }
        }
        CHECK(curve.aggregate.size() == 3);
    }

    const auto again = run_trials(p, {Mode::SumPartial}, 3);
    const auto& a = curves.at(Mode::SumPartial);
    const auto& b = again.at(Mode::SumPartial);
    for (int k = 0; k < 3; ++k) {
        for (int it = 0; it < 3; ++it) {
            CHECK(a.trials[k].trace.records[it].total_error ==
                  b.trials[k].trace.records[it].total_error);
            CHECK(a.trials[k].trace.records[it].theta ==
                  b.trials[k].trace.records[it].theta);
        }
    }

    // Distinct seeds actually produce distinct trajectories.
    bool differ = false;
    for (int it = 0; it < 3; ++it) {
        differ |= a.trials[0].trace.records[it].total_error !=
                  a.trials[1].trace.records[it].total_error;
    }
    CHECK(differ);
}

TEST_CASE("export, overwrite guard, and import round-trip") {
    const ExperimentPreset p = small_preset("exp1", 3);
    const auto curves = run_trials(p, {Mode::SumPartial, Mode::NaiveFull}, 3);
    const auto dir = fresh_dir("sumgp_bench_export");

    for (const auto& [mode, curve] : curves) {
        export_curves(curve, dir, p.space.total_dims());
    }
    int n_files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) {
        n_files += 1;
    }
    CHECK(n_files == 2 * 3 + 2); // trials plus one aggregate per mode

    CHECK_THROWS_WITH_AS(
        export_curves(curves.at(Mode::SumPartial), dir, p.space.total_dims()),
        doctest::Contains("--force"), Error);
    export_curves(curves.at(Mode::SumPartial), dir, p.space.total_dims(), true);

    const LearningCurve back = import_curves(dir, "sum-partial");
    const LearningCurve& orig = curves.at(Mode::SumPartial);
    REQUIRE(back.trials.size() == orig.trials.size());
    for (std::size_t k = 0; k < back.trials.size(); ++k) {
        CHECK(back.trials[k].seed == orig.trials[k].seed);
        REQUIRE(back.trials[k].trace.records.size() ==
                orig.trials[k].trace.records.size());
        for (std::size_t i = 0; i < back.trials[k].trace.records.size(); ++i) {
            const TraceRecord& r = back.trials[k].trace.records[i];
            const TraceRecord& o = orig.trials[k].trace.records[i];
            CHECK(r.iteration == o.iteration);
            CHECK(r.sim_count == o.sim_count);
            CHECK(r.selected_obs == o.selected_obs);
            // Nine significant digits survive the text round-trip.
            CHECK(std::abs(r.total_error - o.total_error) <=
                  1e-8 * std::max(1.0, std::abs(o.total_error)));
            CHECK(std::abs(r.best_error - o.best_error) <=
                  1e-8 * std::max(1.0, std::abs(o.best_error)));
        }
    }

    const auto agg = read_aggregate_csv(dir / "sum-partial_agg.csv");
    REQUIRE(agg.size() == orig.aggregate.size());
    for (std::size_t i = 0; i < agg.size(); ++i) {
        CHECK(agg[i].iter == orig.aggregate[i].iter);
        CHECK(std::abs(agg[i].err_p50 - orig.aggregate[i].err_p50) <=
              1e-8 * std::max(1.0, std::abs(orig.aggregate[i].err_p50)));
    }

    CHECK_THROWS_AS(import_curves(dir, "sum-full"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("incremental preset prefix matches the from-scratch run (scaled)") {
    // exp4 scaled down: inject the later observations early so a short
    // run exercises the prefix property against exp1.
    ExperimentPreset inc = small_preset("exp4", 5);
    inc.schedule = {{0, {0, 1, 2}}, {3, {3, 4, 5}}, {4, {6, 7}}};
    ExperimentPreset base = small_preset("exp1", 3);

    BoConfig cfg;
    cfg.iterations = inc.iterations;
    cfg.seed = 4;
    const BoTrace inc_trace =
        run(cfg, inc.make_observations(), inc.space, inc.grid, inc.schedule);
    BoConfig cfg2 = cfg;
    cfg2.iterations = base.iterations;
    const BoTrace base_trace =
        run(cfg2, base.make_observations(), base.space, base.grid);

    REQUIRE(inc_trace.records.size() == 5);
    REQUIRE(base_trace.records.size() == 3);
    for (int t = 0; t < 3; ++t) {
        const TraceRecord& a = inc_trace.records[t];
        const TraceRecord& b = base_trace.records[t];
        CHECK(a.selected_obs == b.selected_obs);
        CHECK(a.partial_reward == b.partial_reward);
        CHECK(a.sim_count == b.sim_count);
        CHECK(a.total_error == b.total_error);
        CHECK(a.best_error == b.best_error);
        // exp1's five dims are the leading flat dims of exp4's space.
        for (int j = 0; j < base.space.total_dims(); ++j) {
            CHECK(a.theta[j] == b.theta[j]);
        }
        CHECK(a.active_dims == std::vector<int>{0, 1, 2, 3, 4});
    }
    // After the injections every dimension is active.
    CHECK(inc_trace.records[4].active_dims.size() == 9);
    CHECK(inc_trace.records[4].theta.size() == 9);
}
