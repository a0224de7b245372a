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

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "sumgp/optimizer.hpp"

namespace sumgp {

/// A fixed experiment definition: object roster, scenes, ground truth,
/// iteration budget and (for the incremental preset) injection schedule.
struct ExperimentPreset {
    std::string name;
    ParameterSpace space;
    std::vector<SceneSpec> scenes;
    Vector theta_star;
    int iterations = 200;
    Schedule schedule; // empty: all observations from the start
    std::vector<std::uint64_t> trial_seeds;
    GridConfig grid;

    std::vector<Observation> make_observations(const NoiseConfig& noise = {}) const;

    nlohmann::json to_json() const;
    static ExperimentPreset from_json(const nlohmann::json& j);
};

/// exp1..exp3: growing object/observation sets; exp4: exp3's content
/// injected incrementally at iterations 0, 50 and 100.
ExperimentPreset build_preset(const std::string& name);

struct TrialCurve {
    std::uint64_t seed = 0;
    BoTrace trace;
};

struct AggregateRow {
    int iter = 0;
    double sim_count_median = 0.0;
    double err_p25 = 0.0;
    double err_p50 = 0.0;
    double err_p75 = 0.0;
};

struct LearningCurve {
    std::string mode;
    std::vector<TrialCurve> trials;
    std::vector<AggregateRow> aggregate;
};

std::vector<AggregateRow> aggregate_trials(const std::vector<TrialCurve>& trials);

/// Runs every mode with seeds 0..n_trials-1 on one shared dataset.
/// Independent trials execute in parallel.
std::map<Mode, LearningCurve> run_trials(const ExperimentPreset& preset,
                                         const std::vector<Mode>& modes,
                                         int n_trials);

struct CompareResult {
    double err_a = 0.0;
    double err_b = 0.0;
    double ratio = 0.0;
};

/// Median total error of each curve at a cumulative simulation budget,
/// linearly interpolated between recorded points.
CompareResult compare(const LearningCurve& a, const LearningCurve& b,
                      double at_sim_budget);

/// Median total error of one curve at a simulation budget.
double error_at_budget(const LearningCurve& curve, double at_sim_budget);

/// Writes <mode>_seed<k>.csv per trial plus <mode>_agg.csv.
void export_curves(const LearningCurve& curve, const std::filesystem::path& dir,
                   int total_dims, bool force = false);

/// Rebuilds a LearningCurve (iter, sim_count, selected_obs, total_error,
/// best_error columns only) from exported per-trial CSVs.
LearningCurve import_curves(const std::filesystem::path& dir,
                            const std::string& mode);

/// Reads an aggregate CSV written by export_curves.
std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& file);

} // namespace sumgp
