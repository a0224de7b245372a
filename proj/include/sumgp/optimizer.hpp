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
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <vector>

#include <json.hpp>

#include "sumgp/gp.hpp"
#include "sumgp/param_space.hpp"
#include "sumgp/surrogate.hpp"

namespace sumgp {

enum class Mode { NaiveFull, SumFull, SumPartial };

std::string mode_name(Mode m);
Mode mode_from_string(const std::string& s);

struct BoConfig {
    std::vector<double> beta = {2.0}; // scalar broadcast or one per observation
    int n_init = 5;
    int iterations = 200;
    Mode mode = Mode::SumPartial;
    int multistart_count = 16;
    int ascent_steps = 50;
    std::uint64_t seed = 0;

    double beta_for(std::size_t i) const;
    nlohmann::json to_json() const;
    static BoConfig from_json(const nlohmann::json& j);
};

struct TraceRecord {
    int iteration = 0;
    Vector theta;          // full-space vector (inactive dims at midpoints)
    int selected_obs = -1; // dataset index, or -1 for "all"
    double partial_reward = 0.0;
    long sim_count = 0;
    double total_error = 0.0; // -sum of rewards over active observations
    double best_error = 0.0;
    std::vector<int> active_dims; // flat indices active at this iteration
};

struct BoTrace {
    std::vector<TraceRecord> records;
    void to_csv(std::ostream& out, int total_dims) const;
};

/// One per-observation GP over the subspace of the objects in its scene.
struct SumGpEntry {
    int obs_index = -1;
    SubsetIndex k;
    GpModel model;
};

struct SumGpState {
    std::vector<SumGpEntry> entries;
    long sim_count = 0;
};

/// alpha(theta) = sum_i mu_i(theta_{K_i}) + beta_i * sigma_i(theta_{K_i}).
double acquisition_sum_ucb(const SumGpState& state, const ParameterSpace& space,
                           const Vector& theta, const std::vector<double>& beta);

/// Standard UCB on a single full-dimensional GP.
double acquisition_naive_ucb(const GpModel& model, const ParameterSpace& space,
                             const Vector& theta, double beta);

/// Index (into state.entries) of the entry with the largest posterior
/// standard deviation at theta; ties go to the fewest data points, then
/// the lowest index.
int select_observation(const SumGpState& state, const ParameterSpace& space,
                       const Vector& theta);

/// Observations injected at given iterations; an empty schedule means
/// all observations are available from the start.
using Schedule = std::map<int, std::vector<int>>;

/// Drives one optimization run. The active observation set (and with it
/// the active slice of the parameter space) grows as the schedule fires.
class BoRunner {
public:
    BoRunner(BoConfig config, const ParameterSpace& space,
             std::vector<Observation> dataset, GridConfig grid);

    /// Seeds every GP with n_init uniformly sampled evaluations.
    void seed(const std::vector<int>& active_obs);

    /// One BO iteration: propose, evaluate (partially or fully), update.
    TraceRecord step();

    /// Adds a fresh, seeded GP for one more observation; existing GPs
    /// are untouched. Sum modes only.
    void add_observation(int obs_index, int n_init_new);

    const SumGpState& state() const { return state_; }
    const GpModel& naive_model() const;
    long sim_count() const { return state_.sim_count; }
    int iteration() const { return iteration_; }

    /// Proposes the next parameters without evaluating them.
    Vector propose_next();

private:
    Vector propose_u();
    Vector active_u_to_full_theta(const Vector& u) const;
    Vector entry_input(const SumGpEntry& entry, const Vector& u) const;
    double acquisition_active(const Vector& u) const;
    Vector ascend_from(Vector u) const;
    double evaluate_reward(int obs_index, const Vector& theta_full);
    double total_error_at(const Vector& theta_full); // reporting only
    void update_entry(std::size_t entry_idx, const Vector& input, double reward);
    void update_naive(const Vector& u, double total_reward);
    void activate_objects(const SubsetIndex& k);

    BoConfig config_;
    const ParameterSpace& space_;
    std::vector<Observation> dataset_;
    GridConfig grid_;
    std::mt19937_64 rng_;

    SumGpState state_;
    std::optional<GpModel> naive_;
    std::vector<int> active_dims_;               // flat indices, ascending
    std::vector<std::vector<int>> entry_active_; // per entry: positions in active u
    Vector base_theta_;                          // midpoints for inactive dims

    Vector incumbent_u_;
    double incumbent_error_ = 0.0;
    bool have_incumbent_ = false;
    int iteration_ = 0;
};

/// Full run: seeding, iterations, scheduled injections; deterministic
/// per config seed. If error_out is given, a simulator failure aborts
/// the run and returns the partial trace with the message stored there;
/// otherwise the error propagates.
BoTrace run(const BoConfig& config, const std::vector<Observation>& dataset,
            const ParameterSpace& space, const GridConfig& grid,
            const Schedule& schedule = {}, std::string* error_out = nullptr);

} // namespace sumgp
