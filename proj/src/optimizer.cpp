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
#include "sumgp/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

namespace sumgp {

namespace {

constexpr double kFdStep = 1e-4;      // central differences in the unit cube
constexpr double kAscentStep0 = 0.1;  // backtracking starts here, halves

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t refit_seed(std::uint64_t run_seed, std::uint64_t tag, std::uint64_t n) {
    return splitmix64(run_seed ^ splitmix64(tag ^ splitmix64(n)));
}

Vector clamp_unit(Vector u) {
    for (int j = 0; j < u.size(); ++j) u[j] = std::clamp(u[j], 0.0, 1.0);
    return u;
}

// GP input for an entry: normalized coordinates of the subset dims, in
// the subset's order.
Vector entry_input_from_theta(const ParameterSpace& space, const SubsetIndex& k,
                              const Vector& theta) {
    const Vector sub = slice_params(space, theta, k);
    const std::vector<int> idx = space.subset_flat_indices(k);
    Vector u(sub.size());
    for (int j = 0; j < sub.size(); ++j) {
        u[j] = normalize_dim(space.flat_dims()[idx[j]], sub[j]);
    }
    return u;
}

} // namespace

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::NaiveFull: return "naive-full";
        case Mode::SumFull: return "sum-full";
        case Mode::SumPartial: return "sum-partial";
    }
    throw Error("mode_name: invalid mode");
}

Mode mode_from_string(const std::string& s) {
    if (s == "naive-full" || s == "naive") return Mode::NaiveFull;
    if (s == "sum-full") return Mode::SumFull;
    if (s == "sum-partial" || s == "sum") return Mode::SumPartial;
    throw Error("mode_from_string: unknown mode '" + s + "'");
}

double BoConfig::beta_for(std::size_t i) const {
    if (beta.empty()) throw Error("BoConfig: empty beta list");
    const double b = beta.size() == 1 ? beta[0] : beta.at(i);
    if (b < 0.0) throw Error("BoConfig: beta must be >= 0");
    return b;
}

nlohmann::json BoConfig::to_json() const {
    nlohmann::json j;
    j["mode"] = mode_name(mode);
    if (beta.size() == 1) {
        j["beta"] = beta[0];
    } else {
        j["beta"] = beta;
    }
    j["n_init"] = n_init;
    j["iterations"] = iterations;
    j["multistart_count"] = multistart_count;
    j["ascent_steps"] = ascent_steps;
    j["seed"] = seed;
    return j;
}

BoConfig BoConfig::from_json(const nlohmann::json& j) {
    BoConfig c;
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("beta")) {
        if (j["beta"].is_array()) {
            c.beta = j["beta"].get<std::vector<double>>();
        } else {
            c.beta = {j["beta"].get<double>()};
        }
    }
    if (j.contains("n_init")) c.n_init = j.at("n_init").get<int>();
    if (j.contains("iterations")) c.iterations = j.at("iterations").get<int>();
    if (j.contains("multistart_count")) {
        c.multistart_count = j.at("multistart_count").get<int>();
    }
    if (j.contains("ascent_steps")) c.ascent_steps = j.at("ascent_steps").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (c.iterations < 1 || c.multistart_count < 1 || c.ascent_steps < 1 ||
        c.n_init < 0) {
        throw Error("BoConfig: invalid counts");
    }
    return c;
}

double acquisition_sum_ucb(const SumGpState& state, const ParameterSpace& space,
                           const Vector& theta, const std::vector<double>& beta) {
    double acq = 0.0;
    for (std::size_t i = 0; i < state.entries.size(); ++i) {
        const SumGpEntry& e = state.entries[i];
        const Vector u = entry_input_from_theta(space, e.k, theta);
        const GpModel::Posterior p = e.model.posterior(u);
        const double b = beta.size() == 1 ? beta[0] : beta.at(i);
        acq += p.mean + b * std::sqrt(p.variance);
    }
    return acq;
}

double acquisition_naive_ucb(const GpModel& model, const ParameterSpace& space,
                             const Vector& theta, double beta) {
    const Vector u = normalize(space, theta);
    const GpModel::Posterior p = model.posterior(u);
    return p.mean + beta * std::sqrt(p.variance);
}

int select_observation(const SumGpState& state, const ParameterSpace& space,
                       const Vector& theta) {
    if (state.entries.empty()) throw Error("select_observation: empty state");
    int best = 0;
    double best_sigma = -1.0;
    for (std::size_t i = 0; i < state.entries.size(); ++i) {
        const SumGpEntry& e = state.entries[i];
        const Vector u = entry_input_from_theta(space, e.k, theta);
        const double sigma = std::sqrt(e.model.posterior(u).variance);
        const bool better =
            sigma > best_sigma ||
            (sigma == best_sigma &&
             e.model.size() < state.entries[best].model.size());
        if (better) {
            best = static_cast<int>(i);
            best_sigma = sigma;
        }
    }
    return best;
}

BoRunner::BoRunner(BoConfig config, const ParameterSpace& space,
                   std::vector<Observation> dataset, GridConfig grid)
    : config_(std::move(config)), space_(space), dataset_(std::move(dataset)),
      grid_(grid), rng_(config_.seed) {
    base_theta_ = Vector(space_.total_dims());
    for (int j = 0; j < space_.total_dims(); ++j) {
        base_theta_[j] = denormalize_dim(space_.flat_dims()[j], 0.5);
    }
}

const GpModel& BoRunner::naive_model() const {
    if (!naive_) throw Error("BoRunner: no naive model in this mode");
    return *naive_;
}

void BoRunner::activate_objects(const SubsetIndex& k) {
    std::set<int> dims(active_dims_.begin(), active_dims_.end());
    for (int idx : space_.subset_flat_indices(k)) dims.insert(idx);
    const std::vector<int> new_active(dims.begin(), dims.end());

    if (have_incumbent_ || incumbent_u_.size() > 0) {
        // Remap the incumbent, filling newly activated dims with midpoints.
        Vector u = Vector::Constant(new_active.size(), 0.5);
        for (std::size_t nj = 0; nj < new_active.size(); ++nj) {
            auto it = std::find(active_dims_.begin(), active_dims_.end(),
                                new_active[nj]);
            if (it != active_dims_.end()) {
                u[nj] = incumbent_u_[it - active_dims_.begin()];
            }
        }
        incumbent_u_ = u;
    }
    active_dims_ = new_active;

    // Per-entry positions of its subset dims inside the active vector.
    entry_active_.clear();
    for (const SumGpEntry& e : state_.entries) {
        std::vector<int> pos;
        for (int idx : space_.subset_flat_indices(e.k)) {
            auto it = std::find(active_dims_.begin(), active_dims_.end(), idx);
            if (it == active_dims_.end()) {
                throw Error("BoRunner: entry dim not active");
            }
            pos.push_back(static_cast<int>(it - active_dims_.begin()));
        }
        entry_active_.push_back(std::move(pos));
    }
}

Vector BoRunner::active_u_to_full_theta(const Vector& u) const {
    Vector theta = base_theta_;
    for (std::size_t j = 0; j < active_dims_.size(); ++j) {
        theta[active_dims_[j]] =
            denormalize_dim(space_.flat_dims()[active_dims_[j]], u[j]);
    }
    return theta;
}

Vector BoRunner::entry_input(const SumGpEntry& entry, const Vector& u) const {
    const std::size_t i = &entry - state_.entries.data();
    const std::vector<int>& pos = entry_active_[i];
    Vector out(pos.size());
    for (std::size_t j = 0; j < pos.size(); ++j) out[j] = u[pos[j]];
    return out;
}

double BoRunner::acquisition_active(const Vector& u) const {
    if (config_.mode == Mode::NaiveFull) {
        const GpModel::Posterior p = naive_->posterior(u);
        return p.mean + config_.beta_for(0) * std::sqrt(p.variance);
    }
    double acq = 0.0;
    for (std::size_t i = 0; i < state_.entries.size(); ++i) {
        const GpModel::Posterior p =
            state_.entries[i].model.posterior(entry_input(state_.entries[i], u));
        acq += p.mean + config_.beta_for(i) * std::sqrt(p.variance);
    }
    return acq;
}

double BoRunner::evaluate_reward(int obs_index, const Vector& theta_full) {
    const Observation& obs = dataset_.at(obs_index);
    const Heightmap pred = surrogate_simulate(
        space_, obs.scene, slice_params(space_, theta_full, obs.k), grid_);
    return reward(obs.observed, pred);
}

double BoRunner::total_error_at(const Vector& theta_full) {
    double total = 0.0;
    for (const SumGpEntry& e : state_.entries) {
        total += evaluate_reward(e.obs_index, theta_full);
    }
    return -total;
}

void BoRunner::update_entry(std::size_t entry_idx, const Vector& input,
                            double reward_value) {
    SumGpEntry& e = state_.entries[entry_idx];
    GpModel grown = e.model.add_point(input, reward_value);
    const int n = grown.size();
    if (n >= 2 && (n <= 10 || n % 5 == 0)) {
        const GpHyperparams hp =
            fit_hyperparams(grown.data(), refit_seed(config_.seed, entry_idx, n));
        e.model = GpModel(grown.data(), hp);
    } else {
        e.model = std::move(grown);
    }
}

void BoRunner::update_naive(const Vector& u, double total_reward) {
    GpModel grown = naive_->add_point(u, total_reward);
    const int n = grown.size();
    if (n >= 2 && (n <= 10 || n % 5 == 0)) {
        const GpHyperparams hp =
            fit_hyperparams(grown.data(), refit_seed(config_.seed, 0, n));
        naive_ = GpModel(grown.data(), hp);
    } else {
        naive_ = std::move(grown);
    }
}

void BoRunner::seed(const std::vector<int>& active_obs) {
    if (!state_.entries.empty() || naive_) throw Error("BoRunner: already seeded");
    if (active_obs.empty()) throw Error("BoRunner: no initial observations");

    for (int oi : active_obs) {
        const Observation& obs = dataset_.at(oi);
        state_.entries.push_back(
            {oi, obs.k, GpModel::prior(space_.subset_dims(obs.k))});
    }
    SubsetIndex all;
    for (const SumGpEntry& e : state_.entries) {
        for (int id : e.k.object_ids) all.object_ids.push_back(id);
    }
    // Deduplicate while keeping validity for activate_objects.
    std::set<int> seen;
    std::vector<int> ids;
    for (int id : all.object_ids) {
        if (seen.insert(id).second) ids.push_back(id);
    }
    all.object_ids = ids;
    activate_objects(all);

    if (config_.mode == Mode::NaiveFull) {
        naive_ = GpModel::prior(static_cast<int>(active_dims_.size()));
    }

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < config_.n_init; ++s) {
        Vector u(active_dims_.size());
        for (std::size_t j = 0; j < active_dims_.size(); ++j) {
            const DimSpec& d = space_.flat_dims()[active_dims_[j]];
            const double v = d.lower + unit(rng_) * (d.upper - d.lower);
            u[j] = normalize_dim(d, v);
        }
        const Vector theta_full = active_u_to_full_theta(u);
        double total = 0.0;
        for (std::size_t i = 0; i < state_.entries.size(); ++i) {
            const double r =
                evaluate_reward(state_.entries[i].obs_index, theta_full);
            state_.sim_count += 1;
            total += r;
            if (config_.mode != Mode::NaiveFull) {
                SumGpEntry& e = state_.entries[i];
                e.model = e.model.add_point(entry_input(e, u), r);
            }
        }
        if (config_.mode == Mode::NaiveFull) {
            naive_ = naive_->add_point(u, total);
        }
        const double err = -total;
        if (!have_incumbent_ || err < incumbent_error_) {
            incumbent_u_ = u;
            incumbent_error_ = err;
            have_incumbent_ = true;
        }
    }

    // One refit after the seed batch.
    if (config_.mode == Mode::NaiveFull) {
        if (naive_->size() >= 2) {
            const GpHyperparams hp = fit_hyperparams(
                naive_->data(), refit_seed(config_.seed, 0, naive_->size()));
            naive_ = GpModel(naive_->data(), hp);
        }
    } else {
        for (std::size_t i = 0; i < state_.entries.size(); ++i) {
            SumGpEntry& e = state_.entries[i];
            if (e.model.size() >= 2) {
                const GpHyperparams hp = fit_hyperparams(
                    e.model.data(), refit_seed(config_.seed, i, e.model.size()));
                e.model = GpModel(e.model.data(), hp);
            }
        }
    }
}

Vector BoRunner::ascend_from(Vector u) const {
    const int d = static_cast<int>(u.size());
    double f = acquisition_active(u);
    for (int it = 0; it < config_.ascent_steps; ++it) {
        Vector g(d);
        for (int j = 0; j < d; ++j) {
            Vector up = u, dn = u;
            up[j] = std::min(1.0, u[j] + kFdStep);
            dn[j] = std::max(0.0, u[j] - kFdStep);
            const double span = up[j] - dn[j];
            g[j] = span > 0.0
                       ? (acquisition_active(up) - acquisition_active(dn)) / span
                       : 0.0;
        }
        const double gnorm = g.norm();
        if (gnorm < 1e-10) break;
        const Vector dir = g / gnorm;
        double step = kAscentStep0;
        bool improved = false;
        while (step > 1e-6) {
            const Vector cand = clamp_unit(u + step * dir);
            const double fc = acquisition_active(cand);
            if (fc > f) {
                u = cand;
                improved = fc - f > 1e-9 * (1.0 + std::abs(f));
                f = fc;
                break;
            }
            step *= 0.5;
        }
        if (!improved) break;
    }
    return u;
}

Vector BoRunner::propose_u() {
    const int d = static_cast<int>(active_dims_.size());
    bool any_data = false;
    if (config_.mode == Mode::NaiveFull) {
        any_data = naive_ && naive_->size() > 0;
    } else {
        for (const SumGpEntry& e : state_.entries) {
            if (e.model.size() > 0) any_data = true;
        }
    }
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    if (!any_data) {
        Vector u(d);
        for (int j = 0; j < d; ++j) u[j] = unit(rng_);
        return u;
    }
    std::vector<Vector> starts;
    starts.reserve(config_.multistart_count);
    if (have_incumbent_) {
        starts.push_back(incumbent_u_);
    }
    while (static_cast<int>(starts.size()) < config_.multistart_count) {
        Vector u(d);
        for (int j = 0; j < d; ++j) u[j] = unit(rng_);
        starts.push_back(std::move(u));
    }
    Vector best_u;
    double best_f = -std::numeric_limits<double>::infinity();
    for (const Vector& s : starts) {
        const Vector refined = ascend_from(s);
        const double f = acquisition_active(refined);
        if (f > best_f) {
            best_f = f;
            best_u = refined;
        }
    }
    return best_u;
}

Vector BoRunner::propose_next() { return active_u_to_full_theta(propose_u()); }

TraceRecord BoRunner::step() {
    if (state_.entries.empty()) throw Error("BoRunner: step before seed");
    const Vector u = propose_u();
    const Vector theta_full = active_u_to_full_theta(u);

    TraceRecord rec;
    rec.iteration = iteration_;
    rec.theta = theta_full;
    rec.active_dims = active_dims_;

    double total = 0.0;
    if (config_.mode == Mode::SumPartial) {
        const int sel = select_observation(state_, space_, theta_full);
        const SumGpEntry& e = state_.entries[sel];
        const double r = evaluate_reward(e.obs_index, theta_full);
        state_.sim_count += 1;
        update_entry(sel, entry_input(e, u), r);
        rec.selected_obs = e.obs_index;
        rec.partial_reward = r;
        // Full error is reported out-of-band; the extra simulator calls
        // are not charged to the budget.
        total = r;
        for (const SumGpEntry& other : state_.entries) {
            if (other.obs_index != e.obs_index) {
                total += evaluate_reward(other.obs_index, theta_full);
            }
        }
    } else {
        std::vector<double> rewards(state_.entries.size());
        for (std::size_t i = 0; i < state_.entries.size(); ++i) {
            rewards[i] = evaluate_reward(state_.entries[i].obs_index, theta_full);
            state_.sim_count += 1;
            total += rewards[i];
        }
        if (config_.mode == Mode::NaiveFull) {
            update_naive(u, total);
        } else {
            for (std::size_t i = 0; i < state_.entries.size(); ++i) {
                update_entry(i, entry_input(state_.entries[i], u), rewards[i]);
            }
        }
        rec.selected_obs = -1;
        rec.partial_reward = total;
    }

    rec.total_error = -total;
    if (!have_incumbent_ || rec.total_error < incumbent_error_) {
        incumbent_u_ = u;
        incumbent_error_ = rec.total_error;
        have_incumbent_ = true;
    }
    rec.best_error = incumbent_error_;
    rec.sim_count = state_.sim_count;
    iteration_ += 1;
    return rec;
}

void BoRunner::add_observation(int obs_index, int n_init_new) {
    if (config_.mode == Mode::NaiveFull) {
        throw Error("add_observation: incremental observations require a sum mode");
    }
    const Observation& obs = dataset_.at(obs_index);
    for (int id : obs.k.object_ids) {
        space_.object(id); // throws on unknown object
    }
    state_.entries.push_back(
        {obs_index, obs.k, GpModel::prior(space_.subset_dims(obs.k))});
    activate_objects(obs.k);

    const std::size_t entry_idx = state_.entries.size() - 1;
    SumGpEntry& e = state_.entries[entry_idx];
    const std::vector<int> idx = space_.subset_flat_indices(e.k);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int s = 0; s < n_init_new; ++s) {
        Vector theta_k(idx.size());
        Vector input(idx.size());
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const DimSpec& d = space_.flat_dims()[idx[j]];
            theta_k[j] = d.lower + unit(rng_) * (d.upper - d.lower);
            input[j] = normalize_dim(d, theta_k[j]);
        }
        const Heightmap pred = surrogate_simulate(space_, obs.scene, theta_k, grid_);
        const double r = reward(obs.observed, pred);
        state_.sim_count += 1;
        e.model = e.model.add_point(input, r);
    }
    if (e.model.size() >= 2) {
        const GpHyperparams hp = fit_hyperparams(
            e.model.data(), refit_seed(config_.seed, entry_idx, e.model.size()));
        e.model = GpModel(e.model.data(), hp);
    }

    // The incumbent's error is stale once the objective gains a term;
    // re-evaluate it over the expanded active set (reporting only).
    if (have_incumbent_) {
        incumbent_error_ = total_error_at(active_u_to_full_theta(incumbent_u_));
    }
}

void BoTrace::to_csv(std::ostream& out, int total_dims) const {
    out << "iter";
    for (int j = 0; j < total_dims; ++j) out << ",theta" << j;
    out << ",selected_obs,partial_reward,sim_count,total_error,best_error\n";
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const TraceRecord& r : records) {
        out << r.iteration;
        for (int j = 0; j < total_dims; ++j) out << ',' << num(r.theta[j]);
        out << ',';
        if (r.selected_obs < 0) {
            out << "all";
        } else {
            out << r.selected_obs;
        }
        out << ',' << num(r.partial_reward) << ',' << r.sim_count << ','
            << num(r.total_error) << ',' << num(r.best_error) << '\n';
    }
}

BoTrace run(const BoConfig& config, const std::vector<Observation>& dataset,
            const ParameterSpace& space, const GridConfig& grid,
            const Schedule& schedule, std::string* error_out) {
    BoRunner runner(config, space, dataset, grid);
    std::vector<int> initial;
    if (schedule.empty()) {
        initial.resize(dataset.size());
        for (std::size_t i = 0; i < dataset.size(); ++i) {
            initial[i] = static_cast<int>(i);
        }
    } else {
        auto it = schedule.find(0);
        if (it == schedule.end()) {
            throw Error("run: schedule must inject observations at iteration 0");
        }
        initial = it->second;
    }
    runner.seed(initial);

    BoTrace trace;
    trace.records.reserve(config.iterations);
    for (int t = 0; t < config.iterations; ++t) {
        try {
            if (t > 0) {
                auto it = schedule.find(t);
                if (it != schedule.end()) {
                    for (int oi : it->second) {
                        runner.add_observation(oi, config.n_init);
                    }
                }
            }
            trace.records.push_back(runner.step());
        } catch (const Error& e) {
            if (!error_out) throw;
            *error_out = e.what();
            return trace;
        }
    }
    return trace;
}

} // namespace sumgp
