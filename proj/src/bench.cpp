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
#include "sumgp/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <limits>
#include <sstream>
#include <thread>

namespace sumgp {

namespace {

// Desk-scale roster. True parameter values sit at off-center spots so
// every parameter has a visible, monotone effect on its scenes.
struct ObjectTruth {
    ObjectSpec spec;
    std::vector<double> theta_star;
};

std::vector<ObjectTruth> roster() {
    return {
        {ObjectSpec::deformable(0, "slime"), {1500.0, 0.3}},
        {ObjectSpec::rigid(1, "cylinder"), {0.3}},
        {ObjectSpec::rigid(2, "ladle"), {0.15}},
        {ObjectSpec::rigid(3, "cube"), {1.2}},
        {ObjectSpec::deformable(4, "sponge"), {4000.0, -0.2}},
        {ObjectSpec::deformable(5, "bag"), {2500.0, 0.25}},
    };
}

SceneSpec make_scene(const std::string& name, int bottom_id, int top_id,
                     Footprint bottom, double top_radius, double top_height,
                     double dx, double dy) {
    SceneSpec s;
    s.name = name;
    s.bottom_id = bottom_id;
    s.top_id = top_id;
    s.bottom = bottom;
    s.top = {bottom.cx + dx, bottom.cy + dy, top_radius, top_height};
    s.dx = dx;
    s.dy = dy;
    return s;
}

// Scene list shared by the presets; exp1 uses the first 3, exp2 the
// first 6, exp3 (and exp4) all 8. The ladle-slime scene has a rigid
// bottom, so only the slime stiffness actually shapes it.
std::vector<SceneSpec> all_scenes() {
    const Footprint slime_b{0.16, 0.12, 0.055, 0.06};
    const Footprint ladle_b{0.16, 0.12, 0.05, 0.03};
    const Footprint sponge_b{0.16, 0.12, 0.06, 0.05};
    const Footprint bag_b{0.16, 0.12, 0.05, 0.045};
    return {
        make_scene("slime-cube", 0, 3, slime_b, 0.03, 0.04, 0.01, 0.005),
        make_scene("slime-cylinder", 0, 1, slime_b, 0.025, 0.05, -0.012, 0.008),
        make_scene("ladle-slime", 2, 0, ladle_b, 0.04, 0.035, 0.008, -0.006),
        make_scene("sponge-cube", 4, 3, sponge_b, 0.03, 0.04, -0.01, 0.01),
        make_scene("sponge-cylinder", 4, 1, sponge_b, 0.025, 0.05, 0.012, -0.004),
        make_scene("sponge-slime", 4, 0, sponge_b, 0.04, 0.035, 0.0, 0.012),
        make_scene("bag-cylinder", 5, 1, bag_b, 0.025, 0.05, 0.01, 0.01),
        make_scene("bag-cube", 5, 3, bag_b, 0.03, 0.04, -0.008, -0.01),
    };
}

ExperimentPreset preset_with(const std::string& name, int n_objects, int n_scenes) {
    const auto objs = roster();
    std::vector<ObjectSpec> specs;
    std::vector<double> truth;
    for (int i = 0; i < n_objects; ++i) {
        specs.push_back(objs[i].spec);
        for (double v : objs[i].theta_star) truth.push_back(v);
    }
    const auto scenes = all_scenes();
    ExperimentPreset p{name, ParameterSpace(std::move(specs)), {}, Vector(), 200,
                       {}, {}, GridConfig{}};
    p.scenes.assign(scenes.begin(), scenes.begin() + n_scenes);
    p.theta_star = Eigen::Map<const Vector>(truth.data(), truth.size());
    for (std::uint64_t s = 0; s < 10; ++s) p.trial_seeds.push_back(s);
    return p;
}

double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.empty()) throw Error("percentile: empty sample");
    const double pos = p * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    const double frac = pos - lo;
    return v[lo] * (1.0 - frac) + v[hi] * frac;
}

std::string fmt9(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void guard_overwrite(const std::filesystem::path& file, bool force) {
    if (!force && std::filesystem::exists(file)) {
        throw Error("refusing to overwrite " + file.string() + " (use --force)");
    }
}

} // namespace

std::vector<Observation> ExperimentPreset::make_observations(
    const NoiseConfig& noise) const {
    return make_dataset(scenes, space, theta_star, grid, noise);
}

ExperimentPreset build_preset(const std::string& name) {
    if (name == "exp1") return preset_with("exp1", 4, 3);
    if (name == "exp2") return preset_with("exp2", 5, 6);
    if (name == "exp3") return preset_with("exp3", 6, 8);
    if (name == "exp4") {
        ExperimentPreset p = preset_with("exp4", 6, 8);
        p.schedule = {{0, {0, 1, 2}}, {50, {3, 4, 5}}, {100, {6, 7}}};
        return p;
    }
    throw Error("build_preset: unknown preset '" + name + "'");
}

nlohmann::json ExperimentPreset::to_json() const {
    nlohmann::json j;
    j["name"] = name;
    j["space"] = space.to_json();
    j["scenes"] = nlohmann::json::array();
    for (const SceneSpec& s : scenes) j["scenes"].push_back(s.to_json());
    j["theta_star"] = std::vector<double>(theta_star.data(),
                                          theta_star.data() + theta_star.size());
    j["iterations"] = iterations;
    nlohmann::json sched = nlohmann::json::object();
    for (const auto& [iter, obs] : schedule) sched[std::to_string(iter)] = obs;
    j["schedule"] = sched;
    j["trial_seeds"] = trial_seeds;
    j["grid"] = grid.to_json();
    return j;
}

ExperimentPreset ExperimentPreset::from_json(const nlohmann::json& j) {
    ExperimentPreset p{j.at("name").get<std::string>(),
                       ParameterSpace::from_json(j.at("space")),
                       {},
                       Vector(),
                       j.at("iterations").get<int>(),
                       {},
                       j.at("trial_seeds").get<std::vector<std::uint64_t>>(),
                       GridConfig::from_json(j.at("grid"))};
    for (const auto& js : j.at("scenes")) p.scenes.push_back(SceneSpec::from_json(js));
    const auto star = j.at("theta_star").get<std::vector<double>>();
    p.theta_star = Eigen::Map<const Vector>(star.data(), star.size());
    for (const auto& [key, obs] : j.at("schedule").items()) {
        p.schedule[std::stoi(key)] = obs.get<std::vector<int>>();
    }
    return p;
}

std::vector<AggregateRow> aggregate_trials(const std::vector<TrialCurve>& trials) {
    if (trials.empty()) throw Error("aggregate_trials: no trials");
    const std::size_t n_iters = trials[0].trace.records.size();
    for (const TrialCurve& t : trials) {
        if (t.trace.records.size() != n_iters) {
            throw Error("aggregate_trials: trials have differing lengths");
        }
    }
    std::vector<AggregateRow> out;
    out.reserve(n_iters);
    for (std::size_t i = 0; i < n_iters; ++i) {
        std::vector<double> errs, sims;
        for (const TrialCurve& t : trials) {
            errs.push_back(t.trace.records[i].total_error);
            sims.push_back(static_cast<double>(t.trace.records[i].sim_count));
        }
        AggregateRow row;
        row.iter = trials[0].trace.records[i].iteration;
        row.sim_count_median = percentile(sims, 0.5);
        row.err_p25 = percentile(errs, 0.25);
        row.err_p50 = percentile(errs, 0.5);
        row.err_p75 = percentile(errs, 0.75);
        out.push_back(row);
    }
    return out;
}

std::map<Mode, LearningCurve> run_trials(const ExperimentPreset& preset,
                                         const std::vector<Mode>& modes,
                                         int n_trials) {
    if (n_trials < 1) throw Error("run_trials: n_trials must be >= 1");
    // Every mode sees the identical dataset.
    const std::vector<Observation> dataset = preset.make_observations();

    std::map<Mode, LearningCurve> out;
    for (Mode mode : modes) {
        std::vector<std::future<BoTrace>> futures;
        std::vector<std::uint64_t> seeds;
        for (int k = 0; k < n_trials; ++k) {
            const std::uint64_t seed = k < static_cast<int>(preset.trial_seeds.size())
                                           ? preset.trial_seeds[k]
                                           : static_cast<std::uint64_t>(k);
            seeds.push_back(seed);
            BoConfig cfg;
            cfg.mode = mode;
            cfg.iterations = preset.iterations;
            cfg.seed = seed;
            futures.push_back(std::async(std::launch::async, [cfg, &dataset, &preset] {
                return run(cfg, dataset, preset.space, preset.grid, preset.schedule);
            }));
        }
        LearningCurve curve;
        curve.mode = mode_name(mode);
        for (int k = 0; k < n_trials; ++k) {
            curve.trials.push_back({seeds[k], futures[k].get()});
        }
        curve.aggregate = aggregate_trials(curve.trials);
        out[mode] = curve;
    }
    return out;
}

double error_at_budget(const LearningCurve& curve, double at_sim_budget) {
    const auto& agg = curve.aggregate;
    if (agg.empty()) throw Error("error_at_budget: empty curve");
    if (at_sim_budget < agg.front().sim_count_median ||
        at_sim_budget > agg.back().sim_count_median) {
        throw Error("error_at_budget: budget " + std::to_string(at_sim_budget) +
                    " outside recorded range [" +
                    std::to_string(agg.front().sim_count_median) + ", " +
                    std::to_string(agg.back().sim_count_median) + "]");
    }
    for (std::size_t i = 1; i < agg.size(); ++i) {
        if (at_sim_budget <= agg[i].sim_count_median) {
            const double x0 = agg[i - 1].sim_count_median;
            const double x1 = agg[i].sim_count_median;
            if (x1 == x0) return agg[i].err_p50;
            const double f = (at_sim_budget - x0) / (x1 - x0);
            return agg[i - 1].err_p50 * (1.0 - f) + agg[i].err_p50 * f;
        }
    }
    return agg.back().err_p50;
}

CompareResult compare(const LearningCurve& a, const LearningCurve& b,
                      double at_sim_budget) {
    CompareResult r;
    r.err_a = error_at_budget(a, at_sim_budget);
    r.err_b = error_at_budget(b, at_sim_budget);
    r.ratio = r.err_b != 0.0 ? r.err_a / r.err_b
                             : std::numeric_limits<double>::infinity();
    return r;
}

void export_curves(const LearningCurve& curve, const std::filesystem::path& dir,
                   int /*total_dims*/, bool force) {
    std::filesystem::create_directories(dir);
    for (const TrialCurve& t : curve.trials) {
        const auto file =
            dir / (curve.mode + "_seed" + std::to_string(t.seed) + ".csv");
        guard_overwrite(file, force);
        std::ofstream out(file);
        if (!out) throw Error("export_curves: cannot write " + file.string());
        out << "iter,sim_count,selected_obs,total_error,best_error\n";
        for (const TraceRecord& r : t.trace.records) {
            out << r.iteration << ',' << r.sim_count << ',';
            if (r.selected_obs < 0) {
                out << "all";
            } else {
                out << r.selected_obs;
            }
            out << ',' << fmt9(r.total_error) << ',' << fmt9(r.best_error) << '\n';
        }
    }
    const auto agg_file = dir / (curve.mode + "_agg.csv");
    guard_overwrite(agg_file, force);
    std::ofstream out(agg_file);
    if (!out) throw Error("export_curves: cannot write " + agg_file.string());
    out << "iter,sim_count_median,err_p25,err_p50,err_p75\n";
    for (const AggregateRow& row : curve.aggregate) {
        out << row.iter << ',' << fmt9(row.sim_count_median) << ','
            << fmt9(row.err_p25) << ',' << fmt9(row.err_p50) << ','
            << fmt9(row.err_p75) << '\n';
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

} // namespace

LearningCurve import_curves(const std::filesystem::path& dir,
                            const std::string& mode) {
    LearningCurve curve;
    curve.mode = mode;
    std::vector<std::pair<std::uint64_t, std::filesystem::path>> files;
    const std::string prefix = mode + "_seed";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string fn = entry.path().filename().string();
        if (fn.rfind(prefix, 0) == 0 && entry.path().extension() == ".csv") {
            const std::string num = fn.substr(prefix.size(),
                                              fn.size() - prefix.size() - 4);
            // Skip companions like <mode>_seed<k>_trace.csv.
            if (num.empty() ||
                num.find_first_not_of("0123456789") != std::string::npos) {
                continue;
            }
            files.emplace_back(std::stoull(num), entry.path());
        }
    }
    if (files.empty()) {
        throw Error("import_curves: no " + prefix + "*.csv files in " + dir.string());
    }
    std::sort(files.begin(), files.end());
    for (const auto& [seed, path] : files) {
        std::ifstream in(path);
        if (!in) throw Error("import_curves: cannot read " + path.string());
        std::string line;
        std::getline(in, line);
        if (line != "iter,sim_count,selected_obs,total_error,best_error") {
            throw Error("import_curves: unexpected header in " + path.string());
        }
        TrialCurve trial;
        trial.seed = seed;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto f = split_csv_line(line);
            if (f.size() != 5) {
                throw Error("import_curves: malformed row in " + path.string());
            }
            TraceRecord r;
            r.iteration = std::stoi(f[0]);
            r.sim_count = std::stol(f[1]);
            r.selected_obs = f[2] == "all" ? -1 : std::stoi(f[2]);
            r.total_error = std::stod(f[3]);
            r.best_error = std::stod(f[4]);
            trial.trace.records.push_back(std::move(r));
        }
        curve.trials.push_back(std::move(trial));
    }
    curve.aggregate = aggregate_trials(curve.trials);
    return curve;
}

std::vector<AggregateRow> read_aggregate_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error("read_aggregate_csv: cannot read " + file.string());
    std::string line;
    std::getline(in, line);
    if (line != "iter,sim_count_median,err_p25,err_p50,err_p75") {
        throw Error("read_aggregate_csv: unexpected header in " + file.string());
    }
    std::vector<AggregateRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) {
            throw Error("read_aggregate_csv: malformed row in " + file.string());
        }
        AggregateRow r;
        r.iter = std::stoi(f[0]);
        r.sim_count_median = std::stod(f[1]);
        r.err_p25 = std::stod(f[2]);
        r.err_p50 = std::stod(f[3]);
        r.err_p75 = std::stod(f[4]);
        rows.push_back(r);
    }
    return rows;
}

} // namespace sumgp
