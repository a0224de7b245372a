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
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sumgp/bench.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Exit codes: 0 ok, 2 usage/config, 3 I/O, 4 overwrite guard, 5 runtime.
constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;
constexpr int kExitOverwrite = 4;
constexpr int kExitRuntime = 5;

struct CliError {
    int code;
    std::string message;
};

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw CliError{kExitIo, "cannot read " + path.string()};
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw CliError{kExitConfig, path.string() + ": " + e.what()};
    }
    return j;
}

void write_text_file(const fs::path& path, const std::string& text, bool force) {
    if (!force && fs::exists(path)) {
        throw CliError{kExitOverwrite,
                       "refusing to overwrite " + path.string() + " (use --force)"};
    }
    std::ofstream out(path);
    if (!out) throw CliError{kExitIo, "cannot write " + path.string()};
    out << text;
    if (!out) throw CliError{kExitIo, "write failed for " + path.string()};
}

sumgp::ExperimentPreset resolve_preset(const std::string& name,
                                       const std::string& preset_file) {
    try {
        if (!preset_file.empty()) {
            return sumgp::ExperimentPreset::from_json(read_json_file(preset_file));
        }
        return sumgp::build_preset(name);
    } catch (const sumgp::Error& e) {
        throw CliError{kExitConfig, e.what()};
    }
}

int cmd_gen_data(const std::string& preset_name, const std::string& preset_file,
                 const std::string& out_dir, double noise_amp,
                 std::uint64_t noise_seed, bool force) {
    const sumgp::ExperimentPreset preset = resolve_preset(preset_name, preset_file);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw CliError{kExitIo, "cannot create " + out_dir};

    sumgp::NoiseConfig noise{noise_amp, noise_seed};
    const auto observations = preset.make_observations(noise);

    write_text_file(fs::path(out_dir) / "preset.json", preset.to_json().dump(2) + "\n",
                    force);
    for (std::size_t i = 0; i < observations.size(); ++i) {
        const sumgp::Observation& obs = observations[i];
        const std::string stem = "obs_" + std::to_string(i);
        json jo;
        jo["scene"] = obs.scene.to_json();
        jo["k"] = obs.k.object_ids;
        jo["heightmap"] = stem + ".hmap";
        write_text_file(fs::path(out_dir) / (stem + ".json"), jo.dump(2) + "\n", force);
        write_text_file(fs::path(out_dir) / (stem + ".hmap"), obs.observed.to_text(),
                        force);
    }
    std::cout << "wrote " << observations.size() << " observations for "
              << preset.name << " to " << out_dir << "\n";
    return kExitOk;
}

std::pair<sumgp::ExperimentPreset, std::vector<sumgp::Observation>>
load_dataset(const fs::path& data_dir) {
    if (!fs::exists(data_dir / "preset.json")) {
        throw CliError{kExitConfig,
                       "missing dataset: " + (data_dir / "preset.json").string()};
    }
    sumgp::ExperimentPreset preset = [&] {
        try {
            return sumgp::ExperimentPreset::from_json(
                read_json_file(data_dir / "preset.json"));
        } catch (const sumgp::Error& e) {
            throw CliError{kExitConfig, e.what()};
        }
    }();
    std::vector<sumgp::Observation> observations;
    for (std::size_t i = 0; i < preset.scenes.size(); ++i) {
        const std::string stem = "obs_" + std::to_string(i);
        const json jo = read_json_file(data_dir / (stem + ".json"));
        try {
            sumgp::Observation obs;
            obs.scene = sumgp::SceneSpec::from_json(jo.at("scene"));
            obs.k.object_ids = jo.at("k").get<std::vector<int>>();
            obs.observed = sumgp::Heightmap::load(
                (data_dir / jo.at("heightmap").get<std::string>()).string());
            observations.push_back(std::move(obs));
        } catch (const sumgp::Error& e) {
            throw CliError{kExitConfig, e.what()};
        } catch (const json::exception& e) {
            throw CliError{kExitConfig, std::string("bad observation file: ") + e.what()};
        }
    }
    return {std::move(preset), std::move(observations)};
}

int cmd_run(const std::string& config_path, const std::string& data_dir,
            const std::string& out_dir, std::optional<std::uint64_t> seed_override,
            std::optional<int> iters_override, std::optional<double> beta_override,
            bool force) {
    const json jc = read_json_file(config_path);
    auto [preset, observations] = load_dataset(data_dir);

    std::vector<sumgp::Mode> modes;
    try {
        for (const auto& m : jc.at("modes")) {
            modes.push_back(sumgp::mode_from_string(m.get<std::string>()));
        }
    } catch (const json::exception&) {
        throw CliError{kExitConfig, "config must list \"modes\""};
    } catch (const sumgp::Error& e) {
        throw CliError{kExitConfig, e.what()};
    }
    std::vector<std::uint64_t> seeds = preset.trial_seeds;
    if (jc.contains("seeds")) seeds = jc["seeds"].get<std::vector<std::uint64_t>>();
    if (seed_override) seeds = {*seed_override};

    sumgp::BoConfig base;
    try {
        base = sumgp::BoConfig::from_json(jc);
    } catch (const sumgp::Error& e) {
        throw CliError{kExitConfig, e.what()};
    }
    if (!jc.contains("iterations")) base.iterations = preset.iterations;
    if (iters_override) base.iterations = *iters_override;
    if (beta_override) base.beta = {*beta_override};

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw CliError{kExitIo, "cannot create " + out_dir};

    bool failed = false;
    for (sumgp::Mode mode : modes) {
        sumgp::LearningCurve curve;
        curve.mode = sumgp::mode_name(mode);
        for (std::uint64_t seed : seeds) {
            sumgp::BoConfig cfg = base;
            cfg.mode = mode;
            cfg.seed = seed;
            std::string error;
            const sumgp::BoTrace trace = sumgp::run(cfg, observations, preset.space,
                                                    preset.grid, preset.schedule,
                                                    &error);
            // Full trace (with parameter columns) alongside the curve CSVs.
            std::ostringstream trace_csv;
            trace.to_csv(trace_csv, preset.space.total_dims());
            write_text_file(fs::path(out_dir) / (curve.mode + "_seed" +
                                                 std::to_string(seed) + "_trace.csv"),
                            trace_csv.str(), force);
            if (!error.empty()) {
                std::cerr << curve.mode << " seed " << seed
                          << ": aborted after " << trace.records.size()
                          << " iterations: " << error << "\n";
                failed = true;
                continue;
            }
            const auto& last = trace.records.back();
            std::cout << curve.mode << " seed " << seed << ": " << cfg.iterations
                      << " iters, " << last.sim_count << " sims, best_error "
                      << last.best_error << "\n";
            curve.trials.push_back({seed, trace});
        }
        if (!curve.trials.empty()) {
            curve.aggregate = sumgp::aggregate_trials(curve.trials);
            try {
                sumgp::export_curves(curve, out_dir, preset.space.total_dims(), force);
            } catch (const sumgp::Error& e) {
                const std::string msg = e.what();
                throw CliError{msg.find("overwrite") != std::string::npos
                                   ? kExitOverwrite
                                   : kExitIo,
                               msg};
            }
        }
    }
    return failed ? kExitRuntime : kExitOk;
}

int cmd_compare(const std::string& file_a, const std::string& file_b, double budget,
                const std::string& json_out) {
    auto load = [](const std::string& f) {
        try {
            sumgp::LearningCurve c;
            c.aggregate = sumgp::read_aggregate_csv(f);
            return c;
        } catch (const sumgp::Error& e) {
            throw CliError{kExitConfig, e.what()};
        }
    };
    const sumgp::LearningCurve a = load(file_a);
    const sumgp::LearningCurve b = load(file_b);
    sumgp::CompareResult r;
    try {
        r = sumgp::compare(a, b, budget);
    } catch (const sumgp::Error& e) {
        throw CliError{kExitConfig, e.what()};
    }
    json j{{"err_a", r.err_a}, {"err_b", r.err_b}, {"ratio", r.ratio}};
    std::cout << "err_a=" << r.err_a << " err_b=" << r.err_b << " ratio=" << r.ratio
              << "\n";
    if (!json_out.empty()) {
        write_text_file(json_out, j.dump(2) + "\n", true);
    } else {
        std::cout << j.dump() << "\n";
    }
    return kExitOk;
}

int cmd_report(const std::string& dir, const std::string& mode, bool force) {
    sumgp::LearningCurve curve;
    try {
        curve = sumgp::import_curves(dir, mode);
    } catch (const sumgp::Error& e) {
        throw CliError{kExitConfig, e.what()};
    }
    const fs::path agg = fs::path(dir) / (mode + "_agg.csv");
    if (!force && fs::exists(agg)) {
        throw CliError{kExitOverwrite,
                       "refusing to overwrite " + agg.string() + " (use --force)"};
    }
    std::ofstream out(agg);
    if (!out) throw CliError{kExitIo, "cannot write " + agg.string()};
    out << "iter,sim_count_median,err_p25,err_p50,err_p75\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (const auto& row : curve.aggregate) {
        out << row.iter << ',' << fmt(row.sim_count_median) << ',' << fmt(row.err_p25)
            << ',' << fmt(row.err_p50) << ',' << fmt(row.err_p75) << '\n';
    }
    std::cout << "aggregated " << curve.trials.size() << " trials into "
              << agg.string() << "\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sum-GP-UCB material parameter identification benchmark"};
    app.require_subcommand(1);

    std::string preset = "exp1";
    std::string preset_file;
    std::string out_dir;
    std::string data_dir;
    std::string config_path;
    double noise_amp = 0.0;
    std::uint64_t noise_seed = 0;
    bool force = false;

    auto* gen = app.add_subcommand("gen-data", "Generate a preset's observations");
    gen->add_option("--preset", preset, "Preset name (exp1..exp4)");
    gen->add_option("--preset-file", preset_file, "Preset JSON file (overrides --preset)");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_option("--noise", noise_amp, "Per-cell noise amplitude in meters");
    gen->add_option("--noise-seed", noise_seed, "Noise RNG seed");
    gen->add_flag("--force", force, "Overwrite existing files");

    std::optional<std::uint64_t> seed_override;
    std::optional<int> iters_override;
    std::optional<double> beta_override;
    auto* runc = app.add_subcommand("run", "Run optimization trials");
    runc->add_option("--config", config_path, "Run config JSON")->required();
    runc->add_option("--data", data_dir, "Dataset directory from gen-data")->required();
    runc->add_option("--out", out_dir, "Output directory")->required();
    runc->add_option("--seed", seed_override, "Run a single seed");
    runc->add_option("--iterations", iters_override, "Override iteration count");
    runc->add_option("--beta", beta_override, "Override exploration beta");
    runc->add_flag("--force", force, "Overwrite existing files");

    std::string file_a, file_b, json_out;
    double budget = 0.0;
    auto* cmp = app.add_subcommand("compare", "Compare two aggregate curves at a budget");
    cmp->add_option("--a", file_a, "First aggregate CSV")->required();
    cmp->add_option("--b", file_b, "Second aggregate CSV")->required();
    cmp->add_option("--budget", budget, "Cumulative simulation budget")->required();
    cmp->add_option("--json", json_out, "Write the summary JSON here");

    std::string report_dir, report_mode;
    auto* rep = app.add_subcommand("report", "Aggregate per-trial CSVs");
    rep->add_option("--dir", report_dir, "Directory with <mode>_seed*.csv")->required();
    rep->add_option("--mode", report_mode, "Mode name, e.g. sum-partial")->required();
    rep->add_flag("--force", force, "Overwrite existing aggregate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) {
            return cmd_gen_data(preset, preset_file, out_dir, noise_amp, noise_seed,
                                force);
        }
        if (runc->parsed()) {
            return cmd_run(config_path, data_dir, out_dir, seed_override,
                           iters_override, beta_override, force);
        }
        if (cmp->parsed()) {
            return cmd_compare(file_a, file_b, budget, json_out);
        }
        if (rep->parsed()) {
            return cmd_report(report_dir, report_mode, force);
        }
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const sumgp::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitConfig;
}
