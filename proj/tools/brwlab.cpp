// brwlab: run one experiment from a scenario file and/or command-line overrides.
//
// Exit status: 0 success, 1 experiment error or failed bound check,
// 2 scenario parse/validation error or bad usage.

#include <algorithm>
#include <deque>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "brw/experiment.hpp"
#include "brw/scenario.hpp"

namespace {

std::string flag_name(const std::string& key) {
    std::string s = key;
    std::replace(s.begin(), s.end(), '_', '-');
    return "--" + s;
}

// Every key of a scenario section becomes an override flag on its subcommand.
struct Overrides {
    // deque: the option callbacks hold references into it.
    std::deque<std::pair<std::pair<std::string, std::string>, std::optional<std::string>>> slots;

    void add(CLI::App* app, const std::string& section, const std::vector<std::string>& skip = {}) {
        for (const auto& [key, field] : brw::detail::field_table().at(section)) {
            if (std::find(skip.begin(), skip.end(), key) != skip.end()) continue;
            auto& [where, value] = slots.emplace_back(std::pair{section, key}, std::nullopt);
            app->add_option_function<std::string>(
                flag_name(key), [&value = value](const std::string& v) { value = v; },
                "override [" + (section.empty() ? std::string("top") : section) + "] " + where.second);
        }
    }

    void apply(brw::Scenario& s) const {
        const auto& table = brw::detail::field_table();
        for (const auto& [where, value] : slots) {
            if (!value) continue;
            try {
                table.at(where.first).at(where.second).set(s, *value);
            } catch (const brw::detail::ValueError& e) {
                throw brw::ValidationError(flag_name(where.second) + ": " + e.what);
            }
        }
    }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Branching random walks with a perturbed split rate: kernels, spectra, moments, simulation"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string scenario_path, out_dir, profile;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    app.add_option("--scenario", scenario_path, "scenario file")->check(CLI::ExistingFile);
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--tolerance-profile", profile, "fast or strict")
        ->check(CLI::IsMember({"fast", "strict"}));

    // Top-level model keys are accepted on every subcommand.
    const std::vector<std::string> global_keys{"experiment", "seed", "threads", "out", "tolerance_profile"};
    std::map<std::string, Overrides> overrides;
    for (const auto& name : brw::experiment_types()) {
        CLI::App* sub = app.add_subcommand(name, "run the " + name + " experiment");
        overrides[name].add(sub, "", global_keys);
        overrides[name].add(sub, name);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        brw::Scenario s;
        if (!scenario_path.empty()) {
            std::ifstream f(scenario_path);
            if (!f) throw brw::ValidationError("cannot open scenario file '" + scenario_path + "'");
            s = brw::parse_scenario(f, false);
        }
        const std::string experiment = app.get_subcommands().front()->get_name();
        s.experiment = experiment;
        overrides.at(experiment).apply(s);
        if (!out_dir.empty()) s.out = out_dir;
        if (seed) s.seed = *seed;
        if (threads) s.threads = *threads;
        if (!profile.empty()) s.tolerance_profile = profile;

        const brw::ResultManifest m = brw::run_experiment(s);
        for (const auto& w : m.warnings) std::cerr << "warning: " << w << '\n';
        for (const auto& e : m.errors) std::cerr << "error: " << e << '\n';
        std::cout << (m.directory / "manifest.json").string() << '\n';
        return m.exit_code;
    } catch (const brw::ParseError& e) {
        std::cerr << scenario_path << ": " << e.what() << '\n';
        return 2;
    } catch (const brw::ValidationError& e) {
        std::cerr << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
