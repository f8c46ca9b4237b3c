#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "brw/experiment.hpp"
#include "brw/io.hpp"
#include "brw/scenario.hpp"

using namespace brw;
namespace fs = std::filesystem;

namespace {

// Fresh directory per test under the system temp dir.
fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("brwlab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Scenario parse(const std::string& text, bool validate_now = true) {
    std::istringstream in(text);
    return parse_scenario(in, validate_now);
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BRWLAB_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(FormatDouble, RoundTripsLosslessly) {
    std::mt19937_64 gen(7);
    std::uniform_real_distribution<double> u(-30.0, 30.0);
    for (int i = 0; i < 2000; ++i) {
        const double v = std::ldexp(u(gen), static_cast<int>(u(gen)));
        EXPECT_EQ(io::parse_double(io::format_double(v)), v);
    }
    for (double v : {0.0, 1.0, 0.1, 1.0 / 3.0, 1e-300, 1.7976931348623157e308, 5e-324})
        EXPECT_EQ(io::parse_double(io::format_double(v)), v);
    EXPECT_EQ(io::format_double(0.1), "0.1");
    EXPECT_TRUE(std::isnan(io::parse_double(io::format_double(std::numeric_limits<double>::quiet_NaN()))));
    EXPECT_EQ(io::parse_double(io::format_double(-std::numeric_limits<double>::infinity())),
              -std::numeric_limits<double>::infinity());
    EXPECT_THROW(io::parse_double("1.5x"), std::invalid_argument);
    EXPECT_THROW(io::parse_double(""), std::invalid_argument);
}

TEST(Csv, QuotingAndRoundTrip) {
    io::CsvTable t({"name", "value", "note"});
    t.add(io::CsvTable::Row() << "plain" << 1.25 << "a,b");
    t.add(io::CsvTable::Row() << "quote\"d" << std::size_t{42} << "line\nbreak");
    t.add(io::CsvTable::Row() << "" << true << " ");
    const std::string text = t.str();
    EXPECT_EQ(text.substr(0, text.find("\r\n")), "name,value,note");
    EXPECT_NE(text.find("\"a,b\""), std::string::npos);
    EXPECT_NE(text.find("\"quote\"\"d\""), std::string::npos);
    const io::CsvTable back = io::CsvTable::parse(text);
    EXPECT_EQ(back.header(), t.header());
    EXPECT_EQ(back.rows(), t.rows());
    EXPECT_EQ(back.column("note"), 2u);
    EXPECT_THROW(back.column("missing"), PreconditionError);
    EXPECT_THROW(t.add(io::CsvTable::Row() << "short"), PreconditionError);
    EXPECT_THROW(io::CsvTable::parse("a,b\r\n1\r\n"), ParseError);
}

TEST(Crc32, KnownCheckValue) {
    EXPECT_EQ(io::crc32("123456789"), 0xCBF43926u);
    EXPECT_EQ(io::crc32_hex("123456789"), "cbf43926");
}

TEST(LoadScenario, MinimalFileGetsDefaults) {
    const Scenario s = parse("kernel = \"srw-d3\"\nexperiment = \"spectral\"\nsigma = 0.3\n");
    EXPECT_EQ(s.experiment, "spectral");
    ASSERT_EQ(s.sources.size(), 1u);
    EXPECT_EQ(s.sources[0].site, origin(3));
    EXPECT_EQ(s.sources[0].strength, 0.3);
    EXPECT_EQ(s.mu, 1.0);
    EXPECT_EQ(s.seed, 1u);
    EXPECT_EQ(s.tolerance_profile, "strict");
    EXPECT_EQ(s.spectral.delta0, 0.1);
    EXPECT_EQ(s.moments.boundary, "absorbing");
    EXPECT_EQ(s.simulate.replicas, 100u);
}

TEST(LoadScenario, RejectsNegativeSigma) {
    EXPECT_THROW(parse("experiment = spectral\nsigma = -0.1\n"), ValidationError);
    EXPECT_THROW(parse("experiment = spectral\nsources = \"0,0,0:0.2; 1,0,0:-0.1\"\n"), ValidationError);
}

TEST(LoadScenario, UnknownKeyIsAParseErrorWithPosition) {
    try {
        parse("experiment = spectral\n\n  sigmaa = 0.3\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.column(), 3);
        EXPECT_NE(std::string(e.what()).find("sigmaa"), std::string::npos);
    }
    EXPECT_THROW(parse("[nosuch]\n"), ParseError);
    EXPECT_THROW(parse("mu = 1\nmu = 2\n"), ParseError);
    EXPECT_THROW(parse("[simulate]\nreplicas = many\n"), ParseError);
    EXPECT_THROW(parse("sigma = 0.1\nsources = \"0,0,0:0.1\"\n"), ValidationError);
}

TEST(LoadScenario, MissingFileFailsValidation) {
    EXPECT_THROW(load_scenario("/nonexistent/scenario.txt"), ValidationError);
}

TEST(WriteScenario, RoundTripsEveryField) {
    Scenario s = parse(
        "experiment = \"moments\"   # trailing comment\n"
        "kernel = \"srw-d3\"\nmu = 0.75\nsources = \"0,0,0:0.15; 1,0,0:0.15\"\nseed = 123456789012\n"
        "threads = 2\nout = \"some dir/with # hash\"\ntolerance_profile = fast\n"
        "[kernels]\ntimes = 0:1:0.25\nfit_radii = 4, 8\n"
        "[moments]\nR = 9\norder = 3\nt_end = 2.5\nprobes = \"0,0,0; 1,0,0\"\ncheckpoints = 0.5, 1, 2\n"
        "[simulate]\nW = 7\nreplicas = 3\nstart = \"1,2,3\"\nraw = true\n"
        "[sweep]\nsigmas = 0.5:0.7:0.1\n");
    EXPECT_EQ(s.out, "some dir/with # hash");
    EXPECT_EQ(s.kernels.times, (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
    EXPECT_EQ(s.sweep.sigmas, (std::vector<double>{0.5, 0.6, 0.7}));
    const Scenario again = parse(write_scenario(s));
    EXPECT_TRUE(again == s);
    EXPECT_EQ(write_scenario(again), write_scenario(s));
}

TEST(RunExperiment, SpectralSweepFlipsRegimeAtThreshold) {
    Scenario s = parse("experiment = spectral\nkernel = srw-d3\n[spectral]\nsigmas = 0.1:1.0:0.1\n");
    s.out = scratch("spectral").string();
    const ResultManifest m = run_experiment(s);
    EXPECT_EQ(m.exit_code, 0);
    const auto t = io::CsvTable::parse(io::read_file(fs::path(s.out) / "spectral.csv"));
    ASSERT_EQ(t.rows().size(), 10u);
    for (const auto& r : t.rows()) {
        const double sigma = io::parse_double(r[t.column("sigma")]);
        EXPECT_EQ(r[t.column("regime")], sigma < 0.659 ? "subcritical" : "supercritical") << sigma;
        EXPECT_NEAR(io::parse_double(r[t.column("sigma_star")]), 0.659463, 2e-6);
        if (sigma > 0.66) EXPECT_LE(std::abs(io::parse_double(r[t.column("residual")])), 1e-10);
    }
}

TEST(RunExperiment, ManifestListsEveryOutputWithChecksum) {
    Scenario s = parse("experiment = kernels\nkernel = srw-d1\n[kernels]\ntimes = 1, 2\ndisplacements = \"0; 3\"\n");
    s.out = scratch("kernels").string();
    const ResultManifest m = run_experiment(s);
    EXPECT_EQ(m.exit_code, 0);
    ASSERT_FALSE(m.outputs.empty());
    for (const auto& o : m.outputs) {
        const std::string bytes = io::read_file(fs::path(s.out) / o.path);
        EXPECT_EQ(io::crc32_hex(bytes), o.crc32) << o.name;
        EXPECT_EQ(bytes.size(), o.bytes);
    }
    const ResultManifest back = load_manifest(s.out);
    EXPECT_EQ(back.outputs.size(), m.outputs.size());
    EXPECT_EQ(back.experiment, "kernels");
    EXPECT_EQ(back.version, kArtifactVersion);
    EXPECT_TRUE(parse(back.scenario_text) == parse(m.scenario_text));
    for (const auto& e : fs::directory_iterator(s.out))
        EXPECT_EQ(e.path().extension().string().find(".tmp"), std::string::npos) << e.path();
}

TEST(RunExperiment, SubcriticalMomentsPassBoundCheck) {
    Scenario s = parse(
        "experiment = moments\nkernel = srw-d3\nsigma = 0.3\n"
        "[moments]\nR = 8\norder = 3\nt_end = 3\nbound_radius = 4\n");
    s.out = scratch("moments").string();
    const ResultManifest m = run_experiment(s);
    EXPECT_EQ(m.exit_code, 0);
    EXPECT_TRUE(m.checks_pass);
    const auto j = nlohmann::json::parse(io::read_file(fs::path(s.out) / "moments.json"));
    EXPECT_TRUE(j.at("bound_check").at("pass").get<bool>());
    for (const auto& o : j.at("bound_check").at("orders")) EXPECT_LE(o.at("max_ratio").get<double>(), 1.0 + 1e-3);
}

TEST(RunExperiment, ZeroReplicasIsAValidationError) {
    Scenario s = parse("experiment = simulate\nkernel = srw-d1\n", false);
    s.simulate.replicas = 0;
    s.out = scratch("zero").string();
    EXPECT_THROW(run_experiment(s), ValidationError);
    EXPECT_FALSE(fs::exists(fs::path(s.out) / "manifest.json"));
}

TEST(RunExperiment, ModuleErrorsLandInManifest) {
    // A time step beyond the integrator's stability bound is rejected by the solver.
    Scenario s = parse("experiment = moments\nkernel = srw-d1\n[moments]\nR = 6\nt_end = 10\ndt = 5\n");
    s.out = scratch("error").string();
    const ResultManifest m = run_experiment(s);
    EXPECT_NE(m.exit_code, 0);
    ASSERT_FALSE(m.errors.empty());
    EXPECT_TRUE(fs::exists(fs::path(s.out) / "manifest.json"));
}

TEST(RunExperiment, SimulationOutputsReproduceBitIdentically) {
    const std::string text =
        "experiment = simulate\nkernel = srw-d3\nmu = 0.5\nsigma = 0.4\nseed = 99\nthreads = 2\n"
        "[simulate]\nW = 4\nt_end = 2\ncheckpoints = 1, 2\nreplicas = 30\nprobes = \"0,0,0; 1,0,0\"\nraw = true\n";
    Scenario a = parse(text), b = parse(text);
    a.out = scratch("repro_a").string();
    b.out = scratch("repro_b").string();
    b.threads = 1;
    const ResultManifest ma = run_experiment(a), mb = run_experiment(b);
    ASSERT_EQ(ma.exit_code, 0);
    for (const std::string name : {"simulate.csv", "histograms.csv", "snapshots.jsonl"}) {
        ASSERT_NE(ma.find(name), nullptr) << name;
        EXPECT_EQ(ma.find(name)->crc32, mb.find(name)->crc32) << name;
        EXPECT_EQ(io::read_file(fs::path(a.out) / name), io::read_file(fs::path(b.out) / name));
    }
}

TEST(EmitPlotData, ViewsAndErrors) {
    Scenario s = parse(
        "experiment = moments\nkernel = srw-d3\nsigma = 0.3\n"
        "[moments]\nR = 8\ninitial = ones\nt_end = 4\ncheckpoints = 1, 2, 3\n");
    s.out = scratch("plot_m1").string();
    const ResultManifest m = run_experiment(s);
    ASSERT_EQ(m.exit_code, 0);
    const io::CsvTable m1 = emit_plot_data(m, "m1");
    EXPECT_EQ(m1.header(), (std::vector<std::string>{"t", "m1", "A_line"}));
    ASSERT_GE(m1.rows().size(), 4u);
    for (const auto& r : m1.rows()) EXPECT_NEAR(io::parse_double(r[2]), 1.834579, 1e-5);

    Scenario g = parse("experiment = kernels\nkernel = srw-d3\n[kernels]\nfit_radii = 4, 6, 8, 12, 16\n");
    g.out = scratch("plot_green").string();
    const io::CsvTable green = emit_plot_data(run_experiment(g), "green");
    EXPECT_EQ(green.header(), (std::vector<std::string>{"series", "x", "y", "ci_lo", "ci_hi"}));
    bool reference = false, fit = false;
    for (const auto& r : green.rows()) {
        reference |= r[0] == "reference slope=-1";
        if (r[0].rfind("fit slope=", 0) == 0) {
            fit = true;
            EXPECT_NEAR(io::parse_double(r[0].substr(10)), -1.0, 0.1);
        }
    }
    EXPECT_TRUE(reference);
    EXPECT_TRUE(fit);

    EXPECT_THROW(emit_plot_data(ResultManifest{}, "m1"), MissingOutput);
    EXPECT_THROW(emit_plot_data(m, "occupancy"), MissingOutput);
    EXPECT_THROW(load_manifest(scratch("empty")), MissingOutput);
}

TEST(Cli, ExitCodes) {
    const fs::path dir = scratch("cli");
    const std::string out = " --out " + (dir / "run").string();
    EXPECT_EQ(run_cli("spectral --sigmas 0.3,0.8" + out), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "manifest.json"));
    EXPECT_EQ(run_cli("spectral --sigma -0.1" + out), 2);
    EXPECT_EQ(run_cli("simulate --kernel srw-d1 --replicas 0" + out), 2);
    EXPECT_EQ(run_cli("frobnicate"), 2);
    EXPECT_EQ(run_cli("spectral --scenario /nonexistent.txt" + out), 2);
    {
        std::ofstream f(dir / "bad.txt");
        f << "experiment = spectral\nsigmaa = 0.3\n";
    }
    EXPECT_EQ(run_cli("spectral --scenario " + (dir / "bad.txt").string() + out), 2);
    EXPECT_EQ(run_cli("report --manifest " + (dir / "nothing").string() + " --out " + (dir / "x").string()), 1);
    EXPECT_EQ(run_cli("report --manifest " + (dir / "run").string() + " --view lambda --out " +
                      (dir / "plot").string()),
              0);
    EXPECT_TRUE(fs::exists(dir / "plot" / "plot_lambda.csv"));
}
