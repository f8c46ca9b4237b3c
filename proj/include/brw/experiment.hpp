#pragma once

// Experiment orchestration: dispatch a validated scenario to the owning module,
// persist CSV/JSON outputs with checksums, and write the manifest last.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "brw/common.hpp"
#include "brw/io.hpp"
#include "brw/lattice_kernels.hpp"
#include "brw/moments.hpp"
#include "brw/scenario.hpp"
#include "brw/simulator.hpp"
#include "brw/spectral.hpp"

namespace brw {

inline constexpr const char* kArtifactVersion = "1.0.0";

struct OutputFile {
    std::string name;  ///< logical name, e.g. "spectral.csv"
    std::string path;  ///< relative to the manifest directory
    std::string crc32;
    std::size_t bytes = 0;
};

struct ResultManifest {
    std::string experiment;
    std::string scenario_text;
    std::string version = kArtifactVersion;
    std::uint64_t master_seed = 0;
    std::vector<OutputFile> outputs;
    std::map<std::string, double> timings;  ///< seconds per stage
    std::vector<std::string> warnings;
    std::vector<std::string> errors;
    bool checks_pass = true;
    int exit_code = 0;
    std::filesystem::path directory;

    const OutputFile* find(const std::string& name) const {
        for (const auto& o : outputs)
            if (o.name == name) return &o;
        return nullptr;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["artifact"] = "brwlab";
        j["version"] = version;
        j["experiment"] = experiment;
        j["master_seed"] = master_seed;
        j["scenario"] = scenario_text;
        j["outputs"] = nlohmann::json::array();
        for (const auto& o : outputs)
            j["outputs"].push_back({{"name", o.name}, {"path", o.path}, {"crc32", o.crc32}, {"bytes", o.bytes}});
        j["timings"] = timings;
        j["warnings"] = warnings;
        j["errors"] = errors;
        j["checks_pass"] = checks_pass;
        j["exit_code"] = exit_code;
        return j;
    }
};

/// Reads manifest.json from a directory or an explicit file path.
inline ResultManifest load_manifest(const std::filesystem::path& where) {
    namespace fs = std::filesystem;
    const fs::path file = fs::is_directory(where) ? where / "manifest.json" : where;
    const std::string text = io::read_file(file);
    ResultManifest m;
    m.directory = file.parent_path();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw MissingOutput("manifest '" + file.string() + "' is not valid JSON: " + e.what());
    }
    m.experiment = j.value("experiment", "");
    m.scenario_text = j.value("scenario", "");
    m.version = j.value("version", "");
    m.master_seed = j.value("master_seed", std::uint64_t{0});
    for (const auto& o : j.value("outputs", nlohmann::json::array()))
        m.outputs.push_back({o.at("name"), o.at("path"), o.at("crc32"), o.at("bytes")});
    m.warnings = j.value("warnings", std::vector<std::string>{});
    m.errors = j.value("errors", std::vector<std::string>{});
    m.checks_pass = j.value("checks_pass", true);
    m.exit_code = j.value("exit_code", 0);
    return m;
}

namespace detail {

/// Writes outputs atomically under one directory and records them in the manifest.
class OutputSink {
public:
    OutputSink(ResultManifest& m, std::filesystem::path dir) : m_(m), dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& bytes) {
        io::write_atomic(dir_ / name, bytes);
        for (auto& o : m_.outputs)
            if (o.name == name) {
                o = {name, name, io::crc32_hex(bytes), bytes.size()};
                return;
            }
        m_.outputs.push_back({name, name, io::crc32_hex(bytes), bytes.size()});
    }

    void write(const std::string& name, const io::CsvTable& t) { write(name, t.str()); }
    void write(const std::string& name, const nlohmann::json& j) { write(name, j.dump(2) + "\n"); }

private:
    ResultManifest& m_;
    std::filesystem::path dir_;
};

class StageTimer {
public:
    StageTimer(ResultManifest& m, std::string name)
        : m_(m), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~StageTimer() {
        m_.timings[name_] +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    ResultManifest& m_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
};

inline bool fast(const Scenario& s) { return s.tolerance_profile == "fast"; }

inline TorusGrid grid_for(const Scenario& s, int dim) {
    int n = s.grid_points > 0 ? s.grid_points : default_grid(dim).points_per_axis;
    if (fast(s)) n = std::max(8, (n / 2) & ~1);
    return TorusGrid(dim, n, s.grid_mode == "plain" ? SingularityMode::plain : SingularityMode::subtract);
}

// JSON cannot hold inf/nan; they are written as strings.
inline nlohmann::json number(double v) {
    if (std::isfinite(v)) return v;
    return io::format_double(v);
}

inline void run_kernels(const Scenario& s, ResultManifest& m, OutputSink& out) {
    const JumpKernel kernel = s.load_kernel();
    const int d = kernel.dim();
    const TorusGrid grid = grid_for(s, d);
    nlohmann::json summary{{"kernel", kernel.name()}, {"dim", d}, {"grid_points", grid.points_per_axis},
                           {"grid_mode", to_string(grid.mode)}};
    std::vector<Site> shifts = s.kernels.displacements;
    if (shifts.empty()) shifts.push_back(origin(d));
    const Site zero = origin(d);

    io::CsvTable table({"quantity", "t", "lambda", "x", "y", "value", "est_error", "resolution_warning"});
    {
        StageTimer timer(m, "heat_kernel");
        for (double t : s.kernels.times)
            for (const auto& y : shifts) {
                const Estimate e = transition_probability(kernel, grid, t, zero, y);
                table.add(io::CsvTable::Row() << "p" << t << "" << to_string(zero) << to_string(y) << e.value
                                              << e.est_error << e.resolution_warning);
                if (e.resolution_warning)
                    m.warnings.push_back("p(" + io::format_double(t) + ", 0, " + to_string(y) +
                                         ") not resolved on the grid");
            }
    }
    {
        StageTimer timer(m, "green");
        for (double lambda : s.kernels.lambdas)
            for (const auto& y : shifts) {
                if (lambda == 0.0 && !kernel.transient_by_dimension()) {
                    m.warnings.push_back("G_0 diverges for the recurrent walk " + kernel.name());
                    continue;
                }
                const Estimate e = green_function(kernel, grid, lambda, zero, y);
                table.add(io::CsvTable::Row() << "G" << "" << lambda << to_string(zero) << to_string(y)
                                              << e.value << e.est_error << e.resolution_warning);
                if (e.resolution_warning)
                    m.warnings.push_back("G_" + io::format_double(lambda) + "(0, " + to_string(y) +
                                         ") not resolved on the grid");
            }
    }
    out.write("kernels.csv", table);

    if (s.kernels.transience) {
        StageTimer timer(m, "transience");
        const TransienceReport r = transience_check(kernel);
        io::CsvTable t({"grid_points", "plain_I0"});
        for (std::size_t i = 0; i < r.grid_sizes.size(); ++i)
            t.add(io::CsvTable::Row() << r.grid_sizes[i] << r.estimates[i]);
        out.write("transience.csv", t);
        summary["transience"] = {{"verdict", to_string(r.verdict)},
                                 {"numeric_trend", to_string(r.numeric_trend)},
                                 {"increment_ratio", number(r.increment_ratio)}};
    }
    if (!s.kernels.fit_radii.empty()) {
        StageTimer timer(m, "green_fit");
        const GreenAsymptoteFit fit = green_asymptote_fit(kernel, grid, s.kernels.fit_radii);
        io::CsvTable t({"radius", "G0"});
        for (auto [r, g] : fit.samples) t.add(io::CsvTable::Row() << r << g);
        out.write("green_fit.csv", t);
        summary["green_fit"] = {{"slope", fit.slope}, {"expected_slope", -(d - 2)},
                                {"constant", fit.constant}, {"residual", fit.residual_norm},
                                {"time_domain", fit.time_domain}};
    }
    out.write("kernels.json", summary);
}

inline void run_spectral(const Scenario& s, ResultManifest& m, OutputSink& out) {
    const JumpKernel kernel = s.load_kernel();
    const int d = kernel.dim();
    const TorusGrid grid = grid_for(s, d);
    const Threshold th = threshold_info(kernel, grid);
    nlohmann::json summary{{"kernel", kernel.name()},       {"dim", d},
                           {"grid_points", grid.points_per_axis}, {"sigma_star", th.sigma_star},
                           {"green0", number(th.green0)}, {"green0_error", th.est_error},
                           {"recurrent", th.recurrent}};

    // Either an explicit sweep of single sources at the origin or the scenario's own field.
    std::vector<PerturbationField> fields;
    if (s.spectral.sigmas.empty())
        fields.push_back(s.field(d));
    else
        for (double sigma : s.spectral.sigmas) fields.push_back(PerturbationField::single(d, s.mu, sigma));

    io::CsvTable table({"sigma", "regime", "A_or_C", "B", "lambda", "residual", "sigma_star"});
    {
        StageTimer timer(m, "spectral");
        for (const auto& f : fields) {
            const SpectralReport r = spectral_report(kernel, grid, f);
            const double lambda = r.growth ? r.growth->lambda : std::numeric_limits<double>::quiet_NaN();
            const double residual = r.growth ? r.growth->residual : std::numeric_limits<double>::quiet_NaN();
            table.add(io::CsvTable::Row() << r.sigma_total << to_string(r.regime) << r.steady_constant
                                          << r.bound_B << lambda << residual << r.sigma_star);
        }
    }
    out.write("spectral.csv", table);

    if (!s.spectral.box_L.empty()) {
        StageTimer timer(m, "box_eigen");
        io::CsvTable t({"L", "delta0", "lambda0", "trial_rayleigh", "scaled_gap", "iterations", "positive"});
        for (int L : s.spectral.box_L) {
            const BoxEigen e = box_principal_eigenvalue(kernel, L, s.spectral.delta0);
            t.add(io::CsvTable::Row() << L << s.spectral.delta0 << e.lambda0 << e.trial_rayleigh
                                      << (s.spectral.delta0 - e.lambda0) * L * L << e.iterations << e.positive);
            if (!e.positive) m.warnings.push_back("box eigenvector not strictly positive at L = " + std::to_string(L));
        }
        out.write("box_eigen.csv", t);
    }
    if (!s.spectral.fit_radii.empty()) {
        StageTimer timer(m, "green_fit");
        const GreenAsymptoteFit fit = green_asymptote_fit(kernel, grid, s.spectral.fit_radii);
        io::CsvTable t({"radius", "G0"});
        for (auto [r, g] : fit.samples) t.add(io::CsvTable::Row() << r << g);
        out.write("green_fit.csv", t);
        summary["green_fit"] = {{"slope", fit.slope}, {"expected_slope", -(d - 2)},
                                {"constant", fit.constant}, {"residual", fit.residual_norm}};
    }
    out.write("spectral.json", summary);
}

inline void run_moments(const Scenario& s, ResultManifest& m, OutputSink& out) {
    const JumpKernel kernel = s.load_kernel();
    const int d = kernel.dim();
    const PerturbationField field = s.field(d);
    const auto& p = s.moments;
    const int R = p.R > 0 ? p.R : recommended_half_width(p.t_end, field);
    const LatticeBox box(d, R, p.boundary == "periodic" ? Boundary::periodic : Boundary::absorbing);
    const bool ones = p.initial == "ones";

    SolveOptions o;
    o.t_end = p.t_end;
    o.dt = p.dt;
    o.checkpoints = p.checkpoints;
    o.probes = p.probes;
    o.estimate_error = !fast(s);

    MomentTable table;
    {
        StageTimer timer(m, "hierarchy");
        if (ones)
            table = solve_first_moment(build_generator(kernel, box, field), box, InitialData::ones, p.y0, o);
        else
            table = solve_factorial_moments(kernel, box, field, p.order, p.y0, o);
    }
    if (table.truncation_warning) m.warnings.push_back("box truncation: outer-layer mass above threshold");
    for (std::size_t l = 0; l < table.order_error.size(); ++l)
        if (table.order_error[l] > 1e-4)
            m.warnings.push_back("order " + std::to_string(l + 1) + " step-halving change " +
                                 io::format_double(table.order_error[l]));

    io::CsvTable csv({"t", "x", "order", "value"});
    for (std::size_t j = 0; j < table.times.size(); ++j)
        for (int l = 1; l <= table.max_order; ++l)
            for (std::size_t k = 0; k < table.sites.size(); ++k)
                csv.add(io::CsvTable::Row() << table.times[j] << to_string(box.site(table.sites[k])) << l
                                            << table.values[j][static_cast<std::size_t>(l - 1)][k]);
    out.write("moments.csv", csv);

    nlohmann::json summary{{"kernel", kernel.name()}, {"dim", d}, {"R", R},
                           {"boundary", p.boundary}, {"initial", p.initial},
                           {"order", table.max_order}, {"steps", table.steps},
                           {"boundary_fraction", table.boundary_fraction},
                           {"order_error", table.order_error}, {"y0", to_string(p.y0)}};

    const TorusGrid grid = grid_for(s, d);
    const Threshold th = threshold_info(kernel, grid);
    const Regime regime = classify(field.sigma_total(), th);
    summary["regime"] = to_string(regime);
    summary["sigma_star"] = th.sigma_star;
    double A = std::numeric_limits<double>::quiet_NaN();
    if (regime == Regime::subcritical || field.sigma_total() == 0.0) {
        A = detail::steady_constant(field.sigma_total(), th);
        summary["steady_constant"] = A;
    }

    if (p.bound_check && !ones) {
        if (regime != Regime::subcritical || th.recurrent || box.mode() != Boundary::absorbing) {
            m.warnings.push_back("bound check skipped: needs a subcritical transient walk on an absorbing box");
        } else {
            StageTimer timer(m, "bound_check");
            const double B = 2.0 * (field.mu() + field.sigma_total()) * th.green0;
            const auto heat = heat_kernel_on_box(kernel, table);
            const BoundReport r = moment_bound_check(table, A, B, heat, p.bound_radius, p.bound_tolerance);
            nlohmann::json orders = nlohmann::json::array();
            for (const auto& ob : r.orders)
                orders.push_back({{"order", ob.order}, {"max_ratio", number(ob.max_ratio)},
                                  {"t", ob.time}, {"x", to_string(ob.site)}});
            summary["bound_check"] = {{"A", A}, {"B", B}, {"tolerance", r.tolerance},
                                      {"pass", r.pass}, {"orders", orders}};
            if (!r.pass) {
                m.checks_pass = false;
                m.errors.push_back("moment bound check failed");
            }
        }
    }

    const bool single_origin = field.sources().size() == 1 && norm_inf(field.sources()[0].site) == 0;
    if (!ones && single_origin && norm_inf(p.y0) == 0 && table.sites.size() > 1) {
        const MajorizationReport r = majorization_check(table);
        summary["majorization"] = {{"holds", r.holds}, {"worst_margin", number(r.worst_margin)},
                                   {"worst_t", r.worst_time}, {"worst_x", to_string(r.worst_site)},
                                   {"points", r.points_checked}};
        if (!r.holds) m.warnings.push_back("majorization m1(t,x,0) <= m1(t,0,0) violated");
    }

    const auto D = catalan_D(p.d_terms);
    nlohmann::json dl = nlohmann::json::array();
    bool d_ok = true;
    for (int l = 1; l <= p.d_terms; ++l) {
        const bool ok = D[static_cast<std::size_t>(l - 1)] <= growth_bound(l);
        d_ok = d_ok && ok;
        dl.push_back({{"l", l}, {"D", D[static_cast<std::size_t>(l - 1)].str()}, {"within_4l_lfact", ok}});
    }
    summary["D"] = dl;
    if (!d_ok) {
        m.checks_pass = false;
        m.errors.push_back("D_l <= 4^l l! violated");
    }
    out.write("moments.json", summary);
}

inline void run_simulate(const Scenario& s, ResultManifest& m, OutputSink& out) {
    const JumpKernel kernel = s.load_kernel();
    const int d = kernel.dim();
    const auto& p = s.simulate;
    SimConfig cfg;
    cfg.kernel = kernel;
    cfg.field = s.field(d);
    cfg.init = p.init == "window" ? InitMode::window : InitMode::single;
    cfg.window = p.W;
    cfg.start = p.start;
    cfg.t_end = p.t_end;
    cfg.checkpoints = p.checkpoints;
    cfg.probes = p.probes;
    if (cfg.probes.empty()) cfg.probes.push_back(origin(d));
    cfg.observation = p.observation;
    cfg.particle_cap = p.cap;
    cfg.record_positions = p.raw;

    SimStats stats;
    {
        StageTimer timer(m, "simulate");
        stats = run_replicas(cfg, p.replicas, s.seed, s.threads);
    }
    if (stats.truncated)
        m.warnings.push_back(std::to_string(stats.truncated) + " replicas stopped at the particle cap");

    io::CsvTable csv({"t", "quantity", "order", "mean", "se", "ci_lo", "ci_hi", "samples", "low_confidence"});
    if (stats.replicas.size() >= 2) {
        for (const auto& e : estimate_moments(stats, p.order)) {
            csv.add(io::CsvTable::Row() << e.time << "factorial_moment" << e.order << e.value.mean << e.value.se
                                        << e.value.lo << e.value.hi << e.value.samples << e.low_confidence);
            if (e.low_confidence && e.order == 1)
                m.warnings.push_back("low-confidence moment estimate at t = " + io::format_double(e.time));
        }
    } else {
        m.warnings.push_back("one replica: no standard errors");
    }
    const auto empty = empty_probe_probability(stats);
    for (std::size_t j = 0; j < stats.checkpoints.size(); ++j)
        csv.add(io::CsvTable::Row() << stats.checkpoints[j] << "empty_probability" << 0 << empty[j].mean
                                    << empty[j].se << empty[j].lo << empty[j].hi << empty[j].samples << false);
    out.write("simulate.csv", csv);

    if (cfg.observation >= 0 && cfg.init == InitMode::window) {
        if (cfg.observation + 6.0 * std::sqrt(cfg.t_end) <= cfg.window) {
            io::CsvTable occ({"t", "occupied_fraction", "se", "ci_lo", "ci_hi", "mean_islands",
                              "mean_island_size", "mean_max_island"});
            for (const auto& o : occupancy_stats(stats))
                occ.add(io::CsvTable::Row() << o.time << o.occupied_fraction.mean << o.occupied_fraction.se
                                            << o.occupied_fraction.lo << o.occupied_fraction.hi << o.mean_islands
                                            << o.mean_island_size << o.mean_max_island);
            out.write("occupancy.csv", occ);
        } else {
            m.warnings.push_back("occupancy skipped: observation window closer than 6 sqrt(t_end) to the edge");
        }
    }

    io::CsvTable hist({"t", "n", "count", "probability", "samples", "tv_to_double_time", "low_confidence"});
    for (std::size_t j = 0; j < stats.checkpoints.size(); ++j) {
        const Histogram h = distribution_snapshot(stats, j);
        const double tv = h.tv_to_double_time.value_or(std::numeric_limits<double>::quiet_NaN());
        for (std::size_t n = 0; n < h.counts.size(); ++n)
            hist.add(io::CsvTable::Row() << h.time << n << h.counts[n] << h.probability(n) << h.samples << tv
                                         << h.low_confidence);
    }
    out.write("histograms.csv", hist);

    std::string lines;
    for (const auto& tr : stats.replicas)
        for (const auto& snap : tr.snapshots) {
            nlohmann::json j{{"replica", tr.replica}, {"seed", tr.seed}, {"t", snap.time},
                             {"population", snap.population}, {"probe_counts", snap.probe_counts}};
            if (cfg.observation >= 0)
                j["occupied_fraction"] = snap.occupied_fraction, j["islands"] = snap.islands;
            if (p.raw) j["positions"] = snap.positions;
            lines += j.dump() + "\n";
        }
    out.write("snapshots.jsonl", lines);

    std::uint64_t events = 0;
    for (const auto& tr : stats.replicas) events += tr.jumps + tr.splits + tr.deaths + tr.null_events;
    out.write("simulate.json", nlohmann::json{{"replicas", stats.replicas.size()},
                                              {"truncated", stats.truncated},
                                              {"checkpoints", stats.checkpoints},
                                              {"events", events},
                                              {"master_seed", s.seed}});
}

/// m_1(t, 0) with all-ones data on an absorbing box for each sigma, plus the log-slope on a window.
inline void run_sweep(const Scenario& s, ResultManifest& m, OutputSink& out) {
    const JumpKernel kernel = s.load_kernel();
    const int d = kernel.dim();
    const TorusGrid grid = grid_for(s, d);
    const auto& p = s.sweep;
    const Threshold th = threshold_info(kernel, grid);
    const LatticeBox box(d, p.R);
    const Site zero = origin(d);

    std::vector<double> checkpoints;
    for (int k = 1; k <= static_cast<int>(std::floor(p.t_end)); ++k) checkpoints.push_back(k);
    for (double t : {p.slope_from, p.slope_to, p.t_end}) checkpoints.push_back(t);
    std::sort(checkpoints.begin(), checkpoints.end());
    checkpoints.erase(std::unique(checkpoints.begin(), checkpoints.end()), checkpoints.end());

    io::CsvTable series({"sigma", "t", "m1_origin"});
    io::CsvTable summary({"sigma", "regime", "A", "lambda", "residual", "log_slope", "slope_rel_error", "max_m1"});
    StageTimer timer(m, "sweep");
    for (double sigma : p.sigmas) {
        const PerturbationField field = PerturbationField::single(d, s.mu, sigma);
        SolveOptions o;
        o.t_end = p.t_end;
        o.dt = p.dt;
        o.checkpoints = checkpoints;
        o.probes = {zero};
        const MomentTable t = solve_first_moment(build_generator(kernel, box, field), box, InitialData::ones, zero, o);
        double at_from = 0, at_to = 0, peak = 0;
        for (std::size_t j = 0; j < t.times.size(); ++j) {
            const double v = t.values[j][0][0];
            series.add(io::CsvTable::Row() << sigma << t.times[j] << v);
            if (t.times[j] == p.slope_from) at_from = v;
            if (t.times[j] == p.slope_to) at_to = v;
            peak = std::max(peak, v);
        }
        const double slope = (std::log(at_to) - std::log(at_from)) / (p.slope_to - p.slope_from);
        const Regime regime = classify(sigma, th);
        double A = std::numeric_limits<double>::quiet_NaN();
        double lambda = A, residual = A, rel = A;
        if (regime == Regime::subcritical) A = detail::steady_constant(sigma, th);
        if (regime != Regime::subcritical) {
            const GrowthRoot g = growth_eigenvalue(kernel, grid, sigma);
            lambda = g.lambda;
            residual = g.residual;
            if (lambda > 0.0) rel = std::abs(slope - lambda) / lambda;
        }
        summary.add(io::CsvTable::Row() << sigma << to_string(regime) << A << lambda << residual << slope << rel
                                        << peak);
    }
    out.write("sweep.csv", summary);
    out.write("sweep_series.csv", series);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plot data

inline const std::vector<std::string>& plot_views() {
    static const std::vector<std::string> v{"m1", "occupancy", "green", "histogram", "lambda"};
    return v;
}

namespace detail {

inline io::CsvTable load_output(const ResultManifest& m, const std::string& name) {
    const OutputFile* f = m.find(name);
    if (!f) throw MissingOutput("manifest lists no '" + name + "'");
    return io::CsvTable::parse(io::read_file(m.directory / f->path));
}

inline nlohmann::json load_json_output(const ResultManifest& m, const std::string& name) {
    const OutputFile* f = m.find(name);
    if (!f) throw MissingOutput("manifest lists no '" + name + "'");
    return nlohmann::json::parse(io::read_file(m.directory / f->path));
}

inline double cell(const io::CsvTable& t, const std::vector<std::string>& row, const std::string& col) {
    return io::parse_double(row[t.column(col)]);
}

}  // namespace detail

/**
 * Plot-ready table for one view. The m1 view is wide (t, m1, A_line); the
 * others are long format (series, x, y, ci_lo, ci_hi). Throws MissingOutput
 * when the manifest does not reference the needed files.
 */
inline io::CsvTable emit_plot_data(const ResultManifest& m, const std::string& view) {
    if (m.outputs.empty()) throw MissingOutput("manifest lists no outputs");
    const std::string nan = "nan";
    if (view == "m1") {
        io::CsvTable out({"t", "m1", "A_line"});
        if (m.find("moments.csv")) {
            const auto t = detail::load_output(m, "moments.csv");
            const auto j = detail::load_json_output(m, "moments.json");
            const std::string y0 = j.value("y0", "");
            const double A = j.contains("steady_constant") ? j["steady_constant"].get<double>()
                                                           : std::numeric_limits<double>::quiet_NaN();
            for (const auto& r : t.rows())
                if (r[t.column("order")] == "1" && r[t.column("x")] == y0)
                    out.add(io::CsvTable::Row() << detail::cell(t, r, "t") << detail::cell(t, r, "value") << A);
            return out;
        }
        const auto t = detail::load_output(m, "sweep_series.csv");
        const auto s = detail::load_output(m, "sweep.csv");
        if (!s.rows().empty()) {
            const std::string sigma = s.rows().front()[s.column("sigma")];
            const std::string A = s.rows().front()[s.column("A")];
            for (const auto& r : t.rows())
                if (r[t.column("sigma")] == sigma)
                    out.add(io::CsvTable::Row() << r[t.column("t")] << r[t.column("m1_origin")] << A);
        }
        return out;
    }
    io::CsvTable out({"series", "x", "y", "ci_lo", "ci_hi"});
    if (view == "occupancy") {
        const auto t = detail::load_output(m, "occupancy.csv");
        for (const auto& r : t.rows())
            out.add(io::CsvTable::Row() << "occupied_fraction" << r[t.column("t")] << r[t.column("occupied_fraction")]
                                        << r[t.column("ci_lo")] << r[t.column("ci_hi")]);
        const auto s = detail::load_output(m, "simulate.csv");
        for (const auto& r : s.rows())
            if (r[s.column("quantity")] == "empty_probability")
                out.add(io::CsvTable::Row() << "empty_probability" << r[s.column("t")] << r[s.column("mean")]
                                            << r[s.column("ci_lo")] << r[s.column("ci_hi")]);
        return out;
    }
    if (view == "green") {
        const auto t = detail::load_output(m, "green_fit.csv");
        const std::string summary_name = m.find("spectral.json") ? "spectral.json" : "kernels.json";
        const auto j = detail::load_json_output(m, summary_name).at("green_fit");
        const double slope = j.at("slope").get<double>();
        const double expected = j.at("expected_slope").get<double>();
        const double logc = std::log(j.at("constant").get<double>());
        for (const auto& r : t.rows()) {
            const double lx = std::log(detail::cell(t, r, "radius"));
            out.add(io::CsvTable::Row() << "log_G0" << lx << std::log(detail::cell(t, r, "G0")) << nan << nan);
        }
        for (const auto& r : t.rows()) {
            const double lx = std::log(detail::cell(t, r, "radius"));
            out.add(io::CsvTable::Row() << "fit slope=" + io::format_double(slope) << lx << logc + slope * lx
                                        << nan << nan);
            out.add(io::CsvTable::Row() << "reference slope=" + io::format_double(expected) << lx
                                        << logc + expected * lx << nan << nan);
        }
        return out;
    }
    if (view == "histogram") {
        const auto t = detail::load_output(m, "histograms.csv");
        const double z = z_quantile(0.95);
        for (const auto& r : t.rows()) {
            const double pr = detail::cell(t, r, "probability");
            const double n = detail::cell(t, r, "samples");
            const double se = n > 0 ? std::sqrt(pr * (1.0 - pr) / n) : 0.0;
            out.add(io::CsvTable::Row() << "t=" + r[t.column("t")] << r[t.column("n")] << pr
                                        << std::max(0.0, pr - z * se) << std::min(1.0, pr + z * se));
        }
        return out;
    }
    if (view == "lambda") {
        const std::string name = m.find("spectral.csv") ? "spectral.csv" : "sweep.csv";
        const auto t = detail::load_output(m, name);
        for (const auto& r : t.rows()) {
            if (r[t.column("regime")] == "subcritical") continue;
            out.add(io::CsvTable::Row() << "lambda" << r[t.column("sigma")] << r[t.column("lambda")] << nan << nan);
        }
        return out;
    }
    throw PreconditionError("unknown plot view '" + view + "'");
}

// ---------------------------------------------------------------------------
// Dispatch

/**
 * Validates, runs, and persists. Module errors are recorded in the manifest
 * with a nonzero exit code instead of propagating; validation errors throw.
 * The manifest is written after every other output is in place.
 */
inline ResultManifest run_experiment(Scenario s) {
    validate(s);
    namespace fs = std::filesystem;
    ResultManifest m;
    m.experiment = s.experiment;
    m.scenario_text = write_scenario(s);
    m.master_seed = s.seed;
    m.directory = s.out;
    fs::create_directories(m.directory);
    detail::OutputSink out(m, m.directory);
    {
        detail::StageTimer total(m, "total");
        try {
            if (s.experiment == "kernels") detail::run_kernels(s, m, out);
            if (s.experiment == "spectral") detail::run_spectral(s, m, out);
            if (s.experiment == "moments") detail::run_moments(s, m, out);
            if (s.experiment == "simulate") detail::run_simulate(s, m, out);
            if (s.experiment == "sweep") detail::run_sweep(s, m, out);
            if (s.experiment == "report") {
                const ResultManifest source = load_manifest(s.report.manifest);
                out.write("plot_" + s.report.view + ".csv", emit_plot_data(source, s.report.view));
            }
        } catch (const Error& e) {
            m.errors.push_back(e.what());
        }
    }
    m.exit_code = m.errors.empty() && m.checks_pass ? 0 : 1;
    io::write_atomic(m.directory / "manifest.json", m.to_json().dump(2) + "\n");
    return m;
}

}  // namespace brw
