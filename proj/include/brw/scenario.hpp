#pragma once

/*
 * Scenario files: flat `key = value` lines, `# comments`, and `[section]`
 * headers for per-experiment parameters. Lists are comma separated, sites are
 * comma-separated integers, lists of sites are separated by `;`, and sources
 * are `site:strength` items separated by `;`.
 *
 *     kernel = "srw-d3"
 *     experiment = "spectral"
 *     sigma = 0.3
 *
 *     [spectral]
 *     sigmas = 0.1:1.0:0.1
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "brw/common.hpp"
#include "brw/io.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/perturbation.hpp"

namespace brw {

struct KernelsParams {
    std::vector<double> times{1.0};
    std::vector<double> lambdas{0.0};
    std::vector<Site> displacements;  ///< y - x; empty means the origin only
    bool transience = true;
    std::vector<double> fit_radii;

    bool operator==(const KernelsParams&) const = default;
};

struct SpectralParams {
    std::vector<double> sigmas;  ///< empty: the scenario's own sigma_total
    std::vector<int> box_L;
    double delta0 = 0.1;
    std::vector<double> fit_radii;

    bool operator==(const SpectralParams&) const = default;
};

struct MomentsParams {
    int R = 0;  ///< 0 picks ceil(6 sqrt(t_end)) + max source offset
    std::string boundary = "absorbing";
    std::string initial = "delta";
    int order = 3;
    double t_end = 10.0;
    double dt = 0.0;
    Site y0;
    std::vector<Site> probes;
    std::vector<double> checkpoints;
    bool bound_check = true;
    int bound_radius = -1;
    double bound_tolerance = 1e-3;
    int d_terms = 30;

    bool operator==(const MomentsParams&) const = default;
};

struct SimulateParams {
    std::string init = "window";
    int W = 20;
    Site start;
    double t_end = 10.0;
    std::vector<double> checkpoints;
    std::uint64_t replicas = 100;
    std::vector<Site> probes;
    int observation = -1;
    std::uint64_t cap = 10'000'000;
    int order = 2;
    bool raw = false;

    bool operator==(const SimulateParams&) const = default;
};

struct SweepParams {
    std::vector<double> sigmas;
    int R = 20;
    double t_end = 100.0;
    double dt = 0.0;
    double slope_from = 50.0;
    double slope_to = 100.0;

    bool operator==(const SweepParams&) const = default;
};

struct ReportParams {
    std::string manifest;
    std::string view = "m1";

    bool operator==(const ReportParams&) const = default;
};

struct Scenario {
    std::string experiment = "kernels";
    std::string kernel = "srw-d3";  ///< built-in name
    std::string kernel_file;        ///< overrides `kernel` when set
    double mu = 1.0;
    std::vector<Source> sources;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    std::string out = "out";
    std::string tolerance_profile = "strict";
    int grid_points = 0;  ///< 0 picks the per-dimension default
    std::string grid_mode = "subtract";

    KernelsParams kernels;
    SpectralParams spectral;
    MomentsParams moments;
    SimulateParams simulate;
    SweepParams sweep;
    ReportParams report;

    bool operator==(const Scenario&) const = default;

    JumpKernel load_kernel() const {
        return kernel_file.empty() ? JumpKernel::named(kernel) : JumpKernel::load(kernel_file);
    }

    PerturbationField field(int dim) const { return PerturbationField(dim, mu, sources); }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(trim(cur));
    return out;
}

struct ValueError {
    std::string what;
};

inline double to_double(const std::string& s) {
    try {
        return io::parse_double(s);
    } catch (const std::exception&) {
        throw ValueError{"expected a number, got '" + s + "'"};
    }
}

inline long long to_int(const std::string& s) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValueError{"expected an integer, got '" + s + "'"};
    }
}

inline bool to_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ValueError{"expected true or false, got '" + s + "'"};
}

inline std::string to_text(const std::string& s) {
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
    return s;
}

/// "a, b, c" or a range "from:to:step" (inclusive, tolerant to rounding).
inline std::vector<double> to_doubles(const std::string& s) {
    std::vector<double> out;
    if (trim(s).empty()) return out;
    if (s.find(':') != std::string::npos && s.find(',') == std::string::npos) {
        const auto p = split(s, ':');
        if (p.size() != 3) throw ValueError{"range must be from:to:step"};
        const double a = to_double(p[0]), b = to_double(p[1]), h = to_double(p[2]);
        if (!(h > 0.0) || b < a) throw ValueError{"range needs step > 0 and to >= from"};
        const auto n = static_cast<long>(std::floor((b - a) / h + 1e-9));
        for (long k = 0; k <= n; ++k) {
            // 12 significant digits: 0.1:1.0:0.1 yields 0.3, not 0.30000000000000004.
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.12g", a + k * h);
            out.push_back(std::strtod(buf, nullptr));
        }
        return out;
    }
    for (const auto& t : split(s, ',')) out.push_back(to_double(t));
    return out;
}

inline std::vector<int> to_ints(const std::string& s) {
    std::vector<int> out;
    if (trim(s).empty()) return out;
    for (const auto& t : split(s, ',')) out.push_back(static_cast<int>(to_int(t)));
    return out;
}

inline Site to_site(const std::string& s) {
    Site x;
    if (trim(to_text(s)).empty()) return x;
    for (const auto& t : split(to_text(s), ',')) x.push_back(static_cast<int>(to_int(t)));
    return x;
}

inline std::vector<Site> to_sites(const std::string& s) {
    std::vector<Site> out;
    if (trim(s).empty()) return out;
    for (const auto& t : split(s, ';')) out.push_back(to_site(t));
    return out;
}

inline std::vector<Source> to_sources(const std::string& s) {
    std::vector<Source> out;
    if (trim(s).empty()) return out;
    for (const auto& item : split(s, ';')) {
        const auto colon = item.rfind(':');
        if (colon == std::string::npos) throw ValueError{"source must be site:strength"};
        out.push_back({to_site(trim(item.substr(0, colon))), to_double(trim(item.substr(colon + 1)))});
    }
    return out;
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + io::format_double(v[i]);
    return s;
}

inline std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
    return s;
}

inline std::string site_text(const Site& x) {
    std::string s;
    for (std::size_t i = 0; i < x.size(); ++i) s += (i ? "," : "") + std::to_string(x[i]);
    return s;
}

inline std::string join(const std::vector<Site>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "; " : "") + site_text(v[i]);
    return s;
}

inline std::string join(const std::vector<Source>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i)
        s += (i ? "; " : "") + site_text(v[i].site) + ":" + io::format_double(v[i].strength);
    return s;
}

inline std::string quote(const std::string& s) { return "\"" + s + "\""; }

// Binds every key of every section to a parser and a printer, so load and
// write share one table and stay in step.
struct Field {
    std::function<void(Scenario&, const std::string&)> set;
    std::function<std::string(const Scenario&)> get;
};

using FieldTable = std::map<std::string, std::map<std::string, Field>>;

inline const FieldTable& field_table() {
    static const FieldTable table = [] {
        FieldTable t;
        auto& top = t[""];
        top["experiment"] = {[](Scenario& s, const std::string& v) { s.experiment = to_text(v); },
                             [](const Scenario& s) { return quote(s.experiment); }};
        top["kernel"] = {[](Scenario& s, const std::string& v) { s.kernel = to_text(v); },
                         [](const Scenario& s) { return quote(s.kernel); }};
        top["kernel_file"] = {[](Scenario& s, const std::string& v) { s.kernel_file = to_text(v); },
                              [](const Scenario& s) { return quote(s.kernel_file); }};
        top["mu"] = {[](Scenario& s, const std::string& v) { s.mu = to_double(v); },
                     [](const Scenario& s) { return io::format_double(s.mu); }};
        top["sigma"] = {[](Scenario& s, const std::string& v) {
                            s.sources = {{Site{}, to_double(v)}};  // site filled in by validation
                        },
                        nullptr};
        top["sources"] = {[](Scenario& s, const std::string& v) { s.sources = to_sources(to_text(v)); },
                          [](const Scenario& s) { return quote(join(s.sources)); }};
        top["seed"] = {[](Scenario& s, const std::string& v) {
                           if (!v.empty() && v[0] == '-') throw ValueError{"seed must be >= 0"};
                           s.seed = std::stoull(v);
                       },
                       [](const Scenario& s) { return std::to_string(s.seed); }};
        top["threads"] = {[](Scenario& s, const std::string& v) {
                              const auto n = to_int(v);
                              if (n < 1) throw ValueError{"threads must be >= 1"};
                              s.threads = static_cast<unsigned>(n);
                          },
                          [](const Scenario& s) { return std::to_string(s.threads); }};
        top["out"] = {[](Scenario& s, const std::string& v) { s.out = to_text(v); },
                      [](const Scenario& s) { return quote(s.out); }};
        top["tolerance_profile"] = {
            [](Scenario& s, const std::string& v) { s.tolerance_profile = to_text(v); },
            [](const Scenario& s) { return quote(s.tolerance_profile); }};
        top["grid_points"] = {[](Scenario& s, const std::string& v) { s.grid_points = static_cast<int>(to_int(v)); },
                              [](const Scenario& s) { return std::to_string(s.grid_points); }};
        top["grid_mode"] = {[](Scenario& s, const std::string& v) { s.grid_mode = to_text(v); },
                            [](const Scenario& s) { return quote(s.grid_mode); }};

        auto& k = t["kernels"];
        k["times"] = {[](Scenario& s, const std::string& v) { s.kernels.times = to_doubles(v); },
                      [](const Scenario& s) { return join(s.kernels.times); }};
        k["lambdas"] = {[](Scenario& s, const std::string& v) { s.kernels.lambdas = to_doubles(v); },
                        [](const Scenario& s) { return join(s.kernels.lambdas); }};
        k["displacements"] = {[](Scenario& s, const std::string& v) { s.kernels.displacements = to_sites(to_text(v)); },
                              [](const Scenario& s) { return quote(join(s.kernels.displacements)); }};
        k["transience"] = {[](Scenario& s, const std::string& v) { s.kernels.transience = to_bool(v); },
                           [](const Scenario& s) { return std::string(s.kernels.transience ? "true" : "false"); }};
        k["fit_radii"] = {[](Scenario& s, const std::string& v) { s.kernels.fit_radii = to_doubles(v); },
                          [](const Scenario& s) { return join(s.kernels.fit_radii); }};

        auto& sp = t["spectral"];
        sp["sigmas"] = {[](Scenario& s, const std::string& v) { s.spectral.sigmas = to_doubles(v); },
                        [](const Scenario& s) { return join(s.spectral.sigmas); }};
        sp["box_L"] = {[](Scenario& s, const std::string& v) { s.spectral.box_L = to_ints(v); },
                       [](const Scenario& s) { return join(s.spectral.box_L); }};
        sp["delta0"] = {[](Scenario& s, const std::string& v) { s.spectral.delta0 = to_double(v); },
                        [](const Scenario& s) { return io::format_double(s.spectral.delta0); }};
        sp["fit_radii"] = {[](Scenario& s, const std::string& v) { s.spectral.fit_radii = to_doubles(v); },
                           [](const Scenario& s) { return join(s.spectral.fit_radii); }};

        auto& m = t["moments"];
        m["R"] = {[](Scenario& s, const std::string& v) { s.moments.R = static_cast<int>(to_int(v)); },
                  [](const Scenario& s) { return std::to_string(s.moments.R); }};
        m["boundary"] = {[](Scenario& s, const std::string& v) { s.moments.boundary = to_text(v); },
                         [](const Scenario& s) { return quote(s.moments.boundary); }};
        m["initial"] = {[](Scenario& s, const std::string& v) { s.moments.initial = to_text(v); },
                        [](const Scenario& s) { return quote(s.moments.initial); }};
        m["order"] = {[](Scenario& s, const std::string& v) { s.moments.order = static_cast<int>(to_int(v)); },
                      [](const Scenario& s) { return std::to_string(s.moments.order); }};
        m["t_end"] = {[](Scenario& s, const std::string& v) { s.moments.t_end = to_double(v); },
                      [](const Scenario& s) { return io::format_double(s.moments.t_end); }};
        m["dt"] = {[](Scenario& s, const std::string& v) { s.moments.dt = to_double(v); },
                   [](const Scenario& s) { return io::format_double(s.moments.dt); }};
        m["y0"] = {[](Scenario& s, const std::string& v) { s.moments.y0 = to_site(to_text(v)); },
                   [](const Scenario& s) { return quote(site_text(s.moments.y0)); }};
        m["probes"] = {[](Scenario& s, const std::string& v) { s.moments.probes = to_sites(to_text(v)); },
                       [](const Scenario& s) { return quote(join(s.moments.probes)); }};
        m["checkpoints"] = {[](Scenario& s, const std::string& v) { s.moments.checkpoints = to_doubles(v); },
                            [](const Scenario& s) { return join(s.moments.checkpoints); }};
        m["bound_check"] = {[](Scenario& s, const std::string& v) { s.moments.bound_check = to_bool(v); },
                            [](const Scenario& s) { return std::string(s.moments.bound_check ? "true" : "false"); }};
        m["bound_radius"] = {[](Scenario& s, const std::string& v) { s.moments.bound_radius = static_cast<int>(to_int(v)); },
                             [](const Scenario& s) { return std::to_string(s.moments.bound_radius); }};
        m["bound_tolerance"] = {[](Scenario& s, const std::string& v) { s.moments.bound_tolerance = to_double(v); },
                                [](const Scenario& s) { return io::format_double(s.moments.bound_tolerance); }};
        m["d_terms"] = {[](Scenario& s, const std::string& v) { s.moments.d_terms = static_cast<int>(to_int(v)); },
                        [](const Scenario& s) { return std::to_string(s.moments.d_terms); }};

        auto& sim = t["simulate"];
        sim["init"] = {[](Scenario& s, const std::string& v) { s.simulate.init = to_text(v); },
                       [](const Scenario& s) { return quote(s.simulate.init); }};
        sim["W"] = {[](Scenario& s, const std::string& v) { s.simulate.W = static_cast<int>(to_int(v)); },
                    [](const Scenario& s) { return std::to_string(s.simulate.W); }};
        sim["start"] = {[](Scenario& s, const std::string& v) { s.simulate.start = to_site(to_text(v)); },
                        [](const Scenario& s) { return quote(site_text(s.simulate.start)); }};
        sim["t_end"] = {[](Scenario& s, const std::string& v) { s.simulate.t_end = to_double(v); },
                        [](const Scenario& s) { return io::format_double(s.simulate.t_end); }};
        sim["checkpoints"] = {[](Scenario& s, const std::string& v) { s.simulate.checkpoints = to_doubles(v); },
                              [](const Scenario& s) { return join(s.simulate.checkpoints); }};
        sim["replicas"] = {[](Scenario& s, const std::string& v) {
                               const auto n = to_int(v);
                               if (n < 0) throw ValueError{"replicas must be >= 0"};
                               s.simulate.replicas = static_cast<std::uint64_t>(n);
                           },
                           [](const Scenario& s) { return std::to_string(s.simulate.replicas); }};
        sim["probes"] = {[](Scenario& s, const std::string& v) { s.simulate.probes = to_sites(to_text(v)); },
                         [](const Scenario& s) { return quote(join(s.simulate.probes)); }};
        sim["observation"] = {[](Scenario& s, const std::string& v) { s.simulate.observation = static_cast<int>(to_int(v)); },
                              [](const Scenario& s) { return std::to_string(s.simulate.observation); }};
        sim["cap"] = {[](Scenario& s, const std::string& v) { s.simulate.cap = static_cast<std::uint64_t>(to_int(v)); },
                      [](const Scenario& s) { return std::to_string(s.simulate.cap); }};
        sim["order"] = {[](Scenario& s, const std::string& v) { s.simulate.order = static_cast<int>(to_int(v)); },
                        [](const Scenario& s) { return std::to_string(s.simulate.order); }};
        sim["raw"] = {[](Scenario& s, const std::string& v) { s.simulate.raw = to_bool(v); },
                      [](const Scenario& s) { return std::string(s.simulate.raw ? "true" : "false"); }};

        auto& sw = t["sweep"];
        sw["sigmas"] = {[](Scenario& s, const std::string& v) { s.sweep.sigmas = to_doubles(v); },
                        [](const Scenario& s) { return join(s.sweep.sigmas); }};
        sw["R"] = {[](Scenario& s, const std::string& v) { s.sweep.R = static_cast<int>(to_int(v)); },
                   [](const Scenario& s) { return std::to_string(s.sweep.R); }};
        sw["t_end"] = {[](Scenario& s, const std::string& v) { s.sweep.t_end = to_double(v); },
                       [](const Scenario& s) { return io::format_double(s.sweep.t_end); }};
        sw["dt"] = {[](Scenario& s, const std::string& v) { s.sweep.dt = to_double(v); },
                    [](const Scenario& s) { return io::format_double(s.sweep.dt); }};
        sw["slope_from"] = {[](Scenario& s, const std::string& v) { s.sweep.slope_from = to_double(v); },
                            [](const Scenario& s) { return io::format_double(s.sweep.slope_from); }};
        sw["slope_to"] = {[](Scenario& s, const std::string& v) { s.sweep.slope_to = to_double(v); },
                          [](const Scenario& s) { return io::format_double(s.sweep.slope_to); }};

        auto& rp = t["report"];
        rp["manifest"] = {[](Scenario& s, const std::string& v) { s.report.manifest = to_text(v); },
                          [](const Scenario& s) { return quote(s.report.manifest); }};
        rp["view"] = {[](Scenario& s, const std::string& v) { s.report.view = to_text(v); },
                      [](const Scenario& s) { return quote(s.report.view); }};
        return t;
    }();
    return table;
}

// Strips a trailing comment that is not inside quotes.
inline std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') quoted = !quoted;
        if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
}

}  // namespace detail

inline const std::vector<std::string>& experiment_types() {
    static const std::vector<std::string> v{"kernels", "spectral", "moments", "simulate", "sweep", "report"};
    return v;
}

/**
 * Checks every parameter against the owning module's preconditions and fills
 * in the sites left open by the `sigma` shorthand. Throws ValidationError.
 */
inline void validate(Scenario& s) {
    auto fail = [](const std::string& m) { throw ValidationError(m); };
    if (std::find(experiment_types().begin(), experiment_types().end(), s.experiment) ==
        experiment_types().end())
        fail("unknown experiment '" + s.experiment + "'");
    if (s.experiment == "report") {
        if (s.report.manifest.empty()) fail("report needs [report] manifest");
        return;
    }
    int dim = 0;
    try {
        dim = s.load_kernel().dim();
    } catch (const Error& e) {
        fail(std::string("kernel: ") + e.what());
    }
    if (!(s.mu >= 0.0) || !std::isfinite(s.mu)) fail("mu must be finite and >= 0");
    for (auto& src : s.sources) {
        if (src.site.empty()) src.site = origin(dim);
        if (static_cast<int>(src.site.size()) != dim) fail("source site dimension differs from the kernel");
        if (!(src.strength > 0.0)) fail("source strength sigma_i must be > 0");
    }
    try {
        (void)PerturbationField(dim, s.mu, s.sources);
    } catch (const Error& e) {
        fail(e.what());
    }
    if (s.tolerance_profile != "fast" && s.tolerance_profile != "strict")
        fail("tolerance_profile must be fast or strict");
    if (s.grid_mode != "plain" && s.grid_mode != "subtract") fail("grid_mode must be plain or subtract");
    if (s.grid_points != 0 && (s.grid_points < 8 || s.grid_points % 2 != 0))
        fail("grid_points must be 0 or an even number >= 8");
    auto dims = [&](const std::vector<Site>& v, const std::string& what) {
        for (const auto& x : v)
            if (static_cast<int>(x.size()) != dim) fail(what + " site dimension differs from the kernel");
    };
    auto increasing = [&](const std::vector<double>& v, const std::string& what) {
        if (!std::is_sorted(v.begin(), v.end())) fail(what + " must increase");
    };
    if (s.experiment == "kernels") {
        for (double t : s.kernels.times)
            if (!(t >= 0.0)) fail("times must be >= 0");
        for (double l : s.kernels.lambdas)
            if (!(l >= 0.0)) fail("lambdas must be >= 0");
        dims(s.kernels.displacements, "displacement");
    }
    if (s.experiment == "spectral") {
        for (double v : s.spectral.sigmas)
            if (!(v > 0.0)) fail("sigmas must be > 0");
        for (int L : s.spectral.box_L)
            if (L < 2) fail("box_L must be >= 2");
        if (!s.spectral.box_L.empty() && !(s.spectral.delta0 > 0.0)) fail("delta0 must be > 0");
    }
    if (s.experiment == "moments") {
        auto& m = s.moments;
        if (m.y0.empty()) m.y0 = origin(dim);
        dims({m.y0}, "y0");
        dims(m.probes, "probe");
        if (m.order < 1) fail("order must be >= 1");
        if (!(m.t_end > 0.0)) fail("t_end must be > 0");
        if (m.dt < 0.0) fail("dt must be >= 0");
        if (m.R < 0) fail("R must be >= 0");
        if (m.boundary != "absorbing" && m.boundary != "periodic") fail("boundary must be absorbing or periodic");
        if (m.initial != "delta" && m.initial != "ones") fail("initial must be delta or ones");
        if (m.d_terms < 1) fail("d_terms must be >= 1");
        increasing(m.checkpoints, "checkpoints");
        for (double t : m.checkpoints)
            if (!(t > 0.0 && t <= m.t_end)) fail("checkpoints must lie in (0, t_end]");
    }
    if (s.experiment == "simulate") {
        auto& m = s.simulate;
        if (m.replicas == 0) fail("replicas must be >= 1");
        if (m.init != "window" && m.init != "single") fail("init must be window or single");
        if (m.W < 0) fail("W must be >= 0");
        if (m.start.empty()) m.start = origin(dim);
        dims({m.start}, "start");
        dims(m.probes, "probe");
        if (!(m.t_end > 0.0)) fail("t_end must be > 0");
        increasing(m.checkpoints, "checkpoints");
        for (double t : m.checkpoints)
            if (!(t >= 0.0 && t <= m.t_end)) fail("checkpoints must lie in [0, t_end]");
        if (m.cap < 1) fail("cap must be >= 1");
        if (m.order < 1) fail("order must be >= 1");
    }
    if (s.experiment == "sweep") {
        if (s.sweep.sigmas.empty()) fail("sweep needs sigmas");
        for (double v : s.sweep.sigmas)
            if (!(v > 0.0)) fail("sigmas must be > 0");
        if (s.sweep.R < 1) fail("R must be >= 1");
        if (!(s.sweep.t_end > 0.0)) fail("t_end must be > 0");
        if (!(s.sweep.slope_from >= 0.0 && s.sweep.slope_from < s.sweep.slope_to &&
              s.sweep.slope_to <= s.sweep.t_end))
            fail("slope window must satisfy 0 <= slope_from < slope_to <= t_end");
    }
}

/// Parses scenario text; `validate_now = false` skips module preconditions.
inline Scenario parse_scenario(std::istream& in, bool validate_now = true) {
    Scenario s;
    const auto& table = detail::field_table();
    std::string section;
    std::set<std::string> seen;
    std::string raw;
    int lineno = 0;
    while (std::getline(in, raw)) {
        ++lineno;
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        const int col = static_cast<int>(raw.find_first_not_of(" \t")) + 1;
        if (line.front() == '[') {
            if (line.back() != ']') throw ParseError("unterminated section header", lineno, col);
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!table.count(section) || section.empty())
                throw ParseError("unknown section [" + section + "]", lineno, col + 1);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("expected key = value", lineno, col);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        const auto& keys = table.at(section);
        auto it = keys.find(key);
        if (it == keys.end())
            throw ParseError("unknown key '" + key + "'" +
                                 (section.empty() ? "" : " in [" + section + "]"),
                             lineno, col);
        if (!seen.insert(section + "." + key).second)
            throw ParseError("duplicate key '" + key + "'", lineno, col);
        try {
            it->second.set(s, value);
        } catch (const detail::ValueError& e) {
            const int vcol = static_cast<int>(raw.find('=')) + 2 +
                             static_cast<int>(raw.substr(raw.find('=') + 1).find_first_not_of(" \t"));
            throw ParseError(e.what + " for key '" + key + "'", lineno, vcol);
        } catch (const std::exception& e) {
            throw ParseError("bad value for key '" + key + "'", lineno, col);
        }
    }
    if (seen.count(".sigma") && seen.count(".sources"))
        throw ValidationError("give either sigma or sources, not both");
    if (validate_now) validate(s);
    return s;
}

inline Scenario load_scenario(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open scenario file '" + path + "'");
    return parse_scenario(f);
}

/// Text that parse_scenario() maps back to an identical Scenario.
inline std::string write_scenario(const Scenario& s) {
    std::ostringstream os;
    for (const auto& [section, keys] : detail::field_table()) {
        if (!section.empty()) os << "\n[" << section << "]\n";
        for (const auto& [key, field] : keys)
            if (field.get) os << key << " = " << field.get(s) << '\n';
    }
    return os.str();
}

}  // namespace brw
