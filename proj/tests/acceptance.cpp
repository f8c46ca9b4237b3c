// Acceptance runner: one PASS/FAIL line per criterion, detail lines indented.
// Usage: acceptance [--criterion N]   (N = 1..9, 0 or absent runs all)

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "brw/experiment.hpp"
#include "brw/lattice_kernels.hpp"
#include "brw/moments.hpp"
#include "brw/simulator.hpp"
#include "brw/spectral.hpp"
#include "oracles.hpp"

using namespace brw;

namespace {

const JumpKernel d1 = JumpKernel::named("srw-d1");
const JumpKernel d3 = JumpKernel::named("srw-d3");
const JumpKernel d5 = JumpKernel::named("srw-d5");

template <class... Args>
void info(const char* fmt, Args... args) {
    std::printf("    ");
    std::printf(fmt, args...);
    std::printf("\n");
    std::fflush(stdout);
}

/// int_0^T p(t,0,0) dt by Simpson on the Bessel product, plus the tail of the
/// large-t expansion p ~ (3/(2 pi t))^{3/2} (1 + 9/(8t)).
double time_domain_g0_d3() {
    const double T = 200.0;
    const int n = 20000;
    const double h = T / n;
    double s = 0.0;
    for (int k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        s += w * oracle::srw_heat(3, k * h, {0, 0, 0});
    }
    s *= h / 3.0;
    const double c = std::pow(3.0 / (2.0 * std::numbers::pi), 1.5);
    return s + c * (2.0 / std::sqrt(T) + 9.0 / 8.0 * (2.0 / 3.0) * std::pow(T, -1.5));
}

/// Least-squares slope of y against x.
double slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
    mx /= static_cast<double>(x.size());
    my /= static_cast<double>(y.size());
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

/// m_1(t, 0) with all-ones data on an absorbing box, at integer times 0..t_end.
MomentTable ones_first_moment(double sigma, double mu, int R, double t_end) {
    const PerturbationField f = PerturbationField::single(3, mu, sigma);
    const LatticeBox box(3, R);
    SolveOptions o;
    o.t_end = t_end;
    for (int k = 1; k <= static_cast<int>(t_end); ++k) o.checkpoints.push_back(k);
    o.probes = {origin(3)};
    return solve_first_moment(build_generator(d3, box, f), box, InitialData::ones, origin(3), o);
}

std::vector<double> origin_series(const MomentTable& t) {
    std::vector<double> v;
    for (std::size_t j = 0; j < t.times.size(); ++j) v.push_back(t.at(j, 1, origin(3)));
    return v;
}

// ---------------------------------------------------------------------------

bool criterion1() {
    const double n64 = resolvent_integral(d3, TorusGrid(3, 64), 0.0).value;
    const double n128 = resolvent_integral(d3, TorusGrid(3, 128), 0.0).value;
    const double td = time_domain_g0_d3();
    info("I(0): N=64 %.10f  N=128 %.10f  time-domain oracle %.10f  closed form %.10f", n64, n128, td,
         oracle::watson_g0_d3());
    info("|N64 - N128| = %.3e (tol 5e-3)  |N128 - oracle| = %.3e (tol 1e-3)", std::abs(n64 - n128),
         std::abs(n128 - td));
    return std::abs(n64 - n128) <= 5e-3 && std::abs(n64 - td) <= 1e-3 && std::abs(n128 - td) <= 1e-3;
}

bool criterion2() {
    const double sigma = 0.3;
    const double A = 1.0 / (1.0 - sigma * oracle::watson_g0_d3());
    const double A_lib = steady_mean_constant(d3, default_grid(3), PerturbationField::single(3, 1.0, sigma));
    const MomentTable t = ones_first_moment(sigma, 1.0, 20, 100.0);
    const auto m = origin_series(t);
    const double rel = std::abs(m.back() - A) / A;
    info("A = %.6f (library %.6f); ODE m1(100, 0) = %.6f, relative gap %.4f (tol 0.02)", A, A_lib, m.back(), rel);

    // m_1(t) - A decays like t^{-1/2}: extrapolate a - b / sqrt(t) over t in [50, 100].
    std::vector<double> x, y;
    for (std::size_t j = 50; j < t.times.size(); ++j) {
        x.push_back(1.0 / std::sqrt(t.times[j]));
        y.push_back(m[j]);
    }
    const double b = slope(x, y);
    double a = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) a += y[i] - b * x[i];
    a /= static_cast<double>(x.size());
    info("fit m1 = a + b/sqrt(t) on [50,100]: a = %.6f (gap %.4f), b = %.4f", a, std::abs(a - A) / A, b);

    const auto mc = local_time_mc(d3, {{origin(3), sigma}}, 200.0, 100000, 2024);
    const bool brackets = mc.value.lo <= A && A <= mc.value.hi;
    info("local-time MC, 1e5 paths, t=200: %.5f  95%% CI [%.5f, %.5f]  brackets A: %s", mc.value.mean,
         mc.value.lo, mc.value.hi, brackets ? "yes" : "no");
    return rel <= 0.02 && brackets;
}

bool criterion3() {
    const TorusGrid g = default_grid(3);
    const Threshold th = threshold_info(d3, g);
    info("sigma* = %.9f", th.sigma_star);
    bool ok = true;
    for (double sigma : {0.5, 0.6, 0.659, 0.66, 0.7, 1.0}) {
        const MomentTable t = ones_first_moment(sigma, 1.0, 20, 100.0);
        const auto m = origin_series(t);
        if (classify(sigma, th) == Regime::subcritical) {
            const double A = steady_mean_constant(d3, g, PerturbationField::single(3, 1.0, sigma));
            double peak = 0.0;
            for (double v : m) peak = std::max(peak, v);
            const bool pass = std::isfinite(A) && peak <= A * (1.0 + 1e-3);
            info("sigma=%.3f subcritical: A = %.6g, max m1(t,0) = %.6g  %s", sigma, A, peak, pass ? "ok" : "FAIL");
            ok = ok && pass;
            continue;
        }
        const GrowthRoot r = growth_eigenvalue(d3, g, sigma);
        std::vector<double> x, y;
        for (std::size_t j = 50; j < t.times.size(); ++j) {
            x.push_back(t.times[j]);
            y.push_back(std::log(m[j]));
        }
        const double s = slope(x, y);
        const double rel = r.lambda > 0.0 ? std::abs(s - r.lambda) / r.lambda : INFINITY;
        const bool pass = r.lambda > 0.0 && std::abs(r.residual) <= 1e-10 && rel <= 0.05;
        info("sigma=%.3f supercritical: lambda = %.6e, residual %.1e, ODE log-slope on [50,100] = %.6e, "
             "relative mismatch %.3g  %s",
             sigma, r.lambda, r.residual, s, rel, pass ? "ok" : "FAIL");
        ok = ok && pass;
    }
    return ok;
}

bool criterion4() {
    const int R = 20, radius = 10;
    const double t_end = 20.0;
    const TorusGrid g = default_grid(3);
    SolveOptions o;
    o.t_end = t_end;
    for (int k = 1; k <= 20; ++k) o.checkpoints.push_back(k);
    for (int a = -radius; a <= radius; ++a)
        for (int b = -radius; b <= radius; ++b)
            for (int c = -radius; c <= radius; ++c) o.probes.push_back({a, b, c});

    auto check = [&](const char* label, const PerturbationField& f) {
        const MomentTable t = solve_factorial_moments(d3, LatticeBox(3, R), f, 3, origin(3), o);
        // Exact Z^3 heat kernel from the Bessel product.
        std::vector<std::vector<double>> p;
        for (double time : t.times) {
            std::vector<double> row;
            for (std::size_t s : t.sites) row.push_back(oracle::srw_heat(3, time, t.box.site(s)));
            p.push_back(std::move(row));
        }
        const double A = steady_mean_constant(d3, g, f), B = bound_constant_B(d3, g, f);
        const BoundReport r = moment_bound_check(t, A, B, p, radius, 1e-3);
        bool pass = true;
        for (const auto& ob : r.orders) {
            if (ob.order < 2) continue;
            info("%s: order %d max ratio %.6f at t=%g x=(%s)", label, ob.order, ob.max_ratio, ob.time,
                 to_string(ob.site).c_str());
            pass = pass && ob.max_ratio <= 1.0 + 1e-3;
        }
        info("%s: constant %.6f, B = %.6f", label, A, B);
        return pass;
    };
    const bool single = check("single source", PerturbationField::single(3, 1.0, 0.3));
    const bool multi = check("two sources", PerturbationField(3, 1.0, {{{0, 0, 0}, 0.15}, {{1, 0, 0}, 0.15}}));
    return single && multi;
}

bool criterion5() {
    // (a) critical conservation on a periodic box.
    double worst = 0.0;
    for (int d : {1, 3}) {
        const JumpKernel k = JumpKernel::simple(d);
        const LatticeBox box(d, d == 1 ? 30 : 8, Boundary::periodic);
        SolveOptions o;
        o.t_end = 100.0;
        for (int j = 1; j <= 10; ++j) o.checkpoints.push_back(10.0 * j);
        const auto t = solve_factorial_moments(k, box, PerturbationField(d, 1.0), 1, origin(d), o);
        const auto ones = solve_first_moment(build_generator(k, box, PerturbationField(d, 0.0)), box,
                                             InitialData::ones, origin(d), o);
        for (std::size_t j = 0; j < ones.times.size(); ++j)
            for (double v : ones.values[j][0]) worst = std::max(worst, std::abs(v - 1.0));
        // Delta data: total mass sum_x m_1(t, x, 0) stays 1.
        for (std::size_t j = 0; j < t.times.size(); ++j) {
            CompensatedSum s;
            for (double v : t.values[j][0]) s.add(v);
            worst = std::max(worst, std::abs(s.value() - 1.0));
        }
    }
    const bool a = worst <= 1e-12;
    info("(a) periodic box, beta = mu = 1: max |m1 - 1| = %.2e (tol 1e-12)", worst);

    // (b) d = 1 clusterization.
    const double mu = 0.5;
    SimConfig c1;
    c1.kernel = d1;
    c1.field = PerturbationField(1, mu);
    c1.init = InitMode::window;
    c1.window = 2000;
    c1.t_end = 160.0;
    c1.checkpoints = {10.0, 40.0, 160.0};
    const int margin = static_cast<int>(std::ceil(6.0 * std::sqrt(c1.t_end)));
    for (int y = -(c1.window - margin); y <= c1.window - margin; ++y) c1.probes.push_back({y});
    const SimStats s1 = run_replicas(c1, 1000, 501, 1, false);
    const auto empty1 = empty_probe_probability(s1);
    const auto mean1 = estimate_moments(s1, 1);
    bool b = true;
    for (std::size_t j = 0; j < c1.checkpoints.size(); ++j) {
        const bool within = std::abs(mean1[j].value.mean - 1.0) <= 3.0 * mean1[j].value.se;
        const bool rising = j == 0 || empty1[j].mean > empty1[j - 1].mean;
        info("(b) d=1 t=%g: P(n=0) = %.4f +- %.4f, mean n = %.4f +- %.4f  %s", c1.checkpoints[j], empty1[j].mean,
             empty1[j].se, mean1[j].value.mean, mean1[j].value.se, within && rising ? "ok" : "FAIL");
        b = b && within && rising;
    }

    // (c) d = 3 stabilization; window and probe set reduced to keep the run at desk scale.
    SimConfig c3;
    c3.kernel = d3;
    c3.field = PerturbationField(3, mu);
    c3.init = InitMode::window;
    c3.window = 20;
    c3.t_end = 160.0;
    c3.checkpoints = {80.0, 160.0};
    for (int x = -4; x <= 4; ++x)
        for (int y = -4; y <= 4; ++y)
            for (int z = -4; z <= 4; ++z) c3.probes.push_back({x, y, z});
    const SimStats s3 = run_replicas(c3, 200, 503, 1, false);
    const auto empty3 = empty_probe_probability(s3);
    std::vector<double> diff;
    for (const auto& tr : s3.replicas) {
        auto share = [&](std::size_t j) {
            const auto& v = tr.snapshots[j].probe_counts;
            return static_cast<double>(std::count(v.begin(), v.end(), 0)) / static_cast<double>(v.size());
        };
        diff.push_back(share(1) - share(0));
    }
    const Interval d = summarize(diff);
    const bool cc = std::abs(empty3[1].mean - empty3[0].mean) < 0.02;
    info("(c) d=3 W=%d: P(n=0) t=80 %.4f +- %.4f, t=160 %.4f +- %.4f, difference %.4f +- %.4f (tol 0.02)",
         c3.window, empty3[0].mean, empty3[0].se, empty3[1].mean, empty3[1].se, d.mean, d.se);
    return a && b && cc;
}

bool criterion6() {
    const std::vector<double> radii{4, 6, 8, 12, 16};
    const auto f3 = green_asymptote_fit(d3, TorusGrid(3, 64), radii);
    const auto f5 = green_asymptote_fit(d5, TorusGrid(5, 16), radii);
    info("d=3 slope %.4f (expected -1 +- 0.1); d=5 slope %.4f (expected -3 +- 0.2)", f3.slope, f5.slope);
    return std::abs(f3.slope + 1.0) <= 0.1 && std::abs(f5.slope + 3.0) <= 0.2;
}

bool criterion7() {
    const LatticeBox box(1, 10);
    const PerturbationField f = PerturbationField::single(1, 1.0, 0.3);
    SolveOptions o;
    o.t_end = 2.0;
    o.checkpoints = {0.5, 1.0, 2.0};
    const auto k = kpp_moments(d1, box, f, {0}, o);
    const auto t = solve_factorial_moments(d1, box, f, 2, {0}, o);
    double worst = 0.0;
    for (std::size_t j = 1; j < t.times.size(); ++j)
        for (std::size_t s = 0; s < box.size(); ++s) {
            const std::size_t slot = t.slot(box.site(s));
            const double ref1 = t.values[j][0][slot], ref2 = t.values[j][1][slot];
            if (ref1 > 0.0) worst = std::max(worst, std::abs(k.m1[j][s] - ref1) / ref1);
            if (ref2 > 0.0) worst = std::max(worst, std::abs(k.m2[j][s] - ref2) / ref2);
        }
    info("KPP finite differences vs hierarchy (d=1, R=10): max relative difference %.3e (tol 1e-2)", worst);
    const auto D = catalan_D(30);
    bool bounded = true;
    for (int l = 1; l <= 30; ++l) bounded = bounded && D[static_cast<std::size_t>(l - 1)] <= growth_bound(l);
    info("D_30 = %s, 4^30 30! = %s", D.back().str().c_str(), growth_bound(30).str().c_str());
    return worst <= 1e-2 && bounded;
}

bool criterion8() {
    SolveOptions o;
    o.t_end = 10.0;
    o.checkpoints = {0.5, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    const auto t =
        solve_factorial_moments(d3, LatticeBox(3, 16), PerturbationField::single(3, 1.0, 0.3), 1, origin(3), o);
    const MajorizationReport r = majorization_check(t);
    info("points checked %zu, worst margin m1(t,x,0) - m1(t,0,0) = %.3e at t=%g x=(%s)", r.points_checked,
         r.worst_margin, r.worst_time, to_string(r.worst_site).c_str());
    return r.holds;
}

bool criterion9() {
    SimConfig c;
    c.kernel = d1;
    c.field = PerturbationField(1, 0.0);
    c.t_end = 4.0;
    c.record_positions = true;
    const std::size_t n = 100000;
    const SimStats s = run_replicas(c, n, 909);
    std::vector<double> observed(61, 0.0), probs(61);
    for (int y = -30; y <= 30; ++y) probs[y + 30] = oracle::bessel_heat_1d(4.0, y);
    for (const auto& tr : s.replicas) {
        const int y = tr.snapshots.back().positions.at(0)[0];
        if (std::abs(y) <= 30) observed[y + 30] += 1.0;
    }
    const ChiSquare chi = chi_square_test(observed, probs, static_cast<double>(n));
    info("chi-square %.3f on %d dof, p = %.4f (need > 0.01)", chi.statistic, chi.dof, chi.p_value);

    // Reproducibility through the full experiment path.
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "brwlab_acceptance_9";
    fs::remove_all(base);
    std::vector<std::string> bytes[2];
    const std::vector<std::string> names{"simulate.csv", "histograms.csv", "snapshots.jsonl", "occupancy.csv"};
    for (int run = 0; run < 2; ++run) {
        Scenario sc;
        sc.experiment = "simulate";
        sc.kernel = "srw-d1";
        sc.mu = 0.5;
        sc.sources = {{{0}, 0.2}};
        sc.seed = 77;
        sc.threads = run == 0 ? 1 : 2;
        sc.out = (base / std::to_string(run)).string();
        sc.simulate.W = 100;
        sc.simulate.t_end = 10.0;
        sc.simulate.checkpoints = {2.0, 5.0};
        sc.simulate.replicas = 50;
        sc.simulate.observation = 10;
        sc.simulate.raw = true;
        const ResultManifest m = run_experiment(sc);
        for (const auto& name : names)
            bytes[run].push_back(m.find(name) ? io::read_file(fs::path(sc.out) / name) : std::string());
    }
    const SimStats again = run_replicas(c, 1000, 909);
    bool identical = bytes[0] == bytes[1];
    for (std::size_t r = 0; r < again.replicas.size(); ++r)
        identical = identical && again.replicas[r].snapshots.back().positions == s.replicas[r].snapshots.back().positions &&
                    again.replicas[r].jumps == s.replicas[r].jumps;
    info("rerun with identical seeds bit-identical: %s", identical ? "yes" : "no");
    fs::remove_all(base);
    return chi.p_value > 0.01 && identical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "criterion number 1-9 (0 = all)")->check(CLI::Range(0, 9));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<bool()>>> criteria{
        {"Green-function constant", criterion1},
        {"steady first moment", criterion2},
        {"threshold dichotomy", criterion3},
        {"higher-moment bound", criterion4},
        {"critical conservation and dimension dichotomy", criterion5},
        {"Green asymptotics", criterion6},
        {"oracle equivalence", criterion7},
        {"majorization", criterion8},
        {"simulator law-exactness", criterion9},
    };
    bool all = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int number = static_cast<int>(i) + 1;
        if (only != 0 && only != number) continue;
        const auto start = std::chrono::steady_clock::now();
        bool pass = false;
        std::string error;
        try {
            pass = criteria[i].second();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!error.empty()) info("error: %s", error.c_str());
        std::printf("%s criterion %d: %s (%.1f s)\n", pass ? "PASS" : "FAIL", number, criteria[i].first, secs);
        std::fflush(stdout);
        all = all && pass;
    }
    return all ? 0 : 1;
}
