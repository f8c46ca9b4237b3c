#pragma once

// Factorial-moment hierarchy on a finite box, the generating-function (KPP)
// oracle, and numerical checks of the moment bounds.

#include <algorithm>
#include <boost/multiprecision/cpp_int.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "brw/common.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/lattice_box.hpp"
#include "brw/perturbation.hpp"

namespace brw {

enum class InitialData {
    delta,  ///< m_1(0, x) = 1 at x = y0, else 0
    ones,   ///< m_1(0, x) = 1 everywhere (one particle per site)
};

inline const char* to_string(InitialData i) { return i == InitialData::delta ? "delta" : "ones"; }

/// Default time step: 0.1 / (1 + sigma_tot + 2 L (mu + sigma_tot) mhat).
inline double recommended_dt(const PerturbationField& field, int max_order, double mhat) {
    const double s = field.sigma_total();
    return 0.1 / (1.0 + s + 2.0 * max_order * (field.mu() + s) * mhat);
}

/// Default box half-width: ceil(6 sqrt(t_end)) plus the largest source offset.
inline int recommended_half_width(double t_end, const PerturbationField& field) {
    return static_cast<int>(std::ceil(6.0 * std::sqrt(t_end))) + field.max_source_offset();
}

struct SolveOptions {
    double t_end = 1.0;
    double dt = 0.0;                  ///< 0 picks recommended_dt, refreshed per checkpoint interval
    std::vector<double> checkpoints;  ///< increasing, in (0, t_end]; t_end added if missing
    std::vector<Site> probes;         ///< store only these sites; empty stores the whole box
    bool estimate_error = false;      ///< rerun with dt/2 and report per-order differences
    double truncation_threshold = 1e-6;
};

/**
 * m_l(t_j, x, y0) for l = 1..L at the checkpoints; index 0 of `times` is t = 0.
 * values[j][l-1][k] refers to site sites[k].
 */
struct MomentTable {
    LatticeBox box{1, 0};
    Site y0;
    int max_order = 1;
    InitialData initial = InitialData::delta;
    std::vector<double> times;
    std::vector<std::size_t> sites;
    std::vector<std::vector<std::vector<double>>> values;
    std::vector<double> order_error;  ///< max relative step-halving change per order
    double boundary_fraction = 0.0;   ///< share of m_1 mass on the outer box layer at t_end
    bool truncation_warning = false;
    int steps = 0;

    std::size_t slot(const Site& x) const {
        const std::size_t i = box.index_of(x);
        auto it = std::lower_bound(sites.begin(), sites.end(), i);
        if (it == sites.end() || *it != i) throw PreconditionError("site not recorded in table");
        return static_cast<std::size_t>(it - sites.begin());
    }

    double at(std::size_t time_index, int order, const Site& x) const {
        return values.at(time_index).at(static_cast<std::size_t>(order - 1))[slot(x)];
    }
};

namespace detail {

inline std::vector<std::vector<double>> binomial_table(int n) {
    std::vector<std::vector<double>> c(static_cast<std::size_t>(n + 1));
    for (int i = 0; i <= n; ++i) {
        c[i].assign(static_cast<std::size_t>(i + 1), 1.0);
        for (int k = 1; k < i; ++k) c[i][k] = c[i - 1][k - 1] + c[i - 1][k];
    }
    return c;
}

/**
 * Joint RK4 march of the hierarchy dm_l/dt = H m_l + 2 beta sum_{i=1}^{l-1}
 * binom(l-1, i) m_i m_{l-i}. Orders are coupled only downward, so marching them
 * together is the same as solving them one after another on a shared grid.
 */
class HierarchyStepper {
public:
    HierarchyStepper(const SparseOperator& h, std::vector<double> beta, int max_order)
        : h_(h), beta_(std::move(beta)), order_(max_order), n_(h.n),
          binom_(binomial_table(max_order)) {
        for (auto* v : {&k1_, &k2_, &k3_, &k4_, &tmp_}) v->assign(n_ * order_, 0.0);
    }

    void rhs(const std::vector<double>& m, std::vector<double>& out) const {
        for (int l = 1; l <= order_; ++l) {
            const double* ml = m.data() + (l - 1) * n_;
            double* ol = out.data() + (l - 1) * n_;
            h_.apply(ml, ol);
            if (l == 1) continue;
            for (std::size_t x = 0; x < n_; ++x) {
                double s = 0.0;
                for (int i = 1; i <= l - 1; ++i)
                    s += binom_[l - 1][i] * m[(i - 1) * n_ + x] * m[(l - i - 1) * n_ + x];
                ol[x] += 2.0 * beta_[x] * s;
            }
        }
    }

    void step(std::vector<double>& m, double dt) {
        rhs(m, k1_);
        axpy(m, 0.5 * dt, k1_, tmp_);
        rhs(tmp_, k2_);
        axpy(m, 0.5 * dt, k2_, tmp_);
        rhs(tmp_, k3_);
        axpy(m, dt, k3_, tmp_);
        rhs(tmp_, k4_);
        for (std::size_t i = 0; i < m.size(); ++i)
            m[i] += dt / 6.0 * (k1_[i] + 2.0 * k2_[i] + 2.0 * k3_[i] + k4_[i]);
    }

private:
    static void axpy(const std::vector<double>& x, double a, const std::vector<double>& y,
                     std::vector<double>& out) {
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + a * y[i];
    }

    const SparseOperator& h_;
    std::vector<double> beta_;
    int order_;
    std::size_t n_;
    std::vector<std::vector<double>> binom_;
    std::vector<double> k1_, k2_, k3_, k4_, tmp_;
};

inline std::vector<double> normalized_checkpoints(const SolveOptions& o) {
    require(o.t_end > 0.0 && std::isfinite(o.t_end), "t_end must be positive");
    std::vector<double> c = o.checkpoints;
    require(std::is_sorted(c.begin(), c.end()), "checkpoints must increase");
    for (double t : c) require(t > 0.0 && t <= o.t_end, "checkpoint outside (0, t_end]");
    c.erase(std::unique(c.begin(), c.end()), c.end());
    if (c.empty() || c.back() < o.t_end) c.push_back(o.t_end);
    return c;
}

inline MomentTable march(const SparseOperator& h, const LatticeBox& box, std::vector<double> beta,
                         int max_order, InitialData init, const Site& y0, const SolveOptions& o,
                         double dt_scale) {
    require(h.n == box.size(), "operator does not match the box");
    require(max_order >= 1, "max order must be >= 1");
    const auto checkpoints = normalized_checkpoints(o);
    const double limit = 2.78 / (1.0 + h.max_abs_diag());
    if (o.dt > 0.0 && o.dt > limit)
        throw PreconditionError("dt = " + std::to_string(o.dt) + " exceeds the RK4 stability bound " +
                                std::to_string(limit));
    double sigma_total = 0.0, mu = std::numeric_limits<double>::infinity();
    for (double b : beta) mu = std::min(mu, b);
    for (double b : beta) sigma_total += b - mu;
    if (max_order == 1) {
        sigma_total = 0.0;
        for (double d : h.diag) sigma_total += std::max(0.0, d + 1.0);
    }

    MomentTable t;
    t.box = box;
    t.y0 = y0;
    t.max_order = max_order;
    t.initial = init;
    if (o.probes.empty()) {
        t.sites.resize(box.size());
        for (std::size_t i = 0; i < box.size(); ++i) t.sites[i] = i;
    } else {
        for (const Site& p : o.probes) t.sites.push_back(box.index_of(p));
        std::sort(t.sites.begin(), t.sites.end());
        t.sites.erase(std::unique(t.sites.begin(), t.sites.end()), t.sites.end());
    }
    const std::size_t n = box.size();
    std::vector<double> m(n * max_order, 0.0);
    if (init == InitialData::delta)
        m[box.index_of(y0)] = 1.0;
    else
        std::fill(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n), 1.0);

    auto record = [&](double time) {
        t.times.push_back(time);
        std::vector<std::vector<double>> snap(static_cast<std::size_t>(max_order));
        for (int l = 0; l < max_order; ++l) {
            snap[l].reserve(t.sites.size());
            for (std::size_t s : t.sites) snap[l].push_back(m[l * n + s]);
        }
        t.values.push_back(std::move(snap));
    };
    record(0.0);

    HierarchyStepper stepper(h, std::move(beta), max_order);
    double now = 0.0;
    double running_max = 0.0;
    for (double target : checkpoints) {
        double dt = o.dt;
        if (dt <= 0.0) {
            const double mhat = max_order >= 2 ? std::max(1.0, running_max) : 0.0;
            const double s = sigma_total;
            dt = 0.1 / (1.0 + s + 2.0 * max_order * (mu + s) * mhat);
        }
        dt *= dt_scale;
        const double span = target - now;
        const auto steps = static_cast<long>(std::ceil(span / dt - 1e-9));
        const double h_step = span / static_cast<double>(std::max<long>(steps, 1));
        for (long k = 0; k < steps; ++k) {
            stepper.step(m, h_step);
            ++t.steps;
        }
        now = target;
        double peak = 0.0;
        for (double v : m) peak = std::max(peak, std::abs(v));
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i] < -1e-12 * std::max(peak, 1.0))
                throw UnstableStep("negative moment " + std::to_string(m[i]) + " at t = " +
                                   std::to_string(now) + " (order " +
                                   std::to_string(i / n + 1) + ")");
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = std::max(m[i], 0.0);
        for (std::size_t i = 0; i < n * static_cast<std::size_t>(max_order - 1); ++i)
            running_max = std::max(running_max, m[i]);
        record(now);
    }

    // Mass of m_1 on the outer layer of the box.
    CompensatedSum total, layer;
    for (std::size_t i = 0; i < n; ++i) {
        total.add(m[i]);
        const Site x = box.site(i);
        if (norm_inf(x - box.center()) == box.half_width()) layer.add(m[i]);
    }
    t.boundary_fraction = total.value() > 0.0 ? layer.value() / total.value() : 0.0;
    t.truncation_warning =
        box.mode() == Boundary::absorbing && t.boundary_fraction > o.truncation_threshold;
    return t;
}

inline void attach_error(MomentTable& fine, const MomentTable& coarse) {
    fine.order_error.assign(static_cast<std::size_t>(fine.max_order), 0.0);
    for (std::size_t j = 0; j < fine.times.size(); ++j)
        for (int l = 0; l < fine.max_order; ++l) {
            const auto& a = fine.values[j][l];
            const auto& b = coarse.values[j][l];
            double peak = 0.0;
            for (double v : a) peak = std::max(peak, std::abs(v));
            for (std::size_t k = 0; k < a.size(); ++k) {
                const double scale = std::max(std::abs(a[k]), 1e-8 * peak);
                if (scale == 0.0) continue;
                fine.order_error[l] = std::max(fine.order_error[l], std::abs(a[k] - b[k]) / scale);
            }
        }
}

}  // namespace detail

/// m_1(t, x, y0) with either delta or all-ones initial data.
inline MomentTable solve_first_moment(const SparseOperator& h, const LatticeBox& box,
                                      InitialData init, const Site& y0, const SolveOptions& o) {
    std::vector<double> beta(box.size(), 0.0);
    auto t = detail::march(h, box, beta, 1, init, y0, o, 1.0);
    if (o.estimate_error)
        detail::attach_error(t, detail::march(h, box, beta, 1, init, y0, o, 2.0));
    return t;
}

/// Factorial moments m_1..m_L with zero initial data for l >= 2.
inline MomentTable solve_factorial_moments(const JumpKernel& kernel, const LatticeBox& box,
                                           const PerturbationField& field, int max_order,
                                           const Site& y0, const SolveOptions& o) {
    require(max_order >= 1, "max order must be >= 1");
    const SparseOperator h = build_generator(kernel, box, field);
    const auto beta = branching_rates(box, field);
    auto t = detail::march(h, box, beta, max_order, InitialData::delta, y0, o, 1.0);
    if (o.estimate_error)
        detail::attach_error(
            t, detail::march(h, box, beta, max_order, InitialData::delta, y0, o, 2.0));
    return t;
}

/// p(t_j, x, y0) on the box (V = 0) at the table's times and sites, by uniformization.
inline std::vector<std::vector<double>> heat_kernel_on_box(const JumpKernel& kernel,
                                                           const MomentTable& table) {
    const LatticeBox& box = table.box;
    const SparseOperator h = build_generator(kernel, box, PerturbationField(box.dim(), 0.0));
    std::vector<double> v(box.size(), 0.0);
    v[box.index_of(table.y0)] = 1.0;
    std::vector<std::vector<double>> out;
    double now = 0.0;
    for (double t : table.times) {
        v = expm_action(h, std::move(v), t - now);
        now = t;
        std::vector<double> row;
        row.reserve(table.sites.size());
        for (std::size_t s : table.sites) row.push_back(v[s]);
        out.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------
// D_l sequence

using BigInt = boost::multiprecision::cpp_int;

/// D_1 = 1, D_l = sum_{i=1}^{l-1} binom(l-1, i) D_i D_{l-i}; exact integers.
inline std::vector<BigInt> catalan_D(int max_order) {
    require(max_order >= 1, "L must be >= 1");
    std::vector<std::vector<BigInt>> c(static_cast<std::size_t>(max_order));
    for (int i = 0; i < max_order; ++i) {
        c[i].assign(static_cast<std::size_t>(i + 1), BigInt(1));
        for (int k = 1; k < i; ++k) c[i][k] = c[i - 1][k - 1] + c[i - 1][k];
    }
    std::vector<BigInt> d(static_cast<std::size_t>(max_order + 1), BigInt(0));
    d[1] = 1;
    for (int l = 2; l <= max_order; ++l)
        for (int i = 1; i <= l - 1; ++i) d[l] += c[l - 1][i] * d[i] * d[l - i];
    d.erase(d.begin());
    return d;
}

/// 4^l l! as an exact integer.
inline BigInt growth_bound(int l) {
    BigInt b = 1;
    for (int k = 1; k <= l; ++k) b *= 4 * k;
    return b;
}

// ---------------------------------------------------------------------------
// Bound checks

struct OrderBound {
    int order = 1;
    double max_ratio = 0.0;
    double time = 0.0;
    Site site;
};

struct BoundReport {
    std::vector<OrderBound> orders;
    double tolerance = 1e-3;
    bool pass = true;
};

/**
 * max over the table of m_l / (A^{l-1} B^l l! p), restricted to
 * |x - y0|_inf <= radius (negative radius: whole table). With B = 0 (no
 * branching at all) the order-1 scale is taken as 1, i.e. the ratio m_1 / p.
 * Points with p = 0 count as ratio 0 when m_l = 0 and +inf otherwise.
 */
inline BoundReport moment_bound_check(const MomentTable& table, double A, double B,
                                      const std::vector<std::vector<double>>& p,
                                      int radius = -1, double tolerance = 1e-3) {
    require(p.size() == table.times.size(), "p and table have different time grids");
    BoundReport r;
    r.tolerance = tolerance;
    for (int l = 1; l <= table.max_order; ++l) {
        double factorial = 1.0;
        for (int k = 2; k <= l; ++k) factorial *= k;
        double scale = std::pow(A, l - 1) * std::pow(B, l) * factorial;
        if (l == 1 && B == 0.0) scale = 1.0;
        OrderBound ob;
        ob.order = l;
        for (std::size_t j = 0; j < table.times.size(); ++j) {
            for (std::size_t k = 0; k < table.sites.size(); ++k) {
                const Site x = table.box.site(table.sites[k]);
                if (radius >= 0 && norm_inf(x - table.y0) > radius) continue;
                const double m = table.values[j][l - 1][k];
                const double pk = p[j][k];
                double ratio;
                if (pk > 0.0)
                    ratio = m / (scale * pk);
                else
                    ratio = m == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
                if (ratio > ob.max_ratio) {
                    ob.max_ratio = ratio;
                    ob.time = table.times[j];
                    ob.site = x;
                }
            }
        }
        if (ob.site.empty()) ob.site = table.y0;
        r.pass = r.pass && ob.max_ratio <= 1.0 + tolerance;
        r.orders.push_back(std::move(ob));
    }
    return r;
}

struct MajorizationReport {
    bool holds = true;
    double worst_margin = -std::numeric_limits<double>::infinity();  ///< max (m_1(t,x,y) - m_1(t,0,0))
    double worst_time = 0.0;
    Site worst_site;
    Site worst_target;
    std::size_t points_checked = 0;
};

/**
 * m_1(t, x, 0) <= m_1(t, 0, 0) over `origin_table` (y0 = 0), and
 * m_1(t, x, y) <= m_1(t, 0, 0) over each of `others` (same time grid, y0 = y).
 * Ties at x = 0 for y0 = 0 are excluded from the margin.
 */
inline MajorizationReport majorization_check(const MomentTable& origin_table,
                                             const std::vector<MomentTable>& others = {}) {
    require(norm_inf(origin_table.y0) == 0, "majorization needs the y0 = 0 table");
    MajorizationReport r;
    const Site zero = origin(origin_table.box.dim());
    const std::size_t centre = origin_table.slot(zero);
    auto scan = [&](const MomentTable& t) {
        require(t.times == origin_table.times, "tables must share the time grid");
        for (std::size_t j = 0; j < t.times.size(); ++j) {
            const double ref = origin_table.values[j][0][centre];
            for (std::size_t k = 0; k < t.sites.size(); ++k) {
                const Site x = t.box.site(t.sites[k]);
                if (&t == &origin_table && k == centre) continue;
                const double margin = t.values[j][0][k] - ref;
                ++r.points_checked;
                if (margin > r.worst_margin) {
                    r.worst_margin = margin;
                    r.worst_time = t.times[j];
                    r.worst_site = x;
                    r.worst_target = t.y0;
                }
            }
        }
    };
    scan(origin_table);
    for (const auto& t : others) scan(t);
    r.holds = r.worst_margin <= 0.0;
    return r;
}

// ---------------------------------------------------------------------------
// Generating function

struct KppSolution {
    std::vector<double> times;              ///< includes t = 0
    std::vector<std::vector<double>> phi;   ///< phi[j][site], whole box
    std::vector<std::vector<double>> psi;   ///< 1 - phi, kept unrounded for small values
    LatticeBox box{1, 0};
};

/**
 * phi_z(t, x, y0) = E_x z^{n(t, y0)} from the generating-function equation,
 * marched as psi = 1 - phi:  psi' = H psi - beta psi^2,  psi(0) = (1 - z) delta_{y0}.
 * Outside the absorbing box psi = 0, i.e. phi = 1.
 */
inline KppSolution kpp_generating_function(const JumpKernel& kernel, const LatticeBox& box,
                                           const PerturbationField& field, double z,
                                           const Site& y0, const SolveOptions& o,
                                           double range_tolerance = 1e-9) {
    require(z >= 0.0 && z <= 1.0, "z must lie in [0, 1]");
    const auto checkpoints = detail::normalized_checkpoints(o);
    const SparseOperator h = build_generator(kernel, box, field);
    const auto beta = branching_rates(box, field);
    const std::size_t n = box.size();
    std::vector<double> psi(n, 0.0), k1(n), k2(n), k3(n), k4(n), tmp(n);
    psi[box.index_of(y0)] = 1.0 - z;
    auto rhs = [&](const std::vector<double>& u, std::vector<double>& out) {
        h.apply(u.data(), out.data());
        for (std::size_t i = 0; i < n; ++i) out[i] -= beta[i] * u[i] * u[i];
    };
    KppSolution s;
    s.box = box;
    auto record = [&](double t) {
        s.times.push_back(t);
        std::vector<double> phi(n);
        for (std::size_t i = 0; i < n; ++i) phi[i] = 1.0 - psi[i];
        s.phi.push_back(std::move(phi));
        s.psi.push_back(psi);
    };
    record(0.0);
    const double dt0 = o.dt > 0.0 ? o.dt : recommended_dt(field, 2, 1.0);
    double now = 0.0;
    for (double target : checkpoints) {
        const auto steps = static_cast<long>(std::ceil((target - now) / dt0 - 1e-9));
        const double dt = (target - now) / static_cast<double>(std::max<long>(steps, 1));
        for (long k = 0; k < steps; ++k) {
            rhs(psi, k1);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + 0.5 * dt * k1[i];
            rhs(tmp, k2);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + 0.5 * dt * k2[i];
            rhs(tmp, k3);
            for (std::size_t i = 0; i < n; ++i) tmp[i] = psi[i] + dt * k3[i];
            rhs(tmp, k4);
            for (std::size_t i = 0; i < n; ++i)
                psi[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        now = target;
        for (std::size_t i = 0; i < n; ++i) {
            const double phi = 1.0 - psi[i];
            if (phi < -range_tolerance || phi > 1.0 + range_tolerance)
                throw RangeViolation("phi = " + std::to_string(phi) + " at (" +
                                     to_string(box.site(i)) + "), t = " + std::to_string(now));
        }
        record(now);
    }
    return s;
}

struct KppMoments {
    std::vector<double> times;
    std::vector<std::vector<double>> m1;  ///< [j][site]
    std::vector<std::vector<double>> m2;
    double h = 1e-3;
};

/**
 * m_1 and m_2 from z-derivatives of phi at z = 1 with the one-sided stencil
 * {1, 1-h, 1-2h, 1-3h} (phi is not defined beyond z = 1):
 *   f'  ~ (11 f0 - 18 f1 + 9 f2 - 2 f3) / (6h),  f'' ~ (2 f0 - 5 f1 + 4 f2 - f3) / h^2.
 * Differencing psi = 1 - phi directly keeps the constant 1 out of the arithmetic.
 */
inline KppMoments kpp_moments(const JumpKernel& kernel, const LatticeBox& box,
                              const PerturbationField& field, const Site& y0,
                              const SolveOptions& o, double h = 1e-3) {
    require(h > 0.0 && 3.0 * h <= 1.0, "stencil step must lie in (0, 1/3]");
    std::vector<KppSolution> sol;
    for (int k = 1; k <= 3; ++k)
        sol.push_back(kpp_generating_function(kernel, box, field, 1.0 - k * h, y0, o));
    KppMoments out;
    out.h = h;
    out.times = sol[0].times;
    const std::size_t n = box.size();
    for (std::size_t j = 0; j < out.times.size(); ++j) {
        std::vector<double> a(n), b(n);
        for (std::size_t i = 0; i < n; ++i) {
            // f(z) = phi; f0 = 1 exactly, so f0 - f_k = psi_k.
            const double p1 = sol[0].psi[j][i];
            const double p2 = sol[1].psi[j][i];
            const double p3 = sol[2].psi[j][i];
            a[i] = (18.0 * p1 - 9.0 * p2 + 2.0 * p3) / (6.0 * h);
            b[i] = (5.0 * p1 - 4.0 * p2 + p3) / (h * h);
        }
        out.m1.push_back(std::move(a));
        out.m2.push_back(std::move(b));
    }
    return out;
}

/// P(n(t, y0) = 0) for one particle per box site: prod_x phi_0(t, x, y0).
inline std::vector<double> empty_site_probability(const KppSolution& zero_solution) {
    std::vector<double> out;
    for (const auto& phi : zero_solution.phi) {
        double logp = 0.0;
        for (double v : phi) logp += std::log(std::max(v, 0.0));
        out.push_back(std::exp(logp));
    }
    return out;
}

}  // namespace brw
