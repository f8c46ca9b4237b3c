#pragma once

// Criticality threshold, steady first-moment constants, the growth eigenvalue
// root 1/sigma = I(lambda), and the principal eigenvalue on a finite cube.

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "brw/common.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/lattice_box.hpp"
#include "brw/lattice_kernels.hpp"
#include "brw/perturbation.hpp"

namespace brw {

/// Grid used when the caller does not pick one: resolves I(lambda) to about 1e-5.
inline TorusGrid default_grid(int dim) {
    switch (dim) {
        case 1: return TorusGrid(1, 1024);
        case 2: return TorusGrid(2, 256);
        case 3: return TorusGrid(3, 64);
        case 4: return TorusGrid(4, 24);
        case 5: return TorusGrid(5, 16);
        default: return TorusGrid(dim, 8);
    }
}

enum class Regime { subcritical, critical, supercritical };

inline const char* to_string(Regime r) {
    switch (r) {
        case Regime::subcritical: return "subcritical";
        case Regime::critical: return "critical";
        default: return "supercritical";
    }
}

/// Relative width of the band around sigma* treated as the boundary regime.
inline constexpr double kBoundaryTolerance = 1e-9;

struct Threshold {
    double sigma_star = 0.0;  ///< 1/G_0(0,0); 0 for recurrent walks
    double green0 = std::numeric_limits<double>::infinity();
    double est_error = 0.0;   ///< grid-refinement error of G_0(0,0)
    bool recurrent = false;
};

/// Non-throwing form of critical_threshold: recurrent walks report sigma* = 0.
inline Threshold threshold_info(const JumpKernel& kernel, const TorusGrid& grid) {
    Threshold t;
    if (!kernel.transient_by_dimension()) {
        t.recurrent = true;
        return t;
    }
    const Estimate g = resolvent_integral(kernel, grid, 0.0);
    t.green0 = g.value;
    t.est_error = g.est_error;
    t.sigma_star = 1.0 / g.value;
    return t;
}

/// sigma* = 1/G_0(0,0); throws DivergentGreen for recurrent walks.
inline double critical_threshold(const JumpKernel& kernel, const TorusGrid& grid) {
    if (!kernel.transient_by_dimension())
        throw DivergentGreen("recurrent walk " + kernel.name() + ": threshold is 0");
    return threshold_info(kernel, grid).sigma_star;
}

inline Regime classify(double sigma_total, const Threshold& t) {
    if (t.recurrent) return sigma_total > 0.0 ? Regime::supercritical : Regime::critical;
    const double gap = sigma_total - t.sigma_star;
    if (std::abs(gap) <= kBoundaryTolerance * t.sigma_star) return Regime::critical;
    return gap < 0.0 ? Regime::subcritical : Regime::supercritical;
}

namespace detail {

inline double steady_constant(double sigma_total, const Threshold& t) {
    if (sigma_total == 0.0) return 1.0;
    if (t.recurrent)
        throw SupercriticalInput("any sigma > 0 is supercritical for a recurrent walk");
    if (classify(sigma_total, t) != Regime::subcritical)
        throw SupercriticalInput("sigma_total = " + std::to_string(sigma_total) +
                                 " is not below sigma* = " + std::to_string(t.sigma_star));
    return 1.0 / (1.0 - sigma_total * t.green0);
}

}  // namespace detail

/**
 * A = 1/(1 - sigma G_0(0,0)) for one source; for several sources the constant
 * C = 1/(1 - sigma_total G_0(0,0)), i.e. all strength placed at the origin.
 */
inline double steady_mean_constant(const JumpKernel& kernel, const TorusGrid& grid,
                                   const PerturbationField& field) {
    return detail::steady_constant(field.sigma_total(), threshold_info(kernel, grid));
}

/// B = 2 (mu + sigma_total) G_0(0,0).
inline double bound_constant_B(const JumpKernel& kernel, const TorusGrid& grid,
                               const PerturbationField& field) {
    if (!kernel.transient_by_dimension())
        throw DivergentGreen("B needs G_0(0,0) < inf; " + kernel.name() + " is recurrent");
    const Threshold t = threshold_info(kernel, grid);
    return 2.0 * (field.mu() + field.sigma_total()) * t.green0;
}

struct GrowthRoot {
    double lambda = 0.0;
    double residual = 0.0;  ///< sigma I(lambda) - 1
    bool boundary = false;  ///< sigma within the boundary band of sigma*: lambda = 0
    int iterations = 0;
};

/**
 * Root of sigma I(lambda) = 1 by bisection. I(sigma) <= 1/sigma seeds the upper
 * bracket; it doubles until the residual changes sign (at most 64 times).
 */
inline GrowthRoot growth_eigenvalue(const JumpKernel& kernel, const TorusGrid& grid, double sigma,
                                    double residual_tolerance = 1e-10) {
    require(sigma > 0.0 && std::isfinite(sigma), "sigma must be positive");
    const Threshold th = threshold_info(kernel, grid);
    GrowthRoot root;
    if (!th.recurrent) {
        const Regime r = classify(sigma, th);
        if (r == Regime::critical) {
            root.boundary = true;
            root.residual = sigma * th.green0 - 1.0;
            return root;
        }
        if (r == Regime::subcritical)
            throw NoRoot("sigma = " + std::to_string(sigma) + " <= sigma* = " +
                         std::to_string(th.sigma_star));
    }
    const TorusQuadrature quad(kernel, grid);
    const Site zero = origin(kernel.dim());
    auto residual = [&](double lambda) { return sigma * quad.resolvent(lambda, zero) - 1.0; };
    double lo = 0.0, hi = sigma;
    double r_hi = residual(hi);
    for (int k = 0; r_hi > 0.0; ++k) {
        if (k == 64) throw NoRoot("bracket expansion failed");
        lo = hi;
        hi *= 2.0;
        r_hi = residual(hi);
    }
    if (std::abs(r_hi) <= residual_tolerance) return {hi, r_hi, false, 0};
    for (int it = 1; it <= 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double r = residual(mid);
        root = {mid, r, false, it};
        if (std::abs(r) <= residual_tolerance) return root;
        if (r > 0.0)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * hi) break;
    }
    throw NoConvergence("bisection stalled with residual " + std::to_string(root.residual));
}

struct SpectralReport {
    double sigma_total = 0.0;
    double sigma_star = 0.0;
    double green0 = 0.0;
    double green0_error = 0.0;
    bool recurrent = false;
    Regime regime = Regime::subcritical;
    std::optional<GrowthRoot> growth;                 ///< supercritical only
    double steady_constant = std::numeric_limits<double>::infinity();  ///< A or C
    double bound_B = std::numeric_limits<double>::infinity();
};

inline SpectralReport spectral_report(const JumpKernel& kernel, const TorusGrid& grid,
                                      const PerturbationField& field) {
    const Threshold th = threshold_info(kernel, grid);
    SpectralReport r;
    r.sigma_total = field.sigma_total();
    r.sigma_star = th.sigma_star;
    r.green0 = th.green0;
    r.green0_error = th.est_error;
    r.recurrent = th.recurrent;
    r.regime = classify(r.sigma_total, th);
    if (!th.recurrent) r.bound_B = 2.0 * (field.mu() + r.sigma_total) * th.green0;
    if (r.regime == Regime::subcritical || r.sigma_total == 0.0)
        r.steady_constant = detail::steady_constant(r.sigma_total, th);
    if (r.regime == Regime::supercritical) r.growth = growth_eigenvalue(kernel, grid, r.sigma_total);
    if (r.regime == Regime::critical && !th.recurrent) r.growth = GrowthRoot{0.0, 0.0, true, 0};
    return r;
}

// ---------------------------------------------------------------------------
// Principal eigenvalue on a cube

struct BoxEigen {
    double lambda0 = 0.0;
    double trial_rayleigh = 0.0;  ///< Rayleigh quotient of the cosine trial function
    std::vector<double> eigenvector;  ///< unit l2 norm, box indexing
    LatticeBox box;
    int iterations = 0;
    double residual = 0.0;  ///< |H psi - lambda0 psi|_2
    bool positive = false;
};

/**
 * Principal eigenvalue of L_a + delta0 on Q_L(a) = {|x - a|_inf <= L - 1}, zero
 * outside. Power iteration on (2 - delta0) I + H, whose spectrum lies in [0, 2],
 * started from psi_0(x) = prod_j cos(pi (x_j - a_j) / (2L)).
 */
inline BoxEigen box_principal_eigenvalue(const JumpKernel& kernel, int L, double delta0,
                                         Site center = {}, int max_iterations = 100000) {
    require(L >= 2, "cube half-width L must be >= 2");
    require(delta0 > 0.0 && std::isfinite(delta0), "delta0 must be positive");
    const int d = kernel.dim();
    if (center.empty()) center = origin(d);
    BoxEigen out{0.0, 0.0, {}, LatticeBox(d, L - 1, Boundary::absorbing, center), 0, 0.0, false};
    const LatticeBox& box = out.box;
    SparseOperator h = build_generator(kernel, box, PerturbationField(d, 0.0));
    for (double& v : h.diag) v += delta0;

    const double r = std::numbers::pi / (2.0 * L);
    std::vector<double> psi(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) {
        const Site x = box.site(i);
        double v = 1.0;
        for (int c = 0; c < d; ++c) v *= std::cos(r * (x[c] - center[c]));
        psi[i] = v;
    }
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        CompensatedSum s;
        for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
        return s.value();
    };
    std::vector<double> hp = h.apply(psi);
    out.trial_rayleigh = dot(psi, hp) / dot(psi, psi);

    const double shift = 2.0 - delta0;
    double norm = std::sqrt(dot(psi, psi));
    for (double& v : psi) v /= norm;
    hp = h.apply(psi);
    double rq = dot(psi, hp);
    bool converged = false;
    for (int it = 1; it <= max_iterations; ++it) {
        for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = shift * psi[i] + hp[i];
        norm = std::sqrt(dot(psi, psi));
        for (double& v : psi) v /= norm;
        hp = h.apply(psi);
        const double next = dot(psi, hp);
        out.iterations = it;
        if (std::abs(next - rq) < 1e-12) {
            rq = next;
            converged = true;
            break;
        }
        rq = next;
    }
    double res = 0.0;
    for (std::size_t i = 0; i < psi.size(); ++i) res += (hp[i] - rq * psi[i]) * (hp[i] - rq * psi[i]);
    out.residual = std::sqrt(res);
    if (!converged)
        throw NoConvergence("power iteration did not settle in " + std::to_string(max_iterations) +
                            " iterations (residual " + std::to_string(out.residual) + ")");
    out.lambda0 = rq;
    out.eigenvector = std::move(psi);
    out.positive = std::all_of(out.eigenvector.begin(), out.eigenvector.end(),
                               [](double v) { return v > 0.0; });
    return out;
}

}  // namespace brw
