#pragma once

// Heat kernel, Green function and resolvent integral of the lattice random
// walk, evaluated by midpoint quadrature on the torus [-pi, pi]^d.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "brw/common.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/quadrature.hpp"

namespace brw {

enum class SingularityMode {
    plain,     ///< bare midpoint rule
    subtract,  ///< subtract 1/(lambda + k'Sigma k/2) and add its exact cube integral
};

inline const char* to_string(SingularityMode m) {
    return m == SingularityMode::plain ? "plain" : "subtract";
}

/// Product midpoint grid on [-pi, pi]^d; nodes are offset by pi/N so k = 0 is never sampled.
struct TorusGrid {
    int dim = 3;
    int points_per_axis = 64;
    SingularityMode mode = SingularityMode::subtract;

    TorusGrid() = default;
    TorusGrid(int d, int n, SingularityMode m = SingularityMode::subtract)
        : dim(d), points_per_axis(n), mode(m) {
        require(d >= 1, "torus dimension must be positive");
        require(n >= 8 && n % 2 == 0, "points per axis must be even and >= 8");
    }

    double node(int j) const {
        const double h = 2.0 * std::numbers::pi / points_per_axis;
        return -std::numbers::pi + (j + 0.5) * h;
    }

    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < dim; ++i) s *= static_cast<std::size_t>(points_per_axis);
        return s;
    }

    /// Half-resolution grid used for error estimates (may drop below 8 points).
    TorusGrid coarse() const {
        TorusGrid g;
        g.dim = dim;
        g.points_per_axis = std::max(2, points_per_axis / 2);
        g.mode = mode;
        return g;
    }

    double weight() const { return 1.0 / static_cast<double>(size()); }
};

/// Value with a grid-refinement error estimate (difference between N and N/2).
struct Estimate {
    double value = 0.0;
    double est_error = 0.0;
    bool resolution_warning = false;
};

namespace detail {

// \int_0^1 s^n / (lambda + c s^2) ds, c > 0.
inline double radial_integral(int n, double lambda, double c) {
    if (lambda == 0.0) {
        if (n < 2) return std::numeric_limits<double>::infinity();
        return 1.0 / (c * (n - 1));
    }
    if (lambda <= c) {
        double jm2 = std::atan(std::sqrt(c / lambda)) / std::sqrt(lambda * c);  // J_0
        double jm1 = std::log1p(c / lambda) / (2.0 * c);                        // J_1
        if (n == 0) return jm2;
        if (n == 1) return jm1;
        double j = 0.0;
        for (int m = 2; m <= n; ++m) {
            j = 1.0 / (c * (m - 1)) - (lambda / c) * jm2;
            jm2 = jm1;
            jm1 = j;
        }
        return j;
    }
    return integrate_gauss([&](double s) { return std::pow(s, n) / (lambda + c * s * s); },
                           0.0, 1.0, 30);
}

}  // namespace detail

/**
 * Cube integrals of the subtracted singular part g(k) = 1/(lambda + k'Sigma k / 2).
 *
 * Rays from the origin to the cube faces parametrize the cube: k = s w with
 * |w|_inf = pi, dk = pi s^{d-1} ds dA(w). The radial integral has a closed
 * form and the face integrals are smooth, so a tensor Gauss rule is accurate
 * to near machine precision.
 *
 * g is not periodic, so the midpoint rule applied to f - g picks up the
 * Euler-Maclaurin boundary term (h^2/24) sum_a \int [d_a g]_{k_a=-pi}^{pi};
 * boundary_jump() supplies that face integral.
 */
class QuadraticCubeIntegral {
public:
    explicit QuadraticCubeIntegral(const JumpKernel& kernel) : dim_(kernel.dim()) {
        const int d = dim_;
        const unsigned order = d <= 3 ? 30 : (d == 4 ? 20 : (d == 5 ? 16 : 8));
        const auto rule = gauss_legendre(order, -std::numbers::pi, std::numbers::pi);
        const std::size_t m = rule.nodes.size();
        const auto& cov = kernel.covariance();
        std::vector<double> w(static_cast<std::size_t>(d));
        for (int axis = 0; axis < d; ++axis) {
            for (int sign : {-1, 1}) {
                std::vector<std::size_t> idx(static_cast<std::size_t>(std::max(d - 1, 0)), 0);
                while (true) {
                    double weight = 1.0;
                    int f = 0;
                    for (int c = 0; c < d; ++c) {
                        if (c == axis) {
                            w[c] = sign * std::numbers::pi;
                        } else {
                            w[c] = rule.nodes[idx[f]];
                            weight *= rule.weights[idx[f]];
                            ++f;
                        }
                    }
                    double grad = 0.0;
                    for (int c = 0; c < d; ++c) grad += cov[axis * d + c] * w[c];
                    coeff_.push_back(0.5 * kernel.quadratic_form(w.data()));
                    weight_.push_back(weight);
                    signed_grad_.push_back(sign * grad);
                    int p = 0;
                    for (; p < d - 1; ++p) {
                        if (++idx[p] < m) break;
                        idx[p] = 0;
                    }
                    if (p == d - 1) break;
                }
            }
        }
        norm_ = std::pow(2.0 * std::numbers::pi, -d);
    }

    /// (2 pi)^{-d} \int_cube g; +inf for lambda = 0 and d <= 2.
    double normalized(double lambda) const {
        CompensatedSum s;
        for (std::size_t i = 0; i < coeff_.size(); ++i)
            s.add(std::numbers::pi * weight_[i] *
                  detail::radial_integral(dim_ - 1, lambda, coeff_[i]));
        return s.value() * norm_;
    }

    /// (2 pi)^{-d} sum_a \int_{face} (d_a g(k_a = pi) - d_a g(k_a = -pi)) dk_perp.
    double boundary_jump(double lambda) const {
        CompensatedSum s;
        for (std::size_t i = 0; i < coeff_.size(); ++i) {
            const double den = lambda + coeff_[i];
            s.add(-signed_grad_[i] * weight_[i] / (den * den));
        }
        return s.value() * norm_;
    }

private:
    int dim_;
    double norm_ = 1.0;
    std::vector<double> coeff_;
    std::vector<double> weight_;
    std::vector<double> signed_grad_;
};

/**
 * Quadrature engine bound to a kernel and a grid. Caches the symbol and the
 * quadratic form at every node when the grid is small enough.
 */
class TorusQuadrature {
public:
    static constexpr std::size_t kCacheLimit = std::size_t{1} << 22;

    TorusQuadrature(const JumpKernel& kernel, TorusGrid grid)
        : kernel_(kernel), grid_(grid), cube_(kernel) {
        require(grid.dim == kernel.dim(), "grid and kernel dimensions differ");
        if (grid_.size() <= kCacheLimit) {
            symbol_.reserve(grid_.size());
            quad_.reserve(grid_.size());
            for_each_node([&](const double* k, std::size_t) {
                symbol_.push_back(symbol_at(k));
                quad_.push_back(0.5 * kernel_.quadratic_form(k));
            });
        }
    }

    const TorusGrid& grid() const noexcept { return grid_; }
    const JumpKernel& kernel() const noexcept { return kernel_; }

    /// Raw (unclamped) quadrature of p(t, 0, delta).
    double heat_kernel(double t, const Site& delta) const {
        return sum_nodes([&](double ah, double, double phase) {
            return std::exp(-t * (1.0 - ah)) * phase;
        }, delta);
    }

    /**
     * Resolvent G_lambda(0, delta). With subtraction the midpoint rule is applied
     * to f(k)cos(k.delta) - g(k), which is bounded at k = 0.
     */
    double resolvent(double lambda, const Site& delta) const {
        if (grid_.mode == SingularityMode::plain) {
            return sum_nodes([&](double ah, double, double phase) {
                return phase / (lambda + 1.0 - ah);
            }, delta);
        }
        const double bulk = sum_nodes([&](double ah, double q, double phase) {
            return phase / (lambda + 1.0 - ah) - 1.0 / (lambda + q);
        }, delta);
        const double h = 2.0 * std::numbers::pi / grid_.points_per_axis;
        return bulk - h * h / 24.0 * cube_.boundary_jump(lambda) + cube_.normalized(lambda);
    }

    /**
     * p(t, 0, y) for every y in [-N/2, N/2)^d via axis-wise discrete Fourier
     * transforms; index with table_index(). Values are the alternating image
     * sum and are only meaningful for |y| well inside the period.
     */
    std::vector<double> heat_kernel_table(double t) const {
        const int n = grid_.points_per_axis;
        const int d = grid_.dim;
        std::vector<std::complex<double>> a(grid_.size());
        for_each_node_cached([&](double ah, double, std::size_t i) {
            a[i] = std::exp(-t * (1.0 - ah));
        });
        // twiddle[j][y] = exp(-i k_j (y - n/2)) / n
        std::vector<std::complex<double>> tw(static_cast<std::size_t>(n) * n);
        for (int j = 0; j < n; ++j)
            for (int y = 0; y < n; ++y)
                tw[j * n + y] = std::polar(1.0 / n, -grid_.node(j) * (y - n / 2));
        std::vector<std::complex<double>> line(n), out(n);
        std::size_t stride = 1;
        for (int axis = d - 1; axis >= 0; --axis) {
            const std::size_t block = stride * n;
            for (std::size_t base = 0; base < a.size(); base += block) {
                for (std::size_t off = 0; off < stride; ++off) {
                    for (int j = 0; j < n; ++j) line[j] = a[base + off + j * stride];
                    for (int y = 0; y < n; ++y) {
                        std::complex<double> s = 0.0;
                        for (int j = 0; j < n; ++j) s += line[j] * tw[j * n + y];
                        out[y] = s;
                    }
                    for (int y = 0; y < n; ++y) a[base + off + y * stride] = out[y];
                }
            }
            stride *= n;
        }
        std::vector<double> res(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) res[i] = a[i].real();
        return res;
    }

    /// Row-major index into heat_kernel_table for y in [-N/2, N/2)^d.
    std::size_t table_index(const Site& y) const {
        const int n = grid_.points_per_axis;
        std::size_t idx = 0;
        for (int c = 0; c < grid_.dim; ++c) {
            require(y[c] >= -n / 2 && y[c] < n / 2, "site outside heat-kernel table");
            idx = idx * n + static_cast<std::size_t>(y[c] + n / 2);
        }
        return idx;
    }

private:
    double symbol_at(const double* k) const {
        double s = 0.0;
        for (const auto& j : kernel_.support()) {
            double dot = 0.0;
            for (int c = 0; c < kernel_.dim(); ++c) dot += k[c] * j.z[c];
            s += j.rate * std::cos(dot);
        }
        return s;
    }

    template <class F>
    void for_each_node(F&& f) const {
        const int d = grid_.dim, n = grid_.points_per_axis;
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        std::vector<double> k(static_cast<std::size_t>(d));
        for (int c = 0; c < d; ++c) k[c] = grid_.node(0);
        const std::size_t total = grid_.size();
        for (std::size_t i = 0; i < total; ++i) {
            f(k.data(), i);
            for (int c = d - 1; c >= 0; --c) {
                if (++idx[c] < n) {
                    k[c] = grid_.node(idx[c]);
                    break;
                }
                idx[c] = 0;
                k[c] = grid_.node(0);
            }
        }
    }

    // f(symbol, quadratic form, flat index)
    template <class F>
    void for_each_node_cached(F&& f) const {
        if (!symbol_.empty()) {
            for (std::size_t i = 0; i < symbol_.size(); ++i) f(symbol_[i], quad_[i], i);
            return;
        }
        for_each_node([&](const double* k, std::size_t i) {
            f(symbol_at(k), 0.5 * kernel_.quadratic_form(k), i);
        });
    }

    // Midpoint average of term(symbol, quadratic form, cos(k.delta)).
    template <class Term>
    double sum_nodes(Term&& term, const Site& delta) const {
        const int d = grid_.dim, n = grid_.points_per_axis;
        const bool zero = norm_inf(delta) == 0;
        std::vector<std::complex<double>> phase_axis;
        if (!zero) {
            phase_axis.resize(static_cast<std::size_t>(d) * n);
            for (int c = 0; c < d; ++c)
                for (int j = 0; j < n; ++j)
                    phase_axis[c * n + j] = std::polar(1.0, grid_.node(j) * delta[c]);
        }
        std::vector<int> idx(static_cast<std::size_t>(d), 0);
        CompensatedSum sum;
        for_each_node_cached([&](double ah, double q, std::size_t) {
            double phase = 1.0;
            if (!zero) {
                std::complex<double> e = 1.0;
                for (int c = 0; c < d; ++c) e *= phase_axis[c * n + idx[c]];
                phase = e.real();
                for (int c = d - 1; c >= 0; --c) {
                    if (++idx[c] < n) break;
                    idx[c] = 0;
                }
            }
            sum.add(term(ah, q, phase));
        });
        return sum.value() * grid_.weight();
    }

    JumpKernel kernel_;
    TorusGrid grid_;
    QuadraticCubeIntegral cube_;
    std::vector<double> symbol_;
    std::vector<double> quad_;
};

// ---------------------------------------------------------------------------
// Public operations

inline double symbol_eval(const JumpKernel& kernel, const std::vector<double>& k) {
    require(static_cast<int>(k.size()) == kernel.dim(), "wavevector dimension mismatch");
    return kernel.symbol(k);
}

/// p(t, x, y) by torus quadrature, clamped to [0, 1].
inline Estimate transition_probability(const JumpKernel& kernel, const TorusGrid& grid,
                                       double t, const Site& x, const Site& y,
                                       double tolerance = 1e-8) {
    require(t >= 0.0, "time must be non-negative");
    const Site delta = y - x;
    if (t == 0.0) return {norm_inf(delta) == 0 ? 1.0 : 0.0, 0.0, false};
    const double fine = TorusQuadrature(kernel, grid).heat_kernel(t, delta);
    const double coarse = TorusQuadrature(kernel, grid.coarse()).heat_kernel(t, delta);
    Estimate e;
    e.value = std::clamp(fine, 0.0, 1.0);
    e.est_error = std::abs(fine - coarse);
    e.resolution_warning = e.est_error > tolerance;
    return e;
}

/// I(lambda) = G_lambda(0, 0); value is +inf for lambda = 0 on a recurrent walk.
inline Estimate resolvent_integral(const JumpKernel& kernel, const TorusGrid& grid,
                                   double lambda, double tolerance = 1e-3) {
    require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
    if (lambda == 0.0 && !kernel.transient_by_dimension())
        return {std::numeric_limits<double>::infinity(), 0.0, false};
    const Site zero = origin(kernel.dim());
    const double fine = TorusQuadrature(kernel, grid).resolvent(lambda, zero);
    const double coarse = TorusQuadrature(kernel, grid.coarse()).resolvent(lambda, zero);
    return {fine, std::abs(fine - coarse), std::abs(fine - coarse) > tolerance};
}

inline Estimate green_function(const JumpKernel& kernel, const TorusGrid& grid, double lambda,
                               const Site& x, const Site& y, double tolerance = 1e-3) {
    require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be finite and >= 0");
    if (lambda == 0.0 && !kernel.transient_by_dimension())
        throw DivergentGreen("G_0 is infinite for the recurrent walk " + kernel.name());
    const Site delta = y - x;
    const double fine = TorusQuadrature(kernel, grid).resolvent(lambda, delta);
    const double coarse = TorusQuadrature(kernel, grid.coarse()).resolvent(lambda, delta);
    return {std::max(fine, 0.0), std::abs(fine - coarse), std::abs(fine - coarse) > tolerance};
}

// ---------------------------------------------------------------------------
// Transience

enum class Recurrence { transient, recurrent };

inline const char* to_string(Recurrence r) {
    return r == Recurrence::transient ? "transient" : "recurrent";
}

struct TransienceReport {
    Recurrence verdict = Recurrence::transient;
    Recurrence numeric_trend = Recurrence::transient;
    std::vector<int> grid_sizes;
    std::vector<double> estimates;  ///< plain-midpoint I(0) per grid
    double increment_ratio = 0.0;   ///< last increment / previous increment
};

inline std::vector<int> default_refinement(int dim) {
    if (dim <= 3) return {16, 32, 64};
    if (dim == 4) return {8, 16, 32};
    return {8, 12, 16};
}

/**
 * Dimension rule plus a refinement trend on plain-midpoint I(0). Increments
 * shrink geometrically for a transient walk and stay flat or grow for a
 * recurrent one; disagreement means the quadrature is misconfigured.
 */
inline TransienceReport transience_check(const JumpKernel& kernel, std::vector<int> grid_sizes = {}) {
    if (grid_sizes.empty()) grid_sizes = default_refinement(kernel.dim());
    require(grid_sizes.size() >= 3, "transience check needs at least three grids");
    require(std::is_sorted(grid_sizes.begin(), grid_sizes.end()), "grid sizes must increase");
    TransienceReport r;
    r.grid_sizes = grid_sizes;
    const Site zero = origin(kernel.dim());
    for (int n : grid_sizes)
        r.estimates.push_back(
            TorusQuadrature(kernel, TorusGrid(kernel.dim(), n, SingularityMode::plain))
                .resolvent(0.0, zero));
    const std::size_t m = r.estimates.size();
    const double prev = r.estimates[m - 2] - r.estimates[m - 3];
    const double last = r.estimates[m - 1] - r.estimates[m - 2];
    // Normalize by the refinement factor so uneven sequences compare fairly.
    const double f1 = std::log(static_cast<double>(grid_sizes[m - 2]) / grid_sizes[m - 3]);
    const double f2 = std::log(static_cast<double>(grid_sizes[m - 1]) / grid_sizes[m - 2]);
    r.increment_ratio = (last / f2) / (prev / f1);
    r.numeric_trend = r.increment_ratio < 0.75 ? Recurrence::transient : Recurrence::recurrent;
    r.verdict = kernel.transient_by_dimension() ? Recurrence::transient : Recurrence::recurrent;
    if (r.verdict != r.numeric_trend)
        throw InconsistentDiagnostic("dimension rule says " + std::string(to_string(r.verdict)) +
                                     " but refinement trend says " +
                                     to_string(r.numeric_trend));
    return r;
}

// ---------------------------------------------------------------------------
// Time-domain route for axis-separable kernels

namespace detail {

// One-dimensional heat kernel of an axis marginal with total rate w:
// (1/2pi) \int exp(-t (w - \hat a_axis(k))) cos(k n) dk.
inline double axis_heat_kernel(const std::vector<std::pair<int, double>>& jumps, double t, int n) {
    double w = 0.0, var = 0.0;
    int reach = 1;
    for (auto [z, r] : jumps) {
        w += r;
        var += r * z * z;
        reach = std::max(reach, std::abs(z));
    }
    const double spread = std::abs(n) + 40.0 * std::sqrt(t * var) + 32.0 * reach;
    int m = 64;
    while (m < 2.0 * spread) m *= 2;
    CompensatedSum s;
    const double h = 2.0 * std::numbers::pi / m;
    for (int j = 0; j < m; ++j) {
        const double k = -std::numbers::pi + (j + 0.5) * h;
        double ah = 0.0;
        for (auto [z, r] : jumps) ah += r * std::cos(k * z);
        s.add(std::exp(-t * (w - ah)) * std::cos(k * n));
    }
    return s.value() / m;
}

}  // namespace detail

/**
 * G_lambda(0, x) = \int_0^inf e^{-lambda t} prod_axis p_axis(t, x_axis) dt for
 * kernels whose jumps are all axis aligned. Gauss-Legendre on geometric time
 * panels up to T, Gaussian local-limit tail beyond T.
 */
inline double green_time_domain(const JumpKernel& kernel, double lambda, const Site& x) {
    require(kernel.axis_separable(), "time-domain Green route needs an axis-separable kernel");
    require(lambda >= 0.0, "lambda must be >= 0");
    const int d = kernel.dim();
    if (lambda == 0.0 && d <= 2) throw DivergentGreen("G_0 diverges for d <= 2");
    std::vector<std::vector<std::pair<int, double>>> axes;
    std::vector<double> var(static_cast<std::size_t>(d), 0.0);
    for (int a = 0; a < d; ++a) {
        axes.push_back(kernel.axis_jumps(a));
        for (auto [z, r] : axes.back()) var[a] += r * z * z;
    }
    const double r2 = std::inner_product(x.begin(), x.end(), x.begin(), 0.0);
    double horizon = std::max(4000.0, 200.0 * r2);
    if (lambda > 0.0) horizon = std::min(horizon, std::max(50.0, 60.0 / lambda));

    auto integrand = [&](double t) {
        double p = std::exp(-lambda * t);
        for (int a = 0; a < d; ++a) p *= detail::axis_heat_kernel(axes[a], t, x[a]);
        return p;
    };
    CompensatedSum total;
    total.add(integrate_gauss(integrand, 0.0, 0.5, 30));
    for (double lo = 0.5; lo < horizon; lo *= 2.0)
        total.add(integrate_gauss(integrand, lo, std::min(2.0 * lo, horizon), 30));

    // Tail: t = T / u^2 turns the local-limit integrand into a smooth one on (0, 1].
    double det = 1.0, quad = 0.0;
    for (int a = 0; a < d; ++a) {
        det *= var[a];
        quad += static_cast<double>(x[a]) * x[a] / var[a];
    }
    const double T = horizon;
    const double pref = std::pow(2.0 * std::numbers::pi * T, -0.5 * d) / std::sqrt(det) * 2.0 * T;
    total.add(pref * integrate_gauss([&](double u) {
        if (u == 0.0) return 0.0;
        return std::pow(u, d - 3) * std::exp(-lambda * T / (u * u)) *
               std::exp(-quad * u * u / (2.0 * T));
    }, 0.0, 1.0, 30));
    return total.value();
}

// ---------------------------------------------------------------------------
// Green asymptotics

struct GreenAsymptoteFit {
    double slope = 0.0;     ///< fitted exponent, expected -(d-2)
    double constant = 0.0;  ///< C_d in G ~ C_d / |x|^{d-2}, from the intercept
    std::vector<double> radii;
    double residual_norm = 0.0;  ///< RMS of log residuals
    std::vector<std::pair<double, double>> samples;  ///< (|x|, G_0(0,x))
    bool time_domain = false;
};

/// Representative lattice points near radius r: axis, face diagonal, body diagonal.
inline std::vector<Site> points_near_radius(int dim, double r) {
    std::vector<Site> out;
    auto add = [&](Site s) {
        if (norm_inf(s) == 0) return;
        if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(std::move(s));
    };
    Site axis = origin(dim);
    axis[0] = static_cast<int>(std::lround(r));
    add(axis);
    if (dim >= 2) {
        Site face = origin(dim);
        face[0] = face[1] = static_cast<int>(std::lround(r / std::sqrt(2.0)));
        add(face);
    }
    if (dim >= 3) {
        Site body(static_cast<std::size_t>(dim), static_cast<int>(std::lround(r / std::sqrt(dim))));
        add(body);
    }
    return out;
}

inline GreenAsymptoteFit green_asymptote_fit(const JumpKernel& kernel, const TorusGrid& grid,
                                             std::vector<double> radii,
                                             double residual_tolerance = 0.25) {
    require(kernel.dim() >= 3, "Green asymptotics need d >= 3");
    std::sort(radii.begin(), radii.end());
    if (radii.size() < 4 || std::adjacent_find(radii.begin(), radii.end()) != radii.end() ||
        radii.front() <= 0.0 || radii.back() / radii.front() < 4.0)
        throw FitUnstable("need >= 4 strictly increasing radii with max/min >= 4");
    GreenAsymptoteFit fit;
    fit.radii = radii;
    fit.time_domain = kernel.axis_separable();
    std::optional<TorusQuadrature> quad;
    if (!fit.time_domain) quad.emplace(kernel, grid);
    for (double r : radii) {
        for (const Site& x : points_near_radius(kernel.dim(), r)) {
            const double g = fit.time_domain ? green_time_domain(kernel, 0.0, x)
                                             : quad->resolvent(0.0, x);
            if (!(g > 0.0)) throw FitUnstable("non-positive Green value at (" + to_string(x) + ")");
            fit.samples.emplace_back(norm2(x), g);
        }
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(fit.samples.size());
    for (auto [r, g] : fit.samples) {
        const double lx = std::log(r), ly = std::log(g);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - fit.slope * sx) / n;
    fit.constant = std::exp(intercept);
    double rss = 0.0;
    for (auto [r, g] : fit.samples) {
        const double e = std::log(g) - (intercept + fit.slope * std::log(r));
        rss += e * e;
    }
    fit.residual_norm = std::sqrt(rss / n);
    if (fit.residual_norm > residual_tolerance)
        throw FitUnstable("residual " + std::to_string(fit.residual_norm) + " exceeds tolerance");
    return fit;
}

}  // namespace brw
