#pragma once

// Reference values computed by routes that share no code with the library.

#include <cmath>
#include <numbers>
#include <vector>

namespace oracle {

/// e^{-t} I_n(t): heat kernel of the rate-1 nearest-neighbour walk on Z, by the
/// power series of the modified Bessel function summed in log space.
inline double bessel_heat_1d(double t, int n) {
    n = std::abs(n);
    if (t == 0.0) return n == 0 ? 1.0 : 0.0;
    const double lh = std::log(0.5 * t);
    double sum = 0.0;
    for (int k = 0; k < 400; ++k) {
        const double term = std::exp((2 * k + n) * lh - std::lgamma(k + 1.0) - std::lgamma(k + n + 1.0) - t);
        sum += term;
        if (k > t && term < 1e-18 * sum) break;
    }
    return sum;
}

/// p(t, 0, x) for the rate-1 walk on Z^d with a(+-e_j) = 1/(2d): axes are independent rate-1/d walks.
inline double srw_heat(int d, double t, const std::vector<int>& x) {
    double p = 1.0;
    for (int c = 0; c < d; ++c) p *= bessel_heat_1d(t / d, x[c]);
    return p;
}

/// G_0(0,0) of the simple cubic walk, closed form in Gamma values.
inline double watson_g0_d3() {
    const double pi = std::numbers::pi;
    return std::sqrt(6.0) / (32.0 * pi * pi * pi) * std::tgamma(1.0 / 24) * std::tgamma(5.0 / 24) *
           std::tgamma(7.0 / 24) * std::tgamma(11.0 / 24);
}

/// I(lambda) for the rate-1 walk on Z: (1/2pi) int dk / (lambda + 1 - cos k).
inline double resolvent_1d(double lambda) { return 1.0 / std::sqrt(lambda * (lambda + 2.0)); }

/**
 * m(t) = p(t) + sigma int_0^t p(t - s) m(s) ds on a uniform grid by the
 * trapezoid rule (renewal form of m_1(t,0,0) for one source at the origin).
 * Returns m at every grid node.
 */
inline std::vector<double> volterra_first_moment(int d, double sigma, double t_end, int steps) {
    const double h = t_end / steps;
    std::vector<double> p(static_cast<std::size_t>(steps + 1)), m(p.size());
    const std::vector<int> zero(static_cast<std::size_t>(d), 0);
    for (int k = 0; k <= steps; ++k) p[k] = srw_heat(d, k * h, zero);
    m[0] = 1.0;
    for (int n = 1; n <= steps; ++n) {
        double acc = 0.5 * p[n] * m[0];
        for (int k = 1; k < n; ++k) acc += p[n - k] * m[k];
        // m[n] appears with weight h/2 * p[0] = h/2.
        m[n] = (p[n] + sigma * h * acc) / (1.0 - 0.5 * sigma * h * p[0]);
    }
    return m;
}

inline double poisson_pmf(double mean, int k) {
    return std::exp(k * std::log(mean) - mean - std::lgamma(k + 1.0));
}

}  // namespace oracle
