#pragma once

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <utility>
#include <vector>

namespace brw {

/// Gauss-Legendre nodes and weights on [a, b].
struct GaussRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

namespace detail {

template <unsigned N>
GaussRule gauss_unit() {
    using G = boost::math::quadrature::gauss<double, N>;
    GaussRule r;
    const auto& x = G::abscissa();
    const auto& w = G::weights();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] == 0.0) {
            r.nodes.push_back(0.0);
            r.weights.push_back(w[i]);
            continue;
        }
        r.nodes.push_back(-x[i]);
        r.weights.push_back(w[i]);
        r.nodes.push_back(x[i]);
        r.weights.push_back(w[i]);
    }
    return r;
}

}  // namespace detail

/// Supported orders: 8, 16, 20, 30, 60.
inline GaussRule gauss_legendre(unsigned order, double a, double b) {
    GaussRule r;
    switch (order) {
        case 8: r = detail::gauss_unit<8>(); break;
        case 16: r = detail::gauss_unit<16>(); break;
        case 20: r = detail::gauss_unit<20>(); break;
        case 30: r = detail::gauss_unit<30>(); break;
        case 60: r = detail::gauss_unit<60>(); break;
        default: r = detail::gauss_unit<30>(); break;
    }
    const double h = 0.5 * (b - a), m = 0.5 * (a + b);
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        r.nodes[i] = m + h * r.nodes[i];
        r.weights[i] *= h;
    }
    return r;
}

template <class F>
double integrate_gauss(F&& f, double a, double b, unsigned order = 30) {
    const auto r = gauss_legendre(order, a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) s += r.weights[i] * f(r.nodes[i]);
    return s;
}

}  // namespace brw
