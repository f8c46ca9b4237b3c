#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "brw/common.hpp"
#include "brw/jump_kernel.hpp"
#include "brw/perturbation.hpp"

namespace brw {

enum class Boundary { absorbing, periodic };

inline const char* to_string(Boundary b) { return b == Boundary::absorbing ? "absorbing" : "periodic"; }

/// Cube {x : |x - center|_inf <= R} with row-major site indexing (last axis fastest).
class LatticeBox {
public:
    LatticeBox(int dim, int half_width, Boundary mode = Boundary::absorbing, Site center = {})
        : dim_(dim), half_width_(half_width), mode_(mode), center_(std::move(center)) {
        require(dim >= 1, "box dimension must be positive");
        require(half_width >= 0, "box half-width must be >= 0");
        if (center_.empty()) center_ = origin(dim);
        require(static_cast<int>(center_.size()) == dim, "box center has wrong dimension");
        side_ = 2 * half_width + 1;
        size_ = 1;
        for (int c = 0; c < dim; ++c) size_ *= static_cast<std::size_t>(side_);
    }

    int dim() const noexcept { return dim_; }
    int half_width() const noexcept { return half_width_; }
    int side() const noexcept { return side_; }
    Boundary mode() const noexcept { return mode_; }
    const Site& center() const noexcept { return center_; }
    std::size_t size() const noexcept { return size_; }

    bool contains(const Site& x) const {
        for (int c = 0; c < dim_; ++c)
            if (std::abs(x[c] - center_[c]) > half_width_) return false;
        return true;
    }

    /// Index of x; periodic boxes wrap, absorbing boxes return nullopt outside.
    std::optional<std::size_t> index(const Site& x) const {
        std::size_t idx = 0;
        for (int c = 0; c < dim_; ++c) {
            int u = x[c] - center_[c] + half_width_;
            if (u < 0 || u >= side_) {
                if (mode_ == Boundary::absorbing) return std::nullopt;
                u = ((u % side_) + side_) % side_;
            }
            idx = idx * side_ + static_cast<std::size_t>(u);
        }
        return idx;
    }

    std::size_t index_of(const Site& x) const {
        auto i = index(x);
        if (!i) throw PreconditionError("site (" + to_string(x) + ") outside box");
        return *i;
    }

    Site site(std::size_t i) const {
        Site x(static_cast<std::size_t>(dim_));
        for (int c = dim_ - 1; c >= 0; --c) {
            x[c] = static_cast<int>(i % side_) - half_width_ + center_[c];
            i /= side_;
        }
        return x;
    }

private:
    int dim_;
    int half_width_;
    Boundary mode_;
    Site center_;
    int side_ = 1;
    std::size_t size_ = 1;
};

/**
 * CSR operator with the diagonal stored separately. apply() accumulates the
 * off-diagonal entries in stored order and adds the diagonal last, so a row
 * whose diagonal is minus the ordered off-diagonal sum maps the all-ones
 * vector to exactly zero.
 */
struct SparseOperator {
    std::size_t n = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::size_t> col;
    std::vector<double> val;
    std::vector<double> diag;

    void apply(const double* x, double* y) const {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k] * x[col[k]];
            y[i] = s + diag[i] * x[i];
        }
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y(n);
        apply(x.data(), y.data());
        return y;
    }

    double row_sum(std::size_t i) const {
        double s = 0.0;
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
        return s + diag[i];
    }

    double entry(std::size_t i, std::size_t j) const {
        double v = i == j ? diag[i] : 0.0;
        for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
            if (col[k] == j) v += val[k];
        return v;
    }

    bool symmetric(double tol = 0.0) const {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
                if (std::abs(val[k] - entry(col[k], i)) > tol) return false;
        return true;
    }

    double max_abs_diag() const {
        double m = 0.0;
        for (double d : diag) m = std::max(m, std::abs(d));
        return m;
    }
};

/**
 * H = L_a + V on the box. Absorbing rows drop jumps that leave the box and keep
 * diagonal -1 + V; periodic rows wrap and set the diagonal to minus their
 * off-diagonal sum (plus V). Jumps that wrap onto their own site are no-ops.
 */
inline SparseOperator build_generator(const JumpKernel& kernel, const LatticeBox& box,
                                      const PerturbationField& field) {
    require(kernel.dim() == box.dim(), "kernel and box dimensions differ");
    require(field.dim() == box.dim(), "field and box dimensions differ");
    for (const auto& s : field.sources())
        if (!box.contains(s.site))
            throw SourceOutsideBox("source at (" + to_string(s.site) + ") lies outside the box");
    SparseOperator h;
    h.n = box.size();
    h.diag.assign(h.n, 0.0);
    std::vector<double> potential(h.n, 0.0);
    for (const auto& s : field.sources()) potential[box.index_of(s.site)] = s.strength;
    std::map<std::size_t, double> row;
    for (std::size_t i = 0; i < h.n; ++i) {
        const Site x = box.site(i);
        row.clear();
        for (const auto& j : kernel.support()) {
            auto target = box.index(x + j.z);
            if (!target || *target == i) continue;
            row[*target] += j.rate;
        }
        double off = 0.0;
        for (auto [c, v] : row) {
            h.col.push_back(c);
            h.val.push_back(v);
            off += v;
        }
        h.row_ptr.push_back(h.col.size());
        h.diag[i] = (box.mode() == Boundary::periodic ? -off : -1.0) + potential[i];
    }
    return h;
}

/// Per-site split rate beta(x) = mu + V(x) on the box.
inline std::vector<double> branching_rates(const LatticeBox& box, const PerturbationField& field) {
    std::vector<double> b(box.size(), field.mu());
    for (const auto& s : field.sources()) b[box.index_of(s.site)] += s.strength;
    return b;
}

/**
 * e^{tH} v by uniformization: with Lambda >= max|diag|, P = I + H/Lambda has
 * nonnegative entries and e^{tH} v = sum_n Poisson(n; Lambda t) P^n v, so small
 * entries keep their relative accuracy.
 */
inline std::vector<double> expm_action(const SparseOperator& h, std::vector<double> v, double t) {
    require(t >= 0.0, "time must be >= 0");
    require(v.size() == h.n, "vector size does not match operator");
    if (t == 0.0) return v;
    const double lambda = std::max(1.0, h.max_abs_diag());
    const double mean = lambda * t;
    const auto last = static_cast<long>(std::ceil(mean + 12.0 * std::sqrt(mean) + 30.0));
    std::vector<double> acc(h.n, 0.0), hv(h.n);
    const double log_mean = std::log(mean);
    for (long k = 0; k <= last; ++k) {
        const double w = std::exp(-mean + k * log_mean - std::lgamma(static_cast<double>(k) + 1.0));
        if (w > 0.0)
            for (std::size_t i = 0; i < h.n; ++i) acc[i] += w * v[i];
        if (k == last) break;
        h.apply(v.data(), hv.data());
        for (std::size_t i = 0; i < h.n; ++i) v[i] += hv[i] / lambda;
    }
    return acc;
}

}  // namespace brw
