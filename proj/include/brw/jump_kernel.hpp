#pragma once

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "brw/common.hpp"

namespace brw {

struct Jump {
    Site z;
    double rate = 0.0;
};

namespace detail {

// Integer row reduction of the generator set; returns |det| of the lattice
// they span inside Z^d, or 0 when the rank is below d.
inline long long lattice_index(std::vector<std::vector<long long>> rows, int dim) {
    long long index = 1;
    std::size_t top = 0;
    for (int c = 0; c < dim; ++c) {
        while (true) {
            std::size_t best = rows.size();
            for (std::size_t r = top; r < rows.size(); ++r) {
                if (rows[r][c] == 0) continue;
                if (best == rows.size() || std::llabs(rows[r][c]) < std::llabs(rows[best][c]))
                    best = r;
            }
            if (best == rows.size()) return 0;
            std::swap(rows[top], rows[best]);
            bool reduced = true;
            for (std::size_t r = top + 1; r < rows.size(); ++r) {
                if (rows[r][c] == 0) continue;
                const long long q = rows[r][c] / rows[top][c];
                for (int k = 0; k < dim; ++k) rows[r][k] -= q * rows[top][k];
                if (rows[r][c] != 0) reduced = false;
            }
            if (reduced) break;
        }
        index *= std::llabs(rows[top][c]);
        ++top;
    }
    return index;
}

inline double parse_rate(const std::string& tok) {
    const auto slash = tok.find('/');
    std::size_t used = 0;
    if (slash == std::string::npos) {
        const double v = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
        return v;
    }
    const std::string num = tok.substr(0, slash), den = tok.substr(slash + 1);
    const double n = std::stod(num, &used);
    if (used != num.size()) throw std::invalid_argument(tok);
    const double d = std::stod(den, &used);
    if (used != den.size()) throw std::invalid_argument(tok);
    return n / d;
}

}  // namespace detail

/**
 * Symmetric, finitely supported jump distribution a(z) on Z^d with total
 * rate one. Construction validates symmetry, normalization, positivity and
 * irreducibility; an invalid table throws InvalidKernel.
 */
class JumpKernel {
public:
    static constexpr double kNormalizationTolerance = 1e-12;

    JumpKernel(int dim, std::vector<Jump> support, std::string name = "custom")
        : dim_(dim), support_(std::move(support)), name_(std::move(name)) {
        validate();
        covariance_.assign(static_cast<std::size_t>(dim_ * dim_), 0.0);
        for (const auto& j : support_)
            for (int a = 0; a < dim_; ++a)
                for (int b = 0; b < dim_; ++b)
                    covariance_[a * dim_ + b] += j.rate * j.z[a] * j.z[b];
        axis_separable_ = std::all_of(support_.begin(), support_.end(), [](const Jump& j) {
            return std::count_if(j.z.begin(), j.z.end(), [](int c) { return c != 0; }) == 1;
        });
    }

    /// Nearest-neighbour walk, a(+-e_j) = 1/(2d).
    static JumpKernel simple(int dim) {
        require(dim >= 1, "dimension must be positive");
        std::vector<Jump> s;
        const double r = 1.0 / (2.0 * dim);
        for (int j = 0; j < dim; ++j)
            for (int sign : {1, -1}) {
                Site z = origin(dim);
                z[j] = sign;
                s.push_back({z, r});
            }
        return JumpKernel(dim, std::move(s), "srw-d" + std::to_string(dim));
    }

    /// Built-in kernels: "srw-d<N>" (the documented set is d = 1, 2, 3, 5).
    static JumpKernel named(const std::string& name) {
        if (name.rfind("srw-d", 0) == 0) {
            const std::string tail = name.substr(5);
            if (!tail.empty() && std::all_of(tail.begin(), tail.end(), ::isdigit)) {
                const int d = std::stoi(tail);
                if (d >= 1 && d <= 8) return simple(d);
            }
        }
        throw InvalidKernel("unknown kernel name '" + name + "'");
    }

    /**
     * Text format:
     *     # comment
     *     dimension 3
     *      1  0  0  1/6
     *     -1  0  0  1/6
     *     ...
     * One jump per line: d integer coordinates followed by the rate (decimal
     * or p/q).
     */
    static JumpKernel parse(std::istream& in, const std::string& name = "file") {
        int dim = 0;
        std::vector<Jump> s;
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            std::istringstream ls(line);
            std::vector<std::string> tok;
            for (std::string t; ls >> t;) tok.push_back(t);
            if (tok.empty()) continue;
            if (tok[0] == "dimension") {
                if (tok.size() != 2 || dim != 0)
                    throw ParseError("malformed dimension line", lineno, 1);
                dim = std::atoi(tok[1].c_str());
                if (dim < 1) throw ParseError("dimension must be positive", lineno, 11);
                continue;
            }
            if (dim == 0) throw ParseError("jump listed before 'dimension'", lineno, 1);
            if (static_cast<int>(tok.size()) != dim + 1)
                throw ParseError("expected " + std::to_string(dim) + " coordinates and a rate",
                                 lineno, 1);
            Jump j;
            j.z.resize(static_cast<std::size_t>(dim));
            try {
                for (int c = 0; c < dim; ++c) {
                    std::size_t used = 0;
                    j.z[c] = std::stoi(tok[c], &used);
                    if (used != tok[c].size()) throw std::invalid_argument(tok[c]);
                }
                j.rate = detail::parse_rate(tok.back());
            } catch (const std::exception&) {
                throw ParseError("bad number in jump line", lineno, 1);
            }
            s.push_back(std::move(j));
        }
        if (dim == 0) throw ParseError("missing 'dimension' line", lineno, 1);
        return JumpKernel(dim, std::move(s), name);
    }

    static JumpKernel load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw InvalidKernel("cannot open kernel file '" + path + "'");
        return parse(f, path);
    }

    int dim() const noexcept { return dim_; }
    const std::vector<Jump>& support() const noexcept { return support_; }
    const std::string& name() const noexcept { return name_; }

    /// Fourier symbol \hat a(k) = sum_z a(z) cos(k.z).
    double symbol(const std::vector<double>& k) const {
        double s = 0.0;
        for (const auto& j : support_) {
            double dot = 0.0;
            for (int c = 0; c < dim_; ++c) dot += k[c] * j.z[c];
            s += j.rate * std::cos(dot);
        }
        return s;
    }

    /// Jump covariance Sigma_ab = sum_z a(z) z_a z_b, row major; 1 - \hat a(k) ~ k'Sigma k / 2.
    const std::vector<double>& covariance() const noexcept { return covariance_; }

    double quadratic_form(const double* k) const {
        double q = 0.0;
        for (int a = 0; a < dim_; ++a)
            for (int b = 0; b < dim_; ++b) q += k[a] * covariance_[a * dim_ + b] * k[b];
        return q;
    }

    double second_moment() const {
        double s = 0.0;
        for (int a = 0; a < dim_; ++a) s += covariance_[a * dim_ + a];
        return s;
    }

    /// True when every jump moves along exactly one axis.
    bool axis_separable() const noexcept { return axis_separable_; }

    /// One-dimensional marginal on `axis` (offset, rate) for separable kernels.
    std::vector<std::pair<int, double>> axis_jumps(int axis) const {
        std::vector<std::pair<int, double>> out;
        for (const auto& j : support_)
            if (j.z[axis] != 0) out.emplace_back(j.z[axis], j.rate);
        return out;
    }

    int max_jump() const {
        int m = 0;
        for (const auto& j : support_) m = std::max(m, norm_inf(j.z));
        return m;
    }

    /// Transient iff d >= 3 (finite support, symmetric, irreducible).
    bool transient_by_dimension() const noexcept { return dim_ >= 3; }

    std::string to_text() const {
        std::ostringstream os;
        os.precision(17);
        os << "dimension " << dim_ << '\n';
        for (const auto& j : support_) {
            for (int c : j.z) os << c << ' ';
            os << j.rate << '\n';
        }
        return os.str();
    }

private:
    void validate() const {
        if (dim_ < 1) throw InvalidKernel("dimension must be positive");
        if (support_.empty()) throw InvalidKernel("empty support");
        double total = 0.0;
        for (const auto& j : support_) {
            if (static_cast<int>(j.z.size()) != dim_)
                throw InvalidKernel("jump vector has wrong dimension");
            if (norm_inf(j.z) == 0) throw InvalidKernel("zero jump in support");
            if (!(j.rate > 0.0) || !std::isfinite(j.rate))
                throw InvalidKernel("non-positive rate for jump (" + to_string(j.z) + ")");
            total += j.rate;
        }
        if (std::abs(total - 1.0) > kNormalizationTolerance)
            throw InvalidKernel("rates sum to " + std::to_string(total) + ", expected 1");
        for (std::size_t i = 0; i < support_.size(); ++i) {
            for (std::size_t k = i + 1; k < support_.size(); ++k)
                if (support_[i].z == support_[k].z)
                    throw InvalidKernel("duplicate jump (" + to_string(support_[i].z) + ")");
            Site neg = support_[i].z;
            for (int& c : neg) c = -c;
            auto it = std::find_if(support_.begin(), support_.end(),
                                   [&](const Jump& j) { return j.z == neg; });
            if (it == support_.end() ||
                std::abs(it->rate - support_[i].rate) > 1e-14 * support_[i].rate + 1e-300)
                throw InvalidKernel("asymmetric at jump (" + to_string(support_[i].z) + ")");
        }
        std::vector<std::vector<long long>> rows;
        for (const auto& j : support_) rows.emplace_back(j.z.begin(), j.z.end());
        if (detail::lattice_index(std::move(rows), dim_) != 1)
            throw InvalidKernel("support does not generate Z^d (reducible walk)");
    }

    int dim_;
    std::vector<Jump> support_;
    std::string name_;
    std::vector<double> covariance_;
    bool axis_separable_ = false;
};

}  // namespace brw
