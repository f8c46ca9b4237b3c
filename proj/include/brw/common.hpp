#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace brw {

/// A lattice point of Z^d.
using Site = std::vector<int>;

inline Site origin(int dim) { return Site(static_cast<std::size_t>(dim), 0); }

inline double norm2(const Site& x) {
    double s = 0.0;
    for (int c : x) s += static_cast<double>(c) * c;
    return std::sqrt(s);
}

inline int norm_inf(const Site& x) {
    int m = 0;
    for (int c : x) m = std::max(m, std::abs(c));
    return m;
}

inline Site operator+(Site a, const Site& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

inline Site operator-(Site a, const Site& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
    return a;
}

inline std::string to_string(const Site& x) {
    std::string s;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (i) s += ' ';
        s += std::to_string(x[i]);
    }
    return s;
}

// ---------------------------------------------------------------------------
// Error hierarchy. Every module throws a subclass of brw::Error; warnings are
// carried as data on the result types instead.

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
    virtual const char* kind() const noexcept { return "Error"; }
};

#define BRW_DEFINE_ERROR(Name)                                               \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& what) : Error(#Name ": " + what) {} \
        const char* kind() const noexcept override { return #Name; }         \
    };

BRW_DEFINE_ERROR(PreconditionError)
BRW_DEFINE_ERROR(InvalidKernel)
BRW_DEFINE_ERROR(DivergentGreen)
BRW_DEFINE_ERROR(InconsistentDiagnostic)
BRW_DEFINE_ERROR(FitUnstable)
BRW_DEFINE_ERROR(SupercriticalInput)
BRW_DEFINE_ERROR(NoRoot)
BRW_DEFINE_ERROR(NoConvergence)
BRW_DEFINE_ERROR(SourceOutsideBox)
BRW_DEFINE_ERROR(UnstableStep)
BRW_DEFINE_ERROR(RangeViolation)
BRW_DEFINE_ERROR(PopulationExplosion)
BRW_DEFINE_ERROR(ValidationError)
BRW_DEFINE_ERROR(MissingOutput)

#undef BRW_DEFINE_ERROR

class ParseError : public Error {
public:
    ParseError(const std::string& what, int line, int column)
        : Error("ParseError: line " + std::to_string(line) + ", column " +
                std::to_string(column) + ": " + what),
          line_(line), column_(column) {}
    const char* kind() const noexcept override { return "ParseError"; }
    int line() const noexcept { return line_; }
    int column() const noexcept { return column_; }

private:
    int line_;
    int column_;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw PreconditionError(msg);
}

// Neumaier-compensated accumulator; deterministic for a fixed summation order.
class CompensatedSum {
public:
    void add(double v) noexcept {
        const double t = sum_ + v;
        if (std::abs(sum_) >= std::abs(v))
            comp_ += (sum_ - t) + v;
        else
            comp_ += (v - t) + sum_;
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

}  // namespace brw
