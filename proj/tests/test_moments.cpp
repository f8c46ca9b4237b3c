#include <gtest/gtest.h>

#include <cmath>

#include "brw/moments.hpp"
#include "brw/spectral.hpp"
#include "oracles.hpp"

using namespace brw;

namespace {

const JumpKernel d1 = JumpKernel::named("srw-d1");
const JumpKernel d3 = JumpKernel::named("srw-d3");

SolveOptions options(double t_end, std::vector<double> checkpoints = {}, std::vector<Site> probes = {},
                     double dt = 0.0) {
    SolveOptions o;
    o.t_end = t_end;
    o.dt = dt;
    o.checkpoints = std::move(checkpoints);
    o.probes = std::move(probes);
    return o;
}

}  // namespace

TEST(Generator, RowStructure) {
    const LatticeBox per(2, 3, Boundary::periodic);
    const SparseOperator hp = build_generator(JumpKernel::simple(2), per, PerturbationField(2, 1.0));
    for (std::size_t i = 0; i < hp.n; ++i) EXPECT_EQ(hp.row_sum(i), 0.0);
    EXPECT_TRUE(hp.symmetric());

    const LatticeBox abs(2, 3);
    const PerturbationField f(2, 1.0, {{{0, 0}, 0.4}});
    const SparseOperator ha = build_generator(JumpKernel::simple(2), abs, f);
    EXPECT_DOUBLE_EQ(ha.entry(abs.index_of({0, 0}), abs.index_of({0, 0})), -0.6);
    EXPECT_DOUBLE_EQ(ha.entry(abs.index_of({1, 0}), abs.index_of({1, 0})), -1.0);
    EXPECT_DOUBLE_EQ(ha.entry(abs.index_of({1, 0}), abs.index_of({2, 0})), 0.25);
    EXPECT_NEAR(ha.row_sum(abs.index_of({3, 3})), -0.5, 1e-15);  // corner loses two of four jumps
    EXPECT_TRUE(ha.symmetric());

    EXPECT_THROW(build_generator(JumpKernel::simple(2), abs, PerturbationField(2, 1.0, {{{4, 0}, 0.1}})),
                 SourceOutsideBox);
}

TEST(FirstMoment, CriticalConservationOnPeriodicBox) {
    const LatticeBox box(3, 5, Boundary::periodic);
    const SparseOperator h = build_generator(d3, box, PerturbationField(3, 1.0));
    const auto t = solve_first_moment(h, box, InitialData::ones, origin(3), options(20.0, {5, 10, 20}));
    for (const auto& snap : t.values)
        for (double v : snap[0]) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(FirstMoment, DeltaDataReproducesBesselHeatKernel) {
    const LatticeBox box(1, 20);
    const SparseOperator h = build_generator(d1, box, PerturbationField(1, 0.0));
    const auto t = solve_first_moment(h, box, InitialData::delta, {0}, options(1.0, {}, {}, 0.01));
    EXPECT_NEAR(t.at(1, 1, {0}), 0.4657596075936404, 1e-8);
    EXPECT_NEAR(t.at(1, 1, {3}), oracle::bessel_heat_1d(1.0, 3), 1e-8);
}

TEST(FirstMoment, MatchesRenewalEquation) {
    // m(t) = p(t) + sigma int p(t-s) m(s) ds at the source site.
    for (int d : {1, 3}) {
        const double sigma = 0.3, t_end = 3.0;
        const auto kernel = JumpKernel::simple(d);
        const LatticeBox box(d, d == 1 ? 30 : 14);
        const SparseOperator h = build_generator(kernel, box, PerturbationField::single(d, 0.0, sigma));
        const auto table = solve_first_moment(h, box, InitialData::delta, origin(d),
                                              options(t_end, {1, 2, 3}, {origin(d)}));
        const int steps = 3000;
        const auto ref = oracle::volterra_first_moment(d, sigma, t_end, steps);
        for (int j = 1; j <= 3; ++j)
            EXPECT_NEAR(table.values[j][0][0], ref[j * steps / 3], 2e-6) << d << " " << j;
    }
}

TEST(FirstMoment, OnesDataIncreasesTowardSteadyConstant) {
    const LatticeBox box(3, 10);
    const PerturbationField f = PerturbationField::single(3, 1.0, 0.3);
    const SparseOperator h = build_generator(d3, box, f);
    std::vector<double> cps;
    for (int k = 1; k <= 20; ++k) cps.push_back(k);
    const auto t = solve_first_moment(h, box, InitialData::ones, origin(3), options(20.0, cps, {origin(3)}));
    const double A = steady_mean_constant(d3, default_grid(3), f);
    for (std::size_t j = 1; j < t.times.size(); ++j) {
        EXPECT_GT(t.values[j][0][0], t.values[j - 1][0][0]);
        EXPECT_LT(t.values[j][0][0], A);
    }
    EXPECT_GT(t.values.back()[0][0], 1.5);
}

TEST(FirstMoment, RejectsUnstableStep) {
    const LatticeBox box(1, 5);
    const SparseOperator h = build_generator(d1, box, PerturbationField(1, 0.0));
    SolveOptions o = options(1.0);
    o.dt = 2.0;
    EXPECT_THROW(solve_first_moment(h, box, InitialData::delta, {0}, o), PreconditionError);
}

TEST(FactorialMoments, NoBranchingMeansNoHigherMoments) {
    const LatticeBox box(2, 6);
    const auto t = solve_factorial_moments(JumpKernel::simple(2), box, PerturbationField(2, 0.0), 4, origin(2),
                                           options(3.0, {1, 2, 3}));
    for (const auto& snap : t.values)
        for (int l = 1; l < 4; ++l)
            for (double v : snap[l]) EXPECT_EQ(v, 0.0);
}

TEST(FactorialMoments, SecondMomentMassMatchesHeatKernelIntegral) {
    // Summing the m_2 equation over x removes the walk term, leaving
    // d/dt sum_x m_2 = 2 mu sum_x p(t,x,0)^2 = 2 mu p(2t,0,0).
    const LatticeBox box(1, 40);
    const double mu = 0.7, t_end = 4.0;
    const auto t = solve_factorial_moments(d1, box, PerturbationField(1, mu), 2, {0}, options(t_end));
    CompensatedSum s;
    for (double v : t.values.back()[1]) s.add(v);
    const int n = 2000;
    double integral = 0.0;  // Simpson
    for (int k = 0; k <= n; ++k) {
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        integral += w * oracle::bessel_heat_1d(2.0 * t_end * k / n, 0);
    }
    integral *= t_end / n / 3.0;
    EXPECT_NEAR(s.value(), 2.0 * mu * integral, 1e-7);
}

TEST(FactorialMoments, StepHalvingAndNonnegativity) {
    const LatticeBox box(3, 8);
    SolveOptions o = options(4.0, {1, 2, 4});
    o.estimate_error = true;
    const auto t = solve_factorial_moments(d3, box, PerturbationField::single(3, 1.0, 0.3), 3, origin(3), o);
    ASSERT_EQ(t.order_error.size(), 3u);
    for (double e : t.order_error) EXPECT_LT(e, 1e-4);
    for (const auto& snap : t.values)
        for (const auto& order : snap)
            for (double v : order) EXPECT_GE(v, 0.0);
}

TEST(FactorialMoments, BoxGrowthConvergence) {
    const double t_end = 6.0;  // <= R^2 / (4d) for R = 10, d = 3
    const PerturbationField f = PerturbationField::single(3, 1.0, 0.3);
    auto origin_value = [&](int R) {
        const auto t = solve_factorial_moments(d3, LatticeBox(3, R), f, 1, origin(3), options(t_end, {}, {origin(3)}));
        return t.values.back()[0][0];
    };
    const double a = origin_value(10), b = origin_value(15);
    EXPECT_LT(std::abs(a - b) / b, 1e-3);
}

TEST(FactorialMoments, TruncationWarningForSmallBox) {
    const auto t = solve_factorial_moments(d1, LatticeBox(1, 3), PerturbationField(1, 1.0), 1, {0}, options(10.0));
    EXPECT_TRUE(t.truncation_warning);
    const auto u = solve_factorial_moments(d1, LatticeBox(1, 40), PerturbationField(1, 1.0), 1, {0}, options(2.0));
    EXPECT_FALSE(u.truncation_warning);
}

TEST(CatalanD, ExactValuesAndGrowthBound) {
    const auto D = catalan_D(30);
    ASSERT_EQ(D.size(), 30u);
    EXPECT_EQ(D[0], 1);
    EXPECT_EQ(D[1], 1);
    EXPECT_EQ(D[2], 3);
    EXPECT_EQ(D[3], 15);
    // The recursion yields odd double factorials (2l - 3)!!.
    BigInt df = 1;
    for (int l = 2; l <= 30; ++l) {
        EXPECT_EQ(D[l - 1], df) << l;
        df *= 2 * l - 1;
    }
    for (int l = 1; l <= 30; ++l) EXPECT_LE(D[l - 1], growth_bound(l)) << l;
    EXPECT_THROW(catalan_D(0), PreconditionError);
}

TEST(BoundCheck, UnperturbedFirstMomentEqualsHeatKernel) {
    const LatticeBox box(2, 8);
    const auto t = solve_factorial_moments(JumpKernel::simple(2), box, PerturbationField(2, 0.0), 1, origin(2),
                                           options(2.0, {0.5, 1, 2}, {}, 0.01));
    const auto p = heat_kernel_on_box(JumpKernel::simple(2), t);
    const BoundReport r = moment_bound_check(t, 1.0, 0.0, p, 4);
    ASSERT_EQ(r.orders.size(), 1u);
    EXPECT_NEAR(r.orders[0].max_ratio, 1.0, 1e-6);
    EXPECT_TRUE(r.pass);
}

TEST(BoundCheck, SubcriticalSingleSourceUpToThirdOrder) {
    const LatticeBox box(3, 12);
    const PerturbationField f = PerturbationField::single(3, 1.0, 0.3);
    const auto t = solve_factorial_moments(d3, box, f, 3, origin(3), options(4.0, {1, 2, 3, 4}));
    const auto p = heat_kernel_on_box(d3, t);
    const TorusGrid g = default_grid(3);
    const BoundReport r = moment_bound_check(t, steady_mean_constant(d3, g, f), bound_constant_B(d3, g, f), p, 6);
    EXPECT_TRUE(r.pass);
    for (const auto& o : r.orders) EXPECT_LE(o.max_ratio, 1.0 + 1e-3) << o.order;
}

TEST(BoundCheck, NoSourceSecondOrder) {
    // sigma = 0: A = 1 and B = 2 mu G_0(0,0).
    const LatticeBox box(3, 12);
    const PerturbationField f(3, 1.0);
    const auto t = solve_factorial_moments(d3, box, f, 2, origin(3), options(4.0, {1, 2, 4}));
    const auto p = heat_kernel_on_box(d3, t);
    const BoundReport r = moment_bound_check(t, 1.0, bound_constant_B(d3, default_grid(3), f), p, 6);
    EXPECT_TRUE(r.pass);
}

TEST(BoundCheck, MultiSourceWithCombinedConstant) {
    const LatticeBox box(3, 12);
    const PerturbationField f(3, 1.0, {{{0, 0, 0}, 0.15}, {{1, 0, 0}, 0.15}});
    const auto t = solve_factorial_moments(d3, box, f, 3, origin(3), options(4.0, {1, 2, 4}));
    const auto p = heat_kernel_on_box(d3, t);
    const TorusGrid g = default_grid(3);
    const BoundReport r = moment_bound_check(t, steady_mean_constant(d3, g, f), bound_constant_B(d3, g, f), p, 6);
    EXPECT_TRUE(r.pass);
}

TEST(BoundCheck, CarlemanGrowth) {
    const LatticeBox box(3, 8);
    const PerturbationField f = PerturbationField::single(3, 1.0, 0.3);
    const auto t = solve_factorial_moments(d3, box, f, 4, origin(3), options(3.0));
    const TorusGrid g = default_grid(3);
    const double A = steady_mean_constant(d3, g, f), B = bound_constant_B(d3, g, f);
    double fact = 1.0;
    for (int l = 1; l <= 4; ++l) {
        fact *= l;
        double M = 0.0;
        for (const auto& snap : t.values)
            for (double v : snap[l - 1]) M = std::max(M, v);
        EXPECT_LE(std::pow(M / fact, 1.0 / l), A * B * (1.0 + 1e-3)) << l;
    }
}

TEST(BoundCheck, ReportsViolations) {
    const LatticeBox box(1, 5);
    const auto t = solve_factorial_moments(d1, box, PerturbationField(1, 0.0), 1, {0}, options(1.0, {}, {}, 0.01));
    auto p = heat_kernel_on_box(d1, t);
    for (auto& row : p)
        for (double& v : row) v *= 0.5;
    const BoundReport r = moment_bound_check(t, 1.0, 0.0, p);
    EXPECT_FALSE(r.pass);
    EXPECT_NEAR(r.orders[0].max_ratio, 2.0, 1e-8);
}

TEST(Majorization, SubcriticalSourceAtOrigin) {
    const LatticeBox box(3, 8);
    const auto t = solve_factorial_moments(d3, box, PerturbationField::single(3, 1.0, 0.3), 1, origin(3),
                                           options(4.0, {0.5, 1, 2, 4}));
    const MajorizationReport r = majorization_check(t);
    EXPECT_TRUE(r.holds);
    EXPECT_LT(r.worst_margin, 0.0);
    EXPECT_GT(r.points_checked, 0u);
}

TEST(Majorization, UnperturbedReducesToHeatKernelMaximum) {
    const LatticeBox box(2, 10);
    const auto t = solve_factorial_moments(JumpKernel::simple(2), box, PerturbationField(2, 0.0), 1, origin(2),
                                           options(5.0, {1, 3, 5}));
    EXPECT_TRUE(majorization_check(t).holds);
    // With other targets y: m_1(t, x, y) <= m_1(t, 0, 0) as well.
    const auto other = solve_factorial_moments(JumpKernel::simple(2), box, PerturbationField(2, 0.0), 1, {2, -1},
                                               options(5.0, {1, 3, 5}));
    EXPECT_TRUE(majorization_check(t, {other}).holds);
}

TEST(Kpp, FixedPointAtZEqualsOne) {
    const LatticeBox box(1, 8);
    const auto s = kpp_generating_function(d1, box, PerturbationField::single(1, 1.0, 0.2), 1.0, {0}, options(3.0));
    for (const auto& phi : s.phi)
        for (double v : phi) EXPECT_EQ(v, 1.0);
}

TEST(Kpp, ExtinctionProbabilityNondecreasingWhenCritical) {
    // Only from x = y0: a particle started away from y0 first has to reach it,
    // so P_x(n(t, y0) = 0) dips before it recovers.
    const LatticeBox box(1, 10);
    std::vector<double> cps;
    for (int k = 1; k <= 10; ++k) cps.push_back(0.5 * k);
    const auto s = kpp_generating_function(d1, box, PerturbationField(1, 1.0), 0.0, {0}, options(5.0, cps));
    const std::size_t c = box.index_of({0});
    for (std::size_t j = 1; j < s.phi.size(); ++j) EXPECT_GE(s.phi[j][c], s.phi[j - 1][c] - 1e-14);
    for (const auto& phi : s.phi)
        for (double v : phi) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
}

TEST(Kpp, ZeroBranchingGivesHeatKernel) {
    // Without branching n(t, y0) is 0 or 1, so 1 - phi_0(t, x, y0) = p(t, x, y0).
    const LatticeBox box(1, 20);
    const auto s = kpp_generating_function(d1, box, PerturbationField(1, 0.0), 0.0, {0}, options(1.0, {}, {}, 0.01));
    EXPECT_NEAR(1.0 - s.phi.back()[box.index_of({0})], 0.4657596075936404, 1e-8);
    EXPECT_NEAR(1.0 - s.phi.back()[box.index_of({2})], oracle::bessel_heat_1d(1.0, 2), 1e-8);
}

TEST(Kpp, DerivativesReproduceHierarchy) {
    const LatticeBox box(1, 6);
    const PerturbationField f = PerturbationField::single(1, 1.0, 0.3);
    const SolveOptions o = options(2.0, {1, 2});
    const auto k = kpp_moments(d1, box, f, {0}, o);
    const auto t = solve_factorial_moments(d1, box, f, 2, {0}, o);
    for (std::size_t j = 1; j < t.times.size(); ++j) {
        double peak1 = 0, peak2 = 0;
        for (std::size_t i = 0; i < box.size(); ++i) {
            peak1 = std::max(peak1, t.values[j][0][i]);
            peak2 = std::max(peak2, t.values[j][1][i]);
        }
        for (std::size_t i = 0; i < box.size(); ++i) {
            EXPECT_NEAR(k.m1[j][i], t.values[j][0][i], 1e-3 * peak1);
            EXPECT_NEAR(k.m2[j][i], t.values[j][1][i], 1e-2 * peak2);
        }
    }
}

TEST(Kpp, RejectsOutOfRangeZ) {
    const LatticeBox box(1, 4);
    EXPECT_THROW(kpp_generating_function(d1, box, PerturbationField(1, 1.0), 1.5, {0}, options(1.0)),
                 PreconditionError);
}
