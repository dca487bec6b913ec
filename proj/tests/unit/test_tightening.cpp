#include "doctest.h"

#include "chpd/errors.hpp"
#include "chpd/lp.hpp"
#include "chpd/system.hpp"
#include "chpd/tightening.hpp"
#include "test_systems.hpp"

using namespace chpd;
using chpd::testing::random_system;

namespace {

// x(t+1) = phi x(t) + d w(t), one input with no effect, y = x-free output w.
StateSpaceModel scalar_ssm(double phi, double d, int T) {
    StateSpaceModel s;
    s.horizon = T;
    s.A = Eigen::MatrixXd::Constant(1, 1, phi);
    s.B = Eigen::MatrixXd::Zero(1, 1);
    s.D = Eigen::MatrixXd::Constant(1, 1, d);
    s.x0 = Eigen::VectorXd::Zero(1);
    s.outputs.horizon = T;
    s.outputs.C = Eigen::MatrixXd::Zero(1, 1);
    s.outputs.E = Eigen::MatrixXd::Identity(1, 1);
    s.outputs.offset = Eigen::MatrixXd::Zero(1, T);
    s.outputs.input_u.resize(0, 1);
    s.outputs.input_w.resize(0, 1);
    s.manifest.x = {"x"};
    s.manifest.u = {"u"};
    s.manifest.y = {"y"};
    s.manifest.w = {"w"};
    return s;
}

UncertaintyTube unit_tube(int T, double width = 1.0) {
    return make_tube(Eigen::MatrixXd::Constant(1, T, -width), Eigen::MatrixXd::Zero(1, T),
                     Eigen::MatrixXd::Constant(1, T, width));
}

ConstraintFamily x_upper(double limit) {
    ConstraintFamily c;
    c.x = PolyhedronH::empty(1);
    c.x.add(Eigen::VectorXd::Ones(1), limit, "x<=max");
    c.x.add(-Eigen::VectorXd::Ones(1), limit, "x>=min");
    c.u = PolyhedronH::empty(1);
    c.y = PolyhedronH::empty(1);
    c.du = PolyhedronH::empty(1);
    c.dy = PolyhedronH::empty(1);
    return c;
}

// max v^T w over the box, or over box and budget with w = p - q.
double lp_support(const Eigen::VectorXd& v, std::optional<double> budget) {
    const auto n = v.size();
    LinearProgram lp;
    if (!budget) {
        lp.c = -v;
        lp.lower = Eigen::VectorXd::Constant(n, -1.0);
        lp.upper = Eigen::VectorXd::Constant(n, 1.0);
        lp.G.resize(0, n);
        lp.h.resize(0);
    } else {
        lp.c.resize(2 * n);
        lp.c << -v, v;
        lp.lower = Eigen::VectorXd::Zero(2 * n);
        lp.upper = Eigen::VectorXd::Ones(2 * n);
        lp.G.resize(1, 2 * n);
        for (Eigen::Index k = 0; k < 2 * n; ++k) lp.G.insert(0, k) = 1.0;
        lp.h = Eigen::VectorXd::Constant(1, *budget);
    }
    lp.A.resize(0, lp.c.size());
    lp.b.resize(0);
    LpOptions o;
    o.optimality_tolerance = 1e-12;
    LpSolution sol = solve_lp(lp, o);
    REQUIRE(sol.optimal());
    return -sol.objective;
}

}  // namespace

TEST_CASE("box support is the 1-norm") {
    Eigen::VectorXd v(3);
    v << 1, -2, 0;
    CHECK(support_box(v) == 3.0);
    CHECK(support_box(Eigen::VectorXd::Zero(4)) == 0.0);

    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd r = chpd::testing::random_matrix(rng, 24, 1, 3.0);
        CHECK(support_box(r) == doctest::Approx(lp_support(r, std::nullopt)).epsilon(1e-12));
    }
}

TEST_CASE("budget support closed form") {
    Eigen::VectorXd v(3);
    v << 3, 1, 2;
    CHECK(gamma(v, 2.0) == doctest::Approx(5.0));
    CHECK(gamma(v, 3.0) == doctest::Approx(6.0));
    CHECK(gamma(v, 7.5) == doctest::Approx(6.0));
    CHECK(gamma(v, 0.0) == 0.0);
    CHECK(gamma(Eigen::VectorXd::Constant(1, 2.0), 0.5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(gamma(v, -1.0), Error);

    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 24);
        Eigen::VectorXd r = chpd::testing::random_matrix(rng, n, 1, 2.0);
        const double g = chpd::testing::uniform(rng, 0.0, n + 2.0);
        CHECK(std::abs(gamma(r, g) - lp_support(r, g)) <= 1e-10);
        CHECK(std::abs(gamma(r, g) - chpd::testing::budget_support_threshold(r, g)) <= 1e-10);
    }
}

TEST_CASE("reachable sets of scalar systems") {
    {
        auto s = scalar_ssm(1.0, 1.0, 4);
        auto sets = reachable_sets(s, unit_tube(4), zero_gain(s));
        auto [lo, hi] = sets.hull(2);
        CHECK(lo(0) == doctest::Approx(-2.0));
        CHECK(hi(0) == doctest::Approx(2.0));
        CHECK(sets.support(2, Eigen::VectorXd::Ones(1)) == doctest::Approx(2.0));
    }
    {
        auto s = scalar_ssm(0.5, 1.0, 4);
        auto sets = reachable_sets(s, unit_tube(4), zero_gain(s));
        auto [lo, hi] = sets.hull(3);
        CHECK(lo(0) == doctest::Approx(-1.75));
        CHECK(hi(0) == doctest::Approx(1.75));
    }
    {
        auto s = scalar_ssm(0.9, 2.0, 5);
        auto sets = reachable_sets(s, unit_tube(5, 0.0), zero_gain(s));
        for (int t = 0; t <= 5; ++t) CHECK(sets.hull(t).second(0) == 0.0);
    }
}

TEST_CASE("interval subtraction on a scalar row") {
    auto s = scalar_ssm(1.0, 1.0, 3);
    auto sched = tighten(s, x_upper(5.0), unit_tube(3), zero_gain(s), TightenMode::box());
    CHECK(sched.x.tightened_rhs(0, 2) == doctest::Approx(3.0));
    CHECK(sched.x.tightened_rhs(1, 2) == doctest::Approx(3.0));
    CHECK(sched.x.tightened_rhs(0, 1) == doctest::Approx(4.0));
    CHECK(sched.x.first_step == 1);
    CHECK(sched.x.last_step == 3);
}

TEST_CASE("center at the lower edge: offset conventions") {
    auto s = scalar_ssm(1.0, 1.0, 1);
    auto tube = make_tube(Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Constant(1, 1, 2.0));
    CHECK(tube.offset(0, 0) == doctest::Approx(1.0));
    CHECK(tube.half_width(0, 0) == doctest::Approx(1.0));
    auto dev = tighten(s, x_upper(5.0), tube, zero_gain(s), TightenMode::box());
    CHECK(dev.x.reduction(0, 1) == doctest::Approx(2.0));  // x can grow by 2
    CHECK(dev.x.reduction(1, 1) == doctest::Approx(0.0));  // but never shrink

    auto printed_tube = make_tube(tube.lower, tube.center, tube.upper, std::nullopt, OffsetConvention::printed);
    auto printed = tighten(s, x_upper(5.0), printed_tube, zero_gain(s), TightenMode::box());
    CHECK(printed.x.reduction(0, 1) == doctest::Approx(0.0));
    CHECK(printed.x.reduction(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("zero-width tube leaves constraints untouched") {
    std::mt19937_64 rng(5);
    auto r = random_system(rng, 3, 2, 2, 3, 8, true, true);
    auto tube = make_tube(r.tube.center, r.tube.center, r.tube.center);
    for (auto mode : {TightenMode::box(), TightenMode::with_budget(2.0)}) {
        auto sched = tighten(r.ssm, r.constraints, tube, r.gain, mode);
        CHECK(sched.max_difference(untightened(r.ssm, r.constraints)) == 0.0);
        auto it = tighten_iterative_lp(r.ssm, r.constraints, tube, r.gain, mode);
        CHECK(it.max_difference(untightened(r.ssm, r.constraints)) == 0.0);
    }
}

TEST_CASE("direct tightening matches forward-simulation worst cases") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        const int T = 3 + trial;
        auto r = random_system(rng, 1 + trial % 3, 2, 2, 3, T, trial % 2 == 0, trial >= 3);
        const Policy policy = chpd::testing::reference_policy(r.ssm, r.tube, r.gain);
        for (std::optional<double> budget : {std::optional<double>(), std::optional<double>(1.5)}) {
            auto mode = budget ? TightenMode::with_budget(*budget) : TightenMode::box();
            auto sched = tighten(r.ssm, r.constraints, r.tube, r.gain, mode, TightenOptions{false, 1e-9});
            double worst = 0.0;
            for (const FamilySchedule* f : sched.families())
                for (int i = 0; i < f->rows.rows(); ++i)
                    for (int t = f->first_step; t <= f->last_step; ++t) {
                        const double ref = chpd::testing::brute_force_reduction(
                            r.ssm, r.tube, policy, f->family, f->rows.S.row(i).transpose(), t, budget);
                        worst = std::max(worst, std::abs(ref - f->reduction(i, t)));
                    }
            CHECK(worst <= 1e-9);
        }
    }
}

TEST_CASE("iterative support LPs agree with direct tightening") {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 4; ++trial) {
        auto r = random_system(rng, 2 + trial % 3, 2, 3, 3, 6 + 2 * trial, trial % 2 == 1, trial % 2 == 0);
        auto direct = tighten(r.ssm, r.constraints, r.tube, r.gain, TightenMode::box(), TightenOptions{false, 1e-9});
        auto iter = tighten_iterative_lp(r.ssm, r.constraints, r.tube, r.gain, TightenMode::box());
        CHECK(iter.complete);
        CHECK(direct.max_difference(iter) <= 1e-8);
        for (double g : {1.0, 5.0, 10.0}) {
            auto d = tighten(r.ssm, r.constraints, r.tube, r.gain, TightenMode::with_budget(g), TightenOptions{false, 1e-9});
            auto i = tighten_iterative_lp(r.ssm, r.constraints, r.tube, r.gain, TightenMode::with_budget(g));
            CHECK(d.max_difference(i) <= 1e-8);
        }
    }
}

TEST_CASE("iterative deadline marks the schedule incomplete") {
    std::mt19937_64 rng(2);
    auto r = random_system(rng, 3, 2, 3, 3, 12, false, false);
    IterativeOptions o;
    o.deadline = std::chrono::duration<double>(0.0);
    auto sched = tighten_iterative_lp(r.ssm, r.constraints, r.tube, r.gain, TightenMode::box(), o);
    CHECK_FALSE(sched.complete);
}

TEST_CASE("budget reductions never exceed box reductions on the reference system") {
    auto model = build_reference_system({24, 3600.0});
    auto ssm = compile_state_space(model);
    auto c = compile_constraints(model, ssm);
    auto tube = compile_uncertainty_tube(model);
    auto gain = zero_gain(ssm);
    auto box = tighten(ssm, c, tube, gain, TightenMode::box());
    auto budget = tighten(ssm, c, tube, gain, TightenMode::with_budget(10.0));
    auto fb = box.families(), fg = budget.families();
    for (std::size_t k = 0; k < fb.size(); ++k)
        CHECK((fg[k]->reduction - fb[k]->reduction).maxCoeff() <= 1e-12);
    CHECK(box.to_csv().rfind("family,step,row,unit,original_rhs,reduction,tightened_rhs\n", 0) == 0);
}

TEST_CASE("feedback gain guards") {
    auto s = scalar_ssm(0.5, 1.0, 3);
    s.B = Eigen::MatrixXd::Ones(1, 1);
    CHECK(zero_gain(s).Phi.isApprox(s.A));
    CHECK_THROWS_AS(make_gain(s, Eigen::MatrixXd::Constant(1, 1, 1.0), 1.1), StructuralError);  // radius 1.5
    auto warn = make_gain(s, Eigen::MatrixXd::Constant(1, 1, 0.55), 1.1);
    CHECK(warn.spectral_radius == doctest::Approx(1.05));
    CHECK_FALSE(warn.warning.empty());

    auto c = x_upper(5.0);
    auto a = tighten(s, c, unit_tube(3), zero_gain(s), TightenMode::box());
    auto b = tighten(s, c, unit_tube(3), make_gain(s, Eigen::MatrixXd::Zero(1, 1)), TightenMode::box());
    CHECK(a.max_difference(b) == 0.0);
}

TEST_CASE("an emptied constraint set is reported") {
    auto s = scalar_ssm(1.0, 1.0, 4);
    try {
        tighten(s, x_upper(1.5), unit_tube(4), zero_gain(s), TightenMode::box());
        FAIL("expected InfeasibleError");
    } catch (const InfeasibleError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("step 2") != std::string::npos);
        CHECK(msg.find("x<=max") != std::string::npos);
    }
    auto lenient = tighten(s, x_upper(1.5), unit_tube(4), zero_gain(s), TightenMode::box(), TightenOptions{false, 1e-9});
    CHECK(lenient.x.tightened_rhs(0, 4) == doctest::Approx(-2.5));
}

TEST_CASE("mode descriptions") {
    CHECK(TightenMode::none().describe() == "none");
    CHECK(TightenMode::box().describe() == "box");
    CHECK(TightenMode::with_budget(2.5).describe() == "budget:2.5");
}
