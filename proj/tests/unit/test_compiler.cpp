#include "doctest.h"

#include <cmath>
#include <random>

#include "chpd/compiler.hpp"
#include "chpd/dispatch.hpp"
#include "chpd/errors.hpp"
#include "test_systems.hpp"

using namespace chpd;

namespace {

int find_row(const PolyhedronH& p, const std::string& label) {
    for (int i = 0; i < p.rows(); ++i)
        if (p.labels[static_cast<std::size_t>(i)] == label) return i;
    return -1;
}

}  // namespace

TEST_CASE("single battery elimination") {
    SystemModel m = chpd::testing::minimal_system(3);
    auto ssm = compile_state_space(m);
    auto d = ssm.dims();
    CHECK(d.n_x == 1);
    CHECK(ssm.A(0, 0) == 1.0);
    const int load = ssm.manifest.index_of("w", "P_D[0]");
    REQUIRE(load >= 0);
    // One hour steps, capacity 2 pu h: each pu of load drains 0.5 of capacity.
    CHECK(ssm.D(0, load) == doctest::Approx(-1.0 / 2.0));
    const int grid = ssm.manifest.index_of("u", "P_G");
    REQUIRE(grid >= 0);
    CHECK(ssm.B(0, grid) == doctest::Approx(0.5));
}

TEST_CASE("no storage cannot close the balance") {
    SystemModel m = chpd::testing::minimal_system(2);
    m.batteries.clear();
    CHECK_THROWS_AS(compile_state_space(m), StructuralError);
}

TEST_CASE("manifest indices round trip") {
    auto m = build_reference_system({6, 3600.0});
    auto ssm = compile_state_space(m);
    auto d = ssm.dims();
    CHECK(d.n_x == 2);
    CHECK(d.n_u == 4);
    CHECK(d.n_y == 83);
    CHECK(d.n_w == 76);
    const auto& man = ssm.manifest;
    for (const auto& [kind, names] : {std::pair{"x", &man.x}, {"u", &man.u}, {"y", &man.y}, {"w", &man.w}})
        for (std::size_t i = 0; i < names->size(); ++i)
            CHECK(man.index_of(kind, (*names)[i]) == static_cast<int>(i));
    CHECK(man.index_of("y", "nonexistent") == -1);
    CHECK(man.to_json().find("E_BU[") != std::string::npos);
}

TEST_CASE("constraint rows") {
    auto m = build_reference_system({6, 3600.0});
    auto ssm = compile_state_space(m);
    auto c = compile_constraints(m, ssm);
    const int ebu = ssm.manifest.index_of("x", "E_BU[bu1]");
    REQUIRE(ebu >= 0);
    const int hi = find_row(c.x, "E_BU[bu1]<=max"), lo = find_row(c.x, "E_BU[bu1]>=min");
    REQUIRE(hi >= 0);
    REQUIRE(lo >= 0);
    CHECK(c.x.S(hi, ebu) == 1.0);
    CHECK(c.x.r(hi) == doctest::Approx(0.9));
    CHECK(c.x.S(lo, ebu) == -1.0);
    CHECK(c.x.r(lo) == doctest::Approx(-0.1));
    CHECK(c.x.opposite_of(hi) == lo);

    const int p = find_row(c.u, "P_CHP[chp1]<=max"), q = find_row(c.u, "P_CHP[chp1]>=min");
    REQUIRE(p >= 0);
    REQUIRE(q >= 0);
    CHECK(c.u.r(p) == doctest::Approx(2.0));
    CHECK(c.u.r(q) == doctest::Approx(-0.8));

    // Every bounded quantity contributes one pair of rows.
    int unlimited = 0;
    for (const auto& b : m.electric.branches) unlimited += std::isinf(b.flow_limit) ? 1 : 0;
    const auto d = ssm.dims();
    CHECK(c.x.rows() == 2 * d.n_x);
    CHECK(c.u.rows() == 2 * d.n_u);
    CHECK(c.y.rows() == 2 * (d.n_y - unlimited));
    CHECK(c.du.rows() == 2 * 3);  // CHP active and reactive, heat pump
    CHECK(c.dy.rows() == 2 * 2);  // battery and tank flows
    for (const PolyhedronH* f : {&c.x, &c.u, &c.y, &c.du, &c.dy})
        for (int i = 0; i < f->rows(); ++i) CHECK(f->opposite_of(i) >= 0);
}

TEST_CASE("uncertainty tube normalization") {
    Eigen::MatrixXd lo(3, 1), c(3, 1), hi(3, 1);
    lo << 0.2, -1.0, 0.0;
    c << 0.2, 0.0, 0.0;
    hi << 0.2, 1.0, 2.0;
    auto tube = make_tube(lo, c, hi);
    CHECK(tube.half_width(0, 0) == 0.0);
    CHECK(tube.offset(0, 0) == 0.0);
    CHECK(tube.half_width(1, 0) == 1.0);
    CHECK(tube.offset(1, 0) == 0.0);
    CHECK(tube.offset(2, 0) == doctest::Approx(1.0));

    Eigen::MatrixXd bad = hi;
    bad(1, 0) = -2.0;
    CHECK_THROWS_AS(make_tube(lo, c, bad), InfeasibleError);
    CHECK_THROWS_AS(make_tube(lo, c, hi, -1.0), Error);

    auto m = build_reference_system({4, 3600.0});
    for (auto* group : {&m.forecast.pv, &m.forecast.p_load, &m.forecast.q_load, &m.forecast.heat_load})
        for (auto& s : *group) s.lower = s.upper = s.center;
    CHECK(compile_uncertainty_tube(m).zero_width());
}

TEST_CASE("lifted output maps are linear") {
    auto m = build_reference_system({8, 3600.0});
    auto ssm = compile_state_space(m);
    const auto d = ssm.dims();
    std::mt19937_64 rng(1);
    Eigen::MatrixXd u1 = chpd::testing::random_matrix(rng, d.n_u, 8), u2 = chpd::testing::random_matrix(rng, d.n_u, 8);
    Eigen::MatrixXd w1 = chpd::testing::random_matrix(rng, d.n_w, 8), w2 = chpd::testing::random_matrix(rng, d.n_w, 8);
    const auto& o = ssm.outputs;
    Eigen::MatrixXd sum = o.evaluate_linear(u1 + 2.5 * u2, w1 + 2.5 * w2);
    Eigen::MatrixXd parts = o.evaluate_linear(u1, w1) + 2.5 * o.evaluate_linear(u2, w2);
    CHECK((sum - parts).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + parts.cwiseAbs().maxCoeff()));
    CHECK((o.evaluate(u1, w1) - o.evaluate_linear(u1, w1) - o.offset).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("lossless storage conserves energy") {
    auto m = build_reference_system({24, 3600.0});
    for (auto& b : m.batteries) {
        b.eta_charge = b.eta_discharge = b.self_discharge = 1.0;
        b.linear_efficiency.reset();
    }
    for (auto& s : m.tanks) {
        s.eta_charge = s.eta_discharge = s.self_discharge = 1.0;
        s.linear_efficiency.reset();
    }
    auto ssm = compile_state_space(m);
    auto tube = compile_uncertainty_tube(m);
    std::mt19937_64 rng(8);
    Eigen::MatrixXd u = Eigen::MatrixXd::Zero(ssm.dims().n_u, 24);
    for (int t = 0; t < 24; ++t) {
        u(ssm.manifest.u_chp_p[0], t) = chpd::testing::uniform(rng, 0.8, 2.0);
        u(ssm.manifest.u_grid_p, t) = chpd::testing::uniform(rng, 0.0, 2.0);
        u(ssm.manifest.u_hp_p[0], t) = chpd::testing::uniform(rng, 0.0, 0.5);
    }
    Eigen::MatrixXd x = ssm.propagate(u, tube.center);
    Eigen::MatrixXd y = ssm.outputs.evaluate(u, tube.center);
    const double h = m.step_hours();
    const double bu_flow = y.row(ssm.manifest.y_bu[0]).sum() * h;
    const double ts_flow = y.row(ssm.manifest.y_ts[0]).sum() * h;
    CHECK(m.batteries[0].capacity * (x(0, 24) - x(0, 0)) == doctest::Approx(bu_flow).epsilon(1e-12));
    CHECK(m.tanks[0].capacity * (x(1, 24) - x(1, 0)) == doctest::Approx(ts_flow).epsilon(1e-12));
}

TEST_CASE("balances hold along a feasible dispatch") {
    auto m = build_reference_system({24, 3600.0});
    auto ssm = compile_state_space(m);
    auto c = compile_constraints(m, ssm);
    auto tube = compile_uncertainty_tube(m);
    auto sol = solve_dispatch(ssm, untightened(ssm, c), CostModel::from_system(m), tube.center);
    REQUIRE(sol.status == LpStatus::optimal);
    CHECK(balance_residual(m, ssm, sol.u, tube.center, sol.y) <= 1e-9);
    // And at the extremes of the tube.
    CHECK(balance_residual(m, ssm, sol.u, tube.upper, ssm.outputs.evaluate(sol.u, tube.upper)) <= 1e-9);
}
