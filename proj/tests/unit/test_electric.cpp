#include "doctest.h"

#include <complex>

#include "chpd/electric.hpp"
#include "chpd/errors.hpp"
#include "chpd/system.hpp"
#include "test_systems.hpp"

using namespace chpd;
using cd = std::complex<double>;

namespace {

ElectricNetwork chain(int buses, cd z) {
    ElectricNetwork net;
    net.buses.resize(static_cast<std::size_t>(buses));
    for (int i = 0; i + 1 < buses; ++i) net.branches.push_back({i, i + 1, z, 10.0});
    return net;
}

Eigen::VectorXcd injections(int n, int bus, cd s) {
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(n);
    v(bus) = s;
    return v;
}

// Receiving-end voltage of one line feeding a load P + jQ from a 1 pu source:
// |V|^4 + (2(PR + QX) - 1)|V|^2 + (P^2 + Q^2)(R^2 + X^2) = 0.
double single_line_voltage(double P, double Q, double R, double X) {
    const double b = 2.0 * (P * R + Q * X) - 1.0;
    const double c = (P * P + Q * Q) * (R * R + X * X);
    return std::sqrt((-b + std::sqrt(b * b - 4.0 * c)) / 2.0);
}


}  // namespace

TEST_CASE("no load gives a flat profile") {
    auto net = chain(4, {0.02, 0.03});
    net.slack_voltage = {1.02, 0.0};
    auto op = nominal_operating_point(net, Eigen::VectorXcd::Zero(4));
    for (int i = 0; i < 4; ++i) CHECK(std::abs(op.voltage(i) - net.slack_voltage) < 1e-14);
    CHECK(branch_flows(net, op).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("single line against the closed-form quadratic") {
    auto net = chain(2, {0.01, 0.01});
    auto op = nominal_operating_point(net, injections(2, 1, {-0.1, 0.0}));
    CHECK(op.residual <= 1e-10);
    CHECK(std::abs(std::abs(op.voltage(1)) - single_line_voltage(0.1, 0.0, 0.01, 0.01)) <= 1e-8);

    auto op2 = nominal_operating_point(net, injections(2, 1, {-0.8, -0.3}));
    CHECK(std::abs(std::abs(op2.voltage(1)) - single_line_voltage(0.8, 0.3, 0.01, 0.01)) <= 1e-8);
}

TEST_CASE("overload does not converge") {
    auto net = chain(2, {0.1, 0.1});
    CHECK_THROWS_AS(nominal_operating_point(net, injections(2, 1, {-50.0, 0.0})), ConvergenceError);
}

TEST_CASE("reference feeder at nominal load") {
    auto m = build_reference_system({24, 3600.0});
    auto op = nominal_operating_point(m.electric, chpd::testing::reference_injections(m));
    CHECK(op.residual <= 1e-10);
    for (int i = 0; i < m.electric.bus_count(); ++i) {
        CHECK(std::abs(op.voltage(i)) > 0.9);
        CHECK(std::abs(op.voltage(i)) <= 1.0 + 1e-12);
    }
}

TEST_CASE("incidence and impedance structure") {
    auto net = chain(3, {0.01, 0.02});
    Eigen::MatrixXd inc = incidence_matrix(net);
    CHECK(inc.rows() == 3);
    CHECK(inc.cols() == 2);
    CHECK(inc(0, 0) == 1.0);
    CHECK(inc(1, 0) == -1.0);
    CHECK(inc.colwise().sum().cwiseAbs().maxCoeff() == 0.0);
    Eigen::MatrixXcd z = zbus_matrix(net);
    CHECK(z.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(z.col(0).cwiseAbs().maxCoeff() == 0.0);
    // Radial feeder: the transfer impedance is the shared path impedance.
    CHECK(std::abs(z(1, 2) - cd(0.01, 0.02)) < 1e-14);
    CHECK(std::abs(z(2, 2) - cd(0.02, 0.04)) < 1e-14);
}

TEST_CASE("branch flow map") {
    SUBCASE("single line carries the leaf injection") {
        auto net = chain(2, {0.001, 0.001});
        auto op = nominal_operating_point(net, injections(2, 1, {1.0, 0.0}));
        auto flows = branch_flows(net, op);
        CHECK(flows(0) < 0.0);  // toward the slack
        CHECK(std::abs(std::abs(flows(0)) - 1.0) <= 2e-3);
    }
    SUBCASE("zero injections give zero flows") {
        auto net = chain(3, {0.01, 0.01});
        auto op = nominal_operating_point(net, Eigen::VectorXcd::Zero(3));
        auto map = branch_flow_map(net, op);
        CHECK(map.apply(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)).cwiseAbs().maxCoeff() < 1e-14);
    }
    SUBCASE("three-bus chain against exact flows") {
        auto net = chain(3, {0.005, 0.005});
        auto op0 = nominal_operating_point(net, Eigen::VectorXcd::Zero(3));
        auto map = branch_flow_map(net, op0);
        Eigen::VectorXd p = Eigen::VectorXd::Zero(3), q = Eigen::VectorXd::Zero(3);
        p(2) = 1.0;
        Eigen::VectorXd lin = map.apply(p, q);
        auto exact_op = nominal_operating_point(net, injections(3, 2, {1.0, 0.0}));
        Eigen::VectorXd exact = branch_flows(net, exact_op);
        // Losses: sum of R |I|^2 over the lines.
        double losses = 0.0;
        for (int b = 0; b < 2; ++b) {
            const cd i = (exact_op.voltage(b) - exact_op.voltage(b + 1)) / net.branches[static_cast<std::size_t>(b)].impedance;
            losses += 0.005 * std::norm(i);
        }
        for (int b = 0; b < 2; ++b) {
            CHECK(std::abs(std::abs(lin(b)) - 1.0) <= 1e-12);
            CHECK(std::abs(lin(b) - exact(b)) <= losses + 1e-12);
        }
    }
    SUBCASE("the map reproduces the operating point") {
        auto m = build_reference_system({2, 3600.0});
        auto op = nominal_operating_point(m.electric, chpd::testing::reference_injections(m));
        auto map = branch_flow_map(m.electric, op);
        Eigen::VectorXd lin = map.apply(map.p0, map.q0);
        CHECK((lin - branch_flows(m.electric, op)).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("voltage sensitivities at no load") {
    const double R = 0.03, X = 0.05;
    auto net = chain(2, {R, X});
    auto op = nominal_operating_point(net, Eigen::VectorXcd::Zero(2));
    auto s = voltage_sensitivities(net, op);
    CHECK(s.dv_dp(1, 1) == doctest::Approx(R).epsilon(1e-12));
    CHECK(s.dv_dq(1, 1) == doctest::Approx(X).epsilon(1e-12));
    CHECK(s.dv_dp.row(0).cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.dv_dq.row(0).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("voltage sensitivities match finite differences on the 33-bus feeder") {
    auto m = build_reference_system({2, 3600.0});
    const auto& net = m.electric;
    const int n = net.bus_count();
    Eigen::VectorXcd s0 = chpd::testing::reference_injections(m);
    auto op = nominal_operating_point(net, s0, 200, 1e-14);
    auto sens = voltage_sensitivities(net, op);
    CHECK(sens.dv_dp.row(net.slack).cwiseAbs().maxCoeff() == 0.0);

    const double h = 1e-5;
    double worst = 0.0;
    for (int k = 0; k < n; ++k) {
        if (k == net.slack) continue;
        for (int part = 0; part < 2; ++part) {
            const cd step = part == 0 ? cd(h, 0.0) : cd(0.0, h);
            Eigen::VectorXcd up = s0, down = s0;
            up(k) += step;
            down(k) -= step;
            Eigen::VectorXd vu = nominal_operating_point(net, up, 200, 1e-14).voltage.cwiseAbs();
            Eigen::VectorXd vd = nominal_operating_point(net, down, 200, 1e-14).voltage.cwiseAbs();
            Eigen::VectorXd fd = (vu - vd) / (2.0 * h);
            const Eigen::VectorXd an = part == 0 ? Eigen::VectorXd(sens.dv_dp.col(k)) : Eigen::VectorXd(sens.dv_dq.col(k));
            for (int i = 0; i < n; ++i) {
                if (i == net.slack) continue;
                worst = std::max(worst, std::abs(an(i) - fd(i)) / std::max(std::abs(fd(i)), 1e-12));
            }
        }
    }
    CHECK(worst <= 1e-3);
}
