#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "chpd/errors.hpp"
#include "chpd/heat.hpp"
#include "chpd/system.hpp"

using namespace chpd;

namespace {

// Source 0 feeding a chain 0 -> 1 -> ... -> n-1; only the last node draws water.
HeatNetwork chain(int nodes, int T, double flow, double pipe_mass_kg, double conductivity = 0.0) {
    HeatNetwork net;
    net.source = 0;
    net.ground_temperature = Series(static_cast<std::size_t>(T), 0.0);
    for (int i = 0; i < nodes; ++i) {
        HeatNode n;
        n.supply_min = 0.0;
        n.supply_max = 200.0;
        n.return_min = 0.0;
        n.return_max = 200.0;
        n.outflow = Series(static_cast<std::size_t>(T), i == nodes - 1 ? flow : 0.0);
        net.nodes.push_back(n);
    }
    for (int i = 0; i + 1 < nodes; ++i) {
        HeatPipe p;
        p.from = i;
        p.to = i + 1;
        p.diameter = 0.5;
        p.length = pipe_mass_kg / (net.water_density * std::numbers::pi * p.diameter * p.diameter / 4.0);
        p.conductivity = conductivity;
        net.pipes.push_back(p);
    }
    assign_pipe_flows(net, T);
    return net;
}

}  // namespace

TEST_CASE("transport delays by enumeration") {
    CHECK(compute_delays(chain(2, 4, 1.0, 500.0), 300.0, 4).at(0, 3) == 1);
    CHECK(compute_delays(chain(2, 4, 10.0, 500.0), 300.0, 4).at(0, 3) == 0);
    CHECK(compute_delays(chain(2, 4, 1.0, 0.0), 300.0, 4).at(0, 0) == 0);
    CHECK(compute_delays(chain(2, 4, 1.0, 600.0), 300.0, 4).at(0, 2) == 2);  // 600 is not > 600

    // Flow that rises over the horizon: later steps look back over fewer, faster steps.
    auto net = chain(2, 3, 1.0, 500.0);
    net.pipes[0].mass_flow = {1.0, 1.0, 5.0};
    auto d = compute_delays(net, 300.0, 3);
    CHECK(d.at(0, 0) == 1);
    CHECK(d.at(0, 2) == 0);

    auto dry = chain(2, 3, 1.0, 500.0);
    dry.pipes[0].mass_flow = {0.0, 0.0, 0.0};
    CHECK_THROWS_AS(compute_delays(dry, 300.0, 3), InfeasibleError);
}

TEST_CASE("delays never grow when flows are scaled up") {
    auto m = build_reference_system({24, 3600.0});
    auto base = compute_delays(m.heat, m.step_seconds, 24);
    HeatNetwork fast = m.heat;
    for (auto& p : fast.pipes)
        for (auto& f : p.mass_flow) f *= 1.7;
    auto scaled = compute_delays(fast, m.step_seconds, 24);
    for (std::size_t p = 0; p < m.heat.pipes.size(); ++p)
        for (int t = 0; t < 24; ++t) CHECK(scaled.at(static_cast<int>(p), t) <= base.at(static_cast<int>(p), t));
}

TEST_CASE("attenuation factor") {
    auto net = chain(2, 2, 1.0, 500.0, 0.5);
    CHECK(attenuation(net, 0, 300.0, 0) == 1.0);
    const double f = attenuation(net, 0, 300.0, 3);
    CHECK(f > 0.0);
    CHECK(f < 1.0);
    auto lossless = chain(2, 2, 1.0, 500.0, 0.0);
    CHECK(attenuation(lossless, 0, 300.0, 3) == 1.0);
}

TEST_CASE("lossless instantaneous pipes copy the inlet temperature") {
    const int T = 5;
    auto net = chain(4, T, 2.0, 0.0);
    for (auto& n : net.nodes) {
        n.supply_init = 70.0;
        n.return_init = 50.0;
    }
    auto d = compute_delays(net, 300.0, T);
    auto maps = temperature_maps(net, d, 300.0, T);
    std::mt19937_64 rng(4);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(maps.inputs(), T);
    for (int t = 0; t < T; ++t) z(0, t) = std::uniform_real_distribution<double>(0.0, 0.2)(rng);
    Eigen::MatrixXd temps = maps.evaluate(z);
    for (int t = 0; t < T; ++t)
        for (int j = 1; j < 4; ++j) CHECK(temps(j, t) == doctest::Approx(temps(0, t)).epsilon(1e-14));
}

TEST_CASE("single pipe halves the excess temperature over two steps") {
    const int T = 4;
    const double dt = 300.0;
    auto net = chain(2, T, 1.0, 700.0);
    // Attenuation exp(-k dt tau / (A rho c)) = 0.5 at tau = 2.
    const auto& p = net.pipes[0];
    net.pipes[0].conductivity = std::log(2.0) * p.area() * net.water_density * net.water_heat_capacity / (2.0 * dt);
    net.nodes[0].return_init = 80.0;
    net.nodes[0].supply_init = 80.0;
    auto d = compute_delays(net, dt, T);
    REQUIRE(d.at(0, 2) == 2);
    CHECK(attenuation(net, 0, dt, 2) == doctest::Approx(0.5));
    auto maps = temperature_maps(net, d, dt, T);
    Eigen::MatrixXd temps = maps.evaluate(Eigen::MatrixXd::Zero(maps.inputs(), T));
    CHECK(temps(0, 0) == doctest::Approx(80.0));
    CHECK(temps(1, 2) == doctest::Approx(40.0));
}

TEST_CASE("source heating raises the supply over the previous return") {
    const int T = 2;
    auto net = chain(2, T, 23.9, 0.0);
    net.water_heat_capacity = 4182.0;
    net.nodes[0].return_init = 50.0;
    auto maps = temperature_maps(net, compute_delays(net, 300.0, T), 300.0, T);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(maps.inputs(), T);
    z(0, 0) = 1.0;
    Eigen::MatrixXd temps = maps.evaluate(z);
    CHECK(temps(0, 0) - 50.0 == doctest::Approx(10.0).epsilon(1e-3));
    CHECK(temps(0, 0) - 50.0 == doctest::Approx(1e6 / (4182.0 * 23.9)));
}

TEST_CASE("ground-temperature steady state is an equilibrium") {
    auto m = build_reference_system({12, 3600.0});
    HeatNetwork net = m.heat;
    const double g = 5.0;
    for (auto& x : net.ground_temperature) x = g;
    for (auto& n : net.nodes) n.supply_init = n.return_init = g;
    auto maps = temperature_maps(net, compute_delays(net, m.step_seconds, 12), m.step_seconds, 12);
    Eigen::MatrixXd temps = maps.evaluate(Eigen::MatrixXd::Zero(maps.inputs(), 12));
    CHECK((temps.array() - g).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("nodal energy balances hold for any injection pattern") {
    auto m = build_reference_system({24, 3600.0});
    auto d = compute_delays(m.heat, m.step_seconds, 24);
    auto maps = temperature_maps(m.heat, d, m.step_seconds, 24);
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::MatrixXd z(maps.inputs(), 24);
        for (int i = 0; i < z.rows(); ++i)
            for (int t = 0; t < 24; ++t) z(i, t) = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        Eigen::MatrixXd temps = maps.evaluate(z);
        CHECK(heat_balance_residual(m.heat, d, m.step_seconds, z, temps) <= 1e-9);
    }
}

TEST_CASE("cyclic supply topology is rejected") {
    auto net = chain(3, 2, 1.0, 100.0);
    HeatPipe back = net.pipes[0];
    back.from = 2;
    back.to = 1;
    net.pipes.push_back(back);
    DelayTable d;
    d.tau.assign(net.pipes.size(), std::vector<int>(2, 0));
    CHECK_THROWS_AS(temperature_maps(net, d, 300.0, 2), StructuralError);
}
