// Bundled test system. Feeder data: Baran & Wu 33-bus network (12.66 kV).
// Profiles are synthetic smooth day curves; amplitudes are listed in
// docs/reference_system.md.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "chpd/errors.hpp"
#include "chpd/system.hpp"

namespace chpd {

namespace {

struct FeederBranch {
    int from, to;  // 1-based bus numbers
    double r, x;   // ohm
};

constexpr std::array<FeederBranch, 32> kBranches{{
    {1, 2, 0.0922, 0.0470},   {2, 3, 0.4930, 0.2511},   {3, 4, 0.3660, 0.1864},   {4, 5, 0.3811, 0.1941},
    {5, 6, 0.8190, 0.7070},   {6, 7, 0.1872, 0.6188},   {7, 8, 0.7114, 0.2351},   {8, 9, 1.0300, 0.7400},
    {9, 10, 1.0440, 0.7400},  {10, 11, 0.1966, 0.0650}, {11, 12, 0.3744, 0.1238}, {12, 13, 1.4680, 1.1550},
    {13, 14, 0.5416, 0.7129}, {14, 15, 0.5910, 0.5260}, {15, 16, 0.7463, 0.5450}, {16, 17, 1.2890, 1.7210},
    {17, 18, 0.7320, 0.5740}, {2, 19, 0.1640, 0.1565},  {19, 20, 1.5042, 1.3554}, {20, 21, 0.4095, 0.4784},
    {21, 22, 0.7089, 0.9373}, {3, 23, 0.4512, 0.3083},  {23, 24, 0.8980, 0.7091}, {24, 25, 0.8960, 0.7011},
    {6, 26, 0.2030, 0.1034},  {26, 27, 0.2842, 0.1447}, {27, 28, 1.0590, 0.9337}, {28, 29, 0.8042, 0.7006},
    {29, 30, 0.5075, 0.2585}, {30, 31, 0.9744, 0.9630}, {31, 32, 0.3105, 0.3619}, {32, 33, 0.3410, 0.5302},
}};

// kW / kvar at buses 2..33.
constexpr std::array<std::array<double, 2>, 32> kLoads{{
    {100, 60}, {90, 40},   {120, 80},  {60, 30},   {60, 20},  {200, 100}, {200, 100}, {60, 20},
    {60, 20},  {45, 30},   {60, 35},   {60, 35},   {120, 80}, {60, 10},   {60, 20},   {60, 20},
    {90, 40},  {90, 40},   {90, 40},   {90, 40},   {90, 40},  {90, 50},   {420, 200}, {420, 200},
    {60, 25},  {60, 25},   {60, 20},   {120, 70},  {200, 600}, {150, 70}, {210, 100}, {60, 40},
}};

constexpr double kBaseKv = 12.66;

struct HeatPipeData {
    int from, to;
    double length, diameter;
};

constexpr std::array<double, 8> kHeatPeak{0.0, 0.30, 0.40, 0.50, 0.30, 0.50, 0.30, 0.50};
constexpr std::array<HeatPipeData, 7> kPipes{{
    {0, 1, 1200.0, 0.30}, {1, 2, 800.0, 0.15}, {2, 3, 600.0, 0.12}, {1, 4, 900.0, 0.15},
    {4, 5, 700.0, 0.12},  {0, 6, 1000.0, 0.15}, {6, 7, 800.0, 0.12},
}};

constexpr double kTotalFlow = 24.0;  // kg/s
constexpr double kSupplyInit = 85.0;
constexpr double kGround = 5.0;
constexpr double kPipeConductivity = 0.2;

double hour_of(int t, double step_seconds) {
    double h = (t + 0.5) * step_seconds / 3600.0;
    return std::fmod(h, 24.0);
}

double bump(double h, double center, double width) {
    double d = std::remainder(h - center, 24.0);
    return std::exp(-(d / width) * (d / width));
}

double pv_shape(double h) {
    if (h <= 6.0 || h >= 18.0) return 0.0;
    return std::sin(std::numbers::pi * (h - 6.0) / 12.0);
}

double electric_shape(double h) { return 0.62 + 0.18 * bump(h, 9.0, 2.5) + 0.32 * bump(h, 19.0, 2.5); }

double heat_shape(double h) { return 0.75 + 0.25 * std::cos(2.0 * std::numbers::pi * (h - 2.0) / 24.0); }

double price_shape(double h) { return 40.0 + 50.0 * bump(h, 10.0, 3.0) + 80.0 * bump(h, 19.0, 2.5); }

IntervalSeries banded(const Series& center, double rel) {
    IntervalSeries s;
    s.center = center;
    s.lower.resize(center.size());
    s.upper.resize(center.size());
    for (std::size_t t = 0; t < center.size(); ++t) {
        s.lower[t] = center[t] * (1.0 - rel);
        s.upper[t] = center[t] * (1.0 + rel);
    }
    return s;
}

}  // namespace

SystemModel build_reference_system(const ReferenceOptions& options) {
    if (options.horizon < 1) throw ConfigError("horizon", "horizon must be at least one step");
    if (!(options.step_seconds > 0.0)) throw ConfigError("step_seconds", "step length must be positive");

    SystemModel m;
    m.name = "reference-33bus-8node";
    m.horizon = options.horizon;
    m.step_seconds = options.step_seconds;
    m.base_mva = 1.0;
    const int T = m.horizon;
    const auto Tz = static_cast<std::size_t>(T);
    const double dt_h = m.step_hours();

    // Electric feeder.
    const double z_base = kBaseKv * kBaseKv / m.base_mva;
    m.electric.slack = 0;
    m.electric.buses.assign(33, Bus{0.9, 1.1});
    for (const auto& b : kBranches)
        m.electric.branches.push_back({b.from - 1, b.to - 1, {b.r / z_base, b.x / z_base}, 4.0});

    // Heating network.
    auto& heat = m.heat;
    heat.source = 0;
    heat.ground_temperature.assign(Tz, kGround);
    double peak_total = 0.0;
    for (double p : kHeatPeak) peak_total += p;
    for (double peak : kHeatPeak) {
        HeatNode node;
        node.outflow.assign(Tz, kTotalFlow * peak / peak_total);
        node.supply_min = 60.0;
        node.supply_max = 120.0;
        node.return_min = 30.0;
        node.return_max = 100.0;
        node.supply_init = kSupplyInit;
        heat.nodes.push_back(node);
    }
    // Return water starts at the steady drop of the t=0 load.
    const double drop0 = peak_total * heat_shape(hour_of(0, m.step_seconds)) * 1e6 /
                         (heat.water_heat_capacity * kTotalFlow);
    for (auto& node : heat.nodes) node.return_init = kSupplyInit - drop0;
    for (const auto& p : kPipes) {
        HeatPipe pipe;
        pipe.from = p.from;
        pipe.to = p.to;
        pipe.length = p.length;
        pipe.diameter = p.diameter;
        pipe.conductivity = kPipeConductivity;
        heat.pipes.push_back(pipe);
    }
    assign_pipe_flows(heat, T);

    // Devices.
    ChpUnit chp;
    chp.name = "chp1";
    chp.heat_ratio = 1.5;
    chp.p_min = 0.8;
    chp.p_max = 2.0;
    chp.q_min = -0.5;
    chp.q_max = 1.5;
    chp.ramp_p = std::min(1.2, 1.2 * dt_h * 3.0);
    chp.ramp_q = std::min(2.0, 1.5 * dt_h * 3.0);
    chp.cost = 60.0 * dt_h;
    chp.bus = 1;
    chp.heat_node = 0;
    m.chps.push_back(chp);

    HeatPump hp;
    hp.name = "hp1";
    hp.heat_ratio = 3.0;
    hp.power_factor = 0.95;
    hp.p_min = 0.0;
    hp.p_max = 0.5;
    hp.ramp_p = std::min(0.5, 0.6 * dt_h * 3.0);
    hp.cost = 5.0 * dt_h;
    hp.bus = 2;
    hp.heat_node = 0;
    m.heat_pumps.push_back(hp);

    BatteryUnit bu;
    bu.name = "bu1";
    bu.self_discharge = 1.0 - 0.0005 * dt_h;
    bu.eta_charge = 0.95;
    bu.eta_discharge = 0.95;
    bu.capacity = 20.0;
    bu.e_min = 0.1;
    bu.e_max = 0.9;
    bu.e_init = 0.5;
    bu.p_min = -1.5;
    bu.p_max = 1.5;
    bu.ramp_p = 3.0;
    bu.cost = 3.0 * dt_h;
    bu.bus = 1;
    m.batteries.push_back(bu);

    ThermalTank ts;
    ts.name = "ts1";
    ts.self_discharge = 1.0 - 0.001 * dt_h;
    ts.eta_charge = 0.98;
    ts.eta_discharge = 0.98;
    ts.capacity = 15.0;
    ts.e_min = 0.0;
    ts.e_max = 1.0;
    ts.e_init = 0.5;
    ts.h_min = -1.5;
    ts.h_max = 1.5;
    ts.ramp_h = 3.0;
    ts.cost = 1.0 * dt_h;
    ts.heat_node = 0;
    m.tanks.push_back(ts);

    m.pv_units.push_back({"pv18", 17});
    m.pv_units.push_back({"pv33", 32});

    m.grid.p_min = -1.0;
    m.grid.p_max = 3.0;
    m.grid.q_min = -1.0;
    m.grid.q_max = 3.0;
    m.grid.price.resize(Tz);
    for (int t = 0; t < T; ++t) m.grid.price[static_cast<std::size_t>(t)] = price_shape(hour_of(t, m.step_seconds)) * dt_h;

    // Forecast intervals.
    Series pv(Tz), el(Tz), ht(Tz);
    for (int t = 0; t < T; ++t) {
        double h = hour_of(t, m.step_seconds);
        pv[static_cast<std::size_t>(t)] = 0.5 * pv_shape(h);
        el[static_cast<std::size_t>(t)] = electric_shape(h);
        ht[static_cast<std::size_t>(t)] = heat_shape(h);
    }
    m.forecast.pv = {banded(pv, 0.2), banded(pv, 0.2)};
    m.forecast.p_load.assign(33, IntervalSeries::zero(T));
    m.forecast.q_load.assign(33, IntervalSeries::zero(T));
    for (std::size_t i = 0; i < kLoads.size(); ++i) {
        Series p(Tz), q(Tz);
        for (std::size_t t = 0; t < Tz; ++t) {
            p[t] = kLoads[i][0] / 1000.0 / m.base_mva * el[t];
            q[t] = kLoads[i][1] / 1000.0 / m.base_mva * el[t];
        }
        m.forecast.p_load[i + 1] = banded(p, 0.05);
        m.forecast.q_load[i + 1] = banded(q, 0.05);
    }
    m.forecast.heat_load.assign(kHeatPeak.size(), IntervalSeries::zero(T));
    for (std::size_t n = 0; n < kHeatPeak.size(); ++n) {
        if (kHeatPeak[n] == 0.0) continue;
        Series h(Tz);
        for (std::size_t t = 0; t < Tz; ++t) h[t] = kHeatPeak[n] * ht[t];
        m.forecast.heat_load[n] = banded(h, 0.08);
    }

    require_valid(m);
    return m;
}

}  // namespace chpd
