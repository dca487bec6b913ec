#pragma once

// Physical description of a combined heat-and-power system: devices, the
// electric distribution network, the district heating network, forecast
// intervals and prices. Units: electric quantities in per-unit on
// `SystemModel::base_mva`, heat flows in MW, stored energy as a fraction of
// capacity, temperatures in degC, mass flows in kg/s.

#include <complex>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chpd {

using Series = std::vector<double>;

/// Prediction interval of one uncertain quantity over the horizon.
struct IntervalSeries {
    Series lower;
    Series center;
    Series upper;

    static IntervalSeries constant(double value, int horizon);
    static IntervalSeries zero(int horizon) { return constant(0.0, horizon); }
    bool operator==(const IntervalSeries&) const = default;
};

struct ChpUnit {
    std::string name;
    double heat_ratio = 1.0;  // H = heat_ratio * P  (MW per pu)
    double p_min = 0.0, p_max = 0.0;
    double q_min = 0.0, q_max = 0.0;
    double ramp_p = 0.0, ramp_q = 0.0;  // per step
    double cost = 0.0;                  // $ per pu per step
    int bus = 0;
    int heat_node = 0;
    bool operator==(const ChpUnit&) const = default;
};

struct HeatPump {
    std::string name;
    double heat_ratio = 1.0;    // H = heat_ratio * P
    double power_factor = 1.0;  // Q = sqrt(1 - pf^2) / pf * P
    double p_min = 0.0, p_max = 0.0;
    double ramp_p = 0.0;
    double cost = 0.0;
    int bus = 0;
    int heat_node = 0;
    bool operator==(const HeatPump&) const = default;
};

struct BatteryUnit {
    std::string name;
    double self_discharge = 1.0;  // zeta, retention factor per step
    double eta_charge = 1.0, eta_discharge = 1.0;
    // Single efficiency used by the linear model; defaults to the
    // geometric mean of the charge/discharge efficiencies.
    std::optional<double> linear_efficiency;
    double capacity = 1.0;  // pu * h
    double e_min = 0.0, e_max = 1.0, e_init = 0.5;  // fraction of capacity
    double p_min = 0.0, p_max = 0.0;  // charging positive
    double ramp_p = 0.0;
    double cost = 0.0;
    double balance_share = 1.0;  // share of the active-power residual
    int bus = 0;

    double model_efficiency() const;
    bool operator==(const BatteryUnit&) const = default;
};

struct ThermalTank {
    std::string name;
    double self_discharge = 1.0;
    double eta_charge = 1.0, eta_discharge = 1.0;
    std::optional<double> linear_efficiency;
    double capacity = 1.0;  // MWh
    double e_min = 0.0, e_max = 1.0, e_init = 0.5;
    double h_min = 0.0, h_max = 0.0;  // MW, charging positive
    double ramp_h = 0.0;
    double cost = 0.0;
    double balance_share = 1.0;
    int heat_node = 0;

    double model_efficiency() const;
    bool operator==(const ThermalTank&) const = default;
};

struct PvUnit {
    std::string name;
    int bus = 0;
    bool operator==(const PvUnit&) const = default;
};

struct GridConnection {
    double p_min = 0.0, p_max = 0.0;
    double q_min = 0.0, q_max = 0.0;
    Series price;  // $ per pu per step
    bool operator==(const GridConnection&) const = default;
};

struct Bus {
    double v_min = 0.9, v_max = 1.1;
    bool operator==(const Bus&) const = default;
};

struct Branch {
    int from = 0, to = 0;
    std::complex<double> impedance;  // pu
    double flow_limit = 0.0;         // pu active power, +inf when unlimited
    bool operator==(const Branch&) const = default;
};

struct ElectricNetwork {
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    int slack = 0;
    std::complex<double> slack_voltage{1.0, 0.0};

    int bus_count() const { return static_cast<int>(buses.size()); }
    bool operator==(const ElectricNetwork&) const = default;
};

struct HeatNode {
    double supply_min = 0.0, supply_max = 0.0;
    double return_min = 0.0, return_max = 0.0;
    Series outflow;  // m_ot, kg/s per step
    double supply_init = 0.0, return_init = 0.0;
    bool operator==(const HeatNode&) const = default;
};

struct HeatPipe {
    int from = 0, to = 0;  // supply-network orientation
    double length = 0.0;        // m
    double diameter = 0.0;      // m
    double conductivity = 0.0;  // W/(m K)
    Series mass_flow;           // kg/s per step, derived from node outflows

    double area() const;
    bool operator==(const HeatPipe&) const = default;
};

struct HeatNetwork {
    std::vector<HeatNode> nodes;
    std::vector<HeatPipe> pipes;
    int source = 0;
    Series ground_temperature;
    double water_heat_capacity = 4182.0;  // J/(kg K)
    double water_density = 1000.0;        // kg/m^3

    bool empty() const { return nodes.empty(); }
    int node_count() const { return static_cast<int>(nodes.size()); }
    /// Mass injected at the source, m_in(t).
    double source_inflow(int t) const;
    bool operator==(const HeatNetwork&) const = default;
};

/// Fills every pipe's mass-flow schedule from the node outflows of its
/// downstream subtree. Requires a tree rooted at `net.source`.
void assign_pipe_flows(HeatNetwork& net, int horizon);

struct ForecastSeries {
    std::vector<IntervalSeries> pv;         // per PV unit
    std::vector<IntervalSeries> p_load;     // per electric bus
    std::vector<IntervalSeries> q_load;     // per electric bus
    std::vector<IntervalSeries> heat_load;  // per heat node, MW
    bool operator==(const ForecastSeries&) const = default;
};

struct FeedbackSettings {
    std::vector<std::vector<double>> gain;  // n_u x n_x; empty means K = 0
    double spectral_radius_cap = 1.1;
    bool operator==(const FeedbackSettings&) const = default;
};

struct SystemModel {
    std::string name;
    int horizon = 1;
    double step_seconds = 3600.0;
    double base_mva = 1.0;

    std::vector<ChpUnit> chps;
    std::vector<HeatPump> heat_pumps;
    std::vector<BatteryUnit> batteries;
    std::vector<ThermalTank> tanks;
    std::vector<PvUnit> pv_units;
    GridConnection grid;
    ElectricNetwork electric;
    HeatNetwork heat;
    ForecastSeries forecast;
    FeedbackSettings feedback;

    double step_hours() const { return step_seconds / 3600.0; }
    bool operator==(const SystemModel&) const = default;
};

struct Diagnostic {
    std::string location;   // e.g. "batteries[0]"
    std::string invariant;  // short invariant id, e.g. "energy-bounds"
    std::string message;
};

/// Checks every type invariant; an empty result means the model is valid.
std::vector<Diagnostic> validate_system(const SystemModel& model);

/// Throws ConfigError listing the first diagnostic when the model is invalid.
void require_valid(const SystemModel& model);

SystemModel parse_system(std::string_view document);
SystemModel load_system(const std::filesystem::path& path);
std::string to_document(const SystemModel& model);
void save_system(const SystemModel& model, const std::filesystem::path& path);

struct ReferenceOptions {
    int horizon = 288;
    double step_seconds = 300.0;
};

/// Bundled test system: 33-bus radial feeder, 8-node heating network, one
/// CHP, one heat pump, one battery, one tank, two PV units and synthetic
/// winter-day profiles (see docs/reference_system.md).
SystemModel build_reference_system(const ReferenceOptions& options = {});

}  // namespace chpd
