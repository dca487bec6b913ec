#include "chpd/system.hpp"

#include <cmath>
#include <numbers>
#include <queue>

#include "chpd/errors.hpp"

namespace chpd {

IntervalSeries IntervalSeries::constant(double value, int horizon) {
    Series s(static_cast<std::size_t>(horizon), value);
    return {s, s, s};
}

double BatteryUnit::model_efficiency() const {
    return linear_efficiency.value_or(std::sqrt(eta_charge * eta_discharge));
}

double ThermalTank::model_efficiency() const {
    return linear_efficiency.value_or(std::sqrt(eta_charge * eta_discharge));
}

double HeatPipe::area() const { return std::numbers::pi * diameter * diameter / 4.0; }

double HeatNetwork::source_inflow(int t) const {
    double total = 0.0;
    for (const auto& node : nodes) total += node.outflow.at(static_cast<std::size_t>(t));
    return total;
}

namespace {

// Children lists of a supply tree; empty optional when the pipes do not form
// a tree rooted at `root`.
std::optional<std::vector<std::vector<int>>> tree_children(int node_count,
                                                           const std::vector<HeatPipe>& pipes,
                                                           int root) {
    if (root < 0 || root >= node_count) return std::nullopt;
    if (static_cast<int>(pipes.size()) != node_count - 1) return std::nullopt;
    std::vector<std::vector<int>> children(static_cast<std::size_t>(node_count));
    std::vector<int> indegree(static_cast<std::size_t>(node_count), 0);
    for (int p = 0; p < static_cast<int>(pipes.size()); ++p) {
        const auto& pipe = pipes[static_cast<std::size_t>(p)];
        if (pipe.from < 0 || pipe.from >= node_count || pipe.to < 0 || pipe.to >= node_count)
            return std::nullopt;
        children[static_cast<std::size_t>(pipe.from)].push_back(p);
        ++indegree[static_cast<std::size_t>(pipe.to)];
    }
    if (indegree[static_cast<std::size_t>(root)] != 0) return std::nullopt;
    std::vector<bool> seen(static_cast<std::size_t>(node_count), false);
    std::queue<int> queue;
    queue.push(root);
    seen[static_cast<std::size_t>(root)] = true;
    int visited = 1;
    while (!queue.empty()) {
        int n = queue.front();
        queue.pop();
        for (int p : children[static_cast<std::size_t>(n)]) {
            int to = pipes[static_cast<std::size_t>(p)].to;
            if (seen[static_cast<std::size_t>(to)]) return std::nullopt;
            seen[static_cast<std::size_t>(to)] = true;
            ++visited;
            queue.push(to);
        }
    }
    if (visited != node_count) return std::nullopt;
    return children;
}

class Checker {
public:
    explicit Checker(std::vector<Diagnostic>& out) : out_(out) {}

    bool require(bool ok, std::string location, std::string invariant, std::string message) {
        if (!ok) out_.push_back({std::move(location), std::move(invariant), std::move(message)});
        return ok;
    }

private:
    std::vector<Diagnostic>& out_;
};

std::string at(std::string_view prefix, std::size_t i) {
    return std::string(prefix) + "[" + std::to_string(i) + "]";
}

void check_interval_series(Checker& c, const IntervalSeries& s, const std::string& loc, int horizon) {
    const auto T = static_cast<std::size_t>(horizon);
    if (!c.require(s.lower.size() == T && s.center.size() == T && s.upper.size() == T, loc,
                   "series-length", "interval series length must equal the horizon"))
        return;
    for (std::size_t t = 0; t < T; ++t) {
        bool finite = std::isfinite(s.lower[t]) && std::isfinite(s.center[t]) && std::isfinite(s.upper[t]);
        if (!c.require(finite, loc, "finite", "non-finite forecast value at t=" + std::to_string(t)))
            continue;
        c.require(s.lower[t] <= s.center[t] && s.center[t] <= s.upper[t], loc, "interval-order",
                  "w_min <= w_center <= w_max violated at t=" + std::to_string(t));
    }
}

void check_storage(Checker& c, const std::string& loc, double zeta, double eta_ch, double eta_dch,
                   std::optional<double> eta_lin, double capacity, double e_min, double e_max,
                   double e_init, double lo, double hi, double ramp, double cost, double share) {
    c.require(zeta > 0.0 && zeta <= 1.0, loc, "self-discharge", "self-discharge factor must lie in (0, 1]");
    c.require(eta_ch > 0.0 && eta_ch <= 1.0 && eta_dch > 0.0 && eta_dch <= 1.0, loc, "efficiency",
              "charge/discharge efficiencies must lie in (0, 1]");
    if (eta_lin)
        c.require(*eta_lin > 0.0, loc, "efficiency", "linear efficiency must be positive");
    c.require(capacity > 0.0, loc, "capacity", "capacity must be positive");
    c.require(e_min <= e_init && e_init <= e_max, loc, "energy-bounds",
              "energy bounds must satisfy E_min <= E_0 <= E_max");
    c.require(lo <= 0.0 && 0.0 <= hi, loc, "power-bounds", "power bounds must satisfy P_min <= 0 <= P_max");
    c.require(ramp >= 0.0, loc, "ramp", "ramp limit must be non-negative");
    c.require(cost >= 0.0, loc, "cost", "maintenance cost must be non-negative");
    c.require(share > 0.0, loc, "balance-share", "balance share must be positive");
}

bool electric_connected(const ElectricNetwork& net) {
    const int n = net.bus_count();
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(n));
    for (const auto& b : net.branches) {
        adj[static_cast<std::size_t>(b.from)].push_back(b.to);
        adj[static_cast<std::size_t>(b.to)].push_back(b.from);
    }
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<int> queue;
    queue.push(net.slack);
    seen[static_cast<std::size_t>(net.slack)] = true;
    int count = 1;
    while (!queue.empty()) {
        int v = queue.front();
        queue.pop();
        for (int w : adj[static_cast<std::size_t>(v)])
            if (!seen[static_cast<std::size_t>(w)]) {
                seen[static_cast<std::size_t>(w)] = true;
                ++count;
                queue.push(w);
            }
    }
    return count == n;
}

}  // namespace

void assign_pipe_flows(HeatNetwork& net, int horizon) {
    auto children = tree_children(net.node_count(), net.pipes, net.source);
    if (!children) throw ConfigError("heat_network.pipes", "supply network is not a tree rooted at the source");
    const auto T = static_cast<std::size_t>(horizon);
    // Post-order accumulation of subtree outflows.
    std::vector<int> order;
    std::vector<int> stack{net.source};
    while (!stack.empty()) {
        int n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (int p : (*children)[static_cast<std::size_t>(n)]) stack.push_back(net.pipes[static_cast<std::size_t>(p)].to);
    }
    std::vector<Series> subtree(net.nodes.size(), Series(T, 0.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        auto n = static_cast<std::size_t>(*it);
        const auto& outflow = net.nodes[n].outflow;
        if (outflow.size() != T)
            throw ConfigError(at("heat_network.nodes", n) + ".outflow", "series length must equal the horizon");
        for (std::size_t t = 0; t < T; ++t) subtree[n][t] += outflow[t];
        for (int p : (*children)[n]) {
            auto to = static_cast<std::size_t>(net.pipes[static_cast<std::size_t>(p)].to);
            for (std::size_t t = 0; t < T; ++t) subtree[n][t] += subtree[to][t];
        }
    }
    for (auto& pipe : net.pipes) pipe.mass_flow = subtree[static_cast<std::size_t>(pipe.to)];
}

std::vector<Diagnostic> validate_system(const SystemModel& m) {
    std::vector<Diagnostic> out;
    Checker c(out);
    const int T = m.horizon;
    const auto Tz = static_cast<std::size_t>(std::max(T, 0));

    c.require(T >= 1, "horizon", "horizon", "horizon must be at least one step");
    c.require(m.step_seconds > 0.0, "step_seconds", "step", "step length must be positive");
    c.require(m.base_mva > 0.0, "base_mva", "base", "MVA base must be positive");
    if (T < 1) return out;

    // Electric network.
    const auto& net = m.electric;
    const int nb = net.bus_count();
    bool net_ok = c.require(nb >= 1, "electric_network.buses", "nonempty", "network needs at least one bus");
    net_ok = c.require(net.slack >= 0 && net.slack < nb, "electric_network.slack_bus", "reference",
                       "slack bus does not exist") && net_ok;
    for (std::size_t i = 0; i < net.buses.size(); ++i)
        c.require(net.buses[i].v_min < net.buses[i].v_max, at("electric_network.buses", i), "voltage-bounds",
                  "V_min must be below V_max");
    for (std::size_t l = 0; l < net.branches.size(); ++l) {
        const auto& br = net.branches[l];
        auto loc = at("electric_network.branches", l);
        bool ends = c.require(br.from >= 0 && br.from < nb && br.to >= 0 && br.to < nb && br.from != br.to, loc,
                              "reference", "branch endpoints must be two distinct existing buses");
        net_ok = ends && net_ok;
        c.require(std::abs(br.impedance) > 0.0, loc, "impedance", "branch impedance must be nonzero");
        c.require(br.flow_limit > 0.0, loc, "flow-limit", "flow limit must be positive");
    }
    if (net_ok) {
        c.require(electric_connected(net), "electric_network", "connected", "network is not connected");
        c.require(static_cast<int>(net.branches.size()) == nb - 1, "electric_network", "radial",
                  "distribution network must be radial (branches = buses - 1)");
    }
    c.require(std::abs(net.slack_voltage) > 0.0, "electric_network.slack_voltage", "voltage",
              "slack voltage must be nonzero");

    auto bus_ok = [&](int bus) { return bus >= 0 && bus < nb; };
    const auto& heat = m.heat;
    const int nh = heat.node_count();
    auto node_ok = [&](int node) { return node >= 0 && node < nh; };

    for (std::size_t i = 0; i < m.chps.size(); ++i) {
        const auto& u = m.chps[i];
        auto loc = at("devices.chp", i);
        c.require(bus_ok(u.bus), loc + ".bus", "reference", "bus " + std::to_string(u.bus) + " does not exist");
        c.require(node_ok(u.heat_node), loc + ".heat_node", "reference",
                  "heat node " + std::to_string(u.heat_node) + " does not exist");
        if (node_ok(u.heat_node))
            c.require(u.heat_node == heat.source, loc + ".heat_node", "source-node",
                      "heat producers must sit at the heating source node");
        c.require(u.heat_ratio > 0.0, loc, "heat-ratio", "power-to-heat ratio must be positive");
        c.require(u.p_min <= u.p_max, loc, "active-bounds", "P_min must not exceed P_max");
        c.require(u.q_min <= u.q_max, loc, "reactive-bounds", "Q_min must not exceed Q_max");
        c.require(u.ramp_p >= 0.0 && u.ramp_q >= 0.0, loc, "ramp", "ramp limits must be non-negative");
        c.require(u.cost >= 0.0, loc, "cost", "cost coefficient must be non-negative");
    }
    for (std::size_t i = 0; i < m.heat_pumps.size(); ++i) {
        const auto& u = m.heat_pumps[i];
        auto loc = at("devices.heat_pumps", i);
        c.require(bus_ok(u.bus), loc + ".bus", "reference", "bus " + std::to_string(u.bus) + " does not exist");
        c.require(node_ok(u.heat_node), loc + ".heat_node", "reference",
                  "heat node " + std::to_string(u.heat_node) + " does not exist");
        if (node_ok(u.heat_node))
            c.require(u.heat_node == heat.source, loc + ".heat_node", "source-node",
                      "heat producers must sit at the heating source node");
        c.require(u.heat_ratio > 0.0, loc, "heat-ratio", "power-to-heat ratio must be positive");
        c.require(u.power_factor > 0.0 && u.power_factor <= 1.0, loc, "power-factor",
                  "power factor must lie in (0, 1]");
        c.require(u.p_min <= u.p_max, loc, "active-bounds", "P_min must not exceed P_max");
        c.require(u.ramp_p >= 0.0, loc, "ramp", "ramp limit must be non-negative");
        c.require(u.cost >= 0.0, loc, "cost", "cost coefficient must be non-negative");
    }
    for (std::size_t i = 0; i < m.batteries.size(); ++i) {
        const auto& b = m.batteries[i];
        auto loc = at("devices.batteries", i);
        c.require(bus_ok(b.bus), loc + ".bus", "reference", "bus " + std::to_string(b.bus) + " does not exist");
        check_storage(c, loc, b.self_discharge, b.eta_charge, b.eta_discharge, b.linear_efficiency, b.capacity,
                      b.e_min, b.e_max, b.e_init, b.p_min, b.p_max, b.ramp_p, b.cost, b.balance_share);
    }
    for (std::size_t i = 0; i < m.tanks.size(); ++i) {
        const auto& s = m.tanks[i];
        auto loc = at("devices.thermal_tanks", i);
        c.require(node_ok(s.heat_node), loc + ".heat_node", "reference",
                  "heat node " + std::to_string(s.heat_node) + " does not exist");
        if (node_ok(s.heat_node))
            c.require(s.heat_node == heat.source, loc + ".heat_node", "source-node",
                      "thermal tanks must sit at the heating source node");
        check_storage(c, loc, s.self_discharge, s.eta_charge, s.eta_discharge, s.linear_efficiency, s.capacity,
                      s.e_min, s.e_max, s.e_init, s.h_min, s.h_max, s.ramp_h, s.cost, s.balance_share);
    }
    for (std::size_t i = 0; i < m.pv_units.size(); ++i)
        c.require(bus_ok(m.pv_units[i].bus), at("devices.pv", i) + ".bus", "reference",
                  "bus " + std::to_string(m.pv_units[i].bus) + " does not exist");

    c.require(m.grid.p_min <= m.grid.p_max, "grid", "active-bounds", "P_min must not exceed P_max");
    c.require(m.grid.q_min <= m.grid.q_max, "grid", "reactive-bounds", "Q_min must not exceed Q_max");
    c.require(m.grid.price.size() == Tz, "grid.price", "series-length", "price series length must equal the horizon");

    // Forecasts.
    const auto& f = m.forecast;
    if (c.require(f.pv.size() == m.pv_units.size(), "forecast.pv", "channel-count",
                  "one PV interval series per PV unit required"))
        for (std::size_t i = 0; i < f.pv.size(); ++i) check_interval_series(c, f.pv[i], at("forecast.pv", i), T);
    if (c.require(f.p_load.size() == static_cast<std::size_t>(nb), "forecast.p_load", "channel-count",
                  "one active-load interval series per bus required"))
        for (std::size_t i = 0; i < f.p_load.size(); ++i)
            check_interval_series(c, f.p_load[i], at("forecast.p_load", i), T);
    if (c.require(f.q_load.size() == static_cast<std::size_t>(nb), "forecast.q_load", "channel-count",
                  "one reactive-load interval series per bus required"))
        for (std::size_t i = 0; i < f.q_load.size(); ++i)
            check_interval_series(c, f.q_load[i], at("forecast.q_load", i), T);
    if (c.require(f.heat_load.size() == static_cast<std::size_t>(nh), "forecast.heat_load", "channel-count",
                  "one heat-load interval series per heat node required"))
        for (std::size_t i = 0; i < f.heat_load.size(); ++i)
            check_interval_series(c, f.heat_load[i], at("forecast.heat_load", i), T);

    // Heating network.
    if (nh > 0) {
        c.require(heat.water_heat_capacity > 0.0 && heat.water_density > 0.0, "heat_network", "water",
                  "water properties must be positive");
        c.require(heat.ground_temperature.size() == Tz, "heat_network.ground_temperature", "series-length",
                  "ground temperature series length must equal the horizon");
        bool nodes_ok = true;
        for (std::size_t i = 0; i < heat.nodes.size(); ++i) {
            const auto& n = heat.nodes[i];
            auto loc = at("heat_network.nodes", i);
            c.require(n.supply_min <= n.supply_max && n.return_min <= n.return_max, loc, "temperature-bounds",
                      "temperature bounds must be ordered");
            if (!c.require(n.outflow.size() == Tz, loc + ".outflow", "series-length",
                           "outflow series length must equal the horizon")) {
                nodes_ok = false;
                continue;
            }
            for (std::size_t t = 0; t < Tz; ++t) {
                if (!c.require(n.outflow[t] >= 0.0, loc + ".outflow", "mass-flow",
                               "outflow must be non-negative at t=" + std::to_string(t)))
                    break;
                if (i < f.heat_load.size() && f.heat_load[i].upper.size() == Tz &&
                    f.heat_load[i].lower.size() == Tz && n.outflow[t] == 0.0 &&
                    !c.require(f.heat_load[i].upper[t] == 0.0 && f.heat_load[i].lower[t] == 0.0,
                               at("forecast.heat_load", i), "load-without-flow",
                               "heat load at a node without outflow at t=" + std::to_string(t)))
                    break;
            }
        }
        auto children = tree_children(nh, heat.pipes, heat.source);
        bool tree_ok = c.require(children.has_value(), "heat_network.pipes", "tree",
                                 "supply network must be a tree rooted at the source node");
        for (std::size_t p = 0; p < heat.pipes.size(); ++p) {
            const auto& pipe = heat.pipes[p];
            auto loc = at("heat_network.pipes", p);
            c.require(pipe.diameter > 0.0 && pipe.length >= 0.0 && pipe.conductivity >= 0.0, loc, "geometry",
                      "pipe needs positive diameter and non-negative length/conductivity");
            if (!c.require(pipe.mass_flow.size() == Tz, loc + ".mass_flow", "series-length",
                           "mass-flow series length must equal the horizon"))
                continue;
            for (std::size_t t = 0; t < Tz; ++t)
                if (!c.require(pipe.mass_flow[t] > 0.0, loc + ".mass_flow", "constant-flow",
                               "pipe mass flow must be positive at t=" + std::to_string(t)))
                    break;
        }
        if (tree_ok && nodes_ok) {
            // Mass balance: inflow = own outflow + flow into child pipes.
            for (int n = 0; n < nh; ++n) {
                for (std::size_t t = 0; t < Tz; ++t) {
                    double in = 0.0;
                    if (n == heat.source) in = heat.source_inflow(static_cast<int>(t));
                    for (const auto& pipe : heat.pipes)
                        if (pipe.to == n && pipe.mass_flow.size() == Tz) in += pipe.mass_flow[t];
                    double out = heat.nodes[static_cast<std::size_t>(n)].outflow[t];
                    for (int p : (*children)[static_cast<std::size_t>(n)])
                        if (heat.pipes[static_cast<std::size_t>(p)].mass_flow.size() == Tz)
                            out += heat.pipes[static_cast<std::size_t>(p)].mass_flow[t];
                    if (!c.require(std::abs(in - out) <= 1e-9 * std::max(1.0, in), at("heat_network.nodes", n),
                                   "mass-balance", "mass balance violated at t=" + std::to_string(t)))
                        break;
                }
            }
        }
    } else {
        c.require(m.tanks.empty(), "devices.thermal_tanks", "reference", "thermal tanks need a heating network");
    }

    const auto n_u = 2 * m.chps.size() + 1 + m.heat_pumps.size();
    const auto n_x = m.batteries.size() + m.tanks.size();
    if (!m.feedback.gain.empty()) {
        bool dims = m.feedback.gain.size() == n_u;
        for (const auto& row : m.feedback.gain) dims = dims && row.size() == n_x;
        c.require(dims, "policy.gain", "dimensions",
                  "gain must be n_u x n_x = " + std::to_string(n_u) + " x " + std::to_string(n_x));
    }
    c.require(m.feedback.spectral_radius_cap >= 1.0, "policy.spectral_radius_cap", "cap",
              "spectral radius cap must be at least 1");
    return out;
}

void require_valid(const SystemModel& model) {
    auto diags = validate_system(model);
    if (!diags.empty()) {
        const auto& d = diags.front();
        std::string extra = diags.size() > 1 ? " (+" + std::to_string(diags.size() - 1) + " more)" : "";
        throw ConfigError(d.location, d.invariant + ": " + d.message + extra);
    }
}

}  // namespace chpd
