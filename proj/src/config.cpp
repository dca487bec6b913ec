// JSON configuration document <-> SystemModel. Schema: docs/config_schema.md.

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "chpd/errors.hpp"
#include "chpd/system.hpp"
#include "json.hpp"

namespace chpd {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

class Reader {
public:
    Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {}

    const json& node() const { return node_; }
    const std::string& path() const { return path_; }

    bool has(const char* key) const { return node_.is_object() && node_.contains(key); }

    Reader child(const char* key) const {
        if (!has(key)) throw ConfigError(join(key), "missing required field");
        return {node_.at(key), join(key)};
    }

    Reader item(std::size_t i) const {
        return {node_.at(i), path_ + "[" + std::to_string(i) + "]"};
    }

    std::size_t size() const { return node_.size(); }

    double number(const char* key) const { return child(key).as_number(); }
    double number(const char* key, double fallback) const { return has(key) ? number(key) : fallback; }

    int integer(const char* key) const { return child(key).as_integer(); }
    int integer(const char* key, int fallback) const { return has(key) ? integer(key) : fallback; }

    std::string text(const char* key, std::string fallback = {}) const {
        if (!has(key)) return fallback;
        auto c = child(key);
        if (!c.node_.is_string()) throw ConfigError(c.path_, "expected a string");
        return c.node_.get<std::string>();
    }

    double as_number() const {
        if (!node_.is_number()) throw ConfigError(path_, "expected a number");
        return node_.get<double>();
    }

    int as_integer() const {
        if (!node_.is_number_integer()) throw ConfigError(path_, "expected an integer");
        return node_.get<int>();
    }

    void require_array() const {
        if (!node_.is_array()) throw ConfigError(path_, "expected an array");
    }

    void require_object() const {
        if (!node_.is_object()) throw ConfigError(path_, "expected an object");
    }

    /// A number broadcasts over the horizon; an array must have the horizon's length.
    Series series(int horizon) const {
        if (node_.is_number()) return Series(static_cast<std::size_t>(horizon), node_.get<double>());
        require_array();
        if (node_.size() != static_cast<std::size_t>(horizon))
            throw ConfigError(path_, "series length " + std::to_string(node_.size()) + " does not match horizon " +
                                         std::to_string(horizon));
        Series out;
        out.reserve(node_.size());
        for (std::size_t i = 0; i < node_.size(); ++i) out.push_back(item(i).as_number());
        return out;
    }

    Series series(const char* key, int horizon) const { return child(key).series(horizon); }

private:
    std::string join(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

    const json& node_;
    std::string path_;
};

void check_index(const Reader& r, int value, int count, const std::string& what) {
    if (value < 0 || value >= count)
        throw ConfigError(r.path(), what + " " + std::to_string(value) + " does not exist (have " +
                                        std::to_string(count) + ")");
}

IntervalSeries read_interval(const Reader& r, int horizon) {
    IntervalSeries s;
    s.lower = r.series("lower", horizon);
    s.upper = r.series("upper", horizon);
    if (r.has("center")) {
        s.center = r.series("center", horizon);
    } else {
        s.center.resize(s.lower.size());
        for (std::size_t t = 0; t < s.lower.size(); ++t) s.center[t] = 0.5 * (s.lower[t] + s.upper[t]);
    }
    return s;
}

void read_interval_list(const Reader& parent, const char* key, const char* index_key, int count, int horizon,
                        std::vector<IntervalSeries>& out) {
    out.assign(static_cast<std::size_t>(count), IntervalSeries::zero(horizon));
    if (!parent.has(key)) return;
    auto list = parent.child(key);
    list.require_array();
    for (std::size_t i = 0; i < list.size(); ++i) {
        auto entry = list.item(i);
        auto idx_reader = entry.child(index_key);
        int idx = idx_reader.as_integer();
        check_index(idx_reader, idx, count, index_key);
        out[static_cast<std::size_t>(idx)] = read_interval(entry, horizon);
    }
}

ElectricNetwork read_electric(const Reader& r) {
    ElectricNetwork net;
    auto buses = r.child("buses");
    buses.require_array();
    for (std::size_t i = 0; i < buses.size(); ++i) {
        auto b = buses.item(i);
        net.buses.push_back({b.number("v_min"), b.number("v_max")});
    }
    const int nb = net.bus_count();
    auto slack = r.child("slack_bus");
    net.slack = slack.as_integer();
    check_index(slack, net.slack, nb, "bus");
    if (r.has("slack_voltage")) {
        auto v = r.child("slack_voltage");
        v.require_array();
        if (v.size() != 2) throw ConfigError(v.path(), "expected [real, imag]");
        net.slack_voltage = {v.item(0).as_number(), v.item(1).as_number()};
    }
    auto branches = r.child("branches");
    branches.require_array();
    for (std::size_t i = 0; i < branches.size(); ++i) {
        auto b = branches.item(i);
        Branch br;
        auto from = b.child("from");
        auto to = b.child("to");
        br.from = from.as_integer();
        br.to = to.as_integer();
        check_index(from, br.from, nb, "bus");
        check_index(to, br.to, nb, "bus");
        br.impedance = {b.number("r"), b.number("x")};
        br.flow_limit = b.number("flow_limit", std::numeric_limits<double>::infinity());
        net.branches.push_back(br);
    }
    return net;
}

HeatNetwork read_heat(const Reader& r, int horizon) {
    HeatNetwork net;
    net.water_heat_capacity = r.number("water_heat_capacity", 4182.0);
    net.water_density = r.number("water_density", 1000.0);
    net.ground_temperature = r.series("ground_temperature", horizon);
    auto nodes = r.child("nodes");
    nodes.require_array();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        auto n = nodes.item(i);
        HeatNode node;
        node.supply_min = n.number("supply_min");
        node.supply_max = n.number("supply_max");
        node.return_min = n.number("return_min");
        node.return_max = n.number("return_max");
        node.outflow = n.has("outflow") ? n.series("outflow", horizon) : Series(static_cast<std::size_t>(horizon), 0.0);
        node.supply_init = n.number("supply_init");
        node.return_init = n.number("return_init");
        net.nodes.push_back(std::move(node));
    }
    const int nh = net.node_count();
    auto source = r.child("source_node");
    net.source = source.as_integer();
    check_index(source, net.source, nh, "heat node");
    auto pipes = r.child("pipes");
    pipes.require_array();
    for (std::size_t i = 0; i < pipes.size(); ++i) {
        auto p = pipes.item(i);
        HeatPipe pipe;
        auto from = p.child("from");
        auto to = p.child("to");
        pipe.from = from.as_integer();
        pipe.to = to.as_integer();
        check_index(from, pipe.from, nh, "heat node");
        check_index(to, pipe.to, nh, "heat node");
        pipe.length = p.number("length");
        pipe.diameter = p.number("diameter");
        pipe.conductivity = p.number("conductivity");
        net.pipes.push_back(pipe);
    }
    assign_pipe_flows(net, horizon);
    return net;
}

SystemModel read_system(const json& doc) {
    Reader root(doc, "");
    root.require_object();
    auto version = root.child("schema_version");
    if (version.as_integer() != kSchemaVersion)
        throw ConfigError(version.path(), "unsupported schema version (expected " + std::to_string(kSchemaVersion) + ")");

    SystemModel m;
    m.name = root.text("name");
    m.horizon = root.integer("horizon");
    if (m.horizon < 1) throw ConfigError("horizon", "horizon must be at least one step");
    m.step_seconds = root.number("step_seconds");
    m.base_mva = root.number("base_mva", 1.0);
    const int T = m.horizon;

    m.electric = read_electric(root.child("electric_network"));
    const int nb = m.electric.bus_count();
    if (root.has("heat_network")) m.heat = read_heat(root.child("heat_network"), T);
    const int nh = m.heat.node_count();

    auto bus_of = [&](const Reader& r) {
        auto b = r.child("bus");
        int bus = b.as_integer();
        check_index(b, bus, nb, "bus");
        return bus;
    };
    auto node_of = [&](const Reader& r) {
        auto n = r.child("heat_node");
        int node = n.as_integer();
        check_index(n, node, nh, "heat node");
        return node;
    };

    Reader devices = root.has("devices") ? root.child("devices") : Reader(json::object(), "devices");
    auto list = [&](const char* key, auto&& fn) {
        if (!devices.has(key)) return;
        auto l = devices.child(key);
        l.require_array();
        for (std::size_t i = 0; i < l.size(); ++i) fn(l.item(i));
    };
    list("chp", [&](const Reader& r) {
        ChpUnit u;
        u.name = r.text("name", "chp" + std::to_string(m.chps.size()));
        u.heat_ratio = r.number("heat_ratio");
        u.p_min = r.number("p_min");
        u.p_max = r.number("p_max");
        u.q_min = r.number("q_min");
        u.q_max = r.number("q_max");
        u.ramp_p = r.number("ramp_p");
        u.ramp_q = r.number("ramp_q");
        u.cost = r.number("cost");
        u.bus = bus_of(r);
        u.heat_node = node_of(r);
        m.chps.push_back(u);
    });
    list("heat_pumps", [&](const Reader& r) {
        HeatPump u;
        u.name = r.text("name", "hp" + std::to_string(m.heat_pumps.size()));
        u.heat_ratio = r.number("heat_ratio");
        u.power_factor = r.number("power_factor");
        u.p_min = r.number("p_min");
        u.p_max = r.number("p_max");
        u.ramp_p = r.number("ramp_p");
        u.cost = r.number("cost");
        u.bus = bus_of(r);
        u.heat_node = node_of(r);
        m.heat_pumps.push_back(u);
    });
    list("batteries", [&](const Reader& r) {
        BatteryUnit b;
        b.name = r.text("name", "bu" + std::to_string(m.batteries.size()));
        b.self_discharge = r.number("self_discharge", 1.0);
        b.eta_charge = r.number("eta_charge", 1.0);
        b.eta_discharge = r.number("eta_discharge", 1.0);
        if (r.has("linear_efficiency")) b.linear_efficiency = r.number("linear_efficiency");
        b.capacity = r.number("capacity");
        b.e_min = r.number("e_min");
        b.e_max = r.number("e_max");
        b.e_init = r.number("e_init");
        b.p_min = r.number("p_min");
        b.p_max = r.number("p_max");
        b.ramp_p = r.number("ramp_p");
        b.cost = r.number("cost", 0.0);
        b.balance_share = r.number("balance_share", 1.0);
        b.bus = bus_of(r);
        m.batteries.push_back(b);
    });
    list("thermal_tanks", [&](const Reader& r) {
        ThermalTank s;
        s.name = r.text("name", "ts" + std::to_string(m.tanks.size()));
        s.self_discharge = r.number("self_discharge", 1.0);
        s.eta_charge = r.number("eta_charge", 1.0);
        s.eta_discharge = r.number("eta_discharge", 1.0);
        if (r.has("linear_efficiency")) s.linear_efficiency = r.number("linear_efficiency");
        s.capacity = r.number("capacity");
        s.e_min = r.number("e_min");
        s.e_max = r.number("e_max");
        s.e_init = r.number("e_init");
        s.h_min = r.number("h_min");
        s.h_max = r.number("h_max");
        s.ramp_h = r.number("ramp_h");
        s.cost = r.number("cost", 0.0);
        s.balance_share = r.number("balance_share", 1.0);
        s.heat_node = node_of(r);
        m.tanks.push_back(s);
    });
    list("pv", [&](const Reader& r) {
        PvUnit p;
        p.name = r.text("name", "pv" + std::to_string(m.pv_units.size()));
        p.bus = bus_of(r);
        m.pv_units.push_back(p);
    });

    auto grid = root.child("grid");
    m.grid.p_min = grid.number("p_min");
    m.grid.p_max = grid.number("p_max");
    m.grid.q_min = grid.number("q_min");
    m.grid.q_max = grid.number("q_max");
    m.grid.price = grid.series("price", T);

    Reader forecast = root.has("forecast") ? root.child("forecast") : Reader(json::object(), "forecast");
    read_interval_list(forecast, "pv", "unit", static_cast<int>(m.pv_units.size()), T, m.forecast.pv);
    read_interval_list(forecast, "p_load", "bus", nb, T, m.forecast.p_load);
    read_interval_list(forecast, "q_load", "bus", nb, T, m.forecast.q_load);
    read_interval_list(forecast, "heat_load", "node", nh, T, m.forecast.heat_load);

    if (root.has("policy")) {
        auto policy = root.child("policy");
        m.feedback.spectral_radius_cap = policy.number("spectral_radius_cap", 1.1);
        if (policy.has("gain")) {
            auto gain = policy.child("gain");
            gain.require_array();
            for (std::size_t i = 0; i < gain.size(); ++i) {
                auto row = gain.item(i);
                row.require_array();
                std::vector<double> values;
                for (std::size_t j = 0; j < row.size(); ++j) values.push_back(row.item(j).as_number());
                m.feedback.gain.push_back(std::move(values));
            }
        }
    }
    return m;
}

bool all_zero(const IntervalSeries& s) {
    auto zero = [](const Series& v) {
        for (double x : v)
            if (x != 0.0) return false;
        return true;
    };
    return zero(s.lower) && zero(s.center) && zero(s.upper);
}

json interval_to_json(const IntervalSeries& s) {
    return json{{"lower", s.lower}, {"center", s.center}, {"upper", s.upper}};
}

json write_intervals(const std::vector<IntervalSeries>& list, const char* index_key) {
    json out = json::array();
    for (std::size_t i = 0; i < list.size(); ++i) {
        if (all_zero(list[i])) continue;
        json entry = interval_to_json(list[i]);
        entry[index_key] = i;
        out.push_back(std::move(entry));
    }
    return out;
}

json write_system(const SystemModel& m) {
    json doc;
    doc["schema_version"] = kSchemaVersion;
    doc["name"] = m.name;
    doc["horizon"] = m.horizon;
    doc["step_seconds"] = m.step_seconds;
    doc["base_mva"] = m.base_mva;

    json net;
    net["slack_bus"] = m.electric.slack;
    net["slack_voltage"] = {m.electric.slack_voltage.real(), m.electric.slack_voltage.imag()};
    net["buses"] = json::array();
    for (const auto& b : m.electric.buses) net["buses"].push_back({{"v_min", b.v_min}, {"v_max", b.v_max}});
    net["branches"] = json::array();
    for (const auto& br : m.electric.branches) {
        json b{{"from", br.from}, {"to", br.to}, {"r", br.impedance.real()}, {"x", br.impedance.imag()}};
        if (std::isfinite(br.flow_limit)) b["flow_limit"] = br.flow_limit;
        net["branches"].push_back(std::move(b));
    }
    doc["electric_network"] = std::move(net);

    if (!m.heat.empty()) {
        json heat;
        heat["source_node"] = m.heat.source;
        heat["water_heat_capacity"] = m.heat.water_heat_capacity;
        heat["water_density"] = m.heat.water_density;
        heat["ground_temperature"] = m.heat.ground_temperature;
        heat["nodes"] = json::array();
        for (const auto& n : m.heat.nodes)
            heat["nodes"].push_back({{"supply_min", n.supply_min},
                                     {"supply_max", n.supply_max},
                                     {"return_min", n.return_min},
                                     {"return_max", n.return_max},
                                     {"outflow", n.outflow},
                                     {"supply_init", n.supply_init},
                                     {"return_init", n.return_init}});
        heat["pipes"] = json::array();
        for (const auto& p : m.heat.pipes)
            heat["pipes"].push_back({{"from", p.from},
                                     {"to", p.to},
                                     {"length", p.length},
                                     {"diameter", p.diameter},
                                     {"conductivity", p.conductivity}});
        doc["heat_network"] = std::move(heat);
    }

    json devices;
    devices["chp"] = json::array();
    for (const auto& u : m.chps)
        devices["chp"].push_back({{"name", u.name},     {"heat_ratio", u.heat_ratio}, {"p_min", u.p_min},
                                  {"p_max", u.p_max},   {"q_min", u.q_min},           {"q_max", u.q_max},
                                  {"ramp_p", u.ramp_p}, {"ramp_q", u.ramp_q},         {"cost", u.cost},
                                  {"bus", u.bus},       {"heat_node", u.heat_node}});
    devices["heat_pumps"] = json::array();
    for (const auto& u : m.heat_pumps)
        devices["heat_pumps"].push_back({{"name", u.name},
                                         {"heat_ratio", u.heat_ratio},
                                         {"power_factor", u.power_factor},
                                         {"p_min", u.p_min},
                                         {"p_max", u.p_max},
                                         {"ramp_p", u.ramp_p},
                                         {"cost", u.cost},
                                         {"bus", u.bus},
                                         {"heat_node", u.heat_node}});
    devices["batteries"] = json::array();
    for (const auto& b : m.batteries) {
        json j{{"name", b.name},         {"self_discharge", b.self_discharge},
               {"eta_charge", b.eta_charge}, {"eta_discharge", b.eta_discharge},
               {"capacity", b.capacity}, {"e_min", b.e_min},
               {"e_max", b.e_max},       {"e_init", b.e_init},
               {"p_min", b.p_min},       {"p_max", b.p_max},
               {"ramp_p", b.ramp_p},     {"cost", b.cost},
               {"balance_share", b.balance_share}, {"bus", b.bus}};
        if (b.linear_efficiency) j["linear_efficiency"] = *b.linear_efficiency;
        devices["batteries"].push_back(std::move(j));
    }
    devices["thermal_tanks"] = json::array();
    for (const auto& s : m.tanks) {
        json j{{"name", s.name},         {"self_discharge", s.self_discharge},
               {"eta_charge", s.eta_charge}, {"eta_discharge", s.eta_discharge},
               {"capacity", s.capacity}, {"e_min", s.e_min},
               {"e_max", s.e_max},       {"e_init", s.e_init},
               {"h_min", s.h_min},       {"h_max", s.h_max},
               {"ramp_h", s.ramp_h},     {"cost", s.cost},
               {"balance_share", s.balance_share}, {"heat_node", s.heat_node}};
        if (s.linear_efficiency) j["linear_efficiency"] = *s.linear_efficiency;
        devices["thermal_tanks"].push_back(std::move(j));
    }
    devices["pv"] = json::array();
    for (const auto& p : m.pv_units) devices["pv"].push_back({{"name", p.name}, {"bus", p.bus}});
    doc["devices"] = std::move(devices);

    doc["grid"] = {{"p_min", m.grid.p_min},
                   {"p_max", m.grid.p_max},
                   {"q_min", m.grid.q_min},
                   {"q_max", m.grid.q_max},
                   {"price", m.grid.price}};

    doc["forecast"] = {{"pv", write_intervals(m.forecast.pv, "unit")},
                       {"p_load", write_intervals(m.forecast.p_load, "bus")},
                       {"q_load", write_intervals(m.forecast.q_load, "bus")},
                       {"heat_load", write_intervals(m.forecast.heat_load, "node")}};

    json policy{{"spectral_radius_cap", m.feedback.spectral_radius_cap}};
    if (!m.feedback.gain.empty()) policy["gain"] = m.feedback.gain;
    doc["policy"] = std::move(policy);
    return doc;
}

}  // namespace

SystemModel parse_system(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        throw ConfigError("<document>", std::string("parse error: ") + e.what());
    }
    SystemModel model = read_system(doc);
    require_valid(model);
    return model;
}

SystemModel load_system(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open configuration file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_system(buffer.str());
}

std::string to_document(const SystemModel& model) { return write_system(model).dump(1); }

void save_system(const SystemModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << to_document(model) << '\n';
}

}  // namespace chpd
