#include "doctest.h"

#include <filesystem>

#include "chpd/errors.hpp"
#include "chpd/system.hpp"
#include "json.hpp"
#include "test_systems.hpp"

using namespace chpd;

namespace {

const char* kMinimal = R"({
  "schema_version": 1,
  "name": "mini",
  "horizon": 1,
  "step_seconds": 3600.0,
  "base_mva": 1.0,
  "devices": {
    "batteries": [{"name": "b", "bus": 0, "capacity": 2.0, "e_min": 0.1, "e_max": 0.9, "e_init": 0.5,
                   "p_min": -1.0, "p_max": 1.0, "ramp_p": 1.0, "cost": 0.0, "eta_charge": 1.0,
                   "eta_discharge": 1.0, "self_discharge": 1.0, "balance_share": 1.0}],
    "chp": [], "heat_pumps": [], "pv": [], "thermal_tanks": []
  },
  "electric_network": {"buses": [{"v_min": 0.9, "v_max": 1.1}], "branches": [], "slack_bus": 0,
                       "slack_voltage": [1.0, 0.0]},
  "forecast": {"p_load": [{"bus": 0, "lower": [0.1], "center": [0.1], "upper": [0.1]}],
               "q_load": [], "pv": [], "heat_load": []},
  "grid": {"p_min": -5.0, "p_max": 5.0, "q_min": -5.0, "q_max": 5.0, "price": [1.0]},
  "policy": {"spectral_radius_cap": 1.1}
})";

bool has_invariant(const std::vector<Diagnostic>& d, const std::string& id) {
    for (const auto& x : d)
        if (x.invariant == id) return true;
    return false;
}

}  // namespace

TEST_CASE("minimal document") {
    SystemModel m = parse_system(kMinimal);
    CHECK(m.batteries.size() == 1);
    CHECK(m.horizon == 1);
    CHECK(m.electric.bus_count() == 1);
    CHECK(validate_system(m).empty());
    CHECK(parse_system(to_document(m)) == m);
}

TEST_CASE("schema errors name the offending path") {
    auto doc = nlohmann::json::parse(kMinimal);
    doc["devices"]["batteries"][0].erase("capacity");
    try {
        parse_system(doc.dump());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path() == "devices.batteries[0].capacity");
    }

    doc = nlohmann::json::parse(kMinimal);
    doc["grid"]["price"] = {1.0, 2.0};
    CHECK_THROWS_AS(parse_system(doc.dump()), ConfigError);

    doc = nlohmann::json::parse(kMinimal);
    doc["horizon"] = "one";
    CHECK_THROWS_AS(parse_system(doc.dump()), ConfigError);
    CHECK_THROWS_AS(parse_system("{not json"), ConfigError);
}

TEST_CASE("dangling bus reference") {
    auto doc = nlohmann::json::parse(to_document(build_reference_system({4, 3600.0})));
    doc["devices"]["batteries"][0]["bus"] = 99;
    try {
        parse_system(doc.dump());
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.path().find("batteries[0].bus") != std::string::npos);
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
}

TEST_CASE("reference system") {
    SystemModel m = build_reference_system();
    CHECK(m.horizon == 288);
    CHECK(m.step_seconds == 300.0);
    CHECK(m.electric.bus_count() == 33);
    CHECK(m.heat.node_count() == 8);
    CHECK(m.chps.size() == 1);
    CHECK(m.heat_pumps.size() == 1);
    CHECK(m.batteries.size() == 1);
    CHECK(m.tanks.size() == 1);
    CHECK(m.pv_units.size() >= 1);
    CHECK(validate_system(m).empty());

    SystemModel h = build_reference_system({24, 3600.0});
    CHECK(h.horizon == 24);
    CHECK(validate_system(h).empty());
    CHECK(parse_system(to_document(h)) == h);
}

TEST_CASE("diagnostics cite invariants") {
    SystemModel m = build_reference_system({6, 3600.0});
    m.batteries[0].e_init = m.batteries[0].e_max + 0.05;
    auto d = validate_system(m);
    REQUIRE(d.size() == 1);
    CHECK(d[0].invariant == "energy-bounds");
    CHECK(d[0].location.find("batteries[0]") != std::string::npos);
    CHECK_THROWS_AS(require_valid(m), ConfigError);

    m = build_reference_system({6, 3600.0});
    auto& s = m.forecast.p_load[5];
    s.lower[3] = s.upper[3] + 0.1;
    d = validate_system(m);
    REQUIRE(has_invariant(d, "interval-order"));
    bool found = false;
    for (const auto& x : d) found = found || x.message.find("t=3") != std::string::npos;
    CHECK(found);

    m = build_reference_system({6, 3600.0});
    m.horizon = 0;
    CHECK(has_invariant(validate_system(m), "horizon"));
}

TEST_CASE("file round trip") {
    SystemModel m = chpd::testing::minimal_system(3);
    const auto dir = std::filesystem::temp_directory_path() / "chpd_test_system";
    std::filesystem::create_directories(dir);
    save_system(m, dir / "mini.json");
    CHECK(load_system(dir / "mini.json") == m);
    CHECK_THROWS_AS(load_system(dir / "missing.json"), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("pipe flows follow the subtree outflows") {
    SystemModel m = build_reference_system({4, 3600.0});
    HeatNetwork net = m.heat;
    assign_pipe_flows(net, 4);
    for (int t = 0; t < 4; ++t) {
        double total = 0.0;
        for (const auto& n : net.nodes) total += n.outflow[static_cast<std::size_t>(t)];
        double from_source = 0.0;
        for (const auto& p : net.pipes)
            if (p.from == net.source) from_source += p.mass_flow[static_cast<std::size_t>(t)];
        CHECK(from_source + net.nodes[static_cast<std::size_t>(net.source)].outflow[static_cast<std::size_t>(t)] ==
              doctest::Approx(total));
        CHECK(net.source_inflow(t) == doctest::Approx(total));
    }
}
