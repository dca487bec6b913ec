#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const char* env = std::getenv("CHPD_TEST_TMP");
    fs::path root = env ? fs::path(env) : fs::temp_directory_path() / "chpd_cli_test";
    fs::path dir = root / name;
    fs::remove_all(dir);
    return dir;
}

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "chpd");
    std::ostringstream out, err;
    const int code = chpd::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

const std::vector<std::string> small = {"--horizon", "24", "--step", "3600"};

std::vector<std::string> with(std::vector<std::string> head, std::vector<std::string> tail = small) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

}  // namespace

TEST_CASE("dispatch writes a schedule with units") {
    const auto dir = scratch("dispatch");
    auto r = run(with({"dispatch", "--mode", "box", "--out", dir.string()}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("status optimal, J = ") != std::string::npos);
    for (const char* f : {"nominal.csv", "summary.json", "bounds.csv", "timings.json"})
        CHECK(fs::exists(dir / f));
    const std::string header = first_line(dir / "nominal.csv");
    CHECK(header.find("P_CHP[chp1] [pu]") != std::string::npos);
    CHECK(first_line(dir / "bounds.csv").find("unit") != std::string::npos);
}

TEST_CASE("validate is reproducible") {
    const auto a = scratch("validate_a"), b = scratch("validate_b");
    for (const auto& dir : {a, b}) {
        auto r = run(with({"validate", "--mode", "budget", "--gamma", "10", "--samples", "300", "--seed", "7",
                           "--traces", "2", "--out", dir.string()}));
        REQUIRE(r.code == 0);
    }
    for (const char* f : {"metrics.csv", "metrics.json", "envelope.csv", "traces/sample_0.csv", "traces/sample_1.csv"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    CHECK(first_line(a / "metrics.csv") == "metric,value,unit");
}

TEST_CASE("compare ranks methods") {
    const auto dir = scratch("compare");
    auto r = run(with({"compare", "--methods", "do,erd-box", "--samples", "300", "--out", dir.string()}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("erd-box") != std::string::npos);
    const std::string json = slurp(dir / "comparison.json");
    CHECK(json.find("\"do\"") != std::string::npos);
    CHECK(first_line(dir / "tradeoff.csv").find("J_nom [$]") != std::string::npos);
}

TEST_CASE("reference and tighten") {
    const auto dir = scratch("tighten");
    CHECK(run(with({"reference", "--out", dir.string()})).code == 0);
    CHECK(fs::exists(dir / "reference_system.json"));
    auto r = run({"tighten", "--config", (dir / "reference_system.json").string(), "--mode", "budget", "--gamma",
                  "5", "--out", dir.string()});
    CHECK(r.code == 0);
    CHECK(fs::exists(dir / "schedule.csv"));
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run(with({"dispatch", "--mode", "budget"})).code == 2);
    CHECK(run(with({"dispatch", "--mode", "box", "--gamma", "3"})).code == 2);
    CHECK(run(with({"dispatch", "--mode", "robust"})).code == 2);
    CHECK(run(with({"validate", "--samples", "0"})).code == 2);
    CHECK(run(with({"validate", "--sampling", "budget"})).code == 2);
    CHECK(run({"dispatch", "--config", "/nonexistent/system.json"}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("domain errors exit with 1") {
    const auto dir = scratch("domain");
    fs::create_directories(dir);
    {
        std::ofstream bad(dir / "bad.json");
        bad << "{\"name\": 3}";
    }
    auto r = run({"dispatch", "--config", (dir / "bad.json").string(), "--out", dir.string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("error") != std::string::npos);
    CHECK(run(with({"compare", "--methods", "do,robust", "--samples", "10", "--out", dir.string()})).code == 1);
}
