#include <doctest.h>

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "geoaudit/app.hpp"
#include "support.hpp"

using namespace geoaudit;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    args.insert(args.begin(), "geoaudit");
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

// A small synthetic world shared by the tests in this file.
const std::string& world_dir() {
    static testing::TempDir dir;
    static const std::string path = [] {
        const auto cfg = dir.write("synth.json", R"({"synth": {"countries": [{"code": "ES",
            "box": {"lat": [36.0, 43.5], "lon": [-9.0, 3.0]}, "anchors": 60, "ranges": 600, "events": 3000,
            "bids": 2000}]}})");
        const auto r = run({"synth", "--config", cfg, "--seed", "3", "--out", dir.file("world")});
        REQUIRE(r.code == 0);
        return dir.file("world");
    }();
    return path;
}

std::map<std::string, std::string> files_in(const std::string& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = testing::read_text(e.path());
    return out;
}

}  // namespace

TEST_CASE("a missing input exits 2 with a machine-readable error") {
    testing::TempDir dir;
    const auto r = run({"audit", "--events", dir.file("nope.csv"), "--snapshots", dir.file("s.json"), "--regions",
                        dir.file("r.geojson"), "--out", dir.file("out")});
    CHECK(r.code == kExitInputError);
    const auto err = nlohmann::json::parse(r.err);
    CHECK(err.at("class") == "input");
    CHECK(err.at("error").get<std::string>().rfind("missing_input: events", 0) == 0);
    CHECK(err.at("path") == dir.file("nope.csv"));
}

TEST_CASE("usage errors exit 2") {
    CHECK(run({"audit", "--threads", "abc"}).code == kExitInputError);
    CHECK(run({"frobnicate"}).code == kExitInputError);
    CHECK(run({"audit", "--world", world_dir(), "--threads", "0"}).code == kExitInputError);
    CHECK(run({"--version"}).out.find("geoaudit") != std::string::npos);
}

TEST_CASE("audit reruns are byte-identical and thread-invariant") {
    testing::TempDir dir;
    const auto a = run({"audit", "--upper-bound", "--world", world_dir(), "--seed", "1", "--threads", "1", "--out",
                        dir.file("a")});
    REQUIRE(a.code == 0);
    const auto b = run({"audit", "--upper-bound", "--world", world_dir(), "--seed", "1", "--threads", "1", "--out",
                        dir.file("b")});
    REQUIRE(b.code == 0);
    const auto fa = files_in(dir.file("a"));
    CHECK(fa == files_in(dir.file("b")));
    for (const auto* name : {"report.json", "precision.csv", "accuracy.csv", "cdf.csv", "cdf_by_group.csv",
                             "unmatched.csv", "rejects.csv"})
        CHECK(fa.count(name) == 1);
    CHECK(fa.at("precision.csv").rfind("# geoaudit ", 0) == 0);

    const auto c = run({"audit", "--upper-bound", "--world", world_dir(), "--seed", "1", "--threads", "4", "--out",
                        dir.file("c")});
    REQUIRE(c.code == 0);
    auto report_a = nlohmann::json::parse(fa.at("report.json"));
    auto report_c = nlohmann::json::parse(testing::read_text(dir.file("c/report.json")));
    report_a.erase("provenance");
    report_c.erase("provenance");
    CHECK(report_a == report_c);
}

TEST_CASE("validate agrees with the oracle") {
    testing::TempDir dir;
    const auto r = run({"validate", "--world", world_dir(), "--out", dir.file("v")});
    CHECK(r.code == kExitOk);
}

TEST_CASE("simulate reruns are byte-identical") {
    testing::TempDir dir;
    const auto scen = dir.write("scen.json", R"({"scenarios": [{"country": "ES", "level": 4, "targets": 3},
                                                               {"country": "ES", "level": 3, "targets": 2}]})");
    std::map<std::string, std::string> first;
    for (const auto* name : {"a", "b"}) {
        const auto r = run({"simulate", "--world", world_dir(), "--scenarios", scen, "--seed", "9", "--threads",
                            name[0] == 'a' ? "1" : "3", "--out", dir.file(name)});
        REQUIRE(r.code == 0);
        if (first.empty())
            first = files_in(dir.file(name));
        else
            CHECK(files_in(dir.file(name)) == first);
    }
    const auto doc = nlohmann::json::parse(first.at("campaigns.json"));
    CHECK(doc.at("campaigns").size() == (3 * 3 + 2 * 3) * 2);
}

TEST_CASE("toy scenario file gives the two fixed rows") {
    testing::TempDir dir;
    const auto scen = dir.write("toy.json", R"({"fixed": [
        {"country": "toy", "level": "twice", "a_ip": 0.2, "c_ip": 1, "c_gps": 2},
        {"country": "toy", "level": "six", "a_ip": 0.2, "c_ip": 1, "c_gps": 6}]})");
    const auto r = run({"simulate", "--scenarios", scen, "--seed", "1", "--out", dir.file("out")});
    REQUIRE(r.code == 0);
    const auto csv = testing::read_text(dir.file("out/decision_table.csv"));
    CHECK(csv.find("toy,six,actual,geoip,1\n") != std::string::npos);
    CHECK(csv.find("toy,twice,actual,gps,1\n") != std::string::npos);

    const auto empty = dir.write("empty.json", "{}");
    const auto e = run({"simulate", "--scenarios", empty, "--out", dir.file("empty")});
    CHECK(e.code == 0);
    const auto lines = testing::read_text(dir.file("empty/decision_table.csv"));
    CHECK(lines.find("country,level,mode,strategy,count\n") != std::string::npos);
}

TEST_CASE("upperbound writes per-sample rows on request") {
    testing::TempDir dir;
    const auto r = run({"upperbound", "--per-sample", "--world", world_dir(), "--out", dir.file("u")});
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(testing::read_text(dir.file("u/upper_bound.json")));
    CHECK(doc.at("upper_bound").at("dominance_violations") == 0);
    CHECK(fs::exists(dir.file("u/upper_bound_samples.csv")));
}
