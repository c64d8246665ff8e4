#include <doctest.h>

#include <bit>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <unistd.h>

#include "gradleak/cli.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/io.hpp"
#include "gradleak/simulator.hpp"

using namespace gradleak;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("gradleak-" + tag + "-" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    fs::path operator/(const std::string& name) const { return path_ / name; }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

struct CliRun {
    int code;
    std::string out;
    std::string err;
};

CliRun cli_run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void spit(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

io::Json strip_timing(io::Json report) {
    for (auto& e : report["per_case"]) e.erase("wall_time_ms");
    return report;
}

io::CaseFile sample_case(std::uint64_t seed) {
    sim::Scenario sc;
    sc.d = 12;
    sc.classes = 20;
    sc.n = 4;
    sc.seed = seed;
    return io::to_case_file(sim::simulate_case(sc));
}

}  // namespace

TEST_CASE("case files round-trip bit-exactly, inline and with a sidecar") {
    TempDir dir("roundtrip");
    io::CaseFile c = sample_case(1);
    c.delta_w(0, 0) = -0.0;
    c.delta_w(0, 1) = 5e-324;
    c.delta_w(0, 2) = 1e-300;
    c.delta_w(1, 0) = std::numeric_limits<double>::max();
    for (bool grd : {false, true}) {
        const fs::path p = dir / (grd ? "side.json" : "inline.json");
        io::write_case(p, c, grd);
        CHECK(fs::exists(fs::path(p).replace_extension(".grd")) == grd);
        const io::CaseFile back = io::read_case(p);
        REQUIRE(back.delta_w.size() == c.delta_w.size());
        for (std::size_t i = 0; i < c.delta_w.size(); ++i)
            CHECK(std::bit_cast<std::uint64_t>(back.delta_w.data()[i]) ==
                  std::bit_cast<std::uint64_t>(c.delta_w.data()[i]));
        CHECK(back.labels == c.labels);
        CHECK(back.scenario.seed == c.scenario.seed);
        CHECK(back.scenario.classes == c.scenario.classes);
    }
}

TEST_CASE("sidecar holds a small header then little-endian doubles") {
    TempDir dir("grd");
    const Matrix m{{1.0, -2.0, 3.0}, {0.5, 0.25, -0.125}};
    const fs::path p = dir / "m.grd";
    io::write_grd(p, m);
    const std::string bytes = slurp(p);
    CHECK(bytes.size() == 4 + 4 + 4 + 6 * 8);
    CHECK(bytes.substr(0, 4) == "GRD1");
    CHECK(static_cast<unsigned char>(bytes[4]) == 2);
    CHECK(static_cast<unsigned char>(bytes[8]) == 3);
    CHECK(io::read_grd(p) == m);

    spit(p, bytes + "x");
    CHECK_THROWS_AS(io::read_grd(p), FormatError);
    spit(p, bytes.substr(0, bytes.size() - 1));
    CHECK_THROWS_AS(io::read_grd(p), FormatError);
    spit(p, "GRD2" + bytes.substr(4));
    CHECK_THROWS_AS(io::read_grd(p), FormatError);
    CHECK_THROWS_AS(io::read_grd(dir / "absent.grd"), Error);
}

TEST_CASE("malformed case files are rejected") {
    TempDir dir("malformed");
    const fs::path p = dir / "bad.json";
    spit(p, "{not json");
    CHECK_THROWS(io::read_case(p));
    spit(p, R"({"version": 2})");
    CHECK_THROWS_AS(io::read_case(p), FormatError);

    io::write_case(p, sample_case(2));
    io::Json j = io::read_json(p);
    j["delta_w"][0].push_back(1.0);
    spit(p, j.dump());
    CHECK_THROWS_AS(io::read_case(p), Error);

    j = io::read_json(p);
    io::write_case(p, sample_case(2));
    j = io::read_json(p);
    j["delta_w"][0][0] = "x";
    spit(p, j.dump());
    CHECK_THROWS(io::read_case(p));
}

TEST_CASE("decoder files round-trip") {
    TempDir dir("decoder");
    gm::ToyDecoder dec{Matrix{{1, 2, 3}, {4, 5, 6}}, {0.1, 0.2, 0.3}, Matrix{{1}, {2}, {3}, {4}}};
    io::write_decoder(dir / "d.json", dec);
    const auto back = io::read_decoder(dir / "d.json");
    CHECK(back.W == dec.W);
    CHECK(back.b == dec.b);
    CHECK(back.embedding == dec.embedding);
}

TEST_CASE("cli simulate, attack and eval chain") {
    TempDir dir("chain");
    const std::string cases = (dir / "cases").string();
    REQUIRE(cli_run({"simulate", "--mode", "batch", "--n", "5", "--d", "32", "--classes", "50", "--seed", "10",
                     "--count", "3", "--out", cases})
                .code == cli::kOk);
    std::vector<std::string> files;
    for (int s = 10; s < 13; ++s) files.push_back(cases + "/case-" + std::to_string(s) + ".json");
    for (const auto& f : files) CHECK(fs::exists(f));

    std::vector<std::string> args{"attack", "rlg"};
    args.insert(args.end(), files.begin(), files.end());
    const std::string report = (dir / "rlg.json").string();
    args.insert(args.end(), {"--report", report});
    REQUIRE(cli_run(args).code == cli::kOk);
    const io::Json rep = io::read_json(report);
    CHECK(rep["per_case"].size() == 3);
    CHECK(rep["aggregate"]["exact_match"].get<double>() == 1.0);

    // A second run differs only in timing.
    const std::string again = (dir / "rlg2.json").string();
    args.back() = again;
    REQUIRE(cli_run(args).code == cli::kOk);
    CHECK(strip_timing(io::read_json(report)) .dump()== strip_timing(io::read_json(again)).dump());

    const auto csv = cli_run({"eval", "--reports", report, "--format", "csv"});
    CHECK(csv.code == cli::kOk);
    CHECK(csv.out.find("rlg,3,1,1,1,1,0,0") != std::string::npos);

    io::Json tampered = io::read_json(report);
    tampered["aggregate"]["precision"] = 0.5;
    spit(dir / "tampered.json", tampered.dump());
    CHECK(cli_run({"eval", "--reports", (dir / "tampered.json").string()}).code == cli::kUsage);
}

TEST_CASE("cli skip-existing leaves reports untouched") {
    TempDir dir("skip");
    const std::string c = (dir / "c.json").string();
    REQUIRE(cli_run({"simulate", "--mode", "single", "--seed", "3", "--out", c}).code == cli::kOk);
    const std::string report = (dir / "r.json").string();
    spit(report, "sentinel");
    CHECK(cli_run({"--skip-existing", "attack", "idlg", c, "--report", report}).code == cli::kOk);
    CHECK(slurp(report) == "sentinel");
    CHECK(cli_run({"attack", "idlg", c, "--report", report}).code == cli::kOk);
    CHECK(io::read_json(report)["aggregate"]["exact_match"].get<double>() == 1.0);
}

TEST_CASE("cli keep-going records failures and still exits nonzero") {
    TempDir dir("keep");
    const std::string good = (dir / "good.json").string();
    const std::string wide = (dir / "wide.json").string();
    REQUIRE(cli_run({"simulate", "--n", "3", "--d", "16", "--classes", "30", "--seed", "1", "--out", good}).code ==
            cli::kOk);
    REQUIRE(cli_run({"simulate", "--n", "40", "--d", "16", "--classes", "30", "--seed", "2", "--out", wide}).code ==
            cli::kOk);
    const std::string report = (dir / "r.json").string();
    CHECK(cli_run({"attack", "rlg", good, wide, "--report", report}).code == cli::kCaseFailed);
    CHECK_FALSE(fs::exists(report));
    CHECK(cli_run({"--keep-going", "attack", "rlg", good, wide, "--report", report}).code == cli::kCaseFailed);
    const io::Json rep = io::read_json(report);
    CHECK(rep["aggregate"]["errors"].get<int>() == 1);
    CHECK(rep["per_case"][1].contains("error"));
}

TEST_CASE("cli defend marks the case and refuses a second defense") {
    TempDir dir("defend");
    const std::string c = (dir / "c.json").string();
    const std::string d = (dir / "d.json").string();
    REQUIRE(cli_run({"simulate", "--n", "3", "--seed", "4", "--out", c}).code == cli::kOk);
    CHECK(cli_run({"defend", "sign", c, "--out", d}).code == cli::kOk);
    const io::CaseFile defended = io::read_case(d);
    REQUIRE(defended.defense_applied.has_value());
    CHECK(defended.defense_applied->describe() == "sign");
    CHECK(cli_run({"defend", "drop", d, "--rate", "0.5", "--out", (dir / "e.json").string()}).code == cli::kUsage);
}

TEST_CASE("cli usage errors exit with the usage code") {
    CHECK(cli_run({"attack", "nope", "x.json", "--report", "r.json"}).code == cli::kUsage);
    CHECK(cli_run({"attack", "rlg", "/nonexistent/x.json", "--report", "/tmp/r.json"}).code == cli::kUsage);
    CHECK(cli_run({"simulate"}).code == cli::kUsage);
    CHECK(cli_run({"bogus"}).code == cli::kUsage);
    CHECK(cli_run({"--help"}).code == cli::kOk);
}

TEST_CASE("cli seed falls back to the environment") {
    TempDir dir("env");
    ::setenv("GRADLEAK_SEED", "321", 1);
    const auto r = cli_run({"simulate", "--n", "2", "--out", (dir / "c.json").string()});
    ::unsetenv("GRADLEAK_SEED");
    REQUIRE(r.code == cli::kOk);
    CHECK(io::read_case(dir / "c.json").scenario.seed == 321);
    ::setenv("GRADLEAK_SEED", "abc", 1);
    CHECK(cli_run({"simulate", "--out", (dir / "d.json").string()}).code == cli::kUsage);
    ::unsetenv("GRADLEAK_SEED");
}

TEST_CASE("cli gradient matching recovers a short transcript") {
    TempDir dir("gm");
    const std::string c = (dir / "c.json").string();
    const std::string dec = (dir / "dec.json").string();
    REQUIRE(cli_run({"simulate", "--mode", "sequence", "--n", "3", "--d", "12", "--classes", "30", "--embed-dim",
                     "4", "--labels", "4,17,9", "--seed", "5", "--decoder-out", dec, "--out", c})
                .code == cli::kOk);
    const std::string report = (dir / "gm.json").string();
    REQUIRE(cli_run({"gm", c, "--decoder", dec, "--bow", "--restarts", "3", "--report", report}).code == cli::kOk);
    const io::Json j = io::read_json(report);
    CHECK(j["transcript"] == io::Json({4, 17, 9}));
    CHECK(j["variable_count"].get<int>() == 3 * (8 + 3));
}
