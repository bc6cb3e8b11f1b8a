#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "qpfield/io.hpp"

using namespace qpfield;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    const fs::path d = fs::temp_directory_path() / ("qpfield_cli_" + tag);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

int run_cli(const std::string& args, const fs::path& out_dir) {
    const std::string cmd = std::string(QPFIELD_CLI_PATH) + " " + args + " --out-dir " +
                            out_dir.string() + " > " + (out_dir / "stdout.txt").string() +
                            " 2>&1";
    const int rc = std::system(cmd.c_str());
    REQUIRE(rc != -1);
    REQUIRE(WIFEXITED(rc));
    return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("field CSV round trip is bit exact") {
    std::mt19937 rng(31007);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    LatticeGeometry g(3, 2, 1);
    LatticeField f(g);
    for (std::size_t i = 0; i < g.points; ++i) f[i] = {u(rng), u(rng)};
    f[3] = {1.0 / 3.0, -1e-301};
    f[5] = {5e17, 0.125};

    const auto dir = fresh_dir("roundtrip");
    const auto path = dir / "field.csv";
    write_field_csv(path, f);
    const auto back = read_field_csv(path);
    REQUIRE(back.geometry() == g);
    for (std::size_t i = 0; i < g.points; ++i) {
        REQUIRE(back[i].real() == f[i].real());
        REQUIRE(back[i].imag() == f[i].imag());
    }

    SECTION("header is validated on read") {
        atomic_write(path, "bogus,columns\n0,1,2\n");
        CHECK_THROWS_AS(read_field_csv(path), std::runtime_error);
    }
    SECTION("missing sidecar is reported") {
        fs::remove(path.string() + ".json");
        CHECK_THROWS_AS(read_field_csv(path), std::runtime_error);
    }
}

TEST_CASE("doubles print with full round-trip precision") {
    for (double x : {1.0 / 3.0, 2.2250738585072014e-308, 1.7976931348623157e308,
                     -0.1, 6561.0, 1e-17}) {
        const std::string s = fmt_double(x);
        CHECK(std::strtod(s.c_str(), nullptr) == x);
    }
}

TEST_CASE("atomic writer creates parents and never leaves partial files") {
    const auto dir = fresh_dir("atomic");
    const auto nested = dir / "a" / "b" / "data.csv";
    atomic_write(nested, "x\n1\n");
    CHECK(slurp(nested) == "x\n1\n");
    CHECK_FALSE(fs::exists(nested.string() + ".tmp"));
}

TEST_CASE("workbench selftest passes") {
    const auto dir = fresh_dir("selftest");
    CHECK(run_cli("selftest", dir) == 0);
    const auto csv = slurp(dir / "selftest.csv");
    CHECK(csv.rfind("check,pass,measure", 0) == 0);
    CHECK(csv.find(",0,") == std::string::npos);  // no failed check rows
}

TEST_CASE("identical seeds give byte-identical outputs") {
    const auto d1 = fresh_dir("det1");
    const auto d2 = fresh_dir("det2");
    const std::string args = "schwinger --p 3 --N 1 --K 1 --seed 42 --mc-samples 300";
    REQUIRE(run_cli(args, d1) == 0);
    REQUIRE(run_cli(args, d2) == 0);
    CHECK(slurp(d1 / "schwinger.csv") == slurp(d2 / "schwinger.csv"));

    // manifests may differ only in the timestamp field
    auto m1 = json::parse(slurp(d1 / "manifest.json"));
    auto m2 = json::parse(slurp(d2 / "manifest.json"));
    m1.erase("timestamp");
    m2.erase("timestamp");
    CHECK(m1 == m2);

    const auto d3 = fresh_dir("det3");
    REQUIRE(run_cli("schwinger --p 3 --N 1 --K 1 --seed 43 --mc-samples 300", d3) == 0);
    CHECK(slurp(d1 / "schwinger.csv") != slurp(d3 / "schwinger.csv"));
}

TEST_CASE("manifest echoes the resolved configuration") {
    const auto dir = fresh_dir("manifest");
    REQUIRE(run_cli("schwinger --seed 7 --cells 0,2,5", dir) == 0);
    const auto m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m.at("command") == "schwinger");
    CHECK(m.at("seed") == 7);
    CHECK(m.at("parameters").at("order") == 3);
    CHECK(m.at("parameters").at("noise").contains("interaction"));
    CHECK(m.at("parameters").at("noise").at("interaction").contains("coeffs"));
    CHECK(m.at("parameters").at("noise").at("levy").at("sigma") == 1.0);
    CHECK(m.at("parameters").at("symbol").at("poly").is_array());
    const auto outs = m.at("outputs").get<std::vector<std::string>>();
    CHECK(std::find(outs.begin(), outs.end(), "schwinger.csv") != outs.end());
    CHECK(m.contains("timestamp"));
    CHECK(m.at("version").is_string());
}

TEST_CASE("green run emits a decay table with one row per sphere") {
    const auto dir = fresh_dir("green");
    REQUIRE(run_cli("green --p 3 --N 1 --K 3 --alpha 1 --m 1", dir) == 0);
    const auto csv = slurp(dir / "decay.csv");
    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "r,lognorm,mean_value,log_abs_mean,cells");
    int rows = 0;
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 6);  // norm exponents -K+1 .. K

    const auto kernel = slurp(dir / "green.csv");
    CHECK(kernel.rfind("r,cells,mean_value,windowed_oracle,continuum_bound", 0) == 0);
}

TEST_CASE("admissibility screening drives the exit code") {
    const auto dir = fresh_dir("levy");
    {
        std::ofstream os(dir / "quartic.json");
        os << R"({"coeffs":[0,0,0,24.0],"convention":"factorial","radius":1.0})" << "\n";
    }
    CHECK(run_cli("levy-check --h " + (dir / "quartic.json").string(), dir) == 3);
    const auto out = slurp(dir / "stdout.txt");
    CHECK(out.find("rejected") != std::string::npos);
    CHECK(out.find("degree") != std::string::npos);

    CHECK(run_cli("levy-check", dir) == 0);  // default unit Gaussian passes
    const auto m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m.at("parameters").at("rejected") == false);
}

TEST_CASE("transform coefficients gate the wick run") {
    const auto dir = fresh_dir("wick");
    REQUIRE(run_cli("wick --order 4", dir) == 0);
    const auto csv = slurp(dir / "wick.csv");
    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "order,re,im,re_closed,im_closed,rel_diff");
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto last = line.rfind(',');
        const double diff = std::strtod(line.c_str() + last + 1, nullptr);
        CHECK(diff <= 1e-8);
        ++rows;
    }
    CHECK(rows == 5);
}

TEST_CASE("invalid configurations exit with the validation code") {
    const auto dir = fresh_dir("invalid");
    CHECK(run_cli("green --K 99", dir) == 2);
    CHECK(run_cli("definitely-not-a-command", dir) == 2);
    CHECK(run_cli("sample --h missing-file.json", dir) == 2);
    CHECK(run_cli("schwinger --cells 0,abc", dir) == 2);
}

TEST_CASE("bench reports pass their correctness gate") {
    const auto dir = fresh_dir("bench");
    REQUIRE(run_cli("bench --levels 1 --levels 2", dir) == 0);
    const auto csv = slurp(dir / "bench.csv");
    std::istringstream is(csv);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "size,fft_ms,naive_ms,speedup,max_abs_diff,gate");
    int rows = 0;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        CHECK(line.back() == '1');  // gate column
        ++rows;
    }
    CHECK(rows == 2);
}
