#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dnspin/config_io.hpp"

using namespace dnspin;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("dnspin_cli_test_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream s;
    s << f.rdbuf();
    return s.str();
}

void put(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f << s;
}

struct Run {
    int code;
    std::string out;
};

Run cli(const std::string& args, const fs::path& dir) {
    auto log = dir / "stdout.txt";
    std::string cmd = std::string(DNSPIN_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    int st = std::system(cmd.c_str());
    return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, slurp(log)};
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config round-trips bit-exactly") {
    ExperimentConfig c;
    c.subcommand = "roundtrip";
    c.seed = 18446744073709551557ull;
    c.metric = "random";
    c.metric_amp = 0.1 + 1e-17;
    c.connection_amp = std::nextafter(1.0 / 3.0, 1.0);
    c.mass = 5e-324;
    c.T = 1.0 + std::numeric_limits<double>::epsilon();
    c.solver_tol = 1.2345678901234567e-11;
    c.lambdas = {8.5, 16.0, 1e300};
    c.point = {0.1, -0.2};
    c.n = 3;
    c.tol = 3e-9;
    auto back = parse_config(serialize_config(c));
    CHECK(back == c);
    CHECK(serialize_config(back) == serialize_config(c));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e3, 1e3);
    for (int i = 0; i < 50; ++i) {
        c.metric_amp = u(rng) * std::pow(10.0, i % 20 - 10);
        c.potential_amp = std::nextafter(c.metric_amp, 0.0);
        CHECK(parse_config(serialize_config(c)) == c);
    }
}

TEST_CASE("config parse errors name the problem") {
    auto msg = [](const std::string& text) {
        try {
            parse_config(text);
        } catch (const ParseError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK_THAT(msg(""), Catch::Matchers::ContainsSubstring("empty config"));
    CHECK_THAT(msg("[run]\nsubcommand = roundtrip\nbogus = 1\n"), Catch::Matchers::ContainsSubstring("run.bogus"));
    CHECK_THAT(msg("[run]\nsubcommand = roundtrip\n[model]\nn = two\n"), Catch::Matchers::ContainsSubstring("model.n"));
    CHECK_THAT(msg("[run]\nsubcommand = roundtrip\n[model]\nmass = 1.5x\n"), Catch::Matchers::ContainsSubstring("model.mass"));
    CHECK_THAT(msg("[run]\nsubcommand = fly\n"), Catch::Matchers::ContainsSubstring("unknown subcommand"));
    CHECK_THAT(msg("[run]\nsubcommand = roundtrip\n[model]\nmetric = torus\n"), Catch::Matchers::ContainsSubstring("model.metric"));
    CHECK_THAT(msg("[model]\nn = 2\n"), Catch::Matchers::ContainsSubstring("missing run.subcommand"));
    CHECK_THAT(msg("[run]\nsubcommand = roundtrip\n[grid]\nnt = 6\n"), Catch::Matchers::ContainsSubstring("grid"));
    CHECK_THAT(msg("[run\nsubcommand = roundtrip\n"), Catch::Matchers::ContainsSubstring(":1:"));
}

TEST_CASE("CSV cells use 17 significant digits and quote strings") {
    Table t{"x", {"a", "b", "c"}, {{0.1, (long long)-3, std::string("p,q")}, {1.0 / 3.0, (long long)0, std::string("plain")}}};
    CHECK(table_csv(t) == "a,b,c\n0.10000000000000001,-3,\"p,q\"\n0.33333333333333331,0,plain\n");
}

TEST_CASE("sha256 matches the standard test vector") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("unknown subcommand is a domain error in the library") {
    ExperimentConfig c;
    c.subcommand = "nope";
    CHECK_THROWS_AS(run_experiment(c), DomainError);
}

TEST_CASE("cli: help lists every subcommand") {
    auto d = scratch("help");
    auto r = cli("--help", d);
    CHECK(r.code == 0);
    for (auto& [name, desc] : subcommand_catalog()) {
        CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring(name));
        CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring(desc));
    }
}

TEST_CASE("cli: usage and parse errors exit 2") {
    auto d = scratch("usage");
    put(d / "empty.ini", "");
    CHECK(cli("--config " + (d / "empty.ini").string(), d).code == 2);
    CHECK(cli("teleport", d).code == 2);
    CHECK(cli("", d).code == 2);
    CHECK(cli("roundtrip --threads -1", d).code == 2);
    put(d / "bad.ini", "[run]\nsubcommand = roundtrip\n[grid]\nnn = 4\n");
    auto r = cli("--config " + (d / "bad.ini").string(), d);
    CHECK(r.code == 2);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("grid"));
}

TEST_CASE("cli: verify-clifford writes residual CSV and a hashed manifest") {
    auto d = scratch("clifford");
    auto out = d / "out";
    auto r = cli("verify-clifford --out " + out.string() + " --threads 1", d);
    REQUIRE(r.code == 0);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("PASS clifford_max_residual"));
    auto csv = slurp(out / "clifford.csv");
    CHECK(count_lines(csv) == 6);
    CHECK(csv.rfind("n,k,relation_residual,skew_residual,trace_orthonormality_residual\n", 0) == 0);
    std::istringstream man(slurp(out / "manifest.txt"));
    std::string line;
    std::getline(man, line);
    CHECK(line.rfind("# generated ", 0) == 0);
    int files = 0;
    while (std::getline(man, line)) {
        auto hash = line.substr(0, 64), name = line.substr(66);
        CHECK(sha256_hex(slurp(out / name)) == hash);
        ++files;
    }
    CHECK(files == 3);
    // the echoed config reproduces the run
    auto echoed = parse_config_file((out / "config.ini").string());
    CHECK(echoed.subcommand == "verify-clifford");
    CHECK(echoed.out == out.string());
}

TEST_CASE("cli: roundtrip passes and a tighter tolerance exits 1") {
    auto d = scratch("roundtrip");
    put(d / "rt.ini", "[run]\nsubcommand = roundtrip\nseed = 7\n[model]\nN = 2\n");
    auto r = cli("--config " + (d / "rt.ini").string() + " --out " + (d / "a").string(), d);
    CHECK(r.code == 0);
    auto csv = slurp(d / "a" / "roundtrip.csv");
    CHECK(count_lines(csv) == 1 + 2 * 2 * 2 * 6);
    put(d / "tight.ini", "[run]\nsubcommand = roundtrip\nseed = 7\n[check]\ntol = 1e-300\n");
    r = cli("--config " + (d / "tight.ini").string() + " --out " + (d / "b").string(), d);
    CHECK(r.code == 1);
    CHECK_THAT(r.out, Catch::Matchers::ContainsSubstring("FAIL max_rel_error"));
}

TEST_CASE("cli: flat trivial data has only the principal symbol") {
    auto d = scratch("flat");
    put(d / "f.ini", "[run]\nsubcommand = symbol-forward\n[model]\nn = 3\n[symbol]\ninstances = 1\n");
    auto r = cli("--config " + (d / "f.ini").string() + " --out " + (d / "o").string(), d);
    REQUIRE(r.code == 0);
    std::istringstream csv(slurp(d / "o" / "symbols.csv"));
    std::string line;
    std::getline(csv, line);
    int rows = 0;
    while (std::getline(csv, line)) {
        CHECK(line.rfind("1,", 0) == 0);
        ++rows;
    }
    CHECK(rows == 3 * 4);  // three xi samples, 2 x 2 entries
}

TEST_CASE("cli: same config and seed give byte-identical outputs") {
    auto d = scratch("determinism");
    put(d / "s.ini", "[run]\nsubcommand = symbol-forward\n[model]\nmetric = random\nconnection = random_normal\nN = 2\n[symbol]\ninstances = 3\n");
    for (auto t : {"1", "2"}) {
        std::string o = (d / (std::string("o") + t)).string();
        REQUIRE(cli("--config " + (d / "s.ini").string() + " --seed 99 --threads " + t + " --out " + o, d).code == 0);
    }
    for (auto& e : fs::directory_iterator(d / "o1")) {
        auto name = e.path().filename();
        if (name == "manifest.txt" || name == "config.ini") continue;
        CHECK(slurp(e.path()) == slurp(d / "o2" / name));
    }
    auto strip = [](std::string s) { return s.substr(s.find('\n')); };
    // config.ini records the output directory, so its hash differs
    auto m1 = strip(slurp(d / "o1" / "manifest.txt")), m2 = strip(slurp(d / "o2" / "manifest.txt"));
    auto drop_config = [](const std::string& s) {
        std::istringstream is(s);
        std::string line, r;
        while (std::getline(is, line))
            if (line.find("config.ini") == std::string::npos) r += line + "\n";
        return r;
    };
    CHECK(drop_config(m1) == drop_config(m2));
    auto r = cli("--config " + (d / "s.ini").string() + " --seed 100 --out " + (d / "o3").string(), d);
    REQUIRE(r.code == 0);
    CHECK(slurp(d / "o1" / "symbols.csv") != slurp(d / "o3" / "symbols.csv"));
}
