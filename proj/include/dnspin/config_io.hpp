#pragma once

// Config parsing, CSV writing and the output manifest. Needs Boost and OpenSSL.

#include <openssl/evp.h>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dnspin/experiments.hpp"

namespace dnspin {

namespace cfgio {

namespace pt = boost::property_tree;

inline std::string fmt_double(double v) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, r.ptr);
}

inline std::string fmt_list(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
    return s;
}

struct Field {
    std::string section, key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

[[noreturn]] inline void bad(const std::string& where, const std::string& val, const std::string& what) {
    throw ParseError(where + ": cannot read '" + val + "' as " + what);
}

inline double to_double(const std::string& where, const std::string& s) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(where, s, "a number");
    return v;
}

inline long long to_int(const std::string& where, const std::string& s) {
    long long v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(where, s, "an integer");
    return v;
}

inline std::uint64_t to_u64(const std::string& where, const std::string& s) {
    std::uint64_t v = 0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(where, s, "an unsigned integer");
    return v;
}

inline std::vector<double> to_list(const std::string& where, const std::string& s) {
    std::vector<double> v;
    if (s.empty()) return v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto a = item.find_first_not_of(" \t"), b = item.find_last_not_of(" \t");
        v.push_back(to_double(where, a == std::string::npos ? "" : item.substr(a, b - a + 1)));
    }
    return v;
}

#define DNSPIN_INT(sec, name)                                                                        \
    Field {                                                                                          \
        sec, #name, [](const ExperimentConfig& c) { return std::to_string(c.name); },               \
            [](ExperimentConfig& c, const std::string& v) { c.name = int(to_int(sec "." #name, v)); } \
    }
#define DNSPIN_DBL(sec, name)                                                                   \
    Field {                                                                                     \
        sec, #name, [](const ExperimentConfig& c) { return fmt_double(c.name); },               \
            [](ExperimentConfig& c, const std::string& v) { c.name = to_double(sec "." #name, v); } \
    }
#define DNSPIN_STR(sec, name)                                                                                \
    Field {                                                                                                  \
        sec, #name, [](const ExperimentConfig& c) { return c.name; }, [](ExperimentConfig& c, const std::string& v) { c.name = v; } \
    }
#define DNSPIN_LST(sec, name)                                                                  \
    Field {                                                                                    \
        sec, #name, [](const ExperimentConfig& c) { return fmt_list(c.name); },                \
            [](ExperimentConfig& c, const std::string& v) { c.name = to_list(sec "." #name, v); } \
    }

inline const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        DNSPIN_STR("run", subcommand),
        Field{"run", "seed", [](const ExperimentConfig& c) { return std::to_string(c.seed); },
              [](ExperimentConfig& c, const std::string& v) { c.seed = to_u64("run.seed", v); }},
        DNSPIN_STR("run", out),
        DNSPIN_INT("run", threads),
        DNSPIN_INT("model", n),
        DNSPIN_INT("model", N),
        DNSPIN_STR("model", metric),
        DNSPIN_DBL("model", metric_amp),
        DNSPIN_STR("model", connection),
        DNSPIN_DBL("model", connection_amp),
        DNSPIN_STR("model", potential),
        DNSPIN_DBL("model", potential_amp),
        DNSPIN_DBL("model", mass),
        DNSPIN_INT("grid", nt),
        DNSPIN_INT("grid", nn),
        DNSPIN_DBL("grid", T),
        DNSPIN_INT("grid", order_t),
        DNSPIN_INT("grid", order_n),
        DNSPIN_INT("grid", levels),
        DNSPIN_STR("grid", solver),
        DNSPIN_DBL("grid", solver_tol),
        DNSPIN_INT("symbol", depth),
        DNSPIN_INT("symbol", instances),
        DNSPIN_LST("symbol", point),
        DNSPIN_STR("symbol", source),
        DNSPIN_LST("symbol", lambdas),
        DNSPIN_INT("symbol", kappa_max),
        DNSPIN_INT("symbol", n_min),
        DNSPIN_INT("symbol", n_max),
        DNSPIN_DBL("check", tol),
        DNSPIN_DBL("check", min_rate),
    };
    return f;
}

#undef DNSPIN_INT
#undef DNSPIN_DBL
#undef DNSPIN_STR
#undef DNSPIN_LST

}  // namespace cfgio

/// Every referenced family must exist and the grid must be constructible.
inline void validate(const ExperimentConfig& c) {
    auto one_of = [](const std::string& key, const std::string& v, std::initializer_list<const char*> ok) {
        for (auto o : ok)
            if (v == o) return;
        throw ParseError(key + ": unknown value '" + v + "'");
    };
    bool known = false;
    for (auto& [name, _] : subcommand_catalog()) known |= name == c.subcommand;
    if (!known) throw ParseError("run.subcommand: unknown subcommand '" + c.subcommand + "'");
    one_of("model.metric", c.metric, {"flat", "conformal", "random", "sphere"});
    one_of("model.connection", c.connection, {"zero", "constant", "trig_abelian", "random", "random_normal"});
    one_of("model.potential", c.potential, {"zero", "constant", "random"});
    one_of("grid.solver", c.solver, {"auto", "direct", "iterative"});
    one_of("symbol.source", c.source, {"exact", "numeric"});
    if (c.n < 2 || c.n > 3) throw ParseError("model.n: must be 2 or 3");
    if (c.N < 1) throw ParseError("model.N: must be >= 1");
    if (c.levels < 1) throw ParseError("grid.levels: must be >= 1");
    if (c.depth < 1) throw ParseError("symbol.depth: must be >= 1");
    if (c.instances < 1) throw ParseError("symbol.instances: must be >= 1");
    if (c.threads < 0) throw ParseError("run.threads: must be >= 0");
    try {
        (void)SlabGrid::make(c.n, c.nt, c.nn, c.T, c.order_t, c.order_n);
    } catch (const Error& e) {
        throw ParseError(std::string("grid: ") + e.what());
    }
}

/// Reads keys without validating; the caller may still override fields.
inline ExperimentConfig parse_config_raw(std::istream& is, const std::string& origin = "config") {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    try {
        pt::read_ini(is, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ParseError(origin + ":" + std::to_string(e.line()) + ": " + e.message());
    }
    if (tree.empty()) throw ParseError(origin + ": empty config");
    ExperimentConfig c;
    for (auto& [sec, body] : tree) {
        if (body.empty() && !body.data().empty()) throw ParseError(origin + ": key '" + sec + "' outside any section");
        for (auto& [key, val] : body) {
            const cfgio::Field* f = nullptr;
            for (auto& cand : cfgio::fields())
                if (cand.section == sec && cand.key == key) f = &cand;
            if (!f) throw ParseError(origin + ": unknown key '" + sec + "." + key + "'");
            f->set(c, val.data());
        }
    }
    return c;
}

inline ExperimentConfig parse_config(std::istream& is, const std::string& origin = "config") {
    auto c = parse_config_raw(is, origin);
    if (c.subcommand.empty()) throw ParseError(origin + ": missing run.subcommand");
    validate(c);
    return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
    std::istringstream is(text);
    return parse_config(is);
}

inline ExperimentConfig parse_config_file(const std::string& path, bool raw = false) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open config '" + path + "'");
    return raw ? parse_config_raw(f, path) : parse_config(f, path);
}

inline std::string serialize_config(const ExperimentConfig& c) {
    std::ostringstream o;
    std::string sec;
    for (auto& f : cfgio::fields()) {
        if (f.section != sec) {
            o << (sec.empty() ? "" : "\n") << "[" << f.section << "]\n";
            sec = f.section;
        }
        o << f.key << " = " << f.get(c) << "\n";
    }
    return o.str();
}

inline std::string format_cell(const Cell& c) {
    if (auto s = std::get_if<std::string>(&c)) {
        if (s->find_first_of(",\"\n") == std::string::npos) return *s;
        std::string q = "\"";
        for (char ch : *s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        return q + "\"";
    }
    if (auto i = std::get_if<long long>(&c)) return std::to_string(*i);
    return cfgio::fmt_double(std::get<double>(c));
}

inline std::string table_csv(const Table& t) {
    std::string s;
    for (size_t i = 0; i < t.header.size(); ++i) s += (i ? "," : "") + t.header[i];
    s += "\n";
    for (auto& row : t.rows) {
        for (size_t i = 0; i < row.size(); ++i) s += (i ? "," : "") + format_cell(row[i]);
        s += "\n";
    }
    return s;
}

inline std::string checks_csv(const std::vector<Check>& cs) {
    Table t{"checks", {"check", "value", "bound", "relation", "pass"}, {}};
    for (auto& c : cs) t.rows.push_back({c.name, c.value, c.bound, std::string(c.upper ? "<=" : ">="), (long long)c.pass()});
    return table_csv(t);
}

inline std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw Error("sha256 failed");
    static const char* hx = "0123456789abcdef";
    std::string s;
    for (unsigned i = 0; i < len; ++i) {
        s += hx[md[i] >> 4];
        s += hx[md[i] & 15];
    }
    return s;
}

/// Writes config.ini, one CSV per table, checks.csv, text artifacts and manifest.txt.
inline std::vector<std::string> write_outputs(const std::filesystem::path& dir, const ExperimentConfig& c, const ExperimentResult& r) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> files;
    files.emplace_back("config.ini", serialize_config(c));
    for (auto& t : r.tables) files.emplace_back(t.name + ".csv", table_csv(t));
    files.emplace_back("checks.csv", checks_csv(r.checks));
    for (auto& [name, body] : r.texts) files.emplace_back(name, body);
    std::ostringstream man;
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    man << "# generated " << ts << "\n";
    std::vector<std::string> names;
    for (auto& [name, body] : files) {
        std::ofstream f(dir / name, std::ios::binary);
        f << body;
        if (!f) throw Error("cannot write " + (dir / name).string());
        man << sha256_hex(body) << "  " << name << "\n";
        names.push_back(name);
    }
    std::ofstream m(dir / "manifest.txt", std::ios::binary);
    m << man.str();
    names.push_back("manifest.txt");
    return names;
}

}  // namespace dnspin
