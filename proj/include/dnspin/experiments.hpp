#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "dnspin/gauge.hpp"
#include "dnspin/recovery.hpp"

namespace dnspin {

/// Everything a subcommand reads. Negative `tol` means the subcommand default.
struct ExperimentConfig {
    std::string subcommand;
    std::uint64_t seed = 1;
    std::string out = "dnspin_out";
    int threads = 0;

    int n = 2, N = 1;
    std::string metric = "flat";
    double metric_amp = 0.15;
    std::string connection = "zero";
    double connection_amp = 0.5;
    std::string potential = "zero";
    double potential_amp = 0.5;
    double mass = 0.0;

    int nt = 32, nn = 33;
    double T = 1.0;
    int order_t = 2, order_n = 2;
    int levels = 2;
    std::string solver = "auto";
    double solver_tol = 1e-10;

    int depth = 2;
    int instances = 2;
    std::vector<double> point;  // boundary point x'; empty means 0.25 in every direction
    std::string source = "exact";
    std::vector<double> lambdas = {8, 16, 32};
    int kappa_max = 8;
    int n_min = 2, n_max = 6;

    double tol = -1.0;
    double min_rate = 1.9;

    bool operator==(const ExperimentConfig&) const = default;
};

inline const std::vector<std::pair<std::string, std::string>>& subcommand_catalog() {
    static const std::vector<std::pair<std::string, std::string>> c = {
        {"verify-clifford", "gamma matrix relation, skew and trace residuals for n_min..n_max"},
        {"lichnerowicz", "D^2 versus the Lichnerowicz form: flat exactness and refinement rate"},
        {"dn-compute", "dense DN matrix for the configured data"},
        {"dn-oracle", "flat slab DN eigenvalues against the coth oracle, with rates"},
        {"symbol-forward", "symbol recursion b_1 .. b_{1-K} at a boundary point, with residuals"},
        {"recover", "boundary jets from exact or numerically estimated symbols"},
        {"roundtrip", "forward symbols of random jets, recover, compare"},
        {"gauge-invariance", "DN map under a boundary-identity gauge, refinement rate"},
        {"normal-gauge", "Theta/dexp checks, normal gauge fixing and DN preservation"},
        {"ymd-residual", "Yang-Mills-Dirac residuals and current equivariance"},
        {"transport-equivalence", "path-transport gauge equivalence tester"},
        {"ck-residual", "Cauchy-Kovalevskaya residual, abelian Poisson solve"},
    };
    return c;
}

using Cell = std::variant<std::string, long long, double>;

struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<Cell>> rows;
};

struct Check {
    std::string name;
    double value = 0.0, bound = 0.0;
    bool upper = true;  // value <= bound, else value >= bound
    bool pass() const { return upper ? value <= bound : value >= bound; }
};

struct ExperimentResult {
    std::vector<Table> tables;
    std::vector<Check> checks;
    std::map<std::string, std::string> texts;  // extra text artifacts by file name
    bool pass() const {
        for (auto& c : checks)
            if (!c.pass()) return false;
        return true;
    }
};

namespace xp {

inline double tol_or(const ExperimentConfig& c, double d) { return c.tol >= 0 ? c.tol : d; }

inline double rate(double coarse, double fine) { return std::log2(coarse / fine); }

inline SolverKind solver_kind(const std::string& s) {
    if (s == "auto") return SolverKind::Auto;
    if (s == "direct") return SolverKind::Direct;
    if (s == "iterative") return SolverKind::Iterative;
    throw DomainError("unknown solver '" + s + "'");
}

inline SlabGrid grid_at(const ExperimentConfig& c, int level, int n) {
    int s = 1 << level;
    return SlabGrid::make(n, c.nt * s, (c.nn - 1) * s + 1, c.T, c.order_t, c.order_n);
}

inline std::vector<double> boundary_point(const ExperimentConfig& c) {
    if (c.point.empty()) return std::vector<double>(c.n - 1, 0.25);
    if (static_cast<int>(c.point.size()) != c.n - 1) throw DomainError("point must have n-1 coordinates");
    return c.point;
}

inline MetricField make_metric(const ExperimentConfig& c, std::mt19937_64& rng) {
    const int n = c.n;
    if (c.metric == "flat") return MetricField::flat(n);
    if (c.metric == "conformal") {
        ScalarField f;
        std::vector<int> k1(n - 1, 0), k2(n - 1, 0);
        k1[0] = 1;
        k2[n - 2] = 2;
        f.terms.push_back({c.metric_amp, 1, k1, 0.4});
        f.terms.push_back({0.5 * c.metric_amp, 2, std::vector<int>(n - 1, 0), 0.0});
        f.terms.push_back({0.75 * c.metric_amp, 0, k2, 1.3});
        return MetricField::conformal(n, f);
    }
    if (c.metric == "random") return random_metric(n, rng, c.metric_amp);
    if (c.metric == "sphere") {
        if (n != 2) throw DomainError("sphere metric needs n = 2");
        return MetricField::sphere(1.0, 1.0);
    }
    throw DomainError("unknown metric family '" + c.metric + "'");
}

/// Null for the zero connection.
inline std::shared_ptr<ConnectionSource> make_connection(const ExperimentConfig& c, std::mt19937_64& rng) {
    const int n = c.n, N = c.N;
    const MatC iI = cd(0, 1) * MatC::Identity(N, N);
    if (c.connection == "zero") return nullptr;
    if (c.connection == "constant") {
        auto A = std::make_shared<FamilyConnection>(n, N);
        for (int a = 0; a < n - 1; ++a) A->A[a].add(ScalarField::constant(c.connection_amp * (a % 2 ? -0.7 : 1.0), n), iI);
        return A;
    }
    if (c.connection == "trig_abelian") {
        if (N != 1) throw DomainError("trig_abelian connection needs N = 1");
        auto A = std::make_shared<FamilyConnection>(n, 1);
        for (int a = 0; a < n - 1; ++a) {
            std::vector<int> k(n - 1, 0);
            k[a] = 1;
            A->A[a].add(ScalarField::constant(0.6 * c.connection_amp, n), iI);
            A->A[a].add(ScalarField{{{0.4 * c.connection_amp, 0, k, 0.3 * (a + 1)}}}, iI);
            A->A[a].add(ScalarField::normal_power(0.5 * c.connection_amp, 1, n), iI);
        }
        return A;
    }
    if (c.connection == "random") return random_connection(n, N, rng, c.connection_amp, false);
    if (c.connection == "random_normal") return random_connection(n, N, rng, c.connection_amp, true);
    throw DomainError("unknown connection family '" + c.connection + "'");
}

inline MatrixField make_potential(const ExperimentConfig& c, std::mt19937_64& rng) {
    const int kN = build_gamma(c.n).k * c.N;
    if (c.potential == "zero") return MatrixField{};
    if (c.potential == "constant") {
        MatrixField Z;
        Z.add(ScalarField::constant(c.potential_amp, c.n), MatC::Identity(kN, kN));
        return Z;
    }
    if (c.potential == "random") return random_endo(c.n, kN, rng, c.potential_amp, true);
    throw DomainError("unknown potential family '" + c.potential + "'");
}

struct Model {
    MetricField metric;
    std::shared_ptr<ConnectionSource> conn;
    MatrixField Z;
};

inline Model make_model(const ExperimentConfig& c) {
    std::mt19937_64 rng(c.seed);
    Model m;
    m.metric = make_metric(c, rng);
    m.conn = make_connection(c, rng);
    m.Z = make_potential(c, rng);
    return m;
}

inline ConnectionGrid sample(const Model& m, const SlabGrid& g, int N) {
    return m.conn ? sample_connection(*m.conn, g) : zero_connection(g, N);
}

inline void add_cplx(std::vector<Cell>& row, cd v) {
    row.push_back(v.real());
    row.push_back(v.imag());
}

}  // namespace xp

// ---------------------------------------------------------------- subcommands

inline ExperimentResult run_verify_clifford(const ExperimentConfig& c) {
    if (c.n_min < 1 || c.n_max > 8 || c.n_min > c.n_max) throw DomainError("verify-clifford: need 1 <= n_min <= n_max <= 8");
    ExperimentResult R;
    Table t{"clifford", {"n", "k", "relation_residual", "skew_residual", "trace_orthonormality_residual"}, {}};
    double worst = 0.0;
    for (int n = c.n_min; n <= c.n_max; ++n) {
        auto g = build_gamma(n);
        MatC id = MatC::Identity(g.k, g.k);
        double rel = 0.0, skew = 0.0, tr = 0.0;
        for (int i = 0; i < n; ++i) {
            skew = std::max(skew, (g.gammas[i] + g.gammas[i].adjoint()).cwiseAbs().maxCoeff());
            for (int j = 0; j < n; ++j) {
                MatC a = g.gammas[i] * g.gammas[j] + g.gammas[j] * g.gammas[i];
                if (i == j) a += 2.0 * id;
                rel = std::max(rel, a.cwiseAbs().maxCoeff());
            }
        }
        std::vector<MatC> pairs;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) pairs.push_back(g.gammas[i] * g.gammas[j]);
        for (size_t a = 0; a < pairs.size(); ++a) {
            tr = std::max(tr, std::abs(pairs[a].trace()));
            for (size_t b = 0; b < pairs.size(); ++b)
                tr = std::max(tr, std::abs((pairs[a].adjoint() * pairs[b]).trace() / double(g.k) - (a == b ? 1.0 : 0.0)));
        }
        t.rows.push_back({(long long)n, (long long)g.k, rel, skew, tr});
        worst = std::max({worst, rel, skew, tr});
    }
    R.tables.push_back(t);
    R.checks.push_back({"clifford_max_residual", worst, xp::tol_or(c, 1e-12)});
    return R;
}

inline ExperimentResult run_lichnerowicz(const ExperimentConfig& c) {
    ExperimentResult R;
    Table t{"lichnerowicz", {"case", "nt", "nn", "residual", "rate"}, {}};
    auto resid = [&](const MetricField& m, const ConnectionSource* conn, int N, const SlabGrid& g) {
        auto S = make_setup(m, conn ? sample_connection(*conn, g) : zero_connection(g, N), g);
        std::mt19937_64 rng(c.seed);
        return lichnerowicz_residual(S, test_spinor(S, rng));
    };
    auto g0 = xp::grid_at(c, 0, c.n);
    double flat = resid(MetricField::flat(c.n), nullptr, c.N, g0);
    t.rows.push_back({std::string("flat-trivial"), (long long)g0.Nt[0], (long long)g0.Nn, flat, std::string("")});
    R.checks.push_back({"flat_trivial_residual", flat, xp::tol_or(c, 1e-12)});
    auto M = xp::make_model(c);
    bool trivial = c.metric == "flat" && !M.conn;
    std::vector<double> e;
    for (int l = 0; l < c.levels; ++l) {
        auto g = xp::grid_at(c, l, c.n);
        e.push_back(resid(M.metric, M.conn.get(), c.N, g));
        Cell r = l ? Cell(xp::rate(e[l - 1], e[l])) : Cell(std::string(""));
        t.rows.push_back({c.metric + "/" + c.connection, (long long)g.Nt[0], (long long)g.Nn, e[l], r});
    }
    R.tables.push_back(t);
    if (trivial)
        R.checks.push_back({"configured_residual", *std::max_element(e.begin(), e.end()), xp::tol_or(c, 1e-12)});
    else if (e.size() >= 2)
        R.checks.push_back({"refinement_rate", xp::rate(e[e.size() - 2], e.back()), c.min_rate, false});
    return R;
}

inline ExperimentResult run_dn_compute(const ExperimentConfig& c) {
    ExperimentResult R;
    auto M = xp::make_model(c);
    auto g = xp::grid_at(c, 0, c.n);
    auto S = make_setup(M.metric, xp::sample(M, g, c.N), g, M.Z.empty() ? nullptr : &M.Z, c.mass);
    DirichletSolver sv(S, c.solver_tol, xp::solver_kind(c.solver));
    auto D = dn_matrix(sv, c.metric + "/" + c.connection);
    Table t{"dn_matrix", {"row", "col", "re", "im"}, {}};
    for (int j = 0; j < D.M.cols(); ++j)
        for (int i = 0; i < D.M.rows(); ++i) {
            std::vector<Cell> row{(long long)i, (long long)j};
            xp::add_cplx(row, D.M(i, j));
            t.rows.push_back(row);
        }
    R.tables.push_back(t);
    double bound = 10.0 * g.Nt[0] * std::sqrt(double(D.M.rows()));
    R.tables.push_back({"dn_metadata",
                        {"key", "value"},
                        {{std::string("family"), D.family},
                         {std::string("n"), (long long)c.n},
                         {std::string("N"), (long long)c.N},
                         {std::string("nt"), (long long)g.Nt[0]},
                         {std::string("nn"), (long long)g.Nn},
                         {std::string("T"), c.T},
                         {std::string("order_t"), (long long)c.order_t},
                         {std::string("order_n"), (long long)c.order_n},
                         {std::string("m"), D.m},
                         {std::string("tolerance"), D.tol},
                         {std::string("normal_gauge"), (long long)D.normal_gauge},
                         {std::string("rows"), (long long)D.M.rows()},
                         {std::string("frobenius_norm"), D.M.norm()}}});
    R.checks.push_back({"dn_norm_bound", D.M.norm(), xp::tol_or(c, bound)});
    return R;
}

inline ExperimentResult run_dn_oracle(const ExperimentConfig& c) {
    if (c.n != 2) throw DomainError("dn-oracle: n must be 2");
    ExperimentResult R;
    Table t{"dn_oracle", {"level", "nt", "nn", "kappa", "dn_eigenvalue", "minus_abs_kappa", "slab_oracle", "abs_error", "observed_rate"}, {}};
    std::vector<std::vector<double>> err;
    for (int l = 0; l < c.levels; ++l) {
        auto g = xp::grid_at(c, l, 2);
        if (c.kappa_max > g.Nt[0] / 4) throw DomainError("dn-oracle: kappa_max exceeds nt/4");
        auto S = make_setup(MetricField::flat(2), zero_connection(g, 1), g);
        DirichletSolver sv(S, c.solver_tol, xp::solver_kind(c.solver));
        err.emplace_back();
        for (int k = 1; k <= c.kappa_max; ++k) {
            double ev = dn_mode_eigenvalue(sv, k), orc = flat_dn_oracle(k, c.T), e = std::abs(ev - orc);
            err.back().push_back(e);
            Cell r = l ? Cell(xp::rate(err[l - 1][k - 1], e)) : Cell(std::string(""));
            t.rows.push_back({(long long)l, (long long)g.Nt[0], (long long)g.Nn, (long long)k, ev, -double(k), orc, e, r});
        }
    }
    R.tables.push_back(t);
    double emax = *std::max_element(err.back().begin(), err.back().end());
    R.checks.push_back({"finest_max_abs_error", emax, xp::tol_or(c, 1e-2)});
    if (err.size() >= 2) {
        double ec = *std::max_element(err[err.size() - 2].begin(), err[err.size() - 2].end());
        R.checks.push_back({"max_error_rate", xp::rate(ec, emax), c.min_rate, false});
    }
    return R;
}

inline ExperimentResult run_symbol_forward(const ExperimentConfig& c) {
    ExperimentResult R;
    auto M = xp::make_model(c);
    auto in = forward_input(M.metric, M.conn.get(), c.N, M.Z.empty() ? nullptr : &M.Z, c.mass, xp::boundary_point(c), c.depth + 2);
    auto Q = q_symbols(in);
    auto b = solve_recursion(Q, c.depth);
    const int m = c.n - 1;
    std::vector<std::vector<double>> xis;
    for (int a = 0; a < m; ++a) xis.push_back(detail::unit(m, a));
    if (m > 1) xis.push_back(std::vector<double>(m, 1.0));
    std::vector<std::string> hdr = {"degree", "xi_index"};
    for (int a = 0; a < m; ++a) hdr.push_back("xi_" + std::to_string(a + 1));
    for (auto s : {"row", "col", "re", "im"}) hdr.push_back(s);
    Table t{"symbols", hdr, {}};
    for (auto& [d, h] : b.parts)
        for (size_t x = 0; x < xis.size(); ++x) {
            MatC v = eval(Q.ctx, h, xis[x]);
            for (int i = 0; i < v.rows(); ++i)
                for (int j = 0; j < v.cols(); ++j) {
                    std::vector<Cell> row{(long long)d, (long long)x};
                    for (double q : xis[x]) row.push_back(q);
                    row.push_back((long long)i);
                    row.push_back((long long)j);
                    xp::add_cplx(row, v(i, j));
                    t.rows.push_back(row);
                }
        }
    R.tables.push_back(t);
    R.texts["symbols.txt"] = dump(b);
    std::mt19937_64 rng(c.seed);
    auto res = recursion_residual(Q, b, c.depth, rng, 10);
    Table r{"recursion_residual", {"degree", "residual"}, {}};
    double worst = 0.0;
    for (size_t d = 0; d < res.size(); ++d) {
        r.rows.push_back({(long long)(2 - int(d)), res[d]});
        worst = std::max(worst, res[d]);
    }
    R.tables.push_back(r);

    // random family instances: principal symbol and recursion residual
    Table ri{"random_instances", {"instance", "n", "N", "b1_squared_minus_q2", "b1_minus_norm_error", "recursion_residual"}, {}};
    const int per = (100 + c.instances - 1) / c.instances;
    double sq = 0.0, nrm = 0.0;
    for (int i = 0; i < c.instances; ++i) {
        int n = 2 + i % 2, N = 1 + (i / 2) % c.N;
        auto m = random_metric(n, rng, c.metric_amp);
        auto A = random_connection(n, N, rng, c.connection_amp, i % 4 == 0);
        auto Z = random_endo(n, build_gamma(n).k * N, rng, c.potential_amp, true);
        std::vector<double> x(n, 0.0);
        for (int a = 0; a < n - 1; ++a) x[a] = 0.37 * (i + a);
        auto Qi = q_symbols(forward_input(m, A.get(), N, &Z, c.mass, std::vector<double>(x.begin(), x.end() - 1), c.depth + 2));
        auto lhs = canonical(Qi.ctx, mul(b1(Qi.ctx), b1(Qi.ctx)));
        auto rhs = canonical(Qi.ctx, Qi.q2);
        double e2 = 0.0;
        for (auto& [k, v] : rhs.terms) {
            auto it = lhs.terms.find(k);
            e2 = std::max(e2, it == lhs.terms.end() ? v.max_abs() : (it->second - v).max_abs());
        }
        for (auto& [k, v] : lhs.terms)
            if (!rhs.terms.count(k)) e2 = std::max(e2, v.max_abs());
        auto gv = m.eval(x);
        MatR g = Eigen::Map<MatR>(gv.data(), n, n);
        MatR h = g.topLeftCorner(n - 1, n - 1).inverse();
        std::normal_distribution<double> nd;
        double e1 = 0.0;
        for (int s = 0; s < per; ++s) {
            Eigen::VectorXd xi(n - 1);
            for (auto& v : xi) v = nd(rng);
            MatC bv = eval(Qi.ctx, b1(Qi.ctx), std::vector<double>(xi.data(), xi.data() + n - 1));
            e1 = std::max(e1, (bv + std::sqrt(xi.dot(h * xi)) * MatC::Identity(bv.rows(), bv.cols())).cwiseAbs().maxCoeff());
        }
        auto rr = recursion_residual(Qi, solve_recursion(Qi, c.depth), c.depth, rng, 10);
        double er = *std::max_element(rr.begin(), rr.end());
        ri.rows.push_back({(long long)i, (long long)n, (long long)N, e2, e1, er});
        sq = std::max(sq, e2);
        nrm = std::max(nrm, e1);
        worst = std::max(worst, er);
    }
    R.tables.push_back(ri);
    R.checks.push_back({"b1_squared_minus_q2", sq, 1e-14});
    R.checks.push_back({"b1_minus_norm_error", nrm, 1e-12});
    R.checks.push_back({"recursion_residual", worst, xp::tol_or(c, 1e-10)});
    return R;
}

namespace xp {

inline std::string jets_report(const BoundaryJets& a) {
    std::ostringstream o;
    o.precision(17);
    o << "provenance " << a.provenance << "\n"
      << "n " << a.n << " N " << a.N << " depth " << a.depth << "\n";
    o << "g\n" << a.g << "\n";
    if (a.depth >= 1) {
        o << "dn_g\n" << a.dg << "\n";
        for (size_t k = 0; k < a.A.size(); ++k) o << "A_" << k + 1 << "\n" << a.A[k] << "\n";
    }
    if (a.depth >= 2) {
        o << "dn2_g\n" << a.d2g << "\n";
        for (size_t k = 0; k < a.dA.size(); ++k) o << "dn_A_" << k + 1 << "\n" << a.dA[k] << "\n";
        o << "Z\n" << a.Z << "\n"
          << "z_spread " << a.z_spread << "\n";
    }
    return o.str();
}

inline Table jets_table(const BoundaryJets& a, const BoundaryJets* truth) {
    Table t{"boundary_jets", {"quantity", "index", "row", "col", "re", "im", "truth_re", "truth_im"}, {}};
    auto put = [&](const std::string& q, int idx, const MatC& v, const MatC* tv) {
        for (int i = 0; i < v.rows(); ++i)
            for (int j = 0; j < v.cols(); ++j) {
                std::vector<Cell> row{q, (long long)idx, (long long)i, (long long)j};
                add_cplx(row, v(i, j));
                if (tv) add_cplx(row, (*tv)(i, j));
                else {
                    row.push_back(std::string(""));
                    row.push_back(std::string(""));
                }
                t.rows.push_back(row);
            }
    };
    auto putR = [&](const std::string& q, const MatR& v, const MatR* tv) {
        MatC tc = tv ? MatC(tv->cast<cd>()) : MatC();
        put(q, 0, v.cast<cd>(), tv ? &tc : nullptr);
    };
    putR("g", a.g, truth ? &truth->g : nullptr);
    if (a.depth >= 1) {
        putR("dn_g", a.dg, truth ? &truth->dg : nullptr);
        for (size_t k = 0; k < a.A.size(); ++k) put("A", int(k), a.A[k], truth ? &truth->A[k] : nullptr);
    }
    if (a.depth >= 2) {
        putR("dn2_g", a.d2g, truth ? &truth->d2g : nullptr);
        for (size_t k = 0; k < a.dA.size(); ++k) put("dn_A", int(k), a.dA[k], truth ? &truth->dA[k] : nullptr);
        put("Z", 0, a.Z, truth ? &truth->Z : nullptr);
    }
    return t;
}

}  // namespace xp

inline ExperimentResult run_recover(const ExperimentConfig& c) {
    ExperimentResult R;
    auto M = xp::make_model(c);
    if (c.source == "exact") {
        if (M.conn && !M.conn->normal_gauge()) throw DomainError("recover: the connection must be in normal gauge");
        int K = std::clamp(c.depth, 1, 2);
        auto in = forward_input(M.metric, M.conn.get(), c.N, M.Z.empty() ? nullptr : &M.Z, c.mass, xp::boundary_point(c), K + 4);
        auto Q = q_symbols(in);
        auto b = solve_recursion(Q, K);
        auto rec = recover_all(Q, b, c.N, c.mass, K);
        auto truth = truth_from_input(in);
        R.tables.push_back(xp::jets_table(rec, &truth));
        R.texts["boundary_jets.txt"] = xp::jets_report(rec);
        Table e{"errors", {"quantity", "rel_error"}, {}};
        double worst = 0.0;
        for (auto& [k, v] : compare_boundary_jets(rec, truth)) {
            e.rows.push_back({k, v});
            worst = std::max(worst, v);
        }
        R.tables.push_back(e);
        R.checks.push_back({"max_rel_error", worst, xp::tol_or(c, 1e-9)});
        return R;
    }
    if (c.source != "numeric") throw DomainError("recover: source must be exact or numeric");
    if (!M.Z.empty() || (M.conn && !M.conn->normal_gauge())) throw DomainError("recover: numeric source needs Z = 0 and normal gauge");
    auto g = xp::grid_at(c, 0, c.n);
    auto S = make_setup(M.metric, xp::sample(M, g, c.N), g, nullptr, c.mass);
    DirichletSolver sv(S, c.solver_tol, xp::solver_kind(c.solver));
    std::vector<double> lam = c.lambdas;
    auto sp = JetSpace::get(c.n, 2);
    NumericSymbols ns([&](const std::vector<int>& xi) { return estimate_symbol(sv, xi, lam, 0); }, sp);
    auto rec = recover_numeric(ns, c.n, c.N, c.mass, sp);
    auto x0 = g.coord(g.id(0, 0));
    auto in = forward_input(M.metric, M.conn.get(), c.N, nullptr, c.mass, std::vector<double>(x0.begin(), x0.end() - 1), 3);
    auto truth = truth_from_input(in);
    R.tables.push_back(xp::jets_table(rec, &truth));
    R.texts["boundary_jets.txt"] = xp::jets_report(rec);
    Table bt{"b1_estimate", {"xi", "b1_rel_error", "b0_odd_re", "b0_odd_im"}, {}};
    double b1err = 0.0;
    for (auto& [xi, est] : ns.cache()) {
        std::vector<double> xd(xi.begin(), xi.end());
        double len = 0.0;
        for (double v : xd) len += v * v;
        len = std::sqrt(len);
        MatC ref = -len * MatC::Identity(est.b1.rows(), est.b1.cols());
        double e = (est.b1 - ref).norm() / ref.norm();
        b1err = std::max(b1err, e);
        std::string key;
        for (int v : xi) key += (key.empty() ? "" : " ") + std::to_string(v);
        std::vector<Cell> row{key, e};
        xp::add_cplx(row, est.b0_odd(0, 0));
        bt.rows.push_back(row);
    }
    R.tables.push_back(bt);
    double num = 0.0, den = 0.0;
    for (size_t a = 0; a < rec.A.size(); ++a) {
        num += (rec.A[a] - truth.A[a]).squaredNorm();
        den += truth.A[a].squaredNorm();
    }
    double aerr = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
    R.tables.push_back({"errors", {"quantity", "rel_error"}, {{std::string("b1"), b1err}, {std::string("A"), aerr}}});
    R.checks.push_back({"b1_rel_error", b1err, 0.02});
    R.checks.push_back({"A_rel_error", aerr, xp::tol_or(c, 0.05)});
    return R;
}

inline ExperimentResult run_roundtrip(const ExperimentConfig& c) {
    ExperimentResult R;
    Table t{"roundtrip", {"instance", "n", "N", "quantity", "rel_error"}, {}};
    std::mt19937_64 rng(c.seed);
    double worst = 0.0;
    int inst = 0;
    for (int n = std::max(2, c.n_min); n <= std::min(3, c.n_max); ++n)
        for (int N = 1; N <= c.N; ++N)
            for (int r = 0; r < c.instances; ++r, ++inst) {
                auto m = random_metric(n, rng, c.metric_amp);
                auto A = random_connection(n, N, rng, c.connection_amp, true);
                auto Z = random_endo(n, build_gamma(n).k * N, rng, c.potential_amp, r % 2 == 0);
                auto in = forward_input(m, A.get(), N, &Z, c.mass, std::vector<double>(n - 1, 0.25), c.depth + 4);
                auto Q = q_symbols(in);
                auto rec = recover_all(Q, solve_recursion(Q, c.depth), N, c.mass, std::min(c.depth, 2));
                for (auto& [k, v] : compare_boundary_jets(rec, truth_from_input(in))) {
                    t.rows.push_back({(long long)inst, (long long)n, (long long)N, k, v});
                    worst = std::max(worst, v);
                }
            }
    R.tables.push_back(t);
    R.checks.push_back({"max_rel_error", worst, xp::tol_or(c, 1e-9)});
    return R;
}

inline ExperimentResult run_gauge_invariance(const ExperimentConfig& c) {
    ExperimentResult R;
    std::mt19937_64 rng(c.seed);
    auto metric = xp::make_metric(c, rng);
    std::shared_ptr<ConnectionSource> A = xp::make_connection(c, rng);
    if (!A) A = std::make_shared<FamilyConnection>(c.n, c.N);
    auto G = random_gauge(c.n, c.N, rng, c.connection_amp, true);
    GaugedConnection B(A, G);
    Table t{"gauge_invariance", {"level", "nt", "nn", "dn_difference", "rate"}, {}};
    std::vector<double> e;
    for (int l = 0; l < c.levels; ++l) {
        auto g = xp::grid_at(c, l, c.n);
        e.push_back(dn_difference(metric, sample_connection(*A, g), sample_connection(B, g), g, c.mass));
        Cell r = l ? Cell(xp::rate(e[l - 1], e[l])) : Cell(std::string(""));
        t.rows.push_back({(long long)l, (long long)g.Nt[0], (long long)g.Nn, e[l], r});
    }
    R.tables.push_back(t);
    if (e.size() < 2) throw DomainError("gauge-invariance: need levels >= 2");
    R.checks.push_back({"refinement_rate", xp::rate(e[e.size() - 2], e.back()), c.min_rate, false});
    return R;
}

inline ExperimentResult run_normal_gauge(const ExperimentConfig& c) {
    ExperimentResult R;
    std::mt19937_64 rng(c.seed);
    auto metric = xp::make_metric(c, rng);
    std::shared_ptr<ConnectionSource> A = xp::make_connection(c, rng);
    if (!A) A = std::make_shared<FamilyConnection>(c.n, c.N);
    Table th{"theta", {"check", "value"}, {}};
    const int Nt = std::max(2, c.N);
    MatC X = random_skew(Nt, rng, 1.0);
    double t0 = (theta_apply(MatC::Zero(Nt, Nt), X) - X).cwiseAbs().maxCoeff();
    MatC S = random_skew(Nt, rng, 1.0);
    S *= 0.1 / detail::spectral_norm(S);
    double dx = dexp_check(S, random_skew(Nt, rng, 1.0), 1e-5);
    th.rows.push_back({std::string("theta_zero_defect"), t0});
    th.rows.push_back({std::string("dexp_residual"), dx});
    th.rows.push_back({std::string("truncation_bound"), theta_truncation_bound(S)});
    R.tables.push_back(th);
    R.checks.push_back({"theta_zero_defect", t0, 0.0});
    R.checks.push_back({"dexp_residual", dx, 1e-6});
    Table t{"normal_gauge", {"level", "nt", "nn", "max_An", "unitarity", "boundary_defect", "dn_difference", "rate"}, {}};
    std::vector<double> e;
    double an = 0.0, un = 0.0;
    for (int l = 0; l < c.levels; ++l) {
        auto g = xp::grid_at(c, l, c.n);
        auto F = normal_gauge_fix(*A, g);
        an = std::max(an, F.max_An);
        un = std::max(un, F.unitarity);
        e.push_back(dn_difference(metric, sample_connection(*A, g), F.A, g, c.mass));
        Cell r = l ? Cell(xp::rate(e[l - 1], e[l])) : Cell(std::string(""));
        t.rows.push_back({(long long)l, (long long)g.Nt[0], (long long)g.Nn, F.max_An, F.unitarity, F.boundary, e[l], r});
    }
    R.tables.push_back(t);
    R.checks.push_back({"max_An", an, 1e-8});
    R.checks.push_back({"unitarity", un, 1e-10});
    if (e.size() >= 2) R.checks.push_back({"dn_refinement_rate", xp::rate(e[e.size() - 2], e.back()), c.min_rate, false});
    return R;
}

inline ExperimentResult run_ymd_residual(const ExperimentConfig& c) {
    ExperimentResult R;
    auto M = xp::make_model(c);
    auto g = xp::grid_at(c, 0, c.n);
    auto conn = xp::sample(M, g, c.N);
    bool eigen = c.metric == "flat" && !M.conn;
    double mass = c.mass;
    VecC phi;
    if (eigen) {
        auto S0 = make_setup(M.metric, conn, g);
        auto [mu2, v] = dirichlet_eigenmode(S0);
        mass = std::sqrt(std::max(0.0, mu2));
        phi = v;
    }
    auto S = make_setup(M.metric, conn, g, nullptr, mass);
    if (!eigen) {
        std::mt19937_64 rng(c.seed);
        phi = test_spinor(S, rng);
    }
    auto r = ymd_residuals(S, phi);
    Table t{"ymd", {"quantity", "value"}, {}};
    t.rows.push_back({std::string("phi"), std::string(eigen ? "dirichlet_eigenmode" : "smooth_test_spinor")});
    t.rows.push_back({std::string("m"), mass});
    t.rows.push_back({std::string("r1"), r.r1});
    t.rows.push_back({std::string("r2"), r.r2});
    t.rows.push_back({std::string("current_norm"), r.current_norm});
    t.rows.push_back({std::string("dstar_F_norm"), r.dstar_norm});
    std::mt19937_64 rng(c.seed + 1);
    std::normal_distribution<double> nd;
    double eq = 0.0;
    for (int s = 0; s < 20; ++s) {
        int n = 2 + s % 3, N = 1 + (s / 3) % 3;
        auto rep = build_gamma(n);
        VecC p(rep.k * N);
        for (int i = 0; i < p.size(); ++i) p(i) = cd(nd(rng), nd(rng));
        MatC G = random_skew(N, rng, 1.5).exp();
        eq = std::max(eq, current_equivariance_defect(rep, G, p));
    }
    t.rows.push_back({std::string("current_equivariance_defect"), eq});
    R.tables.push_back(t);
    R.checks.push_back({"current_equivariance", eq, 1e-10});
    if (eigen) R.checks.push_back({"eigenmode_r1", r.r1, xp::tol_or(c, 1e-8)});
    return R;
}

inline ExperimentResult run_transport(const ExperimentConfig& c) {
    ExperimentResult R;
    std::mt19937_64 rng(c.seed);
    auto g = xp::grid_at(c, 0, c.n);
    auto A = random_connection(c.n, c.N, rng, c.connection_amp, false);
    MatrixField S;
    std::vector<int> k(c.n - 1, 0);
    k[0] = 1;
    S.add(ScalarField{{{1.0, 0, k, -std::numbers::pi / 2}}}, random_skew(c.N, rng, 0.6));
    S.add(ScalarField::normal_power(1.0, 1, c.n), random_skew(c.N, rng, 0.4));
    auto G0 = std::make_shared<ExpGauge>(c.n, S);
    GaugedConnection B(A, G0);
    auto r1 = transport_equivalence(*A, B, g);
    double gerr = 0.0;
    for (int pid = 0; pid < g.npoints(); ++pid) gerr = std::max(gerr, (r1.G[pid] - G0->eval(g.coord(pid))).cwiseAbs().maxCoeff());
    FamilyConnection zero(c.n, c.N);
    auto Bc = random_connection(c.n, c.N, rng, c.connection_amp, false);
    auto r2 = transport_equivalence(zero, *Bc, g);
    Table t{"transport", {"pair", "path_residual", "conjugation_residual", "curvature_B", "gauge_error"}, {}};
    t.rows.push_back({std::string("equivalent"), r1.path_residual, r1.conjugation_residual, r1.curvature_B, gerr});
    t.rows.push_back({std::string("flat_vs_curved"), r2.path_residual, r2.conjugation_residual, r2.curvature_B, std::string("")});
    R.tables.push_back(t);
    R.checks.push_back({"equivalent_conjugation", r1.conjugation_residual, xp::tol_or(c, 1e-6)});
    R.checks.push_back({"flat_vs_curved_obstruction", r2.conjugation_residual, 0.5 * r2.curvature_B, false});
    return R;
}

inline ExperimentResult run_ck_residual(const ExperimentConfig& c) {
    ExperimentResult R;
    auto M = xp::make_model(c);
    auto g = xp::grid_at(c, 0, c.n);
    auto fd = parallel_frame(M.metric, g);
    auto conn = xp::sample(M, g, c.N);
    std::vector<MatC> S0(g.npoints(), MatC::Zero(c.N, c.N));
    Table t{"ck", {"case", "residual"}, {}};
    t.rows.push_back({std::string("S=0"), ck_residual(fd, conn, S0)});
    if (c.N == 1) {
        auto S = solve_abelian_ck(fd, conn);
        double r = ck_residual(fd, conn, S);
        t.rows.push_back({std::string("abelian_poisson_solution"), r});
        R.checks.push_back({"abelian_solution_residual", r, xp::tol_or(c, 1e-6)});
    }
    R.tables.push_back(t);
    return R;
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
    static const std::map<std::string, std::function<ExperimentResult(const ExperimentConfig&)>> table = {
        {"verify-clifford", run_verify_clifford}, {"lichnerowicz", run_lichnerowicz},
        {"dn-compute", run_dn_compute},           {"dn-oracle", run_dn_oracle},
        {"symbol-forward", run_symbol_forward},   {"recover", run_recover},
        {"roundtrip", run_roundtrip},             {"gauge-invariance", run_gauge_invariance},
        {"normal-gauge", run_normal_gauge},       {"ymd-residual", run_ymd_residual},
        {"transport-equivalence", run_transport}, {"ck-residual", run_ck_residual},
    };
    auto it = table.find(c.subcommand);
    if (it == table.end()) throw DomainError("unknown subcommand '" + c.subcommand + "'");
    return it->second(c);
}

}  // namespace dnspin
