#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dnspin/spin.hpp"

namespace dnspin {

/// Shared data for symbol arithmetic: jets of the tangential inverse metric at x0.
struct SymbolContext {
    int n = 2, kN = 1;
    std::shared_ptr<const JetSpace> sp;
    std::vector<JetR> hinv;  // (n-1)^2, g^{ab} tangential block

    int m() const { return n - 1; }
    const JetR& h(int a, int b) const { return hinv[a * m() + b]; }
    JetM zero() const { return JetM::zero(sp, sp->J, MatC::Zero(kN, kN)); }
    JetM id(double s = 1.0) const { return JetM(sp, sp->J, s * MatC::Identity(kN, kN)); }
};

using SymbolKey = std::pair<std::vector<int>, int>;

/// sum over terms of M (x) xi^mu / |xi|_g^p, all with |mu| - p = deg.
struct HomogeneousSymbol {
    int deg = 0;
    std::map<SymbolKey, JetM> terms;

    HomogeneousSymbol() = default;
    explicit HomogeneousSymbol(int d) : deg(d) {}

    bool empty() const { return terms.empty(); }
    void add(const std::vector<int>& mu, int p, const JetM& c) {
        int d = -p;
        for (int v : mu) d += v;
        if (!empty() && d != deg) throw DomainError("HomogeneousSymbol: degree mismatch");
        if (empty()) deg = d;
        auto it = terms.find({mu, p});
        if (it == terms.end()) terms.emplace(SymbolKey{mu, p}, c);
        else it->second += c;
    }
    void add(const HomogeneousSymbol& o) {
        for (auto& [k, c] : o.terms) add(k.first, k.second, c);
    }
    /// Drops exactly vanishing coefficients; exhausted jets are kept so evaluation reports them.
    void prune() {
        for (auto it = terms.begin(); it != terms.end();)
            if (it->second.ord >= 0 && it->second.max_abs() == 0.0) it = terms.erase(it);
            else ++it;
    }
    int min_order() const {
        int o = 1 << 20;
        for (auto& [k, c] : terms) o = std::min(o, c.ord);
        return o;
    }
};

/// Finite list of homogeneous parts keyed by degree (descending).
struct SymbolSum {
    std::map<int, HomogeneousSymbol, std::greater<int>> parts;

    HomogeneousSymbol& at(int d) {
        auto it = parts.find(d);
        if (it == parts.end()) it = parts.emplace(d, HomogeneousSymbol(d)).first;
        return it->second;
    }
    const HomogeneousSymbol* find(int d) const {
        auto it = parts.find(d);
        return it == parts.end() ? nullptr : &it->second;
    }
    void add(const HomogeneousSymbol& s) {
        if (!s.empty()) at(s.deg).add(s);
    }
    void add(const SymbolSum& s) {
        for (auto& [d, h] : s.parts) add(h);
    }
    int top() const { return parts.empty() ? 0 : parts.begin()->first; }
};

namespace detail {
inline std::vector<int> bump(std::vector<int> mu, int a, int by = 1) {
    mu[a] += by;
    return mu;
}
}  // namespace detail

inline HomogeneousSymbol operator*(cd s, const HomogeneousSymbol& a) {
    HomogeneousSymbol r(a.deg);
    for (auto& [k, c] : a.terms) r.terms.emplace(k, c.map([s](const MatC& x) -> MatC { return s * x; }));
    return r;
}

inline HomogeneousSymbol lmul(const JetM& m, const HomogeneousSymbol& a) {
    HomogeneousSymbol r(a.deg);
    for (auto& [k, c] : a.terms) r.terms.emplace(k, m * c);
    return r;
}
inline HomogeneousSymbol rmul(const HomogeneousSymbol& a, const JetM& m) {
    HomogeneousSymbol r(a.deg);
    for (auto& [k, c] : a.terms) r.terms.emplace(k, c * m);
    return r;
}

inline HomogeneousSymbol mul(const HomogeneousSymbol& a, const HomogeneousSymbol& b) {
    HomogeneousSymbol r(a.deg + b.deg);
    for (auto& [ka, ca] : a.terms)
        for (auto& [kb, cb] : b.terms) {
            std::vector<int> mu = ka.first;
            for (size_t i = 0; i < mu.size(); ++i) mu[i] += kb.first[i];
            r.add(mu, ka.second + kb.second, ca * cb);
        }
    r.deg = a.deg + b.deg;
    return r;
}

/// d/dxi_g: mu_g xi^{mu-e_g}/|xi|^p - p g^{gb} xi^{mu+e_b}/|xi|^{p+2}.
inline HomogeneousSymbol dxi(const SymbolContext& ctx, const HomogeneousSymbol& s, int g) {
    HomogeneousSymbol r(s.deg - 1);
    const int m = ctx.m();
    for (auto& [k, c] : s.terms) {
        const auto& mu = k.first;
        const int p = k.second;
        if (mu[g] > 0) r.add(detail::bump(mu, g, -1), p, double(mu[g]) * c);
        if (p != 0)
            for (int b = 0; b < m; ++b) r.add(detail::bump(mu, b), p + 2, (-double(p)) * (ctx.h(g, b) * c));
    }
    r.deg = s.deg - 1;
    return r;
}

/// d/dx^v: coefficient derivative plus -(p/2) (d_v g^{ab}) xi^{mu+e_a+e_b}/|xi|^{p+2}.
inline HomogeneousSymbol dx(const SymbolContext& ctx, const HomogeneousSymbol& s, int v) {
    HomogeneousSymbol r(s.deg);
    const int m = ctx.m();
    for (auto& [k, c] : s.terms) {
        const auto& mu = k.first;
        const int p = k.second;
        r.add(mu, p, c.deriv(v));
        if (p != 0)
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < m; ++b) r.add(detail::bump(detail::bump(mu, a), b), p + 2, (-0.5 * p) * (ctx.h(a, b).deriv(v) * c));
    }
    r.deg = s.deg;
    return r;
}

/// D_x = -i d_x.
inline HomogeneousSymbol Dx(const SymbolContext& ctx, const HomogeneousSymbol& s, int v) { return cd(0, -1) * dx(ctx, s, v); }

/// Brings every parity class of p to max(its largest p, 0 or 1) by multiplying with q = g^{ab} xi_a xi_b.
inline HomogeneousSymbol canonical(const SymbolContext& ctx, const HomogeneousSymbol& s) {
    int pmax[2] = {0, 1};
    for (auto& [k, c] : s.terms) {
        int par = ((k.second % 2) + 2) % 2;
        pmax[par] = std::max(pmax[par], k.second);
    }
    HomogeneousSymbol r(s.deg);
    const int m = ctx.m();
    for (auto& [k, c] : s.terms) {
        int par = ((k.second % 2) + 2) % 2;
        HomogeneousSymbol cur;
        cur.add(k.first, k.second, c);
        for (int p = k.second; p < pmax[par]; p += 2) {
            HomogeneousSymbol nx;
            for (auto& [k2, c2] : cur.terms)
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b) nx.add(detail::bump(detail::bump(k2.first, a), b), k2.second + 2, ctx.h(a, b) * c2);
            cur = nx;
        }
        r.add(cur);
    }
    r.deg = s.deg;
    r.prune();
    return r;
}

inline double xi_norm(const SymbolContext& ctx, const std::vector<double>& xi) {
    double q = 0.0;
    for (int a = 0; a < ctx.m(); ++a)
        for (int b = 0; b < ctx.m(); ++b) q += ctx.h(a, b).value() * xi[a] * xi[b];
    return std::sqrt(q);
}

/// Value at x0 for a concrete covector xi != 0.
inline MatC eval(const SymbolContext& ctx, const HomogeneousSymbol& s, const std::vector<double>& xi) {
    double nrm = xi_norm(ctx, xi);
    if (!(nrm > 0)) throw DomainError("symbol evaluation at xi = 0");
    MatC r = MatC::Zero(ctx.kN, ctx.kN);
    for (auto& [k, c] : s.terms) {
        double w = std::pow(nrm, -k.second);
        for (int a = 0; a < ctx.m(); ++a) w *= std::pow(xi[a], k.first[a]);
        r += w * c.value();
    }
    return r;
}

/// Jet (in x) of the symbol at fixed xi.
inline JetM eval_jet(const SymbolContext& ctx, const HomogeneousSymbol& s, const std::vector<double>& xi) {
    JetR q = 0.0 * ctx.hinv[0];
    for (int a = 0; a < ctx.m(); ++a)
        for (int b = 0; b < ctx.m(); ++b) q = q + (xi[a] * xi[b]) * ctx.h(a, b);
    if (!(q.value() > 0)) throw DomainError("symbol evaluation at xi = 0");
    JetR nrm = sqrt(q);
    JetM r = ctx.zero();
    for (auto& [k, c] : s.terms) {
        double w = 1.0;
        for (int a = 0; a < ctx.m(); ++a) w *= std::pow(xi[a], k.first[a]);
        r += (w * powr(nrm, -double(k.second))) * c;
    }
    return r;
}

inline MatC eval(const SymbolContext& ctx, const SymbolSum& s, const std::vector<double>& xi) {
    MatC r = MatC::Zero(ctx.kN, ctx.kN);
    for (auto& [d, h] : s.parts) r += eval(ctx, h, xi);
    return r;
}

/// b1 = -|xi|_g Id.
inline HomogeneousSymbol b1(const SymbolContext& ctx) {
    HomogeneousSymbol r(1);
    r.add(std::vector<int>(ctx.m(), 0), -1, ctx.id(-1.0));
    return r;
}

/// Input jets at a boundary point x0 = (x', 0).
struct ForwardInput {
    int n = 2, N = 1;
    std::vector<JetR> g;         // n*n
    std::vector<JetM> A;         // n, N x N
    std::optional<JetM> Z;       // kN x kN
    double m = 0.0;
};

inline ForwardInput forward_input(const MetricField& metric, const ConnectionSource* conn, int N, const MatrixField* Z, double m,
                                  const std::vector<double>& xp, int J) {
    ForwardInput in;
    in.n = metric.n;
    in.N = N;
    std::vector<double> x0 = xp;
    x0.resize(in.n, 0.0);
    x0[in.n - 1] = 0.0;
    in.g = metric_jets(metric, x0, J);
    if (conn) {
        if (conn->rank() != N || conn->dim() != in.n) throw DomainError("forward_input: connection rank/dimension mismatch");
        in.A = conn->jets(x0, J);
    } else {
        auto sp = in.g[0].sp;
        for (int a = 0; a < in.n; ++a) in.A.push_back(JetM::zero(sp, J, MatC::Zero(N, N)));
    }
    if (Z && !Z->empty()) in.Z = Z->jet(jet_point(x0, J));
    in.m = m;
    return in;
}

/// The three pieces of the tangential operator plus the data entering the symbol equation.
struct QSymbols {
    SymbolContext ctx;
    GammaRep rep;
    HomogeneousSymbol q2, q1, q0p;
    std::vector<JetM> theta;  // n, kN x kN
    JetR E;
};

inline QSymbols q_symbols(const ForwardInput& in) {
    QSymbols Q;
    const int n = in.n, m = n - 1;
    Q.rep = build_gamma(n);
    const int kN = Q.rep.k * in.N;
    auto G = geometry_from_metric_jets(in.g);
    auto F = frame_jets(G);
    Q.ctx.n = n;
    Q.ctx.kN = kN;
    Q.ctx.sp = in.g[0].sp;
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) Q.ctx.hinv.push_back(G.ginv[a * n + b]);
    Q.theta = twisted_connection_jets(Q.rep, F, in.A);
    Q.E = e_term_jet(G);
    const auto& ctx = Q.ctx;
    auto I = [&](const JetR& s) { return to_matrix_jet(s, kN); };
    std::vector<int> z(m, 0);

    Q.q2 = HomogeneousSymbol(2);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) Q.q2.add(detail::bump(detail::bump(z, a), b), 0, I(ctx.h(a, b)));

    Q.q1 = HomogeneousSymbol(1);
    for (int b = 0; b < m; ++b) {
        JetM c = ctx.zero();
        for (int a = 0; a < m; ++a) c += ctx.h(a, b) * Q.theta[a];
        Q.q1.add(detail::bump(z, b), 0, cd(0, -2) * c);
    }
    for (int g = 0; g < m; ++g) {
        JetR s = 0.0 * G.Gam[0];
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) s = s + G.ginv[i * n + j] * G.G(g, i, j);
        Q.q1.add(detail::bump(z, g), 0, cd(0, 1) * I(s));
    }
    Q.q1.prune();

    // Q0 = -g^{ij} d_i theta_j - g^{ij} theta_i theta_j + g^{ij} Gamma^k_ij theta_k + R/4 + curvature + Z - m^2
    JetM q0 = ctx.zero();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            const JetR& gij = G.ginv[i * n + j];
            q0 -= gij * Q.theta[j].deriv(i);
            q0 -= gij * (Q.theta[i] * Q.theta[j]);
            for (int k = 0; k < n; ++k) q0 += (gij * G.G(k, i, j)) * Q.theta[k];
        }
    q0 += I(0.25 * G.R);
    q0 += curvature_endo_jets(Q.rep, F.Ef, curvature_form(in.A));
    if (in.Z) q0 += *in.Z;
    if (in.m != 0.0) q0 -= ctx.id(in.m * in.m);
    // Q0' = Q0 + d_n theta_n - (E - theta_n) theta_n
    const JetM& tn = Q.theta[n - 1];
    q0 += tn.deriv(n - 1) - Q.E * tn + tn * tn;
    Q.q0p = HomogeneousSymbol(0);
    Q.q0p.add(z, 0, q0);
    Q.q0p.prune();
    return Q;
}

namespace detail {

/// All multi-indices over m variables with |nu| = k.
inline std::vector<std::vector<int>> multi_indices(int m, int k) {
    std::vector<std::vector<int>> out;
    std::vector<int> cur(m, 0);
    std::function<void(int, int)> rec = [&](int v, int left) {
        if (v == m - 1) {
            cur[v] = left;
            out.push_back(cur);
            return;
        }
        for (int a = left; a >= 0; --a) {
            cur[v] = a;
            rec(v + 1, left - a);
        }
    };
    rec(0, k);
    return out;
}

inline double nu_factorial(const std::vector<int>& nu) {
    double f = 1.0;
    for (int v : nu)
        for (int i = 2; i <= v; ++i) f *= i;
    return f;
}

/// Memoised d_xi^nu / D_x^nu of the parts of a SymbolSum.
class DerivCache {
public:
    DerivCache(const SymbolContext& ctx, const SymbolSum& s, bool xi_side) : ctx_(ctx), s_(s), xi_(xi_side) {}
    const HomogeneousSymbol& get(int deg, const std::vector<int>& nu) {
        auto key = std::make_pair(deg, nu);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
        int v = -1;
        for (int a = 0; a < (int)nu.size(); ++a)
            if (nu[a] > 0) {
                v = a;
                break;
            }
        HomogeneousSymbol r;
        if (v < 0) {
            const HomogeneousSymbol* p = s_.find(deg);
            r = p ? *p : HomogeneousSymbol(deg);
        } else {
            const HomogeneousSymbol& prev = get(deg, bump(nu, v, -1));
            r = xi_ ? dxi(ctx_, prev, v) : Dx(ctx_, prev, v);
        }
        return cache_.emplace(key, std::move(r)).first->second;
    }

private:
    const SymbolContext& ctx_;
    const SymbolSum& s_;
    bool xi_;
    std::map<std::pair<int, std::vector<int>>, HomogeneousSymbol> cache_;
};

/// Degree-d part of sum_nu (1/nu!) d_xi^nu P D_x^nu Q, optionally skipping (nu = 0, deg pair) combinations.
inline HomogeneousSymbol compose_degree(const SymbolContext& ctx, const SymbolSum& P, const SymbolSum& Q, int d, DerivCache& cp,
                                        DerivCache& cq, const std::function<bool(int, int, int)>& skip = nullptr) {
    HomogeneousSymbol r(d);
    for (auto& [i, hp] : P.parts)
        for (auto& [j, hq] : Q.parts) {
            int k = i + j - d;
            if (k < 0) continue;
            if (skip && skip(i, j, k)) continue;
            for (auto& nu : multi_indices(ctx.m(), k)) {
                const auto& a = cp.get(i, nu);
                const auto& b = cq.get(j, nu);
                if (a.empty() || b.empty()) continue;
                auto prod = mul(a, b);
                if (k > 0) prod = cd(1.0 / nu_factorial(nu)) * prod;
                r.add(prod);
            }
        }
    r.deg = d;
    return r;
}

}  // namespace detail

/// Graded composition of two symbol sums, degrees top(P)+top(Q) down to top(P)+top(Q)-depth.
inline SymbolSum symbol_compose(const SymbolContext& ctx, const SymbolSum& P, const SymbolSum& Q, int depth) {
    detail::DerivCache cp(ctx, P, true), cq(ctx, Q, false);
    SymbolSum r;
    const int top = P.top() + Q.top();
    for (int d = top; d >= top - depth; --d) {
        auto h = detail::compose_degree(ctx, P, Q, d, cp, cq);
        h.prune();
        if (!h.empty()) r.add(h);
    }
    return r;
}

inline SymbolSum as_sum(const HomogeneousSymbol& h) {
    SymbolSum s;
    s.add(h);
    return s;
}

inline HomogeneousSymbol constant_symbol(const SymbolContext& ctx, const JetM& c) {
    HomogeneousSymbol h(0);
    h.add(std::vector<int>(ctx.m(), 0), 0, c);
    return h;
}

/// b_1, b_0, ..., b_{1-K}: at degree m, 2 b_1 b_{m-1} = q_m - (remaining degree-m terms).
inline SymbolSum solve_recursion(const QSymbols& Q, int K) {
    if (K < 1) throw DomainError("solve_recursion: depth must be >= 1");
    const auto& ctx = Q.ctx;
    const int n = ctx.n;
    SymbolSum b;
    b.add(b1(ctx));
    const JetM& tn = Q.theta[n - 1];
    SymbolSum th = as_sum(constant_symbol(ctx, tn));
    auto qpart = [&](int d) -> const HomogeneousSymbol* {
        if (d == 1) return &Q.q1;
        if (d == 0) return &Q.q0p;
        return nullptr;
    };
    for (int m = 1; m >= 2 - K; --m) {
        HomogeneousSymbol rest(m);
        const HomogeneousSymbol* bm = b.find(m);
        if (bm) {
            rest.add(dx(ctx, *bm, n - 1));
            rest.add(lmul(tn, *bm));
            rest.add(cd(-1) * rmul(*bm, tn));
            rest.add(lmul(to_matrix_jet(-1.0 * Q.E, ctx.kN), *bm));
        }
        {
            // - sum_{|nu|>=1} (1/nu!) d_xi^nu b D_x^nu theta_n
            detail::DerivCache cb(ctx, b, true), ct(ctx, th, false);
            auto h = detail::compose_degree(ctx, b, th, m, cb, ct, [](int, int, int k) { return k == 0; });
            rest.add(cd(-1) * h);
        }
        {
            // sum_nu (1/nu!) d_xi^nu b D_x^nu b without the 2 b_1 b_{m-1} terms (b_{m-1} not yet present)
            detail::DerivCache c1(ctx, b, true), c2(ctx, b, false);
            rest.add(detail::compose_degree(ctx, b, b, m, c1, c2));
        }
        HomogeneousSymbol rhs(m);
        if (auto q = qpart(m)) rhs.add(*q);
        rhs.add(cd(-1) * rest);
        rhs.prune();
        // divide by 2 b_1 = -2|xi|: multiply by -1/2 and raise p by one
        HomogeneousSymbol next(m - 1);
        for (auto& [k, c] : rhs.terms) next.add(k.first, k.second + 1, -0.5 * c);
        next.deg = m - 1;
        next.prune();
        if (!next.empty()) b.add(next);
    }
    return b;
}

/// Per-degree max |LHS - RHS| of the symbol equation over random xi samples, degrees 2 .. 2-K.
inline std::vector<double> recursion_residual(const QSymbols& Q, const SymbolSum& b, int K, std::mt19937_64& rng, int samples = 20) {
    const auto& ctx = Q.ctx;
    const int n = ctx.n;
    const JetM& tn = Q.theta[n - 1];
    SymbolSum th = as_sum(constant_symbol(ctx, tn));
    SymbolSum lhs;
    for (auto& [d, h] : b.parts) {
        lhs.add(dx(ctx, h, n - 1));
        lhs.add(lmul(tn, h));
        lhs.add(lmul(to_matrix_jet(-1.0 * Q.E, ctx.kN), h));
    }
    SymbolSum bt = symbol_compose(ctx, b, th, K + 2);
    for (auto& [d, h] : bt.parts) lhs.add(cd(-1) * h);
    lhs.add(symbol_compose(ctx, b, b, K));
    SymbolSum rhs;
    rhs.add(Q.q2);
    rhs.add(Q.q1);
    rhs.add(Q.q0p);
    std::normal_distribution<double> nd;
    std::vector<double> res;
    for (int d = 2; d >= 2 - K; --d) {
        double mx = 0.0;
        for (int s = 0; s < samples; ++s) {
            std::vector<double> xi(ctx.m());
            for (auto& v : xi) v = nd(rng);
            MatC r = MatC::Zero(ctx.kN, ctx.kN);
            if (auto p = lhs.find(d)) r += eval(ctx, *p, xi);
            if (auto p = rhs.find(d)) r -= eval(ctx, *p, xi);
            mx = std::max(mx, r.cwiseAbs().maxCoeff());
        }
        res.push_back(mx);
    }
    return res;
}

/// Structured text: one block per degree, one line per monomial with the coefficient value at x0.
inline std::string dump(const SymbolSum& s) {
    std::ostringstream os;
    os.precision(17);
    for (auto& [d, h] : s.parts) {
        os << "degree " << d << " terms " << h.terms.size() << "\n";
        for (auto& [k, c] : h.terms) {
            os << "  mu=(";
            for (size_t i = 0; i < k.first.size(); ++i) os << (i ? "," : "") << k.first[i];
            os << ") p=" << k.second << " ord=" << c.ord << "\n";
            if (c.ord < 0) continue;
            const MatC& v = c.value();
            for (int i = 0; i < v.rows(); ++i) {
                os << "   ";
                for (int j = 0; j < v.cols(); ++j) os << " " << v(i, j).real() << "," << v(i, j).imag();
                os << "\n";
            }
        }
    }
    return os.str();
}

}  // namespace dnspin
