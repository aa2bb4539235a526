#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dnspin/dn_numeric.hpp"
#include "dnspin/symbol_engine.hpp"

namespace dnspin {

/// deg, xi -> tangential jet of b_deg(., xi) at x0 (no normal dependence).
using SymbolEval = std::function<JetM(int, const std::vector<double>&)>;

/// Recovered boundary Taylor data at x0; matrices are tangential (n-1)x(n-1).
struct BoundaryJets {
    int n = 2, N = 1, k = 1, depth = 0;
    MatR g, ginv, dg, d2g;
    std::vector<MatC> A, dA;  // alpha = 1..n-1
    MatC Z;
    std::string provenance;  // exact-forward | numeric-estimate
    double z_spread = 0.0;   // Z disagreement across xi samples
};

/// Tangential jets kept between recovery orders.
struct RecoveryState {
    int n = 2, N = 1, k = 1;
    double m = 0.0;
    GammaRep rep;
    std::shared_ptr<const JetSpace> sp;
    std::vector<JetR> hinv, g0, g1, g2;  // (n-1)^2
    std::vector<JetM> A0, A1;            // n-1, N x N
    std::vector<std::vector<JetR>> omega, domega;  // [alpha][i*n+j]
    MatC Z;
    double z_spread = 0.0;
    int depth = -1;
};

inline SymbolEval exact_symbols(const QSymbols& Q, const SymbolSum& b) {
    const int n = Q.ctx.n;
    return [&Q, &b, n](int d, const std::vector<double>& xi) -> JetM {
        const HomogeneousSymbol* h = b.find(d);
        if (!h) return Q.ctx.zero();
        return eval_jet(Q.ctx, *h, xi).restrict_var(n - 1);
    };
}

/// odd = (b(xi) - b(-xi))/2, even = (b(xi) + b(-xi))/2.
inline std::pair<JetM, JetM> parity_split(const SymbolEval& b, int d, const std::vector<double>& xi) {
    std::vector<double> mx = xi;
    for (auto& v : mx) v = -v;
    JetM p = b(d, xi), q = b(d, mx);
    return {0.5 * (p - q), 0.5 * (p + q)};
}
inline std::pair<MatC, MatC> parity_split(const std::function<MatC(const std::vector<double>&)>& b, const std::vector<double>& xi) {
    std::vector<double> mx = xi;
    for (auto& v : mx) v = -v;
    MatC p = b(xi), q = b(mx);
    return {0.5 * (p - q), 0.5 * (p + q)};
}

namespace detail {

inline JetR trace_re(const JetM& a, int kN) {
    return a.map([kN](const MatC& x) -> double { return x.trace().real() / kN; });
}

inline std::vector<double> unit(int m, int a) {
    std::vector<double> e(m, 0.0);
    e[a] = 1.0;
    return e;
}

/// Full n x n metric jets g0 + t g1 + t^2/2 g2 in boundary normal form.
inline std::vector<JetR> assemble_metric(const RecoveryState& R) {
    const int n = R.n, m = n - 1;
    JetR t = JetR::variable(R.sp, n - 1, 0.0, 1.0);
    JetR zero = 0.0 * t;
    std::vector<JetR> g(n * n, zero);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            JetR s = R.g0[a * m + b];
            if (!R.g1.empty()) s = s + t * R.g1[a * m + b];
            if (!R.g2.empty()) s = s + (0.5 * (t * t)) * R.g2[a * m + b];
            g[a * n + b] = s;
        }
    g[n * n - 1] = zero + 1.0;
    return g;
}

inline ForwardInput reference_input(const RecoveryState& R) {
    ForwardInput in;
    in.n = R.n;
    in.N = R.N;
    in.g = assemble_metric(R);
    in.m = R.m;
    JetR t = JetR::variable(R.sp, R.n - 1, 0.0, 1.0);
    for (int a = 0; a < R.n; ++a) {
        JetM A = JetM::zero(R.sp, R.sp->J, MatC::Zero(R.N, R.N));
        if (a < R.n - 1 && !R.A0.empty()) A += R.A0[a];
        if (a < R.n - 1 && !R.A1.empty()) A += t * R.A1[a];
        in.A.push_back(A);
    }
    return in;
}

/// Solves sum_a g^{ab} X_a = Phi_b for X, Phi_b = c |e_b| W(e_b).
inline std::vector<JetM> solve_xi_linear(const RecoveryState& R, const std::function<JetM(int)>& W, cd c) {
    const int m = R.n - 1;
    std::vector<JetM> Phi;
    for (int b = 0; b < m; ++b) Phi.push_back((c * sqrt(R.hinv[b * m + b])) * W(b));
    std::vector<JetM> X;
    for (int a = 0; a < m; ++a) {
        JetM s = 0.0 * Phi[0];
        for (int b = 0; b < m; ++b) s += R.g0[a * m + b] * Phi[b];
        X.push_back(s);
    }
    return X;
}

/// theta = omega^s (x) Id + Id (x) A: returns (A, omega_ij).
inline std::pair<JetM, std::vector<JetR>> split_theta(const RecoveryState& R, const JetM& th) {
    const int n = R.n, k = R.k, N = R.N;
    JetM A = th.map([k, N](const MatC& x) -> MatC { return partial_trace_spin(x, k, N); });
    std::vector<JetR> w(n * n, 0.0 * R.hinv[0]);
    const GammaRep& rep = R.rep;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            JetR c = th.map([&rep, i, j](const MatC& x) -> double { return -2.0 * pair_coeff(rep, x, i, j).real(); });
            w[i * n + j] = c;
            w[j * n + i] = -1.0 * c;
        }
    return {A, w};
}

inline MatR values(const std::vector<JetR>& a, int m) {
    MatR r(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) r(i, j) = a[i * m + j].value();
    return r;
}

}  // namespace detail

inline RecoveryState make_recovery_state(int n, int N, double m, std::shared_ptr<const JetSpace> sp) {
    RecoveryState R;
    R.n = n;
    R.N = N;
    R.m = m;
    R.rep = build_gamma(n);
    R.k = R.rep.k;
    R.sp = std::move(sp);
    return R;
}

/// Polarization of q2(xi) = (tr b1(xi) / kN)^2.
inline void recover_metric(const SymbolEval& b, RecoveryState& R) {
    const int m = R.n - 1, kN = R.k * R.N;
    auto q2 = [&](const std::vector<double>& xi) {
        JetR s = detail::trace_re(b(1, xi), kN);
        return s * s;
    };
    std::vector<JetR> qa;
    for (int a = 0; a < m; ++a) qa.push_back(q2(detail::unit(m, a)));
    R.hinv.assign(m * m, 0.0 * qa[0]);
    for (int a = 0; a < m; ++a) {
        R.hinv[a * m + a] = qa[a];
        for (int c = a + 1; c < m; ++c) {
            auto xi = detail::unit(m, a);
            xi[c] = 1.0;
            JetR off = 0.5 * (q2(xi) - qa[a] - qa[c]);
            R.hinv[a * m + c] = off;
            R.hinv[c * m + a] = off;
        }
    }
    Eigen::LLT<MatR> llt(detail::values(R.hinv, m));
    if (llt.info() != Eigen::Success) throw DomainError("recover_metric: recovered metric is not positive definite");
    R.g0 = detail::inverse_nopivot(R.hinv, m);
    R.depth = 0;
}

/// Order one: theta_alpha from the odd part of b0, split into A_alpha and omega(d_alpha).
inline void recover_theta_and_split(const SymbolEval& b, RecoveryState& R) {
    if (R.depth < 0) throw DomainError("recover_theta_and_split: metric not recovered");
    const int n = R.n, m = n - 1;
    auto Q = q_symbols(detail::reference_input(R));
    auto bref = solve_recursion(Q, 1);
    auto ref = exact_symbols(Q, bref);
    // odd(b0 - b0_ref)(xi) = i g^{ab} dtheta_a xi_b / |xi|
    auto W = [&](int beta) {
        auto xi = detail::unit(m, beta);
        return parity_split(b, 0, xi).first - parity_split(ref, 0, xi).first;
    };
    auto dth = detail::solve_xi_linear(R, W, cd(0, -1));
    R.A0.clear();
    R.omega.clear();
    for (int a = 0; a < m; ++a) {
        JetM th = Q.theta[a].restrict_var(n - 1) + dth[a];
        auto [A, w] = detail::split_theta(R, th);
        R.A0.push_back(A);
        R.omega.push_back(w);
    }
    R.depth = 1;
}

/// d_n g_ab = -2 Gamma^n_ab = -2 sum_j omega^n_j(d_a) h^j_b with h the inverse boundary frame.
inline void recover_dn_metric(RecoveryState& R) {
    if (R.depth < 1) throw DomainError("recover_dn_metric: connection not recovered");
    const int n = R.n, m = n - 1;
    auto F = frame_jets(geometry_from_metric_jets(detail::assemble_metric(R)));
    std::vector<JetR> Efb;
    for (auto& x : F.Ef) Efb.push_back(x.restrict_var(n - 1));
    auto h = detail::inverse_nopivot(Efb, n);
    R.g1.assign(m * m, 0.0 * R.hinv[0]);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            JetR s = 0.0 * R.hinv[0];
            for (int j = 0; j < n; ++j) s = s + R.omega[a][(n - 1) * n + j] * h[j * n + b];
            R.g1[a * m + b] = -2.0 * s;
        }
}

/// Order two: d_n A, d_n^2 g from the odd part of b_{-1}, then Z from the remainder.
inline void recover_order2(const SymbolEval& b, RecoveryState& R) {
    if (R.g1.empty()) throw DomainError("recover_order2: first-order data not recovered");
    const int n = R.n, m = n - 1, kN = R.k * R.N;
    {
        auto Q = q_symbols(detail::reference_input(R));
        auto bref = solve_recursion(Q, 2);
        auto ref = exact_symbols(Q, bref);
        // W = -2|xi| (b_{-1} - ref); odd(W)(xi) = -i g^{ab} d(d_n theta_a) xi_b / |xi|
        auto W = [&](int beta) {
            auto xi = detail::unit(m, beta);
            JetM d = parity_split(b, -1, xi).first - parity_split(ref, -1, xi).first;
            return (-2.0 * sqrt(R.hinv[beta * m + beta])) * d;
        };
        auto dth = detail::solve_xi_linear(R, W, cd(0, 1));
        auto F = frame_jets(geometry_from_metric_jets(detail::reference_input(R).g));
        std::vector<JetR> Efb, dEfb;
        for (auto& x : F.Ef) {
            Efb.push_back(x.restrict_var(n - 1));
            dEfb.push_back(x.deriv(n - 1).restrict_var(n - 1));
        }
        auto h = detail::inverse_nopivot(Efb, n);
        // d_n h = -h (d_n Ef) h
        std::vector<JetR> dh(n * n, 0.0 * R.hinv[0]);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                JetR s = 0.0 * R.hinv[0];
                for (int p = 0; p < n; ++p)
                    for (int q = 0; q < n; ++q) s = s + h[i * n + p] * dEfb[p * n + q] * h[q * n + j];
                dh[i * n + j] = -1.0 * s;
            }
        R.A1.clear();
        R.domega.clear();
        for (int a = 0; a < m; ++a) {
            JetM dt = Q.theta[a].deriv(n - 1).restrict_var(n - 1) + dth[a];
            auto [dA, dw] = detail::split_theta(R, dt);
            R.A1.push_back(dA);
            R.domega.push_back(dw);
        }
        R.g2.assign(m * m, 0.0 * R.hinv[0]);
        for (int a = 0; a < m; ++a)
            for (int c = 0; c < m; ++c) {
                JetR s = 0.0 * R.hinv[0];
                for (int j = 0; j < n; ++j)
                    s = s + R.domega[a][(n - 1) * n + j] * h[j * n + c] + R.omega[a][(n - 1) * n + j] * dh[j * n + c];
                R.g2[a * m + c] = -2.0 * s;
            }
    }
    // all order-2 data except Z known: Z = -2|xi| (b_{-1} - ref)
    auto Q = q_symbols(detail::reference_input(R));
    auto bref = solve_recursion(Q, 2);
    std::vector<std::vector<double>> xis;
    for (int a = 0; a < m; ++a) xis.push_back(detail::unit(m, a));
    if (m > 1) {
        auto xi = detail::unit(m, 0);
        xi[1] = -0.5;
        xis.push_back(xi);
    }
    std::vector<MatC> Zs;
    for (auto& xi : xis) {
        MatC d = b(-1, xi).value();
        if (auto h = bref.find(-1)) d -= eval(Q.ctx, *h, xi);
        Zs.push_back(-2.0 * xi_norm(Q.ctx, xi) * d);
    }
    R.Z = Zs[0];
    R.z_spread = 0.0;
    for (auto& z : Zs) R.z_spread = std::max(R.z_spread, (z - R.Z).cwiseAbs().maxCoeff());
    (void)kN;
    R.depth = 2;
}

inline BoundaryJets to_boundary_jets(const RecoveryState& R, const std::string& provenance) {
    const int m = R.n - 1;
    BoundaryJets B;
    B.n = R.n;
    B.N = R.N;
    B.k = R.k;
    B.depth = R.depth;
    B.provenance = provenance;
    B.ginv = detail::values(R.hinv, m);
    B.g = detail::values(R.g0, m);
    B.dg = R.g1.empty() ? MatR::Zero(m, m) : detail::values(R.g1, m);
    B.d2g = R.g2.empty() ? MatR::Zero(m, m) : detail::values(R.g2, m);
    for (auto& a : R.A0) B.A.push_back(a.value());
    for (auto& a : R.A1) B.dA.push_back(a.value());
    B.Z = R.depth >= 2 ? R.Z : MatC::Zero(R.k * R.N, R.k * R.N);
    B.z_spread = R.z_spread;
    return B;
}

/// depth 0: metric; 1: adds A and d_n g; 2: adds d_n A, d_n^2 g and Z.
inline BoundaryJets recover_all(const SymbolEval& b, int n, int N, double m, std::shared_ptr<const JetSpace> sp, int depth,
                                const std::string& provenance = "exact-forward") {
    if (depth < 0 || depth > 2) throw DomainError("recover_all: depth must be 0, 1 or 2");
    auto R = make_recovery_state(n, N, m, std::move(sp));
    recover_metric(b, R);
    if (depth >= 1) {
        recover_theta_and_split(b, R);
        recover_dn_metric(R);
    }
    if (depth >= 2) recover_order2(b, R);
    return to_boundary_jets(R, provenance);
}

/// Forward then inverse on exact symbols.
inline BoundaryJets recover_all(const QSymbols& Q, const SymbolSum& b, int N, double m, int depth = 2) {
    return recover_all(exact_symbols(Q, b), Q.ctx.n, N, m, Q.ctx.sp, depth, "exact-forward");
}

/// Symbol provider backed by numeric estimates at integer wave vectors. Tangential
/// derivatives are not estimated: the returned jets are constant in x'.
class NumericSymbols {
public:
    using Estimator = std::function<SymbolEstimate(const std::vector<int>&)>;
    NumericSymbols(Estimator est, std::shared_ptr<const JetSpace> sp) : est_(std::move(est)), sp_(std::move(sp)) {}

    JetM operator()(int d, const std::vector<double>& xi) {
        std::vector<int> k;
        for (double v : xi) k.push_back(static_cast<int>(std::lround(v)));
        bool flip = false;
        for (int v : k)
            if (v != 0) {
                flip = v < 0;
                break;
            }
        if (flip)
            for (auto& v : k) v = -v;
        auto it = cache_.find(k);
        if (it == cache_.end()) it = cache_.emplace(k, est_(k)).first;
        const SymbolEstimate& e = it->second;
        MatC r;
        if (d == 1) r = e.b1;
        else if (d == 0) r = e.b0_even + (flip ? -1.0 : 1.0) * e.b0_odd;
        else throw DomainError("numeric symbols carry degrees 1 and 0 only");
        return JetM(sp_, sp_->J, r);
    }
    const std::map<std::vector<int>, SymbolEstimate>& cache() const { return cache_; }

private:
    Estimator est_;
    std::shared_ptr<const JetSpace> sp_;
    std::map<std::vector<int>, SymbolEstimate> cache_;
};

/// Numeric mode: only the metric and {A, d_n g} are recovered.
inline BoundaryJets recover_numeric(NumericSymbols& ns, int n, int N, double m, std::shared_ptr<const JetSpace> sp) {
    SymbolEval b = [&ns](int d, const std::vector<double>& xi) { return ns(d, xi); };
    return recover_all(b, n, N, m, std::move(sp), 1, "numeric-estimate");
}

/// Max relative error of each recovered object against a reference (denominator max(1, |ref|)).
inline std::map<std::string, double> compare_boundary_jets(const BoundaryJets& a, const BoundaryJets& ref) {
    auto rel = [](double err, double sc) { return err / std::max(1.0, sc); };
    auto mr = [&](const MatR& x, const MatR& y) { return rel((x - y).cwiseAbs().maxCoeff(), y.cwiseAbs().maxCoeff()); };
    auto mc = [&](const std::vector<MatC>& x, const std::vector<MatC>& y) {
        double e = 0.0;
        for (size_t i = 0; i < std::min(x.size(), y.size()); ++i)
            e = std::max(e, rel((x[i] - y[i]).cwiseAbs().maxCoeff(), y[i].cwiseAbs().maxCoeff()));
        return e;
    };
    std::map<std::string, double> r;
    r["g"] = mr(a.g, ref.g);
    if (a.depth >= 1 && ref.depth >= 1) {
        r["dn_g"] = mr(a.dg, ref.dg);
        r["A"] = mc(a.A, ref.A);
    }
    if (a.depth >= 2 && ref.depth >= 2) {
        r["dn2_g"] = mr(a.d2g, ref.d2g);
        r["dn_A"] = mc(a.dA, ref.dA);
        r["Z"] = rel((a.Z - ref.Z).cwiseAbs().maxCoeff(), ref.Z.cwiseAbs().maxCoeff());
    }
    return r;
}

/// Ground-truth boundary data read directly from the input jets.
inline BoundaryJets truth_from_input(const ForwardInput& in) {
    const int n = in.n, m = n - 1;
    auto rep = build_gamma(n);
    BoundaryJets B;
    B.n = n;
    B.N = in.N;
    B.k = rep.k;
    B.depth = 2;
    B.provenance = "input";
    B.g = MatR(m, m);
    B.dg = MatR(m, m);
    B.d2g = MatR(m, m);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) {
            const JetR& x = in.g[a * n + b];
            std::vector<int> e1(n, 0), e2(n, 0);
            e1[n - 1] = 1;
            e2[n - 1] = 2;
            B.g(a, b) = x.value();
            B.dg(a, b) = x.derivative(e1);
            B.d2g(a, b) = x.derivative(e2);
        }
    B.ginv = B.g.inverse();
    for (int a = 0; a < m; ++a) {
        std::vector<int> e1(n, 0);
        e1[n - 1] = 1;
        B.A.push_back(in.A[a].value());
        B.dA.push_back(in.A[a].derivative(e1));
    }
    const int kN = rep.k * in.N;
    B.Z = in.Z ? in.Z->value() : MatC::Zero(kN, kN);
    return B;
}

}  // namespace dnspin
