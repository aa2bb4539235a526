#pragma once

#include <vector>

#include "dnspin/geometry.hpp"

namespace dnspin {

inline JetM lmul(const MatC& m, const JetM& a) {
    return a.map([&](const MatC& x) -> MatC { return m * x; });
}
inline JetM rmul(const JetM& a, const MatC& m) {
    return a.map([&](const MatC& x) -> MatC { return x * m; });
}
inline JetM lift_spin(const JetM& a, int N) {
    return a.map([N](const MatC& x) -> MatC { return spin_lift(x, N); });
}
inline JetM lift_gauge(int k, const JetM& a) {
    return a.map([k](const MatC& x) -> MatC { return gauge_lift(k, x); });
}

/// Spin lift of an so(n) element: -1/4 sum_ij w_ij gamma_i gamma_j.
inline MatC spin_lift_so(const GammaRep& rep, const MatR& w) {
    MatC r = MatC::Zero(rep.k, rep.k);
    for (int i = 0; i < rep.n; ++i)
        for (int j = 0; j < rep.n; ++j)
            if (i != j && w(i, j) != 0.0) r += (-0.25 * w(i, j)) * (rep.gammas[i] * rep.gammas[j]);
    return r;
}

inline JetM spin_lift_so(const GammaRep& rep, const std::vector<JetR>& w) {
    const int n = rep.n;
    JetM r = JetM::zero(w[0].sp, w[0].ord, MatC::Zero(rep.k, rep.k));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            MatC gg = -0.25 * (rep.gammas[i] * rep.gammas[j]);
            r += w[i * n + j].map([&](double v) -> MatC { return v * gg; });
        }
    return r;
}

/// Spin connection matrices omega^s_a at a grid point.
inline std::vector<MatC> spin_connection(const GammaRep& rep, const PointGeom& P) {
    std::vector<MatC> r;
    for (auto& w : P.omega) r.push_back(spin_lift_so(rep, w));
    return r;
}

inline std::vector<JetM> spin_connection_jets(const GammaRep& rep, const FrameJets& F) {
    std::vector<JetM> r;
    for (auto& w : F.omega) r.push_back(spin_lift_so(rep, w));
    return r;
}

/// theta_a = omega^s_a (x) 1 + 1 (x) A_a.
inline std::vector<MatC> twisted_connection(const GammaRep& rep, const PointGeom& P, const std::vector<MatC>& A) {
    const int N = static_cast<int>(A[0].rows());
    auto ws = spin_connection(rep, P);
    std::vector<MatC> r;
    for (size_t a = 0; a < ws.size(); ++a) r.push_back(spin_lift(ws[a], N) + gauge_lift(rep.k, A[a]));
    return r;
}

inline std::vector<JetM> twisted_connection_jets(const GammaRep& rep, const FrameJets& F, const std::vector<JetM>& A) {
    const int N = static_cast<int>(A[0].c[0].rows());
    auto ws = spin_connection_jets(rep, F);
    std::vector<JetM> r;
    for (size_t a = 0; a < ws.size(); ++a) r.push_back(lift_spin(ws[a], N) + lift_gauge(rep.k, A[a]));
    return r;
}

/// F_ab = d_a A_b - d_b A_a + [A_a, A_b] in coordinates, row-major n x n.
inline std::vector<JetM> curvature_form(const std::vector<JetM>& A) {
    const int n = static_cast<int>(A.size());
    std::vector<JetM> F;
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) F.push_back(A[b].deriv(a) - A[a].deriv(b) + A[a] * A[b] - A[b] * A[a]);
    return F;
}

/// 1/2 sum_jk gamma_j gamma_k (x) F(e_j, e_k), from coordinate F and the frame.
inline MatC curvature_endo(const GammaRep& rep, const MatR& Ef, const std::vector<MatC>& Fab) {
    const int n = rep.n;
    const int N = static_cast<int>(Fab[0].rows());
    MatC r = MatC::Zero(rep.k * N, rep.k * N);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            if (j == k) continue;
            MatC f = MatC::Zero(N, N);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) f += (Ef(a, j) * Ef(b, k)) * Fab[a * n + b];
            r += 0.5 * detail::kron(rep.gammas[j] * rep.gammas[k], f);
        }
    return r;
}

inline JetM curvature_endo_jets(const GammaRep& rep, const std::vector<JetR>& Ef, const std::vector<JetM>& Fab) {
    const int n = rep.n;
    const int N = static_cast<int>(Fab[0].c[0].rows());
    JetM r = JetM::zero(Fab[0].sp, std::min(Fab[0].ord, Ef[0].ord), MatC::Zero(rep.k * N, rep.k * N));
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            if (j == k) continue;
            JetM f = JetM::zero(Fab[0].sp, Fab[0].ord, MatC::Zero(N, N));
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) f += (Ef[a * n + j] * Ef[b * n + k]) * Fab[a * n + b];
            MatC gg = rep.gammas[j] * rep.gammas[k];
            r += f.map([&](const MatC& x) -> MatC { return 0.5 * detail::kron(gg, x); });
        }
    return r;
}

/// (1/(kN)) tr((gamma_i gamma_j (x) 1)^* X): coefficient of gamma_i gamma_j (x) 1 in X (i != j).
inline cd pair_coeff(const GammaRep& rep, const MatC& X, int i, int j) {
    const int kN = static_cast<int>(X.rows());
    const int N = kN / rep.k;
    MatC b = spin_lift(rep.gammas[i] * rep.gammas[j], N);
    return (b.adjoint() * X).trace() / double(kN);
}

/// Matrix (i,j) -> -2 Re pair_coeff: inverts spin_lift_so on the spin part of X.
inline MatR so_part(const GammaRep& rep, const MatC& X) {
    const int n = rep.n;
    MatR w = MatR::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double c = -2.0 * pair_coeff(rep, X, i, j).real();
            w(i, j) = c;
            w(j, i) = -c;
        }
    return w;
}

}  // namespace dnspin
