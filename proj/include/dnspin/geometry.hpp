#pragma once

#include <cmath>
#include <vector>

#include "dnspin/fields.hpp"
#include "dnspin/grid.hpp"
#include "dnspin/parallel.hpp"

namespace dnspin {

namespace detail {

inline double inv_scalar(double x) { return 1.0 / x; }
inline JetR inv_scalar(const JetR& x) { return recip(x); }
inline double sqrt_scalar(double x) { return std::sqrt(x); }
inline JetR sqrt_scalar(const JetR& x) { return sqrt(x); }

/// Gauss-Jordan inverse without pivoting (used on SPD metric blocks).
template <class S>
std::vector<S> inverse_nopivot(std::vector<S> a, int n) {
    S zero = 0.0 * a[0];
    std::vector<S> b(n * n, zero);
    for (int i = 0; i < n; ++i) b[i * n + i] = zero + 1.0;
    for (int p = 0; p < n; ++p) {
        S ip = inv_scalar(a[p * n + p]);
        for (int j = 0; j < n; ++j) {
            a[p * n + j] = a[p * n + j] * ip;
            b[p * n + j] = b[p * n + j] * ip;
        }
        for (int i = 0; i < n; ++i) {
            if (i == p) continue;
            S f = a[i * n + p];
            for (int j = 0; j < n; ++j) {
                a[i * n + j] = a[i * n + j] - f * a[p * n + j];
                b[i * n + j] = b[i * n + j] - f * b[p * n + j];
            }
        }
    }
    return b;
}

/// Gram-Schmidt of the coordinate vectors d_1..d_m in the metric g (m x m
/// block of an n x n row-major matrix). Returns F with F[c*m+i] = (e_i)^c.
template <class S>
std::vector<S> gram_schmidt(const std::vector<S>& g, int n, int m) {
    S zero = 0.0 * g[0];
    std::vector<S> F(m * m, zero);
    auto ip = [&](const std::vector<S>& u, const std::vector<S>& v) {
        S r = zero;
        for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) r = r + g[a * n + b] * (u[a] * v[b]);
        return r;
    };
    std::vector<std::vector<S>> es;
    for (int i = 0; i < m; ++i) {
        std::vector<S> v(m, zero);
        v[i] = zero + 1.0;
        for (auto& e : es) {
            S c = ip(v, e);
            for (int a = 0; a < m; ++a) v[a] = v[a] - c * e[a];
        }
        S nr = inv_scalar(sqrt_scalar(ip(v, v)));
        for (int a = 0; a < m; ++a) v[a] = v[a] * nr;
        es.push_back(v);
    }
    for (int i = 0; i < m; ++i)
        for (int c = 0; c < m; ++c) F[c * m + i] = es[i][c];
    return F;
}

}  // namespace detail

/// Jets of the metric and derived chart quantities at a point.
struct GeomJets {
    int n = 0;
    std::vector<JetR> g, ginv;  // n*n row-major
    std::vector<JetR> Gam;      // Gam[c*n*n + a*n + b] = Gamma^c_ab
    JetR R;                     // scalar curvature
    JetR W;                     // sqrt det g

    const JetR& G(int c, int a, int b) const { return Gam[(c * n + a) * n + b]; }
};

inline std::vector<JetR> metric_jets(const MetricField& m, const std::vector<double>& x0, int J) {
    return m.eval(jet_point(x0, J));
}

inline GeomJets geometry_from_metric_jets(std::vector<JetR> g) {
    GeomJets G;
    const int n = static_cast<int>(std::lround(std::sqrt(double(g.size()))));
    G.n = n;
    G.g = std::move(g);
    G.ginv = detail::inverse_nopivot(G.g, n);
    std::vector<std::vector<JetR>> dg(n);
    for (int c = 0; c < n; ++c)
        for (auto& x : G.g) dg[c].push_back(x.deriv(c));
    JetR zero = 0.0 * dg[0][0];
    G.Gam.assign(n * n * n, zero);
    for (int c = 0; c < n; ++c)
        for (int a = 0; a < n; ++a)
            for (int b = a; b < n; ++b) {
                JetR s = zero;
                for (int d = 0; d < n; ++d) {
                    JetR t = dg[a][d * n + b] + dg[b][d * n + a] - dg[d][a * n + b];
                    s = s + G.ginv[c * n + d] * t;
                }
                s = 0.5 * s;
                G.Gam[(c * n + a) * n + b] = s;
                G.Gam[(c * n + b) * n + a] = s;
            }
    // R_ab = d_c G^c_ab - d_b G^c_ac + G^c_cd G^d_ab - G^c_bd G^d_ac
    JetR R = 0.0 * G.Gam[0].deriv(0);
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            JetR Rab = 0.0 * R;
            for (int c = 0; c < n; ++c) {
                Rab = Rab + G.G(c, a, b).deriv(c) - G.G(c, a, c).deriv(b);
                for (int d = 0; d < n; ++d) Rab = Rab + G.G(c, c, d) * G.G(d, a, b) - G.G(c, b, d) * G.G(d, a, c);
            }
            R = R + G.ginv[a * n + b] * Rab;
        }
    G.R = R;
    // closed-form determinant, n <= 3
    JetR det;
    if (n == 1) det = G.g[0];
    else if (n == 2) det = G.g[0] * G.g[3] - G.g[1] * G.g[2];
    else if (n == 3)
        det = G.g[0] * (G.g[4] * G.g[8] - G.g[5] * G.g[7]) - G.g[1] * (G.g[3] * G.g[8] - G.g[5] * G.g[6]) +
              G.g[2] * (G.g[3] * G.g[7] - G.g[4] * G.g[6]);
    else
        throw DomainError("geometry: n > 3 not supported on grids");
    G.W = sqrt(det);
    return G;
}

inline GeomJets geometry_jets(const MetricField& m, const std::vector<double>& x0, int J) {
    return geometry_from_metric_jets(metric_jets(m, x0, J));
}

inline double christoffel(const MetricField& m, const std::vector<double>& x, int c, int a, int b) {
    return geometry_jets(m, x, 1).G(c, a, b).value();
}

/// E = -1/2 g^{ab} d_n g_ab at (x', 0).
inline JetR e_term_jet(const GeomJets& G) {
    const int n = G.n;
    JetR s = 0.0 * G.g[0].deriv(n - 1);
    for (int a = 0; a < n - 1; ++a)
        for (int b = 0; b < n - 1; ++b) s = s + G.ginv[a * n + b] * G.g[a * n + b].deriv(n - 1);
    return -0.5 * s;
}

inline double e_term(const MetricField& m, const std::vector<double>& xp) {
    std::vector<double> x = xp;
    x.resize(m.n, 0.0);
    x[m.n - 1] = 0.0;
    return e_term_jet(geometry_jets(m, x, 1)).value();
}

inline double scalar_curvature(const MetricField& m, const std::vector<double>& x) { return geometry_jets(m, x, 2).R.value(); }

/// Frame and Levi-Civita forms in jet form. Ef[c*n+i] = (e_i)^c;
/// omega[a][i*n+j] = omega^i_j(d_a).
struct FrameJets {
    int n = 0;
    std::vector<JetR> Ef;
    std::vector<std::vector<JetR>> omega;
};

/// omega^i_j(d_a) = g_cb Ef[b][i] (d_a Ef[c][j] + Gamma^c_ad Ef[d][j]).
template <class S>
std::vector<std::vector<S>> levi_civita_forms(int n, const std::vector<S>& g, const std::vector<S>& Ef,
                                              const std::vector<std::vector<S>>& dEf, const std::vector<S>& Gam) {
    S zero = 0.0 * g[0];
    std::vector<std::vector<S>> om(n, std::vector<S>(n * n, zero));
    for (int a = 0; a < n; ++a) {
        // Y[c][j] = d_a Ef[c][j] + Gamma^c_ad Ef[d][j]
        std::vector<S> Y(n * n, zero);
        for (int c = 0; c < n; ++c)
            for (int j = 0; j < n; ++j) {
                S y = dEf[a][c * n + j];
                for (int d = 0; d < n; ++d) y = y + Gam[(c * n + a) * n + d] * Ef[d * n + j];
                Y[c * n + j] = y;
            }
        // gY[b][j] = g_bc Y[c][j]
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                S s = zero;
                for (int b = 0; b < n; ++b) {
                    S gy = zero;
                    for (int c = 0; c < n; ++c) gy = gy + g[b * n + c] * Y[c * n + j];
                    s = s + Ef[b * n + i] * gy;
                }
                om[a][i * n + j] = s;
            }
    }
    return om;
}

/// Parallel frame jets at a boundary point (x0_n = 0): Gram-Schmidt at the
/// boundary, then Picard iteration of d_n E = -C E with C^g_d = Gamma^g_{nd}.
inline FrameJets frame_jets(const GeomJets& G) {
    const int n = G.n, m = n - 1;
    std::vector<JetR> gb;
    for (auto& x : G.g) gb.push_back(x.restrict_var(n - 1));
    auto E0 = detail::gram_schmidt(gb, n, m);
    std::vector<JetR> C(m * m);
    for (int g = 0; g < m; ++g)
        for (int d = 0; d < m; ++d) C[g * m + d] = G.G(g, n - 1, d);
    std::vector<JetR> E = E0;
    const int J = G.g[0].sp->J;
    for (int it = 0; it <= J + 1; ++it) {
        std::vector<JetR> En(m * m);
        for (int g = 0; g < m; ++g)
            for (int i = 0; i < m; ++i) {
                JetR s = 0.0 * C[0];
                for (int d = 0; d < m; ++d) s = s + C[g * m + d] * E[d * m + i];
                En[g * m + i] = E0[g * m + i] - s.integrate(n - 1);
            }
        E = En;
    }
    FrameJets F;
    F.n = n;
    JetR zero = 0.0 * E[0];
    F.Ef.assign(n * n, zero);
    for (int c = 0; c < m; ++c)
        for (int i = 0; i < m; ++i) F.Ef[c * n + i] = E[c * m + i];
    F.Ef[n * n - 1] = zero + 1.0;
    std::vector<std::vector<JetR>> dEf(n);
    for (int a = 0; a < n; ++a)
        for (auto& x : F.Ef) dEf[a].push_back(x.deriv(a));
    F.omega = levi_civita_forms(n, G.g, F.Ef, dEf, G.Gam);
    return F;
}

/// Per grid point geometric data.
struct PointGeom {
    MatR g, ginv;
    std::vector<double> Gam;  // n^3
    double R = 0.0, W = 1.0;
    std::vector<double> dW;  // d_c sqrt det g
    MatR Ef;                 // Ef(c,i) = (e_i)^c
    std::vector<MatR> dEf;   // d_a Ef
    std::vector<MatR> omega; // omega[a](i,j) = omega^i_j(d_a)
    double gam(int c, int a, int b) const {
        int n = static_cast<int>(g.rows());
        return Gam[(c * n + a) * n + b];
    }
};

struct FrameData {
    SlabGrid grid;
    std::vector<PointGeom> pts;
};

namespace detail {

inline MatR to_mat(const std::vector<JetR>& a, int n) {
    MatR r(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) r(i, j) = a[i * n + j].value();
    return r;
}

// C and its tangential derivatives at x (tangential blocks).
inline void transport_coeffs(const MetricField& m, const std::vector<double>& x, MatR& C, std::vector<MatR>& dC) {
    const int n = m.n, mm = n - 1;
    auto G = geometry_jets(m, x, 2);
    C.resize(mm, mm);
    dC.assign(mm, MatR(mm, mm));
    for (int g = 0; g < mm; ++g)
        for (int d = 0; d < mm; ++d) {
            const JetR& c = G.G(g, n - 1, d);
            C(g, d) = c.value();
            for (int a = 0; a < mm; ++a) dC[a](g, d) = c.deriv(a).value();
        }
}

}  // namespace detail

/// Grid frame by RK4 along normal lines, with the tangent ODE
/// d_n(d_a E) = -(d_a C) E - C d_a E carried alongside.
inline FrameData parallel_frame(const MetricField& metric, const SlabGrid& grid) {
    const int n = grid.n, m = n - 1;
    if (metric.n != n) throw DomainError("parallel_frame: dimension mismatch");
    FrameData fd;
    fd.grid = grid;
    fd.pts.resize(grid.npoints());
    const double h = grid.hn();
    const bool flat = metric.kind == MetricField::Kind::Flat;
    parallel_for(grid.ntan(), [&](int t) {
        std::vector<double> x = grid.coord(grid.id(t, 0));
        // initial frame and its tangential derivatives from Gram-Schmidt on jets
        auto gj = metric_jets(metric, x, 1);
        auto Ej = detail::gram_schmidt(gj, n, m);
        MatR E(m, m);
        std::vector<MatR> dE(m, MatR(m, m));
        for (int c = 0; c < m; ++c)
            for (int i = 0; i < m; ++i) {
                E(c, i) = Ej[c * m + i].value();
                for (int a = 0; a < m; ++a) dE[a](c, i) = Ej[c * m + i].deriv(a).value();
            }
        for (int j = 0; j < grid.Nn; ++j) {
            int pid = grid.id(t, j);
            x = grid.coord(pid);
            auto G = geometry_jets(metric, x, 2);
            PointGeom& P = fd.pts[pid];
            P.g = detail::to_mat(G.g, n);
            P.ginv = detail::to_mat(G.ginv, n);
            P.Gam.resize(n * n * n);
            for (int q = 0; q < n * n * n; ++q) P.Gam[q] = G.Gam[q].value();
            P.R = G.R.value();
            P.W = G.W.value();
            P.dW.resize(n);
            for (int c = 0; c < n; ++c) P.dW[c] = G.W.deriv(c).value();
            P.Ef = MatR::Zero(n, n);
            P.Ef.topLeftCorner(m, m) = E;
            P.Ef(n - 1, n - 1) = 1.0;
            MatR C(m, m);
            for (int g = 0; g < m; ++g)
                for (int d = 0; d < m; ++d) C(g, d) = G.G(g, n - 1, d).value();
            P.dEf.assign(n, MatR::Zero(n, n));
            for (int a = 0; a < m; ++a) P.dEf[a].topLeftCorner(m, m) = dE[a];
            P.dEf[n - 1].topLeftCorner(m, m) = -C * E;
            // omega from values
            std::vector<double> gv(n * n), Efv(n * n);
            std::vector<std::vector<double>> dEv(n, std::vector<double>(n * n));
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) {
                    gv[a * n + b] = P.g(a, b);
                    Efv[a * n + b] = P.Ef(a, b);
                    for (int c = 0; c < n; ++c) dEv[c][a * n + b] = P.dEf[c](a, b);
                }
            auto om = levi_civita_forms(n, gv, Efv, dEv, P.Gam);
            P.omega.assign(n, MatR(n, n));
            for (int a = 0; a < n; ++a)
                for (int i = 0; i < n; ++i)
                    for (int jj = 0; jj < n; ++jj) P.omega[a](i, jj) = om[a][i * n + jj];
            if (j == grid.Nn - 1 || flat) continue;
            // RK4 step to j+1
            auto rhs = [&](double xn, const MatR& Es, const std::vector<MatR>& dEs, MatR& kE, std::vector<MatR>& kd) {
                std::vector<double> xx = x;
                xx[n - 1] = xn;
                MatR Cx;
                std::vector<MatR> dCx;
                detail::transport_coeffs(metric, xx, Cx, dCx);
                kE = -Cx * Es;
                kd.resize(m);
                for (int a = 0; a < m; ++a) kd[a] = -dCx[a] * Es - Cx * dEs[a];
            };
            const double xn = x[n - 1];
            MatR k1, k2, k3, k4;
            std::vector<MatR> d1, d2, d3, d4, tmp(m);
            rhs(xn, E, dE, k1, d1);
            for (int a = 0; a < m; ++a) tmp[a] = dE[a] + 0.5 * h * d1[a];
            rhs(xn + 0.5 * h, E + 0.5 * h * k1, tmp, k2, d2);
            for (int a = 0; a < m; ++a) tmp[a] = dE[a] + 0.5 * h * d2[a];
            rhs(xn + 0.5 * h, E + 0.5 * h * k2, tmp, k3, d3);
            for (int a = 0; a < m; ++a) tmp[a] = dE[a] + h * d3[a];
            rhs(xn + h, E + h * k3, tmp, k4, d4);
            E += (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4);
            for (int a = 0; a < m; ++a) dE[a] += (h / 6.0) * (d1[a] + 2 * d2[a] + 2 * d3[a] + d4[a]);
            if (!E.allFinite()) throw SolverError("parallel_frame: RK4 produced non-finite values at line " + std::to_string(t));
        }
    });
    return fd;
}

/// omega field on a grid (copied out of FrameData).
inline std::vector<std::vector<MatR>> levi_civita_one_form(const FrameData& fd) {
    std::vector<std::vector<MatR>> r;
    for (auto& p : fd.pts) r.push_back(p.omega);
    return r;
}

}  // namespace dnspin
