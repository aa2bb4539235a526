#pragma once

#include <Eigen/Sparse>
#include <random>
#include <vector>

#include "dnspin/parallel.hpp"
#include "dnspin/spin.hpp"

namespace dnspin {

using SpMat = Eigen::SparseMatrix<cd>;
using Trip = Eigen::Triplet<cd>;

/// Connection sampled on a grid; dA[pid][a*n+b] = d_a A_b (optional, needed for curvature).
struct ConnectionGrid {
    int n = 2, N = 1;
    std::vector<std::vector<MatC>> A;
    std::vector<std::vector<MatC>> dA;
    bool normal_gauge = true;
};

inline ConnectionGrid sample_connection(const ConnectionSource& src, const SlabGrid& grid) {
    ConnectionGrid c;
    c.n = grid.n;
    c.N = src.rank();
    c.normal_gauge = src.normal_gauge();
    c.A.resize(grid.npoints());
    c.dA.resize(grid.npoints());
    const int n = grid.n;
    parallel_for(grid.npoints(), [&](int pid) {
        auto j = src.jets(grid.coord(pid), 1);
        for (int a = 0; a < n; ++a) c.A[pid].push_back(j[a].value());
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) c.dA[pid].push_back(j[b].deriv(a).value());
    });
    return c;
}

inline ConnectionGrid zero_connection(const SlabGrid& grid, int N) {
    ConnectionGrid c;
    c.n = grid.n;
    c.N = N;
    c.A.assign(grid.npoints(), std::vector<MatC>(grid.n, MatC::Zero(N, N)));
    c.dA.assign(grid.npoints(), std::vector<MatC>(grid.n * grid.n, MatC::Zero(N, N)));
    return c;
}

/// Everything pointwise that the discrete operators need.
struct DiracSetup {
    GammaRep rep;
    int N = 1, kN = 2;
    SlabGrid grid;
    FrameData frame;
    ConnectionGrid conn;
    std::vector<std::vector<MatC>> theta;  // [pid][a]
    std::vector<std::vector<MatC>> Gl;     // [pid][c]: sum_i gamma_i Ef(c,i) (x) 1
    std::vector<MatC> Z;                   // empty means Z = 0
    double m = 0.0;

    int dof() const { return grid.npoints() * kN; }
    double W(int pid) const { return frame.pts[pid].W; }
};

inline DiracSetup make_setup(const FrameData& fd, const ConnectionGrid& conn, const MatrixField* Z = nullptr, double m = 0.0) {
    DiracSetup S;
    S.grid = fd.grid;
    const int n = S.grid.n;
    if (conn.n != n || static_cast<int>(conn.A.size()) != S.grid.npoints()) throw DomainError("make_setup: connection does not match grid");
    S.rep = build_gamma(n);
    S.N = conn.N;
    S.kN = S.rep.k * S.N;
    S.frame = fd;
    S.conn = conn;
    S.m = m;
    if (Z && !Z->empty() && Z->dim != S.kN) throw DomainError("make_setup: Z must be (kN)x(kN)");
    const int np = S.grid.npoints();
    S.theta.resize(np);
    S.Gl.resize(np);
    if (Z && !Z->empty()) S.Z.resize(np);
    parallel_for(np, [&](int pid) {
        const auto& P = fd.pts[pid];
        S.theta[pid] = twisted_connection(S.rep, P, conn.A[pid]);
        for (int c = 0; c < n; ++c) {
            MatC g = MatC::Zero(S.rep.k, S.rep.k);
            for (int i = 0; i < n; ++i) g += P.Ef(c, i) * S.rep.gammas[i];
            S.Gl[pid].push_back(spin_lift(g, S.N));
        }
        if (!S.Z.empty()) S.Z[pid] = Z->eval(S.grid.coord(pid));
    });
    return S;
}

inline DiracSetup make_setup(const MetricField& metric, const ConnectionGrid& conn, const SlabGrid& grid, const MatrixField* Z = nullptr,
                             double m = 0.0) {
    return make_setup(parallel_frame(metric, grid), conn, Z, m);
}

namespace detail {

inline void add_block(std::vector<Trip>& t, int r0, int c0, const MatC& b) {
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j)
            if (b(i, j) != cd(0)) t.emplace_back(r0 + i, c0 + j, b(i, j));
}

template <class F>
SpMat assemble_rows(const DiracSetup& S, F&& per_point) {
    const int np = S.grid.npoints();
    std::vector<std::vector<Trip>> parts(np);
    parallel_for(np, [&](int pid) { per_point(pid, parts[pid]); });
    size_t tot = 0;
    for (auto& p : parts) tot += p.size();
    std::vector<Trip> all;
    all.reserve(tot);
    for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
    SpMat M(S.dof(), S.dof());
    M.setFromTriplets(all.begin(), all.end());
    return M;
}

}  // namespace detail

/// Zeroth-order part of D: sum_i gamma_i theta(e_i) - 1/2 W^-1 d_c(W Gamma^c),
/// symmetrised (it is Hermitian in the continuum).
inline MatC dirac_potential(const DiracSetup& S, int pid) {
    const int n = S.grid.n;
    const auto& P = S.frame.pts[pid];
    MatC M = MatC::Zero(S.kN, S.kN);
    for (int i = 0; i < n; ++i) {
        MatC th = MatC::Zero(S.kN, S.kN);
        for (int a = 0; a < n; ++a) th += P.Ef(a, i) * S.theta[pid][a];
        M += spin_lift(S.rep.gammas[i], S.N) * th;
    }
    for (int c = 0; c < n; ++c) {
        M -= 0.5 * (P.dW[c] / P.W) * S.Gl[pid][c];
        MatC dg = MatC::Zero(S.rep.k, S.rep.k);
        for (int i = 0; i < n; ++i) dg += P.dEf[c](c, i) * S.rep.gammas[i];
        M -= 0.5 * spin_lift(dg, S.N);
    }
    return 0.5 * (M + MatC(M.adjoint()));
}

/// D = 1/2 sum_c (Gamma^c D_c + W^-1 D_c W Gamma^c) + M.
inline SpMat assemble_dirac(const DiracSetup& S) {
    const int n = S.grid.n, kN = S.kN;
    return detail::assemble_rows(S, [&](int pid, std::vector<Trip>& t) {
        const double Wx = S.W(pid);
        for (int c = 0; c < n; ++c) {
            auto row = S.grid.d1(pid, c);
            for (size_t q = 0; q < row.off.size(); ++q) {
                int y = S.grid.shift(pid, c, row.off[q]);
                MatC b = (0.5 * row.w[q]) * (S.Gl[pid][c] + (S.W(y) / Wx) * S.Gl[y][c]);
                detail::add_block(t, pid * kN, y * kN, b);
            }
        }
        detail::add_block(t, pid * kN, pid * kN, dirac_potential(S, pid));
    });
}

inline SpMat block_diag(const DiracSetup& S, const std::vector<MatC>& B) {
    return detail::assemble_rows(S, [&](int pid, std::vector<Trip>& t) { detail::add_block(t, pid * S.kN, pid * S.kN, B[pid]); });
}

/// D^2 + Z - m^2.
inline SpMat dirac_laplacian(const DiracSetup& S, const SpMat& D) {
    SpMat L = D * D;
    if (!S.Z.empty()) L += block_diag(S, S.Z);
    if (S.m != 0.0) {
        SpMat I(S.dof(), S.dof());
        I.setIdentity();
        L -= (S.m * S.m) * I;
    }
    L.makeCompressed();
    return L;
}
inline SpMat dirac_laplacian(const DiracSetup& S) { return dirac_laplacian(S, assemble_dirac(S)); }

/// Curvature operator at each grid point.
inline std::vector<MatC> curvature_operator(const DiracSetup& S) {
    const int n = S.grid.n;
    if (S.conn.dA.empty()) throw DomainError("curvature_operator: connection derivatives not available");
    std::vector<MatC> r(S.grid.npoints());
    parallel_for(S.grid.npoints(), [&](int pid) {
        const auto& A = S.conn.A[pid];
        const auto& dA = S.conn.dA[pid];
        std::vector<MatC> F;
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) F.push_back(dA[a * n + b] - dA[b * n + a] + A[a] * A[b] - A[b] * A[a]);
        r[pid] = curvature_endo(S.rep, S.frame.pts[pid].Ef, F);
    });
    return r;
}

/// nabla_a = D_a (x) 1 + theta_a.
inline SpMat covariant_derivative(const DiracSetup& S, int a) {
    const int kN = S.kN;
    return detail::assemble_rows(S, [&](int pid, std::vector<Trip>& t) {
        auto row = S.grid.d1(pid, a);
        for (size_t q = 0; q < row.off.size(); ++q) {
            int y = S.grid.shift(pid, a, row.off[q]);
            for (int s = 0; s < kN; ++s) t.emplace_back(pid * kN + s, y * kN + s, row.w[q]);
        }
        detail::add_block(t, pid * kN, pid * kN, S.theta[pid][a]);
    });
}

/// -g^{ab}(nabla_a nabla_b - Gamma^c_ab nabla_c) + R/4 + curvature operator.
inline SpMat assemble_lichnerowicz(const DiracSetup& S) {
    const int n = S.grid.n, np = S.grid.npoints();
    std::vector<SpMat> Nb;
    for (int a = 0; a < n; ++a) Nb.push_back(covariant_derivative(S, a));
    auto diag = [&](auto f) {
        std::vector<MatC> d(np);
        for (int pid = 0; pid < np; ++pid) d[pid] = f(pid) * MatC::Identity(S.kN, S.kN);
        return block_diag(S, d);
    };
    SpMat L(S.dof(), S.dof());
    for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
            SpMat G = diag([&](int pid) { return S.frame.pts[pid].ginv(a, b); });
            L -= G * (Nb[a] * Nb[b]);
        }
    for (int c = 0; c < n; ++c) {
        SpMat G = diag([&](int pid) {
            const auto& P = S.frame.pts[pid];
            double s = 0.0;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) s += P.ginv(a, b) * P.gam(c, a, b);
            return s;
        });
        L += G * Nb[c];
    }
    auto F = curvature_operator(S);
    for (int pid = 0; pid < np; ++pid) F[pid] += 0.25 * S.frame.pts[pid].R * MatC::Identity(S.kN, S.kN);
    L += block_diag(S, F);
    L.makeCompressed();
    return L;
}

/// Points whose normal index keeps every stencil centred for products of two first-order operators.
inline bool in_core(const SlabGrid& g, int pid) {
    int j = pid % g.Nn, w = g.order_n;
    return j >= w && j <= g.Nn - 1 - w;
}

/// max over core points of |D^2 psi - L psi|.
inline double lichnerowicz_residual(const DiracSetup& S, const VecC& psi) {
    SpMat D = assemble_dirac(S);
    VecC r = D * (D * psi) - assemble_lichnerowicz(S) * psi;
    double m = 0.0;
    for (int pid = 0; pid < S.grid.npoints(); ++pid)
        if (in_core(S.grid, pid)) m = std::max(m, r.segment(pid * S.kN, S.kN).cwiseAbs().maxCoeff());
    return m;
}

/// sum_x W(x) <u(x), v(x)> times the cell volume.
inline cd inner(const DiracSetup& S, const VecC& u, const VecC& v) {
    double vol = S.grid.hn();
    for (int a = 0; a < S.grid.n - 1; ++a) vol *= S.grid.ht(a);
    cd s = 0.0;
    for (int pid = 0; pid < S.grid.npoints(); ++pid) s += S.W(pid) * u.segment(pid * S.kN, S.kN).dot(v.segment(pid * S.kN, S.kN));
    return s * vol;
}

/// Smooth spinor: sum of a few modes exp(i k.x') p(x_n) with random coefficient vectors.
/// With `support_margin` > 0 it is multiplied by a bump vanishing within that many normal cells of both faces.
inline VecC test_spinor(const DiracSetup& S, std::mt19937_64& rng, int support_margin = 0) {
    const int n = S.grid.n;
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> ki(-2, 2);
    struct Mode {
        std::vector<int> k;
        double a, b;
        VecC v;
    };
    std::vector<Mode> modes;
    for (int t = 0; t < 3; ++t) {
        Mode md;
        for (int a = 0; a < n - 1; ++a) md.k.push_back(ki(rng));
        md.a = nd(rng);
        md.b = nd(rng);
        md.v = VecC(S.kN);
        for (int s = 0; s < S.kN; ++s) md.v(s) = cd(nd(rng), nd(rng));
        modes.push_back(md);
    }
    const double T = S.grid.T, h = S.grid.hn();
    VecC psi = VecC::Zero(S.dof());
    for (int pid = 0; pid < S.grid.npoints(); ++pid) {
        auto x = S.grid.coord(pid);
        double xn = x[n - 1];
        double bump = 1.0;
        if (support_margin > 0) {
            double lo = support_margin * h, hi = T - support_margin * h;
            if (xn <= lo || xn >= hi) bump = 0.0;
            else bump = std::pow(std::sin(std::numbers::pi * (xn - lo) / (hi - lo)), 4);
        }
        for (auto& md : modes) {
            double ph = 0.0;
            for (int a = 0; a < n - 1; ++a) ph += md.k[a] * x[a];
            cd f = std::exp(cd(0, ph)) * (1.0 + md.a * xn + md.b * std::cos(2.0 * xn)) * bump;
            psi.segment(pid * S.kN, S.kN) += f * md.v;
        }
    }
    return psi;
}

/// i * (discrete symbol) of the periodic first-derivative stencil at wavenumber kappa.
inline double periodic_symbol(int p, double h, double kappa) {
    auto r = periodic_d1(p, h);
    cd s = 0.0;
    for (size_t q = 0; q < r.off.size(); ++q) s += r.w[q] * std::exp(cd(0, kappa * r.off[q] * h));
    return s.imag();
}

}  // namespace dnspin
