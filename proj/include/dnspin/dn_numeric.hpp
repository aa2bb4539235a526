#pragma once

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseLU>
#include <functional>
#include <memory>
#include <string>

#include "dnspin/dirac_fd.hpp"

namespace dnspin {

enum class SolverKind { Auto, Direct, Iterative };

/// Dirichlet problem for D^2 + Z - m^2 with data chi at x_n = 0 and 0 at x_n = T.
/// Boundary vectors are indexed t*kN + s over tangential points t.
/// Auto picks sparse LU for two-dimensional second-order grids and
/// ILUT-preconditioned BiCGSTAB otherwise (wide stencils make LU fill explode).
class DirichletSolver {
public:
    explicit DirichletSolver(const DiracSetup& S, double tol = 1e-10, SolverKind kind = SolverKind::Auto) : S_(S), tol_(tol) {
        D_ = assemble_dirac(S);
        SpMat L = dirac_laplacian(S, D_);
        const int kN = S.kN, Nn = S.grid.Nn;
        imap_.assign(S.dof(), -1);
        bmap_.assign(S.dof(), -1);
        int ni = 0;
        for (int pid = 0; pid < S.grid.npoints(); ++pid) {
            int j = pid % Nn, t = pid / Nn;
            for (int s = 0; s < kN; ++s) {
                if (j > 0 && j < Nn - 1) imap_[pid * kN + s] = ni++;
                if (j == 0) bmap_[pid * kN + s] = t * kN + s;
            }
        }
        ni_ = ni;
        std::vector<Trip> ti, tb;
        for (int c = 0; c < L.outerSize(); ++c)
            for (SpMat::InnerIterator it(L, c); it; ++it) {
                int r = imap_[it.row()];
                if (r < 0) continue;
                if (imap_[c] >= 0) ti.emplace_back(r, imap_[c], it.value());
                else if (bmap_[c] >= 0) tb.emplace_back(r, bmap_[c], it.value());
            }
        Lii_.resize(ni_, ni_);
        Lii_.setFromTriplets(ti.begin(), ti.end());
        Lii_.makeCompressed();
        Lib_.resize(ni_, nb());
        Lib_.setFromTriplets(tb.begin(), tb.end());
        if (kind == SolverKind::Auto)
            kind = (S.grid.n == 2 && S.grid.order_t == 2 && S.grid.order_n == 2 && ni_ <= 70000) ? SolverKind::Direct
                                                                                                  : SolverKind::Iterative;
        if (kind == SolverKind::Direct) {
            lu_ = std::make_unique<Eigen::SparseLU<SpMat>>();
            lu_->analyzePattern(Lii_);
            lu_->factorize(Lii_);
            if (lu_->info() != Eigen::Success) throw SolverError("Dirichlet LU factorisation failed: " + lu_->lastErrorMessage());
        } else {
            it_ = std::make_unique<Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<cd>>>();
            it_->setTolerance(tol_);
            it_->setMaxIterations(10000);
            it_->preconditioner().setDroptol(1e-4);
            it_->preconditioner().setFillfactor(20);
            it_->compute(Lii_);
            if (it_->info() != Eigen::Success) throw SolverError("Dirichlet preconditioner setup failed");
        }
    }

    int nb() const { return S_.grid.ntan() * S_.kN; }
    const DiracSetup& setup() const { return S_; }
    const SpMat& dirac() const { return D_; }
    double tolerance() const { return tol_; }
    bool direct() const { return static_cast<bool>(lu_); }

    /// Full-grid solution for boundary data chi.
    VecC solve(const VecC& chi) const {
        if (chi.size() != nb()) throw DomainError("solve_dirichlet: boundary data has wrong length");
        if (!chi.allFinite()) throw DomainError("solve_dirichlet: non-finite boundary data");
        VecC rhs = -(Lib_ * chi);
        VecC x = solve_interior(rhs);
        VecC phi = VecC::Zero(S_.dof());
        for (int i = 0; i < S_.dof(); ++i) {
            if (imap_[i] >= 0) phi(i) = x(imap_[i]);
            else if (bmap_[i] >= 0) phi(i) = chi(bmap_[i]);
        }
        return phi;
    }

    /// Relative interior residual of a full-grid field.
    double residual(const VecC& phi) const {
        VecC xi(ni_), chi(nb());
        for (int i = 0; i < S_.dof(); ++i) {
            if (imap_[i] >= 0) xi(imap_[i]) = phi(i);
            if (bmap_[i] >= 0) chi(bmap_[i]) = phi(i);
        }
        VecC rhs = -(Lib_ * chi);
        double nr = rhs.norm();
        return (Lii_ * xi - rhs).norm() / (nr > 0 ? nr : 1.0);
    }

private:
    VecC solve_interior(const VecC& rhs) const {
        if (rhs.norm() == 0.0) return VecC::Zero(ni_);
        VecC x;
        if (lu_) {
            x = lu_->solve(rhs);
        } else {
            x = it_->solve(rhs);
            if (it_->info() != Eigen::Success)
                throw SolverError("Dirichlet BiCGSTAB did not converge: iterations " + std::to_string(it_->iterations()) + ", error " +
                                  std::to_string(it_->error()));
        }
        double rel = (Lii_ * x - rhs).norm() / rhs.norm();
        double growth = x.norm() / rhs.norm();
        if (!x.allFinite() || rel > tol_ || growth > 1e12)
            throw SolverError("Dirichlet solve failed: relative residual " + std::to_string(rel) + ", solution growth " +
                              std::to_string(growth) + " (m^2 near a Dirichlet eigenvalue?)");
        return x;
    }

    const DiracSetup& S_;
    double tol_;
    SpMat D_, Lii_, Lib_;
    std::vector<int> imap_, bmap_;
    int ni_ = 0;
    std::unique_ptr<Eigen::SparseLU<SpMat>> lu_;
    std::unique_ptr<Eigen::BiCGSTAB<SpMat, Eigen::IncompleteLUT<cd>>> it_;
};

inline VecC solve_dirichlet(const DirichletSolver& sv, const VecC& chi) { return sv.solve(chi); }

/// nabla_n phi at x_n = 0: one-sided normal stencil plus theta_n chi.
inline VecC dn_from_solution(const DirichletSolver& sv, const VecC& phi) {
    const auto& S = sv.setup();
    const int kN = S.kN, n = S.grid.n;
    VecC out(sv.nb());
    for (int t = 0; t < S.grid.ntan(); ++t) {
        int pid = S.grid.id(t, 0);
        auto row = S.grid.d1(pid, n - 1);
        VecC v = VecC::Zero(kN);
        for (size_t q = 0; q < row.off.size(); ++q) v += row.w[q] * phi.segment(S.grid.shift(pid, n - 1, row.off[q]) * kN, kN);
        v += S.theta[pid][n - 1] * phi.segment(pid * kN, kN);
        out.segment(t * kN, kN) = v;
    }
    return out;
}

inline VecC dn_apply(const DirichletSolver& sv, const VecC& chi) { return dn_from_solution(sv, sv.solve(chi)); }

/// -gamma_n (D phi) at x_n = 0.
inline VecC dn_hat_apply(const DirichletSolver& sv, const VecC& chi) {
    const auto& S = sv.setup();
    VecC Dphi = sv.dirac() * sv.solve(chi);
    MatC gn = spin_lift(S.rep.gammas[S.grid.n - 1], S.N);
    VecC out(sv.nb());
    for (int t = 0; t < S.grid.ntan(); ++t) out.segment(t * S.kN, S.kN) = -gn * Dphi.segment(S.grid.id(t, 0) * S.kN, S.kN);
    return out;
}

/// Tangential part sum_alpha Gamma^alpha nabla_alpha chi at the boundary, using boundary values only.
inline VecC tangential_dirac(const DiracSetup& S, const VecC& chi) {
    const int kN = S.kN, n = S.grid.n;
    VecC out(chi.size());
    for (int t = 0; t < S.grid.ntan(); ++t) {
        int pid = S.grid.id(t, 0);
        VecC v = VecC::Zero(kN);
        for (int a = 0; a < n - 1; ++a) {
            auto row = S.grid.d1(pid, a);
            VecC d = S.theta[pid][a] * chi.segment(t * kN, kN);
            for (size_t q = 0; q < row.off.size(); ++q) d += row.w[q] * chi.segment((S.grid.shift(pid, a, row.off[q]) / S.grid.Nn) * kN, kN);
            v += S.Gl[pid][a] * d;
        }
        out.segment(t * kN, kN) = v;
    }
    return out;
}

struct DNMatrix {
    MatC M;
    SlabGrid grid;
    int kN = 0;
    double m = 0.0;
    bool normal_gauge = true;
    double tol = 1e-10;
    std::string family;
};

/// Column j = dn_apply(e_j); columns are solved in blocks in parallel.
inline DNMatrix dn_matrix(const DirichletSolver& sv, const std::string& family = "") {
    const auto& S = sv.setup();
    const int nb = sv.nb();
    DNMatrix R;
    R.M.resize(nb, nb);
    R.grid = S.grid;
    R.kN = S.kN;
    R.m = S.m;
    R.normal_gauge = S.conn.normal_gauge;
    R.tol = sv.tolerance();
    R.family = family;
    parallel_for(nb, [&](int j) {
        VecC e = VecC::Zero(nb);
        e(j) = 1.0;
        R.M.col(j) = dn_apply(sv, e);
    });
    if (!R.M.allFinite()) throw SolverError("dn_matrix: non-finite entries");
    return R;
}

/// Boundary vector e^{i k.x'} v.
inline VecC plane_wave(const SlabGrid& g, const std::vector<double>& k, const VecC& v) {
    const int kN = static_cast<int>(v.size());
    VecC chi(g.ntan() * kN);
    for (int t = 0; t < g.ntan(); ++t) {
        auto x = g.coord(g.id(t, 0));
        double ph = 0.0;
        for (int a = 0; a < g.n - 1; ++a) ph += k[a] * x[a];
        chi.segment(t * kN, kN) = std::exp(cd(0, ph)) * v;
    }
    return chi;
}

struct SymbolEstimate {
    MatC b1, b0;          // b0 = even + odd parts
    MatC b0_even, b0_odd;
    std::vector<MatC> samples;  // sigma(+lambda xi) per lambda
};

using BoundaryOperator = std::function<VecC(const VecC&)>;

/// Fit e^{-i lambda xi.x0} Lambda(e^{i lambda xi.x'} v) at boundary point t0 over the lambda list.
/// The even part (in xi) is fitted by lambda b1 + c0 + c1/lambda, the odd part by b0_odd + d1/lambda.
inline SymbolEstimate estimate_symbol(const BoundaryOperator& op, const SlabGrid& g, int kN, const std::vector<int>& xi,
                                      const std::vector<double>& lambdas, int t0 = 0) {
    if (lambdas.size() < 3) throw DomainError("estimate_symbol: need at least 3 lambda values");
    const int L = static_cast<int>(lambdas.size());
    auto x0 = g.coord(g.id(t0, 0));
    auto sample = [&](double lam) {
        MatC s(kN, kN);
        std::vector<double> k(g.n - 1);
        double ph = 0.0;
        for (int a = 0; a < g.n - 1; ++a) {
            k[a] = lam * xi[a];
            ph += k[a] * x0[a];
        }
        for (int c = 0; c < kN; ++c) {
            VecC v = VecC::Zero(kN);
            v(c) = 1.0;
            VecC y = op(plane_wave(g, k, v));
            s.col(c) = std::exp(cd(0, -ph)) * y.segment(t0 * kN, kN);
        }
        return s;
    };
    SymbolEstimate est;
    std::vector<MatC> ev, od;
    for (double lam : lambdas) {
        MatC p = sample(lam), q = sample(-lam);
        est.samples.push_back(p);
        ev.push_back(0.5 * (p + q));
        od.push_back(0.5 * (p - q));
    }
    Eigen::MatrixXd Ae(L, 3), Ao(L, 2);
    for (int i = 0; i < L; ++i) {
        Ae(i, 0) = lambdas[i];
        Ae(i, 1) = 1.0;
        Ae(i, 2) = 1.0 / lambdas[i];
        Ao(i, 0) = 1.0;
        Ao(i, 1) = 1.0 / lambdas[i];
    }
    Eigen::MatrixXd Pe = Ae.completeOrthogonalDecomposition().pseudoInverse();
    Eigen::MatrixXd Po = Ao.completeOrthogonalDecomposition().pseudoInverse();
    est.b1 = MatC::Zero(kN, kN);
    est.b0_even = MatC::Zero(kN, kN);
    est.b0_odd = MatC::Zero(kN, kN);
    for (int i = 0; i < L; ++i) {
        est.b1 += Pe(0, i) * ev[i];
        est.b0_even += Pe(1, i) * ev[i];
        est.b0_odd += Po(0, i) * od[i];
    }
    est.b0 = est.b0_even + est.b0_odd;
    return est;
}

inline SymbolEstimate estimate_symbol(const DNMatrix& dnm, const std::vector<int>& xi, const std::vector<double>& lambdas, int t0 = 0) {
    return estimate_symbol([&](const VecC& v) -> VecC { return dnm.M * v; }, dnm.grid, dnm.kN, xi, lambdas, t0);
}

inline SymbolEstimate estimate_symbol(const DirichletSolver& sv, const std::vector<int>& xi, const std::vector<double>& lambdas, int t0 = 0) {
    return estimate_symbol([&](const VecC& v) { return dn_apply(sv, v); }, sv.setup().grid, sv.setup().kN, xi, lambdas, t0);
}

/// Flat slab oracle for a single mode: -|kappa| coth(|kappa| T).
inline double flat_dn_oracle(double kappa, double T) {
    double k = std::abs(kappa);
    if (k == 0.0) return -1.0 / T;
    return -k / std::tanh(k * T);
}

/// DN eigenvalue of the plane-wave mode kappa (first tangential direction), read off at t = 0.
inline double dn_mode_eigenvalue(const DirichletSolver& sv, double kappa) {
    const auto& S = sv.setup();
    std::vector<double> k(S.grid.n - 1, 0.0);
    k[0] = kappa;
    VecC v = VecC::Zero(S.kN);
    v(0) = 1.0;
    VecC y = dn_apply(sv, plane_wave(S.grid, k, v));
    return y(0).real();
}

}  // namespace dnspin
