#pragma once

#include <Eigen/SparseLU>
#include <cmath>
#include <memory>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "dnspin/dn_numeric.hpp"

namespace dnspin {

namespace detail {

/// Copy the valid part of a jet into another space over the same variables.
inline JetM rebase(const JetM& a, const std::shared_ptr<const JetSpace>& sp) {
    int o = std::min(a.ord, sp->J);
    JetM r = JetM::zero(sp, o, MatC::Zero(a.c[0].rows(), a.c[0].cols()));
    for (int i = 0; i < sp->count(o); ++i) r.c[i] = a.c[a.sp->index(sp->mono[i])];
    return r;
}

inline double unitarity_defect(const MatC& G) {
    return (G.adjoint() * G - MatC::Identity(G.rows(), G.cols())).cwiseAbs().maxCoeff();
}

inline double spectral_norm(const MatC& S) {
    if (S.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatC> svd(S);
    return svd.singularValues()(0);
}

inline MatC commutator(const MatC& a, const MatC& b) { return a * b - b * a; }

}  // namespace detail

/// A U(N)-valued field with exact jets.
struct GaugeSource {
    virtual ~GaugeSource() = default;
    virtual int dim() const = 0;
    virtual int rank() const = 0;
    virtual bool boundary_identity() const = 0;
    virtual JetM jet(const std::vector<double>& x, int J) const = 0;
    MatC eval(const std::vector<double>& x) const { return jet(x, 0).value(); }
};

/// G = exp(S(x)), S skew-Hermitian.
struct ExpGauge : GaugeSource {
    int n = 2;
    MatrixField S;

    ExpGauge(int n_, MatrixField S_) : n(n_), S(std::move(S_)) {}
    int dim() const override { return n; }
    int rank() const override { return S.dim; }
    /// Every term carries a positive power of x_n.
    bool boundary_identity() const override {
        for (auto& f : S.f)
            for (auto& t : f.terms)
                if (t.pow < 1) return false;
        return true;
    }
    JetM jet(const std::vector<double>& x, int J) const override {
        auto xs = jet_point(x, J);
        if (S.empty()) return JetM(xs[0].sp, J, MatC::Identity(S.dim, S.dim));
        return expm(S.jet(xs));
    }
};

inline std::shared_ptr<ExpGauge> random_gauge(int n, int N, std::mt19937_64& rng, double amp, bool boundary_identity) {
    MatrixField S;
    S.dim = N;
    for (int t = 0; t < 2; ++t) {
        auto f = random_scalar(n, rng, 1.0, 2, 2, 2);
        if (boundary_identity)
            for (auto& term : f.terms) term.pow += 1;
        S.add(f, random_skew(N, rng, amp));
    }
    return std::make_shared<ExpGauge>(n, S);
}

/// A' = G^-1 A G + G^-1 dG. Orders drop by one.
inline std::vector<JetM> apply_gauge(const std::vector<JetM>& A, const JetM& G) {
    if (detail::unitarity_defect(G.value()) > 1e-10) throw DomainError("apply_gauge: G is not unitary");
    JetM Gi = inverse(G);
    std::vector<JetM> r;
    for (size_t a = 0; a < A.size(); ++a) r.push_back(Gi * A[a] * G + Gi * G.deriv(static_cast<int>(a)));
    return r;
}

inline std::vector<MatC> apply_gauge(const std::vector<MatC>& A, const MatC& G, const std::vector<MatC>& dG) {
    if (detail::unitarity_defect(G) > 1e-10) throw DomainError("apply_gauge: G is not unitary");
    MatC Gi = G.inverse();
    std::vector<MatC> r;
    for (size_t a = 0; a < A.size(); ++a) r.push_back(Gi * A[a] * G + Gi * dG[a]);
    return r;
}

struct GaugedConnection : ConnectionSource {
    std::shared_ptr<const ConnectionSource> A;
    std::shared_ptr<const GaugeSource> G;

    GaugedConnection(std::shared_ptr<const ConnectionSource> A_, std::shared_ptr<const GaugeSource> G_) : A(std::move(A_)), G(std::move(G_)) {
        if (A->rank() != G->rank() || A->dim() != G->dim()) throw DomainError("GaugedConnection: rank/dimension mismatch");
    }
    int dim() const override { return A->dim(); }
    int rank() const override { return A->rank(); }
    bool normal_gauge() const override { return false; }
    std::vector<JetM> jets(const std::vector<double>& x, int J) const override {
        auto r = apply_gauge(A->jets(x, J + 1), G->jet(x, J + 1));
        auto sp = JetSpace::get(dim(), J);
        for (auto& a : r) a = detail::rebase(a, sp);
        return r;
    }
};

/// U(N) values on a grid.
struct GaugeGrid {
    int n = 2, N = 1;
    std::vector<MatC> G;
    bool boundary_identity = false;
};

inline GaugeGrid sample_gauge(const GaugeSource& src, const SlabGrid& grid) {
    GaugeGrid g;
    g.n = grid.n;
    g.N = src.rank();
    g.boundary_identity = src.boundary_identity();
    g.G.resize(grid.npoints());
    parallel_for(grid.npoints(), [&](int pid) { g.G[pid] = src.eval(grid.coord(pid)); });
    return g;
}

/// F_ab = d_a A_b - d_b A_a + [A_a, A_b] at every grid point, row-major n x n.
inline std::vector<std::vector<MatC>> curvature_values(const ConnectionGrid& c) {
    const int n = c.n;
    if (c.dA.empty()) throw DomainError("curvature_values: connection derivatives not available");
    std::vector<std::vector<MatC>> F(c.A.size());
    parallel_for(static_cast<int>(c.A.size()), [&](int pid) {
        const auto& A = c.A[pid];
        const auto& dA = c.dA[pid];
        for (int a = 0; a < n; ++a)
            for (int b = 0; b < n; ++b) F[pid].push_back(dA[a * n + b] - dA[b * n + a] + detail::commutator(A[a], A[b]));
    });
    return F;
}

/// sqrt(sum_{a<b} |F_ab|^2).
inline double curvature_norm(const std::vector<MatC>& F, int n) {
    double s = 0.0;
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b) s += F[a * n + b].squaredNorm();
    return std::sqrt(s);
}

// ---------------------------------------------------------------- normal gauge

/// A' = F^-1 A F + F^-1 dF with d_n F = -A_n F, F = Id at x_n = 0.
/// F is carried along each normal line as a tangential jet by RK4 and
/// completed in x_n by Picard iteration at the evaluation point.
class NormalGaugeFix : public ConnectionSource {
public:
    explicit NormalGaugeFix(std::shared_ptr<const ConnectionSource> A, double hmax = 1.0 / 512) : A_(std::move(A)), hmax_(hmax) {
        if (!(hmax_ > 0)) throw DomainError("NormalGaugeFix: step must be positive");
    }
    int dim() const override { return A_->dim(); }
    int rank() const override { return A_->rank(); }
    bool normal_gauge() const override { return true; }

    /// Tangential jets (order J) of F at the given increasing heights over x'.
    std::vector<JetM> line(const std::vector<double>& xp, const std::vector<double>& heights, int J) const {
        const int n = dim(), N = rank();
        auto sp = JetSpace::get(n, J);
        JetM F(sp, J, MatC::Identity(N, N));
        std::vector<double> x = xp;
        x.resize(n);
        auto rhs = [&](double s, const JetM& Y) {
            x[n - 1] = s;
            return -(A_->jets(x, J)[n - 1].restrict_var(n - 1) * Y);
        };
        std::vector<JetM> out;
        double s = 0.0;
        for (double target : heights) {
            if (target < s) throw DomainError("NormalGaugeFix: heights must increase");
            int m = static_cast<int>(std::ceil((target - s) / hmax_ - 1e-12));
            if (m > 0) {
                double h = (target - s) / m;
                for (int q = 0; q < m; ++q) {
                    JetM k1 = rhs(s, F);
                    JetM k2 = rhs(s + 0.5 * h, F + (0.5 * h) * k1);
                    JetM k3 = rhs(s + 0.5 * h, F + (0.5 * h) * k2);
                    JetM k4 = rhs(s + h, F + h * k3);
                    F += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    s += h;
                }
                if (!F.value().allFinite()) throw SolverError("normal_gauge_fix: ODE produced non-finite values");
            }
            s = target;
            out.push_back(F);
        }
        return out;
    }

    /// Full jet of F at x from its tangential jet Ft there (same space).
    JetM complete(const std::vector<double>& x, const JetM& Ft) const {
        const int n = dim(), J = Ft.sp->J;
        auto An = A_->jets(x, J)[n - 1];
        JetM F = Ft;
        for (int it = 0; it <= J + 1; ++it) F = Ft - (An * F).integrate(n - 1);
        return F;
    }

    JetM gauge_jet(const std::vector<double>& x, int J) const {
        std::vector<double> xp(x.begin(), x.end() - 1);
        return complete(x, line(xp, {x.back()}, J)[0]);
    }

    std::vector<JetM> jets(const std::vector<double>& x, int J) const override {
        std::vector<double> xp(x.begin(), x.end() - 1);
        auto Ft = line(xp, {x.back()}, J + 1)[0];
        return gauged(x, Ft, J);
    }

    /// A' jets of order J at x from the tangential jet of F there (space order J+1).
    std::vector<JetM> gauged(const std::vector<double>& x, const JetM& Ft, int J) const {
        JetM F = complete(x, Ft);
        auto r = apply_gauge(A_->jets(x, J + 1), F);
        auto sp = JetSpace::get(dim(), J);
        for (auto& a : r) a = detail::rebase(a, sp);
        return r;
    }

    const ConnectionSource& source() const { return *A_; }

private:
    std::shared_ptr<const ConnectionSource> A_;
    double hmax_;
};

struct NormalGaugeResult {
    GaugeGrid F;
    ConnectionGrid A;
    double max_An = 0.0;       // max |A'_n|
    double unitarity = 0.0;    // max |F^H F - Id|
    double boundary = 0.0;     // max |F - Id| at x_n = 0
};

/// Grid version: one RK4 sweep per normal line.
inline NormalGaugeResult normal_gauge_fix(const ConnectionSource& A, const SlabGrid& grid, double hmax = 1.0 / 512) {
    const int n = grid.n, N = A.rank();
    if (A.dim() != n) throw DomainError("normal_gauge_fix: dimension mismatch");
    std::shared_ptr<const ConnectionSource> ref(&A, [](const ConnectionSource*) {});
    NormalGaugeFix fix(ref, hmax);
    NormalGaugeResult R;
    R.F.n = n;
    R.F.N = N;
    R.F.boundary_identity = true;
    R.F.G.resize(grid.npoints());
    R.A.n = n;
    R.A.N = N;
    R.A.normal_gauge = true;
    R.A.A.resize(grid.npoints());
    R.A.dA.resize(grid.npoints());
    std::vector<double> heights;
    for (int j = 0; j < grid.Nn; ++j) heights.push_back(grid.hn() * j);
    std::vector<double> mA(grid.ntan(), 0.0), mU(grid.ntan(), 0.0), mB(grid.ntan(), 0.0);
    parallel_for(grid.ntan(), [&](int t) {
        auto x0 = grid.coord(grid.id(t, 0));
        std::vector<double> xp(x0.begin(), x0.end() - 1);
        auto Ft = fix.line(xp, heights, 2);
        for (int j = 0; j < grid.Nn; ++j) {
            int pid = grid.id(t, j);
            auto x = grid.coord(pid);
            MatC Fv = fix.complete(x, Ft[j]).value();
            R.F.G[pid] = Fv;
            auto Ap = fix.gauged(x, Ft[j], 1);
            for (int a = 0; a < n; ++a) R.A.A[pid].push_back(Ap[a].value());
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) R.A.dA[pid].push_back(Ap[b].deriv(a).value());
            mA[t] = std::max(mA[t], Ap[n - 1].value().cwiseAbs().maxCoeff());
            mU[t] = std::max(mU[t], detail::unitarity_defect(Fv));
            if (j == 0) mB[t] = (Fv - MatC::Identity(N, N)).cwiseAbs().maxCoeff();
        }
    });
    for (int t = 0; t < grid.ntan(); ++t) {
        R.max_An = std::max(R.max_An, mA[t]);
        R.unitarity = std::max(R.unitarity, mU[t]);
        R.boundary = std::max(R.boundary, mB[t]);
    }
    return R;
}

// ---------------------------------------------------------------- Theta(S)

constexpr int kThetaTerms = 20;

inline void check_theta_domain(const MatC& S) {
    if (detail::spectral_norm(S) > 1.0) throw DomainError("theta: |S| > 1 exceeds the truncation bound");
}

/// sum_{j=0}^{20} (-ad S)^j X / (j+1)!
inline MatC theta_apply(const MatC& S, const MatC& X) {
    check_theta_domain(S);
    MatC P = X, r = X;
    double f = 1.0;
    for (int j = 1; j <= kThetaTerms; ++j) {
        P = -detail::commutator(S, P);
        f *= (j + 1);
        r += P / f;
    }
    return r;
}

/// Derivative of Theta at S in direction X, applied to Y.
inline MatC dtheta_apply(const MatC& S, const MatC& X, const MatC& Y) {
    check_theta_domain(S);
    MatC P = Y, Q = MatC::Zero(Y.rows(), Y.cols()), r = Q;
    double f = 1.0;
    for (int j = 1; j <= kThetaTerms; ++j) {
        MatC Pn = -detail::commutator(S, P);
        Q = -detail::commutator(X, P) - detail::commutator(S, Q);
        P = Pn;
        f *= (j + 1);
        r += Q / f;
    }
    return r;
}

/// Theta(S) as a matrix on column-major vec(X).
inline MatC theta_matrix(const MatC& S) {
    const int N = static_cast<int>(S.rows());
    MatC M(N * N, N * N);
    for (int q = 0; q < N * N; ++q) {
        MatC E = MatC::Zero(N, N);
        E(q % N, q / N) = 1.0;
        MatC v = theta_apply(S, E);
        M.col(q) = Eigen::Map<VecC>(v.data(), N * N);
    }
    return M;
}

inline MatC theta_inverse_apply(const MatC& S, const MatC& Y) {
    const int N = static_cast<int>(S.rows());
    MatC M = theta_matrix(S);
    Eigen::FullPivLU<MatC> lu(M);
    if (lu.rank() < N * N || lu.rcond() < 1e-12) throw DomainError("theta: Theta(S) is singular");
    MatC y = Y;
    VecC x = lu.solve(Eigen::Map<VecC>(y.data(), N * N));
    return Eigen::Map<MatC>(x.data(), N, N);
}

/// A priori tail bound |ad S|^21 / 21! with |ad S| <= 2|S|.
inline double theta_truncation_bound(const MatC& S) {
    double a = 2.0 * detail::spectral_norm(S), r = 1.0;
    for (int j = 1; j <= kThetaTerms + 1; ++j) r *= a / j;
    return r;
}

/// |d/dt e^{S + t dS} - e^S Theta(S)(dS)| at t = 0, central differences with step h.
inline double dexp_check(const MatC& S, const MatC& dS, double h = 1e-5) {
    MatC fd = (MatC((S + h * dS).exp()) - MatC((S - h * dS).exp())) / (2.0 * h);
    MatC ex = MatC(S.exp()) * theta_apply(S, dS);
    return (fd - ex).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------- current

/// Basis of u(N): i E_jj, E_jk - E_kj, i(E_jk + E_kj), orthogonal for <X,Y> = -tr(XY).
inline std::vector<MatC> u_basis(int N) {
    std::vector<MatC> T;
    for (int j = 0; j < N; ++j) {
        MatC m = MatC::Zero(N, N);
        m(j, j) = cd(0, 1);
        T.push_back(m);
    }
    for (int j = 0; j < N; ++j)
        for (int k = j + 1; k < N; ++k) {
            MatC a = MatC::Zero(N, N), b = MatC::Zero(N, N);
            a(j, k) = 1.0;
            a(k, j) = -1.0;
            b(j, k) = cd(0, 1);
            b(k, j) = cd(0, 1);
            T.push_back(a);
            T.push_back(b);
        }
    return T;
}

inline double u_pairing(const MatC& X, const MatC& Y) { return -(X * Y).trace().real(); }

/// Frame components J_i = sum_s Re<phi, gamma_i (T_s phi)> T_s / |T_s|^2.
inline std::vector<MatC> current(const GammaRep& rep, int N, const VecC& phi) {
    if (phi.size() != rep.k * N) throw DomainError("current: spinor has wrong length");
    auto T = u_basis(N);
    std::vector<MatC> J;
    for (int i = 0; i < rep.n; ++i) {
        MatC Ji = MatC::Zero(N, N);
        for (auto& Ts : T) {
            double c = phi.dot(detail::kron(rep.gammas[i], Ts) * phi).real();
            Ji += (c / u_pairing(Ts, Ts)) * Ts;
        }
        J.push_back(Ji);
    }
    return J;
}

/// Coordinate components J_a = sum_i J_i e^i(d_a).
inline std::vector<MatC> current_coords(const GammaRep& rep, int N, const VecC& phi, const MatR& Ef) {
    auto Ji = current(rep, N, phi);
    MatR h = Ef.inverse();
    std::vector<MatC> J;
    for (int a = 0; a < rep.n; ++a) {
        MatC s = MatC::Zero(N, N);
        for (int i = 0; i < rep.n; ++i) s += h(i, a) * Ji[i];
        J.push_back(s);
    }
    return J;
}

/// max |J(G phi) - G J(phi) G^-1| over frame components.
inline double current_equivariance_defect(const GammaRep& rep, const MatC& G, const VecC& phi) {
    const int N = static_cast<int>(G.rows());
    auto J0 = current(rep, N, phi);
    auto J1 = current(rep, N, gauge_lift(rep.k, G) * phi);
    MatC Gi = G.inverse();
    double d = 0.0;
    for (int i = 0; i < rep.n; ++i) d = std::max(d, (J1[i] - G * J0[i] * Gi).cwiseAbs().maxCoeff());
    return d;
}

// ---------------------------------------------------------------- forms and d_A*

/// u(N)-valued 1- and 2-forms on the grid. A 1-form is stored as
/// ((pid*n + a)*N^2 + q), a 2-form as ((pid*P + p)*N^2 + q) with p over pairs a<b
/// and q the column-major entry index.
class FormOps {
public:
    FormOps(const FrameData& fd, const ConnectionGrid& conn) : fd_(fd), n_(fd.grid.n), N_(conn.N) {
        const auto& g = fd.grid;
        if (conn.n != n_ || static_cast<int>(conn.A.size()) != g.npoints()) throw DomainError("FormOps: connection does not match grid");
        for (int a = 0; a < n_; ++a)
            for (int b = a + 1; b < n_; ++b) pairs_.push_back({a, b});
        const int NN = N_ * N_, P = static_cast<int>(pairs_.size()), np = g.npoints();
        vol_ = g.hn();
        for (int a = 0; a < n_ - 1; ++a) vol_ *= g.ht(a);
        MatC I = MatC::Identity(N_, N_);
        std::vector<std::vector<Trip>> parts(np);
        parallel_for(np, [&](int pid) {
            auto& t = parts[pid];
            std::vector<MatC> ad(n_);
            for (int a = 0; a < n_; ++a) ad[a] = detail::kron(I, conn.A[pid][a]) - detail::kron(conn.A[pid][a].transpose(), I);
            for (int p = 0; p < P; ++p) {
                auto [a, b] = pairs_[p];
                int r0 = (pid * P + p) * NN;
                // D_a w_b - D_b w_a
                for (int s = 0; s < 2; ++s) {
                    int c = s == 0 ? a : b, e = s == 0 ? b : a;
                    double sg = s == 0 ? 1.0 : -1.0;
                    auto row = g.d1(pid, c);
                    for (size_t q = 0; q < row.off.size(); ++q) {
                        int y = g.shift(pid, c, row.off[q]);
                        for (int k = 0; k < NN; ++k) t.emplace_back(r0 + k, (y * n_ + e) * NN + k, sg * row.w[q]);
                    }
                }
                detail::add_block(t, r0, (pid * n_ + b) * NN, ad[a]);
                detail::add_block(t, r0, (pid * n_ + a) * NN, -ad[b]);
            }
        });
        std::vector<Trip> all;
        for (auto& p : parts) all.insert(all.end(), p.begin(), p.end());
        d_.resize(np * P * NN, np * n_ * NN);
        d_.setFromTriplets(all.begin(), all.end());
        d_.makeCompressed();
        dH_ = d_.adjoint();
    }

    int n() const { return n_; }
    int rank() const { return N_; }
    int pairs() const { return static_cast<int>(pairs_.size()); }
    const SpMat& d() const { return d_; }

    /// Pointwise metric on 1-forms: W vol g^{ab}.
    MatR metric1(int pid) const {
        const auto& P = fd_.pts[pid];
        return P.W * vol_ * P.ginv;
    }
    /// Pointwise metric on 2-forms: W vol (g^{ac} g^{bd} - g^{ad} g^{bc}).
    MatR metric2(int pid) const {
        const auto& P = fd_.pts[pid];
        const int Pn = pairs();
        MatR M(Pn, Pn);
        for (int p = 0; p < Pn; ++p)
            for (int q = 0; q < Pn; ++q) {
                auto [a, b] = pairs_[p];
                auto [c, d] = pairs_[q];
                M(p, q) = P.W * vol_ * (P.ginv(a, c) * P.ginv(b, d) - P.ginv(a, d) * P.ginv(b, c));
            }
        return M;
    }

    VecC apply_metric1(const VecC& w, bool inverse = false) const { return apply_blocks(w, n_, inverse, [&](int pid) { return metric1(pid); }); }
    VecC apply_metric2(const VecC& F) const { return apply_blocks(F, pairs(), false, [&](int pid) { return metric2(pid); }); }

    /// Formal adjoint of d_A for the weighted pairings.
    VecC dstar(const VecC& F) const { return apply_metric1(dH_ * apply_metric2(F), true); }

    double inner1(const VecC& u, const VecC& v) const { return u.dot(apply_metric1(v)).real(); }
    double inner2(const VecC& u, const VecC& v) const { return u.dot(apply_metric2(v)).real(); }

    VecC pack1(const std::vector<std::vector<MatC>>& w) const {
        const int NN = N_ * N_;
        VecC v(static_cast<int>(w.size()) * n_ * NN);
        for (size_t pid = 0; pid < w.size(); ++pid)
            for (int a = 0; a < n_; ++a) {
                MatC m = w[pid][a];
                v.segment((pid * n_ + a) * NN, NN) = Eigen::Map<VecC>(m.data(), NN);
            }
        return v;
    }
    /// From row-major n x n component lists.
    VecC pack2(const std::vector<std::vector<MatC>>& F) const {
        const int NN = N_ * N_, P = pairs();
        VecC v(static_cast<int>(F.size()) * P * NN);
        for (size_t pid = 0; pid < F.size(); ++pid)
            for (int p = 0; p < P; ++p) {
                MatC m = F[pid][pairs_[p].first * n_ + pairs_[p].second];
                v.segment((pid * P + p) * NN, NN) = Eigen::Map<VecC>(m.data(), NN);
            }
        return v;
    }
    MatC component1(const VecC& w, int pid, int a) const {
        const int NN = N_ * N_;
        VecC s = w.segment((pid * n_ + a) * NN, NN);
        return Eigen::Map<MatC>(s.data(), N_, N_);
    }

private:
    template <class F>
    VecC apply_blocks(const VecC& v, int m, bool inverse, F&& block) const {
        const int NN = N_ * N_, np = fd_.grid.npoints();
        VecC r(v.size());
        for (int pid = 0; pid < np; ++pid) {
            MatR B = block(pid);
            if (inverse) B = B.inverse().eval();
            for (int a = 0; a < m; ++a) {
                VecC s = VecC::Zero(NN);
                for (int b = 0; b < m; ++b) s += B(a, b) * v.segment((pid * m + b) * NN, NN);
                r.segment((pid * m + a) * NN, NN) = s;
            }
        }
        return r;
    }

    const FrameData& fd_;
    int n_, N_;
    double vol_ = 1.0;
    std::vector<std::pair<int, int>> pairs_;
    SpMat d_, dH_;
};

/// Points at least twice the normal stencil width away from both faces.
inline bool in_deep_core(const SlabGrid& g, int pid) {
    int j = pid % g.Nn, w = 2 * g.order_n;
    return j >= w && j <= g.Nn - 1 - w;
}

struct YMDResiduals {
    double r1 = 0.0;          // |D^2 phi - m^2 phi| on interior rows
    double r2 = 0.0;          // |d_A* F_A - J(phi)| on deep-core points
    double current_norm = 0.0;
    double dstar_norm = 0.0;
};

inline YMDResiduals ymd_residuals(const DiracSetup& S, const VecC& phi) {
    const auto& g = S.grid;
    const int n = g.n, np = g.npoints(), kN = S.kN;
    if (phi.size() != S.dof()) throw DomainError("ymd_residuals: spinor has wrong length");
    YMDResiduals R;
    SpMat D = assemble_dirac(S);
    VecC r = D * (D * phi) - (S.m * S.m) * phi;
    double vol = g.hn();
    for (int a = 0; a < n - 1; ++a) vol *= g.ht(a);
    double s1 = 0.0;
    for (int pid = 0; pid < np; ++pid) {
        int j = pid % g.Nn;
        if (j > 0 && j < g.Nn - 1) s1 += S.W(pid) * vol * r.segment(pid * kN, kN).squaredNorm();
    }
    R.r1 = std::sqrt(s1);

    FormOps ops(S.frame, S.conn);
    VecC dsF = ops.dstar(ops.pack2(curvature_values(S.conn)));
    std::vector<std::vector<MatC>> J(np);
    parallel_for(np, [&](int pid) { J[pid] = current_coords(S.rep, S.N, phi.segment(pid * kN, kN), S.frame.pts[pid].Ef); });
    VecC Jv = ops.pack1(J);
    VecC res = dsF - Jv;
    const int blk = n * S.N * S.N;
    for (int pid = 0; pid < np; ++pid)
        if (!in_deep_core(g, pid)) {
            res.segment(pid * blk, blk).setZero();
            Jv.segment(pid * blk, blk).setZero();
            dsF.segment(pid * blk, blk).setZero();
        }
    R.r2 = std::sqrt(std::max(0.0, ops.inner1(res, res)));
    R.current_norm = std::sqrt(std::max(0.0, ops.inner1(Jv, Jv)));
    R.dstar_norm = std::sqrt(std::max(0.0, ops.inner1(dsF, dsF)));
    return R;
}

/// Lowest Dirichlet eigenpair of the discrete D^2 (dense, coarse grids only).
inline std::pair<double, VecC> dirichlet_eigenmode(const DiracSetup& S) {
    const auto& g = S.grid;
    const int kN = S.kN;
    SpMat D = assemble_dirac(S);
    SpMat L = D * D;
    std::vector<int> idx;
    for (int pid = 0; pid < g.npoints(); ++pid) {
        int j = pid % g.Nn;
        if (j > 0 && j < g.Nn - 1)
            for (int s = 0; s < kN; ++s) idx.push_back(pid * kN + s);
    }
    if (idx.size() > 4000) throw DomainError("dirichlet_eigenmode: grid too large for a dense solve");
    MatC Ld = MatC(L);
    MatC A(idx.size(), idx.size());
    for (size_t r = 0; r < idx.size(); ++r)
        for (size_t c = 0; c < idx.size(); ++c) A(r, c) = Ld(idx[r], idx[c]);
    Eigen::ComplexEigenSolver<MatC> es(A);
    if (es.info() != Eigen::Success) throw SolverError("dirichlet_eigenmode: eigensolver failed");
    int best = 0;
    for (int i = 1; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()(i)) < std::abs(es.eigenvalues()(best))) best = i;
    VecC phi = VecC::Zero(S.dof());
    VecC v = es.eigenvectors().col(best);
    for (size_t r = 0; r < idx.size(); ++r) phi(idx[r]) = v(r);
    return {es.eigenvalues()(best).real(), phi / phi.norm()};
}

// ---------------------------------------------------------------- transport

struct TransportResult {
    std::vector<MatC> G;              // along the lexicographic paths
    double path_residual = 0.0;       // max |G_lex - G_rev|
    double conjugation_residual = 0.0;  // max |F_B - G^-1 F_A G|
    double curvature_B = 0.0;         // max |F_B|
    double unitarity = 0.0;
};

namespace detail {

/// Solve d_c G = G B_c - A_c G along axis-ordered paths from the base point (all indices 0).
inline std::vector<MatC> transport_sweep(const ConnectionSource& A, const ConnectionSource& B, const SlabGrid& g,
                                         const std::vector<int>& axes, double hmax) {
    const int n = g.n, N = A.rank(), np = g.npoints();
    std::vector<MatC> G(np);
    std::vector<bool> set(np, false);
    G[0] = MatC::Identity(N, N);
    set[0] = true;
    auto index_on = [&](int pid, int c) { return c == n - 1 ? pid % g.Nn : g.tan_index(pid / g.Nn)[c]; };
    for (int c : axes) {
        const int len = c == n - 1 ? g.Nn : g.Nt[c];
        const double step = c == n - 1 ? g.hn() : g.ht(c);
        std::vector<int> starts;
        for (int pid = 0; pid < np; ++pid)
            if (set[pid] && index_on(pid, c) == 0) starts.push_back(pid);
        parallel_for(static_cast<int>(starts.size()), [&](int li) {
            int pid = starts[li];
            auto x = g.coord(pid);
            MatC Y = G[pid];
            auto rhs = [&](double s, const MatC& M) {
                auto xx = x;
                xx[c] = s;
                return MatC(M * B.eval(xx)[c] - A.eval(xx)[c] * M);
            };
            int sub = std::max(1, static_cast<int>(std::ceil(step / hmax - 1e-12)));
            double h = step / sub;
            double s = x[c];
            for (int k = 1; k < len; ++k) {
                for (int q = 0; q < sub; ++q) {
                    MatC k1 = rhs(s, Y), k2 = rhs(s + 0.5 * h, Y + 0.5 * h * k1), k3 = rhs(s + 0.5 * h, Y + 0.5 * h * k2),
                         k4 = rhs(s + h, Y + h * k3);
                    Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                    s += h;
                }
                int y = g.shift(pid, c, k);
                G[y] = Y;
            }
        });
        for (int pid : starts)
            for (int k = 1; k < len; ++k) set[g.shift(pid, c, k)] = true;
    }
    return G;
}

}  // namespace detail

inline TransportResult transport_equivalence(const ConnectionSource& A, const ConnectionSource& B, const SlabGrid& g, double hmax = 0.01) {
    if (A.rank() != B.rank() || A.dim() != g.n || B.dim() != g.n) throw DomainError("transport_equivalence: connections do not match");
    const int n = g.n, np = g.npoints();
    std::vector<int> lex, rev;
    for (int c = 0; c < n; ++c) lex.push_back(c);
    rev.assign(lex.rbegin(), lex.rend());
    TransportResult R;
    R.G = detail::transport_sweep(A, B, g, lex, hmax);
    auto G2 = detail::transport_sweep(A, B, g, rev, hmax);
    std::vector<double> pr(np), cr(np), fb(np), un(np);
    parallel_for(np, [&](int pid) {
        auto x = g.coord(pid);
        auto FA = curvature_form(A.jets(x, 1));
        auto FB = curvature_form(B.jets(x, 1));
        const MatC& G = R.G[pid];
        MatC Gi = G.inverse();
        std::vector<MatC> d, fbv;
        for (int q = 0; q < n * n; ++q) {
            d.push_back(FB[q].value() - Gi * FA[q].value() * G);
            fbv.push_back(FB[q].value());
        }
        pr[pid] = (G - G2[pid]).cwiseAbs().maxCoeff();
        cr[pid] = curvature_norm(d, n);
        fb[pid] = curvature_norm(fbv, n);
        un[pid] = detail::unitarity_defect(G);
    });
    for (int pid = 0; pid < np; ++pid) {
        R.path_residual = std::max(R.path_residual, pr[pid]);
        R.conjugation_residual = std::max(R.conjugation_residual, cr[pid]);
        R.curvature_B = std::max(R.curvature_B, fb[pid]);
        R.unitarity = std::max(R.unitarity, un[pid]);
    }
    return R;
}

// ---------------------------------------------------------------- CK residual

namespace detail {

inline SpMat first_derivative(const SlabGrid& g, int c) {
    std::vector<Trip> t;
    for (int pid = 0; pid < g.npoints(); ++pid) {
        auto row = g.d1(pid, c);
        for (size_t q = 0; q < row.off.size(); ++q) t.emplace_back(pid, g.shift(pid, c, row.off[q]), row.w[q]);
    }
    SpMat D(g.npoints(), g.npoints());
    D.setFromTriplets(t.begin(), t.end());
    return D;
}

inline SpMat diag(const std::vector<double>& d) {
    std::vector<Trip> t;
    for (size_t i = 0; i < d.size(); ++i) t.emplace_back(i, i, d[i]);
    SpMat M(d.size(), d.size());
    M.setFromTriplets(t.begin(), t.end());
    return M;
}

inline bool dirichlet_row(const SlabGrid& g, int pid) {
    int j = pid % g.Nn;
    return j > 0 && j < g.Nn - 1;
}

}  // namespace detail

/// Discrete g^{ij}(D_i D_j - Gamma^k_ij D_k) on scalar grid functions.
inline SpMat scalar_laplacian(const FrameData& fd) {
    const auto& g = fd.grid;
    const int n = g.n, np = g.npoints();
    std::vector<SpMat> D;
    for (int c = 0; c < n; ++c) D.push_back(detail::first_derivative(g, c));
    SpMat L(np, np);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            std::vector<double> w(np);
            for (int pid = 0; pid < np; ++pid) w[pid] = fd.pts[pid].ginv(i, j);
            L += detail::diag(w) * (D[i] * D[j]);
        }
    for (int k = 0; k < n; ++k) {
        std::vector<double> w(np, 0.0);
        for (int pid = 0; pid < np; ++pid) {
            const auto& P = fd.pts[pid];
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) w[pid] += P.ginv(i, j) * P.gam(k, i, j);
        }
        L -= detail::diag(w) * D[k];
    }
    L.makeCompressed();
    return L;
}

/// F(x, S, dS; A) at every grid point, with dS from the grid stencils.
inline std::vector<MatC> ck_source(const FrameData& fd, const ConnectionGrid& A, const std::vector<MatC>& S) {
    const auto& g = fd.grid;
    const int n = g.n, np = g.npoints(), N = A.N;
    if (static_cast<int>(S.size()) != np || A.dA.empty()) throw DomainError("ck_source: field sizes do not match");
    std::vector<MatC> F(np);
    parallel_for(np, [&](int pid) {
        const auto& P = fd.pts[pid];
        std::vector<MatC> dS(n, MatC::Zero(N, N));
        for (int c = 0; c < n; ++c) {
            auto row = g.d1(pid, c);
            for (size_t q = 0; q < row.off.size(); ++q) dS[c] += row.w[q] * S[g.shift(pid, c, row.off[q])];
        }
        const MatC& s = S[pid];
        MatC e = s.exp(), ei = MatC(-s).exp();
        MatC f = MatC::Zero(N, N);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                double gij = P.ginv(i, j);
                if (gij == 0.0) continue;
                MatC nab = A.dA[pid][i * n + j];
                for (int k = 0; k < n; ++k) nab -= P.gam(k, i, j) * A.A[pid][k];
                const MatC& Aj = A.A[pid][j];
                MatC t = ei * nab * e + ei * Aj * e * theta_apply(s, dS[i]) - ei * theta_apply(-s, dS[i]) * Aj * e +
                         dtheta_apply(s, dS[i], dS[j]);
                f += gij * t;
            }
        F[pid] = f;
    });
    return F;
}

/// Discrete L^2 norm over Dirichlet rows of -Lap S - Theta(S)^-1 F(x, S, dS; A).
inline double ck_residual(const FrameData& fd, const ConnectionGrid& A, const std::vector<MatC>& S) {
    const auto& g = fd.grid;
    const int np = g.npoints(), N = A.N;
    SpMat L = scalar_laplacian(fd);
    MatC Sm(np, N * N);
    for (int pid = 0; pid < np; ++pid) Sm.row(pid) = Eigen::Map<const VecC>(S[pid].data(), N * N).transpose();
    MatC LS = L * Sm;
    auto F = ck_source(fd, A, S);
    double vol = g.hn();
    for (int a = 0; a < g.n - 1; ++a) vol *= g.ht(a);
    std::vector<double> part(np, 0.0);
    parallel_for(np, [&](int pid) {
        if (!detail::dirichlet_row(g, pid)) return;
        VecC l = LS.row(pid).transpose();
        MatC lap = Eigen::Map<MatC>(l.data(), N, N);
        MatC r = -lap - theta_inverse_apply(S[pid], F[pid]);
        part[pid] = fd.pts[pid].W * vol * r.squaredNorm();
    });
    double s = 0.0;
    for (double v : part) s += v;
    return std::sqrt(s);
}

/// Abelian case: -Lap S = g^{ij} nabla_i A_j with S = 0 on both faces.
inline std::vector<MatC> solve_abelian_ck(const FrameData& fd, const ConnectionGrid& A) {
    if (A.N != 1) throw DomainError("solve_abelian_ck: rank must be 1");
    const auto& g = fd.grid;
    const int np = g.npoints();
    std::vector<MatC> zero(np, MatC::Zero(1, 1));
    auto F = ck_source(fd, A, zero);
    SpMat L = scalar_laplacian(fd);
    std::vector<int> map(np, -1);
    int ni = 0;
    for (int pid = 0; pid < np; ++pid)
        if (detail::dirichlet_row(g, pid)) map[pid] = ni++;
    std::vector<Trip> t;
    for (int c = 0; c < L.outerSize(); ++c)
        for (SpMat::InnerIterator it(L, c); it; ++it)
            if (map[it.row()] >= 0 && map[c] >= 0) t.emplace_back(map[it.row()], map[c], -it.value());
    SpMat M(ni, ni);
    M.setFromTriplets(t.begin(), t.end());
    M.makeCompressed();
    VecC rhs(ni);
    for (int pid = 0; pid < np; ++pid)
        if (map[pid] >= 0) rhs(map[pid]) = F[pid](0, 0);
    Eigen::SparseLU<SpMat> lu;
    lu.compute(M);
    if (lu.info() != Eigen::Success) throw SolverError("solve_abelian_ck: factorisation failed");
    VecC x = lu.solve(rhs);
    if (!x.allFinite()) throw SolverError("solve_abelian_ck: non-finite solution");
    std::vector<MatC> S(np, MatC::Zero(1, 1));
    for (int pid = 0; pid < np; ++pid)
        if (map[pid] >= 0) S[pid](0, 0) = x(map[pid]);
    return S;
}

// ---------------------------------------------------------------- DN comparisons

/// max over a fixed set of smooth boundary data of |Lambda_B chi - Lambda_A chi| / |chi|.
inline double dn_difference(const MetricField& metric, const ConnectionGrid& A, const ConnectionGrid& B, const SlabGrid& grid,
                            double m = 0.0) {
    auto fd = parallel_frame(metric, grid);
    DiracSetup SA = make_setup(fd, A, nullptr, m), SB = make_setup(fd, B, nullptr, m);
    DirichletSolver va(SA), vb(SB);
    const int kN = SA.kN;
    double e = 0.0;
    for (int k = 0; k <= 2; ++k) {
        VecC v(kN);
        for (int s = 0; s < kN; ++s) v(s) = cd(1.0 + 0.3 * s, 0.5 - 0.2 * s * k);
        std::vector<double> kv(grid.n - 1, 0.0);
        kv[0] = k;
        VecC chi = plane_wave(grid, kv, v);
        e = std::max(e, (dn_apply(vb, chi) - dn_apply(va, chi)).norm() / chi.norm());
    }
    return e;
}

}  // namespace dnspin
