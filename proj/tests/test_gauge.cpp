#include <catch2/catch_amalgamated.hpp>

#include "dnspin/gauge.hpp"
#include "dnspin/recovery.hpp"

using namespace dnspin;

namespace {

double max_abs(const MatC& m) { return m.cwiseAbs().maxCoeff(); }

VecC random_vec(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    VecC v(d);
    for (int i = 0; i < d; ++i) v(i) = cd(nd(rng), nd(rng));
    return v;
}

MatC random_unitary(int N, std::mt19937_64& rng) { return MatC(random_skew(N, rng, 1.5).exp()); }

ScalarField sine(double amp, int k, int n, int pow = 0) {
    ScalarField f;
    std::vector<int> kv(n - 1, 0);
    kv[0] = k;
    f.terms.push_back({amp, pow, kv, -std::numbers::pi / 2});
    return f;
}

std::shared_ptr<FamilyConnection> constant_normal(int n, double c) {
    auto A = std::make_shared<FamilyConnection>(n, 1);
    A->A[n - 1].add(ScalarField::constant(c, n), MatC::Constant(1, 1, cd(0, 1)));
    return A;
}

}  // namespace

TEST_CASE("identity gauge leaves the connection unchanged") {
    std::mt19937_64 rng(41);
    auto A = random_connection(3, 2, rng, 0.5, false);
    MatrixField S;
    S.dim = 2;
    GaugedConnection B(A, std::make_shared<ExpGauge>(3, S));
    std::vector<double> x = {0.3, 1.2, 0.4};
    auto a = A->jets(x, 2), b = B.jets(x, 2);
    for (int c = 0; c < 3; ++c) CHECK((a[c] - b[c]).max_abs() <= 1e-15);
}

TEST_CASE("abelian gauge adds i dchi") {
    // G = exp(i chi), chi = 0.7 cos(x1) x2
    ScalarField chi;
    chi.terms.push_back({0.7, 1, {1}, 0.0});
    MatrixField S;
    S.add(chi, MatC::Constant(1, 1, cd(0, 1)));
    auto A0 = std::make_shared<FamilyConnection>(2, 1);
    GaugedConnection B(A0, std::make_shared<ExpGauge>(2, S));
    for (double x1 : {0.0, 0.9, 2.5}) {
        std::vector<double> x = {x1, 0.6};
        auto b = B.eval(x);
        CHECK(std::abs(b[0](0, 0) - cd(0, -0.7 * std::sin(x1) * 0.6)) <= 1e-14);
        CHECK(std::abs(b[1](0, 0) - cd(0, 0.7 * std::cos(x1))) <= 1e-14);
    }
}

TEST_CASE("curvature conjugates under gauge transformations") {
    std::mt19937_64 rng(42);
    for (int n : {2, 3})
        for (int N : {1, 2, 3}) {
            auto A = random_connection(n, N, rng, 0.6, false);
            auto G = random_gauge(n, N, rng, 0.8, false);
            GaugedConnection B(A, G);
            std::vector<double> x(n);
            for (auto& v : x) v = std::uniform_real_distribution<double>(0, 1)(rng);
            auto FA = curvature_form(A->jets(x, 1));
            auto FB = curvature_form(B.jets(x, 1));
            MatC g = G->eval(x);
            CHECK(detail::unitarity_defect(g) <= 1e-12);
            for (int q = 0; q < n * n; ++q) CHECK(max_abs(FB[q].value() - g.adjoint() * FA[q].value() * g) <= 1e-10);
            for (auto& b : B.eval(x)) CHECK(max_abs(b + b.adjoint()) <= 1e-12);
        }
}

TEST_CASE("non-unitary gauge is rejected") {
    auto sp = JetSpace::get(2, 1);
    std::vector<JetM> A(2, JetM(sp, 1, MatC::Zero(1, 1)));
    CHECK_THROWS_AS(apply_gauge(A, JetM(sp, 1, MatC::Constant(1, 1, 2.0))), DomainError);
}

TEST_CASE("boundary identity flag follows the normal powers") {
    std::mt19937_64 rng(43);
    auto G = random_gauge(2, 2, rng, 0.5, true);
    CHECK(G->boundary_identity());
    auto grid = SlabGrid::make(2, 8, 9, 1.0);
    auto gg = sample_gauge(*G, grid);
    for (int t = 0; t < grid.ntan(); ++t) CHECK(max_abs(gg.G[grid.id(t, 0)] - MatC::Identity(2, 2)) <= 1e-12);
    for (auto& g : gg.G) CHECK(detail::unitarity_defect(g) <= 1e-12);
    CHECK_FALSE(random_gauge(2, 2, rng, 0.5, false)->boundary_identity());
}

TEST_CASE("normal gauge fix of an already normal connection is the identity") {
    std::mt19937_64 rng(44);
    auto A = random_connection(2, 2, rng, 0.5, true);
    NormalGaugeFix fix(A);
    std::vector<double> x = {0.4, 0.7};
    CHECK(max_abs(fix.gauge_jet(x, 0).value() - MatC::Identity(2, 2)) <= 1e-15);
    auto a = A->eval(x), b = fix.eval(x);
    for (int c = 0; c < 2; ++c) CHECK(max_abs(a[c] - b[c]) <= 1e-15);
}

TEST_CASE("constant normal component gives F = exp(-i c x_n)") {
    const double c = 0.8;
    auto A = constant_normal(2, c);
    NormalGaugeFix fix(A);
    for (double xn : {0.0, 0.3, 1.0}) {
        auto F = fix.gauge_jet({0.5, xn}, 2);
        CHECK(std::abs(F.value()(0, 0) - std::exp(cd(0, -c * xn))) <= 1e-12);
        CHECK(std::abs(F.derivative({0, 1})(0, 0) - cd(0, -c) * std::exp(cd(0, -c * xn))) <= 1e-12);
    }
    auto grid = SlabGrid::make(2, 8, 17, 1.0);
    auto R = normal_gauge_fix(*A, grid);
    for (int pid = 0; pid < grid.npoints(); ++pid)
        CHECK(std::abs(R.F.G[pid](0, 0) - std::exp(cd(0, -c * grid.coord(pid)[1]))) <= 1e-12);
}

TEST_CASE("normal gauge fix on random non-abelian connections") {
    std::mt19937_64 rng(45);
    for (int n : {2, 3}) {
        auto A = random_connection(n, 2, rng, 0.7, false);
        auto grid = SlabGrid::make(n, 8, 9, 1.0);
        auto R = normal_gauge_fix(*A, grid);
        CHECK(R.max_An <= 1e-8);
        CHECK(R.unitarity <= 1e-10);
        CHECK(R.boundary == 0.0);
        for (auto& pa : R.A.A)
            for (auto& a : pa) CHECK(max_abs(a + a.adjoint()) <= 1e-10);
        // the gauge satisfies d_n F = -A_n F: compare against a finer integration
        NormalGaugeFix fine(A, 1.0 / 2048);
        int pid = grid.id(3, grid.Nn - 1);
        CHECK(max_abs(fine.gauge_jet(grid.coord(pid), 0).value() - R.F.G[pid]) <= 1e-11);
        // curvature conjugates by F
        auto FA = curvature_values(sample_connection(*A, grid));
        auto FB = curvature_values(R.A);
        double worst = 0.0;
        for (int p = 0; p < grid.npoints(); ++p)
            for (int q = 0; q < n * n; ++q) worst = std::max(worst, max_abs(FB[p][q] - R.F.G[p].adjoint() * FA[p][q] * R.F.G[p]));
        CHECK(worst <= 1e-9);
    }
}

TEST_CASE("Theta at zero and for commuting families") {
    std::mt19937_64 rng(46);
    MatC X = random_skew(3, rng, 1.0);
    CHECK(theta_apply(MatC::Zero(3, 3), X) == X);
    CHECK(theta_matrix(MatC::Zero(2, 2)) == MatC::Identity(4, 4));
    MatC s = MatC::Constant(1, 1, cd(0, 0.9)), y = MatC::Constant(1, 1, cd(0, -0.3));
    CHECK(theta_apply(s, y) == y);
}

TEST_CASE("dexp finite-difference check") {
    std::mt19937_64 rng(47);
    for (int N : {2, 3, 4}) {
        MatC S = random_skew(N, rng, 1.0);
        S *= 0.1 / detail::spectral_norm(S);
        MatC dS = random_skew(N, rng, 1.0);
        CHECK(dexp_check(S, dS) <= 1e-6);
        // larger S still inside the domain
        CHECK(dexp_check(S * 9.0, dS) <= 1e-6);
    }
}

TEST_CASE("Theta inverse and derivative") {
    std::mt19937_64 rng(48);
    MatC S = random_skew(3, rng, 0.5), X = random_skew(3, rng, 1.0), Y = random_skew(3, rng, 1.0);
    CHECK(max_abs(theta_apply(S, theta_inverse_apply(S, Y)) - Y) <= 1e-13);
    const double h = 1e-5;
    MatC fd = (theta_apply(S + h * X, Y) - theta_apply(S - h * X, Y)) / (2 * h);
    CHECK(max_abs(dtheta_apply(S, X, Y) - fd) <= 1e-9);
    CHECK(theta_truncation_bound(S) < 1e-20);
}

TEST_CASE("Theta rejects large arguments") {
    MatC S = MatC::Zero(2, 2);
    S(0, 1) = 2.0;
    S(1, 0) = -2.0;
    CHECK_THROWS_AS(theta_apply(S, S), DomainError);
}

TEST_CASE("current is gauge equivariant") {
    std::mt19937_64 rng(49);
    for (int n : {2, 3, 4})
        for (int N : {1, 2, 3})
            for (int rep = 0; rep < 5; ++rep) {
                auto g = build_gamma(n);
                VecC phi = random_vec(g.k * N, rng);
                MatC G = random_unitary(N, rng);
                CHECK(current_equivariance_defect(g, G, phi) <= 1e-10);
            }
}

TEST_CASE("current represents the spinor pairing") {
    std::mt19937_64 rng(50);
    auto g = build_gamma(3);
    const int N = 2;
    VecC phi = random_vec(g.k * N, rng);
    auto J = current(g, N, phi);
    for (int i = 0; i < 3; ++i) {
        CHECK(max_abs(J[i] + J[i].adjoint()) <= 1e-14);
        MatC X = random_skew(N, rng, 1.0);
        double lhs = phi.dot(detail::kron(g.gammas[i], X) * phi).real();
        CHECK(std::abs(u_pairing(J[i], X) - lhs) <= 1e-12);
    }
    CHECK(current(g, N, VecC::Zero(g.k * N))[0].norm() == 0.0);
}

TEST_CASE("YMD residuals vanish for zero data") {
    auto grid = SlabGrid::make(2, 8, 13, 1.0);
    auto S = make_setup(MetricField::flat(2), zero_connection(grid, 2), grid);
    auto r = ymd_residuals(S, VecC::Zero(S.dof()));
    CHECK(r.r1 == 0.0);
    CHECK(r.r2 == 0.0);
}

TEST_CASE("YMD residuals on a Dirichlet eigenmode") {
    auto grid = SlabGrid::make(2, 8, 11, 1.0);
    auto S0 = make_setup(MetricField::flat(2), zero_connection(grid, 1), grid);
    auto [mu2, phi] = dirichlet_eigenmode(S0);
    CHECK(mu2 > 0.0);
    auto S = make_setup(MetricField::flat(2), zero_connection(grid, 1), grid, nullptr, std::sqrt(mu2));
    auto r = ymd_residuals(S, phi);
    CHECK(r.r1 <= 1e-8);
    CHECK(r.dstar_norm == 0.0);
    CHECK(std::abs(r.r2 - r.current_norm) <= 1e-14);
}

TEST_CASE("d_A* is the adjoint of d_A") {
    std::mt19937_64 rng(51);
    auto grid = SlabGrid::make(3, 8, 9, 1.0);
    auto m = random_metric(3, rng, 0.2);
    auto fd = parallel_frame(m, grid);
    auto conn = sample_connection(*random_connection(3, 2, rng, 0.5, false), grid);
    FormOps ops(fd, conn);
    const int NN = 4;
    VecC w(grid.npoints() * 3 * NN), F(grid.npoints() * 3 * NN);
    for (int i = 0; i < w.size(); ++i) {
        w(i) = random_vec(1, rng)(0);
        F(i) = random_vec(1, rng)(0);
    }
    cd lhs = (ops.d() * w).dot(ops.apply_metric2(F));
    cd rhs = w.dot(ops.apply_metric1(ops.dstar(F)));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
}

TEST_CASE("d* of the curvature of a quadratic potential") {
    // A_1 = i x_2^2: F_21 = 2 i x_2, (d*F)_1 = -d_2 F_21 = -2i
    auto grid = SlabGrid::make(2, 8, 17, 1.0);
    FamilyConnection A(2, 1);
    A.A[0].add(ScalarField::normal_power(1.0, 2, 2), MatC::Constant(1, 1, cd(0, 1)));
    auto conn = sample_connection(A, grid);
    auto fd = parallel_frame(MetricField::flat(2), grid);
    FormOps ops(fd, conn);
    VecC ds = ops.dstar(ops.pack2(curvature_values(conn)));
    for (int pid = 0; pid < grid.npoints(); ++pid) {
        if (!in_deep_core(grid, pid)) continue;
        CHECK(std::abs(ops.component1(ds, pid, 0)(0, 0) - cd(0, -2)) <= 1e-10);
        CHECK(std::abs(ops.component1(ds, pid, 1)(0, 0)) <= 1e-10);
    }
}

TEST_CASE("transport of equal connections is the identity") {
    std::mt19937_64 rng(52);
    auto A = random_connection(2, 2, rng, 0.5, false);
    auto r = transport_equivalence(*A, *A, SlabGrid::make(2, 8, 9, 1.0));
    for (auto& g : r.G) CHECK(max_abs(g - MatC::Identity(2, 2)) == 0.0);
    CHECK(r.path_residual == 0.0);
    CHECK(r.conjugation_residual == 0.0);
}

TEST_CASE("transport recovers a constructed gauge") {
    std::mt19937_64 rng(53);
    for (int n : {2, 3}) {
        auto A = random_connection(n, 2, rng, 0.5, false);
        MatrixField S;
        S.add(sine(1.0, 1, n), random_skew(2, rng, 0.6));
        S.add(ScalarField::normal_power(1.0, 1, n), random_skew(2, rng, 0.4));
        auto G0 = std::make_shared<ExpGauge>(n, S);
        GaugedConnection B(A, G0);
        auto grid = SlabGrid::make(n, 8, 9, 1.0);
        auto r = transport_equivalence(*A, B, grid);
        CHECK(r.conjugation_residual <= 1e-6);
        CHECK(r.path_residual <= 1e-6);
        double err = 0.0;
        for (int pid = 0; pid < grid.npoints(); ++pid) err = std::max(err, max_abs(r.G[pid] - G0->eval(grid.coord(pid))));
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("flat and curved connections are not equivalent") {
    std::mt19937_64 rng(54);
    FamilyConnection zero(2, 2);
    auto B = random_connection(2, 2, rng, 0.8, false);
    auto r = transport_equivalence(zero, *B, SlabGrid::make(2, 8, 9, 1.0));
    CHECK(r.curvature_B > 0.1);
    CHECK(r.conjugation_residual >= 0.5 * r.curvature_B);
    CHECK(r.path_residual > 1e-3);
}

TEST_CASE("CK residual: trivial and divergence-free cases") {
    auto grid = SlabGrid::make(2, 16, 17, 1.0);
    auto fd = parallel_frame(MetricField::flat(2), grid);
    std::vector<MatC> S0(grid.npoints(), MatC::Zero(2, 2));
    CHECK(ck_residual(fd, zero_connection(grid, 2), S0) == 0.0);
    // A_1 = f(x_2) T, A_2 = 0 is divergence free for the flat metric
    FamilyConnection A(2, 2);
    MatC T(2, 2);
    T << cd(0, 1), 0.5, -0.5, cd(0, -0.3);
    A.A[0].add(ScalarField::normal_power(0.8, 2, 2), T);
    CHECK(ck_residual(fd, sample_connection(A, grid), S0) <= 1e-12);
}

TEST_CASE("CK residual of the abelian Poisson solve") {
    std::mt19937_64 rng(55);
    for (int n : {2, 3}) {
        auto grid = SlabGrid::make(n, 8, 17, 1.0);
        auto fd = parallel_frame(random_metric(n, rng, 0.15), grid);
        auto conn = sample_connection(*random_connection(n, 1, rng, 0.3, false), grid);
        auto S = solve_abelian_ck(fd, conn);
        CHECK(ck_residual(fd, conn, S) <= 1e-6);
        std::vector<MatC> S0(grid.npoints(), MatC::Zero(1, 1));
        CHECK(ck_residual(fd, conn, S0) > 1e-3);
    }
}

TEST_CASE("CK residual is finite for small non-abelian S") {
    std::mt19937_64 rng(56);
    auto grid = SlabGrid::make(2, 8, 13, 1.0);
    auto fd = parallel_frame(MetricField::flat(2), grid);
    auto conn = sample_connection(*random_connection(2, 2, rng, 0.3, false), grid);
    MatC T = random_skew(2, rng, 0.2);
    std::vector<MatC> S(grid.npoints());
    for (int pid = 0; pid < grid.npoints(); ++pid) {
        auto x = grid.coord(pid);
        S[pid] = std::sin(std::numbers::pi * x[1]) * std::cos(x[0]) * T;
    }
    double r = ck_residual(fd, conn, S);
    CHECK(std::isfinite(r));
    CHECK(r > 0.0);
    for (auto& s : S) s *= 20.0;
    CHECK_THROWS_AS(ck_residual(fd, conn, S), DomainError);
}

TEST_CASE("gauge-conjugated Dirac assembly converges at second order") {
    std::mt19937_64 rng(57);
    auto A = random_connection(2, 2, rng, 0.5, true);
    auto G = random_gauge(2, 2, rng, 0.6, false);
    GaugedConnection B(A, G);
    auto m = random_metric(2, rng, 0.15);
    std::vector<double> e;
    for (int s : {1, 2}) {
        auto grid = SlabGrid::make(2, 32 * s, 32 * s + 1, 1.0);
        auto fd = parallel_frame(m, grid);
        auto SA = make_setup(fd, sample_connection(*A, grid));
        auto SB = make_setup(fd, sample_connection(B, grid));
        auto gg = sample_gauge(*G, grid);
        std::vector<MatC> blk, blki;
        for (auto& g : gg.G) {
            blk.push_back(gauge_lift(2, g));
            blki.push_back(gauge_lift(2, g.adjoint()));
        }
        SpMat Gm = block_diag(SA, blk), Gi = block_diag(SA, blki);
        std::mt19937_64 r2(99);
        VecC psi = test_spinor(SA, r2);
        VecC d = assemble_dirac(SB) * psi - Gi * (assemble_dirac(SA) * (Gm * psi));
        double err = 0.0;
        for (int pid = 0; pid < grid.npoints(); ++pid)
            if (in_core(grid, pid)) err = std::max(err, d.segment(pid * 4, 4).cwiseAbs().maxCoeff());
        e.push_back(err);
    }
    INFO(e[0] << " " << e[1]);
    CHECK(std::log2(e[0] / e[1]) >= 1.9);
}

TEST_CASE("DN map is invariant under boundary-identity gauges") {
    std::mt19937_64 rng(58);
    auto A = random_connection(2, 2, rng, 0.5, true);
    auto G = random_gauge(2, 2, rng, 0.6, true);
    GaugedConnection B(A, G);
    auto m = random_metric(2, rng, 0.15);
    std::vector<double> e;
    for (int s : {1, 2}) {
        auto grid = SlabGrid::make(2, 32 * s, 32 * s + 1, 1.0);
        e.push_back(dn_difference(m, sample_connection(*A, grid), sample_connection(B, grid), grid));
    }
    INFO(e[0] << " " << e[1]);
    CHECK(e[1] < 0.05);
    CHECK(std::log2(e[0] / e[1]) >= 1.9);
}

TEST_CASE("normal gauge fixing preserves the DN map") {
    std::mt19937_64 rng(59);
    auto A = random_connection(2, 2, rng, 0.5, false);
    std::vector<double> e;
    for (int s : {1, 2}) {
        auto grid = SlabGrid::make(2, 32 * s, 32 * s + 1, 1.0);
        auto R = normal_gauge_fix(*A, grid);
        CHECK(R.max_An <= 1e-8);
        e.push_back(dn_difference(MetricField::flat(2), sample_connection(*A, grid), R.A, grid));
    }
    INFO(e[0] << " " << e[1]);
    CHECK(std::log2(e[0] / e[1]) >= 1.9);
}

TEST_CASE("gauge-related connections recover identical boundary jets") {
    std::mt19937_64 rng(60);
    auto m = random_metric(3, rng, 0.2);
    auto A = random_connection(3, 2, rng, 0.5, true);
    auto G = random_gauge(3, 2, rng, 0.6, true);
    auto B = std::make_shared<GaugedConnection>(A, G);
    NormalGaugeFix Bn(B);
    std::vector<double> xp = {0.25, 0.25};
    auto recover = [&](const ConnectionSource& c) {
        auto in = forward_input(m, &c, 2, nullptr, 0.2, xp, 6);
        auto Q = q_symbols(in);
        return recover_all(Q, solve_recursion(Q, 2), 2, 0.2);
    };
    auto ra = recover(*A), rb = recover(Bn);
    auto err = compare_boundary_jets(rb, ra);
    for (auto& [k, v] : err) {
        INFO(k);
        CHECK(v <= 1e-9);
    }
}
