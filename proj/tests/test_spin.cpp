#include <catch2/catch_amalgamated.hpp>

#include "dnspin/spin.hpp"

using namespace dnspin;

namespace {

MatR random_so(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    MatR w(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) = nd(rng);
    return w - w.transpose();
}

}  // namespace

TEST_CASE("spin lift intertwines Clifford multiplication") {
    std::mt19937_64 rng(1);
    for (int n = 2; n <= 5; ++n) {
        auto rep = build_gamma(n);
        auto w = random_so(n, rng);
        MatC s = spin_lift_so(rep, w);
        CHECK((s + s.adjoint()).norm() < 1e-13);
        for (int l = 0; l < n; ++l) {
            MatC lhs = s * rep.gammas[l] - rep.gammas[l] * s;
            MatC rhs = MatC::Zero(rep.k, rep.k);
            for (int i = 0; i < n; ++i) rhs += w(i, l) * rep.gammas[i];
            CHECK((lhs - rhs).norm() < 1e-12);
        }
        CHECK((so_part(rep, s) - w).norm() < 1e-12);
    }
}

TEST_CASE("spin lift is a Lie algebra homomorphism") {
    std::mt19937_64 rng(2);
    for (int n = 3; n <= 4; ++n) {
        auto rep = build_gamma(n);
        auto a = random_so(n, rng), b = random_so(n, rng);
        MatC sa = spin_lift_so(rep, a), sb = spin_lift_so(rep, b);
        MatC lhs = sa * sb - sb * sa;
        MatC rhs = spin_lift_so(rep, MatR(a * b - b * a));
        CHECK((lhs - rhs).norm() < 1e-12);
    }
}

TEST_CASE("jet spin connection matches grid values") {
    std::mt19937_64 rng(4);
    auto m = random_metric(3, rng, 0.2);
    auto rep = build_gamma(3);
    auto grid = SlabGrid::make(3, 8, 65, 0.4);
    auto fd = parallel_frame(m, grid);
    for (int t : {0, 9, 27}) {
        int pid = grid.id(t, 0);
        auto F = frame_jets(geometry_jets(m, grid.coord(pid), 3));
        auto wj = spin_connection_jets(rep, F);
        auto wg = spin_connection(rep, fd.pts[pid]);
        for (int a = 0; a < 3; ++a) CHECK((wj[a].value() - wg[a]).norm() < 1e-12);
        // one step in: jet Taylor evaluation vs RK4 frame
        int p2 = grid.id(t, 4);
        std::vector<double> dx{0, 0, grid.coord(p2)[2]};
        for (int a = 0; a < 3; ++a) CHECK((wj[a].eval(dx) - spin_connection(rep, fd.pts[p2])[a]).norm() < 1e-4);
    }
}

TEST_CASE("twisted connection and curvature endomorphism") {
    std::mt19937_64 rng(9);
    const int n = 2, N = 2;
    auto rep = build_gamma(n);
    auto conn = random_connection(n, N, rng, 0.5, true);
    auto m = MetricField::flat(n);
    std::vector<double> x{0.4, 0.0};
    auto A = conn->jets(x, 2);
    auto G = geometry_jets(m, x, 2);
    auto F = frame_jets(G);
    auto th = twisted_connection_jets(rep, F, A);
    for (int a = 0; a < n; ++a) CHECK((th[a].value() - gauge_lift(rep.k, A[a].value())).norm() < 1e-14);
    auto Fab = curvature_form(A);
    auto Fv = Fab[0 * n + 1].value();
    auto E = curvature_endo_jets(rep, F.Ef, Fab).value();
    MatC expect = detail::kron(rep.gammas[0] * rep.gammas[1], Fv);
    CHECK((E - expect).norm() < 1e-13);
    CHECK((E - E.adjoint()).norm() < 1e-13);
    // constant gauge covariance
    MatC U = expm(JetM(A[0].sp, 0, random_skew(N, rng, 1.0))).value();
    std::vector<MatC> Fv2;
    for (auto& f : Fab) Fv2.push_back(U.adjoint() * f.value() * U);
    MatC E2 = curvature_endo(rep, MatR::Identity(n, n), Fv2);
    MatC UU = gauge_lift(rep.k, U);
    CHECK((E2 - UU.adjoint() * E * UU).norm() < 1e-12);
}

TEST_CASE("abelian curvature of a linear potential") {
    // A_1 = x_2 i, A_2 = 0 -> F_21 = i
    FamilyConnection c(2, 1);
    ScalarField f;
    f.terms.push_back({1.0, 1, {0}, 0.0});
    c.A[0].add(f, MatC::Constant(1, 1, cd(0, 1)));
    auto A = c.jets({0.2, 0.3}, 1);
    auto F = curvature_form(A);
    CHECK(std::abs(F[1 * 2 + 0].value()(0, 0) - cd(0, 1)) < 1e-14);
    CHECK(std::abs(F[0 * 2 + 1].value()(0, 0) + cd(0, 1)) < 1e-14);
}
