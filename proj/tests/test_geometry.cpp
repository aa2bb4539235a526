#include <catch2/catch_amalgamated.hpp>

#include "dnspin/geometry.hpp"

using namespace dnspin;
using Catch::Approx;

namespace {

MetricField conf2(double amp) {
    ScalarField f;
    f.terms.push_back({amp, 1, {1}, 0.3});
    f.terms.push_back({0.5 * amp, 2, {0}, 0.0});
    f.terms.push_back({0.7 * amp, 0, {2}, 1.1});
    return MetricField::conformal(2, f);
}

MatR gam_mat(const GeomJets& G, int a) {
    int n = G.n;
    MatR m(n, n);
    for (int c = 0; c < n; ++c)
        for (int d = 0; d < n; ++d) m(c, d) = G.G(c, a, d).value();
    return m;
}

}  // namespace

TEST_CASE("flat metric has vanishing geometry") {
    for (int n : {2, 3}) {
        auto m = MetricField::flat(n);
        std::vector<double> x(n, 0.3);
        auto G = geometry_jets(m, x, 2);
        for (auto& g : G.Gam) CHECK(std::abs(g.value()) < 1e-15);
        CHECK(std::abs(G.R.value()) < 1e-15);
        CHECK(G.W.value() == Approx(1.0));
    }
}

TEST_CASE("christoffel symbols of e^{2 x_n} metric") {
    ScalarField f = ScalarField::normal_power(1.0, 1, 3);
    auto m = MetricField::conformal(3, f);
    for (double xn : {0.0, 0.2, 0.7}) {
        std::vector<double> x{0.4, 1.3, xn};
        CHECK(christoffel(m, x, 2, 0, 0) == Approx(-std::exp(2 * xn)).epsilon(1e-13));
        CHECK(christoffel(m, x, 0, 2, 0) == Approx(1.0).epsilon(1e-13));
    }
    CHECK(e_term(m, {0.1, 0.2}) == Approx(-2.0).epsilon(1e-14));
}

TEST_CASE("conformal closed forms in two dimensions") {
    auto m = conf2(0.3);
    const auto& f = m.f;
    for (double x1 : {0.0, 1.0, 2.5, 4.0}) {
        std::vector<double> xb{x1, 0.0};
        auto fj = f.eval(jet_point(xb, 3));
        auto G = geometry_jets(m, xb, 3);
        // E = -d_n f
        CHECK(e_term_jet(G).value() == Approx(-fj.deriv(1).value()).margin(1e-13));
        // R = -2 a''/a with a = e^f
        JetR a = exp(fj);
        CHECK(G.R.value() == Approx(-2.0 * a.deriv(1).deriv(1).value() / a.value()).margin(1e-12));
        auto F = frame_jets(G);
        CHECK(F.Ef[0].value() == Approx(std::exp(-fj.value())).epsilon(1e-13));
        // omega^1_2(d_1) = e^f d_n f, omega^1_2(d_n) = 0
        CHECK(F.omega[0][1].value() == Approx(std::exp(fj.value()) * fj.deriv(1).value()).margin(1e-13));
        CHECK(std::abs(F.omega[1][1].value()) < 1e-13);
        // tangential derivative of omega: compare jet derivative with closed form
        JetR w = exp(fj) * fj.deriv(1);
        CHECK(F.omega[0][1].deriv(0).value() == Approx(w.deriv(0).value()).margin(1e-12));
    }
}

TEST_CASE("round sphere has R = 2/r^2") {
    for (double r : {0.7, 1.0, 2.3}) {
        auto m = MetricField::sphere(r, 1.2);
        for (double xn : {0.0, 0.1, 0.3}) CHECK(scalar_curvature(m, {0.5, xn}) == Approx(2.0 / (r * r)).epsilon(1e-12));
    }
}

TEST_CASE("metricity and symmetry on random metrics") {
    std::mt19937_64 rng(11);
    for (int n : {2, 3}) {
        for (int trial = 0; trial < 4; ++trial) {
            auto m = random_metric(n, rng, 0.15);
            std::vector<double> x(n);
            for (int a = 0; a < n - 1; ++a) x[a] = 0.7 * (a + 1) + trial;
            x[n - 1] = 0.1 * trial;
            auto G = geometry_jets(m, x, 2);
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b)
                    for (int c = 0; c < n; ++c) {
                        CHECK(G.G(c, a, b).value() == Approx(G.G(c, b, a).value()).margin(1e-14));
                        double lhs = G.g[b * n + c].deriv(a).value();
                        double rhs = 0.0;
                        for (int d = 0; d < n; ++d)
                            rhs += G.G(d, a, b).value() * G.g[d * n + c].value() + G.G(d, a, c).value() * G.g[b * n + d].value();
                        CHECK(lhs == Approx(rhs).margin(1e-13));
                    }
        }
    }
}

TEST_CASE("jet derivatives agree with finite differences") {
    std::mt19937_64 rng(5);
    auto m = random_metric(3, rng, 0.2);
    std::vector<double> x{0.3, 1.1, 0.4};
    auto G = geometry_jets(m, x, 2);
    double prev = 0.0;
    std::vector<double> errs;
    for (double h : {1e-2, 5e-3, 2.5e-3}) {
        double err = 0.0;
        for (int v = 0; v < 3; ++v) {
            auto xp = x, xm = x;
            xp[v] += h;
            xm[v] -= h;
            auto gp = m.eval(xp), gm = m.eval(xm);
            for (int q = 0; q < 9; ++q) err = std::max(err, std::abs((gp[q] - gm[q]) / (2 * h) - G.g[q].deriv(v).value()));
            // forward differences of Gamma for a first order rate check
            auto Gp = geometry_jets(m, xp, 1);
            for (int q = 0; q < 27; ++q) err = std::max(err, std::abs((Gp.Gam[q].value() - G.Gam[q].value()) / h - G.Gam[q].deriv(v).value()) * h);
        }
        errs.push_back(err);
        (void)prev;
    }
    for (size_t i = 1; i < errs.size(); ++i) CHECK(std::log2(errs[i - 1] / errs[i]) >= 1.9);
}

TEST_CASE("frame jets: orthonormal, skew forms, transformation law") {
    std::mt19937_64 rng(21);
    for (int n : {2, 3}) {
        for (int trial = 0; trial < 3; ++trial) {
            auto m = random_metric(n, rng, 0.2);
            std::vector<double> x(n, 0.0);
            for (int a = 0; a < n - 1; ++a) x[a] = 0.9 * a + 0.37 * trial;
            auto G = geometry_jets(m, x, 4);
            auto F = frame_jets(G);
            MatR g = detail::to_mat(G.g, n), Ef = detail::to_mat(F.Ef, n);
            CHECK((Ef.transpose() * g * Ef - MatR::Identity(n, n)).norm() < 1e-13);
            MatR h = Ef.inverse();
            for (int a = 0; a < n; ++a) {
                MatR om = detail::to_mat(F.omega[a], n);
                CHECK((om + om.transpose()).norm() < 1e-13);
                MatR dEf(n, n);
                for (int q = 0; q < n * n; ++q) dEf(q / n, q % n) = F.Ef[q].deriv(a).value();
                MatR dh = -h * dEf * h;
                MatR rhs = h.inverse() * om * h + h.inverse() * dh;
                CHECK((gam_mat(G, a) - rhs).norm() < 1e-12);
            }
            // omega(d_n) vanishes along the normal at all computed orders
            for (int q = 0; q < n * n; ++q) CHECK(F.omega[n - 1][q].max_abs() < 1e-12);
            // orthonormality persists off the boundary (jet evaluation)
            std::vector<double> dx(n, 0.0);
            dx[n - 1] = 0.02;
            MatR Eo(n, n), go(n, n);
            for (int q = 0; q < n * n; ++q) {
                Eo(q / n, q % n) = F.Ef[q].eval(dx);
                go(q / n, q % n) = G.g[q].eval(dx);
            }
            CHECK((Eo.transpose() * go * Eo - MatR::Identity(n, n)).norm() < 1e-7);
        }
    }
}

TEST_CASE("grid frame agrees with jets and converges") {
    std::mt19937_64 rng(8);
    auto m = random_metric(2, rng, 0.2);
    double prev = -1;
    for (int nn : {17, 33}) {
        auto grid = SlabGrid::make(2, 8, nn, 1.0);
        auto fd = parallel_frame(m, grid);
        double err = 0.0;
        for (int t = 0; t < grid.ntan(); ++t) {
            int pid = grid.id(t, nn - 1);
            auto& P = fd.pts[pid];
            CHECK((P.Ef.transpose() * P.g * P.Ef - MatR::Identity(2, 2)).norm() < 1e-6);
            // in two dimensions the parallel frame is g_11^{-1/2}
            err = std::max(err, std::abs(1.0 / std::sqrt(P.g(0, 0)) - P.Ef(0, 0)));
            for (int a = 0; a < 2; ++a) CHECK((P.omega[a] + P.omega[a].transpose()).norm() < 1e-6);
        }
        CHECK(err < 1e-5);
        if (prev > 0) CHECK(prev / err > 8.0);
        prev = err;
    }
}

TEST_CASE("grid frame transformation law in three dimensions") {
    std::mt19937_64 rng(3);
    auto m = random_metric(3, rng, 0.15);
    auto grid = SlabGrid::make(3, 8, 33, 0.5);
    auto fd = parallel_frame(m, grid);
    double worst = 0.0;
    for (int pid = 0; pid < grid.npoints(); pid += 37) {
        auto& P = fd.pts[pid];
        auto G = geometry_jets(m, grid.coord(pid), 1);
        MatR h = P.Ef.inverse();
        for (int a = 0; a < 3; ++a) {
            MatR dh = -h * P.dEf[a] * h;
            MatR rhs = P.Ef * P.omega[a] * h + P.Ef * dh;
            worst = std::max(worst, (gam_mat(G, a) - rhs).norm());
        }
        worst = std::max(worst, (P.Ef.transpose() * P.g * P.Ef - MatR::Identity(3, 3)).norm());
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("dimension mismatch is rejected") {
    auto grid = SlabGrid::make(3, 8, 9, 1.0);
    CHECK_THROWS_AS(parallel_frame(MetricField::flat(2), grid), DomainError);
}
