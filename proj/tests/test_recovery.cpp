#include <catch2/catch_amalgamated.hpp>

#include "dnspin/recovery.hpp"

using namespace dnspin;

namespace {

struct Forward {
    ForwardInput in;
    QSymbols Q;
    SymbolSum b;
};

Forward forward(const MetricField& m, const ConnectionSource* c, int N, const MatrixField* Z, double mass, int J = 6, int K = 2) {
    Forward f;
    f.in = forward_input(m, c, N, Z, mass, std::vector<double>(m.n - 1, 0.25), J);
    f.Q = q_symbols(f.in);
    f.b = solve_recursion(f.Q, K);
    return f;
}

}  // namespace

TEST_CASE("roundtrip recovery on random families") {
    std::mt19937_64 rng(31);
    for (int n : {2, 3})
        for (int N : {1, 2})
            for (int rep = 0; rep < 2; ++rep) {
                auto m = random_metric(n, rng, 0.2);
                auto c = random_connection(n, N, rng, 0.5, true);
                auto Z = random_endo(n, build_gamma(n).k * N, rng, 0.5, rep == 0);
                auto f = forward(m, c.get(), N, &Z, 0.3);
                auto rec = recover_all(f.Q, f.b, N, 0.3);
                auto err = compare_boundary_jets(rec, truth_from_input(f.in));
                REQUIRE(err.size() == 6);
                for (auto& [k, v] : err) {
                    INFO("n=" << n << " N=" << N << " " << k);
                    CHECK(v <= 1e-9);
                }
                CHECK(rec.z_spread <= 1e-9);
                CHECK((rec.dg - rec.dg.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
                for (auto& A : rec.A) CHECK((A + A.adjoint()).cwiseAbs().maxCoeff() <= 1e-12);
            }
}

TEST_CASE("flat trivial data recovers identity and zeros") {
    auto f = forward(MetricField::flat(3), nullptr, 1, nullptr, 0.0);
    auto rec = recover_all(f.Q, f.b, 1, 0.0);
    CHECK((rec.g - MatR::Identity(2, 2)).norm() <= 1e-14);
    CHECK(rec.dg.norm() <= 1e-14);
    CHECK(rec.d2g.norm() <= 1e-14);
    CHECK(rec.Z.norm() <= 1e-14);
    for (auto& A : rec.A) CHECK(A.norm() <= 1e-14);
}

TEST_CASE("recover_metric reads the co-metric by polarization") {
    // g_11 = 1/4, g_22 = 1
    std::vector<ScalarField> P(4);
    P[0] = ScalarField::constant(-0.75, 3);
    auto m = MetricField::perturbation(3, P);
    auto f = forward(m, nullptr, 1, nullptr, 0.0, 3, 1);
    auto R = make_recovery_state(3, 1, 0.0, f.Q.ctx.sp);
    recover_metric(exact_symbols(f.Q, f.b), R);
    CHECK(R.hinv[0].value() == Catch::Approx(4.0).epsilon(1e-14));
    CHECK(std::abs(R.hinv[1].value()) <= 1e-14);
    CHECK(R.hinv[3].value() == Catch::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("non positive definite metric input is rejected") {
    auto sp = JetSpace::get(2, 2);
    SymbolEval bad = [&](int, const std::vector<double>&) { return JetM(sp, 2, MatC::Zero(2, 2)); };
    auto R = make_recovery_state(2, 1, 0.0, sp);
    CHECK_THROWS_AS(recover_metric(bad, R), DomainError);
}

TEST_CASE("parity split is exact") {
    std::mt19937_64 rng(32);
    auto c = random_connection(3, 1, rng, 0.5, true);
    auto f = forward(random_metric(3, rng, 0.2), c.get(), 1, nullptr, 0.0, 4, 1);
    auto b = exact_symbols(f.Q, f.b);
    std::vector<double> xi = {0.3, -1.1};
    auto [odd, even] = parity_split(b, 0, xi);
    CHECK((odd + even - b(0, xi)).max_abs() <= 1e-14);
    auto [o1, e1] = parity_split(b, 1, xi);
    CHECK(o1.max_abs() <= 1e-14);
}

TEST_CASE("constant abelian potential has ξ-odd b0 and is recovered") {
    FamilyConnection c(2, 1);
    c.A[0].add(ScalarField::constant(0.6, 2), MatC::Constant(1, 1, cd(0, 1)));
    auto f = forward(MetricField::flat(2), &c, 1, nullptr, 0.0, 4, 1);
    auto [odd, even] = parity_split(exact_symbols(f.Q, f.b), 0, {1.0});
    CHECK(even.max_abs() <= 1e-15);
    auto rec = recover_all(f.Q, f.b, 1, 0.0, 1);
    CHECK(std::abs(rec.A[0](0, 0) - cd(0, 0.6)) <= 1e-12);
}

TEST_CASE("linear normal profile of A gives d_n A") {
    FamilyConnection c(3, 1);
    const double cs[2] = {0.3, -0.2}, ds[2] = {0.5, 0.9};
    for (int a = 0; a < 2; ++a) {
        c.A[a].add(ScalarField::constant(cs[a], 3), MatC::Constant(1, 1, cd(0, 1)));
        c.A[a].add(ScalarField::normal_power(ds[a], 1, 3), MatC::Constant(1, 1, cd(0, 1)));
    }
    auto f = forward(MetricField::flat(3), &c, 1, nullptr, 0.0);
    auto rec = recover_all(f.Q, f.b, 1, 0.0);
    for (int a = 0; a < 2; ++a) CHECK(std::abs(rec.dA[a](0, 0) - cd(0, ds[a])) <= 1e-9);
}

TEST_CASE("constant potential term is recovered from b_{-1}") {
    MatrixField Z;
    Z.add(ScalarField::constant(1.0, 2), 0.7 * MatC::Identity(2, 2));
    auto f = forward(MetricField::flat(2), nullptr, 1, &Z, 0.0);
    auto rec = recover_all(f.Q, f.b, 1, 0.0);
    CHECK((rec.Z - 0.7 * MatC::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("conformal e^{2x_n} metric gives d_n g = 2 delta") {
    ScalarField fx;
    fx.terms.push_back({1.0, 1, std::vector<int>(2, 0), 0.0});
    auto f = forward(MetricField::conformal(3, fx), nullptr, 1, nullptr, 0.0);
    auto rec = recover_all(f.Q, f.b, 1, 0.0);
    CHECK((rec.dg - 2.0 * MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((rec.d2g - 4.0 * MatR::Identity(2, 2)).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("recovered connection forms match the geometry module") {
    std::mt19937_64 rng(33);
    auto m = random_metric(3, rng, 0.2);
    auto f = forward(m, nullptr, 1, nullptr, 0.0, 5, 1);
    auto R = make_recovery_state(3, 1, 0.0, f.Q.ctx.sp);
    auto b = exact_symbols(f.Q, f.b);
    recover_metric(b, R);
    recover_theta_and_split(b, R);
    auto F = frame_jets(geometry_from_metric_jets(f.in.g));
    for (int a = 0; a < 2; ++a)
        for (int ij = 0; ij < 9; ++ij) CHECK(std::abs(R.omega[a][ij].value() - F.omega[a][ij].value()) <= 1e-10);
}

TEST_CASE("numeric symbol provider reuses estimates under xi -> -xi") {
    auto sp = JetSpace::get(2, 3);
    int calls = 0;
    NumericSymbols ns(
        [&](const std::vector<int>& k) {
            ++calls;
            SymbolEstimate e;
            e.b1 = -std::abs(double(k[0])) * MatC::Identity(2, 2);
            e.b0_even = MatC::Zero(2, 2);
            e.b0_odd = -0.4 * double(k[0] > 0 ? 1 : -1) * MatC::Identity(2, 2);
            e.b0 = e.b0_even + e.b0_odd;
            return e;
        },
        sp);
    auto rec = recover_numeric(ns, 2, 1, 0.0, sp);
    CHECK(calls == 1);
    CHECK((rec.g - MatR::Identity(1, 1)).norm() <= 1e-14);
    CHECK(std::abs(rec.A[0](0, 0) - cd(0, 0.4)) <= 1e-14);
}
