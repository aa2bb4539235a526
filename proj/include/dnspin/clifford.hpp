#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "dnspin/errors.hpp"

namespace dnspin {

using cd = std::complex<double>;
using MatC = Eigen::MatrixXcd;
using VecC = Eigen::VectorXcd;
using MatR = Eigen::MatrixXd;
using VecR = Eigen::VectorXd;

/// Irreducible complex Clifford module: gammas[i]^2 = -Id, skew-Hermitian.
struct GammaRep {
    int n = 0;
    int k = 0;
    std::vector<MatC> gammas;
};

namespace detail {

inline MatC pauli(int a) {
    MatC s(2, 2);
    const cd I(0, 1);
    if (a == 1) s << 0, 1, 1, 0;
    else if (a == 2) s << 0, -I, I, 0;
    else s << 1, 0, 0, -1;
    return s;
}

inline MatC kron(const MatC& a, const MatC& b) {
    MatC r(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            r.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return r;
}

// Hermitian generators E_i with E_i E_j + E_j E_i = 2 delta_ij, for even d.
inline std::vector<MatC> hermitian_generators(int d) {
    std::vector<MatC> e;
    int size = 1;
    for (int m = 0; m < d; m += 2) {
        std::vector<MatC> next;
        for (auto& g : e) next.push_back(kron(g, pauli(3)));
        MatC id = MatC::Identity(size, size);
        next.push_back(kron(id, pauli(1)));
        next.push_back(kron(id, pauli(2)));
        e = std::move(next);
        size *= 2;
    }
    return e;
}

}  // namespace detail

/// Deterministic recursive construction, 1 <= n <= 8.
inline GammaRep build_gamma(int n) {
    if (n < 1 || n > 8) throw DomainError("build_gamma: dimension out of supported range [1,8]");
    const int d = 2 * (n / 2);
    auto e = detail::hermitian_generators(d);
    const int k = 1 << (n / 2);
    if (n % 2 == 1) {
        // chirality i^{d/2} E_1...E_d is Hermitian, squares to 1, anticommutes with all E_i
        MatC w = MatC::Identity(k, k);
        for (auto& g : e) w = w * g;
        cd ph(1, 0);
        for (int j = 0; j < d / 2; ++j) ph *= cd(0, 1);
        e.push_back(ph * w);
    }
    GammaRep rep;
    rep.n = n;
    rep.k = k;
    for (auto& g : e) rep.gammas.push_back(cd(0, 1) * g);
    return rep;
}

inline MatC clifford_mul(const GammaRep& rep, const std::vector<double>& v) {
    if (static_cast<int>(v.size()) != rep.n)
        throw DomainError("clifford_mul: vector length does not match dimension");
    MatC r = MatC::Zero(rep.k, rep.k);
    for (int i = 0; i < rep.n; ++i) r += v[i] * rep.gammas[i];
    return r;
}

/// Max over anticommutation, skew-Hermiticity, unitarity and the
/// orthonormality of {g_i g_j : i<j} under (1/k) tr(X^H Y).
inline double check_relations(const GammaRep& rep) {
    double res = 0.0;
    const int n = rep.n, k = rep.k;
    const MatC id = MatC::Identity(k, k);
    for (int i = 0; i < n; ++i) {
        const MatC& gi = rep.gammas[i];
        res = std::max(res, (gi.adjoint() + gi).cwiseAbs().maxCoeff());
        res = std::max(res, (gi.adjoint() * gi - id).cwiseAbs().maxCoeff());
        for (int j = 0; j < n; ++j) {
            MatC a = gi * rep.gammas[j] + rep.gammas[j] * gi;
            if (i == j) a += 2.0 * id;
            res = std::max(res, a.cwiseAbs().maxCoeff());
        }
    }
    std::vector<MatC> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back(rep.gammas[i] * rep.gammas[j]);
    for (size_t a = 0; a < pairs.size(); ++a) {
        res = std::max(res, std::abs(pairs[a].trace()));
        for (size_t b = 0; b < pairs.size(); ++b) {
            cd ip = (pairs[a].adjoint() * pairs[b]).trace() / double(k);
            res = std::max(res, std::abs(ip - (a == b ? 1.0 : 0.0)));
        }
    }
    return res;
}

/// Block (gamma (x) Id_N) in the s*N + a ordering.
inline MatC spin_lift(const MatC& s, int N) { return detail::kron(s, MatC::Identity(N, N)); }
/// Block (Id_k (x) A).
inline MatC gauge_lift(int k, const MatC& a) { return detail::kron(MatC::Identity(k, k), a); }

/// (1/k) Tr_S of a (kN)x(kN) matrix.
inline MatC partial_trace_spin(const MatC& x, int k, int N) {
    MatC r = MatC::Zero(N, N);
    for (int s = 0; s < k; ++s) r += x.block(s * N, s * N, N, N);
    return r / double(k);
}

}  // namespace dnspin
