#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "dnspin/errors.hpp"

namespace dnspin {

/// Fornberg weights for the m-th derivative at z from nodes x.
inline std::vector<double> fornberg(double z, const std::vector<double>& x, int m) {
    const int np = static_cast<int>(x.size());
    std::vector<std::vector<double>> c(np, std::vector<double>(m + 1, 0.0));
    double c1 = 1.0, c4 = x[0] - z;
    c[0][0] = 1.0;
    for (int i = 1; i < np; ++i) {
        int mn = std::min(i, m);
        double c2 = 1.0, c5 = c4;
        c4 = x[i] - z;
        for (int j = 0; j < i; ++j) {
            double c3 = x[i] - x[j];
            c2 *= c3;
            if (j == i - 1) {
                for (int k = mn; k >= 1; --k) c[i][k] = c1 * (k * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for (int k = mn; k >= 1; --k) c[j][k] = (c4 * c[j][k] - k * c[j][k - 1]) / c3;
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    std::vector<double> w(np);
    for (int i = 0; i < np; ++i) w[i] = c[i][m];
    return w;
}

/// One stencil row: offsets relative to the row index, and weights (already divided by h).
struct StencilRow {
    std::vector<int> off;
    std::vector<double> w;
};

/// Centered first derivative of even order p on a periodic grid of spacing h.
inline StencilRow periodic_d1(int p, double h) {
    StencilRow r;
    std::vector<double> x;
    for (int o = -p / 2; o <= p / 2; ++o) {
        r.off.push_back(o);
        x.push_back(o);
    }
    r.w = fornberg(0.0, x, 1);
    for (auto& w : r.w) w /= h;
    return r;
}

/// First derivative at row j of a bounded grid of size N: centered when it
/// fits, otherwise a shifted (one-sided) window of p+1 points.
inline StencilRow bounded_d1(int p, int N, int j, double h) {
    int lo = j - p / 2;
    if (lo < 0) lo = 0;
    if (lo + p > N - 1) lo = N - 1 - p;
    StencilRow r;
    std::vector<double> x;
    for (int i = lo; i <= lo + p; ++i) {
        r.off.push_back(i - j);
        x.push_back(i - j);
    }
    r.w = fornberg(0.0, x, 1);
    for (auto& w : r.w) w /= h;
    return r;
}

/// Slab T^{n-1} x [0,T]; tangential spacing 2 pi / Nt, normal spacing T/(Nn-1).
/// Point id = tangential_flat * Nn + j.
struct SlabGrid {
    int n = 2;
    std::vector<int> Nt;
    int Nn = 17;
    double T = 1.0;
    int order_t = 2;  // tangential stencil order
    int order_n = 2;  // normal stencil order

    static SlabGrid make(int n, int nt, int nn, double T, int ot = 2, int on = 2) {
        SlabGrid g;
        g.n = n;
        g.Nt.assign(n - 1, nt);
        g.Nn = nn;
        g.T = T;
        g.order_t = ot;
        g.order_n = on;
        g.validate();
        return g;
    }

    void validate() const {
        if (n < 2 || static_cast<int>(Nt.size()) != n - 1) throw DomainError("SlabGrid: bad dimension");
        for (int v : Nt)
            if (v < 8 || v % 2) throw DomainError("SlabGrid: tangential size must be even and >= 8");
        if (Nn < 9) throw DomainError("SlabGrid: normal size must be >= 9");
        if (!(T > 0)) throw DomainError("SlabGrid: T must be positive");
        if (order_t % 2 || order_t < 2 || order_n % 2 || order_n < 2) throw DomainError("SlabGrid: stencil orders must be even");
        for (int v : Nt)
            if (v < order_t + 1) throw DomainError("SlabGrid: grid too small for tangential stencil");
        if (Nn < order_n + 2) throw DomainError("SlabGrid: grid too small for normal stencil");
    }

    int ntan() const {
        int r = 1;
        for (int v : Nt) r *= v;
        return r;
    }
    int npoints() const { return ntan() * Nn; }
    double ht(int a) const { return 2.0 * std::numbers::pi / Nt[a]; }
    double hn() const { return T / (Nn - 1); }

    std::vector<int> tan_index(int t) const {
        std::vector<int> idx(n - 1);
        for (int a = n - 2; a >= 0; --a) {
            idx[a] = t % Nt[a];
            t /= Nt[a];
        }
        return idx;
    }
    int tan_flat(const std::vector<int>& idx) const {
        int t = 0;
        for (int a = 0; a < n - 1; ++a) t = t * Nt[a] + ((idx[a] % Nt[a]) + Nt[a]) % Nt[a];
        return t;
    }
    int id(int t, int j) const { return t * Nn + j; }

    std::vector<double> coord(int pid) const {
        int t = pid / Nn, j = pid % Nn;
        auto idx = tan_index(t);
        std::vector<double> x(n);
        for (int a = 0; a < n - 1; ++a) x[a] = ht(a) * idx[a];
        x[n - 1] = hn() * j;
        return x;
    }

    /// Neighbour along direction c (c = n-1 is normal) at offset o; -1 if off-grid.
    int shift(int pid, int c, int o) const {
        int t = pid / Nn, j = pid % Nn;
        if (c == n - 1) {
            int jj = j + o;
            return (jj < 0 || jj >= Nn) ? -1 : id(t, jj);
        }
        auto idx = tan_index(t);
        idx[c] += o;
        return id(tan_flat(idx), j);
    }

    /// Stencil row of d/dx^c at point pid.
    StencilRow d1(int pid, int c) const {
        if (c == n - 1) return bounded_d1(order_n, Nn, pid % Nn, hn());
        return periodic_d1(order_t, ht(c));
    }
};

}  // namespace dnspin
