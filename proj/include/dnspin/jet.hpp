#pragma once

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "dnspin/errors.hpp"

namespace dnspin {

/// Monomial tables for truncated Taylor polynomials in n variables up to total order J.
struct JetSpace {
    struct Triple {
        int i, j, k;
    };
    int n = 0, J = 0;
    std::vector<std::vector<int>> mono;  // graded, lexicographic within a degree
    std::vector<int> deg;
    std::vector<int> start;  // start[d] = first index of degree d; start[J+1] = size
    std::vector<std::vector<int>> up, down;
    std::vector<double> fact;  // mu! per monomial
    std::vector<Triple> mul;   // sorted by deg(k)
    std::vector<int> mul_end;  // mul_end[d] = one past last triple with deg(k) <= d

    int size() const { return static_cast<int>(mono.size()); }
    int count(int o) const { return o < 0 ? 0 : start[std::min(o, J) + 1]; }

    int index(const std::vector<int>& mu) const {
        auto it = lookup.find(mu);
        return it == lookup.end() ? -1 : it->second;
    }

    static std::shared_ptr<const JetSpace> get(int n, int J) {
        static std::mutex mtx;
        static std::map<std::pair<int, int>, std::shared_ptr<const JetSpace>> cache;
        std::lock_guard<std::mutex> lock(mtx);
        auto key = std::make_pair(n, J);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
        auto sp = std::make_shared<JetSpace>(build(n, J));
        cache[key] = sp;
        return sp;
    }

private:
    std::map<std::vector<int>, int> lookup;

    static void enumerate(int n, int d, int v, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
        if (v == n - 1) {
            cur[v] = d;
            out.push_back(cur);
            return;
        }
        for (int a = d; a >= 0; --a) {
            cur[v] = a;
            enumerate(n, d - a, v + 1, cur, out);
        }
    }

    static JetSpace build(int n, int J) {
        JetSpace s;
        s.n = n;
        s.J = J;
        std::vector<int> cur(n, 0);
        for (int d = 0; d <= J; ++d) {
            s.start.push_back(static_cast<int>(s.mono.size()));
            enumerate(n, d, 0, cur, s.mono);
        }
        s.start.push_back(static_cast<int>(s.mono.size()));
        for (int i = 0; i < s.size(); ++i) {
            s.lookup[s.mono[i]] = i;
            int d = 0;
            double f = 1.0;
            for (int a : s.mono[i]) {
                d += a;
                for (int q = 2; q <= a; ++q) f *= q;
            }
            s.deg.push_back(d);
            s.fact.push_back(f);
        }
        s.up.assign(n, std::vector<int>(s.size(), -1));
        s.down.assign(n, std::vector<int>(s.size(), -1));
        for (int i = 0; i < s.size(); ++i)
            for (int v = 0; v < n; ++v) {
                auto m = s.mono[i];
                m[v] += 1;
                s.up[v][i] = s.index(m);
                m[v] -= 2;
                if (m[v] >= 0) s.down[v][i] = s.index(m);
            }
        for (int dk = 0; dk <= J; ++dk) {
            for (int k = s.start[dk]; k < s.start[dk + 1]; ++k)
                for (int i = 0; i <= k; ++i) {
                    if (s.deg[i] > dk) break;
                    std::vector<int> m(n);
                    bool ok = true;
                    for (int v = 0; v < n; ++v) {
                        m[v] = s.mono[k][v] - s.mono[i][v];
                        if (m[v] < 0) ok = false;
                    }
                    if (!ok) continue;
                    s.mul.push_back({i, s.index(m), k});
                }
            s.mul_end.push_back(static_cast<int>(s.mul.size()));
        }
        return s;
    }
};

namespace detail {

template <class C>
constexpr bool is_scalar_v = std::is_arithmetic_v<C> || std::is_same_v<C, std::complex<double>>;

template <class C>
C zero_like(const C& x) {
    if constexpr (is_scalar_v<C>) {
        (void)x;
        return C(0);
    } else {
        return C::Zero(x.rows(), x.cols());
    }
}

template <class C>
bool is_zero(const C& x) {
    if constexpr (is_scalar_v<C>) {
        return x == C(0);
    } else {
        return x.size() == 0 || x.cwiseAbs().maxCoeff() == 0.0;
    }
}

template <class C>
double abs_max(const C& x) {
    if constexpr (is_scalar_v<C>) {
        return std::abs(x);
    } else {
        return x.size() == 0 ? 0.0 : x.cwiseAbs().maxCoeff();
    }
}

template <class A, class B, class = void>
struct prod_type;
template <class A, class B>
struct prod_type<A, B, std::enable_if_t<is_scalar_v<A> && is_scalar_v<B>>> {
    using type = decltype(A() * B());
};
template <class A, class B>
struct prod_type<A, B, std::enable_if_t<!is_scalar_v<A> || !is_scalar_v<B>>> {
    using type = Eigen::Matrix<std::conditional_t<std::is_same_v<A, Eigen::MatrixXcd> || std::is_same_v<B, Eigen::MatrixXcd> ||
                                                      std::is_same_v<A, std::complex<double>> ||
                                                      std::is_same_v<B, std::complex<double>>,
                                                  std::complex<double>, double>,
                               Eigen::Dynamic, Eigen::Dynamic>;
};

}  // namespace detail

/// Truncated Taylor polynomial about a point. Coefficients are stored as
/// c_mu = d^mu f / mu!. `ord` is the order up to which the coefficients are
/// exact; ord < 0 means nothing is known.
template <class C>
struct Jet {
    std::shared_ptr<const JetSpace> sp;
    int ord = -1;
    std::vector<C> c;

    Jet() = default;
    Jet(std::shared_ptr<const JetSpace> s, int o, const C& value) : sp(std::move(s)), ord(std::min(o, sp->J)) {
        c.assign(sp->size(), detail::zero_like(value));
        c[0] = value;
    }

    static Jet zero(std::shared_ptr<const JetSpace> s, int o, const C& proto) {
        return Jet(std::move(s), o, detail::zero_like(proto));
    }

    /// x0 + t_v.
    static Jet variable(std::shared_ptr<const JetSpace> s, int v, const C& x0, const C& one) {
        Jet j(s, s->J, x0);
        std::vector<int> m(s->n, 0);
        m[v] = 1;
        if (s->J >= 1) j.c[s->index(m)] = one;
        return j;
    }

    int n() const { return sp->n; }

    const C& value() const {
        if (ord < 0) throw OrderError("jet value requested with no valid order");
        return c[0];
    }

    /// Partial derivative of total order |mu| (not divided by mu!).
    C derivative(const std::vector<int>& mu) const {
        int i = sp->index(mu);
        if (i < 0 || sp->deg[i] > ord) throw OrderError("jet derivative beyond valid order");
        return c[i] * sp->fact[i];
    }

    Jet truncated(int o) const {
        Jet r = *this;
        r.ord = std::min(ord, o);
        for (int i = sp->count(r.ord); i < sp->size(); ++i) r.c[i] = detail::zero_like(c[0]);
        return r;
    }

    Jet& operator+=(const Jet& b) {
        ord = std::min(ord, b.ord);
        for (int i = 0; i < sp->count(ord); ++i) c[i] += b.c[i];
        zero_tail();
        return *this;
    }
    Jet& operator-=(const Jet& b) {
        ord = std::min(ord, b.ord);
        for (int i = 0; i < sp->count(ord); ++i) c[i] -= b.c[i];
        zero_tail();
        return *this;
    }
    template <class S, class = std::enable_if_t<detail::is_scalar_v<S>>>
    Jet& operator*=(S s) {
        for (auto& x : c) x *= s;
        return *this;
    }
    Jet operator-() const {
        Jet r = *this;
        for (auto& x : r.c) x = -x;
        return r;
    }

    /// d/dx_v; loses one order.
    Jet deriv(int v) const {
        Jet r = zero(sp, ord - 1, c[0]);
        for (int i = 0; i < sp->count(ord); ++i) {
            int a = sp->mono[i][v];
            if (a == 0) continue;
            r.c[sp->down[v][i]] = double(a) * c[i];
        }
        return r;
    }

    /// Integral from 0 along x_v (the expansion point has x_v = 0 offset).
    Jet integrate(int v) const {
        int o = std::min(ord + 1, sp->J);
        Jet r = zero(sp, o, c[0]);
        for (int i = 0; i < sp->count(o - 1); ++i) {
            int t = sp->up[v][i];
            if (t < 0) continue;
            r.c[t] = c[i] / double(sp->mono[i][v] + 1);
        }
        return r;
    }

    /// Set t_v = 0: keep only the monomials independent of x_v.
    Jet restrict_var(int v) const {
        Jet r = *this;
        for (int i = 0; i < sp->size(); ++i)
            if (sp->mono[i][v] > 0) r.c[i] = detail::zero_like(c[0]);
        return r;
    }

    /// Sum c_mu dx^mu over the valid part.
    C eval(const std::vector<double>& dx) const {
        C r = detail::zero_like(c[0]);
        for (int i = 0; i < sp->count(ord); ++i) {
            double p = 1.0;
            for (int v = 0; v < sp->n; ++v)
                for (int a = 0; a < sp->mono[i][v]; ++a) p *= dx[v];
            r += p * c[i];
        }
        return r;
    }

    double max_abs() const {
        double m = 0.0;
        for (int i = 0; i < sp->count(ord); ++i) m = std::max(m, detail::abs_max(c[i]));
        return m;
    }

    template <class F>
    auto map(F f) const {
        using R = std::decay_t<decltype(f(c[0]))>;
        Jet<R> r;
        r.sp = sp;
        r.ord = ord;
        r.c.reserve(c.size());
        for (auto& x : c) r.c.push_back(f(x));
        return r;
    }

private:
    void zero_tail() {
        for (int i = sp->count(ord); i < sp->size(); ++i) c[i] = detail::zero_like(c[0]);
    }
};

template <class A, class B>
auto operator*(const Jet<A>& a, const Jet<B>& b) {
    using R = typename detail::prod_type<A, B>::type;
    const auto& sp = a.sp;
    int o = std::min(a.ord, b.ord);
    R proto = a.c[0] * b.c[0];
    Jet<R> r = Jet<R>::zero(sp, o, proto);
    if (o < 0) return r;
    const int na = sp->count(o);
    std::vector<char> nza(na), nzb(na);
    for (int i = 0; i < na; ++i) {
        nza[i] = !detail::is_zero(a.c[i]);
        nzb[i] = !detail::is_zero(b.c[i]);
    }
    const int end = sp->mul_end[o];
    for (int t = 0; t < end; ++t) {
        const auto& tr = sp->mul[t];
        if (nza[tr.i] && nzb[tr.j]) r.c[tr.k] += a.c[tr.i] * b.c[tr.j];
    }
    return r;
}

template <class C>
Jet<C> operator+(Jet<C> a, const Jet<C>& b) {
    a += b;
    return a;
}
template <class C>
Jet<C> operator-(Jet<C> a, const Jet<C>& b) {
    a -= b;
    return a;
}

/// Scalar times jet (scalar is a plain number, applied coefficientwise).
template <class C, class S, class = std::enable_if_t<detail::is_scalar_v<S>>>
auto operator*(S s, const Jet<C>& a) {
    using R = std::conditional_t<detail::is_scalar_v<C>, decltype(s * C()), typename detail::prod_type<S, C>::type>;
    return a.map([s](const C& x) -> R { return R(s * x); });
}
template <class C, class S, class = std::enable_if_t<detail::is_scalar_v<S>>>
auto operator*(const Jet<C>& a, S s) {
    return s * a;
}

/// Add a constant to the value coefficient.
template <class C>
Jet<C> operator+(Jet<C> a, const C& s) {
    a.c[0] += s;
    return a;
}
template <class C>
Jet<C> operator-(Jet<C> a, const C& s) {
    a.c[0] -= s;
    return a;
}

inline Jet<double> operator+(Jet<double> a, double s) {
    a.c[0] += s;
    return a;
}
inline Jet<double> operator+(double s, Jet<double> a) { return a + s; }
inline Jet<double> operator-(double s, const Jet<double>& a) { return (-a) + s; }

/// f(a) = sum_k f^(k)(a0)/k! (a - a0)^k, given the derivative list.
template <class C>
Jet<C> compose(const Jet<C>& a, const std::vector<C>& dk) {
    Jet<C> u = a;
    u.c[0] = C(0);
    Jet<C> r(a.sp, a.ord, dk[0]);
    Jet<C> p = u;
    double kf = 1.0;
    for (int k = 1; k <= std::max(a.ord, 0) && k < static_cast<int>(dk.size()); ++k) {
        kf *= k;
        r += (dk[k] / kf) * p;
        p = p * u;
    }
    return r;
}

template <class C>
Jet<C> sin(const Jet<C>& a) {
    std::vector<C> d;
    C s = std::sin(a.c[0]), co = std::cos(a.c[0]);
    for (int k = 0; k <= a.sp->J; ++k) d.push_back((k % 4 == 0) ? s : (k % 4 == 1) ? co : (k % 4 == 2) ? -s : -co);
    return compose(a, d);
}
template <class C>
Jet<C> cos(const Jet<C>& a) {
    std::vector<C> d;
    C s = std::sin(a.c[0]), co = std::cos(a.c[0]);
    for (int k = 0; k <= a.sp->J; ++k) d.push_back((k % 4 == 0) ? co : (k % 4 == 1) ? -s : (k % 4 == 2) ? -co : s);
    return compose(a, d);
}
template <class C>
Jet<C> exp(const Jet<C>& a) {
    C e = std::exp(a.c[0]);
    return compose(a, std::vector<C>(a.sp->J + 1, e));
}
/// a^p for real p (a0 must be positive for non-integer p).
template <class C>
Jet<C> powr(const Jet<C>& a, double p) {
    std::vector<C> d;
    C coef(1);
    for (int k = 0; k <= a.sp->J; ++k) {
        d.push_back(coef * std::pow(a.c[0], p - k));
        coef *= (p - k);
    }
    return compose(a, d);
}
template <class C>
Jet<C> sqrt(const Jet<C>& a) {
    return powr(a, 0.5);
}
template <class C>
Jet<C> recip(const Jet<C>& a) {
    return powr(a, -1.0);
}
template <class C>
Jet<C> ipow(const Jet<C>& a, int p) {
    Jet<C> r(a.sp, a.sp->J, C(1));
    for (int i = 0; i < p; ++i) r = r * a;
    return r;
}
inline Jet<double> operator/(const Jet<double>& a, const Jet<double>& b) { return a * recip(b); }

using JetR = Jet<double>;
using JetC = Jet<std::complex<double>>;
using JetM = Jet<Eigen::MatrixXcd>;
using JetMR = Jet<Eigen::MatrixXd>;

/// Promote a scalar jet to a matrix jet (scalar times Id_d).
template <class C>
JetM to_matrix_jet(const Jet<C>& a, int d) {
    return a.map([d](const C& x) -> Eigen::MatrixXcd { return std::complex<double>(x) * Eigen::MatrixXcd::Identity(d, d); });
}

/// Constant matrix as a jet.
inline JetM const_jet(std::shared_ptr<const JetSpace> sp, int o, const Eigen::MatrixXcd& m) { return JetM(sp, o, m); }

inline JetM adjoint(const JetM& a) {
    return a.map([](const Eigen::MatrixXcd& x) -> Eigen::MatrixXcd { return x.adjoint(); });
}

template <class M>
auto entry(const Jet<M>& a, int i, int j) {
    using S = typename M::Scalar;
    return a.map([i, j](const M& x) -> S { return x(i, j); });
}

/// Inverse of a matrix jet by order-by-order recursion.
template <class M>
Jet<M> inverse(const Jet<M>& a) {
    const auto& sp = a.sp;
    M a0inv = a.c[0].inverse();
    Jet<M> r = Jet<M>::zero(sp, a.ord, a0inv);
    if (a.ord < 0) return r;
    r.c[0] = a0inv;
    for (int k = 1; k < sp->count(a.ord); ++k) {
        M s = detail::zero_like(a0inv);
        // a_i r_j with mono_i + mono_j = mono_k, i != 0
        for (int i = 1; i <= k; ++i) {
            if (sp->deg[i] > sp->deg[k]) break;
            std::vector<int> m(sp->n);
            bool ok = true;
            for (int v = 0; v < sp->n; ++v) {
                m[v] = sp->mono[k][v] - sp->mono[i][v];
                if (m[v] < 0) ok = false;
            }
            if (!ok) continue;
            s += a.c[i] * r.c[sp->index(m)];
        }
        r.c[k] = -a0inv * s;
    }
    return r;
}

/// Matrix exponential of a matrix jet by scaling and squaring.
template <class M>
Jet<M> expm(const Jet<M>& a) {
    double nrm = a.max_abs();
    int s = 0;
    while (nrm > 0.25) {
        nrm *= 0.5;
        ++s;
    }
    Jet<M> x = std::ldexp(1.0, -s) * a;
    const int d = static_cast<int>(a.c[0].rows());
    M id = M::Identity(d, d);
    Jet<M> r(a.sp, a.ord, id);
    Jet<M> term(a.sp, a.ord, id);
    for (int k = 1; k <= 24; ++k) {
        term = (1.0 / k) * (term * x);
        r += term;
        if (term.max_abs() < 1e-18) break;
    }
    for (int i = 0; i < s; ++i) r = r * r;
    return r;
}

}  // namespace dnspin
