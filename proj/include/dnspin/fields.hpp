#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dnspin/clifford.hpp"
#include "dnspin/jet.hpp"

namespace dnspin {

/// sum_t amp_t (x^n)^pow_t cos(k_t . x' + phase_t); k_t are integer tangential wave numbers.
struct ScalarField {
    struct Term {
        double amp = 0.0;
        int pow = 0;
        std::vector<int> k;
        double phase = 0.0;
    };
    std::vector<Term> terms;

    bool empty() const { return terms.empty(); }

    static ScalarField constant(double c, int n) {
        ScalarField f;
        f.terms.push_back({c, 0, std::vector<int>(n - 1, 0), 0.0});
        return f;
    }
    static ScalarField normal_power(double c, int p, int n) {
        ScalarField f;
        f.terms.push_back({c, p, std::vector<int>(n - 1, 0), 0.0});
        return f;
    }

    /// Works for S = double and S = JetR.
    template <class S>
    S eval(const std::vector<S>& x) const {
        using std::cos;
        const int n = static_cast<int>(x.size());
        S r = 0.0 * x[0];
        for (const auto& t : terms) {
            S arg = 0.0 * x[0] + t.phase;
            for (int a = 0; a < n - 1; ++a)
                if (t.k[a] != 0) arg = arg + double(t.k[a]) * x[a];
            S v = t.amp * cos(arg);
            for (int p = 0; p < t.pow; ++p) v = v * x[n - 1];
            r = r + v;
        }
        return r;
    }
};

/// Boundary-normal metric dx_n^2 + g_ab(x) dx^a dx^b on T^{n-1} x [0,T].
struct MetricField {
    enum class Kind { Flat, Conformal, Perturbation, Sphere };
    int n = 2;
    Kind kind = Kind::Flat;
    ScalarField f;               // conformal exponent
    std::vector<ScalarField> P;  // (n-1)^2 symmetric perturbation entries
    double r = 1.0, theta0 = 1.0;

    static MetricField flat(int n) {
        MetricField m;
        m.n = n;
        return m;
    }
    static MetricField conformal(int n, ScalarField f) {
        MetricField m;
        m.n = n;
        m.kind = Kind::Conformal;
        m.f = std::move(f);
        return m;
    }
    static MetricField perturbation(int n, std::vector<ScalarField> P) {
        MetricField m;
        m.n = n;
        m.kind = Kind::Perturbation;
        m.P = std::move(P);
        if (static_cast<int>(m.P.size()) != (n - 1) * (n - 1)) throw DomainError("perturbation: need (n-1)^2 entries");
        return m;
    }
    /// Round sphere of radius r near the circle at polar angle theta0 (n = 2 only).
    static MetricField sphere(double r, double theta0) {
        MetricField m;
        m.n = 2;
        m.kind = Kind::Sphere;
        m.r = r;
        m.theta0 = theta0;
        return m;
    }

    std::string name() const {
        switch (kind) {
            case Kind::Flat: return "flat";
            case Kind::Conformal: return "conformal";
            case Kind::Perturbation: return "perturbation";
            default: return "sphere";
        }
    }

    /// Full n x n metric, row-major.
    template <class S>
    std::vector<S> eval(const std::vector<S>& x) const {
        using std::exp;
        using std::sin;
        const int m = n - 1;
        S zero = 0.0 * x[0];
        std::vector<S> g(n * n, zero);
        g[n * n - 1] = zero + 1.0;
        switch (kind) {
            case Kind::Flat:
                for (int a = 0; a < m; ++a) g[a * n + a] = zero + 1.0;
                break;
            case Kind::Conformal: {
                S e = exp(2.0 * f.eval(x));
                for (int a = 0; a < m; ++a) g[a * n + a] = e;
                break;
            }
            case Kind::Perturbation:
                for (int a = 0; a < m; ++a)
                    for (int b = 0; b < m; ++b) g[a * n + b] = P[a * m + b].eval(x) + (a == b ? 1.0 : 0.0);
                break;
            case Kind::Sphere: {
                S s = sin((1.0 / r) * x[n - 1] + theta0);
                g[0] = (r * r) * (s * s);
                break;
            }
        }
        return g;
    }
};

/// u(N) (or End) valued field: sum_t f_t(x) M_t.
struct MatrixField {
    std::vector<ScalarField> f;
    std::vector<MatC> M;
    int dim = 1;

    bool empty() const { return f.empty(); }
    void add(ScalarField s, MatC m) {
        dim = static_cast<int>(m.rows());
        f.push_back(std::move(s));
        M.push_back(std::move(m));
    }
    MatC eval(const std::vector<double>& x) const {
        MatC r = MatC::Zero(dim, dim);
        for (size_t t = 0; t < f.size(); ++t) r += f[t].eval(x) * M[t];
        return r;
    }
    JetM jet(const std::vector<JetR>& x) const {
        JetM r = JetM::zero(x[0].sp, x[0].ord, MatC::Zero(dim, dim));
        for (size_t t = 0; t < f.size(); ++t) {
            JetR s = f[t].eval(x);
            r += s.map([&](double v) -> MatC { return cd(v) * M[t]; });
        }
        return r;
    }
};

/// Jet variables x0 + t_v, all n of them.
inline std::vector<JetR> jet_point(const std::vector<double>& x0, int J) {
    auto sp = JetSpace::get(static_cast<int>(x0.size()), J);
    std::vector<JetR> x;
    for (int v = 0; v < static_cast<int>(x0.size()); ++v) x.push_back(JetR::variable(sp, v, x0[v], 1.0));
    return x;
}

/// Anything that yields jets of a connection A_a (a = 1..n) at a point.
struct ConnectionSource {
    virtual ~ConnectionSource() = default;
    virtual int dim() const = 0;
    virtual int rank() const = 0;
    virtual bool normal_gauge() const = 0;
    virtual std::vector<JetM> jets(const std::vector<double>& x, int J) const = 0;
    std::vector<MatC> eval(const std::vector<double>& x) const {
        auto j = jets(x, 0);
        std::vector<MatC> r;
        for (auto& a : j) r.push_back(a.value());
        return r;
    }
};

struct FamilyConnection : ConnectionSource {
    int n = 2, N = 1;
    std::vector<MatrixField> A;  // one per direction

    FamilyConnection(int n_, int N_) : n(n_), N(N_), A(n_) {
        for (auto& a : A) a.dim = N_;
    }
    int dim() const override { return n; }
    int rank() const override { return N; }
    bool normal_gauge() const override { return A[n - 1].empty(); }
    std::vector<JetM> jets(const std::vector<double>& x0, int J) const override {
        auto x = jet_point(x0, J);
        std::vector<JetM> r;
        for (int a = 0; a < n; ++a) r.push_back(A[a].jet(x));
        return r;
    }
};

/// Hermitian basis-free u(N) generator list used by random families.
inline MatC random_skew(int N, std::mt19937_64& rng, double scale) {
    std::normal_distribution<double> nd;
    MatC m(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) m(i, j) = cd(nd(rng), nd(rng));
    MatC s = 0.5 * (m - m.adjoint());
    return scale * s / std::max(1e-300, s.norm());
}
inline MatC random_hermitian(int d, std::mt19937_64& rng, double scale) {
    return cd(0, 1) * random_skew(d, rng, scale);
}

inline ScalarField random_scalar(int n, std::mt19937_64& rng, double amp, int nterms, int maxpow, int maxk) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::uniform_int_distribution<int> ki(-maxk, maxk), pi(0, maxpow);
    ScalarField f;
    for (int t = 0; t < nterms; ++t) {
        ScalarField::Term term;
        term.amp = amp * u(rng);
        term.pow = pi(rng);
        term.k.resize(n - 1);
        for (auto& k : term.k) k = ki(rng);
        term.phase = 3.14159 * u(rng);
        f.terms.push_back(term);
    }
    return f;
}

inline MetricField random_metric(int n, std::mt19937_64& rng, double eps) {
    const int m = n - 1;
    std::vector<ScalarField> P(m * m);
    for (int a = 0; a < m; ++a)
        for (int b = a; b < m; ++b) {
            P[a * m + b] = random_scalar(n, rng, eps, 3, 3, 2);
            P[b * m + a] = P[a * m + b];
        }
    return MetricField::perturbation(n, P);
}

inline std::shared_ptr<FamilyConnection> random_connection(int n, int N, std::mt19937_64& rng, double amp, bool normal_gauge) {
    auto c = std::make_shared<FamilyConnection>(n, N);
    for (int a = 0; a < n; ++a) {
        if (normal_gauge && a == n - 1) continue;
        for (int t = 0; t < 2; ++t) c->A[a].add(random_scalar(n, rng, 1.0, 2, 3, 2), random_skew(N, rng, amp));
    }
    return c;
}

inline MatrixField random_endo(int n, int d, std::mt19937_64& rng, double amp, bool hermitian) {
    MatrixField z;
    z.dim = d;
    std::normal_distribution<double> nd;
    for (int t = 0; t < 2; ++t) {
        MatC m(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) m(i, j) = cd(nd(rng), nd(rng));
        if (hermitian) m = 0.5 * (m + m.adjoint());
        z.add(random_scalar(n, rng, 1.0, 2, 3, 2), amp * m / m.norm());
    }
    return z;
}

}  // namespace dnspin
