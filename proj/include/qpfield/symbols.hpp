#pragma once

/**
 * Homogeneous polynomial symbols over Z_p and the elliptic pseudodifferential
 * multipliers built from them.
 *
 * A polynomial l(xi) in Z_p[xi_1..xi_N], homogeneous of degree d, is
 * *elliptic* when l(xi) = 0 forces xi = 0.  Ellipticity is certified by a
 * residue-lifting scan of the unit sphere: enumerate primitive residues mod
 * p with l = 0 mod p, lift survivors digit by digit, and stop either when
 * the live set empties (certified, with the exact constants
 * C0 ||xi||^d <= |l(xi)|_p <= C1 ||xi||^d) or when a survivor passes the
 * Hensel simple-root criterion (a genuine non-zero root exists: rejected
 * with a witness).  Homogeneity makes the unit-sphere scan global.
 *
 * Symbol variants share one elliptic core |l(xi)|_p^alpha:
 *   l-power       |l|^a + m^2          (operator L_a + m^2)
 *   shifted-power (|l| + m^2)^a
 *   bessel        (|l|^a + m^2)^b      (b = 1/2 gives the square root)
 */

#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "qpfield/lattice.hpp"
#include "qpfield/padic.hpp"

namespace qpfield {

struct EllipticPolynomial {
    struct Term {
        long long coeff = 0;
        std::vector<int> exps;  // one exponent per variable
    };
    long p = 2;
    int N = 1;
    int d = 2;
    std::vector<Term> terms;

    void validate() const {
        if (terms.empty()) throw std::invalid_argument("polynomial: no terms");
        for (const auto& t : terms) {
            if (static_cast<int>(t.exps.size()) != N)
                throw std::invalid_argument("polynomial: exponent arity mismatch");
            int deg = 0;
            for (int e : t.exps) {
                if (e < 0) throw std::invalid_argument("polynomial: negative exponent");
                deg += e;
            }
            if (deg != d) throw std::invalid_argument("polynomial: not homogeneous of the declared degree");
        }
    }

    /// l evaluated at integer numerators (exact).
    BigInt eval(const std::vector<BigInt>& n) const {
        BigInt acc = 0;
        for (const auto& t : terms) {
            BigInt m = t.coeff;
            for (int a = 0; a < N; ++a)
                for (int e = 0; e < t.exps[static_cast<std::size_t>(a)]; ++e)
                    m *= n[static_cast<std::size_t>(a)];
            acc += m;
        }
        return acc;
    }

    /// true when |value| at numerators bounded by `max_num` fits int64
    bool int64_safe(long max_num) const {
        long double bound = 0;
        for (const auto& t : terms) {
            long double m = std::abs(static_cast<long double>(t.coeff));
            for (int a = 0; a < N; ++a)
                for (int e = 0; e < t.exps[static_cast<std::size_t>(a)]; ++e)
                    m *= static_cast<long double>(max_num);
            bound += m;
        }
        return bound < 4.0e18L;
    }

    long long eval_i64(const long* n) const {
        long long acc = 0;
        for (const auto& t : terms) {
            long long m = t.coeff;
            for (int a = 0; a < N; ++a)
                for (int e = 0; e < t.exps[static_cast<std::size_t>(a)]; ++e) m *= n[a];
            acc += m;
        }
        return acc;
    }

    /// gradient component j at integer numerators (exact)
    BigInt grad(const std::vector<BigInt>& n, int j) const {
        BigInt acc = 0;
        for (const auto& t : terms) {
            const int ej = t.exps[static_cast<std::size_t>(j)];
            if (ej == 0) continue;
            BigInt m = t.coeff * ej;
            for (int a = 0; a < N; ++a) {
                const int e = t.exps[static_cast<std::size_t>(a)] - (a == j ? 1 : 0);
                for (int q = 0; q < e; ++q) m *= n[static_cast<std::size_t>(a)];
            }
            acc += m;
        }
        return acc;
    }
};

/// |l(xi)|_p for an exact p-adic vector argument.  Coordinates are brought
/// to a common scale S, so l(xi) = l(numerators) * p^{-dS} and
/// |l(xi)|_p = p^{dS - v(l(numerators))};  l = 0 gives 0.
inline double padic_abs_poly(const EllipticPolynomial& l, const PadicVector& xi) {
    if (xi.prime() != l.p || xi.dim() != l.N)
        throw std::invalid_argument("padic_abs_poly: vector does not match polynomial");
    int S = 0;
    for (int a = 0; a < l.N; ++a) S = std::max(S, xi[a].scale());
    std::vector<BigInt> n;
    n.reserve(static_cast<std::size_t>(l.N));
    for (int a = 0; a < l.N; ++a)
        n.push_back(xi[a].numerator() * ipow(l.p, S - xi[a].scale()));
    const BigInt val = l.eval(n);
    if (val == 0) return 0.0;
    return dpow(l.p, l.d * S - valuation(val, l.p));
}

struct EllipticityReport {
    enum class Verdict { Elliptic, NotElliptic, Inconclusive };
    Verdict verdict = Verdict::Inconclusive;
    int depth = 0;           // requested scan depth
    int max_valuation = -1;  // certified max v_p(l) over primitive vectors (Elliptic)
    int min_valuation = -1;  // certified min v_p(l) over primitive vectors
    double c0 = 0.0, c1 = 0.0;  // |l(xi)|_p in [c0,c1] * ||xi||^d
    std::vector<long> witness;  // primitive residue lifting to a root (NotElliptic)
    std::string detail;

    bool elliptic() const { return verdict == Verdict::Elliptic; }
};

/**
 * Residue-lifting ellipticity scan.  Level k holds the primitive residues
 * mod p^k with v_p(l) >= k; children are the p^N digit extensions.  A live
 * node whose gradient valuation e is exactly known (e < k) and satisfies
 * k >= 2e+1 has a simple root in the Hensel sense and lifts to a genuine
 * non-zero zero of l: rejection with witness.  An empty level certifies
 * max_valuation = k-1 and hence C0 = p^{-max_valuation}.
 */
inline EllipticityReport ellipticity_check(const EllipticPolynomial& l, int depth,
                                           std::size_t node_budget = 4'000'000) {
    l.validate();
    EllipticityReport rep;
    rep.depth = depth;
    const long p = l.p;
    const int N = l.N;

    // level 1: all primitive residues mod p
    std::vector<std::vector<long>> live;
    long total = 1;
    for (int a = 0; a < N; ++a) total *= p;
    bool any_nonzero_residue = false;
    std::vector<BigInt> nb(static_cast<std::size_t>(N));
    for (long flat = 1; flat < total; ++flat) {  // skip the zero residue
        std::vector<long> r(static_cast<std::size_t>(N));
        long rest = flat;
        for (int a = 0; a < N; ++a) {
            r[static_cast<std::size_t>(a)] = rest % p;
            rest /= p;
        }
        for (int a = 0; a < N; ++a) nb[static_cast<std::size_t>(a)] = r[static_cast<std::size_t>(a)];
        if (l.eval(nb) % p == 0)
            live.push_back(std::move(r));
        else
            any_nonzero_residue = true;
    }
    // -1 marks "not yet known": every residue vanished mod p (content-divisible
    // polynomial); the exact minimum is picked up during lifting.
    rep.min_valuation = any_nonzero_residue ? 0 : -1;

    BigInt modulus = p;
    std::size_t visited = static_cast<std::size_t>(total);
    for (int k = 1; k <= depth; ++k) {
        if (live.empty()) {
            rep.verdict = EllipticityReport::Verdict::Elliptic;
            rep.max_valuation = k - 1;
            if (rep.min_valuation < 0) rep.min_valuation = rep.max_valuation;  // every chain exited at the last level
            rep.c0 = dpow(p, -rep.max_valuation);
            rep.c1 = dpow(p, -rep.min_valuation);
            rep.detail = "live set empty at level " + std::to_string(k);
            return rep;
        }
        // Hensel simple-root criterion on the live nodes
        for (const auto& r : live) {
            std::vector<BigInt> n(r.begin(), r.end());
            int e = std::numeric_limits<int>::max();
            for (int j = 0; j < N; ++j) {
                const BigInt gj = l.grad(n, j);
                if (gj == 0) continue;
                e = std::min(e, valuation(gj, p));
            }
            if (e < k && k >= 2 * e + 1) {
                rep.verdict = EllipticityReport::Verdict::NotElliptic;
                rep.witness = r;
                rep.detail = "simple root mod p^" + std::to_string(k) +
                             " (gradient valuation " + std::to_string(e) + ") lifts to a non-zero root";
                return rep;
            }
        }
        if (k == depth) break;
        // lift to level k+1
        std::vector<std::vector<long>> next;
        const BigInt next_mod = modulus * p;
        for (const auto& r : live) {
            std::vector<long> ext = r;
            std::vector<long> digit(static_cast<std::size_t>(N), 0);
            // enumerate p^N digit extensions
            long ext_total = 1;
            for (int a = 0; a < N; ++a) ext_total *= p;
            for (long f2 = 0; f2 < ext_total; ++f2) {
                long rest = f2;
                for (int a = 0; a < N; ++a) {
                    digit[static_cast<std::size_t>(a)] = rest % p;
                    rest /= p;
                }
                std::vector<BigInt> n(static_cast<std::size_t>(N));
                for (int a = 0; a < N; ++a)
                    n[static_cast<std::size_t>(a)] =
                        BigInt(ext[static_cast<std::size_t>(a)]) +
                        modulus * digit[static_cast<std::size_t>(a)];
                if (l.eval(n) % next_mod == 0) {
                    std::vector<long> child(static_cast<std::size_t>(N));
                    for (int a = 0; a < N; ++a)
                        child[static_cast<std::size_t>(a)] = static_cast<long>(n[static_cast<std::size_t>(a)]);
                    next.push_back(std::move(child));
                } else if (rep.min_valuation < 0) {
                    rep.min_valuation = k;  // this vector has v_p(l) = k exactly
                }
                if (++visited > node_budget) {
                    rep.verdict = EllipticityReport::Verdict::Inconclusive;
                    rep.detail = "node budget exhausted";
                    return rep;
                }
            }
        }
        live = std::move(next);
        modulus = next_mod;
    }
    rep.verdict = EllipticityReport::Verdict::Inconclusive;
    rep.detail = "live residues remain at depth " + std::to_string(depth) +
                 " without a decisive Hensel certificate";
    return rep;
}

enum class SymbolVariant { LPower, ShiftedPower, Bessel };

struct SymbolSpec {
    EllipticPolynomial poly;
    double alpha = 1.0;
    double m = 1.0;
    double beta = 1.0;  // only used by the bessel variant
    SymbolVariant variant = SymbolVariant::LPower;

    void validate() const {
        poly.validate();
        if (alpha <= 0 || m < 0) throw std::invalid_argument("symbol: need alpha > 0, m >= 0");
        if (variant == SymbolVariant::Bessel && beta <= 0)
            throw std::invalid_argument("symbol: bessel variant needs beta > 0");
    }

    /// sigma as a function of |l(xi)|_p
    double from_absl(double absl) const {
        switch (variant) {
            case SymbolVariant::LPower: return std::pow(absl, alpha) + m * m;
            case SymbolVariant::ShiftedPower: return std::pow(absl + m * m, alpha);
            case SymbolVariant::Bessel: return std::pow(std::pow(absl, alpha) + m * m, beta);
        }
        throw std::logic_error("unreachable");
    }

    double at_zero() const { return from_absl(0.0); }

    /// growth exponent g with sigma ~ ||xi||^g at large frequency
    double growth_exponent() const {
        const double ad = alpha * poly.d;
        return variant == SymbolVariant::Bessel ? ad * beta : ad;
    }
};

/// min/max of sigma(xi)/||xi||^growth over the unit sphere, certified by the
/// residue scan and homogeneity (exact powers of p for the |l| core).
struct BoundConstants {
    double c0 = 0.0, c1 = 0.0;  // of the homogeneous core |l|^{alpha(*beta)}
    EllipticityReport report;
};
inline BoundConstants bound_constants(const SymbolSpec& s, int depth) {
    s.validate();
    BoundConstants b;
    b.report = ellipticity_check(s.poly, depth);
    if (!b.report.elliptic())
        throw std::domain_error("bound_constants: polynomial not certified elliptic: " + b.report.detail);
    const double e = s.alpha * (s.variant == SymbolVariant::Bessel ? s.beta : 1.0);
    b.c0 = std::pow(b.report.c0, e);
    b.c1 = std::pow(b.report.c1, e);
    return b;
}

/**
 * sigma sampled at the representatives of the frequency grid.  The zero
 * cell gets the xi = 0 value (the m^2 floor of the chosen variant); every
 * other cell is exact wherever |l|_p is locally constant (always, for
 * radial symbols).
 */
inline std::vector<double> symbol_field(const SymbolSpec& s, const LatticeGeometry& g) {
    s.validate();
    if (s.poly.p != g.p || s.poly.N != g.N)
        throw std::invalid_argument("symbol_field: polynomial does not match geometry");
    std::vector<double> sig(g.points);
    const bool fast = s.poly.int64_safe(g.axis - 1);
    std::vector<long> dg(static_cast<std::size_t>(g.N));
    std::vector<BigInt> nb(static_cast<std::size_t>(g.N));
    for (std::size_t i = 0; i < g.points; ++i) {
        std::size_t rest = i;
        bool zero = true;
        for (int a = 0; a < g.N; ++a) {
            dg[static_cast<std::size_t>(a)] = static_cast<long>(rest % static_cast<std::size_t>(g.axis));
            rest /= static_cast<std::size_t>(g.axis);
            if (dg[static_cast<std::size_t>(a)] != 0) zero = false;
        }
        if (zero) {
            sig[i] = s.at_zero();
            continue;
        }
        double absl;
        if (fast) {
            const long long v = s.poly.eval_i64(dg.data());
            if (v == 0) {
                absl = 0.0;
            } else {
                long long m = v < 0 ? -v : v;
                int val = 0;
                while (m % g.p == 0) {
                    m /= g.p;
                    ++val;
                }
                absl = dpow(g.p, s.poly.d * g.K - val);
            }
        } else {
            for (int a = 0; a < g.N; ++a) nb[static_cast<std::size_t>(a)] = dg[static_cast<std::size_t>(a)];
            const BigInt v = s.poly.eval(nb);
            absl = (v == 0) ? 0.0 : dpow(g.p, s.poly.d * g.K - valuation(v, g.p));
        }
        sig[i] = s.from_absl(absl);
    }
    return sig;
}

/// generic Fourier multiplier: F^{-1}( w(xi) F f )
inline LatticeField apply_multiplier(const LatticeField& f, const std::vector<double>& w) {
    if (w.size() != f.size()) throw std::invalid_argument("apply_multiplier: weight size mismatch");
    LatticeField F = dft(f);
    for (std::size_t i = 0; i < F.size(); ++i) F[i] *= w[i];
    return idft(F);
}

/// the full operator (L + m^2-floor) for the chosen variant: multiply by sigma
inline LatticeField apply_operator(const SymbolSpec& s, const LatticeField& f) {
    return apply_multiplier(f, symbol_field(s, f.geometry()));
}

// ---------------------------------------------------------------------------
// catalog of certified symbols

/// N=1: l(xi) = xi^d (elliptic for every d >= 1, C0 = C1 = 1)
inline EllipticPolynomial poly_power(long p, int d) {
    EllipticPolynomial l;
    l.p = p;
    l.N = 1;
    l.d = d;
    l.terms.push_back({1, {d}});
    return l;
}

/// smallest quadratic non-residue mod p (p odd)
inline long quadratic_nonresidue(long p) {
    if (p == 2) throw std::invalid_argument("no quadratic non-residue catalog entry for p = 2");
    std::vector<bool> is_sq(static_cast<std::size_t>(p), false);
    for (long x = 1; x < p; ++x) is_sq[static_cast<std::size_t>((x * x) % p)] = true;
    for (long s = 2; s < p; ++s)
        if (!is_sq[static_cast<std::size_t>(s)]) return s;
    throw std::logic_error("no non-residue found");
}

/// N=2: xi1^2 - s xi2^2 with s a non-residue; |l(xi)|_p = ||xi||_p^2 (p odd)
inline EllipticPolynomial poly_binary_anisotropic(long p) {
    const long s = quadratic_nonresidue(p);
    EllipticPolynomial l;
    l.p = p;
    l.N = 2;
    l.d = 2;
    l.terms.push_back({1, {2, 0}});
    l.terms.push_back({-s, {0, 2}});
    return l;
}

/// N=4: the quaternion norm form xi1^2 - s xi2^2 - p xi3^2 + s p xi4^2, the
/// unique anisotropic quaternary quadratic form over Q_p (p odd) up to
/// equivalence.
inline EllipticPolynomial poly_quaternary_anisotropic(long p) {
    const long s = quadratic_nonresidue(p);
    EllipticPolynomial l;
    l.p = p;
    l.N = 4;
    l.d = 2;
    l.terms.push_back({1, {2, 0, 0, 0}});
    l.terms.push_back({-s, {0, 2, 0, 0}});
    l.terms.push_back({-p, {0, 0, 2, 0}});
    l.terms.push_back({s * p, {0, 0, 0, 2}});
    return l;
}

// ---------------------------------------------------------------------------
// JSON wire format: [{"coeff": c, "exponents": [e1..eN]}, ...]

inline EllipticPolynomial polynomial_from_json(const nlohmann::json& j, long p, int N) {
    EllipticPolynomial l;
    l.p = p;
    l.N = N;
    if (!j.is_array() || j.empty()) throw std::invalid_argument("polynomial JSON: expected non-empty array");
    int d = -1;
    for (const auto& t : j) {
        EllipticPolynomial::Term term;
        term.coeff = t.at("coeff").get<long long>();
        term.exps = t.at("exponents").get<std::vector<int>>();
        if (static_cast<int>(term.exps.size()) != N)
            throw std::invalid_argument("polynomial JSON: exponent arity mismatch");
        int deg = 0;
        for (int e : term.exps) deg += e;
        if (d < 0) d = deg;
        if (deg != d) throw std::invalid_argument("polynomial JSON: not homogeneous");
        l.terms.push_back(std::move(term));
    }
    l.d = d;
    l.validate();
    return l;
}

inline nlohmann::json polynomial_to_json(const EllipticPolynomial& l) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& t : l.terms) arr.push_back({{"coeff", t.coeff}, {"exponents", t.exps}});
    return arr;
}

}  // namespace qpfield
