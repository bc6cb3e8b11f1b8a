// Truncated chaos-expansion calculus over a lattice window: Wick monomials,
// S/T-transforms, Wick products and analytic functions, weighted double-sum
// norms, interaction densities and their smoothed variants, and the n-point
// coefficient extraction used by the correlation-function layer.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "qpfield/noise.hpp"
#include "qpfield/rng.hpp"

namespace qpfield {

// ---------------------------------------------------------------------------
// Chaos vectors
//
// A distribution is stored as Phi = sum_n <Phi_n, :W^{otimes n}:> with each
// kernel Phi_n a weighted list of elementary tensor products of lattice
// functions.  Factors are interned in a shared pool so that identical fields
// (the point masses of interaction densities, say) are stored once and term
// merging reduces to comparing index lists.  Pairing against f^{otimes n}
// symmetrizes, so factor order inside a term is immaterial; we keep the index
// lists sorted to make that explicit.

struct ChaosTerm {
    cd weight;
    std::vector<std::size_t> factors;  // sorted indices into the factor pool
};

class ChaosVector {
  public:
    ChaosVector(const LatticeGeometry& g, int n_max) : geo_(g), n_max_(n_max) {
        if (n_max < 0) throw std::invalid_argument("ChaosVector: negative order cap");
        kernels_.resize(static_cast<std::size_t>(n_max) + 1);
    }

    static ChaosVector vacuum(const LatticeGeometry& g, int n_max) {
        ChaosVector v(g, n_max);
        v.add_term(0, cd(1.0, 0.0), {});
        return v;
    }

    /// order-1 vector <g, :W:>
    static ChaosVector first_order(const LatticeField& f, int n_max = 1) {
        ChaosVector v(f.geometry(), n_max);
        v.add_term(1, cd(1.0, 0.0), {f});
        return v;
    }

    const LatticeGeometry& geometry() const { return geo_; }
    int max_order() const { return n_max_; }
    bool truncated() const { return truncated_; }
    void mark_truncated() { truncated_ = true; }

    const std::vector<ChaosTerm>& kernel(int n) const {
        return kernels_.at(static_cast<std::size_t>(n));
    }
    const LatticeField& factor(std::size_t i) const { return pool_[i]; }
    std::size_t pool_size() const { return pool_.size(); }

    /// order-0 kernel, i.e. the expectation under the white-noise measure
    cd constant() const {
        cd c(0.0, 0.0);
        for (const auto& t : kernels_[0]) c += t.weight;
        return c;
    }

    void add_term(int order, cd weight, const std::vector<LatticeField>& factors) {
        if (order != static_cast<int>(factors.size()))
            throw std::invalid_argument("ChaosVector: order/factor count mismatch");
        if (weight == cd(0.0, 0.0)) return;
        if (order > n_max_) {
            truncated_ = true;
            return;
        }
        ChaosTerm t;
        t.weight = weight;
        for (const auto& f : factors) t.factors.push_back(intern(f));
        std::sort(t.factors.begin(), t.factors.end());
        kernels_[static_cast<std::size_t>(order)].push_back(std::move(t));
    }

    /// internal form: factors already interned in this vector's pool
    void add_term_indices(int order, cd weight, std::vector<std::size_t> idx) {
        if (weight == cd(0.0, 0.0)) return;
        if (order > n_max_) {
            truncated_ = true;
            return;
        }
        std::sort(idx.begin(), idx.end());
        kernels_[static_cast<std::size_t>(order)].push_back({weight, std::move(idx)});
    }

    std::size_t intern(const LatticeField& f) {
        check_geometry(f);
        const std::uint64_t h = fingerprint(f);
        auto& bucket = index_[h];
        for (std::size_t i : bucket)
            if (pool_[i].values() == f.values()) return i;
        pool_.push_back(f);
        bucket.push_back(pool_.size() - 1);
        return pool_.size() - 1;
    }

    /// merge terms with identical factor sets; drop weights below 1e-15 of
    /// the largest weight at the same order
    void compact() {
        for (auto& list : kernels_) {
            if (list.empty()) continue;
            std::map<std::vector<std::size_t>, cd> merged;
            for (auto& t : list) merged[t.factors] += t.weight;
            double top = 0.0;
            for (const auto& [k, w] : merged) top = std::max(top, std::abs(w));
            std::vector<ChaosTerm> out;
            for (auto& [k, w] : merged)
                if (std::abs(w) > 1e-15 * top) out.push_back({w, k});
            list = std::move(out);
        }
    }

    std::size_t term_count() const {
        std::size_t n = 0;
        for (const auto& list : kernels_) n += list.size();
        return n;
    }

  private:
    void check_geometry(const LatticeField& f) const {
        if (!(f.geometry() == geo_))
            throw std::invalid_argument("ChaosVector: factor on a different geometry");
    }

    static std::uint64_t fingerprint(const LatticeField& f) {
        std::uint64_t h = 0x51ed270b7a038fb5ull;
        for (const cd& z : f.values()) {
            std::uint64_t a, b;
            const double re = z.real() == 0.0 ? 0.0 : z.real();  // normalize -0
            const double im = z.imag() == 0.0 ? 0.0 : z.imag();
            std::memcpy(&a, &re, 8);
            std::memcpy(&b, &im, 8);
            h = mix64(h ^ a);
            h = mix64(h ^ b);
        }
        return h;
    }

    LatticeGeometry geo_;
    int n_max_ = 0;
    bool truncated_ = false;
    std::vector<LatticeField> pool_;
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> index_;
    std::vector<std::vector<ChaosTerm>> kernels_;
};

// ---------------------------------------------------------------------------
// Linear structure

inline ChaosVector chaos_scale(const ChaosVector& a, cd c) {
    if (c == cd(0.0, 0.0)) {
        ChaosVector z(a.geometry(), a.max_order());
        if (a.truncated()) z.mark_truncated();
        return z;
    }
    ChaosVector out(a.geometry(), a.max_order());
    if (a.truncated()) out.mark_truncated();
    for (int n = 0; n <= a.max_order(); ++n)
        for (const auto& t : a.kernel(n)) {
            std::vector<LatticeField> fs;
            for (std::size_t i : t.factors) fs.push_back(a.factor(i));
            out.add_term(n, c * t.weight, fs);
        }
    out.compact();
    return out;
}

inline ChaosVector chaos_add(const ChaosVector& a, const ChaosVector& b) {
    if (!(a.geometry() == b.geometry()))
        throw std::invalid_argument("chaos_add: geometry mismatch");
    ChaosVector out(a.geometry(), std::max(a.max_order(), b.max_order()));
    if (a.truncated() || b.truncated()) out.mark_truncated();
    for (const ChaosVector* src : {&a, &b})
        for (int n = 0; n <= src->max_order(); ++n)
            for (const auto& t : src->kernel(n)) {
                std::vector<LatticeField> fs;
                for (std::size_t i : t.factors) fs.push_back(src->factor(i));
                out.add_term(n, t.weight, fs);
            }
    out.compact();
    return out;
}

inline ChaosVector operator+(const ChaosVector& a, const ChaosVector& b) {
    return chaos_add(a, b);
}
inline ChaosVector operator*(cd c, const ChaosVector& a) { return chaos_scale(a, c); }

// ---------------------------------------------------------------------------
// Transforms

/// S Phi(f) = sum_n sum_j w_j prod_i (g_{j,i}, f)_0 with the bilinear
/// measure-weighted pairing; exact finite computation
inline cd s_transform(const ChaosVector& phi, const LatticeField& f) {
    if (!(f.geometry() == phi.geometry()))
        throw std::invalid_argument("s_transform: geometry mismatch");
    std::vector<cd> paired(phi.pool_size());
    for (std::size_t i = 0; i < phi.pool_size(); ++i) paired[i] = pair0(phi.factor(i), f);
    cd acc(0.0, 0.0);
    for (int n = 0; n <= phi.max_order(); ++n)
        for (const auto& t : phi.kernel(n)) {
            cd prod = t.weight;
            for (std::size_t i : t.factors) prod *= paired[i];
            acc += prod;
        }
    return acc;
}

/// T Phi(g) = exp(-(g,g)_0/2) S Phi(ig).  Computed directly from the kernel
/// data (the order-n sum picks up a factor i^n) rather than by building the
/// rotated field, so it can serve as an independent cross-check of
/// s_transform.
inline cd t_transform(const ChaosVector& phi, const LatticeField& g) {
    if (!(g.geometry() == phi.geometry()))
        throw std::invalid_argument("t_transform: geometry mismatch");
    std::vector<cd> paired(phi.pool_size());
    for (std::size_t i = 0; i < phi.pool_size(); ++i) paired[i] = pair0(phi.factor(i), g);
    cd acc(0.0, 0.0);
    cd in(1.0, 0.0);
    for (int n = 0; n <= phi.max_order(); ++n) {
        cd order(0.0, 0.0);
        for (const auto& t : phi.kernel(n)) {
            cd prod = t.weight;
            for (std::size_t i : t.factors) prod *= paired[i];
            order += prod;
        }
        acc += in * order;
        in *= cd(0.0, 1.0);
    }
    return std::exp(-0.5 * pair0(g, g)) * acc;
}

/// coefficients of lambda^j, j = 0..order, of lambda -> T Phi(lambda g);
/// exact for the stored object as long as order <= max_order
inline std::vector<cd> t_transform_taylor(const ChaosVector& phi, const LatticeField& g,
                                          int order) {
    if (order < 0) throw std::invalid_argument("t_transform_taylor: negative order");
    if (order > phi.max_order())
        throw std::invalid_argument(
            "t_transform_taylor: requested order exceeds the stored truncation");
    if (!(g.geometry() == phi.geometry()))
        throw std::invalid_argument("t_transform_taylor: geometry mismatch");
    std::vector<cd> paired(phi.pool_size());
    for (std::size_t i = 0; i < phi.pool_size(); ++i) paired[i] = pair0(phi.factor(i), g);
    // S-part: coefficient of lambda^m is i^m A_m
    std::vector<cd> s(static_cast<std::size_t>(order) + 1, cd(0.0, 0.0));
    cd in(1.0, 0.0);
    for (int n = 0; n <= phi.max_order(); ++n) {
        if (n <= order) {
            cd a(0.0, 0.0);
            for (const auto& t : phi.kernel(n)) {
                cd prod = t.weight;
                for (std::size_t i : t.factors) prod *= paired[i];
                a += prod;
            }
            s[static_cast<std::size_t>(n)] = in * a;
        }
        in *= cd(0.0, 1.0);
    }
    // exp(-lambda^2 q/2) with q = (g,g)_0
    const cd q = pair0(g, g);
    std::vector<cd> e(static_cast<std::size_t>(order) + 1, cd(0.0, 0.0));
    cd pow(1.0, 0.0);
    double fact = 1.0;
    for (int j = 0; 2 * j <= order; ++j) {
        if (j > 0) {
            pow *= -0.5 * q;
            fact *= static_cast<double>(j);
        }
        e[static_cast<std::size_t>(2 * j)] = pow / fact;
    }
    std::vector<cd> out(static_cast<std::size_t>(order) + 1, cd(0.0, 0.0));
    for (int a = 0; a <= order; ++a)
        for (int b = 0; a + b <= order; ++b)
            out[static_cast<std::size_t>(a + b)] += e[static_cast<std::size_t>(a)] *
                                                    s[static_cast<std::size_t>(b)];
    return out;
}

// ---------------------------------------------------------------------------
// Wick algebra

/// Cauchy product of kernel series.  cap < 0 means no truncation beyond
/// a.max_order() + b.max_order(); otherwise orders above cap are dropped and
/// the truncation flag is set when anything nonzero is lost.
inline ChaosVector wick_product(const ChaosVector& a, const ChaosVector& b, int cap = -1) {
    if (!(a.geometry() == b.geometry()))
        throw std::invalid_argument("wick_product: geometry mismatch");
    const int full = a.max_order() + b.max_order();
    const int n_out = cap < 0 ? full : std::min(cap, full);
    ChaosVector out(a.geometry(), n_out);
    if (a.truncated() || b.truncated()) out.mark_truncated();
    // merge pools once, then concatenate index lists per term pair
    std::vector<std::size_t> amap(a.pool_size()), bmap(b.pool_size());
    for (std::size_t i = 0; i < a.pool_size(); ++i) amap[i] = out.intern(a.factor(i));
    for (std::size_t i = 0; i < b.pool_size(); ++i) bmap[i] = out.intern(b.factor(i));
    for (int na = 0; na <= a.max_order(); ++na)
        for (const auto& ta : a.kernel(na)) {
            for (int nb = 0; nb <= b.max_order(); ++nb) {
                if (na + nb > n_out) {
                    for (const auto& tb : b.kernel(nb))
                        if (ta.weight * tb.weight != cd(0.0, 0.0)) out.mark_truncated();
                    continue;
                }
                for (const auto& tb : b.kernel(nb)) {
                    std::vector<std::size_t> idx;
                    idx.reserve(ta.factors.size() + tb.factors.size());
                    for (std::size_t i : ta.factors) idx.push_back(amap[i]);
                    for (std::size_t i : tb.factors) idx.push_back(bmap[i]);
                    out.add_term_indices(na + nb, ta.weight * tb.weight, std::move(idx));
                }
            }
        }
    out.compact();
    return out;
}

inline ChaosVector wick_power(const ChaosVector& a, int k, int cap = -1) {
    if (k < 0) throw std::invalid_argument("wick_power: negative power");
    ChaosVector acc = ChaosVector::vacuum(a.geometry(), 0);
    for (int i = 0; i < k; ++i) acc = wick_product(acc, a, cap);
    return acc;
}

/// F applied under the Wick calculus: sum_k c_k (Phi - z0)^{wick k}, truncated
/// at coeffs.size() - 1 Wick powers and at n_out chaos orders.  z0 must agree
/// with the expectation of Phi.
inline ChaosVector wick_analytic(const std::vector<cd>& coeffs, cd z0, const ChaosVector& phi,
                                 int n_out = -1) {
    if (coeffs.empty()) throw std::invalid_argument("wick_analytic: empty coefficient list");
    if (std::abs(z0 - phi.constant()) > 1e-12 * (1.0 + std::abs(z0)))
        throw std::invalid_argument("wick_analytic: z0 does not match the expectation");
    const int cap = n_out < 0 ? phi.max_order() : n_out;
    // centered copy
    ChaosVector d(phi.geometry(), phi.max_order());
    if (phi.truncated()) d.mark_truncated();
    for (int n = 0; n <= phi.max_order(); ++n)
        for (const auto& t : phi.kernel(n)) {
            std::vector<LatticeField> fs;
            for (std::size_t i : t.factors) fs.push_back(phi.factor(i));
            d.add_term(n, t.weight, fs);
        }
    d.add_term(0, -z0, {});
    d.compact();

    ChaosVector result(phi.geometry(), cap);
    result.add_term(0, coeffs[0], {});
    ChaosVector power = ChaosVector::vacuum(phi.geometry(), 0);
    for (std::size_t k = 1; k < coeffs.size(); ++k) {
        power = wick_product(power, d, cap);
        result = chaos_add(result, chaos_scale(power, coeffs[k]));
    }
    if (power.truncated()) result.mark_truncated();
    result.compact();
    return result;
}

/// exp under the Wick calculus, truncated at n_out chaos orders.  The
/// exponential series is infinite, so any nonzero argument marks the result
/// truncated.
inline ChaosVector wick_exponential(const ChaosVector& phi, int n_out = -1) {
    const int cap = n_out < 0 ? phi.max_order() : n_out;
    const cd z0 = phi.constant();
    std::vector<cd> coeffs(static_cast<std::size_t>(cap) + 1);
    const cd scale = std::exp(z0);
    double fact = 1.0;
    for (int k = 0; k <= cap; ++k) {
        if (k > 0) fact *= static_cast<double>(k);
        coeffs[static_cast<std::size_t>(k)] = scale / fact;
    }
    ChaosVector r = wick_analytic(coeffs, z0, phi, cap);
    bool nonzero = false;
    for (int n = 1; n <= phi.max_order(); ++n)
        if (!phi.kernel(n).empty()) nonzero = true;
    if (nonzero) r.mark_truncated();
    return r;
}

// ---------------------------------------------------------------------------
// Hermite polynomials and sample-path evaluation

/// probabilists' Hermite polynomial He_n
inline double hermite_he(int n, double x) {
    if (n < 0) throw std::invalid_argument("hermite_he: negative order");
    double prev = 1.0, cur = x;
    if (n == 0) return prev;
    for (int k = 1; k < n; ++k) {
        const double next = x * cur - static_cast<double>(k) * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

/// n-th Wick-ordered power of <W,f>:  |f|_0^n He_n(<W,f>/|f|_0)
inline double wick_monomial_eval(const LatticeField& f, int n, const FieldSample& w) {
    if (n == 0) return 1.0;
    const double nf = norm0(f);
    if (nf == 0.0) return 0.0;
    const double x = pair_field(w, f).real() / nf;
    return std::pow(nf, n) * hermite_he(n, x);
}

namespace detail {

/// Wick-ordered product of the pairings <W,g_i> over the index list, via the
/// recursion :x0 x1..xn: = x0 :x1..xn: - sum_i C(g0,gi) :x1..xn without i:
inline cd wick_tensor_eval(const std::vector<std::size_t>& idx,
                           const std::vector<cd>& sample_pair,
                           const std::vector<std::vector<cd>>& cov) {
    if (idx.empty()) return cd(1.0, 0.0);
    std::vector<std::size_t> rest(idx.begin() + 1, idx.end());
    cd acc = sample_pair[idx[0]] * wick_tensor_eval(rest, sample_pair, cov);
    for (std::size_t i = 0; i < rest.size(); ++i) {
        std::vector<std::size_t> sub = rest;
        sub.erase(sub.begin() + static_cast<std::ptrdiff_t>(i));
        acc -= cov[idx[0]][rest[i]] * wick_tensor_eval(sub, sample_pair, cov);
    }
    return acc;
}

}  // namespace detail

/// evaluate the chaos expansion at a sample path W
inline cd chaos_eval(const ChaosVector& phi, const FieldSample& w) {
    if (!(w.geo == phi.geometry()))
        throw std::invalid_argument("chaos_eval: geometry mismatch");
    std::vector<cd> sp(phi.pool_size());
    for (std::size_t i = 0; i < phi.pool_size(); ++i) sp[i] = pair_field(w, phi.factor(i));
    std::vector<std::vector<cd>> cov(phi.pool_size(), std::vector<cd>(phi.pool_size()));
    for (std::size_t i = 0; i < phi.pool_size(); ++i)
        for (std::size_t j = 0; j < phi.pool_size(); ++j)
            cov[i][j] = pair0(phi.factor(i), phi.factor(j));
    cd acc(0.0, 0.0);
    for (int n = 0; n <= phi.max_order(); ++n)
        for (const auto& t : phi.kernel(n))
            acc += t.weight * detail::wick_tensor_eval(t.factors, sp, cov);
    return acc;
}

// ---------------------------------------------------------------------------
// Weighted double-sum norms

struct KondratievNormParams {
    int l = 0;
    int k = 0;
    double beta = 1.0;  // in [0, 1]
};

enum class NormSide { Test, Distribution };

namespace detail {

/// permanent by Ryser's formula, O(2^n n)
inline cd permanent(const std::vector<std::vector<cd>>& m) {
    const std::size_t n = m.size();
    if (n == 0) return cd(1.0, 0.0);
    if (n > 20) throw std::invalid_argument("permanent: order too large");
    cd total(0.0, 0.0);
    const std::uint32_t full = (1u << n) - 1u;
    for (std::uint32_t s = 1; s <= full; ++s) {
        cd prod(1.0, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            cd row(0.0, 0.0);
            for (std::size_t j = 0; j < n; ++j)
                if (s & (1u << j)) row += m[i][j];
            prod *= row;
        }
        const int bits = __builtin_popcount(s);
        total += ((static_cast<std::size_t>(bits) & 1u) == (n & 1u) ? 1.0 : -1.0) * prod;
    }
    return total;
}

}  // namespace detail

/// sum_n (n!)^{1 + beta} 2^{nk} |Phi_n|_l^2 on the test side, or
/// sum_n (n!)^{1 - beta} 2^{-nk} |Phi_n|_{-l}^2 on the distribution side.
/// Kernel norms are Gram sums over term pairs; the inner product of two
/// symmetrized elementary tensors is the permanent of their pairwise factor
/// inner products divided by n!.
inline double kondratiev_norm(const ChaosVector& phi, const KondratievNormParams& params,
                              NormSide side) {
    if (params.beta < 0.0 || params.beta > 1.0)
        throw std::invalid_argument("kondratiev_norm: beta outside [0,1]");
    const bool test = side == NormSide::Test;
    const int l = test ? params.l : -params.l;
    const double base = test ? std::pow(2.0, params.k) : std::pow(2.0, -params.k);
    const double beta_exp = test ? 1.0 + params.beta : 1.0 - params.beta;

    std::vector<std::vector<cd>> gram(phi.pool_size(), std::vector<cd>(phi.pool_size()));
    for (std::size_t i = 0; i < phi.pool_size(); ++i)
        for (std::size_t j = 0; j < phi.pool_size(); ++j)
            gram[i][j] = sobolev_inner(phi.factor(i), phi.factor(j), l);

    double total = 0.0;
    double fact = 1.0;
    double weight_base = 1.0;
    for (int n = 0; n <= phi.max_order(); ++n) {
        if (n > 0) {
            fact *= static_cast<double>(n);
            weight_base *= base;
        }
        const auto& list = phi.kernel(n);
        if (list.empty()) continue;
        cd norm2(0.0, 0.0);
        for (const auto& ta : list)
            for (const auto& tb : list) {
                std::vector<std::vector<cd>> m(static_cast<std::size_t>(n),
                                               std::vector<cd>(static_cast<std::size_t>(n)));
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < n; ++j)
                        m[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
                            gram[ta.factors[static_cast<std::size_t>(i)]]
                                [tb.factors[static_cast<std::size_t>(j)]];
                norm2 += std::conj(ta.weight) * tb.weight * detail::permanent(m) / fact;
            }
        total += std::pow(fact, beta_exp) * weight_base * std::max(0.0, norm2.real());
    }
    return total;
}

// ---------------------------------------------------------------------------
// Interaction densities

/// V = sum_cells vol sum_k (H_k/k!) delta_cell^{otimes k}; the returned
/// density is exp under the Wick calculus of -V, truncated at n_max
inline ChaosVector interaction_density(const InteractionH& h, const LatticeGeometry& g,
                                       int n_max) {
    if (n_max < 1) throw std::invalid_argument("interaction_density: order cap below one");
    ChaosVector v(g, n_max);
    const int deg = std::min<int>(h.degree(), n_max);
    double fact = 1.0;
    std::vector<std::vector<LatticeField>> stacks(g.points);
    for (int k = 1; k <= deg; ++k) {
        fact *= static_cast<double>(k);
        const cd hk = h.coeffs[static_cast<std::size_t>(k - 1)];
        for (std::size_t c = 0; c < g.points; ++c) {
            stacks[c].push_back(delta_field(g, c));
            if (hk != cd(0.0, 0.0)) v.add_term(k, g.cell_volume * hk / fact, stacks[c]);
        }
    }
    if (h.degree() > n_max) v.mark_truncated();
    v.compact();
    return wick_exponential(chaos_scale(v, cd(-1.0, 0.0)), n_max);
}

/// smoothed variant: point masses are replaced by their Green convolutions
/// and the exponent gains the second-order correction
///   (1/2) sum_cells vol [(G * delta_cell)^{otimes 2} - delta_cell^{otimes 2}],
/// which pairs f (x) g to (G*f, G*g)_0 - (f, g)_0
inline ChaosVector interaction_density_convolved(const InteractionH& h,
                                                 const GreenFunction& green,
                                                 const LatticeGeometry& g, int n_max) {
    if (n_max < 2)
        throw std::invalid_argument("interaction_density_convolved: order cap below two");
    if (!(green.geo == g))
        throw std::invalid_argument("interaction_density_convolved: geometry mismatch");
    ChaosVector v(g, n_max);
    const int deg = std::min<int>(h.degree(), n_max);
    std::vector<LatticeField> smoothed;
    smoothed.reserve(g.points);
    for (std::size_t c = 0; c < g.points; ++c)
        smoothed.push_back(green_apply(green, delta_field(g, c)));
    double fact = 1.0;
    std::vector<std::vector<LatticeField>> stacks(g.points);
    for (int k = 1; k <= deg; ++k) {
        fact *= static_cast<double>(k);
        const cd hk = h.coeffs[static_cast<std::size_t>(k - 1)];
        for (std::size_t c = 0; c < g.points; ++c) {
            stacks[c].push_back(smoothed[c]);
            if (hk != cd(0.0, 0.0)) v.add_term(k, g.cell_volume * hk / fact, stacks[c]);
        }
    }
    if (h.degree() > n_max) v.mark_truncated();
    // trace correction enters the exponent with a plus sign
    for (std::size_t c = 0; c < g.points; ++c) {
        v.add_term(2, cd(-0.5 * g.cell_volume, 0.0), {smoothed[c], smoothed[c]});
        v.add_term(2, cd(0.5 * g.cell_volume, 0.0),
                   {delta_field(g, c), delta_field(g, c)});
    }
    v.compact();
    return wick_exponential(chaos_scale(v, cd(-1.0, 0.0)), n_max);
}

// ---------------------------------------------------------------------------
// n-point coefficients
//
// The n-point function of a density Phi is
//   S_n(f_1, .., f_n) = (-i)^n d^n/dt_1..dt_n  T Phi(t_1 f_1 + .. + t_n f_n) | t=0.
// The mixed first derivative is the coefficient of t_1 t_2 .. t_n, so we work
// in the quotient ring modulo t_i^2, represented densely over subset masks.

namespace detail {

struct MultilinearPoly {
    int vars = 0;
    std::vector<cd> c;  // index = subset mask

    explicit MultilinearPoly(int n) : vars(n), c(std::size_t(1) << n, cd(0.0, 0.0)) {}
};

inline MultilinearPoly mlp_mul(const MultilinearPoly& a, const MultilinearPoly& b) {
    MultilinearPoly r(a.vars);
    const std::uint32_t full = static_cast<std::uint32_t>(a.c.size() - 1);
    for (std::uint32_t s = 0; s <= full; ++s) {
        cd acc(0.0, 0.0);
        std::uint32_t sub = s;
        while (true) {
            acc += a.c[sub] * b.c[s & ~sub];
            if (sub == 0) break;
            sub = (sub - 1) & s;
        }
        r.c[s] = acc;
    }
    return r;
}

/// exp of a polynomial with zero constant term (nilpotent in the quotient)
inline MultilinearPoly mlp_exp(const MultilinearPoly& x) {
    MultilinearPoly r(x.vars), term(x.vars);
    r.c[0] = cd(1.0, 0.0);
    term.c[0] = cd(1.0, 0.0);
    for (int k = 1; k <= x.vars; ++k) {
        term = mlp_mul(term, x);
        for (auto& z : term.c) z /= static_cast<double>(k);
        for (std::size_t i = 0; i < r.c.size(); ++i) r.c[i] += term.c[i];
    }
    return r;
}

}  // namespace detail

/// S_n of the density phi against f_1 .. f_n, by multilinear coefficient
/// extraction from the T-transform; exact for the stored object
inline cd npoint_from_chaos(const ChaosVector& phi, const std::vector<LatticeField>& fs) {
    const int n = static_cast<int>(fs.size());
    if (n == 0) return phi.constant();
    if (n > 12) throw std::invalid_argument("npoint_from_chaos: more than 12 insertions");
    for (const auto& f : fs)
        if (!(f.geometry() == phi.geometry()))
            throw std::invalid_argument("npoint_from_chaos: geometry mismatch");

    // exp(-q(t)/2): q reduces to sum_{a<b} 2 (f_a, f_b)_0 t_a t_b in the ring
    detail::MultilinearPoly quad(n);
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            quad.c[(std::size_t(1) << a) | (std::size_t(1) << b)] =
                -pair0(fs[static_cast<std::size_t>(a)], fs[static_cast<std::size_t>(b)]);
    detail::MultilinearPoly expo = detail::mlp_exp(quad);

    // S Phi(i sum t_a f_a): per-factor linear forms, per-order factor i^m
    std::vector<std::vector<cd>> lin(phi.pool_size(), std::vector<cd>(static_cast<std::size_t>(n)));
    for (std::size_t i = 0; i < phi.pool_size(); ++i)
        for (int a = 0; a < n; ++a)
            lin[i][static_cast<std::size_t>(a)] = pair0(phi.factor(i), fs[static_cast<std::size_t>(a)]);

    detail::MultilinearPoly s_part(n);
    cd in(1.0, 0.0);
    for (int m = 0; m <= phi.max_order(); ++m) {
        for (const auto& t : phi.kernel(m)) {
            detail::MultilinearPoly prod(n);
            prod.c[0] = t.weight;
            for (std::size_t i : t.factors) {
                detail::MultilinearPoly l(n);
                for (int a = 0; a < n; ++a) l.c[std::size_t(1) << a] = lin[i][static_cast<std::size_t>(a)];
                prod = detail::mlp_mul(prod, l);
            }
            for (std::size_t msk = 0; msk < s_part.c.size(); ++msk)
                s_part.c[msk] += in * prod.c[msk];
        }
        in *= cd(0.0, 1.0);
    }

    const detail::MultilinearPoly total = detail::mlp_mul(expo, s_part);
    cd mixed = total.c[(std::size_t(1) << n) - 1];
    cd mi(1.0, 0.0);
    for (int j = 0; j < n; ++j) mi *= cd(0.0, -1.0);
    return mi * mixed;
}

// ---------------------------------------------------------------------------
// Growth bound on n-point coefficients

/// modified Bessel function of order zero, by its power series
inline double bessel_i0(double x) {
    double term = 1.0, sum = 1.0;
    const double q = 0.25 * x * x;
    for (int j = 1; j < 200; ++j) {
        term *= q / (static_cast<double>(j) * static_cast<double>(j));
        sum += term;
        if (term < 1e-18 * sum) break;
    }
    return sum;
}

struct GrowthBoundRow {
    int n = 0;
    double lhs = 0.0;
    double bound = 0.0;
    double slack = 0.0;  // bound / max(lhs, tiny)
    bool ok = false;
};

struct GrowthBoundReport {
    double i0_value = 0.0;
    double k_const = 0.0;
    double c_const = 0.0;
    std::vector<GrowthBoundRow> rows;
    bool all_ok = true;
};

/// checks |S_n(f_1 x .. x f_n)| <= K C^n n! prod |f_i|_l with
/// K = sqrt(I0(2^-k)) |Phi|_{-l,-k,-1} and C = e 2^{k/2}
inline GrowthBoundReport growth_bound_check(const ChaosVector& phi, int l, int k,
                                            const std::vector<std::vector<LatticeField>>& tuples) {
    GrowthBoundReport rep;
    rep.i0_value = bessel_i0(std::pow(2.0, -k));
    if (rep.i0_value >= 1.3)
        throw std::domain_error("growth_bound_check: Bessel sanity bound violated");
    KondratievNormParams params;
    params.l = l;
    params.k = k;
    params.beta = 1.0;
    rep.k_const = std::sqrt(rep.i0_value * kondratiev_norm(phi, params, NormSide::Distribution));
    rep.c_const = std::exp(1.0) * std::pow(2.0, 0.5 * k);
    for (const auto& fs : tuples) {
        GrowthBoundRow row;
        row.n = static_cast<int>(fs.size());
        row.lhs = std::abs(npoint_from_chaos(phi, fs));
        double fact = 1.0, prod = 1.0;
        for (int j = 1; j <= row.n; ++j) fact *= static_cast<double>(j);
        for (const auto& f : fs) prod *= sobolev_norm(f, l);
        row.bound = rep.k_const * std::pow(rep.c_const, row.n) * fact * prod;
        row.slack = row.bound / std::max(row.lhs, 1e-300);
        row.ok = row.lhs <= row.bound * (1.0 + 1e-12);
        rep.all_ok = rep.all_ok && row.ok;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace qpfield
