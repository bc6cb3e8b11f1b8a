#pragma once

/**
 * Finite lattice model of Q_p^N.
 *
 * The window is the ball B_K^N; fields are constant on cosets of B_{-K}^N,
 * so they live on the quotient group (B_K/B_{-K})^N = (Z/p^{2K})^N with
 * M = p^{2KN} cells.  Grid point a of cell n is n * p^{-K} per axis.  The
 * frequency grid is self-dual (identical), and the Fourier transform
 *
 *     F f(xi) = p^{-KN} sum_x chi_p(xi . x) f(x)
 *
 * is an exact continuum transform for such step functions.  Applying F
 * twice gives f(-xi); the inverse uses the conjugate kernel and the same
 * p^{-KN} prefactor.  Because the ultrametric window is closed under
 * addition, convolution and translation on the quotient are *exact* — no
 * zero padding or aliasing corrections are needed as long as one only asks
 * about points inside the window.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qpfield/padic.hpp"

namespace qpfield {

using cd = std::complex<double>;

struct LatticeGeometry {
    long p = 2;
    int N = 1;
    int K = 1;
    long axis = 4;            // p^{2K}
    std::size_t points = 4;   // axis^N
    double cell_volume = 0.5; // p^{-KN}

    LatticeGeometry() = default;
    LatticeGeometry(long p_, int N_, int K_) : p(p_), N(N_), K(K_) {
        if (p < 2 || N < 1 || K < 1) throw std::invalid_argument("LatticeGeometry: need p>=2, N>=1, K>=1");
        const BigInt ax = ipow(p, 2 * K);
        if (ax > (1L << 26)) throw std::invalid_argument("LatticeGeometry: axis p^{2K} too large");
        axis = static_cast<long>(ax);
        BigInt pts = 1;
        for (int a = 0; a < N; ++a) pts *= ax;
        if (pts > (1L << 26)) throw std::invalid_argument("LatticeGeometry: p^{2KN} points exceed desk scale");
        points = static_cast<std::size_t>(pts);
        cell_volume = dpow(p, -K * N);
    }

    friend bool operator==(const LatticeGeometry& a, const LatticeGeometry& b) {
        return a.p == b.p && a.N == b.N && a.K == b.K;
    }

    /// per-axis cell numerator of flat index i (little-endian axis order)
    long digit(std::size_t i, int a) const {
        for (int t = 0; t < a; ++t) i /= static_cast<std::size_t>(axis);
        return static_cast<long>(i % static_cast<std::size_t>(axis));
    }
    std::size_t index(const std::vector<long>& digits) const {
        std::size_t i = 0;
        for (int a = N - 1; a >= 0; --a)
            i = i * static_cast<std::size_t>(axis) + static_cast<std::size_t>(digits[static_cast<std::size_t>(a)]);
        return i;
    }
    std::vector<long> digits(std::size_t i) const {
        std::vector<long> d(static_cast<std::size_t>(N));
        for (int a = 0; a < N; ++a) {
            d[static_cast<std::size_t>(a)] = static_cast<long>(i % static_cast<std::size_t>(axis));
            i /= static_cast<std::size_t>(axis);
        }
        return d;
    }

    /// the p-adic point n * p^{-K} represented by cell i
    PadicVector point(std::size_t i) const {
        std::vector<PadicRational> c;
        c.reserve(static_cast<std::size_t>(N));
        for (int a = 0; a < N; ++a) {
            c.emplace_back(p, static_cast<long>(i % static_cast<std::size_t>(axis)), K);
            i /= static_cast<std::size_t>(axis);
        }
        return {p, std::move(c)};
    }

    /// cell of -x (group negation on the quotient)
    std::size_t negate(std::size_t i) const {
        std::vector<long> d = digits(i);
        for (auto& n : d) n = (axis - n) % axis;
        return index(d);
    }

    /// cell of x + shift, shift given per axis in grid numerators
    std::size_t translate(std::size_t i, const std::vector<long>& shift) const {
        std::vector<long> d = digits(i);
        for (int a = 0; a < N; ++a) {
            long s = shift[static_cast<std::size_t>(a)] % axis;
            if (s < 0) s += axis;
            d[static_cast<std::size_t>(a)] = (d[static_cast<std::size_t>(a)] + s) % axis;
        }
        return index(d);
    }

    /// log_p ||x||_p of the representative of cell i; the zero cell returns
    /// norm_exponent_zero (its representative is 0).
    static constexpr int norm_exponent_zero = std::numeric_limits<int>::min();
    int norm_exponent(std::size_t i) const {
        int best = norm_exponent_zero;
        for (int a = 0; a < N; ++a) {
            const long n = static_cast<long>(i % static_cast<std::size_t>(axis));
            i /= static_cast<std::size_t>(axis);
            if (n == 0) continue;
            long m = n;
            int v = 0;
            while (m % p == 0) {
                m /= p;
                ++v;
            }
            best = std::max(best, K - v);
        }
        return best;  // in [-K+1, K] for non-zero cells
    }
};

/// Complex-valued step function on the lattice window.
class LatticeField {
  public:
    LatticeField() = default;
    explicit LatticeField(const LatticeGeometry& g, cd fill = {0.0, 0.0})
        : geo_(g), v_(g.points, fill) {}
    LatticeField(const LatticeGeometry& g, std::vector<cd> values)
        : geo_(g), v_(std::move(values)) {
        if (v_.size() != geo_.points) throw std::invalid_argument("LatticeField: size mismatch");
    }

    const LatticeGeometry& geometry() const { return geo_; }
    std::size_t size() const { return v_.size(); }
    cd& operator[](std::size_t i) { return v_[i]; }
    const cd& operator[](std::size_t i) const { return v_[i]; }
    std::vector<cd>& values() { return v_; }
    const std::vector<cd>& values() const { return v_; }

  private:
    LatticeGeometry geo_;
    std::vector<cd> v_;
};

inline void check_same_geometry(const LatticeField& f, const LatticeField& g) {
    if (!(f.geometry() == g.geometry()))
        throw std::invalid_argument("lattice fields live on different geometries");
}

/// bilinear pairing  sum_x f(x) g(x) dx  (cell volume weighted)
inline cd pair0(const LatticeField& f, const LatticeField& g) {
    check_same_geometry(f, g);
    cd s{0.0, 0.0};
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * g[i];
    return s * f.geometry().cell_volume;
}

/// sesquilinear L2 inner product  <f,g> = int conj(f) g  (linear in g)
inline cd inner0(const LatticeField& f, const LatticeField& g) {
    check_same_geometry(f, g);
    cd s{0.0, 0.0};
    for (std::size_t i = 0; i < f.size(); ++i) s += std::conj(f[i]) * g[i];
    return s * f.geometry().cell_volume;
}

inline double norm0(const LatticeField& f) { return std::sqrt(std::abs(inner0(f, f).real())); }

namespace detail {

/**
 * Length p^{2K} cyclic transform with kernel exp(+2 pi i jk / L); the
 * inverse uses the conjugate table.  Recursive radix-p Cooley–Tukey:
 * decimation over residues j mod p, each of the p subsequences transformed
 * at stride p, then one twiddled combine pass per level.
 */
class CyclicPlan {
  public:
    CyclicPlan(long p, int levels) : p_(p), levels_(levels) {
        L_ = 1;
        for (int t = 0; t < levels_; ++t) L_ *= static_cast<std::size_t>(p_);
        fwd_.resize(L_);
        inv_.resize(L_);
        const double w = 6.283185307179586476925286766559 / static_cast<double>(L_);
        for (std::size_t t = 0; t < L_; ++t) {
            fwd_[t] = {std::cos(w * static_cast<double>(t)), std::sin(w * static_cast<double>(t))};
            inv_[t] = std::conj(fwd_[t]);
        }
    }

    std::size_t length() const { return L_; }

    /// Unnormalized transform of a contiguous length-L vector.
    void transform(const cd* in, cd* out, bool inverse) const {
        rec(in, 1, out, L_, 1, inverse ? inv_.data() : fwd_.data());
    }

  private:
    void rec(const cd* in, std::size_t in_stride, cd* out, std::size_t n,
             std::size_t w_step, const cd* roots) const {
        if (n == 1) {
            out[0] = in[0];
            return;
        }
        const std::size_t m = n / static_cast<std::size_t>(p_);
        for (long r = 0; r < p_; ++r)
            rec(in + static_cast<std::size_t>(r) * in_stride, in_stride * static_cast<std::size_t>(p_),
                out + static_cast<std::size_t>(r) * m, m, w_step * static_cast<std::size_t>(p_), roots);
        std::array<cd, 8> sub{};  // p <= 7 in practice
        for (std::size_t k = 0; k < m; ++k) {
            for (long r = 0; r < p_; ++r) sub[static_cast<std::size_t>(r)] = out[static_cast<std::size_t>(r) * m + k];
            for (long u = 0; u < p_; ++u) {
                const std::size_t idx = k + static_cast<std::size_t>(u) * m;
                const std::size_t step = (idx * w_step) % L_;
                cd acc{0.0, 0.0};
                std::size_t wr = 0;
                for (long r = 0; r < p_; ++r) {
                    acc += roots[wr] * sub[static_cast<std::size_t>(r)];
                    wr += step;
                    if (wr >= L_) wr -= L_;
                }
                out[idx] = acc;
            }
        }
    }

    long p_;
    int levels_;
    std::size_t L_;
    std::vector<cd> fwd_, inv_;
};

/// Process-wide plan cache (plans are immutable).
inline const CyclicPlan& plan_for(long p, int levels) {
    static std::map<std::pair<long, int>, std::unique_ptr<CyclicPlan>> cache;
    static std::mutex mu;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[{p, levels}];
    if (!slot) slot = std::make_unique<CyclicPlan>(p, levels);
    return *slot;
}

inline void axis_pass(LatticeField& f, bool inverse) {
    const auto& g = f.geometry();
    const auto& plan = plan_for(g.p, 2 * g.K);
    const std::size_t L = static_cast<std::size_t>(g.axis);
    std::vector<cd> in(L), out(L);
    std::size_t stride = 1;
    for (int a = 0; a < g.N; ++a) {
        const std::size_t block = stride * L;
        for (std::size_t base = 0; base < g.points; base += block) {
            for (std::size_t off = 0; off < stride; ++off) {
                cd* lane = f.values().data() + base + off;
                for (std::size_t t = 0; t < L; ++t) in[t] = lane[t * stride];
                plan.transform(in.data(), out.data(), inverse);
                for (std::size_t t = 0; t < L; ++t) lane[t * stride] = out[t];
            }
        }
        stride *= L;
    }
}

}  // namespace detail

/// F f(xi) = p^{-KN} sum_x chi_p(xi . x) f(x)   (fast path)
inline LatticeField dft(const LatticeField& f) {
    LatticeField r = f;
    detail::axis_pass(r, /*inverse=*/false);
    for (auto& z : r.values()) z *= f.geometry().cell_volume;
    return r;
}

/// inverse transform: conjugate kernel, same prefactor; idft(dft(f)) = f
inline LatticeField idft(const LatticeField& f) {
    LatticeField r = f;
    detail::axis_pass(r, /*inverse=*/true);
    for (auto& z : r.values()) z *= f.geometry().cell_volume;
    return r;
}

/// Reference O(M^2) transform straight from the definition; the fast path
/// must agree with this to near machine precision.
inline LatticeField dft_naive(const LatticeField& f, bool inverse = false) {
    const auto& g = f.geometry();
    const long L = g.axis;
    std::vector<cd> roots(static_cast<std::size_t>(L));
    const double w = 6.283185307179586476925286766559 / static_cast<double>(L);
    for (long t = 0; t < L; ++t)
        roots[static_cast<std::size_t>(t)] = {std::cos(w * static_cast<double>(t)),
                                              std::sin(w * static_cast<double>(t))};
    LatticeField r(g);
    std::vector<std::vector<long>> digs(g.points);
    for (std::size_t i = 0; i < g.points; ++i) digs[i] = g.digits(i);
    for (std::size_t xi = 0; xi < g.points; ++xi) {
        cd acc{0.0, 0.0};
        for (std::size_t x = 0; x < g.points; ++x) {
            std::int64_t phase = 0;
            for (int a = 0; a < g.N; ++a)
                phase += digs[xi][static_cast<std::size_t>(a)] * digs[x][static_cast<std::size_t>(a)] % L;
            std::size_t t = static_cast<std::size_t>(phase % L);
            if (inverse && t != 0) t = static_cast<std::size_t>(L) - t;
            acc += roots[t] * f[x];
        }
        r[xi] = acc * g.cell_volume;
    }
    return r;
}

/// Continuum convolution (f*g)(x) = int f(x-y) g(y) dy, exact on the window.
inline LatticeField convolve(const LatticeField& f, const LatticeField& g) {
    check_same_geometry(f, g);
    LatticeField F = dft(f), G = dft(g);
    for (std::size_t i = 0; i < F.size(); ++i) F[i] *= G[i];
    return idft(F);
}

/// [xi]_p = max(1, ||xi||_p) as an exponent: max(0, norm_exponent)
inline double bracket_weight(const LatticeGeometry& g, std::size_t i, int l) {
    const int e = g.norm_exponent(i);
    const int ep = (e == LatticeGeometry::norm_exponent_zero) ? 0 : std::max(0, e);
    return dpow(g.p, ep * l);
}

/// Sobolev pairing <f,g>_l = int [xi]_p^l conj(F f) F g d xi  (exact on the lattice)
inline cd sobolev_inner(const LatticeField& f, const LatticeField& g, int l) {
    check_same_geometry(f, g);
    LatticeField F = dft(f), G = dft(g);
    cd s{0.0, 0.0};
    for (std::size_t i = 0; i < F.size(); ++i)
        s += bracket_weight(f.geometry(), i, l) * std::conj(F[i]) * G[i];
    return s * f.geometry().cell_volume;
}

inline double sobolev_norm(const LatticeField& f, int l) {
    return std::sqrt(std::abs(sobolev_inner(f, f, l).real()));
}

/// indicator of the ball B_r^N intersected with the window (1 inside, 0 out)
inline LatticeField ball_indicator(const LatticeGeometry& g, int r) {
    LatticeField f(g);
    for (std::size_t i = 0; i < g.points; ++i) {
        const int e = g.norm_exponent(i);
        if (e == LatticeGeometry::norm_exponent_zero || e <= r) f[i] = 1.0;
    }
    return f;
}

/// normalized point mass at cell c: value 1/vol so that (delta_c, f)_0 = f(c)
inline LatticeField delta_field(const LatticeGeometry& g, std::size_t c) {
    LatticeField f(g);
    f[c] = 1.0 / g.cell_volume;
    return f;
}

/// translate: (T_v f)(x) = f(x - v), v given per axis in grid numerators
inline LatticeField translate(const LatticeField& f, const std::vector<long>& v) {
    const auto& g = f.geometry();
    LatticeField r(g);
    for (std::size_t i = 0; i < g.points; ++i) r[g.translate(i, v)] = f[i];
    return r;
}

/// reflect: f(-x)
inline LatticeField reflect(const LatticeField& f) {
    const auto& g = f.geometry();
    LatticeField r(g);
    for (std::size_t i = 0; i < g.points; ++i) r[g.negate(i)] = f[i];
    return r;
}

/// Largest sphere exponent occupied by non-zero cells (support radius
/// log_p); returns geometry-K lower bound -K for a field supported only on
/// the center cell, and norm_exponent_zero for the zero field.
inline int support_exponent(const LatticeField& f, double floor = 0.0) {
    const auto& g = f.geometry();
    int best = LatticeGeometry::norm_exponent_zero;
    for (std::size_t i = 0; i < g.points; ++i) {
        if (std::abs(f[i]) <= floor) continue;
        const int e = g.norm_exponent(i);
        best = std::max(best, e == LatticeGeometry::norm_exponent_zero ? -g.K : e);
    }
    return best;
}

/**
 * The quotient group is exact under translation and convolution, so the
 * only "aliasing" question is whether a translated support stays inside
 * the window: a field supported in B_r may be translated by any v with
 * ||v||_p <= p^t, t = K, and the support stays in B_max(r,K) = B_K.  The
 * helper reports the largest separation exponent usable for cluster
 * ladders: translations up to p^K keep supports inside the window.
 */
inline int max_separation_exponent(const LatticeGeometry& g, int support_r) {
    if (support_r > g.K) throw std::invalid_argument("support exceeds window");
    return g.K;
}

}  // namespace qpfield
