#pragma once

/**
 * Exact p-adic scalar and vector arithmetic.
 *
 * A p-adic rational is kept as n * p^{-K} with an arbitrary-precision
 * integer numerator n and a non-negative scale K.  This covers every number
 * the lattice machinery touches (grid points, frequencies, dot products)
 * exactly; valuations, norms, fractional parts and additive characters are
 * then computed without rounding until the final complex exponential.
 */

#include <boost/multiprecision/cpp_int.hpp>

#include <complex>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace qpfield {

using BigInt = boost::multiprecision::cpp_int;

/// base^exp for non-negative integer exponents.
inline BigInt ipow(long base, int exp) {
    if (exp < 0) throw std::invalid_argument("ipow: negative exponent");
    BigInt r = 1, b = base;
    while (exp > 0) {
        if (exp & 1) r *= b;
        b *= b;
        exp >>= 1;
    }
    return r;
}

/// v_p(n) for n != 0: the exponent of the largest power of p dividing n.
inline int valuation(BigInt n, long p) {
    if (n == 0) throw std::invalid_argument("valuation: zero has infinite valuation");
    if (n < 0) n = -n;
    int v = 0;
    while (n % p == 0) {
        n /= p;
        ++v;
    }
    return v;
}

/// p^e as a double (exact for e >= 0, one rounding for e < 0).
inline double dpow(long p, int e) {
    if (e >= 0) return static_cast<double>(ipow(p, e));
    return 1.0 / static_cast<double>(ipow(p, -e));
}

class PadicRational {
  public:
    PadicRational() = default;
    PadicRational(long p, BigInt num, int scale = 0)
        : p_(p), scale_(scale), num_(std::move(num)) {
        if (p_ < 2) throw std::invalid_argument("PadicRational: prime must be >= 2");
        if (scale_ < 0) {  // fold negative scales into the numerator
            num_ *= ipow(p_, -scale_);
            scale_ = 0;
        }
        canonicalize();
    }

    long prime() const { return p_; }
    const BigInt& numerator() const { return num_; }
    int scale() const { return scale_; }
    bool is_zero() const { return num_ == 0; }

    /// ord(x) = v_p(n) - K.  Precondition: x != 0.
    long order() const {
        if (is_zero()) throw std::domain_error("order of zero is +infinity");
        // canonical form: scale_ == 0 or p does not divide num_
        return (scale_ > 0) ? -static_cast<long>(scale_) : valuation(num_, p_);
    }

    /// |x|_p = p^{-ord(x)}; |0|_p = 0.
    double norm() const { return is_zero() ? 0.0 : dpow(p_, static_cast<int>(-order())); }

    /// Exact fractional part {x}_p = sum of the negative-power digits,
    /// returned as num/den with den = p^{-ord} and num in [0, den).
    struct Fractional {
        BigInt num;
        BigInt den;
    };
    Fractional fractional_part() const {
        if (is_zero() || order() >= 0) return {0, 1};
        const int m = static_cast<int>(-order());  // = scale_ in canonical form
        const BigInt den = ipow(p_, m);
        BigInt u = num_ % den;
        if (u < 0) u += den;
        return {u, den};
    }

    /// chi_p(x) = exp(2 pi i {x}_p).
    std::complex<double> character() const {
        const auto f = fractional_part();
        if (f.num == 0) return {1.0, 0.0};
        const double theta =
            6.283185307179586476925286766559 *
            (static_cast<double>(f.num) / static_cast<double>(f.den));
        return {std::cos(theta), std::sin(theta)};
    }

    friend PadicRational operator+(const PadicRational& a, const PadicRational& b) {
        a.check_same(b);
        const int s = std::max(a.scale_, b.scale_);
        return {a.p_, a.num_ * ipow(a.p_, s - a.scale_) + b.num_ * ipow(a.p_, s - b.scale_), s};
    }
    friend PadicRational operator-(const PadicRational& a, const PadicRational& b) {
        return a + (-b);
    }
    friend PadicRational operator*(const PadicRational& a, const PadicRational& b) {
        a.check_same(b);
        return {a.p_, a.num_ * b.num_, a.scale_ + b.scale_};
    }
    PadicRational operator-() const { return {p_, -num_, scale_}; }
    friend bool operator==(const PadicRational& a, const PadicRational& b) {
        return a.p_ == b.p_ && a.scale_ == b.scale_ && a.num_ == b.num_;
    }

  private:
    void canonicalize() {
        if (num_ == 0) {
            scale_ = 0;
            return;
        }
        while (scale_ > 0 && num_ % p_ == 0) {
            num_ /= p_;
            --scale_;
        }
    }
    void check_same(const PadicRational& o) const {
        if (p_ != o.p_) throw std::invalid_argument("mixed primes in p-adic arithmetic");
    }

    long p_ = 2;
    int scale_ = 0;
    BigInt num_ = 0;
};

/// Element of Q_p^N with the sup (ultrametric) norm.
class PadicVector {
  public:
    PadicVector(long p, std::vector<PadicRational> coords)
        : p_(p), c_(std::move(coords)) {
        for (const auto& x : c_)
            if (x.prime() != p_) throw std::invalid_argument("PadicVector: mixed primes");
    }
    static PadicVector zero(long p, int n) {
        return {p, std::vector<PadicRational>(static_cast<std::size_t>(n), PadicRational(p, 0))};
    }

    long prime() const { return p_; }
    int dim() const { return static_cast<int>(c_.size()); }
    const PadicRational& operator[](int i) const { return c_[static_cast<std::size_t>(i)]; }
    PadicRational& operator[](int i) { return c_[static_cast<std::size_t>(i)]; }

    bool is_zero() const {
        for (const auto& x : c_)
            if (!x.is_zero()) return false;
        return true;
    }

    /// ord(x) = min_i ord(x_i); precondition x != 0.
    long order() const {
        if (is_zero()) throw std::domain_error("order of zero vector");
        long m = std::numeric_limits<long>::max();
        for (const auto& x : c_)
            if (!x.is_zero()) m = std::min(m, x.order());
        return m;
    }

    /// ||x||_p = max_i |x_i|_p = p^{-ord(x)}.
    double norm() const { return is_zero() ? 0.0 : dpow(p_, static_cast<int>(-order())); }

    /// Bilinear dot product sum_i x_i y_i (exact).
    friend PadicRational dot(const PadicVector& a, const PadicVector& b) {
        if (a.p_ != b.p_ || a.dim() != b.dim())
            throw std::invalid_argument("dot: incompatible vectors");
        PadicRational s(a.p_, 0);
        for (int i = 0; i < a.dim(); ++i) s = s + a[i] * b[i];
        return s;
    }

  private:
    long p_;
    std::vector<PadicRational> c_;
};

/// chi_p(xi . x), the additive character paired with a dot product.
inline std::complex<double> character(const PadicVector& xi, const PadicVector& x) {
    return dot(xi, x).character();
}

/// Haar volume of the ball B_r^N = {||x||_p <= p^r}: p^{rN}.  vol(Z_p^N) = 1.
inline double ball_volume(long p, int N, int r) { return dpow(p, r * N); }

/// Haar volume of the sphere S_r^N = {||x||_p = p^r}: p^{rN} (1 - p^{-N}).
inline double sphere_volume(long p, int N, int r) {
    return dpow(p, r * N) * (1.0 - dpow(p, -N));
}

/**
 * Closed form of the oscillatory sphere integral
 *   I_j(x) = \int_{S_j^N} chi_p(xi . x) d^N xi .
 * Three regimes, by ||x||_p relative to p^{-j}:
 *   ||x||_p <= p^{-j}    ->  vol(S_j^N)          (character is 1 on the sphere)
 *   ||x||_p  = p^{-j+1}  ->  -p^{(j-1)N}         (one ball of cancellation survives)
 *   ||x||_p >= p^{-j+2}  ->  0                   (full cancellation)
 */
inline double sphere_character_integral(long p, int N, int j, const PadicVector& x) {
    if (x.is_zero()) return sphere_volume(p, N, j);
    const long e = -x.order();  // ||x||_p = p^e
    if (e <= -j) return sphere_volume(p, N, j);
    if (e == -j + 1) return -dpow(p, (j - 1) * N);
    return 0.0;
}

}  // namespace qpfield
