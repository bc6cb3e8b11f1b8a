// Correlation functions of smoothed noise fields: truncated n-point values
// in closed form, set-partition assembly of full moments, Monte Carlo
// estimation with jackknife errors, decay-of-correlations ladders, and
// lattice symmetry checks (translations, certified linear maps, argument
// permutations).
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qpfield/fit.hpp"
#include "qpfield/wick.hpp"

namespace qpfield {

// ---------------------------------------------------------------------------
// Set partitions

inline std::uint64_t bell_number(int n) {
    if (n < 0 || n > 25) throw std::invalid_argument("bell_number: order out of range");
    // Bell triangle
    std::vector<std::uint64_t> row{1};
    for (int i = 1; i <= n; ++i) {
        std::vector<std::uint64_t> next;
        next.reserve(row.size() + 1);
        next.push_back(row.back());
        for (std::size_t j = 0; j < row.size(); ++j) next.push_back(next[j] + row[j]);
        row = std::move(next);
    }
    return row.front();
}

/// all partitions of {0, .., n-1} into blocks of sorted indices, enumerated
/// by restricted-growth strings
inline std::vector<std::vector<std::vector<int>>> set_partitions(int n) {
    if (n < 1 || n > 12)
        throw std::invalid_argument("set_partitions: order outside the guarded range [1,12]");
    std::vector<std::vector<std::vector<int>>> out;
    std::vector<int> label(static_cast<std::size_t>(n), 0);
    while (true) {
        const int blocks = 1 + *std::max_element(label.begin(), label.end());
        std::vector<std::vector<int>> part(static_cast<std::size_t>(blocks));
        for (int i = 0; i < n; ++i) part[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])].push_back(i);
        out.push_back(std::move(part));
        // next restricted-growth string
        int i = n - 1;
        while (i > 0) {
            int prefix_max = 0;
            for (int j = 0; j < i; ++j) prefix_max = std::max(prefix_max, label[static_cast<std::size_t>(j)]);
            if (label[static_cast<std::size_t>(i)] < prefix_max + 1) break;
            --i;
        }
        if (i == 0) break;
        ++label[static_cast<std::size_t>(i)];
        for (int j = i + 1; j < n; ++j) label[static_cast<std::size_t>(j)] = 0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Truncated n-point values in closed form

/// c_n * integral of prod_i (G * f_i) over the window, where the cumulant
/// coefficient c_n comes from the interaction/noise bridge (never re-derived
/// here)
inline double truncated_schwinger(const InteractionH& h, const GreenFunction& green,
                                  const std::vector<LatticeField>& fs) {
    const int n = static_cast<int>(fs.size());
    if (n < 1) throw std::invalid_argument("truncated_schwinger: need at least one insertion");
    const cd c = h_cumulants(h, n)[static_cast<std::size_t>(n - 1)];
    if (c == cd(0.0, 0.0)) return 0.0;
    const auto& g = green.geo;
    LatticeField prod(g, cd(1.0, 0.0));
    for (const auto& f : fs) {
        if (!(f.geometry() == g))
            throw std::invalid_argument("truncated_schwinger: geometry mismatch");
        const auto smoothed = green_apply(green, f);
        for (std::size_t i = 0; i < g.points; ++i) prod[i] *= smoothed[i];
    }
    cd integral(0.0, 0.0);
    for (std::size_t i = 0; i < g.points; ++i) integral += prod[i];
    integral *= g.cell_volume;
    return (c * integral).real();
}

/// sum over set partitions of products of per-block values
inline double partition_expand(int n, const std::function<double(const std::vector<int>&)>& block_value) {
    double total = 0.0;
    for (const auto& part : set_partitions(n)) {
        double prod = 1.0;
        for (const auto& block : part) prod *= block_value(block);
        total += prod;
    }
    return total;
}

/// full n-point value of the interacting smoothed field, assembled from the
/// truncated values over set partitions
inline double schwinger_analytic(const InteractionH& h, const GreenFunction& green,
                                 const std::vector<LatticeField>& fs) {
    const int n = static_cast<int>(fs.size());
    if (n == 0) return 1.0;
    return partition_expand(n, [&](const std::vector<int>& block) {
        std::vector<LatticeField> sub;
        sub.reserve(block.size());
        for (int i : block) sub.push_back(fs[static_cast<std::size_t>(i)]);
        return truncated_schwinger(h, green, sub);
    });
}

// ---------------------------------------------------------------------------
// Monte Carlo moments

struct McEstimate {
    double value = 0.0;
    double stderr_jackknife = 0.0;
    int n_samples = 0;
};

/// sample mean of prod_i <W, f_i> over smoothed noise samples, with
/// leave-one-out (jackknife) standard error
inline McEstimate mc_schwinger(const LevySpec& spec, const GreenFunction& green,
                               const std::vector<LatticeField>& fs, int n_samples,
                               std::uint64_t seed) {
    if (n_samples < 2) throw std::invalid_argument("mc_schwinger: need at least two samples");
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(n_samples));
    for (int r = 0; r < n_samples; ++r) {
        const auto w = sample_convolved(spec, green, seed, static_cast<std::uint64_t>(r));
        double prod = 1.0;
        for (const auto& f : fs) prod *= pair_field(w, f).real();
        xs.push_back(prod);
    }
    McEstimate est;
    est.n_samples = n_samples;
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n_samples;
    est.value = mean;
    // jackknife over leave-one-out means
    const double n = static_cast<double>(n_samples);
    double acc = 0.0;
    for (double x : xs) {
        const double loo = (mean * n - x) / (n - 1.0);
        acc += (loo - mean) * (loo - mean);
    }
    est.stderr_jackknife = std::sqrt((n - 1.0) / n * acc);
    return est;
}

// ---------------------------------------------------------------------------
// Lattice symmetries

/// affine lattice map x -> M x + shift on grid numerators; an empty matrix
/// means the identity.  Entries act modulo the window axis, so any integer
/// matrix whose determinant is a p-adic unit induces a bijection of cells.
struct EuclideanTransform {
    std::vector<long> shift;                // per-axis grid numerators
    std::vector<std::vector<long>> matrix;  // N x N, row-major; empty = identity
    bool preserves_q = false;
    bool preserves_l = false;
    bool measure_preserving = false;

    static EuclideanTransform translation(const std::vector<long>& shift) {
        EuclideanTransform t;
        t.shift = shift;
        return t;
    }
    static EuclideanTransform linear(std::vector<std::vector<long>> m) {
        EuclideanTransform t;
        t.matrix = std::move(m);
        return t;
    }
    static EuclideanTransform point_reflection(int N) {
        EuclideanTransform t;
        t.matrix.assign(static_cast<std::size_t>(N), std::vector<long>(static_cast<std::size_t>(N), 0));
        for (int i = 0; i < N; ++i) t.matrix[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = -1;
        return t;
    }
};

namespace detail {

inline BigInt int_det(const std::vector<std::vector<BigInt>>& m) {
    const std::size_t n = m.size();
    if (n == 1) return m[0][0];
    BigInt acc = 0;
    for (std::size_t c = 0; c < n; ++c) {
        std::vector<std::vector<BigInt>> minor;
        for (std::size_t r = 1; r < n; ++r) {
            std::vector<BigInt> row;
            for (std::size_t cc = 0; cc < n; ++cc)
                if (cc != c) row.push_back(m[r][cc]);
            minor.push_back(std::move(row));
        }
        const BigInt term = m[0][c] * int_det(minor);
        acc += (c % 2 == 0) ? term : -term;
    }
    return acc;
}

}  // namespace detail

/// exhaustively verifies, over every grid point at the working resolution,
/// that the linear part preserves the standard quadratic form and the given
/// symbol polynomial exactly, and that its determinant is a p-adic unit.
/// Resolutions with at least three numerators per axis make the grid large
/// enough that agreement of degree-< axis polynomials on it is an identity.
inline EuclideanTransform certify_transform(EuclideanTransform t, const LatticeGeometry& g,
                                            const EllipticPolynomial& l) {
    l.validate();
    if (l.p != g.p || l.N != g.N)
        throw std::invalid_argument("certify_transform: polynomial does not match geometry");
    const int N = g.N;
    if (!t.matrix.empty()) {
        if (static_cast<int>(t.matrix.size()) != N)
            throw std::invalid_argument("certify_transform: matrix arity mismatch");
        for (const auto& row : t.matrix)
            if (static_cast<int>(row.size()) != N)
                throw std::invalid_argument("certify_transform: matrix arity mismatch");
    }
    // determinant a unit?
    std::vector<std::vector<BigInt>> mb(static_cast<std::size_t>(N),
                                        std::vector<BigInt>(static_cast<std::size_t>(N)));
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c)
            mb[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
                t.matrix.empty() ? BigInt(r == c ? 1 : 0)
                                 : BigInt(t.matrix[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]);
    const BigInt det = detail::int_det(mb);
    t.measure_preserving = (det != 0) && (det % g.p != 0);

    // quadratic form used by the transform kernel
    EllipticPolynomial q;
    q.p = g.p;
    q.N = N;
    q.d = 2;
    for (int a = 0; a < N; ++a) {
        EllipticPolynomial::Term term;
        term.coeff = 1;
        term.exps.assign(static_cast<std::size_t>(N), 0);
        term.exps[static_cast<std::size_t>(a)] = 2;
        q.terms.push_back(term);
    }

    bool ok_q = true, ok_l = true;
    std::vector<BigInt> n(static_cast<std::size_t>(N)), img(static_cast<std::size_t>(N));
    for (std::size_t i = 0; i < g.points && (ok_q || ok_l); ++i) {
        for (int a = 0; a < N; ++a) n[static_cast<std::size_t>(a)] = BigInt(g.digit(i, a));
        for (int r = 0; r < N; ++r) {
            BigInt acc = 0;
            for (int c = 0; c < N; ++c)
                acc += mb[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] * n[static_cast<std::size_t>(c)];
            img[static_cast<std::size_t>(r)] = acc;
        }
        if (q.eval(img) != q.eval(n)) ok_q = false;
        if (l.eval(img) != l.eval(n)) ok_l = false;
    }
    t.preserves_q = ok_q;
    t.preserves_l = ok_l;
    return t;
}

/// pushforward of a field: out(M x + shift) = f(x), i.e. out = f after the
/// inverse affine substitution.  Throws when the map fails to permute cells.
inline LatticeField apply_transform(const LatticeField& f, const EuclideanTransform& t) {
    const auto& g = f.geometry();
    const int N = g.N;
    if (!t.shift.empty() && static_cast<int>(t.shift.size()) != N)
        throw std::invalid_argument("apply_transform: shift arity mismatch");
    LatticeField out(g);
    std::vector<char> hit(g.points, 0);
    std::vector<long> d(static_cast<std::size_t>(N)), img(static_cast<std::size_t>(N));
    for (std::size_t i = 0; i < g.points; ++i) {
        for (int a = 0; a < N; ++a) d[static_cast<std::size_t>(a)] = g.digit(i, a);
        for (int r = 0; r < N; ++r) {
            long acc = t.shift.empty() ? 0 : t.shift[static_cast<std::size_t>(r)];
            if (t.matrix.empty()) {
                acc += d[static_cast<std::size_t>(r)];
            } else {
                for (int c = 0; c < N; ++c) {
                    long e = t.matrix[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] % g.axis;
                    acc += e * d[static_cast<std::size_t>(c)];
                }
            }
            acc %= g.axis;
            if (acc < 0) acc += g.axis;
            img[static_cast<std::size_t>(r)] = acc;
        }
        const std::size_t j = g.index(img);
        if (hit[j]) throw std::invalid_argument("apply_transform: map is not a bijection of cells");
        hit[j] = 1;
        out[j] = f[i];
    }
    return out;
}

struct InvarianceRow {
    std::size_t transform_index = 0;
    std::size_t tuple_index = 0;
    double base = 0.0;
    double transformed = 0.0;
    double abs_diff = 0.0;
    bool pass = false;
};

struct InvarianceReport {
    std::vector<InvarianceRow> rows;
    bool all_pass = true;
};

/// compares the analytic n-point value on each tuple against the value on the
/// transformed tuple; pass threshold is 1e-10 relative to scale
inline InvarianceReport invariance_check(const InteractionH& h, const GreenFunction& green,
                                         const std::vector<EuclideanTransform>& transforms,
                                         const std::vector<std::vector<LatticeField>>& tuples,
                                         double tol = 1e-10) {
    InvarianceReport rep;
    for (std::size_t ti = 0; ti < transforms.size(); ++ti)
        for (std::size_t fi = 0; fi < tuples.size(); ++fi) {
            InvarianceRow row;
            row.transform_index = ti;
            row.tuple_index = fi;
            row.base = schwinger_analytic(h, green, tuples[fi]);
            std::vector<LatticeField> moved;
            moved.reserve(tuples[fi].size());
            for (const auto& f : tuples[fi]) moved.push_back(apply_transform(f, transforms[ti]));
            row.transformed = schwinger_analytic(h, green, moved);
            row.abs_diff = std::abs(row.base - row.transformed);
            row.pass = row.abs_diff <= tol * (1.0 + std::abs(row.base));
            rep.all_pass = rep.all_pass && row.pass;
            rep.rows.push_back(row);
        }
    return rep;
}

struct PermutationRow {
    std::vector<int> perm;
    double value = 0.0;
};

struct PermutationReport {
    double base = 0.0;
    std::vector<PermutationRow> rows;
    double max_abs_diff = 0.0;
    bool all_equal = false;
};

/// n-point values must not depend on the order of the insertions
inline PermutationReport symmetry_check(const std::function<double(const std::vector<LatticeField>&)>& value,
                                        const std::vector<LatticeField>& fs,
                                        const std::vector<std::vector<int>>& perms,
                                        double tol = 1e-12) {
    PermutationReport rep;
    rep.base = value(fs);
    for (const auto& perm : perms) {
        if (perm.size() != fs.size())
            throw std::invalid_argument("symmetry_check: permutation arity mismatch");
        std::vector<LatticeField> shuffled;
        shuffled.reserve(fs.size());
        for (int i : perm) shuffled.push_back(fs[static_cast<std::size_t>(i)]);
        PermutationRow row;
        row.perm = perm;
        row.value = value(shuffled);
        rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(row.value - rep.base));
        rep.rows.push_back(std::move(row));
    }
    rep.all_equal = rep.max_abs_diff <= tol * (1.0 + std::abs(rep.base));
    return rep;
}

// ---------------------------------------------------------------------------
// Decay of correlations

struct ClusterRow {
    int step = 0;             // separation exponent: |shift|_p = p^step
    double lambda_norm = 0.0; // p^step
    double deviation = 0.0;   // |S_{m+n}(f x T g) - S_m(f) S_n(g)|
    double truncated_value = 0.0;  // |S_{m+n,T}(f x T g)|
    bool separated = false;   // supports strictly apart (shift larger than both support balls)
};

struct ClusterReport {
    std::vector<ClusterRow> rows;
    int support = 0;         // largest support exponent across both blocks
    bool monotone = false;   // deviations decrease along separated rows
    bool truncated_vanishes = false;
    bool partial = false;    // ladder stopped early at the window edge
    std::string warning;
};

/// translates the second block to separations p, p^2, ... along an axis and
/// tabulates how fast the factorized form is approached.  The separation
/// cannot exceed the window radius p^K; requesting more steps yields a
/// partial table.
inline ClusterReport cluster_check(const InteractionH& h, const GreenFunction& green,
                                   const std::vector<LatticeField>& f_block,
                                   const std::vector<LatticeField>& g_block, int axis_dir,
                                   int max_step) {
    const auto& g = green.geo;
    if (axis_dir < 0 || axis_dir >= g.N)
        throw std::invalid_argument("cluster_check: direction outside the axes");
    if (max_step < 1) throw std::invalid_argument("cluster_check: need at least one step");
    if (f_block.empty() || g_block.empty())
        throw std::invalid_argument("cluster_check: empty block");

    int support = LatticeGeometry::norm_exponent_zero;
    for (const auto* block : {&f_block, &g_block})
        for (const auto& f : *block) support = std::max(support, support_exponent(f));

    ClusterReport rep;
    rep.support = support;
    const double sf = schwinger_analytic(h, green, f_block);
    const double sg = schwinger_analytic(h, green, g_block);

    for (int s = 1; s <= max_step; ++s) {
        if (s > g.K) {
            rep.partial = true;
            std::ostringstream os;
            os << "separation p^" << s << " exceeds the window radius p^" << g.K
               << "; ladder truncated";
            rep.warning = os.str();
            break;
        }
        // shift value p^{-s} along the chosen axis: numerator p^{K-s}
        std::vector<long> shift(static_cast<std::size_t>(g.N), 0);
        long num = 1;
        for (int t = 0; t < g.K - s; ++t) num *= g.p;
        shift[static_cast<std::size_t>(axis_dir)] = num;

        std::vector<LatticeField> joint = f_block;
        std::vector<LatticeField> moved;
        for (const auto& f : g_block) {
            moved.push_back(translate(f, shift));
            joint.push_back(moved.back());
        }
        ClusterRow row;
        row.step = s;
        row.lambda_norm = dpow(g.p, s);
        // supports in balls of radius p^support; an ultrametric shift of norm
        // p^s with s > support puts every point of one support at distance
        // exactly p^s from every point of the other
        row.separated = s > support;
        row.deviation = std::abs(schwinger_analytic(h, green, joint) - sf * sg);
        row.truncated_value = std::abs(truncated_schwinger(h, green, joint));
        rep.rows.push_back(row);
    }

    int n_separated = 0;
    for (const auto& row : rep.rows) n_separated += row.separated ? 1 : 0;
    rep.monotone = n_separated >= 2;
    const ClusterRow* prev = nullptr;
    for (const auto& row : rep.rows) {
        if (!row.separated) continue;
        if (prev && row.deviation > prev->deviation * 1.05 + 1e-18) rep.monotone = false;
        prev = &row;
    }
    rep.truncated_vanishes =
        !rep.rows.empty() &&
        rep.rows.back().truncated_value <=
            0.05 * std::max(rep.rows.front().truncated_value, 1e-300) + 1e-18;
    return rep;
}

/// least-squares slope of log deviation against step * log p over rows
/// [first, last]; used to compare ladders against power-law predictions
inline LinearFit cluster_slope(const ClusterReport& rep, int first_step, int last_step) {
    std::vector<double> x, y;
    for (const auto& row : rep.rows) {
        if (row.step < first_step || row.step > last_step) continue;
        if (row.deviation <= 0.0) continue;
        x.push_back(std::log(row.lambda_norm));
        y.push_back(std::log(row.deviation));
    }
    return linear_fit(x, y);
}

}  // namespace qpfield
