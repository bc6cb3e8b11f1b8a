#pragma once

/**
 * Infinitely divisible noise on the lattice window.
 *
 * A LevySpec (drift, Gaussian weight, finite atomic jump measure) defines the
 * exponent
 *
 *   F(t) = i a t - sigma^2 t^2 / 2 + sum_k m_k (e^{i s_k t} - 1 - i s_k t/(1+s_k^2)),
 *
 * the unique-per-law Levy-Khinchine form.  Each lattice cell carries an
 * independent infinitely divisible variable X_c with characteristic function
 * exp(vol * F(t)); the field value is W_c = X_c / vol, so pairings
 * <W, f> = sum_c vol W_c f(c) have characteristic function exp(sum vol F(f(c))).
 *
 * An InteractionH is a polynomial H(z) = sum_k H_k z^k / k! (no constant
 * term); it corresponds to the candidate exponent F(t) = -H(it) - t^2/2,
 * whose cumulants are c_1 = -H_1, c_2 = 1 - H_2, c_n = -H_n for n >= 3.
 * bochner_validate screens candidate exponents: a polynomial exponent of
 * degree > 2 can never be infinitely divisible, and otherwise the matrix
 * [exp F(t_i - t_j)] over a grid must be positive semidefinite.
 */

#include <complex>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "qpfield/green.hpp"
#include "qpfield/lattice.hpp"
#include "qpfield/rng.hpp"

namespace qpfield {

// ---------------------------------------------------------------------------
// Levy exponents

struct LevyAtom {
    double s = 0.0;     // jump location, nonzero
    double mass = 0.0;  // atom mass, positive
};

struct LevySpec {
    double a = 0.0;      // drift
    double sigma = 0.0;  // Gaussian weight, >= 0
    std::vector<LevyAtom> atoms;

    void validate() const {
        if (sigma < 0.0 || !std::isfinite(sigma) || !std::isfinite(a))
            throw std::invalid_argument("levy spec: need finite drift and sigma >= 0");
        for (const auto& at : atoms)
            if (at.s == 0.0 || at.mass <= 0.0 || !std::isfinite(at.s) || !std::isfinite(at.mass))
                throw std::invalid_argument("levy spec: atoms need s != 0 and mass > 0");
    }
};

inline std::complex<double> levy_eval(const LevySpec& spec, double t) {
    const std::complex<double> I(0.0, 1.0);
    std::complex<double> F = I * spec.a * t - 0.5 * spec.sigma * spec.sigma * t * t;
    for (const auto& at : spec.atoms) {
        F += at.mass * (std::exp(I * at.s * t) - 1.0 - I * at.s * t / (1.0 + at.s * at.s));
    }
    return F;
}

/// cumulants c_1..c_n of the law with exponent F: F(t) = sum c_n (it)^n / n!
inline std::vector<double> levy_cumulants(const LevySpec& spec, int n_max) {
    if (n_max < 1) throw std::invalid_argument("levy_cumulants: need n_max >= 1");
    std::vector<double> c(static_cast<std::size_t>(n_max), 0.0);
    c[0] = spec.a;
    for (const auto& at : spec.atoms)
        c[0] += at.mass * at.s * at.s * at.s / (1.0 + at.s * at.s);
    if (n_max >= 2) {
        c[1] = spec.sigma * spec.sigma;
        for (const auto& at : spec.atoms) c[1] += at.mass * at.s * at.s;
    }
    for (int n = 3; n <= n_max; ++n) {
        double v = 0.0;
        for (const auto& at : spec.atoms) v += at.mass * std::pow(at.s, n);
        c[static_cast<std::size_t>(n - 1)] = v;
    }
    return c;
}

// ---------------------------------------------------------------------------
// Interactions H and candidate exponents

struct InteractionH {
    /// H_1 .. H_{coeffs.size()}, factorial convention H(z) = sum H_k z^k / k!
    std::vector<std::complex<double>> coeffs;
    double radius = 1.0;  // holomorphy radius the coefficients are trusted on

    int degree() const {
        for (int k = static_cast<int>(coeffs.size()); k >= 1; --k)
            if (coeffs[static_cast<std::size_t>(k - 1)] != std::complex<double>(0.0, 0.0)) return k;
        return 0;
    }

    std::complex<double> eval(std::complex<double> z) const {
        std::complex<double> acc(0.0, 0.0);
        double fact = 1.0;
        std::complex<double> zk(1.0, 0.0);
        for (std::size_t k = 1; k <= coeffs.size(); ++k) {
            fact *= static_cast<double>(k);
            zk *= z;
            acc += coeffs[k - 1] * zk / fact;
        }
        return acc;
    }
};

struct CandidateExponent {
    std::function<std::complex<double>(double)> eval;
    bool polynomial = false;  // true when eval is a polynomial in t
    int degree = 0;           // degree of that polynomial (valid when polynomial)
};

inline CandidateExponent exponent_from_levy(const LevySpec& spec) {
    spec.validate();
    CandidateExponent F;
    F.eval = [spec](double t) { return levy_eval(spec, t); };
    F.polynomial = spec.atoms.empty();
    F.degree = spec.atoms.empty() ? (spec.sigma > 0.0 ? 2 : (spec.a != 0.0 ? 1 : 0)) : 0;
    return F;
}

/// candidate exponent F(t) = -H(it) - t^2/2 of the interaction H
inline CandidateExponent h_to_levy(const InteractionH& h) {
    CandidateExponent F;
    F.eval = [h](double t) {
        const std::complex<double> it(0.0, t);
        return -h.eval(it) - 0.5 * t * t;
    };
    F.polynomial = true;
    F.degree = std::max(2, h.degree());
    return F;
}

/// cumulants of the candidate exponent of H: c_1 = -H_1, c_2 = 1 - H_2,
/// c_n = -H_n for n >= 3
inline std::vector<std::complex<double>> h_cumulants(const InteractionH& h, int n_max) {
    std::vector<std::complex<double>> c(static_cast<std::size_t>(n_max), 0.0);
    for (int n = 1; n <= n_max; ++n) {
        const std::complex<double> Hn = (n <= static_cast<int>(h.coeffs.size()))
                                            ? h.coeffs[static_cast<std::size_t>(n - 1)]
                                            : std::complex<double>(0.0, 0.0);
        c[static_cast<std::size_t>(n - 1)] = -Hn;
    }
    if (n_max >= 2) c[1] += 1.0;
    return c;
}

/// polynomial interaction whose candidate exponent reproduces the cumulants
/// of the given noise up to order n_max (series inversion of the bridge)
inline InteractionH h_from_levy(const LevySpec& spec, int n_max) {
    const auto c = levy_cumulants(spec, n_max);
    InteractionH h;
    h.coeffs.assign(static_cast<std::size_t>(n_max), std::complex<double>(0.0, 0.0));
    for (int n = 1; n <= n_max; ++n) h.coeffs[static_cast<std::size_t>(n - 1)] = -c[static_cast<std::size_t>(n - 1)];
    if (n_max >= 2) h.coeffs[1] += 1.0;
    return h;
}

// ---------------------------------------------------------------------------
// Bochner screening

struct BochnerReport {
    bool rejected = false;
    double min_eigenvalue = 0.0;  // of [exp F(t_i - t_j)] (when computed)
    bool eigen_checked = false;
    std::string detail;
};

inline std::vector<double> default_bochner_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 20; ++i) g.push_back(-5.0 + 0.5 * i);
    return g;
}

inline BochnerReport bochner_validate(const CandidateExponent& F,
                                      const std::vector<double>& grid, double tol) {
    BochnerReport rep;
    if (grid.size() < 2) throw std::invalid_argument("bochner_validate: need a grid");
    if (F.polynomial && F.degree > 2) {
        rep.rejected = true;
        rep.detail = "polynomial exponent of degree " + std::to_string(F.degree) +
                     " > 2 cannot be infinitely divisible";
        return rep;
    }
    const int n = static_cast<int>(grid.size());
    Eigen::MatrixXcd A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            A(i, j) = std::exp(F.eval(grid[static_cast<std::size_t>(i)] -
                                      grid[static_cast<std::size_t>(j)]));
    // symmetrize away rounding; a genuine exponent has F(-t) = conj F(t)
    Eigen::MatrixXcd H = 0.5 * (A + A.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
    rep.min_eigenvalue = es.eigenvalues().minCoeff();
    rep.eigen_checked = true;
    if (rep.min_eigenvalue < -tol) {
        rep.rejected = true;
        rep.detail = "grid Gram matrix has eigenvalue " + std::to_string(rep.min_eigenvalue);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Samplers

enum class SampleKind { GaussianWhite, LevyWhite, Convolved };

struct FieldSample {
    LatticeGeometry geo;
    LatticeField values;
    SampleKind kind = SampleKind::GaussianWhite;

    FieldSample(const LatticeGeometry& g, SampleKind k)
        : geo(g), values(g), kind(k) {}
};

/// <W, f> as a cell-measure-weighted sum (bilinear, no conjugation)
inline cd pair_field(const FieldSample& w, const LatticeField& f) {
    return pair0(w.values, f);
}

/// independent N(0, 1/vol) per cell: Var <W, f> = ||f||_0^2 exactly
inline FieldSample sample_gaussian_white(const LatticeGeometry& g, std::uint64_t seed,
                                         std::uint64_t replica = 0) {
    FieldSample w(g, SampleKind::GaussianWhite);
    const double scale = 1.0 / std::sqrt(g.cell_volume);
    for (std::size_t c = 0; c < g.points; ++c) {
        CounterRng rng(seed, replica, c);
        w.values[c] = scale * rng.next_gaussian();
    }
    return w;
}

/// independent infinitely divisible X_c per cell with CF exp(vol F),
/// returned as the field W_c = X_c / vol
inline FieldSample sample_levy_white(const LevySpec& spec, const LatticeGeometry& g,
                                     std::uint64_t seed, std::uint64_t replica = 0) {
    spec.validate();
    FieldSample w(g, SampleKind::LevyWhite);
    const double vol = g.cell_volume;
    for (std::size_t c = 0; c < g.points; ++c) {
        CounterRng rng(seed, replica, c);
        double x = spec.a * vol;
        if (spec.sigma > 0.0) x += spec.sigma * std::sqrt(vol) * rng.next_gaussian();
        for (const auto& at : spec.atoms) {
            const long hits = rng.next_poisson(vol * at.mass);
            x += at.s * static_cast<double>(hits);
            x -= vol * at.mass * at.s / (1.0 + at.s * at.s);  // compensator drift
        }
        w.values[c] = x / vol;
    }
    return w;
}

/// smoothed field G * W with W the generalized white noise of the given triple
inline FieldSample sample_convolved(const LevySpec& spec, const GreenFunction& green,
                                    std::uint64_t seed, std::uint64_t replica = 0) {
    FieldSample w = sample_levy_white(spec, green.geo, seed, replica);
    FieldSample out(green.geo, SampleKind::Convolved);
    out.values = green_apply(green, w.values);
    return out;
}

// ---------------------------------------------------------------------------
// JSON wire formats

inline LevySpec levy_from_json(const nlohmann::json& j) {
    LevySpec spec;
    spec.a = j.value("a", 0.0);
    spec.sigma = j.value("sigma", 0.0);
    if (j.contains("atoms")) {
        for (const auto& at : j.at("atoms"))
            spec.atoms.push_back({at.at("s").get<double>(), at.at("mass").get<double>()});
    }
    spec.validate();
    return spec;
}

inline nlohmann::json levy_to_json(const LevySpec& spec) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& at : spec.atoms) atoms.push_back({{"s", at.s}, {"mass", at.mass}});
    return {{"a", spec.a}, {"sigma", spec.sigma}, {"atoms", atoms}};
}

inline InteractionH h_from_json(const nlohmann::json& j) {
    if (j.value("convention", "factorial") != std::string("factorial"))
        throw std::invalid_argument("interaction JSON: only the factorial convention is supported");
    InteractionH h;
    for (const auto& c : j.at("coeffs")) {
        if (c.is_array()) {
            if (c.size() != 2) throw std::invalid_argument("interaction JSON: complex coefficient needs [re, im]");
            h.coeffs.emplace_back(c[0].get<double>(), c[1].get<double>());
        } else {
            h.coeffs.emplace_back(c.get<double>(), 0.0);
        }
    }
    h.radius = j.value("radius", 1.0);
    return h;
}

inline nlohmann::json h_to_json(const InteractionH& h) {
    nlohmann::json coeffs = nlohmann::json::array();
    for (const auto& c : h.coeffs) {
        if (c.imag() == 0.0)
            coeffs.push_back(c.real());
        else
            coeffs.push_back({c.real(), c.imag()});
    }
    return {{"coeffs", coeffs}, {"convention", "factorial"}, {"radius", h.radius}};
}

}  // namespace qpfield
