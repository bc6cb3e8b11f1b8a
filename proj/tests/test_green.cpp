#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "qpfield/green.hpp"
#include "qpfield/padic.hpp"

using namespace qpfield;

namespace {

SymbolSpec power_symbol(long p, double alpha, double m) {
    SymbolSpec s;
    s.poly = poly_power(p, 2);
    s.alpha = alpha;
    s.m = m;
    return s;
}

/// Spatial value at x = 0: full frequency sum, no character cancellation.
double window_center_value(const SymbolSpec& s, const LatticeGeometry& g,
                           const std::function<double(int)>& prof) {
    double acc = dpow(g.p, -g.K * g.N) / s.at_zero();
    const double w = 1.0 - dpow(g.p, -g.N);
    for (int j = -g.K + 1; j <= g.K; ++j) acc += w * dpow(g.p, j * g.N) / prof(j);
    return acc;
}

/// Independent evaluation of the continuum radial series: sum the closed-form
/// sphere integrals of the character directly, sphere by sphere.
double green_by_sphere_integrals(long p, int N, const std::function<double(int)>& prof,
                                 int r, int j_lo) {
    PadicVector x = PadicVector::zero(p, N);
    x[0] = PadicRational(p, 1, r);  // norm p^r
    double acc = 0.0;
    for (int j = j_lo; j <= -r + 1; ++j)
        acc += sphere_character_integral(p, N, j, x) / prof(j);
    return acc;
}

LatticeField random_field(const LatticeGeometry& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    LatticeField f(g);
    for (std::size_t i = 0; i < g.points; ++i) f[i] = {u(rng), u(rng)};
    return f;
}

}  // namespace

TEST_CASE("green spectrum is the reciprocal symbol with real even spatial values") {
    const LatticeGeometry g(3, 1, 3);
    const auto s = power_symbol(3, 1.0, 1.0);
    const auto G = green_build(s, g);
    const auto sig = symbol_field(s, g);
    REQUIRE(G.spectral.size() == g.points);
    for (std::size_t i = 0; i < g.points; ++i) {
        REQUIRE(G.spectral[i] == 1.0 / sig[i]);
        REQUIRE(G.spectral[i] > 0.0);
        REQUIRE(G.spectral[i] <= 1.0 / (s.m * s.m) + 1e-15);
    }
    CHECK(G.spectral[0] == 1.0);  // zero cell carries 1/m^2
    for (std::size_t i = 0; i < g.points; ++i) {
        CHECK(std::abs(G.spatial[i].imag()) < 1e-13);
        CHECK(G.spatial[i].real() > 0.0);
        CHECK(G.spatial[g.negate(i)].real() ==
              Catch::Approx(G.spatial[i].real()).margin(1e-14));
    }
    CHECK(G.c0 == 1.0);
    CHECK(G.c1 == 1.0);
    CHECK(std::isfinite(G.spectral_tail));
    CHECK(G.zero_cell > 0.0);
    CHECK(G.continuum_error_bound(-g.K + 1) == Catch::Approx(G.zero_cell));
    CHECK(G.continuum_error_bound(-g.K) ==
          Catch::Approx(G.zero_cell + G.spectral_tail));
}

TEST_CASE("lattice green matches the windowed radial series at every sphere") {
    for (long p : {2L, 3L}) {
        const int K = (p == 2) ? 5 : 4;
        const LatticeGeometry g(p, 1, K);
        for (double alpha : {1.0, 2.0}) {
            for (double m : {0.5, 1.0}) {
                CAPTURE(p, alpha, m);
                const auto s = power_symbol(p, alpha, m);
                const auto G = green_build(s, g);
                const auto prof = radial_profile(s, 1.0);
                const auto rows = decay_scan(G);
                REQUIRE(rows.size() == static_cast<std::size_t>(2 * K));
                for (const auto& row : rows) {
                    const double w = radial_green_series_windowed(s, g, prof, row.r);
                    CAPTURE(row.r);
                    REQUIRE(std::abs(row.mean_g - w) <= 1e-8 * std::abs(w) + 1e-14);
                }
                // center cell: the full sum, no cancellation
                const double c = window_center_value(s, g, prof);
                REQUIRE(G.spatial[0].real() == Catch::Approx(c).epsilon(1e-12));

                // the windowed model is exactly radial: constant on spheres
                for (std::size_t i = 0; i < g.points; ++i) {
                    const int e = g.norm_exponent(i);
                    if (e == LatticeGeometry::norm_exponent_zero) continue;
                    const double w = radial_green_series_windowed(s, g, prof, e);
                    REQUIRE(std::abs(G.spatial[i].real() - w) <=
                            1e-8 * std::abs(w) + 1e-14);
                    REQUIRE(G.spatial[i].real() > 0.0);
                }
            }
        }
    }
}

TEST_CASE("continuum error bound is honest and gates a tight comparison") {
    for (long p : {2L, 3L}) {
        const int K = (p == 2) ? 5 : 4;
        const LatticeGeometry g(p, 1, K);
        for (double alpha : {1.0, 2.0}) {
            for (double m : {0.5, 1.0}) {
                CAPTURE(p, alpha, m);
                const auto s = power_symbol(p, alpha, m);
                const auto G = green_build(s, g);
                const auto prof = radial_profile(s, 1.0);
                const auto rows = decay_scan(G);
                int gated = 0;
                for (const auto& row : rows) {
                    const double cont =
                        radial_green_series(p, 1, prof, row.r, m * m);
                    const double err = std::abs(row.mean_g - cont);
                    const double bound = G.continuum_error_bound(row.r);
                    CAPTURE(row.r, cont, err, bound);
                    REQUIRE(err <= bound * (1.0 + 1e-9) + 1e-13);
                    if (bound < 1e-10 * std::abs(cont)) {
                        ++gated;
                        REQUIRE(err < 1e-8 * std::abs(cont));
                    }
                }
                CAPTURE(gated);
                REQUIRE(gated >= 0);
            }
        }
    }
    // the gate is non-vacuous for fast-growing symbols on the finer lattice
    {
        const LatticeGeometry g(3, 1, 6);
        const auto s = power_symbol(3, 2.0, 1.0);
        const auto G = green_build(s, g);
        const auto prof = radial_profile(s, 1.0);
        const auto rows = decay_scan(G);
        int gated = 0;
        for (const auto& row : rows) {
            const double cont = radial_green_series(3, 1, prof, row.r, 1.0);
            const double bound = G.continuum_error_bound(row.r);
            if (bound < 1e-10 * std::abs(cont)) {
                ++gated;
                REQUIRE(std::abs(row.mean_g - cont) < 1e-8 * std::abs(cont));
            }
        }
        REQUIRE(gated >= 3);
    }
}

TEST_CASE("radial series agrees with direct sphere-integral summation") {
    struct Cfg {
        long p;
        int N;
        double alpha, m;
    };
    for (const auto& c : {Cfg{3, 1, 1.0, 0.7}, Cfg{2, 1, 2.0, 0.7}, Cfg{3, 2, 0.5, 0.3}}) {
        CAPTURE(c.p, c.N, c.alpha, c.m);
        const auto prof = [&](int j) {
            return std::pow(dpow(c.p, 2 * j), c.alpha) + c.m * c.m;
        };
        for (int r = -2; r <= 2; ++r) {
            const double direct = green_by_sphere_integrals(c.p, c.N, prof, r, -80 / c.N);
            const double series = radial_green_series(c.p, c.N, prof, r, c.m * c.m);
            CAPTURE(r);
            REQUIRE(series == Catch::Approx(direct).epsilon(1e-12));
        }
    }
}

TEST_CASE("integral of the green function matches its zero-frequency weight") {
    for (double alpha : {1.0, 2.0}) {
        for (double m : {0.5, 1.0}) {
            const LatticeGeometry g(3, 1, 3);
            const auto s = power_symbol(3, alpha, m);
            const auto G = green_build(s, g);
            double mass = 0.0;
            for (std::size_t i = 0; i < g.points; ++i)
                mass += G.spatial[i].real() * g.cell_volume;
            CAPTURE(alpha, m);
            REQUIRE(mass == Catch::Approx(1.0 / (m * m)).epsilon(1e-12));
        }
    }
}

TEST_CASE("green application inverts the operator") {
    const LatticeGeometry g(3, 1, 3);
    const auto s = power_symbol(3, 1.0, 1.0);
    const auto G = green_build(s, g);
    const auto f = random_field(g, 1234u);

    SECTION("round trip reproduces the source") {
        const auto u = green_apply(G, f);
        const auto back = apply_operator(s, u);
        double max_err = 0.0, max_f = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) {
            max_err = std::max(max_err, std::abs(back[i] - f[i]));
            max_f = std::max(max_f, std::abs(f[i]));
        }
        REQUIRE(max_err < 1e-10 * max_f);
    }

    SECTION("unit-mass point source reproduces the kernel") {
        const auto u = green_apply(G, delta_field(g, 0));
        for (std::size_t i = 0; i < g.points; ++i)
            REQUIRE(std::abs(u[i] - G.spatial[i]) < 1e-12);
    }

    SECTION("linearity") {
        const auto h = random_field(g, 999u);
        LatticeField sum(g);
        for (std::size_t i = 0; i < g.points; ++i) sum[i] = f[i] + 2.5 * h[i];
        const auto lhs = green_apply(G, sum);
        const auto a = green_apply(G, f);
        const auto b = green_apply(G, h);
        for (std::size_t i = 0; i < g.points; ++i)
            REQUIRE(std::abs(lhs[i] - (a[i] + 2.5 * b[i])) < 1e-12);
    }

    SECTION("agrees with convolution against the kernel") {
        const auto by_conv = convolve(G.spatial, f);
        const auto by_apply = green_apply(G, f);
        for (std::size_t i = 0; i < g.points; ++i)
            REQUIRE(std::abs(by_conv[i] - by_apply[i]) < 1e-11);
    }

    SECTION("geometry mismatch is rejected") {
        const LatticeGeometry g2(3, 1, 2);
        REQUIRE_THROWS_AS(green_apply(G, LatticeField(g2)), std::invalid_argument);
    }
}

TEST_CASE("far-field decay exponent matches the symbol growth") {
    for (long p : {2L, 3L}) {
        for (double alpha : {1.0, 2.0}) {
            for (double m : {0.5, 1.0}) {
                CAPTURE(p, alpha, m);
                const auto s = power_symbol(p, alpha, m);
                const double target = -(2.0 * alpha + 1.0);  // -(alpha d + N)
                const auto prof = radial_profile(s, 1.0);

                // regression on the continuum series over the outer spheres
                std::vector<DecayRow> rows;
                for (int r = 3; r <= 6; ++r) {
                    DecayRow row;
                    row.r = r;
                    row.lognorm = r * std::log(static_cast<double>(p));
                    row.mean_g = radial_green_series(p, 1, prof, r, m * m);
                    row.log_g = std::log(row.mean_g);
                    row.count = 1;
                    rows.push_back(row);
                }
                const auto rep = decay_fit(rows, 4);
                CAPTURE(rep.far.slope);
                // At m = 0.5, p = 2 the mass correction 2^{-2r}/m^2 is still
                // 25% at r = 3, so the window range sits short of the
                // asymptote (true fitted slope -2.8845); gate tightly only
                // where the asymptote is reachable within the window.
                const double tol = (m == 1.0) ? 0.03 : 0.05;
                REQUIRE(std::abs(rep.far.slope - target) <= tol * std::abs(target));
            }
        }
    }

    SECTION("lattice regression at the window scale") {
        for (long p : {2L, 3L}) {
            for (double alpha : {1.0, 2.0}) {
                CAPTURE(p, alpha);
                const LatticeGeometry g(p, 1, 6);
                const auto s = power_symbol(p, alpha, 1.0);
                const auto G = green_build(s, g);
                // drop the boundary sphere r = K: the zero-cell lumping
                // artifact concentrates there (its relative size does not
                // shrink with K at the boundary)
                auto rows = decay_scan(G);
                REQUIRE(rows.back().r == g.K);
                rows.pop_back();
                const auto rep = decay_fit(rows, 3);
                const double target = -(2.0 * alpha + 1.0);
                CAPTURE(rep.far.slope);
                REQUIRE(rep.far_lo == 3);
                REQUIRE(rep.far_hi == 5);
                REQUIRE(std::abs(rep.far.slope - target) <= 0.03 * std::abs(target));

                // uniform bound on G * ||x||^{alpha d + N} over the outer half
                double lo = 1e300, hi = 0.0;
                for (const auto& row : decay_scan(G)) {
                    if (row.r < 3) continue;
                    const double u = row.mean_g * dpow(p, row.r * static_cast<int>(2 * alpha + 1));
                    lo = std::min(lo, u);
                    hi = std::max(hi, u);
                }
                REQUIRE(hi / lo < 4.0);
            }
        }
    }
}

TEST_CASE("short-distance exponent for shallow symbol growth") {
    // alpha d = 1 < N = 2: G grows like ||x||^{alpha d - N} toward 0
    const long p = 3;
    const double alpha = 0.5, m = 0.1;
    SymbolSpec s;
    s.poly = poly_binary_anisotropic(p);
    s.alpha = alpha;
    s.m = m;
    const auto bc = bound_constants(s, 2);
    REQUIRE(bc.report.c0 == 1.0);
    REQUIRE(bc.report.c1 == 1.0);
    const auto prof = radial_profile(s, bc.report.c0);

    SECTION("continuum regression") {
        std::vector<DecayRow> rows;
        for (int r = -4; r <= 0; ++r) {
            DecayRow row;
            row.r = r;
            row.lognorm = r * std::log(3.0);
            row.mean_g = radial_green_series(p, 2, prof, r, m * m);
            row.log_g = std::log(row.mean_g);
            row.count = 1;
            rows.push_back(row);
        }
        const auto rep = decay_fit(rows, 2);
        CAPTURE(rep.near_power.slope);
        REQUIRE(std::abs(rep.near_power.slope - (-1.0)) <= 0.05);
    }

    SECTION("lattice regression and windowed identity") {
        const LatticeGeometry g(p, 2, 3);
        const auto G = green_build(s, g);
        REQUIRE(std::isinf(G.spectral_tail));  // growth 1 <= N: no center-cell claim
        const auto rows = decay_scan(G);
        for (const auto& row : rows) {
            const double w = radial_green_series_windowed(s, g, prof, row.r);
            REQUIRE(std::abs(row.mean_g - w) <= 1e-8 * std::abs(w) + 1e-13);
        }
        const auto rep = decay_fit(rows, 2);
        CAPTURE(rep.near_power.slope);
        REQUIRE(rep.near_lo == -2);
        REQUIRE(rep.near_hi == 0);
        REQUIRE(std::abs(rep.near_power.slope - (-1.0)) <= 0.05);
    }
}

TEST_CASE("boundary growth shows a logarithmic short-distance profile") {
    // alpha d = N = 1: G ~ C0 - C1 ln||x|| near 0; the log model must beat
    // the power model on like-for-like residuals
    const LatticeGeometry g(3, 1, 6);
    const auto s = power_symbol(3, 0.5, 0.01);
    const auto G = green_build(s, g);
    const auto rep = decay_fit(decay_scan(G), 4);
    CAPTURE(rep.near_log.ssr, rep.near_power_ssr_in_g, rep.near_log.slope);
    REQUIRE(rep.near_log.ssr < rep.near_power_ssr_in_g);
    // slope of G against ln||x||: -(1 - 1/p)/ln p
    const double expect = -(1.0 - 1.0 / 3.0) / std::log(3.0);
    REQUIRE(rep.near_log.slope == Catch::Approx(expect).epsilon(0.10));
}

TEST_CASE("refining the window keeps coarse values within the reported budget") {
    const long p = 3;
    const auto s = power_symbol(p, 2.0, 1.0);
    const LatticeGeometry g3(p, 1, 3), g4(p, 1, 4);
    const auto G3 = green_build(s, g3);
    const auto G4 = green_build(s, g4);
    for (std::size_t i = 0; i < g3.points; ++i) {
        const std::size_t i4 = i * static_cast<std::size_t>(p);  // same point x = i p^{-K}
        const int e3 = g3.norm_exponent(i);
        if (i != 0) REQUIRE(e3 == g4.norm_exponent(i4));
        const double budget = (i == 0)
            ? G3.continuum_error_bound(-g3.K) + G4.continuum_error_bound(-g4.K)
            : G3.continuum_error_bound(e3) + G4.continuum_error_bound(e3);
        const double diff = std::abs(G3.spatial[i].real() - G4.spatial[i4].real());
        CAPTURE(i, diff, budget);
        REQUIRE(diff <= budget * (1.0 + 1e-9) + 1e-13);
    }
}

TEST_CASE("large mass suppresses off-origin values quartically") {
    const auto value_at = [](double m) {
        const auto prof = [m](int j) { return dpow(3, 2 * j) + m * m; };
        return radial_green_series(3, 1, prof, 1, m * m);
    };
    const double v100 = value_at(100.0);
    const double v1000 = value_at(1000.0);
    REQUIRE(v1000 / v100 == Catch::Approx(1e-4).epsilon(0.4));
}

TEST_CASE("green construction rejects bad inputs") {
    const LatticeGeometry g(3, 1, 2);
    SECTION("massless zero mode") {
        REQUIRE_THROWS_AS(green_build(power_symbol(3, 1.0, 0.0), g), std::invalid_argument);
    }
    SECTION("prime mismatch between symbol and geometry") {
        REQUIRE_THROWS_AS(green_build(power_symbol(2, 1.0, 1.0), g), std::invalid_argument);
    }
    SECTION("window too small for a decay scan") {
        const LatticeGeometry g1(3, 1, 1);
        const auto G = green_build(power_symbol(3, 1.0, 1.0), g1);
        REQUIRE_THROWS_AS(decay_scan(G), std::invalid_argument);
    }
    SECTION("windowed series needs an in-window radius") {
        const auto s = power_symbol(3, 1.0, 1.0);
        const auto prof = radial_profile(s, 1.0);
        REQUIRE_THROWS_AS(radial_green_series_windowed(s, g, prof, g.K + 1),
                          std::invalid_argument);
        REQUIRE_THROWS_AS(radial_green_series_windowed(s, g, prof, -g.K),
                          std::invalid_argument);
    }
    SECTION("continuum series needs a positive floor and profile") {
        const auto prof = [](int j) { return dpow(3, 2 * j) + 1.0; };
        REQUIRE_THROWS_AS(radial_green_series(3, 1, prof, 0, 0.0), std::invalid_argument);
        const auto bad = [](int) { return 0.0; };
        REQUIRE_THROWS_AS(radial_green_series(3, 1, bad, 0, 1.0), std::domain_error);
    }
}
