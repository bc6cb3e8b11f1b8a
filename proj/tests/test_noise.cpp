#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include "qpfield/noise.hpp"

using namespace qpfield;
using std::complex;

namespace {

/// n-th derivative of a complex function at 0 by central differences with
/// one Richardson step (O(h^4) for the stencils used here)
complex<double> derivative_at_zero(const std::function<complex<double>(double)>& f,
                                   int n, double h) {
    const auto stencil = [&](double step) -> complex<double> {
        switch (n) {
            case 1:
                return (f(step) - f(-step)) / (2.0 * step);
            case 2:
                return (f(step) - 2.0 * f(0.0) + f(-step)) / (step * step);
            case 3:
                return (f(2 * step) - 2.0 * f(step) + 2.0 * f(-step) - f(-2 * step)) /
                       (2.0 * step * step * step);
            case 4:
                return (f(2 * step) - 4.0 * f(step) + 6.0 * f(0.0) - 4.0 * f(-step) +
                        f(-2 * step)) /
                       (step * step * step * step);
            default:
                throw std::invalid_argument("stencil order");
        }
    };
    return (4.0 * stencil(h / 2) - stencil(h)) / 3.0;
}

/// cumulant c_n = F^(n)(0) / i^n by numerical differentiation
double cumulant_by_differences(const LevySpec& spec, int n) {
    const auto f = [&](double t) { return levy_eval(spec, t); };
    const complex<double> d = derivative_at_zero(f, n, 0.05);
    const complex<double> in = std::pow(complex<double>(0.0, 1.0), n);
    return (d / in).real();
}

LevySpec random_spec(std::mt19937& rng) {
    std::uniform_real_distribution<double> ua(-1.0, 1.0), us(0.0, 1.5), uj(0.2, 2.0),
        um(0.1, 2.0);
    std::uniform_int_distribution<int> na(0, 3), sign(0, 1);
    LevySpec spec;
    spec.a = ua(rng);
    spec.sigma = us(rng);
    const int k = na(rng);
    for (int i = 0; i < k; ++i) {
        const double s = uj(rng) * (sign(rng) ? 1.0 : -1.0);
        spec.atoms.push_back({s, um(rng)});
    }
    return spec;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// one-sample Kolmogorov-Smirnov statistic against a CDF
double ks_statistic(std::vector<double> xs, const std::function<double(double)>& cdf) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double d = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double F = cdf(xs[i]);
        d = std::max(d, std::abs(F - static_cast<double>(i + 1) / n));
        d = std::max(d, std::abs(F - static_cast<double>(i) / n));
    }
    return d;
}

struct MeanVar {
    double mean = 0.0, var = 0.0;
};
MeanVar mean_var(const std::vector<double>& xs) {
    MeanVar mv;
    for (double x : xs) mv.mean += x;
    mv.mean /= static_cast<double>(xs.size());
    for (double x : xs) mv.var += (x - mv.mean) * (x - mv.mean);
    mv.var /= static_cast<double>(xs.size() - 1);
    return mv;
}

}  // namespace

TEST_CASE("levy exponent closed form") {
    SECTION("pure gaussian and zero argument") {
        LevySpec g;
        g.sigma = 1.3;
        for (double t : {-2.0, -0.5, 0.0, 1.0, 3.0}) {
            const auto F = levy_eval(g, t);
            CHECK(F.real() == Catch::Approx(-0.5 * 1.3 * 1.3 * t * t));
            CHECK(F.imag() == 0.0);
        }
        std::mt19937 rng(77);
        for (int i = 0; i < 20; ++i) {
            const auto spec = random_spec(rng);
            CHECK(std::abs(levy_eval(spec, 0.0)) < 1e-15);
        }
    }

    SECTION("conjugate symmetry and nonpositive real part") {
        std::mt19937 rng(78);
        for (int i = 0; i < 20; ++i) {
            const auto spec = random_spec(rng);
            for (double t : default_bochner_grid()) {
                const auto F = levy_eval(spec, t);
                const auto Fm = levy_eval(spec, -t);
                CHECK(std::abs(Fm - std::conj(F)) < 1e-12);
                CHECK(F.real() <= 1e-12);
            }
        }
    }
}

TEST_CASE("cumulants match numerical differentiation of the exponent") {
    std::mt19937 rng(123);
    for (int trial = 0; trial < 12; ++trial) {
        const auto spec = random_spec(rng);
        const auto c = levy_cumulants(spec, 4);
        for (int n = 1; n <= 4; ++n) {
            CAPTURE(trial, n);
            const double fd = cumulant_by_differences(spec, n);
            CHECK(c[static_cast<std::size_t>(n - 1)] ==
                  Catch::Approx(fd).margin(5e-5).epsilon(1e-5));
        }
    }

    SECTION("single unit atom has constant cumulants from order two") {
        LevySpec spec;
        spec.atoms.push_back({1.0, 1.7});
        const auto c = levy_cumulants(spec, 6);
        CHECK(c[0] == Catch::Approx(1.7 / 2.0));  // compensator shifts order one
        for (int n = 2; n <= 6; ++n)
            CHECK(c[static_cast<std::size_t>(n - 1)] == Catch::Approx(1.7));
    }
}

TEST_CASE("interaction bridge to candidate exponents") {
    SECTION("vanishing interaction is unit-variance white noise") {
        InteractionH h;  // H == 0
        const auto c = h_cumulants(h, 5);
        CHECK(c[0] == complex<double>(0.0, 0.0));
        CHECK(c[1] == complex<double>(1.0, 0.0));
        for (int n = 3; n <= 5; ++n) CHECK(c[static_cast<std::size_t>(n - 1)] == complex<double>(0.0, 0.0));
        const auto F = h_to_levy(h);
        CHECK(F.polynomial);
        CHECK(F.degree == 2);
        for (double t : {-1.0, 0.3, 2.0})
            CHECK(std::abs(F.eval(t) - complex<double>(-0.5 * t * t, 0.0)) < 1e-15);
    }

    SECTION("linear interaction shifts the first cumulant") {
        InteractionH h;
        h.coeffs = {complex<double>(1.0, 0.0)};
        CHECK(h_cumulants(h, 2)[0] == complex<double>(-1.0, 0.0));
        CHECK(h_cumulants(h, 2)[1] == complex<double>(1.0, 0.0));
    }

    SECTION("factorial convention evaluation") {
        InteractionH h;
        h.coeffs = {complex<double>(0.0, 0.0), complex<double>(3.0, 0.0),
                    complex<double>(6.0, 0.0)};
        // H(z) = 3 z^2/2 + z^3
        const complex<double> z(0.4, 0.2);
        CHECK(std::abs(h.eval(z) - (1.5 * z * z + z * z * z)) < 1e-14);
        CHECK(h.degree() == 3);
    }

    SECTION("round trip through the noise cumulants is exact") {
        std::mt19937 rng(321);
        for (int trial = 0; trial < 10; ++trial) {
            const auto spec = random_spec(rng);
            const auto h = h_from_levy(spec, 7);
            const auto back = h_cumulants(h, 7);
            const auto direct = levy_cumulants(spec, 7);
            for (int n = 1; n <= 7; ++n) {
                CHECK(back[static_cast<std::size_t>(n - 1)].imag() == 0.0);
                CHECK(back[static_cast<std::size_t>(n - 1)].real() ==
                      Catch::Approx(direct[static_cast<std::size_t>(n - 1)]).margin(1e-14));
            }
        }
    }

    SECTION("candidate exponent evaluates the bridged series") {
        LevySpec spec;
        spec.a = 0.2;
        spec.sigma = 0.8;
        spec.atoms.push_back({0.9, 0.6});
        const auto h = h_from_levy(spec, 8);
        const auto F = h_to_levy(h);
        // Taylor agreement with the true exponent at small t
        for (double t : {0.01, 0.03, 0.05}) {
            const auto truth = levy_eval(spec, t);
            CHECK(std::abs(F.eval(t) - truth) < 1e-10);
        }
    }
}

TEST_CASE("bochner screening") {
    const auto grid = default_bochner_grid();
    REQUIRE(grid.size() == 21);

    SECTION("gaussian exponent is plausible") {
        LevySpec g;
        g.sigma = 1.0;
        const auto rep = bochner_validate(exponent_from_levy(g), grid, 1e-10);
        CHECK_FALSE(rep.rejected);
        CHECK(rep.eigen_checked);
        CHECK(rep.min_eigenvalue >= -1e-10);
    }

    SECTION("poisson exponent is plausible") {
        // lambda (e^{it} - 1): unit atom with the compensator undone by drift
        const double lambda = 1.4;
        LevySpec spec;
        spec.atoms.push_back({1.0, lambda});
        spec.a = lambda / 2.0;
        const auto F = exponent_from_levy(spec);
        for (double t : {0.7, 1.9}) {
            const complex<double> target =
                lambda * (std::exp(complex<double>(0.0, t)) - 1.0);
            REQUIRE(std::abs(F.eval(t) - target) < 1e-13);
        }
        const auto rep = bochner_validate(F, grid, 1e-10);
        CHECK_FALSE(rep.rejected);
        CHECK(rep.min_eigenvalue >= -1e-10);
    }

    SECTION("quartic interaction is rejected by the degree rule") {
        InteractionH h;
        h.coeffs = {0.0, 0.0, 0.0, complex<double>(24.0, 0.0)};  // H(z) = z^4
        const auto F = h_to_levy(h);
        CHECK(F.polynomial);
        CHECK(F.degree == 4);
        const auto rep = bochner_validate(F, grid, 1e-10);
        CHECK(rep.rejected);
        CHECK_FALSE(rep.eigen_checked);
        CHECK(rep.detail.find("degree") != std::string::npos);
    }

    SECTION("never rejects a genuine noise") {
        std::mt19937 rng(999);
        for (int trial = 0; trial < 100; ++trial) {
            const auto spec = random_spec(rng);
            const auto rep = bochner_validate(exponent_from_levy(spec), grid, 1e-10);
            CAPTURE(trial);
            REQUIRE_FALSE(rep.rejected);
        }
    }

    SECTION("grid validation") {
        LevySpec g;
        g.sigma = 1.0;
        REQUIRE_THROWS_AS(bochner_validate(exponent_from_levy(g), {0.0}, 1e-10),
                          std::invalid_argument);
    }
}

TEST_CASE("gaussian white sampler") {
    const LatticeGeometry g(3, 1, 1);
    const int n = 20000;

    SECTION("pairing moments") {
        LatticeField f(g);
        std::mt19937 rng(5);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t i = 0; i < g.points; ++i) f[i] = u(rng);
        const double target = norm0(f) * norm0(f);
        std::vector<double> xs;
        for (int r = 0; r < n; ++r) {
            const auto w = sample_gaussian_white(g, 42u, static_cast<std::uint64_t>(r));
            xs.push_back(pair_field(w, f).real());
        }
        const auto mv = mean_var(xs);
        const double se_mean = std::sqrt(target / n);
        const double se_var = target * std::sqrt(2.0 / (n - 1));
        CHECK(std::abs(mv.mean) < 3.0 * se_mean);
        CHECK(std::abs(mv.var - target) < 3.0 * se_var);
    }

    SECTION("cell variable is standard normal after scaling") {
        std::vector<double> xs;
        for (int r = 0; r < 10000; ++r) {
            const auto w = sample_gaussian_white(g, 7u, static_cast<std::uint64_t>(r));
            xs.push_back(w.values[0].real() * std::sqrt(g.cell_volume));
        }
        const double d = ks_statistic(xs, normal_cdf);
        CHECK(d * std::sqrt(static_cast<double>(xs.size())) < 1.63);  // 1% level
    }

    SECTION("bitwise determinism and replica independence") {
        const auto w1 = sample_gaussian_white(g, 42u, 3u);
        const auto w2 = sample_gaussian_white(g, 42u, 3u);
        const auto w3 = sample_gaussian_white(g, 42u, 4u);
        bool all_equal = true, any_equal = false;
        for (std::size_t i = 0; i < g.points; ++i) {
            all_equal = all_equal && (w1.values[i] == w2.values[i]);
            any_equal = any_equal || (w1.values[i] == w3.values[i]);
        }
        CHECK(all_equal);
        CHECK_FALSE(any_equal);
    }
}

TEST_CASE("generalized white noise sampler") {
    const LatticeGeometry g(3, 1, 1);
    const int n = 20000;
    LevySpec spec;
    spec.a = 0.3;
    spec.sigma = 0.7;
    spec.atoms.push_back({1.0, 2.0});
    spec.atoms.push_back({-0.5, 1.0});

    SECTION("cell characteristic function inside the envelope") {
        std::vector<double> xs;
        for (int r = 0; r < n; ++r) {
            const auto w = sample_levy_white(spec, g, 11u, static_cast<std::uint64_t>(r));
            xs.push_back(w.values[0].real() * g.cell_volume);  // X_c
        }
        double sup = 0.0;
        for (double t : default_bochner_grid()) {
            complex<double> emp(0.0, 0.0);
            for (double x : xs) emp += std::exp(complex<double>(0.0, t * x));
            emp /= static_cast<double>(n);
            const complex<double> target = std::exp(g.cell_volume * levy_eval(spec, t));
            sup = std::max(sup, std::abs(emp - target));
        }
        CHECK(sup < 4.0 / std::sqrt(static_cast<double>(n)));
    }

    SECTION("pairing mean and variance follow the first two cumulants") {
        const auto c = levy_cumulants(spec, 2);
        LatticeField f(g);
        for (std::size_t i = 0; i < g.points; ++i) f[i] = 1.0;  // indicator of B_1
        double integral = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) integral += g.cell_volume;
        const double var_target = c[1] * norm0(f) * norm0(f);
        std::vector<double> xs;
        for (int r = 0; r < n; ++r) {
            const auto w = sample_levy_white(spec, g, 13u, static_cast<std::uint64_t>(r));
            xs.push_back(pair_field(w, f).real());
        }
        const auto mv = mean_var(xs);
        const double se_mean = std::sqrt(var_target / n);
        CHECK(mv.mean == Catch::Approx(c[0] * integral).margin(4.0 * se_mean));
        // allow heavy fourth moments in the variance band
        const auto c4 = levy_cumulants(spec, 4);
        const double kurt = c4[3] / (c[1] * c[1]) / (integral / g.cell_volume);
        const double se_var = var_target * std::sqrt((2.0 + std::abs(kurt)) / (n - 1.0));
        CHECK(mv.var == Catch::Approx(var_target).margin(4.0 * se_var));
    }

    SECTION("gaussian-only spec reduces to the white sampler") {
        LevySpec pure;
        pure.sigma = 1.0;
        std::vector<double> xs;
        for (int r = 0; r < 10000; ++r) {
            const auto w = sample_levy_white(pure, g, 17u, static_cast<std::uint64_t>(r));
            xs.push_back(w.values[2].real() * std::sqrt(g.cell_volume));
        }
        const double d = ks_statistic(xs, normal_cdf);
        CHECK(d * std::sqrt(static_cast<double>(xs.size())) < 1.63);
    }
}

TEST_CASE("convolved sampler") {
    const LatticeGeometry g(3, 1, 1);
    LevySpec gauss;
    gauss.sigma = 1.0;

    // half-inverse smoothing: two passes equal the full resolvent
    SymbolSpec half;
    half.poly = poly_power(3, 2);
    half.alpha = 1.0;
    half.beta = 0.5;
    half.m = 1.0;
    half.variant = SymbolVariant::Bessel;
    const auto Ghalf = green_build(half, g);

    SymbolSpec full;
    full.poly = poly_power(3, 2);
    full.alpha = 1.0;
    full.m = 1.0;
    const auto Gfull = green_build(full, g);

    SECTION("covariance reproduces the resolvent pairing") {
        const int n = 20000;
        std::vector<LatticeField> ws;
        ws.reserve(n);
        for (int r = 0; r < n; ++r)
            ws.push_back(sample_convolved(gauss, Ghalf, 100u, static_cast<std::uint64_t>(r)).values);
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (int pair = 0; pair < 5; ++pair) {
            LatticeField f(g), h(g);
            for (std::size_t i = 0; i < g.points; ++i) {
                f[i] = u(rng);
                h[i] = u(rng);
            }
            const double target = pair0(f, green_apply(Gfull, h)).real();
            std::vector<double> us, vs;
            for (const auto& w : ws) {
                us.push_back(pair0(w, f).real());
                vs.push_back(pair0(w, h).real());
            }
            const auto mu = mean_var(us), mv = mean_var(vs);
            double cov = 0.0;
            for (int r = 0; r < n; ++r) cov += (us[static_cast<std::size_t>(r)] - mu.mean) * (vs[static_cast<std::size_t>(r)] - mv.mean);
            cov /= static_cast<double>(n - 1);
            const double se = std::sqrt((mu.var * mv.var + cov * cov) / (n - 1.0));
            CAPTURE(pair, cov, target, se);
            CHECK(cov == Catch::Approx(target).margin(3.0 * se));
        }
    }

    SECTION("operator pairing undoes the smoothing exactly per sample") {
        std::mt19937 rng(9);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        LatticeField f(g);
        for (std::size_t i = 0; i < g.points; ++i) f[i] = u(rng);
        for (std::uint64_t r = 0; r < 50; ++r) {
            const auto white = sample_levy_white(gauss, g, 55u, r);
            const auto conv = sample_convolved(gauss, Ghalf, 55u, r);
            const auto h = apply_operator(full, green_apply(Ghalf, f));
            const auto lhs = pair0(conv.values, h);
            const auto rhs = pair_field(white, f);
            REQUIRE(std::abs(lhs - rhs) < 1e-9 * (1.0 + std::abs(rhs)));
        }
    }

    SECTION("pairing is linear on a fixed sample") {
        const auto w = sample_convolved(gauss, Ghalf, 77u, 0);
        LatticeField f(g), h(g);
        std::mt19937 rng(10);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for (std::size_t i = 0; i < g.points; ++i) {
            f[i] = {u(rng), u(rng)};
            h[i] = {u(rng), u(rng)};
        }
        LatticeField combo(g);
        for (std::size_t i = 0; i < g.points; ++i) combo[i] = 2.0 * f[i] - 1.5 * h[i];
        const auto lhs = pair_field(w, combo);
        const auto rhs = 2.0 * pair_field(w, f) - 1.5 * pair_field(w, h);
        REQUIRE(std::abs(lhs - rhs) < 1e-12);
    }
}

TEST_CASE("poisson draws have the right moments") {
    CounterRng rng(2024u, 0u, 0u);
    for (double mean : {0.25, 3.0, 75.0}) {
        const int n = 20000;
        std::vector<double> xs;
        for (int i = 0; i < n; ++i) xs.push_back(static_cast<double>(rng.next_poisson(mean)));
        const auto mv = mean_var(xs);
        const double se_mean = std::sqrt(mean / n);
        CAPTURE(mean);
        CHECK(mv.mean == Catch::Approx(mean).margin(4.0 * se_mean));
        const double se_var = mean * std::sqrt((2.0 + 1.0 / mean) / (n - 1.0));
        CHECK(mv.var == Catch::Approx(mean).margin(4.0 * se_var));
    }
    REQUIRE_THROWS_AS(rng.next_poisson(-1.0), std::invalid_argument);
}

TEST_CASE("noise wire formats round trip") {
    LevySpec spec;
    spec.a = 0.25;
    spec.sigma = 1.5;
    spec.atoms = {{1.0, 2.0}, {-0.5, 0.75}};
    const auto j = levy_to_json(spec);
    const auto back = levy_from_json(j);
    CHECK(back.a == spec.a);
    CHECK(back.sigma == spec.sigma);
    REQUIRE(back.atoms.size() == 2);
    CHECK(back.atoms[1].s == -0.5);
    CHECK(back.atoms[1].mass == 0.75);

    InteractionH h;
    h.coeffs = {complex<double>(1.0, 0.0), complex<double>(0.0, -2.0)};
    h.radius = 2.5;
    const auto hj = h_to_json(h);
    const auto hback = h_from_json(hj);
    REQUIRE(hback.coeffs.size() == 2);
    CHECK(hback.coeffs[0] == h.coeffs[0]);
    CHECK(hback.coeffs[1] == h.coeffs[1]);
    CHECK(hback.radius == 2.5);

    nlohmann::json bad = {{"coeffs", {1.0}}, {"convention", "plain"}};
    REQUIRE_THROWS_AS(h_from_json(bad), std::invalid_argument);

    nlohmann::json badspec = {{"sigma", -1.0}};
    REQUIRE_THROWS_AS(levy_from_json(badspec), std::invalid_argument);
}
