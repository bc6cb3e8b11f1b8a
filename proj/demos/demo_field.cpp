// Samples a smoothed generalized white-noise field, compares a sampled
// two-point moment with its closed form, and tabulates how the correlation
// between two point sources dies off as one source is pulled away.

#include <cstdio>

#include "qpfield/schwinger.hpp"

using namespace qpfield;

int main() {
    const LatticeGeometry g(3, 1, 3);

    SymbolSpec s;
    s.poly = poly_power(3, 2);
    s.alpha = 1.0;
    s.m = 1.0;
    const auto G = green_build(s, g);

    LevySpec spec;
    spec.a = 0.3;
    spec.sigma = 0.5;
    spec.atoms.push_back({1.0, 0.8});
    const auto h = h_from_levy(spec, 4);

    const auto c = levy_cumulants(spec, 4);
    std::printf("noise cumulants:");
    for (double ci : c) std::printf(" %.4f", ci);
    std::printf("\n");

    const auto f1 = delta_field(g, 0);
    const std::vector<LatticeField> fs = {f1, f1};
    const double closed = schwinger_analytic(h, G, fs);
    const auto est = mc_schwinger(spec, G, fs, 6000, 4242);
    std::printf("coincident two-point value: closed form %.6f, sampled %.6f +/- %.6f (%d draws)\n",
                closed, est.value, est.stderr_jackknife, est.n_samples);

    const auto rep = cluster_check(h, G, {f1}, {f1}, 0, 3);
    std::printf("separation ladder (deviation from the factorized value):\n");
    for (const auto& row : rep.rows)
        std::printf("  |shift| = 3^%d: deviation %.3e, joint truncated part %.3e%s\n", row.step,
                    row.deviation, row.truncated_value,
                    row.separated ? "" : " (overlapping supports)");
    std::printf("deviations decrease monotonically: %s\n", rep.monotone ? "yes" : "no");
    return 0;
}
