// qpfield: batch front-end for the p-adic field workbench.
//
// Subcommands: green, covariance, sample, schwinger, cluster, wick,
// levy-check, bench, selftest.  Every run writes its data as CSV (header row
// always present) plus a manifest.json echoing the fully resolved
// configuration; all files are written atomically.  Exit codes: 0 success,
// 2 invalid configuration, 3 numerical-acceptance failure.

#include <chrono>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "qpfield/io.hpp"
#include "qpfield/schwinger.hpp"

#define QPFIELD_VERSION "1.0.0"

namespace fs = std::filesystem;
using namespace qpfield;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// shared option blocks

struct GlobalOpts {
    std::uint64_t seed = 1;
    int threads = 1;  // recorded in the manifest; computations are single-threaded
    double tol = -1.0;  // negative: use the command's default
    std::string out_dir;
};

struct GeoOpts {
    long p = 3;
    int N = 1;
    int K = 2;
};

struct SymOpts {
    double alpha = 1.0;
    double m = 1.0;
    double beta = 1.0;
    std::string variant = "lpower";
    std::string poly_path;
};

struct NoiseOpts {
    std::string h_path;
    std::string spec_path;
};

void add_geo(CLI::App* c, GeoOpts& o) {
    c->add_option("--p", o.p, "prime base of the field")->check(CLI::Range(2L, 97L));
    c->add_option("--N", o.N, "number of coordinate axes")->check(CLI::Range(1, 4));
    c->add_option("--K", o.K, "window depth: resolution p^-K, radius p^K")
        ->check(CLI::Range(1, 8));
}

void add_sym(CLI::App* c, SymOpts& o) {
    c->add_option("--alpha", o.alpha, "operator exponent alpha > 0");
    c->add_option("--m", o.m, "mass parameter m >= 0");
    c->add_option("--beta", o.beta, "outer exponent (bessel variant only)");
    c->add_option("--variant", o.variant, "symbol shape")
        ->check(CLI::IsMember({"lpower", "shifted", "bessel"}));
    c->add_option("--poly", o.poly_path,
                  "JSON file with the homogeneous polynomial (array of "
                  "{coeff, exponents}); default: catalog form for N");
}

void add_noise(CLI::App* c, NoiseOpts& o) {
    c->add_option("--h", o.h_path, "interaction JSON ({coeffs, convention, radius})");
    c->add_option("--spec", o.spec_path, "noise JSON ({a, sigma, atoms})");
}

json load_json(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open " + path);
    try {
        return json::parse(is);
    } catch (const std::exception& e) {
        throw std::invalid_argument("cannot parse " + path + ": " + e.what());
    }
}

LatticeGeometry resolve_geometry(const GeoOpts& o) {
    LatticeGeometry g(o.p, o.N, o.K);
    if (g.points > (std::size_t{1} << 24))
        throw std::invalid_argument(
            "window too large: p^(2KN) cells exceed 2^24; lower --K or --N");
    return g;
}

SymbolSpec resolve_symbol(const GeoOpts& go, const SymOpts& so) {
    SymbolSpec s;
    s.alpha = so.alpha;
    s.m = so.m;
    s.beta = so.beta;
    if (so.variant == "lpower") s.variant = SymbolVariant::LPower;
    else if (so.variant == "shifted") s.variant = SymbolVariant::ShiftedPower;
    else s.variant = SymbolVariant::Bessel;
    if (!so.poly_path.empty()) {
        s.poly = polynomial_from_json(load_json(so.poly_path), go.p, go.N);
    } else if (go.N == 1) {
        s.poly = poly_power(go.p, 2);
    } else if (go.N == 2) {
        s.poly = poly_binary_anisotropic(go.p);
    } else if (go.N == 4) {
        s.poly = poly_quaternary_anisotropic(go.p);
    } else {
        throw std::invalid_argument("no catalog polynomial for N=" + std::to_string(go.N) +
                                    "; pass --poly");
    }
    s.validate();
    return s;
}

json symbol_json(const SymbolSpec& s) {
    const char* names[] = {"lpower", "shifted", "bessel"};
    return {{"variant", names[static_cast<int>(s.variant)]},
            {"alpha", s.alpha},
            {"m", s.m},
            {"beta", s.beta},
            {"poly", polynomial_to_json(s.poly)}};
}

json geo_json(const GeoOpts& o) { return {{"p", o.p}, {"N", o.N}, {"K", o.K}}; }

/// interaction + (optional) sampleable noise resolved from the flags;
/// defaults to the unit Gaussian white noise
struct ResolvedNoise {
    InteractionH h;
    LevySpec spec;       // valid only when sampleable
    bool sampleable = false;
    json desc;
};

ResolvedNoise resolve_noise(const NoiseOpts& o, int order) {
    ResolvedNoise r;
    if (!o.h_path.empty() && !o.spec_path.empty())
        throw std::invalid_argument("pass either --h or --spec, not both");
    if (!o.h_path.empty()) {
        r.h = h_from_json(load_json(o.h_path));
        r.sampleable = false;
        r.desc = {{"interaction", h_to_json(r.h)}};
    } else {
        if (!o.spec_path.empty()) {
            r.spec = levy_from_json(load_json(o.spec_path));
        } else {
            r.spec.a = 0.0;
            r.spec.sigma = 1.0;
        }
        r.h = h_from_levy(r.spec, std::max(order, 2));
        r.sampleable = true;
        r.desc = {{"levy", levy_to_json(r.spec)}, {"interaction", h_to_json(r.h)}};
    }
    return r;
}

// ---------------------------------------------------------------------------
// manifest / output plumbing

fs::path out_path(const GlobalOpts& g, const std::string& name) {
    return fs::path(g.out_dir) / name;
}

/// subcommand with help reduced to --help, freeing -h/--h for option names
CLI::App* add_cmd(CLI::App& app, const std::string& name, const std::string& desc) {
    auto* c = app.add_subcommand(name, desc);
    c->set_help_flag("--help", "print this help message and exit");
    c->fallthrough();  // global flags (--seed, --out-dir, ..) may follow the subcommand
    return c;
}

std::string iso_timestamp() {
    char buf[32];
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void emit_manifest(const GlobalOpts& g, const std::string& command, double resolved_tol,
                   const json& params, const std::vector<std::string>& outputs) {
    json m{{"command", command},     {"version", QPFIELD_VERSION},
           {"seed", g.seed},         {"threads", g.threads},
           {"tol", resolved_tol},    {"parameters", params},
           {"outputs", outputs},     {"timestamp", iso_timestamp()}};
    atomic_write(out_path(g, "manifest.json"), m.dump(2) + "\n");
}

double pick_tol(const GlobalOpts& g, double fallback) {
    return g.tol >= 0.0 ? g.tol : fallback;
}

// ---------------------------------------------------------------------------
// green / covariance

int run_green(const GlobalOpts& global, const GeoOpts& go, const SymOpts& so,
              const std::string& command) {
    const auto g = resolve_geometry(go);
    const auto s = resolve_symbol(go, so);
    const auto G = green_build(s, g);
    const auto bc = bound_constants(s, 4);
    const bool radial = bc.report.c0 == bc.report.c1;
    const auto profile = radial_profile(s, bc.report.c0);

    const auto rows = decay_scan(G);
    std::vector<std::string> kernel_rows, decay_rows;
    for (const auto& row : rows) {
        const double oracle =
            radial ? radial_green_series_windowed(s, g, profile, row.r)
                   : std::numeric_limits<double>::quiet_NaN();
        std::string k = std::to_string(row.r);
        k += ',' + std::to_string(row.count);
        k += ',' + fmt_double(row.mean_g);
        k += ',' + fmt_double(oracle);
        k += ',' + fmt_double(G.continuum_error_bound(row.r));
        kernel_rows.push_back(k);
        std::string d = std::to_string(row.r);
        d += ',' + fmt_double(row.lognorm);
        d += ',' + fmt_double(row.mean_g);
        d += ',' + fmt_double(row.log_g);
        d += ',' + std::to_string(row.count);
        decay_rows.push_back(d);
    }
    write_csv(out_path(global, "green.csv"),
              "r,cells,mean_value,windowed_oracle,continuum_bound", kernel_rows);
    write_csv(out_path(global, "decay.csv"), "r,lognorm,mean_value,log_abs_mean,cells",
              decay_rows);

    const auto fit = decay_fit(rows);
    const double predicted = -(s.growth_exponent() + g.N);
    json summary{{"far_slope", fit.far.slope},
                 {"far_window", {fit.far_lo, fit.far_hi}},
                 {"predicted_far_slope", predicted},
                 {"near_slope", fit.near_power.slope},
                 {"near_window", {fit.near_lo, fit.near_hi}},
                 {"log_model_ssr", fit.near_log.ssr},
                 {"power_model_ssr_in_value", fit.near_power_ssr_in_g},
                 {"radial_oracle", radial}};
    json params{{"geometry", geo_json(go)}, {"symbol", symbol_json(s)}, {"fit", summary}};
    const double tol = pick_tol(global, -1.0);
    emit_manifest(global, command, tol, params, {"green.csv", "decay.csv"});

    std::cout << command << ": far slope " << fit.far.slope << " over spheres ["
              << fit.far_lo << "," << fit.far_hi << "], predicted " << predicted << "\n";
    if (tol >= 0.0) {
        const double rel = std::abs(fit.far.slope - predicted) / std::abs(predicted);
        if (rel > tol) {
            std::cout << "[FAIL] far slope deviates by " << rel << " > tol " << tol << "\n";
            return 3;
        }
        std::cout << "[PASS] far slope within tol " << tol << "\n";
    }
    return 0;
}

// ---------------------------------------------------------------------------
// sample

int run_sample(const GlobalOpts& global, const GeoOpts& go, const SymOpts& so,
               const NoiseOpts& no, int n_samples, const std::string& mode,
               const std::string& field_out) {
    const auto g = resolve_geometry(go);
    const auto noise = resolve_noise(no, 2);
    if (!noise.sampleable)
        throw std::invalid_argument("sample needs a noise --spec (an interaction alone "
                                    "does not determine a sampler)");
    GreenFunction G;
    const bool convolved = mode == "convolved";
    if (convolved) G = green_build(resolve_symbol(go, so), g);

    const auto probe = ball_indicator(g, 0);
    std::vector<std::string> rows;
    double mean = 0.0, sq = 0.0;
    for (int r = 0; r < n_samples; ++r) {
        const FieldSample w = convolved
                                  ? sample_convolved(noise.spec, G, global.seed,
                                                     static_cast<std::uint64_t>(r))
                                  : sample_levy_white(noise.spec, g, global.seed,
                                                      static_cast<std::uint64_t>(r));
        const double x = pair_field(w, probe).real();
        const double c0 = w.values[0].real();
        mean += x;
        sq += x * x;
        std::string line = std::to_string(r);
        line += ',' + fmt_double(x);
        line += ',' + fmt_double(c0);
        rows.push_back(line);
    }
    mean /= n_samples;
    const double var = sq / n_samples - mean * mean;
    write_csv(out_path(global, "samples.csv"), "replica,pair_unit_ball,cell0", rows);

    std::vector<std::string> outputs{"samples.csv"};
    if (!field_out.empty()) {
        const FieldSample w = convolved
                                  ? sample_convolved(noise.spec, G, global.seed, 0)
                                  : sample_levy_white(noise.spec, g, global.seed, 0);
        write_field_csv(out_path(global, field_out), w.values);
        outputs.push_back(field_out);
    }

    json params{{"geometry", geo_json(go)},
                {"mode", mode},
                {"n_samples", n_samples},
                {"noise", noise.desc},
                {"pair_unit_ball_mean", mean},
                {"pair_unit_ball_var", var}};
    if (convolved) params["symbol"] = symbol_json(G.spec);
    emit_manifest(global, "sample", pick_tol(global, -1.0), params, outputs);
    std::cout << "sample: " << n_samples << " replicas, <W,1_ball> mean " << mean
              << " var " << var << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// schwinger

std::vector<std::size_t> parse_cells(const std::string& text, const LatticeGeometry& g) {
    std::vector<std::size_t> cells;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        long long v = 0;
        try {
            v = std::stoll(tok);
        } catch (const std::exception&) {
            throw std::invalid_argument("--cells: '" + tok + "' is not an integer");
        }
        if (v < 0 || static_cast<std::size_t>(v) >= g.points)
            throw std::invalid_argument("cell index " + tok + " outside the window");
        cells.push_back(static_cast<std::size_t>(v));
    }
    if (cells.empty()) throw std::invalid_argument("--cells needs at least one index");
    if (cells.size() > 6) throw std::invalid_argument("--cells supports at most 6 insertions");
    return cells;
}

/// mc_samples < 0 means "auto": sample when the configured noise admits a
/// sampler, skip otherwise
int run_schwinger(const GlobalOpts& global, const GeoOpts& go, const SymOpts& so,
                  const NoiseOpts& no, const std::string& cells_text, int mc_samples,
                  bool no_chaos) {
    const auto g = resolve_geometry(go);
    const auto G = green_build(resolve_symbol(go, so), g);
    const auto cells = parse_cells(cells_text, g);
    const int n = static_cast<int>(cells.size());
    const auto noise = resolve_noise(no, n);
    if (mc_samples < 0) mc_samples = noise.sampleable ? 400 : 0;

    std::vector<LatticeField> fields;
    for (auto c : cells) fields.push_back(delta_field(g, c));

    const double analytic = schwinger_analytic(noise.h, G, fields);
    std::vector<std::string> rows{std::string("analytic,") + fmt_double(analytic) + ",0"};

    const double tol = pick_tol(global, 1e-8);
    bool ok = true;
    std::string verdict;

    const bool chaos_feasible = !no_chaos && n <= 4 && g.points <= 4096;
    double chaos = 0.0;
    if (chaos_feasible) {
        const auto phi = interaction_density_convolved(noise.h, G, g, std::max(2, n));
        chaos = npoint_from_chaos(phi, fields).real();
        rows.push_back(std::string("chaos,") + fmt_double(chaos) + ",0");
        if (std::abs(chaos - analytic) > tol * (1.0 + std::abs(analytic))) {
            ok = false;
            verdict += "chaos value disagrees with the analytic value; ";
        }
    }

    McEstimate mc;
    if (mc_samples > 0) {
        if (!noise.sampleable)
            throw std::invalid_argument(
                "Monte Carlo needs a noise --spec; an interaction alone is not sampleable");
        mc = mc_schwinger(noise.spec, G, fields, mc_samples, global.seed);
        rows.push_back(std::string("mc,") + fmt_double(mc.value) + ',' +
                       fmt_double(mc.stderr_jackknife));
        if (std::abs(mc.value - analytic) > 4.0 * mc.stderr_jackknife + 1e-12) {
            ok = false;
            verdict += "Monte Carlo mean farther than 4 stderr from the analytic value; ";
        }
    }
    write_csv(out_path(global, "schwinger.csv"), "method,value,stderr", rows);

    json params{{"geometry", geo_json(go)},
                {"symbol", symbol_json(G.spec)},
                {"noise", noise.desc},
                {"cells", cells},
                {"order", n},
                {"mc_samples", mc_samples},
                {"analytic", analytic},
                {"agreement", ok}};
    if (chaos_feasible) params["chaos"] = chaos;
    if (mc_samples > 0) {
        params["mc_value"] = mc.value;
        params["mc_stderr"] = mc.stderr_jackknife;
    }
    emit_manifest(global, "schwinger", tol, params, {"schwinger.csv"});

    std::cout << "schwinger: order " << n << " analytic " << analytic;
    if (chaos_feasible) std::cout << " chaos " << chaos;
    if (mc_samples > 0)
        std::cout << " mc " << mc.value << " +- " << mc.stderr_jackknife;
    std::cout << "\n";
    if (!ok) {
        std::cout << "[FAIL] " << verdict << "\n";
        return 3;
    }
    std::cout << "[PASS] all computed routes agree\n";
    return 0;
}

// ---------------------------------------------------------------------------
// cluster

int run_cluster(const GlobalOpts& global, const GeoOpts& go, const SymOpts& so,
                const NoiseOpts& no, int direction, int max_step, int fit_lo, int fit_hi,
                int ball_r) {
    const auto g = resolve_geometry(go);
    const auto s = resolve_symbol(go, so);
    const auto G = green_build(s, g);
    const auto noise = resolve_noise(no, 2);
    if (max_step <= 0) max_step = g.K;

    std::vector<LatticeField> fb, gb;
    if (ball_r <= -100) {
        fb.push_back(delta_field(g, 0));
        gb.push_back(delta_field(g, 0));
    } else {
        fb.push_back(ball_indicator(g, ball_r));
        gb.push_back(ball_indicator(g, ball_r));
    }

    const auto rep = cluster_check(noise.h, G, fb, gb, direction, max_step);
    std::vector<std::string> rows;
    for (const auto& row : rep.rows) {
        std::string line = std::to_string(row.step);
        line += ',' + fmt_double(row.lambda_norm);
        line += ',' + fmt_double(row.deviation);
        line += ',' + fmt_double(row.truncated_value);
        line += ',' + std::string(row.separated ? "1" : "0");
        rows.push_back(line);
    }
    write_csv(out_path(global, "cluster.csv"),
              "step,lambda_norm,deviation,truncated_value,separated", rows);

    if (fit_lo <= 0) fit_lo = std::max(1, g.K - 3);
    if (fit_hi <= 0) fit_hi = std::max(fit_lo, g.K - 1);
    json fitj;
    int usable = 0;
    for (const auto& row : rep.rows)
        if (row.step >= fit_lo && row.step <= fit_hi && row.deviation > 0.0) ++usable;
    const double predicted = -(s.growth_exponent() + g.N);
    if (usable >= 2) {
        const auto fit = cluster_slope(rep, fit_lo, fit_hi);
        fitj = {{"slope", fit.slope},
                {"intercept", fit.intercept},
                {"ssr", fit.ssr},
                {"window", {fit_lo, fit_hi}},
                {"predicted_slope", predicted}};
        std::cout << "cluster: slope " << fit.slope << " over steps [" << fit_lo << ","
                  << fit_hi << "], predicted " << predicted << "\n";
    } else {
        std::cout << "cluster: fit window [" << fit_lo << "," << fit_hi
                  << "] has fewer than two usable rows; no slope fitted\n";
    }
    if (rep.partial) std::cout << "note: " << rep.warning << "\n";

    json params{{"geometry", geo_json(go)},    {"symbol", symbol_json(s)},
                {"noise", noise.desc},         {"direction", direction},
                {"max_step", max_step},        {"support", rep.support},
                {"monotone", rep.monotone},    {"truncated_vanishes", rep.truncated_vanishes},
                {"partial", rep.partial},      {"warning", rep.warning},
                {"fit", fitj}};
    emit_manifest(global, "cluster", pick_tol(global, -1.0), params, {"cluster.csv"});

    int n_sep = 0;
    for (const auto& row : rep.rows) n_sep += row.separated ? 1 : 0;
    if (n_sep >= 2 && !rep.monotone) {
        std::cout << "[FAIL] deviations do not decrease along the separated ladder\n";
        return 3;
    }
    std::cout << "[PASS] separated deviations decrease along the ladder\n";
    return 0;
}

// ---------------------------------------------------------------------------
// wick

struct Series {
    std::vector<cd> c;
    explicit Series(int order) : c(static_cast<std::size_t>(order) + 1, cd(0.0, 0.0)) {}
};

Series series_exp(const Series& a) {
    Series b(static_cast<int>(a.c.size()) - 1);
    b.c[0] = cd(1.0, 0.0);
    for (std::size_t n = 1; n < a.c.size(); ++n) {
        cd acc(0.0, 0.0);
        for (std::size_t j = 1; j <= n; ++j)
            acc += static_cast<double>(j) * a.c[j] * b.c[n - j];
        b.c[n] = acc / static_cast<double>(n);
    }
    return b;
}

int run_wick(const GlobalOpts& global, const GeoOpts& go, const NoiseOpts& no, int order,
             double scale) {
    const auto g = resolve_geometry(go);
    if (g.points > 2048)
        throw std::invalid_argument("wick: the chaos expansion stores per-cell tensors; "
                                    "lower --K/--N (at most 2048 cells)");
    ResolvedNoise noise;
    if (no.h_path.empty() && no.spec_path.empty()) {
        noise.h.coeffs = {cd(0.0, 0.0), cd(0.0, 0.0), cd(0.2, 0.0)};
        noise.desc = {{"interaction", h_to_json(noise.h)}};
    } else {
        noise = resolve_noise(no, order);
    }

    LatticeField dir = ball_indicator(g, 0);
    for (std::size_t i = 0; i < g.points; ++i) dir[i] *= scale;

    const auto phi = interaction_density(noise.h, g, order);
    const auto got = t_transform_taylor(phi, dir, order);

    // closed form: exp(-sum_cells vol H(i lambda dir(c)) - lambda^2 <dir,dir>_0 / 2)
    Series a(order);
    double fact = 1.0;
    for (int j = 1; j <= order; ++j) {
        fact *= static_cast<double>(j);
        if (j <= static_cast<int>(noise.h.coeffs.size())) {
            const cd hj = noise.h.coeffs[static_cast<std::size_t>(j - 1)];
            cd cell_sum(0.0, 0.0);
            for (std::size_t c = 0; c < g.points; ++c) cell_sum += std::pow(dir[c], j);
            cd ij(1.0, 0.0);
            for (int t = 0; t < j; ++t) ij *= cd(0.0, 1.0);
            a.c[static_cast<std::size_t>(j)] -= g.cell_volume * hj * ij * cell_sum / fact;
        }
    }
    if (order >= 2) a.c[2] -= 0.5 * pair0(dir, dir);
    const Series closed = series_exp(a);

    const double tol = pick_tol(global, 1e-8);
    double worst = 0.0;
    std::vector<std::string> rows;
    for (int j = 0; j <= order; ++j) {
        const cd c_got = got[static_cast<std::size_t>(j)];
        const cd c_ref = closed.c[static_cast<std::size_t>(j)];
        const double diff = std::abs(c_got - c_ref) / (1.0 + std::abs(c_ref));
        worst = std::max(worst, diff);
        std::string line = std::to_string(j);
        line += ',' + fmt_double(c_got.real());
        line += ',' + fmt_double(c_got.imag());
        line += ',' + fmt_double(c_ref.real());
        line += ',' + fmt_double(c_ref.imag());
        line += ',' + fmt_double(diff);
        rows.push_back(line);
    }
    write_csv(out_path(global, "wick.csv"), "order,re,im,re_closed,im_closed,rel_diff", rows);

    const double unit_gap = std::abs(got[0] - cd(1.0, 0.0));
    json params{{"geometry", geo_json(go)},  {"noise", noise.desc},
                {"order", order},            {"scale", scale},
                {"max_rel_diff", worst},     {"normalization_gap", unit_gap}};
    emit_manifest(global, "wick", tol, params, {"wick.csv"});

    std::cout << "wick: transform coefficients to order " << order
              << ", max relative gap " << worst << ", normalization gap " << unit_gap << "\n";
    if (worst > tol || unit_gap > 1e-12) {
        std::cout << "[FAIL] transform coefficients disagree with the closed form\n";
        return 3;
    }
    std::cout << "[PASS] transform coefficients match the closed form\n";
    return 0;
}

// ---------------------------------------------------------------------------
// levy-check

int run_levy_check(const GlobalOpts& global, const NoiseOpts& no) {
    CandidateExponent F;
    json desc;
    if (!no.h_path.empty() && !no.spec_path.empty())
        throw std::invalid_argument("pass either --h or --spec, not both");
    if (!no.h_path.empty()) {
        const auto h = h_from_json(load_json(no.h_path));
        F = h_to_levy(h);
        desc = {{"interaction", h_to_json(h)}};
    } else {
        LevySpec spec;
        if (!no.spec_path.empty()) {
            spec = levy_from_json(load_json(no.spec_path));
        } else {
            spec.sigma = 1.0;
        }
        F = exponent_from_levy(spec);
        desc = {{"levy", levy_to_json(spec)}};
    }

    const double tol = pick_tol(global, 1e-10);
    const auto grid = default_bochner_grid();
    const auto rep = bochner_validate(F, grid, tol);

    std::vector<std::string> rows;
    for (double t : grid) {
        const auto v = F.eval(t);
        std::string line = fmt_double(t);
        line += ',' + fmt_double(v.real());
        line += ',' + fmt_double(v.imag());
        rows.push_back(line);
    }
    write_csv(out_path(global, "levy_check.csv"), "t,re_exponent,im_exponent", rows);

    json params{{"candidate", desc},
                {"rejected", rep.rejected},
                {"detail", rep.detail},
                {"eigen_checked", rep.eigen_checked},
                {"min_eigenvalue", rep.min_eigenvalue}};
    emit_manifest(global, "levy-check", tol, params, {"levy_check.csv"});

    if (rep.rejected) {
        std::cout << "[FAIL] exponent rejected: " << rep.detail << "\n";
        return 3;
    }
    std::cout << "[PASS] exponent admissible";
    if (rep.eigen_checked) std::cout << " (min eigenvalue " << rep.min_eigenvalue << ")";
    std::cout << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// bench

int run_bench(const GlobalOpts& global, long p, std::vector<int> levels) {
    if (levels.empty()) levels = {2, 3, 4};
    std::vector<std::string> rows;
    bool gate_ok = true;
    for (int K : levels) {
        const LatticeGeometry g(p, 1, K);
        if (g.axis > 20000)
            throw std::invalid_argument(
                "bench: the direct-sum timing needs p^2K <= 20000; drop level " +
                std::to_string(K));
        std::mt19937_64 rng(global.seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(K)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        LatticeField f(g);
        for (std::size_t i = 0; i < g.points; ++i) f[i] = {u(rng), u(rng)};

        dft(f);  // warm the twiddle cache before timing
        double fft_ms = 1e300;
        LatticeField plan_out(g);
        for (int rep = 0; rep < 3; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            plan_out = dft(f);
            const auto t1 = std::chrono::steady_clock::now();
            fft_ms = std::min(fft_ms, std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        const auto t2 = std::chrono::steady_clock::now();
        const auto naive_out = dft_naive(f);
        const auto t3 = std::chrono::steady_clock::now();
        const double naive_ms = std::chrono::duration<double, std::milli>(t3 - t2).count();

        double diff = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) {
            diff = std::max(diff, std::abs(plan_out[i] - naive_out[i]));
            scale = std::max(scale, std::abs(naive_out[i]));
        }
        const bool ok = diff <= 1e-10 * (1.0 + scale);
        gate_ok = gate_ok && ok;

        std::string line = std::to_string(g.axis);
        char buf[64];
        std::snprintf(buf, sizeof buf, ",%.4f,%.4f,%.3f,", fft_ms, naive_ms,
                      naive_ms / std::max(fft_ms, 1e-9));
        line += buf;
        line += fmt_double(diff);
        line += ',' + std::string(ok ? "1" : "0");
        rows.push_back(line);
        std::cout << "bench: size " << g.axis << " fast " << fft_ms << " ms, naive "
                  << naive_ms << " ms, gate " << (ok ? "ok" : "FAIL") << "\n";
    }
    write_csv(out_path(global, "bench.csv"),
              "size,fft_ms,naive_ms,speedup,max_abs_diff,gate", rows);
    json params{{"p", p}, {"levels", levels}, {"gate_ok", gate_ok}};
    emit_manifest(global, "bench", pick_tol(global, 1e-10), params, {"bench.csv"});
    if (!gate_ok) {
        std::cout << "[FAIL] fast transform disagrees with the direct sum\n";
        return 3;
    }
    return 0;
}

// ---------------------------------------------------------------------------
// selftest

int run_selftest(const GlobalOpts& global) {
    struct Check {
        std::string name;
        bool pass = false;
        double measure = 0.0;
    };
    std::vector<Check> checks;
    std::mt19937 rng(20260823);
    auto rand_field = [&rng](const LatticeGeometry& g) {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        LatticeField f(g);
        for (std::size_t i = 0; i < g.points; ++i) f[i] = {u(rng), u(rng)};
        return f;
    };

    {  // norm preservation of the transform
        double worst = 0.0;
        for (long p : {2L, 3L}) {
            LatticeGeometry g(p, 1, 2);
            const auto f = rand_field(g);
            worst = std::max(worst, std::abs(norm0(f) - norm0(dft(f))) / norm0(f));
        }
        checks.push_back({"transform preserves the L2 norm", worst < 1e-12, worst});
    }
    {  // double transform is the point reflection
        LatticeGeometry g(3, 2, 1);
        const auto f = rand_field(g);
        const auto ff = dft(dft(f));
        const auto rf = reflect(f);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) worst = std::max(worst, std::abs(ff[i] - rf[i]));
        checks.push_back({"double transform reflects the argument", worst < 1e-12, worst});
    }
    {  // fast path vs direct sum
        LatticeGeometry g(3, 1, 2);
        const auto f = rand_field(g);
        const auto a = dft(f);
        const auto b = dft_naive(f);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
        checks.push_back({"fast transform equals the direct sum", worst < 1e-10, worst});
    }
    {  // unit-ball indicator is a fixed point
        LatticeGeometry g(3, 1, 2);
        const auto ind = ball_indicator(g, 0);
        const auto t = dft(ind);
        double worst = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) worst = std::max(worst, std::abs(t[i] - ind[i]));
        checks.push_back({"unit-ball indicator is transform-invariant", worst < 1e-12, worst});
    }
    {  // resolvent identity
        LatticeGeometry g(3, 1, 2);
        SymbolSpec s;
        s.poly = poly_power(3, 2);
        const auto G = green_build(s, g);
        const auto f = rand_field(g);
        const auto back = apply_operator(s, green_apply(G, f));
        double worst = 0.0;
        for (std::size_t i = 0; i < g.points; ++i) worst = std::max(worst, std::abs(back[i] - f[i]));
        checks.push_back({"operator inverts its resolvent kernel", worst < 1e-9, worst});
    }
    {  // product transform identity
        LatticeGeometry g(3, 1, 1);
        double worst = 0.0;
        for (int t = 0; t < 5; ++t) {
            ChaosVector a(g, 2), b(g, 2);
            a.add_term(0, cd(0.3, 0.1), {});
            a.add_term(1, cd(1.0, 0.0), {rand_field(g)});
            b.add_term(0, cd(-0.2, 0.4), {});
            b.add_term(1, cd(0.5, -0.5), {rand_field(g)});
            const auto prod = wick_product(a, b);
            const auto f = rand_field(g);
            const cd lhs = s_transform(prod, f);
            const cd rhs = s_transform(a, f) * s_transform(b, f);
            worst = std::max(worst, std::abs(lhs - rhs) / (1.0 + std::abs(rhs)));
        }
        checks.push_back({"product transform factorizes", worst < 1e-10, worst});
    }
    {  // squared first-order vector evaluates through the degree-2 recursion
        LatticeGeometry g(3, 1, 1);
        const auto f = rand_field(g);
        const auto sq = wick_power(ChaosVector::first_order(f, 2), 2);
        double worst = 0.0;
        for (int r = 0; r < 5; ++r) {
            const auto w = sample_gaussian_white(g, global.seed, static_cast<std::uint64_t>(r));
            const cd x = pair_field(w, f);
            const cd expect = x * x - pair0(f, f);
            const cd got = chaos_eval(sq, w);
            worst = std::max(worst, std::abs(got - expect) / (1.0 + std::abs(expect)));
        }
        checks.push_back({"squared vector matches the quadratic recursion", worst < 1e-10, worst});
    }
    {  // partition counts
        const bool ok = bell_number(1) == 1 && bell_number(2) == 2 && bell_number(3) == 5 &&
                        bell_number(4) == 15 && bell_number(5) == 52 &&
                        set_partitions(4).size() == 15;
        checks.push_back({"partition counts match the Bell numbers", ok, 0.0});
    }
    {  // admissibility screening
        LevySpec gauss;
        gauss.sigma = 1.0;
        const auto ok_g = !bochner_validate(exponent_from_levy(gauss), default_bochner_grid(), 1e-10).rejected;
        InteractionH quartic;
        quartic.coeffs = {cd(0, 0), cd(0, 0), cd(0, 0), cd(24.0, 0.0)};
        const auto rej = bochner_validate(h_to_levy(quartic), default_bochner_grid(), 1e-10).rejected;
        checks.push_back({"screening accepts Gaussian and rejects quartic", ok_g && rej, 0.0});
    }
    {  // free pair correlation identity
        LatticeGeometry g(3, 1, 2);
        SymbolSpec s;
        s.poly = poly_power(3, 2);
        const auto G = green_build(s, g);
        const auto f1 = rand_field(g), f2 = rand_field(g);
        InteractionH h0;
        const double got = schwinger_analytic(h0, G, {f1, f2});
        const double expect = pair0(green_apply(G, f1), green_apply(G, f2)).real();
        const double gap = std::abs(got - expect) / (1.0 + std::abs(expect));
        checks.push_back({"free pair correlation equals the smoothed pairing", gap < 1e-10, gap});
    }

    std::vector<std::string> rows;
    bool all = true;
    for (const auto& c : checks) {
        all = all && c.pass;
        std::cout << (c.pass ? "[PASS] " : "[FAIL] ") << c.name << " (measure " << c.measure
                  << ")\n";
        std::string line = '"' + c.name + '"';
        line += ',' + std::string(c.pass ? "1" : "0");
        line += ',' + fmt_double(c.measure);
        rows.push_back(line);
    }
    write_csv(out_path(global, "selftest.csv"), "check,pass,measure", rows);
    emit_manifest(global, "selftest", pick_tol(global, -1.0), json{{"checks", checks.size()}},
                  {"selftest.csv"});
    std::cout << (all ? "selftest: all checks passed\n" : "selftest: FAILURES present\n");
    return all ? 0 : 3;
}

}  // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
    CLI::App app{"p-adic field workbench: Green functions, noise samplers, Wick calculus, "
                 "correlation functions"};
    app.set_help_flag("--help", "print this help message and exit");
    app.set_version_flag("--version", QPFIELD_VERSION);
    app.require_subcommand(1);

    GlobalOpts global;
    const char* env_dir = std::getenv("QPFIELD_OUT_DIR");
    global.out_dir = env_dir ? env_dir : ".";
    app.add_option("--seed", global.seed, "base seed for all samplers");
    app.add_option("--threads", global.threads, "reserved; recorded in the manifest")
        ->check(CLI::Range(1, 256));
    app.add_option("--tol", global.tol, "tolerance override for the command's gate");
    app.add_option("--out-dir", global.out_dir,
                   "output directory (default: $QPFIELD_OUT_DIR or .)");

    int rc = 0;

    // green + covariance (decay-scan alias)
    auto add_green_like = [&](const std::string& name, const std::string& desc) {
        auto* c = add_cmd(app, name, desc);
        auto go = std::make_shared<GeoOpts>();
        auto so = std::make_shared<SymOpts>();
        add_geo(c, *go);
        add_sym(c, *so);
        c->callback([&rc, &global, go, so, name] { rc = run_green(global, *go, *so, name); });
    };
    add_green_like("green", "build a Green function; emit kernel and decay tables");
    add_green_like("covariance", "free-field covariance profile (decay scan of the kernel)");

    {
        auto* c = add_cmd(app, "sample", "draw noise samples (white or smoothed)");
        auto go = std::make_shared<GeoOpts>();
        auto so = std::make_shared<SymOpts>();
        auto no = std::make_shared<NoiseOpts>();
        auto n_samples = std::make_shared<int>(100);
        auto mode = std::make_shared<std::string>("white");
        auto field_out = std::make_shared<std::string>();
        add_geo(c, *go);
        add_sym(c, *so);
        add_noise(c, *no);
        c->add_option("--n-samples", *n_samples, "number of replicas")->check(CLI::Range(1, 1000000));
        c->add_option("--mode", *mode, "white | convolved")->check(CLI::IsMember({"white", "convolved"}));
        c->add_option("--field-out", *field_out, "also write replica 0 as a field CSV");
        c->callback([&rc, &global, go, so, no, n_samples, mode, field_out] {
            rc = run_sample(global, *go, *so, *no, *n_samples, *mode, *field_out);
        });
    }
    {
        auto* c = add_cmd(app, "schwinger",
                                     "correlation values of point insertions by all routes");
        auto go = std::make_shared<GeoOpts>();
        auto so = std::make_shared<SymOpts>();
        auto no = std::make_shared<NoiseOpts>();
        auto cells = std::make_shared<std::string>("0,1");
        auto mc = std::make_shared<int>(-1);
        auto no_chaos = std::make_shared<bool>(false);
        add_geo(c, *go);
        add_sym(c, *so);
        add_noise(c, *no);
        c->add_option("--cells", *cells, "comma-separated insertion cell indices");
        c->add_option("--mc-samples", *mc,
                      "Monte Carlo replicas (0 disables; default: 400 when the noise "
                      "is sampleable)");
        c->add_flag("--no-chaos", *no_chaos, "skip the chaos-coefficient route");
        c->callback([&rc, &global, go, so, no, cells, mc, no_chaos] {
            rc = run_schwinger(global, *go, *so, *no, *cells, *mc, *no_chaos);
        });
    }
    {
        auto* c = add_cmd(app, "cluster", "decay of correlations under block separation");
        auto go = std::make_shared<GeoOpts>();
        go->K = 4;
        auto so = std::make_shared<SymOpts>();
        auto no = std::make_shared<NoiseOpts>();
        auto direction = std::make_shared<int>(0);
        auto max_step = std::make_shared<int>(0);
        auto fit_lo = std::make_shared<int>(0);
        auto fit_hi = std::make_shared<int>(0);
        auto ball_r = std::make_shared<int>(-999);
        add_geo(c, *go);
        add_sym(c, *so);
        add_noise(c, *no);
        c->add_option("--direction", *direction, "axis along which the blocks separate");
        c->add_option("--max-step", *max_step, "largest separation exponent (default K)");
        c->add_option("--fit-lo", *fit_lo, "first step of the slope fit (default K-3)");
        c->add_option("--fit-hi", *fit_hi, "last step of the slope fit (default K-1)");
        c->add_option("--ball-r", *ball_r, "use ball indicators of this radius exponent "
                                           "instead of point sources");
        c->callback([&rc, &global, go, so, no, direction, max_step, fit_lo, fit_hi, ball_r] {
            rc = run_cluster(global, *go, *so, *no, *direction, *max_step, *fit_lo, *fit_hi,
                             *ball_r);
        });
    }
    {
        auto* c = add_cmd(app, "wick", "transform coefficients of the interaction "
                                             "density against the closed form");
        auto go = std::make_shared<GeoOpts>();
        go->K = 1;
        auto no = std::make_shared<NoiseOpts>();
        auto order = std::make_shared<int>(4);
        auto scale = std::make_shared<double>(1.0);
        add_geo(c, *go);
        add_noise(c, *no);
        c->add_option("--order", *order, "highest coefficient order")->check(CLI::Range(1, 8));
        c->add_option("--scale", *scale, "scaling of the unit-ball test function");
        c->callback([&rc, &global, go, no, order, scale] {
            rc = run_wick(global, *go, *no, *order, *scale);
        });
    }
    {
        auto* c = add_cmd(app, "levy-check", "screen a candidate exponent for "
                                                   "admissibility");
        auto no = std::make_shared<NoiseOpts>();
        add_noise(c, *no);
        c->callback([&rc, &global, no] { rc = run_levy_check(global, *no); });
    }
    {
        auto* c = add_cmd(app, "bench", "time the fast transform against the direct sum");
        auto p = std::make_shared<long>(3);
        auto levels = std::make_shared<std::vector<int>>();
        c->add_option("--p", *p, "prime base")->check(CLI::Range(2L, 97L));
        c->add_option("--levels", *levels, "window depths to time (sizes p^2K)")
            ->check(CLI::Range(1, 7));
        c->callback([&rc, &global, p, levels] { rc = run_bench(global, *p, *levels); });
    }
    {
        auto* c = add_cmd(app, "selftest", "run the condensed invariant suite");
        c->callback([&rc, &global] { rc = run_selftest(global); });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return rc;
}
