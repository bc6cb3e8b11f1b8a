#pragma once

/// Tiny least-squares helpers for decay-law diagnostics.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qpfield {

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double ssr = 0.0;  // sum of squared residuals
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit: need >= 2 points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    const double den = n * sxx - sx * sx;
    if (den == 0) throw std::invalid_argument("linear_fit: degenerate abscissae");
    LinearFit f;
    f.slope = (n * sxy - sx * sy) / den;
    f.intercept = (sy - f.slope * sx) / n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - (f.intercept + f.slope * x[i]);
        f.ssr += r * r;
    }
    return f;
}

}  // namespace qpfield
