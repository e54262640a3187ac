#pragma once

// Shared small utilities: error types, hashing, normal distribution helpers,
// least-squares line fits, and the dual-scale log representation used for
// probability lower bounds whose exponents can exceed double range.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace voltube {

inline constexpr const char* kVersion = "0.1.0";

// Raised for malformed configuration input (CLI exit code 2).
struct config_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a model fails the regularity/growth hypothesis check (CLI exit code 3).
struct hypothesis_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised on numerical failure: non-finite values, non-convergence (CLI exit code 4).
struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline double norm_pdf(double x) {
    return std::exp(-0.5 * x * x) * 0.5 * std::numbers::sqrt2 * std::numbers::inv_sqrtpi;
}

// Standard normal CDF via erfc; accurate deep into both tails.
inline double norm_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// FNV-1a 64-bit hash; stable across platforms, used for config/spec fingerprints.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Ordinary least squares fit y = intercept + slope * x.
struct LinearFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double slope_stderr = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_points = 0;
};

inline LinearFit fit_line(const std::vector<double>& xs, const std::vector<double>& ys) {
    if (xs.size() != ys.size()) throw std::invalid_argument("fit_line: size mismatch");
    const std::size_t n = xs.size();
    if (n < 2) throw std::invalid_argument("fit_line: need at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = xs[i] - mx;
        const double dy = ys[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0.0) throw std::invalid_argument("fit_line: degenerate abscissae");
    LinearFit f;
    f.n_points = n;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ss_res = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = ys[i] - (f.intercept + f.slope * xs[i]);
        ss_res += r * r;
    }
    f.r_squared = (syy > 0.0) ? 1.0 - ss_res / syy : 1.0;
    if (n > 2) {
        f.slope_stderr = std::sqrt(ss_res / (static_cast<double>(n - 2) * sxx));
    } else {
        f.slope_stderr = 0.0;
    }
    return f;
}

// Natural-log lower bound on a probability, P >= exp(-exp(log_const + log_var)).
//
// The certified exponents can reach magnitudes around 1e62, where a plain
// double cannot resolve the y- or correlation-dependence on top of the
// constant part (ulp(1e62) ~ 1e46).  The exponent is therefore kept factored:
// `log_const` carries the time-constant chain (shared across a scan) and
// `log_var` the moderate, scan-dependent factors.  Comparisons inside a scan
// reduce to comparing `log_var` exactly.
struct LogBound {
    double log_const = 0.0;  // log of the constant-chain factor of the exponent
    double log_var = 0.0;    // log of the psi(rho_bar)/|y|-type factors

    // log of the exponent magnitude, i.e. log(-log(bound)).
    double log_neg() const { return log_const + log_var; }

    // ln of the bound itself; -inf when the exponent overflows double range.
    double log_value() const { return -std::exp(log_neg()); }
};

}  // namespace voltube
