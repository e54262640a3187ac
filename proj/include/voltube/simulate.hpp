#pragma once

// Monte Carlo path generation for the square-root LSV model
//   dX = -1/2 eta(t,X)^2 V dt + eta(t,X) sqrt(V) (rho dW1 + rho_bar dW2)
//   dV = beta(t,V) dt + sigma(t,V) sqrt(V) dW1
// with counter-based noise: the Gaussian pair for (path p, step k) depends only
// on (seed, p, k, stream), so results are independent of scheduling and worker
// count.  Chunked drivers fold fixed-size chunks in chunk order for bitwise
// determinism at any thread count.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "voltube/common.hpp"
#include "voltube/model.hpp"
#include "voltube/rng.hpp"

namespace voltube {

enum class Scheme : std::uint32_t {
    euler_full_truncation = 0,  // signed internal V, coefficients at V^+
    euler_reflection = 1,       // V reflected to |V| after each step
};

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::euler_full_truncation: return "euler_full_truncation";
        case Scheme::euler_reflection: return "euler_reflection";
    }
    throw std::invalid_argument("scheme_name: unknown scheme");
}

inline Scheme scheme_from_name(std::string_view name) {
    if (name == "euler_full_truncation") return Scheme::euler_full_truncation;
    if (name == "euler_reflection") return Scheme::euler_reflection;
    throw config_error("unknown scheme: " + std::string(name));
}

// Default step count: 400 steps per unit of horizon, floor of 400.
inline std::size_t default_n_steps(double T) {
    if (!(T > 0.0)) throw std::invalid_argument("default_n_steps: T must be positive");
    return T <= 1.0 ? 400 : static_cast<std::size_t>(std::ceil(400.0 * T));
}

struct PathBatch {
    std::size_t n_paths = 0;
    std::size_t n_steps = 0;
    double t0 = 0.0;
    double T = 0.0;
    double dt = 0.0;
    Scheme scheme = Scheme::euler_full_truncation;
    std::uint64_t seed = 0;
    std::uint64_t spec_hash = 0;
    std::vector<double> xs;  // row-major: path p, knot k at p*(n_steps+1)+k
    std::vector<double> vs;  // stored variance is V^+ (always >= 0)

    double x(std::size_t p, std::size_t k) const { return xs[p * (n_steps + 1) + k]; }
    double v(std::size_t p, std::size_t k) const { return vs[p * (n_steps + 1) + k]; }
};

namespace detail {

struct PathState {
    double x = 0.0;
    double v_signed = 0.0;  // full truncation keeps the signed value
};

// One Euler step from time t; z1 drives the variance, z2 the orthogonal part.
inline double step_once(const ModelSpec& spec, Scheme scheme, double t, double dt,
                        PathState& st, double z1, double z2) {
    const double vp = std::max(st.v_signed, 0.0);
    const double sq = std::sqrt(vp);
    const double sdt = std::sqrt(dt);
    const double dw1 = sdt * z1;
    const double dw2 = sdt * z2;
    const double e = spec.eta(t, st.x);
    const double rb = spec.rho_bar();
    st.x += -0.5 * e * e * vp * dt + e * sq * (spec.rho * dw1 + rb * dw2);
    const double vn = st.v_signed + spec.beta(t, vp) * dt + spec.sigma(t, vp) * sq * dw1;
    st.v_signed = scheme == Scheme::euler_reflection ? std::abs(vn) : vn;
    return std::max(st.v_signed, 0.0);
}

}  // namespace detail

// Runs one path from (x0, v0) at t0 to T on a uniform grid with n_steps steps.
// visit(k, t_k, x_k, v_k_plus) is called for every knot k = 0..n_steps.
template <typename Visitor>
void run_path(const ModelSpec& spec, Scheme scheme, double x0, double v0, double t0,
              std::size_t n_steps, std::uint64_t seed, std::uint64_t path,
              std::uint32_t stream, Visitor&& visit) {
    if (n_steps == 0) throw std::invalid_argument("run_path: n_steps must be positive");
    if (!(t0 >= 0.0) || !(t0 < spec.T)) throw std::invalid_argument("run_path: need 0 <= t0 < T");
    const double dt = (spec.T - t0) / static_cast<double>(n_steps);
    detail::PathState st{x0, v0};
    visit(std::size_t{0}, t0, st.x, std::max(st.v_signed, 0.0));
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t = t0 + dt * static_cast<double>(k);
        const auto [z1, z2] = rng::normal_pair(seed, path, static_cast<std::uint32_t>(k), stream);
        const double vplus = detail::step_once(spec, scheme, t, dt, st, z1, z2);
        visit(k + 1, t + dt, st.x, vplus);
    }
}

// Full-batch simulation from (x0, v0, t0).  Memory is n_paths*(n_steps+1)*16
// bytes; use simulate_chunked for large runs.
inline PathBatch simulate_conditional(const ModelSpec& spec, double x0, double v0, double t0,
                                      std::size_t n_paths, std::size_t n_steps,
                                      std::uint64_t seed,
                                      Scheme scheme = Scheme::euler_full_truncation) {
    spec.check();
    PathBatch b;
    b.n_paths = n_paths;
    b.n_steps = n_steps;
    b.t0 = t0;
    b.T = spec.T;
    b.dt = (spec.T - t0) / static_cast<double>(n_steps);
    b.scheme = scheme;
    b.seed = seed;
    b.spec_hash = spec.hash();
    b.xs.resize(n_paths * (n_steps + 1));
    b.vs.resize(n_paths * (n_steps + 1));
    for (std::size_t p = 0; p < n_paths; ++p) {
        double* xrow = b.xs.data() + p * (n_steps + 1);
        double* vrow = b.vs.data() + p * (n_steps + 1);
        run_path(spec, scheme, x0, v0, t0, n_steps, seed, p, 0,
                 [&](std::size_t k, double, double x, double v) {
                     xrow[k] = x;
                     vrow[k] = v;
                 });
    }
    return b;
}

// Unconditional simulation from the model's initial state (X0 = 0, V0).
inline PathBatch simulate(const ModelSpec& spec, std::size_t n_paths, std::size_t n_steps,
                          std::uint64_t seed, Scheme scheme = Scheme::euler_full_truncation) {
    return simulate_conditional(spec, 0.0, spec.V0, 0.0, n_paths, n_steps, seed, scheme);
}

inline constexpr std::size_t kChunkPaths = 4096;

// Streaming driver: paths are generated in fixed 4096-path chunks; each chunk
// folds its paths into a chunk-local accumulator via
//   per_path(acc, path_index, xs, vs)
// (xs/vs are that path's n_steps+1 knots), and the chunk accumulators are
// merged in chunk order, so the result does not depend on n_threads.  Acc must
// be default-constructible (identity) and provide merge(const Acc&).
template <typename Acc, typename PerPath>
Acc simulate_chunked(const ModelSpec& spec, Scheme scheme, double x0, double v0, double t0,
                     std::size_t n_paths, std::size_t n_steps, std::uint64_t seed,
                     unsigned n_threads, PerPath&& per_path) {
    spec.check();
    const std::size_t n_chunks = (n_paths + kChunkPaths - 1) / kChunkPaths;
    std::vector<Acc> chunk_accs(n_chunks);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        std::vector<double> xbuf(n_steps + 1), vbuf(n_steps + 1);
        for (;;) {
            const std::size_t chunk = next.fetch_add(1);
            if (chunk >= n_chunks) break;
            const std::size_t lo = chunk * kChunkPaths;
            const std::size_t hi = std::min(n_paths, lo + kChunkPaths);
            Acc acc;
            for (std::size_t p = lo; p < hi; ++p) {
                run_path(spec, scheme, x0, v0, t0, n_steps, seed, p, 0,
                         [&](std::size_t k, double, double x, double v) {
                             xbuf[k] = x;
                             vbuf[k] = v;
                         });
                per_path(acc, p, xbuf, vbuf);
            }
            chunk_accs[chunk] = std::move(acc);
        }
    };
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    Acc total;
    for (auto& a : chunk_accs) total.merge(a);
    return total;
}

}  // namespace voltube
