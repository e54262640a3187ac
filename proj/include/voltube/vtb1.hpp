#pragma once

// VTB1: flat binary container for simulated path batches.
//
//   bytes 0..3   magic "VTB1"
//   u32          format version (1)
//   u64          model spec hash
//   u64          n_paths
//   u64          n_steps
//   u64          seed
//   u32          scheme id
//   f64          t0
//   f64          T
//   f64[...]     xs, row-major, n_paths * (n_steps + 1)
//   f64[...]     vs, same shape
//
// All integers and doubles are little-endian.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "voltube/common.hpp"
#include "voltube/simulate.hpp"

namespace voltube {

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "VTB1 I/O assumes a little-endian host");

template <typename T>
void put_raw(std::ostream& os, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    os.write(buf, sizeof(T));
}

template <typename T>
T get_raw(std::istream& is) {
    char buf[sizeof(T)];
    is.read(buf, sizeof(T));
    if (!is) throw numeric_error("VTB1: truncated file");
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

inline void write_vtb1(const std::string& path, const PathBatch& b) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw config_error("cannot open for writing: " + path);
    os.write("VTB1", 4);
    detail::put_raw<std::uint32_t>(os, 1);
    detail::put_raw<std::uint64_t>(os, b.spec_hash);
    detail::put_raw<std::uint64_t>(os, b.n_paths);
    detail::put_raw<std::uint64_t>(os, b.n_steps);
    detail::put_raw<std::uint64_t>(os, b.seed);
    detail::put_raw<std::uint32_t>(os, static_cast<std::uint32_t>(b.scheme));
    detail::put_raw<double>(os, b.t0);
    detail::put_raw<double>(os, b.T);
    os.write(reinterpret_cast<const char*>(b.xs.data()),
             static_cast<std::streamsize>(b.xs.size() * sizeof(double)));
    os.write(reinterpret_cast<const char*>(b.vs.data()),
             static_cast<std::streamsize>(b.vs.size() * sizeof(double)));
    if (!os) throw numeric_error("VTB1: write failed: " + path);
}

inline PathBatch read_vtb1(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw config_error("cannot open for reading: " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "VTB1", 4) != 0)
        throw numeric_error("VTB1: bad magic in " + path);
    const auto version = detail::get_raw<std::uint32_t>(is);
    if (version != 1) throw numeric_error("VTB1: unsupported version " + std::to_string(version));
    PathBatch b;
    b.spec_hash = detail::get_raw<std::uint64_t>(is);
    b.n_paths = detail::get_raw<std::uint64_t>(is);
    b.n_steps = detail::get_raw<std::uint64_t>(is);
    b.seed = detail::get_raw<std::uint64_t>(is);
    const auto scheme_id = detail::get_raw<std::uint32_t>(is);
    if (scheme_id > 1) throw numeric_error("VTB1: unknown scheme id");
    b.scheme = static_cast<Scheme>(scheme_id);
    b.t0 = detail::get_raw<double>(is);
    b.T = detail::get_raw<double>(is);
    if (b.n_steps == 0 || !(b.T > b.t0)) throw numeric_error("VTB1: invalid header");
    b.dt = (b.T - b.t0) / static_cast<double>(b.n_steps);
    const std::size_t n = b.n_paths * (b.n_steps + 1);
    b.xs.resize(n);
    b.vs.resize(n);
    is.read(reinterpret_cast<char*>(b.xs.data()), static_cast<std::streamsize>(n * sizeof(double)));
    is.read(reinterpret_cast<char*>(b.vs.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!is) throw numeric_error("VTB1: truncated payload in " + path);
    return b;
}

}  // namespace voltube
