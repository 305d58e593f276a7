#pragma once

#include "caqrsim/dense.hpp"
#include "caqrsim/simcore.hpp"

#include <cstdint>

namespace testutil {

// splitmix64: tiny deterministic generator for test fixtures.
struct Rng {
  std::uint64_t state;

  explicit Rng(std::uint64_t seed) : state(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [-1, 1], bit-stable across platforms.
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-52 - 1.0;
  }

  /// Uniform integer in [0, n).
  int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }
};

inline caqrsim::dense::Matrix random_matrix(int rows, int cols, Rng& rng) {
  caqrsim::dense::Matrix a(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) a(i, j) = rng.uniform();
  }
  return a;
}

inline double diff_norm(const caqrsim::dense::Matrix& a,
                        const caqrsim::dense::Matrix& b) {
  caqrsim::dense::Matrix d = a;
  for (int i = 0; i < d.rows(); ++i) {
    for (int j = 0; j < d.cols(); ++j) d(i, j) -= b(i, j);
  }
  return d.frobenius_norm();
}

inline int count_events(const caqrsim::Trace& t, caqrsim::Event::Kind kind,
                        int proc) {
  int n = 0;
  for (const auto& e : t.events) {
    if (e.kind == kind && e.proc == proc) ++n;
  }
  return n;
}

} // namespace testutil
