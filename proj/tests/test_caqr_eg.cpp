#include "caqrsim/caqr_eg.hpp"

#include "caqrsim/matmul.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <stdexcept>

using namespace caqrsim;
using dense::Matrix;
using testutil::diff_norm;

namespace {

std::vector<int> iota_group(int p) {
  std::vector<int> g(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) g[static_cast<std::size_t>(i)] = i;
  return g;
}

std::vector<Matrix> row_slabs(const Matrix& a, int p) {
  const auto off = matmul::partition_offsets(a.rows(), p);
  std::vector<Matrix> slabs;
  for (int r = 0; r < p; ++r) {
    slabs.push_back(a.block(off[static_cast<std::size_t>(r)], 0,
                            off[static_cast<std::size_t>(r) + 1] -
                                off[static_cast<std::size_t>(r)],
                            a.cols()));
  }
  return slabs;
}

Matrix stack_slabs(const std::vector<Matrix>& slabs) {
  int rows = 0;
  for (const auto& s : slabs) rows += s.rows();
  Matrix a(rows, slabs[0].cols());
  int at = 0;
  for (const auto& s : slabs) {
    a.set_block(at, 0, s);
    at += s.rows();
  }
  return a;
}

double factor_residual(const Matrix& a, const Matrix& v, const Matrix& t,
                       const Matrix& r) {
  Matrix r0(a.rows(), a.cols());
  r0.set_block(0, 0, r);
  const Matrix rebuilt = dense::apply_q_block(v, t, r0, dense::Trans::No);
  return diff_norm(a, rebuilt) / a.frobenius_norm();
}

double factor_orthogonality(const Matrix& v, const Matrix& t) {
  Matrix seed(v.rows(), v.cols());
  seed.set_block(0, 0, Matrix::identity(v.cols()));
  const Matrix q1 = dense::apply_q_block(v, t, seed, dense::Trans::No);
  return diff_norm(dense::local_mm(q1.transposed(), q1),
                   Matrix::identity(v.cols()));
}

double sign_adjusted_r_gap(const Matrix& r, const Matrix& r_oracle) {
  Matrix adj = r;
  for (int i = 0; i < r.rows(); ++i) {
    double dot = 0;
    for (int j = 0; j < r.cols(); ++j) dot += r(i, j) * r_oracle(i, j);
    if (dot < 0) {
      for (int j = 0; j < r.cols(); ++j) adj(i, j) = -r(i, j);
    }
  }
  return diff_norm(adj, r_oracle) / r_oracle.frobenius_norm();
}

bool same_events(const Trace& a, const Trace& b) {
  if (a.events.size() != b.events.size()) return false;
  for (std::size_t i = 0; i < a.events.size(); ++i) {
    const auto& x = a.events[i];
    const auto& y = b.events[i];
    if (x.kind != y.kind || x.proc != y.proc || x.peer != y.peer ||
        x.op_count != y.op_count || x.word_count != y.word_count ||
        x.payload_id != y.payload_id) {
      return false;
    }
  }
  return true;
}

} // namespace

TEST_CASE("recursion threshold parameters") {
  CHECK(caqr::params_1d(64, 16, 1.0) == 16);
  CHECK(caqr::params_1d(64, 16, 0.0) == 64);
  CHECK(caqr::params_1d(64, 1, 1.0) == 64);
  CHECK(caqr::params_1d(5, 1 << 20, 4.0) == 1);

  const auto p1 = caqr::params_3d(1024, 64, 16, 0.5, 1.0);
  CHECK(p1.b == 64); // m >= nP: no shrink
  CHECK(p1.b_star == 16);
  const auto p2 = caqr::params_3d(256, 256, 16, 0.5, 1.0);
  CHECK(p2.b == 64);
  CHECK(p2.b_star == 16);
  const auto p3 = caqr::params_3d(256, 256, 16, 0.0, 1.0);
  CHECK(p3.b == 256);
  const auto p4 = caqr::params_3d(128, 128, 8, 0.5, 1.0);
  CHECK(p4.b == 46);
  CHECK(p4.b_star == 16);
}

TEST_CASE("1D algorithm with b = n delegates to the tree QR") {
  testutil::Rng rng(101);
  const int p = 4;
  const int n = 6;
  const Matrix a = testutil::random_matrix(8 * n, n, rng);
  Machine m1(p);
  const auto f1 = caqr::qr_1d_eg(m1, iota_group(p), row_slabs(a, p), n);
  Machine m2(p);
  const auto f2 = tsqr::tsqr(m2, iota_group(p), 0, row_slabs(a, p));
  CHECK(same_events(m1.trace(), m2.trace()));
  CHECK(diff_norm(f1.r, f2.r) == 0.0);
  CHECK(diff_norm(f1.t, f2.t) == 0.0);
}

TEST_CASE("1D algorithm correctness") {
  testutil::Rng rng(103);
  const int p = 4;
  const int n = 16;
  const Matrix a = testutil::random_matrix(128, n, rng);
  Machine m(p);
  std::vector<std::string> warnings;
  const auto f = caqr::qr_1d_eg(m, iota_group(p), row_slabs(a, p), 4, &warnings);
  CHECK(warnings.empty());
  const Matrix v = stack_slabs(f.v_slabs);
  CHECK(factor_residual(a, v, f.t, f.r) < 1e-10);
  CHECK(factor_orthogonality(v, f.t) < 1e-10);
  const auto oracle = dense::local_householder_qr(a);
  CHECK(sign_adjusted_r_gap(f.r, oracle.R) < 1e-10);
  // R upper triangular, V unit lower trapezoidal at the root slab.
  for (int i = 0; i < n; ++i) {
    CHECK(f.v_slabs[0](i, i) == 1.0);
    for (int j = i + 1; j < n; ++j) CHECK(f.r(j, i) == 0.0);
  }
}

TEST_CASE("1D algorithm edge cases") {
  SUBCASE("n = 1") {
    Matrix a(6, 1);
    for (int i = 0; i < 6; ++i) a(i, 0) = static_cast<double>(i + 1);
    Machine m(2);
    const auto f = caqr::qr_1d_eg(m, iota_group(2), row_slabs(a, 2), 1);
    const Matrix v = stack_slabs(f.v_slabs);
    CHECK(factor_residual(a, v, f.t, f.r) < 1e-12);
  }
  SUBCASE("hypothesis warning when P > b^2") {
    testutil::Rng rng(105);
    const int p = 5;
    const Matrix a = testutil::random_matrix(4 * p, 4, rng);
    Machine m(p);
    std::vector<std::string> w;
    caqr::qr_1d_eg(m, iota_group(p), row_slabs(a, p), 2, &w);
    REQUIRE(w.size() == 1);
    CHECK(w[0].find("P = O(b^2)") != std::string::npos);
  }
  SUBCASE("short slabs rejected") {
    Machine m(2);
    CHECK_THROWS_AS(
        caqr::qr_1d_eg(m, iota_group(2), {Matrix(3, 3), Matrix(2, 3)}, 2),
        std::invalid_argument);
  }
}

TEST_CASE("row-distributed 3D multiply") {
  testutil::Rng rng(107);
  SUBCASE("grid path is exact") {
    const int p = 4;
    const Matrix a = testutil::random_matrix(12, 8, rng);
    const Matrix b = testutil::random_matrix(8, 10, rng);
    Machine m(p);
    const auto ca = caqr::Cyclic::from_matrix(a, p);
    const auto cb = caqr::Cyclic::from_matrix(b, p);
    std::vector<int> owner(12);
    for (int i = 0; i < 12; ++i) owner[static_cast<std::size_t>(i)] = i % p;
    std::vector<std::string> w;
    const auto c = caqr::dist_mm_3d(m, iota_group(p), ca, false, cb, owner, &w);
    CHECK(w.empty());
    CHECK(diff_norm(c.to_matrix(), dense::local_mm(a, b)) < 1e-12);
    CHECK(c.owner == owner);
  }
  SUBCASE("transposed left operand") {
    const int p = 4;
    const Matrix a = testutil::random_matrix(16, 6, rng);
    const Matrix b = testutil::random_matrix(16, 5, rng);
    Machine m(p);
    const auto ca = caqr::Cyclic::from_matrix(a, p);
    const auto cb = caqr::Cyclic::from_matrix(b, p);
    std::vector<int> owner(6);
    for (int i = 0; i < 6; ++i) owner[static_cast<std::size_t>(i)] = i % p;
    const auto c = caqr::dist_mm_3d(m, iota_group(p), ca, true, cb, owner);
    CHECK(diff_norm(c.to_matrix(), dense::local_mm(a.transposed(), b)) < 1e-12);
  }
  SUBCASE("fallback when the grid preconditions fail") {
    const int p = 5;
    const Matrix a = testutil::random_matrix(1, 4, rng);
    const Matrix b = testutil::random_matrix(4, 1, rng);
    Machine m(p);
    const auto ca = caqr::Cyclic::from_matrix(a, p);
    const auto cb = caqr::Cyclic::from_matrix(b, p);
    std::vector<std::string> w;
    const auto c = caqr::dist_mm_3d(m, iota_group(p), ca, false, cb, {2}, &w);
    REQUIRE(w.size() == 1);
    CHECK(w[0].find("falling back") != std::string::npos);
    CHECK(diff_norm(c.to_matrix(), dense::local_mm(a, b)) < 1e-12);
    CHECK(c.owner[0] == 2);
  }
  SUBCASE("P = 1 multiplies locally with no messages") {
    const Matrix a = testutil::random_matrix(3, 3, rng);
    const Matrix b = testutil::random_matrix(3, 3, rng);
    Machine m(1);
    const auto c = caqr::dist_mm_3d(m, {0}, caqr::Cyclic::from_matrix(a, 1),
                                    false, caqr::Cyclic::from_matrix(b, 1),
                                    {0, 0, 0});
    CHECK(diff_norm(c.to_matrix(), dense::local_mm(a, b)) < 1e-12);
    for (const auto& e : m.trace().events) {
      CHECK(e.kind == Event::Kind::Compute);
    }
  }
}

TEST_CASE("base-case redistribution") {
  testutil::Rng rng(109);
  SUBCASE("m = nP: singleton groups, only top rows move") {
    const int p = 4;
    const int n = 2;
    const Matrix a = testutil::random_matrix(8, n, rng);
    Machine m(p);
    const auto plan = caqr::redistribute_base_case(
        m, iota_group(p), caqr::Cyclic::from_matrix(a, p), n);
    CHECK(plan.p_star == 4);
    CHECK(plan.p_dprime == 2);
    CHECK(plan.star_group == iota_group(4));
    // Rank 0 leads with the top n rows in order.
    REQUIRE(plan.slab_rows[0].size() >= 2);
    CHECK(plan.slab_rows[0][0] == 0);
    CHECK(plan.slab_rows[0][1] == 1);
    // Row 1 left rank 1 and was replaced by one of rank 0's spare rows.
    CHECK(plan.top_moved[1] == std::vector<long long>{1});
    REQUIRE(plan.replacement[1].size() == 1);
    CHECK(plan.replacement[1][0] % p == 0);
    // Every slab still owns exactly m / P* rows and stacks to a permutation.
    long long total = 0;
    for (const auto& s : plan.slabs) {
      CHECK(s.rows() == 2);
      total += s.rows();
    }
    CHECK(total == 8);
  }
  SUBCASE("m < nP drops to fewer representatives") {
    const int p = 4;
    const int n = 2;
    const Matrix a = testutil::random_matrix(6, n, rng);
    Machine m(p);
    const auto plan = caqr::redistribute_base_case(
        m, iota_group(p), caqr::Cyclic::from_matrix(a, p), n);
    CHECK(plan.p_star == 3);
    CHECK(plan.p_dprime == 2);
    for (const auto& s : plan.slabs) CHECK(s.rows() >= n);
  }
  SUBCASE("P = 1 is a no-op") {
    const Matrix a = testutil::random_matrix(5, 2, rng);
    Machine m(1);
    const auto plan = caqr::redistribute_base_case(
        m, {0}, caqr::Cyclic::from_matrix(a, 1), 2);
    CHECK(plan.p_star == 1);
    CHECK(m.trace().events.empty());
    CHECK(diff_norm(plan.slabs[0], a) == 0.0);
  }
  SUBCASE("slabs hold the right rows") {
    const int p = 3;
    const int n = 2;
    const Matrix a = testutil::random_matrix(9, n, rng);
    Machine m(p);
    const auto plan = caqr::redistribute_base_case(
        m, iota_group(p), caqr::Cyclic::from_matrix(a, p), n);
    for (std::size_t g = 0; g < plan.slabs.size(); ++g) {
      for (std::size_t i = 0; i < plan.slab_rows[g].size(); ++i) {
        for (int j = 0; j < n; ++j) {
          CHECK(plan.slabs[g](static_cast<int>(i), j) ==
                a(static_cast<int>(plan.slab_rows[g][i]), j));
        }
      }
    }
  }
}

TEST_CASE("3D algorithm correctness") {
  testutil::Rng rng(111);
  SUBCASE("P = 1 equals the local QR") {
    const Matrix a = testutil::random_matrix(7, 4, rng);
    Machine m(1);
    const auto f = caqr::qr_3d_eg(m, {0}, caqr::Cyclic::from_matrix(a, 1), 4, 2);
    const auto oracle = dense::local_householder_qr(a);
    CHECK(diff_norm(f.v.to_matrix(), oracle.V) == 0.0);
    CHECK(diff_norm(f.t.to_matrix(), oracle.T) == 0.0);
    CHECK(diff_norm(f.r.to_matrix(), oracle.R) == 0.0);
  }
  SUBCASE("base case only (b = n)") {
    const int p = 3;
    const int n = 4;
    const Matrix a = testutil::random_matrix(24, n, rng);
    Machine m(p);
    const auto f = caqr::qr_3d_eg(m, iota_group(p),
                                  caqr::Cyclic::from_matrix(a, p), n, n);
    CHECK(factor_residual(a, f.v.to_matrix(), f.t.to_matrix(),
                          f.r.to_matrix()) < 1e-10);
    CHECK(f.v.owner == caqr::Cyclic::from_matrix(a, p).owner);
  }
  SUBCASE("full recursion") {
    const int p = 4;
    const int n = 16;
    const Matrix a = testutil::random_matrix(64, n, rng);
    Machine m(p);
    std::vector<std::string> w;
    const auto f = caqr::qr_3d_eg(m, iota_group(p),
                                  caqr::Cyclic::from_matrix(a, p), 8, 4, &w);
    const Matrix v = f.v.to_matrix();
    const Matrix t = f.t.to_matrix();
    const Matrix r = f.r.to_matrix();
    CHECK(factor_residual(a, v, t, r) < 1e-10);
    CHECK(factor_orthogonality(v, t) < 1e-10);
    const auto oracle = dense::local_householder_qr(a);
    CHECK(sign_adjusted_r_gap(r, oracle.R) < 1e-10);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) CHECK(r(i, j) == 0.0);
    }
  }
  SUBCASE("square matrix, m = n") {
    const int p = 2;
    const int n = 8;
    const Matrix a = testutil::random_matrix(n, n, rng);
    Machine m(p);
    const auto f = caqr::qr_3d_eg(m, iota_group(p),
                                  caqr::Cyclic::from_matrix(a, p), 4, 2);
    CHECK(factor_residual(a, f.v.to_matrix(), f.t.to_matrix(),
                          f.r.to_matrix()) < 1e-10);
  }
  SUBCASE("parameter validation") {
    Machine m(2);
    const Matrix a = testutil::random_matrix(4, 4, rng);
    CHECK_THROWS_AS(caqr::qr_3d_eg(m, iota_group(2),
                                   caqr::Cyclic::from_matrix(a, 2), 2, 4),
                    std::invalid_argument);
    const Matrix wide = testutil::random_matrix(2, 4, rng);
    CHECK_THROWS_AS(caqr::qr_3d_eg(m, iota_group(2),
                                   caqr::Cyclic::from_matrix(wide, 2), 2, 2),
                    std::invalid_argument);
  }
}
