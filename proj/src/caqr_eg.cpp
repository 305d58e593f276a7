#include "caqrsim/caqr_eg.hpp"

#include "caqrsim/collectives.hpp"
#include "caqrsim/matmul.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace caqrsim::caqr {

using dense::Matrix;
using matmul::GridShape;
using matmul::Role3d;

namespace {

void warn_once(std::vector<std::string>* warnings, const std::string& msg) {
  if (!warnings) return;
  if (std::find(warnings->begin(), warnings->end(), msg) == warnings->end()) {
    warnings->push_back(msg);
  }
}

int clamp_int(long long v, int lo, int hi) {
  if (v < lo) return lo;
  if (v > hi) return hi;
  return static_cast<int>(v);
}

} // namespace

int params_1d(int n, int p, double epsilon) {
  const double lg = std::log2(static_cast<double>(std::max(p, 2)));
  const double denom = std::pow(lg, epsilon);
  return clamp_int(static_cast<long long>(std::ceil(n / denom)), 1, n);
}

Params3d params_3d(long long m, int n, int p, double delta, double epsilon) {
  const double ratio =
      std::max(static_cast<double>(n) * p / static_cast<double>(m), 1.0);
  const int b = clamp_int(
      static_cast<long long>(std::ceil(n / std::pow(ratio, delta))), 1, n);
  const double lg = std::log2(static_cast<double>(std::max(p, 2)));
  const int b_star = clamp_int(
      static_cast<long long>(std::ceil(b / std::pow(lg, epsilon))), 1, b);
  return {b, b_star};
}

// ---------------------------------------------------------------------------
// 1D algorithm
// ---------------------------------------------------------------------------

namespace {

std::vector<Matrix> col_block(const std::vector<Matrix>& slabs, int c0, int nc) {
  std::vector<Matrix> out;
  out.reserve(slabs.size());
  for (const auto& s : slabs) out.push_back(s.block(0, c0, s.rows(), nc));
  return out;
}

tsqr::Result qr_1d_rec(Machine& m, const std::vector<int>& group,
                       const std::vector<Matrix>& a_slabs, int b) {
  const int p = static_cast<int>(group.size());
  const int n = a_slabs[0].cols();
  if (n <= b) return tsqr::tsqr(m, group, 0, a_slabs);

  const int n1 = n / 2;
  const int n2 = n - n1;
  const auto left = qr_1d_rec(m, group, col_block(a_slabs, 0, n1), b);
  const auto right_cols = col_block(a_slabs, n1, n2);

  // M1 = V_L^T [A12; A22], reduced to the root.
  const Matrix m1 = matmul::mm_1d_reduce(m, group, 0, left.v_slabs, right_cols);
  // M2 = T_L^T M1 on the root.
  const Matrix m2 = matmul::mm_0d(m, group[0], left.t.transposed(), m1);
  // [B12; B22] = [A12; A22] - V_L M2 with a broadcast of M2.
  const auto prods = matmul::mm_1d_broadcast(m, group, 0, left.v_slabs, m2);
  std::vector<Matrix> bmat(static_cast<std::size_t>(p));
  for (int rk = 0; rk < p; ++rk) {
    Matrix d = right_cols[static_cast<std::size_t>(rk)];
    const Matrix& c = prods[static_cast<std::size_t>(rk)];
    for (int i = 0; i < d.rows(); ++i) {
      for (int j = 0; j < d.cols(); ++j) d(i, j) -= c(i, j);
    }
    m.compute(group[static_cast<std::size_t>(rk)],
              static_cast<long long>(d.rows()) * d.cols());
    bmat[static_cast<std::size_t>(rk)] = std::move(d);
  }
  const Matrix b12 = bmat[0].block(0, 0, n1, n2);

  // Right recursion on B22: the root sheds its top n1 rows.
  std::vector<Matrix> b22 = bmat;
  b22[0] = bmat[0].block(n1, 0, bmat[0].rows() - n1, n2);
  const auto right = qr_1d_rec(m, group, b22, b);

  // M3 = V_L^T [0; V_R] over rows n1..m-1.
  std::vector<Matrix> vl_below = left.v_slabs;
  vl_below[0] =
      left.v_slabs[0].block(n1, 0, left.v_slabs[0].rows() - n1, n1);
  const Matrix m3 = matmul::mm_1d_reduce(m, group, 0, vl_below, right.v_slabs);
  // M4 = M3 T_R and the top-right kernel block -T_L M4, on the root.
  const Matrix m4 = matmul::mm_0d(m, group[0], m3, right.t);
  Matrix tr_block = matmul::mm_0d(m, group[0], left.t, m4);
  for (int i = 0; i < tr_block.rows(); ++i) {
    for (int j = 0; j < tr_block.cols(); ++j) tr_block(i, j) = -tr_block(i, j);
  }
  m.compute(group[0], static_cast<long long>(n1) * n2);

  tsqr::Result out;
  out.v_slabs.resize(static_cast<std::size_t>(p));
  for (int rk = 0; rk < p; ++rk) {
    const Matrix& vl = left.v_slabs[static_cast<std::size_t>(rk)];
    Matrix v(vl.rows(), n);
    v.set_block(0, 0, vl);
    const int row0 = rk == 0 ? n1 : 0;
    v.set_block(row0, n1, right.v_slabs[static_cast<std::size_t>(rk)]);
    out.v_slabs[static_cast<std::size_t>(rk)] = std::move(v);
  }
  out.t = Matrix(n, n);
  out.t.set_block(0, 0, left.t);
  out.t.set_block(0, n1, tr_block);
  out.t.set_block(n1, n1, right.t);
  out.r = Matrix(n, n);
  out.r.set_block(0, 0, left.r);
  out.r.set_block(0, n1, b12);
  out.r.set_block(n1, n1, right.r);
  return out;
}

} // namespace

tsqr::Result qr_1d_eg(Machine& m, const std::vector<int>& group,
                      const std::vector<Matrix>& a_slabs, int b,
                      std::vector<std::string>* warnings) {
  const int p = static_cast<int>(group.size());
  if (a_slabs.size() != group.size() || group.empty()) {
    throw std::invalid_argument("qr_1d_eg: one slab per rank required");
  }
  const int n = a_slabs[0].cols();
  if (b < 1) throw std::invalid_argument("qr_1d_eg: b must be positive");
  for (const auto& s : a_slabs) {
    if (s.cols() != n || s.rows() < n) {
      throw std::invalid_argument(
          "qr_1d_eg: every rank must own at least n rows");
    }
  }
  if (static_cast<long long>(p) > static_cast<long long>(b) * b) {
    warn_once(warnings, "qr_1d_eg: cost-bound hypothesis P = O(b^2) violated "
                        "(P = " + std::to_string(p) +
                            ", b = " + std::to_string(b) + ")");
  }
  return qr_1d_rec(m, group, a_slabs, std::min(b, std::max(n, 1)));
}

// ---------------------------------------------------------------------------
// Row-distributed matrices and the 3D multiply wrapper
// ---------------------------------------------------------------------------

Cyclic Cyclic::from_matrix(const Matrix& a, int p) {
  Cyclic c;
  c.cols = a.cols();
  c.owner.resize(static_cast<std::size_t>(a.rows()));
  c.rows.resize(static_cast<std::size_t>(a.rows()));
  for (int i = 0; i < a.rows(); ++i) {
    c.owner[static_cast<std::size_t>(i)] = i % p;
    auto& row = c.rows[static_cast<std::size_t>(i)];
    row.resize(static_cast<std::size_t>(a.cols()));
    for (int j = 0; j < a.cols(); ++j) row[static_cast<std::size_t>(j)] = a(i, j);
  }
  return c;
}

Matrix Cyclic::to_matrix() const {
  Matrix a(static_cast<int>(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < cols; ++j) a(static_cast<int>(i), j) = rows[i][static_cast<std::size_t>(j)];
  }
  return a;
}

namespace {

// Flat entry ids owned by each active grid rank, in shard order; derived
// by sharding an index matrix so both ends of a conversion agree.
std::vector<std::vector<long long>> shard_ids(int rows, int cols,
                                              const GridShape& g, Role3d role) {
  Matrix idx(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      idx(i, j) = static_cast<double>(static_cast<long long>(i) * cols + j);
    }
  }
  const auto shards = matmul::shard_matrix(idx, g, role);
  std::vector<std::vector<long long>> ids(shards.size());
  for (std::size_t s = 0; s < shards.size(); ++s) {
    ids[s].reserve(shards[s].size());
    for (double v : shards[s]) ids[s].push_back(static_cast<long long>(v));
  }
  return ids;
}

struct OpView {
  const Cyclic* mat;
  bool transposed;

  int rows() const {
    return transposed ? mat->cols : static_cast<int>(mat->rows.size());
  }
  int cols() const {
    return transposed ? static_cast<int>(mat->rows.size()) : mat->cols;
  }
  double at(int i, int j) const {
    return transposed ? mat->rows[static_cast<std::size_t>(j)]
                                 [static_cast<std::size_t>(i)]
                      : mat->rows[static_cast<std::size_t>(i)]
                                 [static_cast<std::size_t>(j)];
  }
  int owner_of(int i, int j) const {
    return transposed ? mat->owner[static_cast<std::size_t>(j)]
                      : mat->owner[static_cast<std::size_t>(i)];
  }
};

// Row-distributed operand -> 3DMM shards via a two-phase AlltoAll.
std::vector<std::vector<double>> to_shards(Machine& m,
                                           const std::vector<int>& group,
                                           const OpView& op, const GridShape& g,
                                           Role3d role) {
  const int p = static_cast<int>(group.size());
  const auto ids = shard_ids(op.rows(), op.cols(), g, role);
  std::vector<std::vector<coll::Block>> blocks(
      static_cast<std::size_t>(p), std::vector<coll::Block>(static_cast<std::size_t>(p)));
  for (std::size_t d = 0; d < ids.size(); ++d) {
    for (long long f : ids[d]) {
      const int i = static_cast<int>(f / op.cols());
      const int j = static_cast<int>(f % op.cols());
      blocks[static_cast<std::size_t>(op.owner_of(i, j))][d].push_back(op.at(i, j));
    }
  }
  const auto delivered = coll::all_to_all_two_phase(m, group, blocks);
  std::vector<std::vector<double>> shards(ids.size());
  std::vector<std::size_t> pos(static_cast<std::size_t>(p));
  for (std::size_t d = 0; d < ids.size(); ++d) {
    std::fill(pos.begin(), pos.end(), 0);
    shards[d].reserve(ids[d].size());
    for (long long f : ids[d]) {
      const int i = static_cast<int>(f / op.cols());
      const int j = static_cast<int>(f % op.cols());
      const auto src = static_cast<std::size_t>(op.owner_of(i, j));
      shards[d].push_back(delivered[d][src][pos[src]++]);
    }
  }
  return shards;
}

// 3DMM product shards -> row-distributed result via a two-phase AlltoAll.
Cyclic from_shards(Machine& m, const std::vector<int>& group,
                   const std::vector<std::vector<double>>& c_shards, int ci,
                   int cj, const GridShape& g,
                   const std::vector<int>& out_owner) {
  const int p = static_cast<int>(group.size());
  const auto ids = shard_ids(ci, cj, g, Role3d::C);
  std::vector<std::vector<coll::Block>> blocks(
      static_cast<std::size_t>(p), std::vector<coll::Block>(static_cast<std::size_t>(p)));
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (std::size_t t = 0; t < ids[s].size(); ++t) {
      const int row = static_cast<int>(ids[s][t] / cj);
      blocks[s][static_cast<std::size_t>(out_owner[static_cast<std::size_t>(row)])]
          .push_back(c_shards[s][t]);
    }
  }
  const auto delivered = coll::all_to_all_two_phase(m, group, blocks);
  Cyclic out;
  out.cols = cj;
  out.owner = out_owner;
  out.rows.assign(static_cast<std::size_t>(ci),
                  std::vector<double>(static_cast<std::size_t>(cj), 0.0));
  std::vector<std::vector<std::size_t>> pos(
      static_cast<std::size_t>(p), std::vector<std::size_t>(static_cast<std::size_t>(p), 0));
  for (std::size_t s = 0; s < ids.size(); ++s) {
    for (long long f : ids[s]) {
      const int row = static_cast<int>(f / cj);
      const int col = static_cast<int>(f % cj);
      const auto dst = static_cast<std::size_t>(out_owner[static_cast<std::size_t>(row)]);
      out.rows[static_cast<std::size_t>(row)][static_cast<std::size_t>(col)] =
          delivered[dst][s][pos[dst][s]++];
    }
  }
  return out;
}

// Per-rank concatenation of the rows each rank owns, ascending row index.
std::vector<coll::Block> rows_by_rank(const Cyclic& x, int p) {
  std::vector<coll::Block> blocks(static_cast<std::size_t>(p));
  for (std::size_t i = 0; i < x.rows.size(); ++i) {
    auto& b = blocks[static_cast<std::size_t>(x.owner[i])];
    b.insert(b.end(), x.rows[i].begin(), x.rows[i].end());
  }
  return blocks;
}

} // namespace

Cyclic dist_mm_3d(Machine& m, const std::vector<int>& group, const Cyclic& left,
                  bool left_transposed, const Cyclic& right,
                  const std::vector<int>& out_owner,
                  std::vector<std::string>* warnings) {
  const OpView lv{&left, left_transposed};
  const int ci = lv.rows();
  const int ck = lv.cols();
  const int cj = right.cols;
  if (ck != static_cast<int>(right.rows.size())) {
    throw std::invalid_argument("dist_mm_3d: inner dimensions disagree");
  }
  if (static_cast<int>(out_owner.size()) != ci) {
    throw std::invalid_argument("dist_mm_3d: one output owner per row");
  }
  const int p = static_cast<int>(group.size());
  if (p == 1) {
    Matrix a(ci, ck);
    for (int i = 0; i < ci; ++i) {
      for (int k = 0; k < ck; ++k) a(i, k) = lv.at(i, k);
    }
    const Matrix c = matmul::mm_0d(m, group[0], a, right.to_matrix());
    Cyclic out = Cyclic::from_matrix(c, 1);
    out.owner = out_owner;
    return out;
  }
  GridShape g;
  bool grid_ok = true;
  try {
    g = matmul::choose_grid(ci, cj, ck, p);
  } catch (const std::domain_error& e) {
    grid_ok = false;
    warn_once(warnings, std::string("dist_mm_3d: falling back to a gathered "
                                    "multiply: ") + e.what());
  }
  if (grid_ok) {
    const auto a_shards = to_shards(m, group, lv, g, Role3d::A);
    const auto b_shards = to_shards(m, group, {&right, false}, g, Role3d::B);
    const auto c_shards = matmul::mm_3d(m, group, g, ci, cj, ck, a_shards, b_shards);
    return from_shards(m, group, c_shards, ci, cj, g, out_owner);
  }
  // Fallback: gather both operands at rank 0, multiply, scatter the rows.
  const auto left_rows = coll::gather(m, group, 0, rows_by_rank(left, p));
  const auto right_rows = coll::gather(m, group, 0, rows_by_rank(right, p));
  auto rebuild = [&](const Cyclic& x, const std::vector<coll::Block>& by_rank) {
    Matrix a(static_cast<int>(x.rows.size()), x.cols);
    std::vector<std::size_t> pos(static_cast<std::size_t>(p));
    for (std::size_t i = 0; i < x.rows.size(); ++i) {
      const auto rk = static_cast<std::size_t>(x.owner[i]);
      for (int j = 0; j < x.cols; ++j) {
        a(static_cast<int>(i), j) = by_rank[rk][pos[rk]++];
      }
    }
    return a;
  };
  Matrix a = rebuild(left, left_rows);
  if (left_transposed) a = a.transposed();
  const Matrix c = matmul::mm_0d(m, group[0], a, rebuild(right, right_rows));
  Cyclic out;
  out.cols = cj;
  out.owner = out_owner;
  out.rows.resize(static_cast<std::size_t>(ci));
  std::vector<coll::Block> out_blocks(static_cast<std::size_t>(p));
  for (int i = 0; i < ci; ++i) {
    auto& b = out_blocks[static_cast<std::size_t>(out_owner[static_cast<std::size_t>(i)])];
    for (int j = 0; j < cj; ++j) b.push_back(c(i, j));
  }
  const auto scattered = coll::scatter(m, group, 0, out_blocks);
  std::vector<std::size_t> pos(static_cast<std::size_t>(p));
  for (int i = 0; i < ci; ++i) {
    const auto rk = static_cast<std::size_t>(out_owner[static_cast<std::size_t>(i)]);
    auto& row = out.rows[static_cast<std::size_t>(i)];
    row.assign(scattered[rk].begin() + static_cast<long long>(pos[rk]),
               scattered[rk].begin() + static_cast<long long>(pos[rk]) + cj);
    pos[rk] += static_cast<std::size_t>(cj);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Base-case redistribution and its reversal
// ---------------------------------------------------------------------------

BaseRedist redistribute_base_case(Machine& m, const std::vector<int>& group,
                                  const Cyclic& a, int n) {
  const int p = static_cast<int>(group.size());
  const auto rows = static_cast<long long>(a.rows.size());
  BaseRedist plan;

  // Number the owning processors by first appearance (cyclic order).
  std::vector<int> owner_number(static_cast<std::size_t>(p), -1);
  std::vector<int> owners_in_order;
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const int o = a.owner[i];
    if (owner_number[static_cast<std::size_t>(o)] < 0) {
      owner_number[static_cast<std::size_t>(o)] =
          static_cast<int>(owners_in_order.size());
      owners_in_order.push_back(o);
    }
  }
  const auto p_prime = static_cast<int>(owners_in_order.size());
  plan.p_star = static_cast<int>(
      std::min<long long>(p, rows / std::max(n, 1)));
  plan.p_star = std::max(1, std::min(plan.p_star, p_prime));
  plan.p_dprime = std::min(plan.p_star, n);

  // Phase 1: assign owners to groups (first p_star owners seed the groups
  // as representatives; the rest go to the group with the fewest rows so
  // far, lowest group id on ties, so every representative ends up with at
  // least n rows), then gather each group at its representative.
  plan.member_procs.resize(static_cast<std::size_t>(plan.p_star));
  plan.member_rows.resize(static_cast<std::size_t>(plan.p_star));
  for (int g = 0; g < plan.p_star; ++g) {
    plan.star_group.push_back(group[static_cast<std::size_t>(owners_in_order[static_cast<std::size_t>(g)])]);
  }
  std::vector<std::vector<long long>> owner_rows(static_cast<std::size_t>(p_prime));
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    owner_rows[static_cast<std::size_t>(owner_number[static_cast<std::size_t>(a.owner[i])])]
        .push_back(static_cast<long long>(i));
  }
  // Rows move in whole-owner units, so the candidate P* may leave a group
  // short of n rows; shrink P* until the greedy assignment covers everyone.
  std::vector<int> group_of(static_cast<std::size_t>(p_prime));
  for (;; --plan.p_star) {
    std::vector<long long> group_load(static_cast<std::size_t>(plan.p_star));
    for (int num = 0; num < p_prime; ++num) {
      int g;
      if (num < plan.p_star) {
        g = num;
      } else {
        g = 0;
        for (int cand = 1; cand < plan.p_star; ++cand) {
          if (group_load[static_cast<std::size_t>(cand)] <
              group_load[static_cast<std::size_t>(g)]) {
            g = cand;
          }
        }
      }
      group_of[static_cast<std::size_t>(num)] = g;
      group_load[static_cast<std::size_t>(g)] += static_cast<long long>(
          owner_rows[static_cast<std::size_t>(num)].size());
    }
    if (plan.p_star == 1 ||
        *std::min_element(group_load.begin(), group_load.end()) >= n) {
      break;
    }
  }
  plan.p_dprime = std::min(plan.p_star, n);
  plan.star_group.resize(static_cast<std::size_t>(plan.p_star));
  plan.member_procs.resize(static_cast<std::size_t>(plan.p_star));
  plan.member_rows.resize(static_cast<std::size_t>(plan.p_star));
  std::vector<std::vector<long long>> rep_rows(static_cast<std::size_t>(plan.p_star));
  for (int g = 0; g < plan.p_star; ++g) {
    auto& procs = plan.member_procs[static_cast<std::size_t>(g)];
    auto& rowsets = plan.member_rows[static_cast<std::size_t>(g)];
    for (int num = 0; num < p_prime; ++num) {
      if (group_of[static_cast<std::size_t>(num)] != g) continue;
      const int owner = owners_in_order[static_cast<std::size_t>(num)];
      procs.push_back(group[static_cast<std::size_t>(owner)]);
      rowsets.push_back(owner_rows[static_cast<std::size_t>(num)]);
    }
    std::vector<coll::Block> blocks(procs.size());
    for (std::size_t mi = 0; mi < procs.size(); ++mi) {
      for (long long id : rowsets[mi]) {
        blocks[mi].insert(blocks[mi].end(),
                          a.rows[static_cast<std::size_t>(id)].begin(),
                          a.rows[static_cast<std::size_t>(id)].end());
      }
    }
    coll::gather(m, procs, 0, blocks);
    for (const auto& rs : rowsets) {
      rep_rows[static_cast<std::size_t>(g)].insert(
          rep_rows[static_cast<std::size_t>(g)].end(), rs.begin(), rs.end());
    }
    std::sort(rep_rows[static_cast<std::size_t>(g)].begin(),
              rep_rows[static_cast<std::size_t>(g)].end());
  }

  // Phase 2: gather the top n rows at rank 0; phase 3: scatter matching
  // replacement rows (rank 0's highest-numbered non-top rows).
  plan.top_moved.resize(static_cast<std::size_t>(plan.p_dprime));
  plan.replacement.resize(static_cast<std::size_t>(plan.p_dprime));
  for (int g = 0; g < plan.p_dprime; ++g) {
    for (long long id : rep_rows[static_cast<std::size_t>(g)]) {
      if (id < n) plan.top_moved[static_cast<std::size_t>(g)].push_back(id);
    }
  }
  if (plan.p_dprime > 1) {
    std::vector<int> top_group(plan.star_group.begin(),
                               plan.star_group.begin() + plan.p_dprime);
    std::vector<coll::Block> blocks(static_cast<std::size_t>(plan.p_dprime));
    for (int g = 1; g < plan.p_dprime; ++g) {
      for (long long id : plan.top_moved[static_cast<std::size_t>(g)]) {
        blocks[static_cast<std::size_t>(g)].insert(
            blocks[static_cast<std::size_t>(g)].end(),
            a.rows[static_cast<std::size_t>(id)].begin(),
            a.rows[static_cast<std::size_t>(id)].end());
      }
    }
    coll::gather(m, top_group, 0, blocks);

    std::vector<long long> spare;
    for (long long id : rep_rows[0]) {
      if (id >= n) spare.push_back(id);
    }
    long long needed = 0;
    for (int g = 1; g < plan.p_dprime; ++g) {
      needed += static_cast<long long>(plan.top_moved[static_cast<std::size_t>(g)].size());
    }
    std::size_t take = spare.size() - static_cast<std::size_t>(needed);
    std::vector<coll::Block> rblocks(static_cast<std::size_t>(plan.p_dprime));
    for (int g = 1; g < plan.p_dprime; ++g) {
      for (std::size_t t = 0; t < plan.top_moved[static_cast<std::size_t>(g)].size(); ++t) {
        const long long id = spare[take++];
        plan.replacement[static_cast<std::size_t>(g)].push_back(id);
        rblocks[static_cast<std::size_t>(g)].insert(
            rblocks[static_cast<std::size_t>(g)].end(),
            a.rows[static_cast<std::size_t>(id)].begin(),
            a.rows[static_cast<std::size_t>(id)].end());
      }
    }
    coll::scatter(m, top_group, 0, rblocks);
  }

  // Final slabs: rank 0 keeps the top n rows first, everyone else orders
  // rows by ascending global id.
  plan.slabs.resize(static_cast<std::size_t>(plan.p_star));
  plan.slab_rows.resize(static_cast<std::size_t>(plan.p_star));
  std::vector<long long> given_away;
  for (const auto& r : plan.replacement) {
    given_away.insert(given_away.end(), r.begin(), r.end());
  }
  for (int g = 0; g < plan.p_star; ++g) {
    std::vector<long long> held;
    if (g == 0) {
      for (long long id = 0; id < n; ++id) held.push_back(id);
      for (long long id : rep_rows[0]) {
        if (id >= n && std::find(given_away.begin(), given_away.end(), id) ==
                           given_away.end()) {
          held.push_back(id);
        }
      }
    } else {
      for (long long id : rep_rows[static_cast<std::size_t>(g)]) {
        const bool surrendered =
            g < plan.p_dprime &&
            std::find(plan.top_moved[static_cast<std::size_t>(g)].begin(),
                      plan.top_moved[static_cast<std::size_t>(g)].end(),
                      id) != plan.top_moved[static_cast<std::size_t>(g)].end();
        if (!surrendered) held.push_back(id);
      }
      if (g < plan.p_dprime) {
        for (long long id : plan.replacement[static_cast<std::size_t>(g)]) {
          held.push_back(id);
        }
        std::sort(held.begin(), held.end());
      }
    }
    Matrix slab(static_cast<int>(held.size()), a.cols);
    for (std::size_t i = 0; i < held.size(); ++i) {
      for (int j = 0; j < a.cols; ++j) {
        slab(static_cast<int>(i), j) =
            a.rows[static_cast<std::size_t>(held[i])][static_cast<std::size_t>(j)];
      }
    }
    plan.slabs[static_cast<std::size_t>(g)] = std::move(slab);
    plan.slab_rows[static_cast<std::size_t>(g)] = std::move(held);
  }
  return plan;
}

Result3d reverse_base_redistribution(Machine& m, const std::vector<int>& group,
                                     const BaseRedist& plan,
                                     const Cyclic& a_shape,
                                     const tsqr::Result& f) {
  const int n = f.t.rows();
  const int p = static_cast<int>(group.size());
  (void)p;
  // Index the 1D result's rows by global id.
  std::vector<std::vector<double>> v_rows(a_shape.rows.size());
  for (std::size_t g = 0; g < plan.slab_rows.size(); ++g) {
    const Matrix& slab = f.v_slabs[g];
    for (std::size_t i = 0; i < plan.slab_rows[g].size(); ++i) {
      auto& row = v_rows[static_cast<std::size_t>(plan.slab_rows[g][i])];
      row.resize(static_cast<std::size_t>(slab.cols()));
      for (int j = 0; j < slab.cols(); ++j) {
        row[static_cast<std::size_t>(j)] = slab(static_cast<int>(i), j);
      }
    }
  }

  // Reverse phase 3: replacement V-rows return to rank 0.
  if (plan.p_dprime > 1) {
    std::vector<int> top_group(plan.star_group.begin(),
                               plan.star_group.begin() + plan.p_dprime);
    std::vector<coll::Block> blocks(static_cast<std::size_t>(plan.p_dprime));
    for (int g = 1; g < plan.p_dprime; ++g) {
      for (long long id : plan.replacement[static_cast<std::size_t>(g)]) {
        blocks[static_cast<std::size_t>(g)].insert(
            blocks[static_cast<std::size_t>(g)].end(),
            v_rows[static_cast<std::size_t>(id)].begin(),
            v_rows[static_cast<std::size_t>(id)].end());
      }
    }
    coll::gather(m, top_group, 0, blocks);

    // Reverse phase 2: top-row V rows plus the matching T and R rows.
    std::vector<coll::Block> tblocks(static_cast<std::size_t>(plan.p_dprime));
    for (int g = 1; g < plan.p_dprime; ++g) {
      for (long long id : plan.top_moved[static_cast<std::size_t>(g)]) {
        auto& b = tblocks[static_cast<std::size_t>(g)];
        b.insert(b.end(), v_rows[static_cast<std::size_t>(id)].begin(),
                 v_rows[static_cast<std::size_t>(id)].end());
        for (int j = 0; j < n; ++j) b.push_back(f.t(static_cast<int>(id), j));
        for (int j = 0; j < n; ++j) b.push_back(f.r(static_cast<int>(id), j));
      }
    }
    coll::scatter(m, top_group, 0, tblocks);
  }

  // Reverse phase 1: every group scatters its rows (and any top-row T/R
  // rows) back to the original owners.
  for (std::size_t g = 0; g < plan.member_procs.size(); ++g) {
    std::vector<coll::Block> blocks(plan.member_procs[g].size());
    for (std::size_t mi = 0; mi < plan.member_procs[g].size(); ++mi) {
      for (long long id : plan.member_rows[g][mi]) {
        auto& b = blocks[mi];
        b.insert(b.end(), v_rows[static_cast<std::size_t>(id)].begin(),
                 v_rows[static_cast<std::size_t>(id)].end());
        if (id < n) {
          for (int j = 0; j < n; ++j) b.push_back(f.t(static_cast<int>(id), j));
          for (int j = 0; j < n; ++j) b.push_back(f.r(static_cast<int>(id), j));
        }
      }
    }
    coll::scatter(m, plan.member_procs[g], 0, blocks);
  }

  Result3d out;
  out.v.cols = f.v_slabs[0].cols();
  out.v.owner = a_shape.owner;
  out.v.rows = std::move(v_rows);
  out.t.cols = n;
  out.r.cols = n;
  out.t.owner.assign(a_shape.owner.begin(), a_shape.owner.begin() + n);
  out.r.owner = out.t.owner;
  out.t.rows.resize(static_cast<std::size_t>(n));
  out.r.rows.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& tr = out.t.rows[static_cast<std::size_t>(i)];
    auto& rr = out.r.rows[static_cast<std::size_t>(i)];
    tr.resize(static_cast<std::size_t>(n));
    rr.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
      tr[static_cast<std::size_t>(j)] = f.t(i, j);
      rr[static_cast<std::size_t>(j)] = f.r(i, j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// 3D algorithm
// ---------------------------------------------------------------------------

namespace {

Cyclic col_slice(const Cyclic& a, int c0, int nc) {
  Cyclic out;
  out.cols = nc;
  out.owner = a.owner;
  out.rows.resize(a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    out.rows[i].assign(a.rows[i].begin() + c0, a.rows[i].begin() + c0 + nc);
  }
  return out;
}

Cyclic row_slice(const Cyclic& a, int r0) {
  Cyclic out;
  out.cols = a.cols;
  out.owner.assign(a.owner.begin() + r0, a.owner.end());
  out.rows.assign(a.rows.begin() + r0, a.rows.end());
  return out;
}

std::vector<int> top_owners(const Cyclic& a, int k) {
  return {a.owner.begin(), a.owner.begin() + k};
}

Result3d qr_3d_rec(Machine& m, const std::vector<int>& group, const Cyclic& a,
                   int b, int b_star, std::vector<std::string>* warnings) {
  const int n = a.cols;
  if (n <= b) {
    const auto plan = redistribute_base_case(m, group, a, n);
    const auto f = qr_1d_eg(m, plan.star_group, plan.slabs, b_star, warnings);
    return reverse_base_redistribution(m, group, plan, a, f);
  }
  const int n1 = n / 2;
  const int n2 = n - n1;
  const auto left = qr_3d_rec(m, group, col_slice(a, 0, n1), b, b_star, warnings);
  const Cyclic a_right = col_slice(a, n1, n2);
  const auto top1 = top_owners(a, n1);

  // M1 = V_L^T [A12; A22]; M2 = T_L^T M1; C = V_L M2; B = [A12;A22] - C.
  const Cyclic m1 = dist_mm_3d(m, group, left.v, true, a_right, top1, warnings);
  const Cyclic m2 = dist_mm_3d(m, group, left.t, true, m1, top1, warnings);
  const Cyclic c = dist_mm_3d(m, group, left.v, false, m2, a.owner, warnings);
  Cyclic bmat = a_right;
  {
    std::vector<long long> per_proc(static_cast<std::size_t>(group.size()));
    for (std::size_t i = 0; i < bmat.rows.size(); ++i) {
      for (std::size_t j = 0; j < bmat.rows[i].size(); ++j) {
        bmat.rows[i][j] -= c.rows[i][j];
      }
      per_proc[static_cast<std::size_t>(bmat.owner[i])] +=
          static_cast<long long>(bmat.rows[i].size());
    }
    for (std::size_t rk = 0; rk < per_proc.size(); ++rk) {
      if (per_proc[rk] > 0) m.compute(group[rk], per_proc[rk]);
    }
  }

  const auto right = qr_3d_rec(m, group, row_slice(bmat, n1), b, b_star, warnings);

  // M3 = V_L(n1:,:)^T V_R; M4 = M3 T_R; top-right kernel = -T_L M4.
  const Cyclic vl_below = row_slice(left.v, n1);
  const Cyclic m3 = dist_mm_3d(m, group, vl_below, true, right.v, top1, warnings);
  const Cyclic m4 = dist_mm_3d(m, group, m3, false, right.t, top1, warnings);
  Cyclic tr_block = dist_mm_3d(m, group, left.t, false, m4, top1, warnings);
  {
    std::vector<long long> per_proc(static_cast<std::size_t>(group.size()));
    for (std::size_t i = 0; i < tr_block.rows.size(); ++i) {
      for (auto& v : tr_block.rows[i]) v = -v;
      per_proc[static_cast<std::size_t>(tr_block.owner[i])] +=
          static_cast<long long>(tr_block.rows[i].size());
    }
    for (std::size_t rk = 0; rk < per_proc.size(); ++rk) {
      if (per_proc[rk] > 0) m.compute(group[rk], per_proc[rk]);
    }
  }

  // Local assembly of V, T, and R.
  Result3d out;
  out.v.cols = n;
  out.v.owner = a.owner;
  out.v.rows.resize(a.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    auto& row = out.v.rows[i];
    row = left.v.rows[i];
    if (i < static_cast<std::size_t>(n1)) {
      row.insert(row.end(), static_cast<std::size_t>(n2), 0.0);
    } else {
      const auto& vr = right.v.rows[i - static_cast<std::size_t>(n1)];
      row.insert(row.end(), vr.begin(), vr.end());
    }
  }
  out.t.cols = n;
  out.t.owner = top_owners(a, n);
  out.t.rows.resize(static_cast<std::size_t>(n));
  out.r.cols = n;
  out.r.owner = out.t.owner;
  out.r.rows.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& trow = out.t.rows[static_cast<std::size_t>(i)];
    auto& rrow = out.r.rows[static_cast<std::size_t>(i)];
    if (i < n1) {
      trow = left.t.rows[static_cast<std::size_t>(i)];
      trow.insert(trow.end(), tr_block.rows[static_cast<std::size_t>(i)].begin(),
                  tr_block.rows[static_cast<std::size_t>(i)].end());
      rrow = left.r.rows[static_cast<std::size_t>(i)];
      rrow.insert(rrow.end(), bmat.rows[static_cast<std::size_t>(i)].begin(),
                  bmat.rows[static_cast<std::size_t>(i)].end());
    } else {
      trow.assign(static_cast<std::size_t>(n1), 0.0);
      rrow.assign(static_cast<std::size_t>(n1), 0.0);
      const auto& tr = right.t.rows[static_cast<std::size_t>(i - n1)];
      const auto& rr = right.r.rows[static_cast<std::size_t>(i - n1)];
      trow.insert(trow.end(), tr.begin(), tr.end());
      rrow.insert(rrow.end(), rr.begin(), rr.end());
    }
  }
  return out;
}

} // namespace

Result3d qr_3d_eg(Machine& m, const std::vector<int>& group, const Cyclic& a,
                  int b, int b_star, std::vector<std::string>* warnings) {
  const int p = static_cast<int>(group.size());
  const int n = a.cols;
  const auto rows = static_cast<long long>(a.rows.size());
  if (rows < n) throw std::invalid_argument("qr_3d_eg: need m >= n");
  if (b < 1 || b_star < 1 || b_star > b || b > n) {
    throw std::invalid_argument("qr_3d_eg: need 1 <= b_star <= b <= n");
  }
  if (p == 1) {
    const auto f = dense::local_householder_qr(a.to_matrix(), &m, group[0]);
    Result3d out;
    out.v = Cyclic::from_matrix(f.V, 1);
    out.t = Cyclic::from_matrix(f.T, 1);
    out.r = Cyclic::from_matrix(f.R, 1);
    return out;
  }
  if (static_cast<long long>(p) > static_cast<long long>(b) * b) {
    warn_once(warnings, "qr_3d_eg: cost-bound hypothesis P = O(b^2) violated "
                        "(P = " + std::to_string(p) +
                            ", b = " + std::to_string(b) + ")");
  }
  const long long p_star = std::min<long long>(p, rows / std::max(n, 1));
  if (p_star > static_cast<long long>(b_star) * b_star) {
    warn_once(warnings,
              "qr_3d_eg: cost-bound hypothesis P* = O(b*^2) violated (P* = " +
                  std::to_string(p_star) + ", b* = " + std::to_string(b_star) +
                  ")");
  }
  if (static_cast<double>(b) < 2.0 * std::cbrt(static_cast<double>(p))) {
    warn_once(warnings,
              "qr_3d_eg: cost-bound guard b >= 2 P^(1/3) violated (b = " +
                  std::to_string(b) + ", P = " + std::to_string(p) + ")");
  }
  return qr_3d_rec(m, group, a, b, b_star, warnings);
}

} // namespace caqrsim::caqr
