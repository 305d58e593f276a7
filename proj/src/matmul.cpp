#include "caqrsim/matmul.hpp"

#include "caqrsim/collectives.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace caqrsim::matmul {

using dense::Matrix;

std::vector<int> balanced_partition(int n, int k) {
  if (k < 1) throw std::invalid_argument("balanced_partition: k must be positive");
  std::vector<int> sizes(static_cast<std::size_t>(k), n / k);
  for (int i = 0; i < n % k; ++i) ++sizes[static_cast<std::size_t>(i)];
  return sizes;
}

std::vector<int> partition_offsets(int n, int k) {
  const auto sizes = balanced_partition(n, k);
  std::vector<int> offsets(static_cast<std::size_t>(k) + 1, 0);
  for (int i = 0; i < k; ++i) {
    offsets[static_cast<std::size_t>(i) + 1] =
        offsets[static_cast<std::size_t>(i)] + sizes[static_cast<std::size_t>(i)];
  }
  return offsets;
}

GridShape choose_grid(int i, int j, int k, int p) {
  if (i < 1 || j < 1 || k < 1 || p < 1) {
    throw std::invalid_argument("choose_grid: dimensions must be positive");
  }
  if (p == 1) return {1, 1, 1, 0};
  const double ijk = static_cast<double>(i) * j * k;
  const double mn = static_cast<double>(std::min({i, j, k}));
  if (static_cast<double>(p) < 2.0 * ijk / (mn * mn * mn)) {
    throw std::domain_error(
        "choose_grid: hypothesis 2*I*J*K/min(I,J,K)^3 <= P violated (P = " +
        std::to_string(p) + ")");
  }
  if (static_cast<double>(p) > ijk) {
    throw std::domain_error("choose_grid: hypothesis P <= I*J*K violated (P = " +
                            std::to_string(p) + ")");
  }
  const double rho = std::cbrt(ijk / static_cast<double>(p));
  GridShape g;
  g.q = std::max(1, static_cast<int>(std::floor(static_cast<double>(i) / rho)));
  g.r = std::max(1, static_cast<int>(std::floor(static_cast<double>(j) / rho)));
  g.s = std::max(1, static_cast<int>(std::floor(static_cast<double>(k) / rho)));
  g.t = p - g.active();
  if (g.t < 0) {
    throw std::domain_error("choose_grid: grid exceeds processor count");
  }
  return g;
}

Matrix mm_0d(Machine& m, int proc, const Matrix& a, const Matrix& b) {
  const std::size_t before = m.trace().events.size();
  Matrix c = dense::local_mm(a, b, &m, proc);
  for (std::size_t e = before; e < m.trace().events.size(); ++e) {
    if (m.trace().events[e].kind != Event::Kind::Compute) {
      throw std::logic_error("mm_0d: unexpected communication");
    }
  }
  return c;
}

Matrix mm_1d_reduce(Machine& m, const std::vector<int>& group, int root_rank,
                    const std::vector<Matrix>& a_slabs,
                    const std::vector<Matrix>& b_slabs) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(a_slabs.size()) != p ||
      static_cast<int>(b_slabs.size()) != p) {
    throw std::invalid_argument("mm_1d_reduce: one slab pair per rank");
  }
  const int ci = a_slabs[0].cols();
  const int cj = b_slabs[0].cols();
  std::vector<coll::Block> partials(static_cast<std::size_t>(p));
  for (int r = 0; r < p; ++r) {
    const auto& a = a_slabs[static_cast<std::size_t>(r)];
    const auto& b = b_slabs[static_cast<std::size_t>(r)];
    if (a.rows() != b.rows() || a.cols() != ci || b.cols() != cj) {
      throw std::invalid_argument("mm_1d_reduce: slab layouts do not match");
    }
    const Matrix z =
        dense::local_mm(a.transposed(), b, &m, group[static_cast<std::size_t>(r)]);
    partials[static_cast<std::size_t>(r)] = z.data();
  }
  const coll::Block sum = coll::reduce(m, group, root_rank, partials,
                                       coll::Variant::BidirectionalExchange);
  Matrix c(ci, cj);
  c.data() = sum;
  return c;
}

std::vector<Matrix> mm_1d_broadcast(Machine& m, const std::vector<int>& group,
                                    int root_rank,
                                    const std::vector<Matrix>& a_slabs,
                                    const Matrix& b) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(a_slabs.size()) != p) {
    throw std::invalid_argument("mm_1d_broadcast: one slab per rank");
  }
  coll::broadcast(m, group, root_rank, b.data(),
                  coll::Variant::BidirectionalExchange);
  std::vector<Matrix> out;
  out.reserve(a_slabs.size());
  for (int r = 0; r < p; ++r) {
    const auto& a = a_slabs[static_cast<std::size_t>(r)];
    if (a.cols() != b.rows()) {
      throw std::invalid_argument("mm_1d_broadcast: slab layouts do not match");
    }
    out.push_back(dense::local_mm(a, b, &m, group[static_cast<std::size_t>(r)]));
  }
  return out;
}

namespace {

struct BlockMap {
  // For one role: block row/col partition offsets and the fiber length the
  // flattened block is subpartitioned over.
  std::vector<int> row_off;
  std::vector<int> col_off;
  int fiber = 1;
};

BlockMap role_map(int rows, int cols, const GridShape& g, Role3d role) {
  BlockMap bm;
  switch (role) {
  case Role3d::A:
    bm.row_off = partition_offsets(rows, g.q);
    bm.col_off = partition_offsets(cols, g.s);
    bm.fiber = g.r;
    break;
  case Role3d::B:
    bm.row_off = partition_offsets(rows, g.s);
    bm.col_off = partition_offsets(cols, g.r);
    bm.fiber = g.q;
    break;
  case Role3d::C:
    bm.row_off = partition_offsets(rows, g.q);
    bm.col_off = partition_offsets(cols, g.r);
    bm.fiber = g.s;
    break;
  }
  return bm;
}

int shard_rank(const GridShape& g, Role3d role, int br, int bc, int f) {
  switch (role) {
  case Role3d::A:
    return g.rank(br, f, bc); // block (q, s), fiber index r
  case Role3d::B:
    return g.rank(f, bc, br); // block (s, r), fiber index q
  case Role3d::C:
  default:
    return g.rank(br, bc, f); // block (q, r), fiber index s
  }
}

} // namespace

std::vector<std::vector<double>> shard_matrix(const Matrix& a,
                                              const GridShape& grid,
                                              Role3d role) {
  const BlockMap bm = role_map(a.rows(), a.cols(), grid, role);
  std::vector<std::vector<double>> shards(
      static_cast<std::size_t>(grid.active()));
  const int nbr = static_cast<int>(bm.row_off.size()) - 1;
  const int nbc = static_cast<int>(bm.col_off.size()) - 1;
  for (int br = 0; br < nbr; ++br) {
    for (int bc = 0; bc < nbc; ++bc) {
      std::vector<double> flat;
      for (int i = bm.row_off[static_cast<std::size_t>(br)];
           i < bm.row_off[static_cast<std::size_t>(br) + 1]; ++i) {
        for (int j = bm.col_off[static_cast<std::size_t>(bc)];
             j < bm.col_off[static_cast<std::size_t>(bc) + 1]; ++j) {
          flat.push_back(a(i, j));
        }
      }
      const auto off =
          partition_offsets(static_cast<int>(flat.size()), bm.fiber);
      for (int f = 0; f < bm.fiber; ++f) {
        shards[static_cast<std::size_t>(shard_rank(grid, role, br, bc, f))]
            .assign(flat.begin() + off[static_cast<std::size_t>(f)],
                    flat.begin() + off[static_cast<std::size_t>(f) + 1]);
      }
    }
  }
  return shards;
}

Matrix unshard_matrix(const std::vector<std::vector<double>>& shards, int rows,
                      int cols, const GridShape& grid, Role3d role) {
  const BlockMap bm = role_map(rows, cols, grid, role);
  Matrix a(rows, cols);
  const int nbr = static_cast<int>(bm.row_off.size()) - 1;
  const int nbc = static_cast<int>(bm.col_off.size()) - 1;
  for (int br = 0; br < nbr; ++br) {
    for (int bc = 0; bc < nbc; ++bc) {
      std::vector<double> flat;
      for (int f = 0; f < bm.fiber; ++f) {
        const auto& s =
            shards[static_cast<std::size_t>(shard_rank(grid, role, br, bc, f))];
        flat.insert(flat.end(), s.begin(), s.end());
      }
      std::size_t pos = 0;
      for (int i = bm.row_off[static_cast<std::size_t>(br)];
           i < bm.row_off[static_cast<std::size_t>(br) + 1]; ++i) {
        for (int j = bm.col_off[static_cast<std::size_t>(bc)];
             j < bm.col_off[static_cast<std::size_t>(bc) + 1]; ++j) {
          a(i, j) = flat[pos++];
        }
      }
    }
  }
  return a;
}

std::vector<std::vector<double>> mm_3d(
    Machine& m, const std::vector<int>& group, const GridShape& grid, int i,
    int j, int k, const std::vector<std::vector<double>>& a_shards,
    const std::vector<std::vector<double>>& b_shards) {
  const int active = grid.active();
  if (static_cast<int>(group.size()) < active) {
    throw std::invalid_argument("mm_3d: group smaller than the grid");
  }
  if (static_cast<int>(a_shards.size()) != active ||
      static_cast<int>(b_shards.size()) != active) {
    throw std::invalid_argument("mm_3d: one shard per active processor");
  }
  const auto ioff = partition_offsets(i, grid.q);
  const auto joff = partition_offsets(j, grid.r);
  const auto koff = partition_offsets(k, grid.s);
  auto isz = [&](int q) { return ioff[static_cast<std::size_t>(q) + 1] - ioff[static_cast<std::size_t>(q)]; };
  auto jsz = [&](int r) { return joff[static_cast<std::size_t>(r) + 1] - joff[static_cast<std::size_t>(r)]; };
  auto ksz = [&](int s) { return koff[static_cast<std::size_t>(s) + 1] - koff[static_cast<std::size_t>(s)]; };

  // AllGathers of A blocks along R-fibers: processors (q, ., s).
  std::vector<Matrix> a_full(static_cast<std::size_t>(active));
  for (int q = 0; q < grid.q; ++q) {
    for (int s = 0; s < grid.s; ++s) {
      std::vector<int> fiber;
      std::vector<coll::Block> blocks;
      for (int r = 0; r < grid.r; ++r) {
        const int g = grid.rank(q, r, s);
        fiber.push_back(group[static_cast<std::size_t>(g)]);
        blocks.push_back(a_shards[static_cast<std::size_t>(g)]);
      }
      const auto gathered = coll::all_gather(m, fiber, blocks);
      std::vector<double> flat;
      for (const auto& b : gathered) flat.insert(flat.end(), b.begin(), b.end());
      if (static_cast<int>(flat.size()) != isz(q) * ksz(s)) {
        throw std::invalid_argument("mm_3d: A shards do not match the grid");
      }
      Matrix blk(isz(q), ksz(s));
      blk.data() = flat;
      for (int r = 0; r < grid.r; ++r) {
        a_full[static_cast<std::size_t>(grid.rank(q, r, s))] = blk;
      }
    }
  }

  // AllGathers of B blocks along Q-fibers: processors (., r, s).
  std::vector<Matrix> b_full(static_cast<std::size_t>(active));
  for (int r = 0; r < grid.r; ++r) {
    for (int s = 0; s < grid.s; ++s) {
      std::vector<int> fiber;
      std::vector<coll::Block> blocks;
      for (int q = 0; q < grid.q; ++q) {
        const int g = grid.rank(q, r, s);
        fiber.push_back(group[static_cast<std::size_t>(g)]);
        blocks.push_back(b_shards[static_cast<std::size_t>(g)]);
      }
      const auto gathered = coll::all_gather(m, fiber, blocks);
      std::vector<double> flat;
      for (const auto& b : gathered) flat.insert(flat.end(), b.begin(), b.end());
      if (static_cast<int>(flat.size()) != ksz(s) * jsz(r)) {
        throw std::invalid_argument("mm_3d: B shards do not match the grid");
      }
      Matrix blk(ksz(s), jsz(r));
      blk.data() = flat;
      for (int q = 0; q < grid.q; ++q) {
        b_full[static_cast<std::size_t>(grid.rank(q, r, s))] = blk;
      }
    }
  }

  // Local partial products, then ReduceScatters along S-fibers.
  std::vector<std::vector<double>> c_shards(static_cast<std::size_t>(active));
  for (int q = 0; q < grid.q; ++q) {
    for (int r = 0; r < grid.r; ++r) {
      std::vector<int> fiber;
      std::vector<std::vector<coll::Block>> contribs;
      const int csize = isz(q) * jsz(r);
      const auto coff = partition_offsets(csize, grid.s);
      for (int s = 0; s < grid.s; ++s) {
        const int g = grid.rank(q, r, s);
        fiber.push_back(group[static_cast<std::size_t>(g)]);
        const Matrix z =
            dense::local_mm(a_full[static_cast<std::size_t>(g)],
                            b_full[static_cast<std::size_t>(g)], &m,
                            group[static_cast<std::size_t>(g)]);
        std::vector<coll::Block> per_dst;
        for (int d = 0; d < grid.s; ++d) {
          per_dst.emplace_back(z.data().begin() + coff[static_cast<std::size_t>(d)],
                               z.data().begin() + coff[static_cast<std::size_t>(d) + 1]);
        }
        contribs.push_back(std::move(per_dst));
      }
      auto summed = coll::reduce_scatter(m, fiber, contribs);
      for (int s = 0; s < grid.s; ++s) {
        c_shards[static_cast<std::size_t>(grid.rank(q, r, s))] =
            std::move(summed[static_cast<std::size_t>(s)]);
      }
    }
  }
  return c_shards;
}

} // namespace caqrsim::matmul
