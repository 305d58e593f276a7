#include "caqrsim/tsqr.hpp"

#include "caqrsim/collectives.hpp"

#include <stdexcept>

namespace caqrsim::tsqr {

using dense::Matrix;

std::vector<double> pack_upper(const Matrix& r) {
  std::vector<double> w;
  w.reserve(static_cast<std::size_t>(r.rows()) * (r.rows() + 1) / 2);
  for (int i = 0; i < r.rows(); ++i) {
    for (int j = i; j < r.cols(); ++j) w.push_back(r(i, j));
  }
  return w;
}

Matrix unpack_upper(const std::vector<double>& w, int n) {
  Matrix r(n, n);
  std::size_t pos = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) r(i, j) = w[pos++];
  }
  return r;
}

TreeState upsweep(Machine& m, const std::vector<int>& group, int root_rank,
                  const std::vector<Matrix>& a_slabs) {
  const int p = static_cast<int>(group.size());
  if (static_cast<int>(a_slabs.size()) != p || p == 0) {
    throw std::invalid_argument("tsqr: one slab per rank required");
  }
  if (root_rank != 0) {
    throw std::invalid_argument("tsqr: the root must own the leading rows");
  }
  const int n = a_slabs[0].cols();
  TreeState state;
  state.n = n;
  std::vector<Matrix> r_cur(static_cast<std::size_t>(p));
  for (int rk = 0; rk < p; ++rk) {
    const auto& a = a_slabs[static_cast<std::size_t>(rk)];
    if (a.cols() != n || a.rows() < n) {
      throw std::invalid_argument("tsqr: every slab needs at least n rows");
    }
    auto f = dense::local_householder_qr(a, &m, group[static_cast<std::size_t>(rk)]);
    r_cur[static_cast<std::size_t>(rk)] = f.R;
    state.local.push_back(std::move(f));
  }
  for (const auto& [sender, receiver] : coll::reduce_tree_edges(p, root_rank)) {
    const auto wire = m.exchange(group[static_cast<std::size_t>(sender)],
                                 group[static_cast<std::size_t>(receiver)],
                                 pack_upper(r_cur[static_cast<std::size_t>(sender)]));
    r_cur[static_cast<std::size_t>(sender)] = Matrix(); // destroyed once sent
    Matrix stacked(2 * n, n);
    stacked.set_block(0, 0, r_cur[static_cast<std::size_t>(receiver)]);
    stacked.set_block(n, 0, unpack_upper(wire, n));
    auto f = dense::local_householder_qr(stacked, &m,
                                         group[static_cast<std::size_t>(receiver)]);
    r_cur[static_cast<std::size_t>(receiver)] = f.R;
    state.merges.push_back({sender, receiver, std::move(f.V), std::move(f.T)});
  }
  state.r_final = r_cur[static_cast<std::size_t>(root_rank)];
  return state;
}

Result downsweep(Machine& m, const std::vector<int>& group, int root_rank,
                 const TreeState& state) {
  const int p = static_cast<int>(group.size());
  const int n = state.n;
  // Reversed tree: every merge replays backwards, the block contents
  // rewritten by the stored Q-factor before the lower half travels.
  std::vector<Matrix> b_cur(static_cast<std::size_t>(p));
  b_cur[static_cast<std::size_t>(root_rank)] = Matrix::identity(n);
  for (auto it = state.merges.rbegin(); it != state.merges.rend(); ++it) {
    Matrix seed(2 * n, n);
    seed.set_block(0, 0, b_cur[static_cast<std::size_t>(it->receiver)]);
    const Matrix both = dense::apply_q_block(it->v, it->t, seed, dense::Trans::No,
                                             &m, group[static_cast<std::size_t>(it->receiver)]);
    b_cur[static_cast<std::size_t>(it->receiver)] = both.block(0, 0, n, n);
    const Matrix lower = both.block(n, 0, n, n);
    const auto wire = m.exchange(group[static_cast<std::size_t>(it->receiver)],
                                 group[static_cast<std::size_t>(it->sender)],
                                 lower.data());
    Matrix delivered(n, n);
    delivered.data() = wire;
    b_cur[static_cast<std::size_t>(it->sender)] = delivered;
  }

  // W_p = (I - V0 T0 V0^T) [B0_p; 0], the leading n columns of the
  // implied Q-factor, distributed like A.
  std::vector<Matrix> w(static_cast<std::size_t>(p));
  for (int rk = 0; rk < p; ++rk) {
    const auto& f = state.local[static_cast<std::size_t>(rk)];
    Matrix seed(f.V.rows(), n);
    seed.set_block(0, 0, b_cur[static_cast<std::size_t>(rk)]);
    w[static_cast<std::size_t>(rk)] = dense::apply_q_block(
        f.V, f.T, seed, dense::Trans::No, &m, group[static_cast<std::size_t>(rk)]);
  }

  // Root: signed LU of X, then T = U S L^{-T}, V_r = [L; below * U^{-1}],
  // R = -S * R_final.
  const int root_proc = group[static_cast<std::size_t>(root_rank)];
  const Matrix& w_r = w[static_cast<std::size_t>(root_rank)];
  const Matrix x = w_r.block(0, 0, n, n);
  const auto lu = dense::signed_lu(x, &m, root_proc);
  Matrix us = lu.u;
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) us(i, j) *= lu.s[static_cast<std::size_t>(j)];
  }
  m.compute(root_proc, static_cast<long long>(n) * (n + 1) / 2);
  const Matrix t = dense::tri_solve(lu.l, us, dense::Side::Right, dense::Uplo::Lower,
                                    dense::Trans::Yes, &m, root_proc);
  Matrix r(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      r(i, j) = -lu.s[static_cast<std::size_t>(i)] * state.r_final(i, j);
    }
  }
  m.compute(root_proc, static_cast<long long>(n) * (n + 1) / 2);

  Result out;
  out.t = t;
  out.r = r;
  out.v_slabs.resize(static_cast<std::size_t>(p));
  {
    Matrix v_root(w_r.rows(), n);
    v_root.set_block(0, 0, lu.l);
    if (w_r.rows() > n) {
      const Matrix below = w_r.block(n, 0, w_r.rows() - n, n);
      v_root.set_block(n, 0,
                       dense::tri_solve(lu.u, below, dense::Side::Right,
                                        dense::Uplo::Upper, dense::Trans::No, &m,
                                        root_proc));
    }
    out.v_slabs[static_cast<std::size_t>(root_rank)] = std::move(v_root);
  }
  if (p > 1) {
    coll::broadcast(m, group, root_rank, pack_upper(lu.u),
                    coll::Variant::Binomial);
    for (int rk = 0; rk < p; ++rk) {
      if (rk == root_rank) continue;
      out.v_slabs[static_cast<std::size_t>(rk)] = dense::tri_solve(
          lu.u, w[static_cast<std::size_t>(rk)], dense::Side::Right,
          dense::Uplo::Upper, dense::Trans::No, &m,
          group[static_cast<std::size_t>(rk)]);
    }
  }
  return out;
}

Result tsqr(Machine& m, const std::vector<int>& group, int root_rank,
            const std::vector<Matrix>& a_slabs) {
  if (group.size() == 1) {
    if (a_slabs.size() != 1) {
      throw std::invalid_argument("tsqr: one slab per rank required");
    }
    auto f = dense::local_householder_qr(a_slabs[0], &m, group[0]);
    return {{std::move(f.V)}, std::move(f.T), std::move(f.R)};
  }
  const TreeState state = upsweep(m, group, root_rank, a_slabs);
  return downsweep(m, group, root_rank, state);
}

} // namespace caqrsim::tsqr
