#pragma once

#include "caqrsim/dense.hpp"
#include "caqrsim/simcore.hpp"

#include <vector>

namespace caqrsim::matmul {

/// Processor grid Q x R x S with T idle processors (P = QRS + T).
struct GridShape {
  int q = 1;
  int r = 1;
  int s = 1;
  int t = 0;

  int active() const { return q * r * s; }
  /// Grid rank of processor (iq, ir, is), row-major in (q, r, s).
  int rank(int iq, int ir, int is) const { return (iq * r + ir) * s + is; }

  bool operator==(const GridShape&) const = default;
};

/// Contiguous parts covering [0, n), the first n mod k one element larger.
/// Parts may be empty when k > n.
std::vector<int> balanced_partition(int n, int k);

/// Offsets of the balanced partition: k+1 entries, offsets[k] = n.
std::vector<int> partition_offsets(int n, int k);

/// Near-cubic grid for an I x K times K x J product on P processors:
/// rho = (IJK/P)^(1/3), Q = floor(I/rho), R = floor(J/rho), S = floor(K/rho),
/// clamped to >= 1, T = P - QRS. Requires 2*IJK/min(I,J,K)^3 <= P <= IJK
/// (trivially satisfied at P = 1); violations name the failing inequality.
GridShape choose_grid(int i, int j, int k, int p);

/// Both operands and the product live on one processor; no messages.
dense::Matrix mm_0d(Machine& m, int proc, const dense::Matrix& a,
                    const dense::Matrix& b);

/// C = sum_p A_p^T B_p delivered at the root. Rank p holds row slabs A_p
/// (k_p x I) and B_p (k_p x J) over a shared split of the K dimension; the
/// partial products are combined by a bidirectional-exchange Reduce.
dense::Matrix mm_1d_reduce(Machine& m, const std::vector<int>& group,
                           int root_rank,
                           const std::vector<dense::Matrix>& a_slabs,
                           const std::vector<dense::Matrix>& b_slabs);

/// C_p = A_p * B with A row-distributed and B at the root: a
/// bidirectional-exchange Broadcast of B, then one local MM per rank.
std::vector<dense::Matrix> mm_1d_broadcast(Machine& m,
                                           const std::vector<int>& group,
                                           int root_rank,
                                           const std::vector<dense::Matrix>& a_slabs,
                                           const dense::Matrix& b);

/// Which operand of C = A * B a 3D shard belongs to. A blocks are indexed
/// by (q, s) and subpartitioned along R-fibers; B blocks by (s, r) along
/// Q-fibers; C blocks by (q, r) along S-fibers.
enum class Role3d { A, B, C };

/// Balanced row-major shards of a global matrix for the given role; one
/// flat chunk per active grid rank.
std::vector<std::vector<double>> shard_matrix(const dense::Matrix& a,
                                              const GridShape& grid, Role3d role);

/// Inverse of shard_matrix.
dense::Matrix unshard_matrix(const std::vector<std::vector<double>>& shards,
                             int rows, int cols, const GridShape& grid,
                             Role3d role);

/// 3D algorithm: AllGathers of A along R-fibers and of B along Q-fibers,
/// local MMs, then ReduceScatters of the partial products along S-fibers.
/// group lists machine procs, actives first; idle processors do nothing.
/// Returns C shards in Role3d::C layout.
std::vector<std::vector<double>> mm_3d(Machine& m, const std::vector<int>& group,
                                       const GridShape& grid, int i, int j, int k,
                                       const std::vector<std::vector<double>>& a_shards,
                                       const std::vector<std::vector<double>>& b_shards);

} // namespace caqrsim::matmul
