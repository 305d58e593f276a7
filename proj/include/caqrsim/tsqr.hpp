#pragma once

#include "caqrsim/dense.hpp"
#include "caqrsim/simcore.hpp"

#include <vector>

namespace caqrsim::tsqr {

/// Upsweep output: the level-0 factors, the merge factors in schedule
/// order (mirroring the binomial Reduce edges), and the final R at the
/// root. Forwarded R-factors are destroyed once sent.
struct TreeState {
  int n = 0;
  std::vector<dense::HouseholderFactors> local; // per rank
  struct Merge {
    int sender = -1;   // rank whose R-factor arrived
    int receiver = -1; // rank that ran the merge QR
    dense::Matrix v;   // 2n x n
    dense::Matrix t;   // n x n
  };
  std::vector<Merge> merges;
  dense::Matrix r_final; // n x n, held by the root
};

struct Result {
  std::vector<dense::Matrix> v_slabs; // per rank, distributed like A
  dense::Matrix t;                    // at the root
  dense::Matrix r;                    // at the root
};

/// Packed upper-triangle wire format: n(n+1)/2 words, row by row.
std::vector<double> pack_upper(const dense::Matrix& r);
dense::Matrix unpack_upper(const std::vector<double>& w, int n);

/// Local QRs, then a binomial-tree reduction whose merge step
/// QR-decomposes the stacked pair [R_receiver; R_sender].
TreeState upsweep(Machine& m, const std::vector<int>& group, int root_rank,
                  const std::vector<dense::Matrix>& a_slabs);

/// Reverses the upsweep tree applying the stored Q-factors to identity
/// columns, then recovers the Householder representation through a signed
/// LU at the root and a Broadcast of U.
Result downsweep(Machine& m, const std::vector<int>& group, int root_rank,
                 const TreeState& state);

/// Full TSQR of a block-row distributed A with m_p >= n rows per rank.
/// The root (rank 0, owner of the leading rows) ends with T and R.
Result tsqr(Machine& m, const std::vector<int>& group, int root_rank,
            const std::vector<dense::Matrix>& a_slabs);

} // namespace caqrsim::tsqr
