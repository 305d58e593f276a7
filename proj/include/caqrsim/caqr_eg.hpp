#pragma once

#include "caqrsim/dense.hpp"
#include "caqrsim/simcore.hpp"
#include "caqrsim/tsqr.hpp"

#include <string>
#include <vector>

namespace caqrsim::caqr {

/// Recursive threshold for the 1D algorithm:
/// b = clamp(ceil(n / (log2 max(P,2))^epsilon), 1, n).
int params_1d(int n, int p, double epsilon);

struct Params3d {
  int b = 1;
  int b_star = 1;
};

/// Thresholds for the 3D algorithm: b = clamp(ceil(n / max(nP/m,1)^delta),
/// 1, n) and b_star = clamp(ceil(b / (log2 max(P,2))^epsilon), 1, b).
Params3d params_3d(long long m, int n, int p, double delta, double epsilon);

/// 1D algorithm over a block-row distribution (rank 0 owns the leading
/// rows; every rank owns at least n rows). Returns V distributed like A
/// with T and R at rank 0. b = n delegates straight to tsqr().
tsqr::Result qr_1d_eg(Machine& m, const std::vector<int>& group,
                      const std::vector<dense::Matrix>& a_slabs, int b,
                      std::vector<std::string>* warnings = nullptr);

/// Matrix with per-row ownership; row i lives on group rank owner[i].
/// "Row-cyclic" inputs have owner[i] = i mod P.
struct Cyclic {
  int cols = 0;
  std::vector<int> owner;
  std::vector<std::vector<double>> rows;

  static Cyclic from_matrix(const dense::Matrix& a, int p);
  dense::Matrix to_matrix() const;
};

/// C = op(left) * right with row-distributed operands, delivered with the
/// given row ownership. Uses a 3D grid with two-phase AlltoAll layout
/// conversions; falls back to gather + local MM + scatter at rank 0 when
/// the grid hypotheses fail (noted in warnings).
Cyclic dist_mm_3d(Machine& m, const std::vector<int>& group, const Cyclic& left,
                  bool left_transposed, const Cyclic& right,
                  const std::vector<int>& out_owner,
                  std::vector<std::string>* warnings = nullptr);

/// Base-case redistribution of Section-style row-cyclic data to block-row
/// over P* = min(P, floor(m/n)) representatives, with rank 0 owning the
/// top n rows first. Records everything needed to reverse the movement.
struct BaseRedist {
  int p_star = 1;
  int p_dprime = 1;
  std::vector<int> star_group;                   // machine procs of reps
  std::vector<dense::Matrix> slabs;              // per rep rank
  std::vector<std::vector<long long>> slab_rows; // global row id per slab row
  // Phase 1: per rep, the gathered members (rep itself first) and the
  // global rows each contributed.
  std::vector<std::vector<int>> member_procs;
  std::vector<std::vector<std::vector<long long>>> member_rows;
  // Phase 2/3: per rep rank in [0, p_dprime), top rows it surrendered and
  // replacement rows it received from rank 0.
  std::vector<std::vector<long long>> top_moved;
  std::vector<std::vector<long long>> replacement;
};

BaseRedist redistribute_base_case(Machine& m, const std::vector<int>& group,
                                  const Cyclic& a, int n);

/// Output of the 3D algorithm: V distributed like A; T and R distributed
/// like A's top n rows.
struct Result3d {
  Cyclic v;
  Cyclic t;
  Cyclic r;
};

/// Replays the inverse Scatters/Gathers of the plan on the 1D result.
Result3d reverse_base_redistribution(Machine& m, const std::vector<int>& group,
                                     const BaseRedist& plan,
                                     const Cyclic& a_shape,
                                     const tsqr::Result& f);

Result3d qr_3d_eg(Machine& m, const std::vector<int>& group, const Cyclic& a,
                  int b, int b_star,
                  std::vector<std::string>* warnings = nullptr);

} // namespace caqrsim::caqr
