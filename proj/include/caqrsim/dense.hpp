#pragma once

#include "caqrsim/simcore.hpp"

#include <string>
#include <vector>

namespace caqrsim::dense {

/// Row-major dense matrix of 64-bit reals.
class Matrix {
public:
  Matrix() = default;
  Matrix(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols),
              0.0) {}

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }

  double& operator()(int i, int j) {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * cols_ + j];
  }

  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

  Matrix transposed() const;
  Matrix block(int i0, int j0, int nrows, int ncols) const;
  void set_block(int i0, int j0, const Matrix& b);

  double frobenius_norm() const;

  bool operator==(const Matrix&) const = default;

private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

/// Householder representation of a Q-factor: Q = I - V T V^T with V unit
/// lower trapezoidal, T and R upper triangular.
struct HouseholderFactors {
  Matrix V; // m x n
  Matrix T; // n x n
  Matrix R; // n x n
};

enum class Side { Left, Right };
enum class Uplo { Upper, Lower };
enum class Trans { No, Yes };

/// C = A * B with I*J*K multiplies and I*J*(K-1) adds logged on `proc`.
Matrix local_mm(const Matrix& a, const Matrix& b, Machine* m = nullptr,
                int proc = 0);

/// Householder QR of an m x n matrix, m >= n. Also the test oracle.
HouseholderFactors local_householder_qr(const Matrix& a, Machine* m = nullptr,
                                        int proc = 0);

/// Upper-triangular T with T^{-1} = strict_upper(V^T V) + diag(V^T V)/2.
Matrix kernel_from_basis(const Matrix& v, Machine* m = nullptr, int proc = 0);

struct SignedLu {
  Matrix l; // unit lower triangular
  Matrix u; // upper triangular
  std::vector<double> s; // diagonal of the sign matrix, entries +-1
};

/// LU of X + S where S_jj = sgn of the current diagonal (sgn(0) := +1),
/// eliminated without pivoting.
SignedLu signed_lu(const Matrix& x, Machine* m = nullptr, int proc = 0);

/// (I - V T^{(T)} V^T) * B, evaluated right to left.
Matrix apply_q_block(const Matrix& v, const Matrix& t, const Matrix& b,
                     Trans transpose_kernel, Machine* m = nullptr,
                     int proc = 0);

/// Solves op(T) X = B (Left) or X op(T) = B (Right) for triangular T.
Matrix tri_solve(const Matrix& t, const Matrix& b, Side side, Uplo uplo,
                 Trans trans, Machine* m = nullptr, int proc = 0);

/// Text fixtures: "rows cols" header then row-major entries.
void write_matrix(const std::string& path, const Matrix& a);
Matrix read_matrix(const std::string& path);

} // namespace caqrsim::dense
