#include "caqrsim/dense.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace caqrsim::dense {

namespace {

void log_ops(Machine* m, int proc, long long ops) {
  if (m != nullptr) m->compute(proc, ops);
}

} // namespace

Matrix Matrix::identity(int n) {
  Matrix i(n, n);
  for (int k = 0; k < n; ++k) i(k, k) = 1.0;
  return i;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Matrix Matrix::block(int i0, int j0, int nrows, int ncols) const {
  if (i0 < 0 || j0 < 0 || i0 + nrows > rows_ || j0 + ncols > cols_) {
    throw std::out_of_range("Matrix::block: out of range");
  }
  Matrix b(nrows, ncols);
  for (int i = 0; i < nrows; ++i)
    for (int j = 0; j < ncols; ++j) b(i, j) = (*this)(i0 + i, j0 + j);
  return b;
}

void Matrix::set_block(int i0, int j0, const Matrix& b) {
  if (i0 < 0 || j0 < 0 || i0 + b.rows() > rows_ || j0 + b.cols() > cols_) {
    throw std::out_of_range("Matrix::set_block: out of range");
  }
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) (*this)(i0 + i, j0 + j) = b(i, j);
}

double Matrix::frobenius_norm() const {
  double s = 0.0;
  for (double x : data_) s += x * x;
  return std::sqrt(s);
}

Matrix local_mm(const Matrix& a, const Matrix& b, Machine* m, int proc) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("local_mm: inner dimensions disagree");
  }
  const int ri = a.rows(), rj = b.cols(), rk = a.cols();
  Matrix c(ri, rj);
  for (int i = 0; i < ri; ++i) {
    for (int k = 0; k < rk; ++k) {
      const double aik = a(i, k);
      for (int j = 0; j < rj; ++j) c(i, j) += aik * b(k, j);
    }
  }
  const long long mults = 1LL * ri * rj * rk;
  const long long adds = rk > 0 ? 1LL * ri * rj * (rk - 1) : 0;
  log_ops(m, proc, mults + adds);
  return c;
}

HouseholderFactors local_householder_qr(const Matrix& a, Machine* m,
                                        int proc) {
  const int rows = a.rows(), n = a.cols();
  if (rows < n) {
    throw std::invalid_argument("local_householder_qr: rows < cols");
  }
  Matrix w = a;          // working copy, reduced in place
  Matrix v(rows, n);     // unit lower trapezoidal basis
  std::vector<double> tau(static_cast<std::size_t>(n), 0.0);
  long long ops = 0;

  for (int j = 0; j < n; ++j) {
    // Reflector for column j of the trailing block.
    double sigma = 0.0;
    for (int i = j; i < rows; ++i) sigma += w(i, j) * w(i, j);
    ops += 2LL * (rows - j);
    const double normx = std::sqrt(sigma);
    ops += 1;
    const double alpha = w(j, j);
    const double sign = alpha >= 0.0 ? 1.0 : -1.0;
    if (normx == 0.0) {
      v(j, j) = 1.0;
      tau[static_cast<std::size_t>(j)] = 0.0;
      continue;
    }
    const double v1 = alpha + sign * normx;
    v(j, j) = 1.0;
    for (int i = j + 1; i < rows; ++i) v(i, j) = w(i, j) / v1;
    ops += rows - j; // divides plus forming v1
    // tau = 2 v1^2 / (v^T v scaled back) = (v1 + sign*normx*...) compact:
    // with unnormalized u = x + sign*normx*e1, u^T u = 2*normx*(normx+|alpha|)
    const double utu = 2.0 * normx * (normx + sign * alpha);
    tau[static_cast<std::size_t>(j)] = 2.0 * v1 * v1 / utu;
    ops += 6;
    // Apply H_j = I - tau v v^T to the trailing columns j..n-1 of w.
    for (int c = j; c < n; ++c) {
      double dot = w(j, c);
      for (int i = j + 1; i < rows; ++i) dot += v(i, j) * w(i, c);
      const double f = tau[static_cast<std::size_t>(j)] * dot;
      for (int i = j; i < rows; ++i) w(i, c) -= f * v(i, j);
      ops += 4LL * (rows - j) + 1;
    }
  }

  // Accumulate the upper triangular kernel from the reflectors:
  // T(0:j-1, j) = -tau_j * T(0:j-1, 0:j-1) * (V(:, 0:j-1)^T v_j).
  Matrix t(n, n);
  for (int j = 0; j < n; ++j) {
    const double tj = tau[static_cast<std::size_t>(j)];
    t(j, j) = tj;
    if (j == 0) continue;
    std::vector<double> z(static_cast<std::size_t>(j), 0.0);
    for (int c = 0; c < j; ++c) {
      double dot = 0.0;
      for (int i = j; i < rows; ++i) dot += v(i, c) * v(i, j);
      z[static_cast<std::size_t>(c)] = dot;
      ops += 2LL * (rows - j);
    }
    for (int r = 0; r < j; ++r) {
      double acc = 0.0;
      for (int c = r; c < j; ++c) acc += t(r, c) * z[static_cast<std::size_t>(c)];
      t(r, j) = -tj * acc;
      ops += 2LL * (j - r) + 1;
    }
  }

  HouseholderFactors hf;
  hf.V = std::move(v);
  hf.T = std::move(t);
  hf.R = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) hf.R(i, j) = w(i, j);
  log_ops(m, proc, ops);
  return hf;
}

Matrix kernel_from_basis(const Matrix& v, Machine* m, int proc) {
  const int rows = v.rows(), n = v.cols();
  if (rows < n) {
    throw std::invalid_argument("kernel_from_basis: rows < cols");
  }
  long long ops = 0;
  // Upper triangle of G = V^T V is all we need.
  Matrix g(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      double dot = 0.0;
      for (int k = 0; k < rows; ++k) dot += v(k, i) * v(k, j);
      g(i, j) = dot;
      ops += 2LL * rows;
    }
  }
  // Tinv = strict_upper(G) + diag(G)/2, upper triangular.
  Matrix tinv(n, n);
  for (int i = 0; i < n; ++i) {
    tinv(i, i) = g(i, i) / 2.0;
    ops += 1;
    for (int j = i + 1; j < n; ++j) tinv(i, j) = g(i, j);
    if (tinv(i, i) == 0.0) {
      throw std::domain_error("kernel_from_basis: singular kernel inverse");
    }
  }
  // Invert the upper triangular Tinv by back substitution, column by column.
  Matrix t(n, n);
  for (int j = n - 1; j >= 0; --j) {
    t(j, j) = 1.0 / tinv(j, j);
    ops += 1;
    for (int i = j - 1; i >= 0; --i) {
      double acc = 0.0;
      for (int k = i + 1; k <= j; ++k) acc += tinv(i, k) * t(k, j);
      t(i, j) = -acc / tinv(i, i);
      ops += 2LL * (j - i) + 1;
    }
  }
  log_ops(m, proc, ops);
  return t;
}

SignedLu signed_lu(const Matrix& x, Machine* m, int proc) {
  const int n = x.rows();
  if (x.cols() != n) {
    throw std::invalid_argument("signed_lu: matrix must be square");
  }
  Matrix w = x;
  SignedLu out;
  out.l = Matrix::identity(n);
  out.s.assign(static_cast<std::size_t>(n), 1.0);
  long long ops = 0;
  for (int j = 0; j < n; ++j) {
    const double s = w(j, j) >= 0.0 ? 1.0 : -1.0; // sgn(0) := +1
    out.s[static_cast<std::size_t>(j)] = s;
    w(j, j) += s;
    ops += 1;
    for (int i = j + 1; i < n; ++i) {
      const double lij = w(i, j) / w(j, j);
      out.l(i, j) = lij;
      w(i, j) = 0.0;
      ops += 1;
      for (int k = j + 1; k < n; ++k) {
        w(i, k) -= lij * w(j, k);
        ops += 2;
      }
    }
  }
  out.u = Matrix(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) out.u(i, j) = w(i, j);
  log_ops(m, proc, ops);
  return out;
}

Matrix apply_q_block(const Matrix& v, const Matrix& t, const Matrix& b,
                     Trans transpose_kernel, Machine* m, int proc) {
  if (v.rows() != b.rows()) {
    throw std::invalid_argument("apply_q_block: dimension mismatch");
  }
  const Matrix m1 = local_mm(v.transposed(), b, m, proc);
  const Matrix kt = transpose_kernel == Trans::Yes ? t.transposed() : t;
  const Matrix m2 = local_mm(kt, m1, m, proc);
  const Matrix m3 = local_mm(v, m2, m, proc);
  Matrix out = b;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out(i, j) -= m3(i, j);
  log_ops(m, proc, 1LL * out.rows() * out.cols());
  return out;
}

Matrix tri_solve(const Matrix& t, const Matrix& b, Side side, Uplo uplo,
                 Trans trans, Machine* m, int proc) {
  const int n = t.rows();
  if (t.cols() != n) {
    throw std::invalid_argument("tri_solve: triangular factor must be square");
  }
  for (int k = 0; k < n; ++k) {
    if (t(k, k) == 0.0) {
      throw std::domain_error("tri_solve: zero diagonal entry");
    }
  }
  // Effective coefficient op(T); transposition flips the triangle.
  auto coef = [&](int i, int j) {
    return trans == Trans::Yes ? t(j, i) : t(i, j);
  };
  const Uplo eff = trans == Trans::Yes
                       ? (uplo == Uplo::Upper ? Uplo::Lower : Uplo::Upper)
                       : uplo;
  Matrix x = b;
  long long ops = 0;
  if (side == Side::Left) {
    if (b.rows() != n) {
      throw std::invalid_argument("tri_solve: dimension mismatch");
    }
    for (int c = 0; c < b.cols(); ++c) {
      if (eff == Uplo::Upper) {
        for (int i = n - 1; i >= 0; --i) {
          double acc = x(i, c);
          for (int k = i + 1; k < n; ++k) acc -= coef(i, k) * x(k, c);
          x(i, c) = acc / coef(i, i);
          ops += 2LL * (n - 1 - i) + 1;
        }
      } else {
        for (int i = 0; i < n; ++i) {
          double acc = x(i, c);
          for (int k = 0; k < i; ++k) acc -= coef(i, k) * x(k, c);
          x(i, c) = acc / coef(i, i);
          ops += 2LL * i + 1;
        }
      }
    }
  } else {
    if (b.cols() != n) {
      throw std::invalid_argument("tri_solve: dimension mismatch");
    }
    for (int r = 0; r < b.rows(); ++r) {
      if (eff == Uplo::Upper) {
        for (int j = 0; j < n; ++j) {
          double acc = x(r, j);
          for (int k = 0; k < j; ++k) acc -= x(r, k) * coef(k, j);
          x(r, j) = acc / coef(j, j);
          ops += 2LL * j + 1;
        }
      } else {
        for (int j = n - 1; j >= 0; --j) {
          double acc = x(r, j);
          for (int k = j + 1; k < n; ++k) acc -= x(r, k) * coef(k, j);
          x(r, j) = acc / coef(j, j);
          ops += 2LL * (n - 1 - j) + 1;
        }
      }
    }
  }
  log_ops(m, proc, ops);
  return x;
}

void write_matrix(const std::string& path, const Matrix& a) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_matrix: cannot open " + path);
  out << a.rows() << ' ' << a.cols() << '\n';
  out << std::setprecision(17);
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < a.cols(); ++j) {
      out << a(i, j) << (j + 1 == a.cols() ? '\n' : ' ');
    }
  }
}

Matrix read_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_matrix: cannot open " + path);
  int rows = 0, cols = 0;
  in >> rows >> cols;
  if (!in || rows < 0 || cols < 0) {
    throw std::runtime_error("read_matrix: bad header in " + path);
  }
  Matrix a(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) {
      if (!(in >> a(i, j))) {
        throw std::runtime_error("read_matrix: truncated data in " + path);
      }
    }
  }
  return a;
}

} // namespace caqrsim::dense
