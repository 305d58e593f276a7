#include "caqrsim/harness.hpp"

#include "caqrsim/caqr_eg.hpp"
#include "caqrsim/collectives.hpp"
#include "caqrsim/matmul.hpp"
#include "caqrsim/tsqr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace caqrsim::harness {

using dense::Matrix;

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double uniform_pm1(std::uint64_t& state) {
  return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-52 - 1.0;
}

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> iota_group(int p) {
  std::vector<int> g(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i) g[static_cast<std::size_t>(i)] = i;
  return g;
}

std::vector<Matrix> balanced_row_slabs(const Matrix& a, int p) {
  const auto off = matmul::partition_offsets(a.rows(), p);
  std::vector<Matrix> slabs;
  slabs.reserve(static_cast<std::size_t>(p));
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

void run_collective(Machine& m, const std::string& kind,
                    const ExperimentConfig& cfg) {
  const int p = cfg.p;
  const auto group = iota_group(p);
  std::uint64_t state = cfg.seed;
  auto block = [&] {
    coll::Block b(static_cast<std::size_t>(cfg.n));
    for (auto& v : b) v = uniform_pm1(state);
    return b;
  };
  auto blocks = [&] {
    std::vector<coll::Block> bs(static_cast<std::size_t>(p));
    for (auto& b : bs) b = block();
    return bs;
  };
  if (kind == "scatter") {
    coll::scatter(m, group, 0, blocks());
  } else if (kind == "gather") {
    coll::gather(m, group, 0, blocks());
  } else if (kind == "broadcast") {
    coll::broadcast(m, group, 0, block());
  } else if (kind == "reduce") {
    coll::reduce(m, group, 0, blocks());
  } else if (kind == "allgather") {
    coll::all_gather(m, group, blocks());
  } else if (kind == "allreduce") {
    coll::all_reduce(m, group, blocks());
  } else if (kind == "reducescatter" || kind == "alltoall") {
    std::vector<std::vector<coll::Block>> grid(static_cast<std::size_t>(p));
    for (auto& row : grid) row = blocks();
    if (kind == "reducescatter") {
      coll::reduce_scatter(m, group, grid);
    } else {
      coll::all_to_all_index(m, group, grid);
    }
  } else {
    throw std::invalid_argument("unknown collective kind: " + kind);
  }
}

} // namespace

Matrix generate_instance(long long m, int n, std::uint64_t seed) {
  if (n < 1 || m < n) {
    throw std::invalid_argument("generate_instance: need m >= n >= 1");
  }
  Matrix a(static_cast<int>(m), n);
  std::uint64_t state = seed;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = uniform_pm1(state);
  }
  return a;
}

Verification verify_qr(const Matrix& a, const Matrix& v, const Matrix& t,
                       const Matrix& r) {
  const int n = a.cols();
  if (v.rows() != a.rows() || v.cols() != n || t.rows() != n ||
      t.cols() != n || r.rows() != n || r.cols() != n) {
    throw std::invalid_argument("verify_qr: non-conformal factors");
  }
  Verification out;
  Matrix r0(a.rows(), n);
  r0.set_block(0, 0, r);
  const Matrix rebuilt = dense::apply_q_block(v, t, r0, dense::Trans::No);
  double num = 0.0;
  for (int i = 0; i < a.rows(); ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = a(i, j) - rebuilt(i, j);
      num += d * d;
    }
  }
  out.residual = std::sqrt(num) / a.frobenius_norm();

  Matrix seed(a.rows(), n);
  seed.set_block(0, 0, Matrix::identity(n));
  const Matrix q1 = dense::apply_q_block(v, t, seed, dense::Trans::No);
  const Matrix gram = dense::local_mm(q1.transposed(), q1);
  double onum = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double d = gram(i, j) - (i == j ? 1.0 : 0.0);
      onum += d * d;
    }
  }
  out.orthogonality = std::sqrt(onum);

  const Matrix r_oracle = dense::local_householder_qr(a).R;
  double dnum = 0.0;
  for (int i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int j = 0; j < n; ++j) dot += r(i, j) * r_oracle(i, j);
    const double s = dot < 0 ? -1.0 : 1.0;
    for (int j = 0; j < n; ++j) {
      const double d = s * r(i, j) - r_oracle(i, j);
      dnum += d * d;
    }
  }
  out.r_deviation = std::sqrt(dnum) / r_oracle.frobenius_norm();
  return out;
}

ReportRow run_experiment(const ExperimentConfig& cfg, Trace* trace_out,
                         std::vector<std::string>* warnings) {
  ReportRow row;
  row.config = cfg;
  Machine m(cfg.p);
  const auto group = iota_group(cfg.p);

  if (cfg.algo == "tsqr" || cfg.algo == "qr1d" || cfg.algo == "qr3d") {
    const Matrix a = generate_instance(cfg.m, cfg.n, cfg.seed);
    // Block-row algorithms need at least n rows per rank; excess
    // processors sit idle.
    const int active = std::max(
        1, static_cast<int>(std::min<long long>(cfg.p, cfg.m / cfg.n)));
    const auto active_group = iota_group(active);
    Verification v;
    if (cfg.algo == "tsqr") {
      row.b_used = cfg.n;
      row.b_star_used = cfg.n;
      const auto f =
          tsqr::tsqr(m, active_group, 0, balanced_row_slabs(a, active));
      v = verify_qr(a, stack_slabs(f.v_slabs), f.t, f.r);
    } else if (cfg.algo == "qr1d") {
      row.b_used =
          cfg.b > 0 ? cfg.b : caqr::params_1d(cfg.n, active, cfg.epsilon);
      row.b_star_used = row.b_used;
      const auto f = caqr::qr_1d_eg(m, active_group,
                                    balanced_row_slabs(a, active),
                                    row.b_used, warnings);
      v = verify_qr(a, stack_slabs(f.v_slabs), f.t, f.r);
    } else {
      const auto auto_params =
          caqr::params_3d(cfg.m, cfg.n, cfg.p, cfg.delta, cfg.epsilon);
      row.b_used = cfg.b > 0 ? cfg.b : auto_params.b;
      row.b_star_used = cfg.b_star > 0 ? cfg.b_star : std::min(auto_params.b_star, row.b_used);
      const auto f =
          caqr::qr_3d_eg(m, group, caqr::Cyclic::from_matrix(a, cfg.p),
                         row.b_used, row.b_star_used, warnings);
      v = verify_qr(a, f.v.to_matrix(), f.t.to_matrix(), f.r.to_matrix());
    }
    row.has_numeric = true;
    row.residual = v.residual;
    row.orthogonality = v.orthogonality;
    row.r_deviation = v.r_deviation;
  } else if (cfg.algo == "mm3d") {
    // C = A * B with A m x n and B n x n.
    const Matrix a = generate_instance(cfg.m, cfg.n, cfg.seed);
    const Matrix b = generate_instance(cfg.n, cfg.n, cfg.seed + 1);
    const auto grid =
        matmul::choose_grid(a.rows(), b.cols(), a.cols(), cfg.p);
    const auto c_shards = matmul::mm_3d(
        m, group, grid, a.rows(), b.cols(), a.cols(),
        matmul::shard_matrix(a, grid, matmul::Role3d::A),
        matmul::shard_matrix(b, grid, matmul::Role3d::B));
    const Matrix c = matmul::unshard_matrix(c_shards, a.rows(), b.cols(),
                                            grid, matmul::Role3d::C);
    const Matrix ref = dense::local_mm(a, b);
    double gap = 0.0;
    for (int i = 0; i < c.rows(); ++i) {
      for (int j = 0; j < c.cols(); ++j) {
        gap = std::max(gap, std::abs(c(i, j) - ref(i, j)));
      }
    }
    if (gap > 1e-10) {
      throw std::runtime_error("mm3d: product deviates from the local oracle");
    }
  } else if (cfg.algo.rfind("collective:", 0) == 0) {
    run_collective(m, cfg.algo.substr(11), cfg);
  } else {
    throw std::invalid_argument("unknown algorithm: " + cfg.algo);
  }

  row.critical = critical_path_counts(m.trace());
  row.makespan = makespan(m.trace(), cfg.cost);
  if (trace_out) *trace_out = m.trace();
  return row;
}

std::string csv_header() {
  return "algo,m,n,p,b,bstar,delta,epsilon,seed,ops,words,messages,makespan,"
         "residual,orthogonality,r_deviation";
}

std::string csv_row(const ReportRow& row) {
  const auto& c = row.config;
  std::string s = c.algo;
  s += ',' + std::to_string(c.m);
  s += ',' + std::to_string(c.n);
  s += ',' + std::to_string(c.p);
  s += ',' + std::to_string(row.b_used);
  s += ',' + std::to_string(row.b_star_used);
  s += ',' + fmt_g(c.delta);
  s += ',' + fmt_g(c.epsilon);
  s += ',' + std::to_string(c.seed);
  s += ',' + std::to_string(row.critical.ops);
  s += ',' + std::to_string(row.critical.words);
  s += ',' + std::to_string(row.critical.messages);
  s += ',' + fmt_g(row.makespan);
  if (row.has_numeric) {
    s += ',' + fmt_g(row.residual);
    s += ',' + fmt_g(row.orthogonality);
    s += ',' + fmt_g(row.r_deviation);
  } else {
    s += ",,,";
  }
  return s;
}

std::string json_row(const ReportRow& row) {
  const auto& c = row.config;
  std::string s = "{\"algo\":\"" + c.algo + "\"";
  s += ",\"m\":" + std::to_string(c.m);
  s += ",\"n\":" + std::to_string(c.n);
  s += ",\"p\":" + std::to_string(c.p);
  s += ",\"b\":" + std::to_string(row.b_used);
  s += ",\"bstar\":" + std::to_string(row.b_star_used);
  s += ",\"delta\":" + fmt_g(c.delta);
  s += ",\"epsilon\":" + fmt_g(c.epsilon);
  s += ",\"seed\":" + std::to_string(c.seed);
  s += ",\"ops\":" + std::to_string(row.critical.ops);
  s += ",\"words\":" + std::to_string(row.critical.words);
  s += ",\"messages\":" + std::to_string(row.critical.messages);
  s += ",\"makespan\":" + fmt_g(row.makespan);
  if (row.has_numeric) {
    s += ",\"residual\":" + fmt_g(row.residual);
    s += ",\"orthogonality\":" + fmt_g(row.orthogonality);
    s += ",\"r_deviation\":" + fmt_g(row.r_deviation);
  }
  s += '}';
  return s;
}

std::string sweep(const std::vector<ExperimentConfig>& configs,
                  const std::string& format) {
  std::string out;
  if (format == "csv") {
    out = csv_header() + '\n';
    for (const auto& cfg : configs) out += csv_row(run_experiment(cfg)) + '\n';
  } else if (format == "json") {
    for (const auto& cfg : configs) out += json_row(run_experiment(cfg)) + '\n';
  } else {
    throw std::invalid_argument("unknown format: " + format);
  }
  return out;
}

} // namespace caqrsim::harness
