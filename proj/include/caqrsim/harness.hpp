#pragma once

#include "caqrsim/dense.hpp"
#include "caqrsim/simcore.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace caqrsim::harness {

struct ExperimentConfig {
  std::string algo = "tsqr"; // tsqr | qr1d | qr3d | mm3d | collective:<kind>
  long long m = 64;
  int n = 8;
  int p = 4;
  double delta = 0.5;
  double epsilon = 1.0;
  int b = -1;      // -1: derive from epsilon (qr1d) or delta (qr3d)
  int b_star = -1; // -1: derive from epsilon (qr3d)
  std::uint64_t seed = 1;
  CostParams cost;
};

struct ReportRow {
  ExperimentConfig config;
  int b_used = 0;
  int b_star_used = 0;
  CostVector critical;
  double makespan = 0.0;
  bool has_numeric = false; // residual fields present for QR algorithms only
  double residual = 0.0;
  double orthogonality = 0.0;
  double r_deviation = 0.0;
};

/// Reproducible pseudorandom m x n matrix with entries in [-1, 1].
dense::Matrix generate_instance(long long m, int n, std::uint64_t seed);

struct Verification {
  double residual = 0.0;
  double orthogonality = 0.0;
  double r_deviation = 0.0;
};

/// residual = |A - (I - V T V^T)[R; 0]|_F / |A|_F; orthogonality checked by
/// applying the implicit Q to the n x n identity extension; r_deviation is
/// the best diagonal-sign match against the local Householder oracle of A.
Verification verify_qr(const dense::Matrix& a, const dense::Matrix& v,
                       const dense::Matrix& t, const dense::Matrix& r);

/// Runs one experiment on a fresh machine; optionally exposes the trace.
ReportRow run_experiment(const ExperimentConfig& config,
                         Trace* trace_out = nullptr,
                         std::vector<std::string>* warnings = nullptr);

std::string csv_header();
std::string csv_row(const ReportRow& row);
std::string json_row(const ReportRow& row);

/// One row per config, in config order. format is "csv" or "json".
std::string sweep(const std::vector<ExperimentConfig>& configs,
                  const std::string& format);

} // namespace caqrsim::harness
