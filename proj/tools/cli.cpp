#include "caqrsim/collectives.hpp"
#include "caqrsim/harness.hpp"
#include "caqrsim/simcore.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

namespace {

using caqrsim::harness::ExperimentConfig;
using caqrsim::harness::ReportRow;

constexpr double kTolerance = 1e-10;

struct CommonFlags {
  ExperimentConfig cfg;
  std::string format = "csv";
};

void add_common_flags(CLI::App* app, CommonFlags& f) {
  app->add_option("--algo", f.cfg.algo,
                  "tsqr | qr1d | qr3d | mm3d | collective:<kind>");
  app->add_option("--m", f.cfg.m, "row count");
  app->add_option("--n", f.cfg.n, "column count");
  app->add_option("--p", f.cfg.p, "processor count");
  app->add_option("--delta", f.cfg.delta, "3D recursion exponent");
  app->add_option("--epsilon", f.cfg.epsilon, "latency/bandwidth exponent");
  app->add_option("--b", f.cfg.b, "explicit recursion threshold");
  app->add_option("--bstar", f.cfg.b_star, "explicit base-case threshold");
  app->add_option("--seed", f.cfg.seed, "instance seed");
  app->add_option("--gamma", f.cfg.cost.gamma, "time per operation");
  app->add_option("--beta", f.cfg.cost.beta, "time per word");
  app->add_option("--alpha", f.cfg.cost.alpha, "time per message");
  app->add_option("--format", f.format, "csv | json");
}

int check_rows(const std::vector<ReportRow>& rows) {
  for (const auto& r : rows) {
    if (r.has_numeric &&
        (r.residual > kTolerance || r.orthogonality > kTolerance)) {
      std::cerr << "verification failed: residual " << r.residual
                << ", orthogonality " << r.orthogonality << "\n";
      return 2;
    }
  }
  return 0;
}

int run_verify_collectives() {
  std::uint64_t state = 12345;
  auto next = [&] {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  int checks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = 1 + static_cast<int>(next() % 16);
    std::vector<int> group(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) group[static_cast<std::size_t>(i)] = i;
    std::vector<std::vector<caqrsim::coll::Block>> blocks(
        static_cast<std::size_t>(p),
        std::vector<caqrsim::coll::Block>(static_cast<std::size_t>(p)));
    for (auto& row : blocks) {
      for (auto& b : row) {
        b.resize(next() % 4);
        for (auto& v : b) v = static_cast<double>(next() % 1000);
      }
    }
    caqrsim::Machine m1(p);
    caqrsim::Machine m2(p);
    const auto r1 = caqrsim::coll::all_to_all_index(m1, group, blocks);
    const auto r2 = caqrsim::coll::all_to_all_two_phase(m2, group, blocks);
    if (r1 != r2) {
      std::cerr << "alltoall delivery mismatch at trial " << trial << "\n";
      return 1;
    }
    ++checks;
  }
  for (int p = 2; p <= 16; ++p) {
    std::vector<int> group(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) group[static_cast<std::size_t>(i)] = i;
    std::vector<caqrsim::coll::Block> blocks(static_cast<std::size_t>(p));
    caqrsim::coll::Block expect(4, 0.0);
    for (int r = 0; r < p; ++r) {
      auto& b = blocks[static_cast<std::size_t>(r)];
      b.assign(4, static_cast<double>(r + 1));
      for (int j = 0; j < 4; ++j) expect[static_cast<std::size_t>(j)] += b[static_cast<std::size_t>(j)];
    }
    for (auto variant : {caqrsim::coll::Variant::Binomial,
                         caqrsim::coll::Variant::BidirectionalExchange}) {
      caqrsim::Machine m(p);
      if (caqrsim::coll::reduce(m, group, 0, blocks, variant) != expect) {
        std::cerr << "reduce mismatch at P=" << p << "\n";
        return 1;
      }
      ++checks;
    }
  }
  std::cout << "verify-collectives: OK (" << checks << " checks)\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed QR cost-model simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  add_common_flags(run_cmd, run_flags);

  CommonFlags sweep_flags;
  std::vector<double> sweep_deltas;
  std::vector<double> sweep_epsilons;
  std::vector<std::uint64_t> sweep_seeds;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "run a grid of experiments");
  add_common_flags(sweep_cmd, sweep_flags);
  sweep_cmd->add_option("--deltas", sweep_deltas, "delta grid");
  sweep_cmd->add_option("--epsilons", sweep_epsilons, "epsilon grid");
  sweep_cmd->add_option("--seeds", sweep_seeds, "seed grid");

  auto* verify_cmd = app.add_subcommand(
      "verify-collectives", "cross-check the all-to-all variants and reduces");
  (void)verify_cmd;

  CommonFlags trace_flags;
  auto* trace_cmd = app.add_subcommand(
      "golden-trace", "print the trace JSON of one experiment");
  add_common_flags(trace_cmd, trace_flags);

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      const auto row = caqrsim::harness::run_experiment(run_flags.cfg);
      if (run_flags.format == "csv") {
        std::cout << caqrsim::harness::csv_header() << "\n"
                  << caqrsim::harness::csv_row(row) << "\n";
      } else {
        std::cout << caqrsim::harness::json_row(row) << "\n";
      }
      return check_rows({row});
    }
    if (sweep_cmd->parsed()) {
      if (sweep_deltas.empty()) sweep_deltas = {sweep_flags.cfg.delta};
      if (sweep_epsilons.empty()) sweep_epsilons = {sweep_flags.cfg.epsilon};
      if (sweep_seeds.empty()) sweep_seeds = {sweep_flags.cfg.seed};
      std::vector<ExperimentConfig> configs;
      for (double d : sweep_deltas) {
        for (double e : sweep_epsilons) {
          for (std::uint64_t s : sweep_seeds) {
            ExperimentConfig cfg = sweep_flags.cfg;
            cfg.delta = d;
            cfg.epsilon = e;
            cfg.seed = s;
            configs.push_back(cfg);
          }
        }
      }
      std::vector<ReportRow> rows;
      rows.reserve(configs.size());
      for (const auto& cfg : configs) {
        rows.push_back(caqrsim::harness::run_experiment(cfg));
      }
      if (sweep_flags.format == "csv") {
        std::cout << caqrsim::harness::csv_header() << "\n";
        for (const auto& r : rows) {
          std::cout << caqrsim::harness::csv_row(r) << "\n";
        }
      } else {
        for (const auto& r : rows) {
          std::cout << caqrsim::harness::json_row(r) << "\n";
        }
      }
      return check_rows(rows);
    }
    if (trace_cmd->parsed()) {
      caqrsim::Trace trace;
      const auto row = caqrsim::harness::run_experiment(trace_flags.cfg, &trace);
      std::cout << caqrsim::trace_to_json(trace) << "\n";
      return check_rows({row});
    }
    return run_verify_collectives();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
