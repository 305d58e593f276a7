#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace caqrsim {

/// Time per operation (gamma), per word (beta), and per message (alpha).
struct CostParams {
  double gamma = 1.0;
  double beta = 1.0;
  double alpha = 1.0;
};

/// Resource counts measured along critical paths of the event DAG.
struct CostVector {
  long long ops = 0;
  long long words = 0;
  long long messages = 0;

  bool operator==(const CostVector&) const = default;
};

struct Event {
  enum class Kind { Compute, Send, Recv };

  Kind kind;
  int proc;                  // processor the task runs on
  long long op_count = 0;    // Compute only
  int peer = -1;             // Send: destination, Recv: source
  long long word_count = 0;  // Send/Recv
  long long payload_id = -1; // Send/Recv, matches the pair
};

/// Global event log in issue order plus the payload store.
/// Each processor's events, in issue order, form its program order.
struct Trace {
  int num_procs = 0;
  std::vector<Event> events;
  std::vector<std::vector<double>> payloads; // by payload id
};

/// A simulated machine of P processors exchanging point-to-point
/// asynchronous messages. Issuing an event never advances time by itself;
/// makespan and resource counts are evaluated afterwards from the trace.
class Machine {
public:
  explicit Machine(int num_procs);

  int num_procs() const { return trace_.num_procs; }

  /// Appends a compute task of `op_count` scalar operations on `proc`.
  void compute(int proc, long long op_count);

  /// Posts a message from src to dst. The send occupies src; the matching
  /// receive must be claimed later with receive(). Returns the payload id.
  long long post(int src, int dst, std::vector<double> payload);

  /// Appends the receive for a posted message and delivers the payload.
  std::vector<double> receive(long long payload_id);

  /// Convenience: post + receive back to back (send and recv adjacent in
  /// program order on their respective processors).
  std::vector<double> exchange(int src, int dst, std::vector<double> payload);

  const Trace& trace() const { return trace_; }

private:
  void check_proc(int proc) const;

  Trace trace_;
  std::vector<int> pending_dst_; // by payload id; -1 once received
  std::vector<int> src_of_;      // by payload id
};

/// Longest-path completion time of the trace under the given weights.
/// Throws if any posted message was never received.
double makespan(const Trace& trace, const CostParams& costs);

/// Three independent longest-path evaluations with weights (1,0,0),
/// (0,1,0), (0,0,1): per-resource maxima over paths.
CostVector critical_path_counts(const Trace& trace);

/// Final per-processor clocks under the given weights.
std::vector<double> final_clocks(const Trace& trace, const CostParams& costs);

/// Serializes events, payload sizes, and unit-cost clocks to JSON.
/// Payload contents are not serialized, only their sizes.
std::string trace_to_json(const Trace& trace);

} // namespace caqrsim
