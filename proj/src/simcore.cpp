#include "caqrsim/simcore.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <stdexcept>

namespace caqrsim {

Machine::Machine(int num_procs) {
  if (num_procs < 1) {
    throw std::invalid_argument("Machine: need at least one processor");
  }
  trace_.num_procs = num_procs;
}

void Machine::check_proc(int proc) const {
  if (proc < 0 || proc >= trace_.num_procs) {
    throw std::out_of_range("Machine: processor index out of range");
  }
}

void Machine::compute(int proc, long long op_count) {
  check_proc(proc);
  if (op_count < 0) {
    throw std::invalid_argument("Machine: negative op count");
  }
  Event e;
  e.kind = Event::Kind::Compute;
  e.proc = proc;
  e.op_count = op_count;
  trace_.events.push_back(e);
}

long long Machine::post(int src, int dst, std::vector<double> payload) {
  check_proc(src);
  check_proc(dst);
  if (src == dst) {
    throw std::invalid_argument("Machine: self-send rejected");
  }
  const long long id = static_cast<long long>(trace_.payloads.size());
  Event e;
  e.kind = Event::Kind::Send;
  e.proc = src;
  e.peer = dst;
  e.word_count = static_cast<long long>(payload.size());
  e.payload_id = id;
  trace_.events.push_back(e);
  trace_.payloads.push_back(std::move(payload));
  pending_dst_.push_back(dst);
  src_of_.push_back(src);
  return id;
}

std::vector<double> Machine::receive(long long payload_id) {
  if (payload_id < 0 ||
      payload_id >= static_cast<long long>(pending_dst_.size())) {
    throw std::out_of_range("Machine: unknown payload id");
  }
  const int dst = pending_dst_[static_cast<std::size_t>(payload_id)];
  if (dst < 0) {
    throw std::logic_error("Machine: message already received");
  }
  pending_dst_[static_cast<std::size_t>(payload_id)] = -1;
  const auto& p = trace_.payloads[static_cast<std::size_t>(payload_id)];
  Event e;
  e.kind = Event::Kind::Recv;
  e.proc = dst;
  e.peer = src_of_[static_cast<std::size_t>(payload_id)];
  e.word_count = static_cast<long long>(p.size());
  e.payload_id = payload_id;
  trace_.events.push_back(e);
  return p;
}

std::vector<double> Machine::exchange(int src, int dst,
                                      std::vector<double> payload) {
  return receive(post(src, dst, std::move(payload)));
}

namespace {

// Longest-path DP over the trace in issue order.
//
// Send: occupies the sender for its full duration; the cross edge to the
// matching receive leaves from the sender's ready time *before* the send
// (messages are asynchronous).
// Recv: completes at max(src ready time, dst ready time) + duration.
std::vector<double> run_clocks(const Trace& trace, double gamma, double beta,
                               double alpha) {
  std::vector<double> clock(static_cast<std::size_t>(trace.num_procs), 0.0);
  std::vector<double> send_ready; // by payload id
  std::vector<char> received;
  send_ready.resize(trace.payloads.size(), 0.0);
  received.resize(trace.payloads.size(), 0);
  std::vector<char> sent(trace.payloads.size(), 0);

  for (const Event& e : trace.events) {
    auto& c = clock[static_cast<std::size_t>(e.proc)];
    switch (e.kind) {
      case Event::Kind::Compute:
        c += gamma * static_cast<double>(e.op_count);
        break;
      case Event::Kind::Send: {
        const auto id = static_cast<std::size_t>(e.payload_id);
        send_ready[id] = c;
        sent[id] = 1;
        c += alpha + beta * static_cast<double>(e.word_count);
        break;
      }
      case Event::Kind::Recv: {
        const auto id = static_cast<std::size_t>(e.payload_id);
        if (!sent[id]) {
          throw std::logic_error("makespan: receive precedes its send");
        }
        received[id] = 1;
        const double start = std::max(c, send_ready[id]);
        c = start + alpha + beta * static_cast<double>(e.word_count);
        break;
      }
    }
  }
  for (std::size_t id = 0; id < received.size(); ++id) {
    if (sent[id] && !received[id]) {
      throw std::logic_error("makespan: unmatched message in trace");
    }
  }
  return clock;
}

} // namespace

std::vector<double> final_clocks(const Trace& trace, const CostParams& costs) {
  return run_clocks(trace, costs.gamma, costs.beta, costs.alpha);
}

double makespan(const Trace& trace, const CostParams& costs) {
  const auto clocks = final_clocks(trace, costs);
  double best = 0.0;
  for (double c : clocks) best = std::max(best, c);
  return best;
}

CostVector critical_path_counts(const Trace& trace) {
  CostVector cv;
  auto maxof = [](const std::vector<double>& v) {
    double b = 0.0;
    for (double x : v) b = std::max(b, x);
    return static_cast<long long>(b + 0.5);
  };
  cv.ops = maxof(run_clocks(trace, 1.0, 0.0, 0.0));
  cv.words = maxof(run_clocks(trace, 0.0, 1.0, 0.0));
  cv.messages = maxof(run_clocks(trace, 0.0, 0.0, 1.0));
  return cv;
}

std::string trace_to_json(const Trace& trace) {
  nlohmann::json j;
  j["num_procs"] = trace.num_procs;
  auto& events = j["events"] = nlohmann::json::array();
  for (const Event& e : trace.events) {
    nlohmann::json je;
    switch (e.kind) {
      case Event::Kind::Compute:
        je["kind"] = "compute";
        je["proc"] = e.proc;
        je["ops"] = e.op_count;
        break;
      case Event::Kind::Send:
        je["kind"] = "send";
        je["proc"] = e.proc;
        je["peer"] = e.peer;
        je["words"] = e.word_count;
        je["payload"] = e.payload_id;
        break;
      case Event::Kind::Recv:
        je["kind"] = "recv";
        je["proc"] = e.proc;
        je["peer"] = e.peer;
        je["words"] = e.word_count;
        je["payload"] = e.payload_id;
        break;
    }
    events.push_back(std::move(je));
  }
  auto& sizes = j["payload_sizes"] = nlohmann::json::array();
  for (const auto& p : trace.payloads) sizes.push_back(p.size());
  j["clocks"] = final_clocks(trace, CostParams{1.0, 1.0, 1.0});
  return j.dump();
}

} // namespace caqrsim
