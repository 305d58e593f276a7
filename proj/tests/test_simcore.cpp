#include "caqrsim/simcore.hpp"
#include "test_util.hpp"

#include <doctest.h>
#include <json.hpp>

#include <stdexcept>

using namespace caqrsim;

TEST_CASE("machine construction") {
  CHECK_THROWS_AS(Machine(0), std::invalid_argument);
  Machine one(1);
  CHECK(one.num_procs() == 1);
  CHECK(makespan(one.trace(), {}) == 0.0);
  Machine four(4);
  const auto clocks = final_clocks(four.trace(), {});
  REQUIRE(clocks.size() == 4);
  for (double c : clocks) CHECK(c == 0.0);
}

TEST_CASE("compute advances clocks by gamma * ops") {
  Machine m(2);
  m.compute(0, 5);
  CHECK(makespan(m.trace(), {2.0, 0.0, 0.0}) == 10.0);
  m.compute(0, 0); // zero-op task is logged but free
  CHECK(m.trace().events.size() == 2);
  CHECK(makespan(m.trace(), {2.0, 0.0, 0.0}) == 10.0);
  m.compute(1, 3);
  m.compute(1, 4);
  const auto clocks = final_clocks(m.trace(), {1.0, 0.0, 0.0});
  CHECK(clocks[1] == 7.0);
  CHECK_THROWS_AS(m.compute(0, -1), std::invalid_argument);
  CHECK_THROWS_AS(m.compute(5, 1), std::out_of_range);
}

TEST_CASE("exchange timing") {
  SUBCASE("idle endpoints: alpha + w*beta") {
    Machine m(2);
    const auto got = m.exchange(0, 1, {1.0, 2.0, 3.0});
    CHECK(got == std::vector<double>{1.0, 2.0, 3.0});
    CHECK(makespan(m.trace(), {0.0, 1.0, 10.0}) == 13.0);
  }
  SUBCASE("busy sender delays the receive") {
    Machine m(2);
    m.compute(0, 7);
    m.exchange(0, 1, {1.0, 2.0, 3.0});
    const auto clocks = final_clocks(m.trace(), {1.0, 1.0, 10.0});
    CHECK(clocks[1] == 20.0);
  }
  SUBCASE("self-send rejected") {
    Machine m(2);
    CHECK_THROWS_AS(m.exchange(1, 1, {1.0}), std::invalid_argument);
  }
}

TEST_CASE("makespan requires matched messages and is deterministic") {
  Machine m(2);
  m.compute(0, 5);
  CHECK(makespan(m.trace(), {2.0, 0.0, 0.0}) == 10.0);
  const long long id = m.post(0, 1, {4.0});
  CHECK_THROWS_AS(makespan(m.trace(), {}), std::logic_error);
  CHECK(m.receive(id) == std::vector<double>{4.0});
  CHECK_THROWS_AS(m.receive(id), std::logic_error); // double receive
  const double a = makespan(m.trace(), {1.0, 2.0, 3.0});
  const double b = makespan(m.trace(), {1.0, 2.0, 3.0});
  CHECK(a == b);
}

TEST_CASE("critical path counts") {
  SUBCASE("empty trace") {
    Machine m(3);
    CHECK(critical_path_counts(m.trace()) == CostVector{0, 0, 0});
  }
  SUBCASE("one compute and one message") {
    Machine m(2);
    m.compute(0, 5);
    m.exchange(0, 1, {1.0, 2.0, 3.0});
    const auto c = critical_path_counts(m.trace());
    CHECK(c.ops == 5);
    // The receive overlaps the send it matches: one message, counted once.
    CHECK(c.words == 3);
    CHECK(c.messages == 1);
  }
}

TEST_CASE("separability and monotonicity over random traces") {
  testutil::Rng rng(0xC0FFEEULL);
  for (int trial = 0; trial < 50; ++trial) {
    const int p = 2 + rng.below(4);
    Machine m(p);
    std::vector<long long> open;
    for (int step = 0; step < 30; ++step) {
      const int kind = rng.below(3);
      if (kind == 0) {
        m.compute(rng.below(p), rng.below(9));
      } else if (kind == 1) {
        const int src = rng.below(p);
        int dst = rng.below(p);
        if (dst == src) dst = (dst + 1) % p;
        std::vector<double> payload(static_cast<std::size_t>(rng.below(5)), 1.0);
        open.push_back(m.post(src, dst, std::move(payload)));
      } else if (!open.empty()) {
        m.receive(open.back());
        open.pop_back();
      }
    }
    while (!open.empty()) {
      m.receive(open.back());
      open.pop_back();
    }
    const CostParams costs{1.5, 2.5, 3.5};
    const double before = makespan(m.trace(), costs);
    const auto c = critical_path_counts(m.trace());
    CHECK(before <= costs.gamma * static_cast<double>(c.ops) +
                        costs.beta * static_cast<double>(c.words) +
                        costs.alpha * static_cast<double>(c.messages) + 1e-9);
    m.compute(rng.below(p), 1 + rng.below(4));
    CHECK(makespan(m.trace(), costs) >= before);
    // Conservation: send words equal recv words, per payload.
    long long sent = 0;
    long long received = 0;
    for (const auto& e : m.trace().events) {
      if (e.kind == Event::Kind::Send) sent += e.word_count;
      if (e.kind == Event::Kind::Recv) received += e.word_count;
    }
    CHECK(sent == received);
  }
}

TEST_CASE("trace serialization") {
  Machine m(2);
  m.compute(0, 2);
  m.exchange(0, 1, {7.0, 8.0});
  const std::string s = trace_to_json(m.trace());
  const auto j = nlohmann::json::parse(s);
  CHECK(j["num_procs"] == 2);
  CHECK(j["events"].size() == 3);
  CHECK(j["payload_sizes"].size() == 1);
  CHECK(j["payload_sizes"][0] == 2);
  CHECK(trace_to_json(m.trace()) == s); // stable serialization
}
