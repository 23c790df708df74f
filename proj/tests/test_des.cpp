#include <gtest/gtest.h>

#include <random>
#include <vector>

#include "widesim/des.hpp"

using namespace widesim;

namespace {

struct Recorder : Entity {
  std::vector<std::pair<SimTime, EventTag>> seen;
  std::function<void(Simulation&, const SimEvent&)> also;
  void process(Simulation& sim, const SimEvent& ev) override {
    seen.emplace_back(ev.time, ev.tag);
    if (also) also(sim, ev);
  }
  std::string_view name() const override { return "recorder"; }
};

}  // namespace

TEST(Schedule, InsertsOneEvent) {
  Simulation sim;
  Recorder a, b;
  auto ia = sim.register_entity(a);
  auto ib = sim.register_entity(b);
  sim.schedule(5.0, ia, ib, 1);
  EXPECT_EQ(sim.pending(), 1u);
  EXPECT_EQ(sim.run(), 5.0);
  ASSERT_EQ(b.seen.size(), 1u);
  EXPECT_EQ(b.seen[0].first, 5.0);
}

TEST(Schedule, RejectsPastEvent) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  a.also = [&](Simulation& s, const SimEvent& ev) {
    if (ev.tag == 1) {
      try {
        s.schedule(2.0, id, id, 2);
        ADD_FAILURE() << "expected PastEvent";
      } catch (const Error& e) {
        EXPECT_EQ(e.code(), Errc::PastEvent);
      }
    }
  };
  sim.schedule(3.0, id, id, 1);
  sim.run();
  EXPECT_EQ(a.seen.size(), 1u);
}

TEST(Schedule, RejectsUnknownDestination) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  try {
    sim.schedule(1.0, id, EntityId{7}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownEntity);
  }
}

TEST(Schedule, EqualTimesAreFifo) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  sim.schedule(5.0, id, id, 1);
  sim.schedule(5.0, id, id, 2);
  sim.run();
  ASSERT_EQ(a.seen.size(), 2u);
  EXPECT_EQ(a.seen[0].second, 1u);
  EXPECT_EQ(a.seen[1].second, 2u);
}

TEST(Run, EmptyQueueReturnsZero) {
  Simulation sim;
  EXPECT_EQ(sim.run(), 0.0);
  EXPECT_EQ(sim.dispatched(), 0u);
}

TEST(Run, DispatchesInTimeOrder) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  sim.schedule(3.0, id, id, 3);
  sim.schedule(1.0, id, id, 1);
  EXPECT_EQ(sim.run(), 3.0);
  ASSERT_EQ(a.seen.size(), 2u);
  EXPECT_EQ(a.seen[0].first, 1.0);
  EXPECT_EQ(a.seen[1].first, 3.0);
}

TEST(Run, SameTimeEventFromHandlerGoesLast) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  a.also = [&](Simulation& s, const SimEvent& ev) {
    if (ev.tag == 1) s.schedule(1.0, id, id, 9);
  };
  sim.schedule(1.0, id, id, 1);
  sim.schedule(1.0, id, id, 2);
  sim.schedule(1.0, id, id, 3);
  sim.run();
  std::vector<EventTag> tags;
  for (auto& s : a.seen) tags.push_back(s.second);
  EXPECT_EQ(tags, (std::vector<EventTag>{1, 2, 3, 9}));
}

TEST(Run, UntilStopsAndKeepsLaterEvents) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  sim.schedule(1.0, id, id, 1);
  sim.schedule(4.0, id, id, 2);
  EXPECT_EQ(sim.run(2.5), 2.5);
  EXPECT_EQ(sim.now(), 2.5);
  EXPECT_EQ(a.seen.size(), 1u);
  EXPECT_EQ(sim.pending(), 1u);
  EXPECT_EQ(sim.run(), 4.0);
  EXPECT_EQ(a.seen.size(), 2u);
}

TEST(Run, EventAtUntilIsDispatched) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  sim.schedule(2.0, id, id, 1);
  sim.run(2.0);
  EXPECT_EQ(a.seen.size(), 1u);
}

TEST(Register, SequentialIds) {
  Simulation sim;
  Recorder a, b, c;
  EXPECT_EQ(sim.register_entity(a).value, 0u);
  EXPECT_EQ(sim.register_entity(b).value, 1u);
  EXPECT_EQ(sim.register_entity(c).value, 2u);
}

TEST(Register, DuringRunFails) {
  Simulation sim;
  Recorder a, late;
  auto id = sim.register_entity(a);
  bool threw = false;
  a.also = [&](Simulation& s, const SimEvent&) {
    try {
      s.register_entity(late);
    } catch (const Error& e) {
      threw = e.code() == Errc::AlreadyRunning;
    }
  };
  sim.schedule(0.0, id, id, 0);
  sim.run();
  EXPECT_TRUE(threw);
  EXPECT_FALSE(sim.running());
}

TEST(Register, NoEntitiesRunReturnsZero) {
  Simulation sim;
  EXPECT_EQ(sim.run(), 0.0);
}

TEST(Cancel, TombstonedEventIsSkipped) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  auto s1 = sim.schedule(1.0, id, id, 1);
  sim.schedule(2.0, id, id, 2);
  EXPECT_TRUE(sim.cancel(s1));
  EXPECT_FALSE(sim.cancel(s1));
  EXPECT_FALSE(sim.cancel(12345));
  EXPECT_EQ(sim.pending(), 1u);
  sim.run();
  ASSERT_EQ(a.seen.size(), 1u);
  EXPECT_EQ(a.seen[0].second, 2u);
}

TEST(Cancel, DispatchedEventCannotBeCancelled) {
  Simulation sim;
  Recorder a;
  auto id = sim.register_entity(a);
  auto s1 = sim.schedule(1.0, id, id, 1);
  sim.run();
  EXPECT_FALSE(sim.cancel(s1));
  EXPECT_EQ(sim.pending(), 0u);
}

namespace {

// Random cascade: each event may spawn children at equal or later times.
std::vector<DispatchRecord> random_cascade(std::uint64_t seed, std::optional<SimTime> until, Simulation& sim,
                                           Recorder& a, std::uint64_t& spawned) {
  std::mt19937_64 rng(seed);
  auto id = sim.register_entity(a);
  sim.record_dispatches(true);
  spawned = 0;
  a.also = [&](Simulation& s, const SimEvent& ev) {
    if (ev.tag > 4) return;
    int kids = std::uniform_int_distribution<int>(0, 3)(rng);
    for (int k = 0; k < kids; ++k) {
      double dt = std::bernoulli_distribution(0.3)(rng) ? 0.0 : std::uniform_real_distribution<double>(0, 2)(rng);
      s.schedule(s.now() + dt, id, id, ev.tag + 1);
      ++spawned;
    }
  };
  for (int i = 0; i < 20; ++i) {
    sim.schedule(std::floor(std::uniform_real_distribution<double>(0, 5)(rng)), id, id, 0);
    ++spawned;
  }
  sim.run(until);
  return sim.dispatch_log();
}

}  // namespace

TEST(Properties, ClockIsMonotoneAndTiesFollowSeq) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Simulation sim;
    Recorder a;
    std::uint64_t spawned = 0;
    auto log = random_cascade(seed, std::nullopt, sim, a, spawned);
    for (std::size_t i = 1; i < log.size(); ++i) ASSERT_LE(log[i - 1].time, log[i].time);
    EXPECT_EQ(log.size(), spawned);
  }
}

TEST(Properties, ConservationUnderUntil) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Simulation sim;
    Recorder a;
    std::uint64_t spawned = 0;
    random_cascade(seed, 3.0, sim, a, spawned);
    EXPECT_EQ(sim.dispatched() + sim.pending(), spawned);
    EXPECT_EQ(sim.scheduled(), spawned);
  }
}

TEST(Properties, IdenticalRunsGiveIdenticalDispatchLogs) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Simulation s1, s2;
    Recorder a1, a2;
    std::uint64_t n1 = 0, n2 = 0;
    auto l1 = random_cascade(seed, std::nullopt, s1, a1, n1);
    auto l2 = random_cascade(seed, std::nullopt, s2, a2, n2);
    EXPECT_EQ(l1, l2);
  }
}

TEST(Properties, EqualTimeDispatchFollowsScheduleOrder) {
  Simulation sim;
  std::vector<std::uint64_t> order;
  LambdaEntity e("e", [&](Simulation&, const SimEvent& ev) { order.push_back(ev.seq); });
  auto id = sim.register_entity(e);
  for (int i = 0; i < 50; ++i) sim.schedule(i % 3 == 0 ? 1.0 : 2.0, id, id, 0);
  sim.run();
  for (std::size_t i = 1; i < order.size(); ++i) {
    if ((order[i - 1] % 3 == 0) == (order[i] % 3 == 0)) {
      EXPECT_LT(order[i - 1], order[i]);
    }
  }
}
