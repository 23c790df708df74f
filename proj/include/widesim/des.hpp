#pragma once

#include <algorithm>
#include <any>
#include <compare>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "widesim/error.hpp"

namespace widesim {

// Simulated time in seconds.
using SimTime = double;

struct EntityId {
  std::uint32_t value = 0;
  friend auto operator<=>(const EntityId&, const EntityId&) = default;
};

using EventTag = std::uint32_t;

struct SimEvent {
  SimTime time = 0.0;
  EntityId source;
  EntityId destination;
  EventTag tag = 0;
  std::any payload;
  std::uint64_t seq = 0;
};

class Simulation;

class Entity {
 public:
  virtual ~Entity() = default;
  virtual void process(Simulation& sim, const SimEvent& ev) = 0;
  virtual std::string_view name() const = 0;
};

// One line of the kernel-level dispatch log.
struct DispatchRecord {
  SimTime time;
  EntityId source;
  EntityId destination;
  EventTag tag;
  friend bool operator==(const DispatchRecord&, const DispatchRecord&) = default;
};

// Single-threaded discrete-event kernel. Events are totally ordered by
// (time, seq); seq is the insertion counter, so equal-time events are
// dispatched in the order they were scheduled.
class Simulation {
 public:
  Simulation() = default;
  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  // Entities are not owned; they must outlive the simulation run.
  EntityId register_entity(Entity& entity) {
    if (running_) {
      throw Error(Errc::AlreadyRunning, "des-core", "cannot register '" + std::string(entity.name()) + "' during run");
    }
    EntityId id{static_cast<std::uint32_t>(entities_.size())};
    entities_.push_back(&entity);
    return id;
  }

  std::uint64_t schedule(SimTime time, EntityId source, EntityId destination, EventTag tag, std::any payload = {}) {
    if (!(time >= clock_)) {
      throw Error(Errc::PastEvent, "des-core",
                  "event at t=" + std::to_string(time) + " is before clock " + std::to_string(clock_));
    }
    if (destination.value >= entities_.size()) {
      throw Error(Errc::UnknownEntity, "des-core", "destination " + std::to_string(destination.value));
    }
    SimEvent ev{time, source, destination, tag, std::move(payload), next_seq_++};
    const std::uint64_t seq = ev.seq;
    queue_.push_back(std::move(ev));
    std::push_heap(queue_.begin(), queue_.end(), later);
    return seq;
  }

  std::uint64_t schedule(SimEvent ev) {
    return schedule(ev.time, ev.source, ev.destination, ev.tag, std::move(ev.payload));
  }

  // Tombstones an event; it is discarded when it reaches the head of the queue.
  // Returns false when no such event is queued.
  bool cancel(std::uint64_t seq) {
    const bool queued =
        std::any_of(queue_.begin(), queue_.end(), [seq](const SimEvent& e) { return e.seq == seq; });
    if (!queued) return false;
    return cancelled_.insert(seq).second;
  }

  // Runs until the queue is exhausted or the next event lies after `until`.
  // Returns the final clock.
  SimTime run(std::optional<SimTime> until = std::nullopt) {
    running_ = true;
    struct Reset {
      bool& flag;
      ~Reset() { flag = false; }
    } reset{running_};

    while (!queue_.empty()) {
      if (until && queue_.front().time > *until) {
        clock_ = *until;
        return clock_;
      }
      std::pop_heap(queue_.begin(), queue_.end(), later);
      SimEvent ev = std::move(queue_.back());
      queue_.pop_back();
      if (auto it = cancelled_.find(ev.seq); it != cancelled_.end()) {
        cancelled_.erase(it);
        continue;
      }
      clock_ = ev.time;
      ++dispatched_;
      if (record_dispatches_) {
        dispatch_log_.push_back({ev.time, ev.source, ev.destination, ev.tag});
      }
      entities_[ev.destination.value]->process(*this, ev);
    }
    return clock_;
  }

  SimTime now() const noexcept { return clock_; }
  bool running() const noexcept { return running_; }
  std::size_t entity_count() const noexcept { return entities_.size(); }
  std::size_t pending() const noexcept { return queue_.size() - cancelled_.size(); }
  std::uint64_t dispatched() const noexcept { return dispatched_; }
  std::uint64_t scheduled() const noexcept { return next_seq_; }

  void record_dispatches(bool on) { record_dispatches_ = on; }
  const std::vector<DispatchRecord>& dispatch_log() const noexcept { return dispatch_log_; }

 private:
  static bool later(const SimEvent& a, const SimEvent& b) {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }

  std::vector<Entity*> entities_;
  std::vector<SimEvent> queue_;
  std::unordered_set<std::uint64_t> cancelled_;
  SimTime clock_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_ = 0;
  bool running_ = false;
  bool record_dispatches_ = false;
  std::vector<DispatchRecord> dispatch_log_;
};

// Convenience entity that forwards every event to a callable.
class LambdaEntity : public Entity {
 public:
  using Handler = std::function<void(Simulation&, const SimEvent&)>;
  LambdaEntity(std::string name, Handler handler) : name_(std::move(name)), handler_(std::move(handler)) {}
  void process(Simulation& sim, const SimEvent& ev) override { handler_(sim, ev); }
  std::string_view name() const override { return name_; }

 private:
  std::string name_;
  Handler handler_;
};

}  // namespace widesim
