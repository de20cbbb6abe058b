#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ocbf/core.hpp"

namespace ocbf {

// One finished traversal, reported by ConflictZone::exit_cav.
struct ExitRecord {
  int id = 0;
  Lane lane = Lane::kMain;
  double t0 = 0.0;
  double tf = 0.0;
};

// Coordinator ledger entries, in the order the events happened.
struct CoordinatorEvent {
  enum class Kind : std::uint8_t { kAdmit, kDefer, kExit, kTrigger };
  Kind kind = Kind::kAdmit;
  double t = 0.0;
  int id = 0;          // CAV concerned (trigger source for kTrigger)
  int recipients = 0;  // kTrigger only
};

// First-in-first-out coordinator for the control zone. It owns the queue,
// assigns ids in arrival order, resolves each CAV's preceding (same-lane)
// and merging (other-lane, one position ahead) partners from queue position,
// and books message counts for the notification protocol.
class ConflictZone {
 public:
  ConflictZone(const Geometry& g, const ConstraintParams& p) : geometry_(g), params_(p) {}

  const std::vector<CavAgent>& agents() const { return agents_; }
  // Engine-side mutation (states, anchors, controls); membership stays ours.
  std::vector<CavAgent>& agents_mut() { return agents_; }
  const std::vector<CoordinatorEvent>& events() const { return events_; }
  std::uint64_t message_count() const { return message_count_; }
  void add_messages(std::uint64_t n) { message_count_ += n; }

  CavAgent* find(int id) {
    for (auto& a : agents_) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }
  const CavAgent* find(int id) const {
    return const_cast<ConflictZone*>(this)->find(id);
  }

  // 1-based queue position; 0 when the CAV is not in the zone.
  int fifo_index_of(int id) const {
    for (std::size_t k = 0; k < agents_.size(); ++k) {
      if (agents_[k].id == id) return static_cast<int>(k) + 1;
    }
    return 0;
  }

  // True when a CAV entering `lane` at speed v0 would satisfy the rear-end
  // constraint against the current last CAV of that lane.
  bool can_admit(Lane lane, double v0) const {
    const int pred = last_in_lane(lane);
    if (pred < 0) return true;
    const CavAgent& ahead = agents_[pred];
    return ahead.state.x - params_.phi * v0 - params_.delta >= 0.0;
  }

  // Admit a CAV at the origin of `lane` unless the entry state would already
  // violate the rear-end constraint against its would-be predecessor; such
  // arrivals are deferred (nullptr) and must be retried by the caller once
  // the gap clears.
  CavAgent* admit(Lane lane, double t, double v0) {
    if (v0 < params_.v_min || v0 > params_.v_max) {
      throw std::domain_error("admit: v0 outside [v_min, v_max]");
    }
    if (!can_admit(lane, v0)) {
      events_.push_back({CoordinatorEvent::Kind::kDefer, t, next_id_, 0});
      return nullptr;
    }
    CavAgent a;
    a.id = next_id_++;
    a.lane = lane;
    a.state = {0.0, v0};
    a.t0 = t;
    a.u_current = 0.0;
    a.bound_anchor = a.state;
    agents_.push_back(a);
    resolve_links();
    events_.push_back({CoordinatorEvent::Kind::kAdmit, t, a.id, 0});
    return &agents_.back();
  }

  // Remove a CAV that reached the end of the zone. Queue positions shift,
  // so partner links are re-resolved for everyone behind it.
  ExitRecord exit_cav(int id, double t) {
    const auto it = std::find_if(agents_.begin(), agents_.end(),
                                 [id](const CavAgent& a) { return a.id == id; });
    if (it == agents_.end()) throw std::invalid_argument("exit_cav: unknown id");
    ExitRecord rec{it->id, it->lane, it->t0, t};
    agents_.erase(it);
    resolve_links();
    events_.push_back({CoordinatorEvent::Kind::kExit, t, id, 0});
    return rec;
  }

  // Ids of the CAVs whose constraints reference `source_id`, in queue order.
  std::vector<int> affected_by(int source_id) const {
    std::vector<int> out;
    for (const auto& a : agents_) {
      if ((a.ip && *a.ip == source_id) || (a.j && *a.j == source_id)) {
        out.push_back(a.id);
      }
    }
    return out;
  }

  // Event notification: the source reports to the coordinator (1 message),
  // which relays the fresh anchor to each affected follower.
  std::vector<int> propagate_trigger(int source_id, double t) {
    std::vector<int> out = affected_by(source_id);
    message_count_ += 1 + out.size();
    events_.push_back({CoordinatorEvent::Kind::kTrigger, t, source_id,
                       static_cast<int>(out.size())});
    return out;
  }

  // Recompute partner links from queue positions: ip is the nearest earlier
  // same-lane CAV, j the immediately preceding CAV when it runs on the other
  // lane (the pair that meets at the merge point).
  void resolve_links() {
    for (std::size_t k = 0; k < agents_.size(); ++k) {
      agents_[k].ip.reset();
      agents_[k].j.reset();
      for (std::size_t m = k; m-- > 0;) {
        if (agents_[m].lane == agents_[k].lane) {
          agents_[k].ip = agents_[m].id;
          break;
        }
      }
      if (k > 0 && agents_[k - 1].lane != agents_[k].lane) {
        agents_[k].j = agents_[k - 1].id;
      }
    }
  }

 private:
  int last_in_lane(Lane lane) const {
    for (std::size_t k = agents_.size(); k-- > 0;) {
      if (agents_[k].lane == lane) return static_cast<int>(k);
    }
    return -1;
  }

  Geometry geometry_;
  ConstraintParams params_;
  std::vector<CavAgent> agents_;
  std::vector<CoordinatorEvent> events_;
  std::uint64_t message_count_ = 0;
  int next_id_ = 1;
};

}  // namespace ocbf
