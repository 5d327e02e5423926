#include "platoon/safety.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

SafetyPriority safety_priority(const World& world, int vehicle_id, double sigma,
                               const SafetyConfig& cfg) {
  const VehicleState& v = world.vehicle(vehicle_id);
  const VehicleState* lead = world.leader_in_lane(v.lane, v.s, v.id, world.params.d_vision);
  double headway = world.params.d_vision;
  if (lead != nullptr) headway = std::max(bumper_gap(*lead, v), cfg.headway_floor);

  SafetyPriority out;
  out.vehicle_id = vehicle_id;
  out.d_headway = headway;
  out.v_t = std::max(v.v, cfg.v_floor);
  out.sigma = sigma;
  out.p = -std::log(headway / out.v_t) + sigma;
  return out;
}

namespace {

double circle_gap(const TwinTrajectories& traj, const TwinTrajectories::Point& a, int ia,
                  const TwinTrajectories::Point& b, int ib) {
  const double dx = a.s - b.s;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy) - traj.radius[static_cast<size_t>(ia)] -
         traj.radius[static_cast<size_t>(ib)];
}

}  // namespace

double min_circle_gap(const TwinTrajectories& traj, int ego_index, double cap) {
  double gap = cap;
  for (long t = 1; t <= traj.horizon; ++t) {
    const auto& ego = traj.at(t, ego_index);
    for (int j = 0; j < traj.n; ++j) {
      if (j == ego_index) continue;
      gap = std::min(gap, circle_gap(traj, ego, ego_index, traj.at(t, j), j));
    }
  }
  return gap;
}

double conflict_gap(const TwinTrajectories& traj, int ego_index, double cap) {
  double gap = cap;
  const auto& ego0 = traj.at(0, ego_index);
  for (int j = 0; j < traj.n; ++j) {
    if (j == ego_index) continue;
    const double g0 = circle_gap(traj, ego0, ego_index, traj.at(0, j), j);
    for (long t = 1; t <= traj.horizon; ++t) {
      const double g = circle_gap(traj, traj.at(t, ego_index), ego_index, traj.at(t, j), j);
      if (g < 0.0 || g < g0 - 0.05) gap = std::min(gap, g);
    }
  }
  return gap;
}

bool has_conflict(const TwinTrajectories& traj, int ego_index, double buffer) {
  return conflict_gap(traj, ego_index, 1e18) < buffer;
}

double impact_severity(const TwinTrajectories& traj, int ego_index, double cap) {
  double severity = cap;
  const auto& ego0 = traj.at(0, ego_index);
  for (int j = 0; j < traj.n; ++j) {
    if (j == ego_index) continue;
    const double g0 = circle_gap(traj, ego0, ego_index, traj.at(0, j), j);
    double prev = g0;
    for (long t = 1; t <= traj.horizon; ++t) {
      const double g = circle_gap(traj, traj.at(t, ego_index), ego_index, traj.at(t, j), j);
      if (g < 0.0 || g < g0 - 0.05) {
        const double approach = std::max(0.0, (prev - g) / traj.dt);
        severity = std::min(severity, g - approach);
      }
      prev = g;
    }
  }
  return severity;
}

double safety_margin(const TwinTrajectories& traj, int ego_index, int target_lane,
                     double sentinel) {
  double margin = sentinel;
  for (long t = 1; t <= traj.horizon; ++t) {
    const auto& ego = traj.at(t, ego_index);

    int lead_cur = -1, lead_tgt = -1, fol_tgt = -1;
    double d_lead_cur = 1e18, d_lead_tgt = 1e18, d_fol_tgt = 1e18;
    for (int j = 0; j < traj.n; ++j) {
      if (j == ego_index) continue;
      const auto& other = traj.at(t, j);
      const double ds = other.s - ego.s;
      if (other.lane == ego.lane && ds > 0.0 && ds < d_lead_cur) {
        d_lead_cur = ds;
        lead_cur = j;
      }
      if (target_lane >= 0 && target_lane != ego.lane && other.lane == target_lane) {
        if (ds > 0.0 && ds < d_lead_tgt) {
          d_lead_tgt = ds;
          lead_tgt = j;
        }
        if (ds <= 0.0 && -ds < d_fol_tgt) {
          d_fol_tgt = -ds;
          fol_tgt = j;
        }
      }
    }
    for (const int j : {lead_cur, lead_tgt, fol_tgt}) {
      if (j < 0) continue;
      margin = std::min(margin, circle_gap(traj, ego, ego_index, traj.at(t, j), j));
    }
  }
  return margin;
}

double deficit_margin(const TwinTrajectories& traj, int ego_index, int target_lane,
                      double sentinel, double brake_decel) {
  double margin = sentinel;
  const long t = traj.horizon;
  const auto& ego = traj.at(t, ego_index);
  for (int j = 0; j < traj.n; ++j) {
    if (j == ego_index) continue;
    const auto& other = traj.at(t, j);
    if (other.s <= ego.s) continue;
    const bool relevant =
        other.lane == ego.lane ||
        (target_lane >= 0 && target_lane != ego.lane && other.lane == target_lane);
    if (!relevant) continue;
    const double closing = ego.v - other.v;
    if (closing <= 0.0) continue;
    margin = std::min(margin, circle_gap(traj, ego, ego_index, other, j) -
                                  closing * closing / (2.0 * brake_decel));
  }
  return margin;
}

CandidateEval evaluate_candidate(const TwinTrajectories& traj, int ego_index, int target_lane,
                                 const SafetyConfig& cfg, double sentinel) {
  CandidateEval eval;
  eval.conflict = conflict_gap(traj, ego_index, sentinel);
  eval.deficit = deficit_margin(traj, ego_index, target_lane, sentinel, cfg.brake_decel);
  eval.d_sm = safety_margin(traj, ego_index, target_lane, sentinel);
  eval.conflict_free = eval.conflict >= cfg.buffer && eval.deficit >= cfg.buffer;
  // ranking uses the usable headway: gap left after braking off the closing
  // speed. An equal-speed leader close ahead is sustainable (no constraint);
  // a lane that dead-ends in stopped traffic is worth only its standoff.
  if (eval.conflict_free) {
    eval.margin = eval.deficit;
  } else {
    const double severity = impact_severity(traj, ego_index, sentinel);
    eval.margin = std::min({eval.conflict, eval.deficit, eval.d_sm, severity});
  }
  return eval;
}

World& TwinWorldProjector::prepare_twin(const World& world) const {
  twin_ = world;  // copy-assign reuses buffer capacity across calls
  for (auto& slot : twin_.hdv) {
    if (!slot.has_value()) continue;
    if (!cfg_.hdv_mobil_in_prediction) slot->mobil_enabled = false;
    // a malfunction that has not started yet is not observable behavior
    if (slot->malfunction.pending(twin_.step_index)) slot->malfunction = Malfunction{};
  }
  return twin_;
}

TwinTrajectories TwinWorldProjector::rollout(const World& world,
                                             const std::vector<int>& platoon_ids,
                                             const std::vector<Action>& actions,
                                             long horizon) const {
  if (actions.size() != platoon_ids.size())
    throw SimError("rollout: action count does not match platoon size");

  World& twin = prepare_twin(world);
  for (size_t k = 0; k < platoon_ids.size(); ++k)
    apply_action(twin, platoon_ids[k], actions[k], env_cfg_);

  TwinTrajectories traj;
  traj.horizon = horizon;
  traj.dt = twin.params.dt;
  traj.n = static_cast<int>(twin.vehicles.size());
  traj.points.resize(static_cast<size_t>(horizon + 1) * traj.n);
  traj.radius.resize(static_cast<size_t>(traj.n));
  for (int i = 0; i < traj.n; ++i) {
    const VehicleState& v = twin.vehicles[static_cast<size_t>(i)];
    traj.radius[static_cast<size_t>(i)] = v.radius();
    traj.points[static_cast<size_t>(i)] = {v.s, v.y, v.v, v.lane};
  }

  std::vector<CavCommand> cmds;
  for (long t = 1; t <= horizon; ++t) {
    cmds.clear();
    for (const auto& v : twin.vehicles) {
      auto& slot = twin.cav[static_cast<size_t>(v.id)];
      if (!slot.has_value()) continue;
      CavCommand c;
      c.id = v.id;
      c.cmd = pid_track(v, twin.road, slot->target_speed, slot->target_lane, slot->pid,
                        twin.params.pid, twin.params.limits, twin.params.dt);
      cmds.push_back(c);
    }
    step_world(twin, cmds);
    for (int i = 0; i < traj.n; ++i) {
      const VehicleState& v = twin.vehicles[static_cast<size_t>(i)];
      traj.points[static_cast<size_t>(t * traj.n + i)] = {v.s, v.y, v.v, v.lane};
    }
  }
  return traj;
}

namespace {

// Candidate evaluation order under margin ties: the committed action first,
// then the least disruptive alternatives.
constexpr std::array<Action, kActionCount> kCandidateOrder{
    Action::Idle, Action::Slower, Action::Faster, Action::LaneRight, Action::LaneLeft};

int candidate_target_lane(const World& world, int vehicle_id, Action a) {
  const CavController& ctl = *world.cav[static_cast<size_t>(vehicle_id)];
  switch (a) {
    case Action::LaneLeft: return std::max(0, ctl.target_lane - 1);
    case Action::LaneRight: return std::min(world.road.num_lanes - 1, ctl.target_lane + 1);
    default: return ctl.target_lane;
  }
}

// Replacing the incumbent needs a real margin improvement (0.05 m); without
// the epsilon, near-tied best-effort candidates flip the chosen action every
// step and the vehicle rides a lane boundary. A conflict-free candidate may
// displace a conflicted one at equal margin, never at a lower one, which
// keeps the substituted margin >= the original margin unconditionally.
bool better_candidate(const CandidateEval& a, const CandidateEval& b) {
  if (a.margin > b.margin + 0.05) return true;
  return a.margin >= b.margin && a.conflict_free && !b.conflict_free;
}

}  // namespace

ProjectionResult TwinWorldProjector::project(const World& world,
                                             const std::vector<int>& platoon_ids,
                                             const JointAction& proposal,
                                             std::uint64_t seed) const {
  if (proposal.per_vehicle.size() != platoon_ids.size())
    throw SimError("project: proposal size does not match platoon size");

  ProjectionResult result;
  result.action = proposal;
  if (!cfg_.enabled) return result;

  Rng rng(derive_seed(seed, 0x534146ULL));
  std::vector<SafetyPriority> priorities;
  priorities.reserve(platoon_ids.size());
  for (const int id : platoon_ids)
    priorities.push_back(safety_priority(world, id, rng.uniform(0.0, cfg_.sigma_scale), cfg_));
  std::sort(priorities.begin(), priorities.end(), [](const SafetyPriority& a, const SafetyPriority& b) {
    if (a.p != b.p) return a.p > b.p;
    return a.vehicle_id < b.vehicle_id;
  });

  std::vector<Action> committed = proposal.per_vehicle;
  const double sentinel = world.params.d_vision;

  for (const SafetyPriority& pr : priorities) {
    size_t k = 0;
    while (platoon_ids[k] != pr.vehicle_id) ++k;
    const int ego_index = pr.vehicle_id;  // vehicle id == index into world.vehicles

    TwinTrajectories traj = rollout(world, platoon_ids, committed, cfg_.horizon);
    const CandidateEval original_eval = evaluate_candidate(
        traj, ego_index, candidate_target_lane(world, pr.vehicle_id, committed[k]), cfg_,
        sentinel);

    SafetyAssessment as;
    as.vehicle_id = pr.vehicle_id;
    as.priority = pr.p;
    as.sigma = pr.sigma;
    as.original = committed[k];
    as.chosen = committed[k];
    as.margin_original = original_eval.margin;
    as.margin_chosen = original_eval.margin;

    if (!original_eval.conflict_free) {
      Action best = committed[k];
      CandidateEval best_eval = original_eval;

      for (const Action cand : kCandidateOrder) {
        if (cand == as.original) continue;
        std::vector<Action> trial = committed;
        trial[k] = cand;
        const TwinTrajectories t2 = rollout(world, platoon_ids, trial, cfg_.horizon);
        const CandidateEval eval = evaluate_candidate(
            t2, ego_index, candidate_target_lane(world, pr.vehicle_id, cand), cfg_, sentinel);
        if (better_candidate(eval, best_eval)) {
          best = cand;
          best_eval = eval;
        }
      }

      if (best != as.original) {
        committed[k] = best;
        as.chosen = best;
        as.substituted = true;
        as.margin_chosen = best_eval.margin;
        result.substitutions += 1;
      }
      if (!best_eval.conflict_free) {
        as.unsafe_best_effort = true;
        result.any_best_effort = true;
      }
    }
    result.assessments.push_back(as);
  }

  result.action.per_vehicle = committed;
  result.action.index = encode_action(committed);
  return result;
}

std::vector<std::array<bool, kActionCount>> TwinWorldProjector::per_vehicle_admissible(
    const World& world, const std::vector<int>& platoon_ids) const {
  std::vector<std::array<bool, kActionCount>> out(platoon_ids.size());
  const double sentinel = world.params.d_vision;
  std::vector<Action> baseline(platoon_ids.size(), Action::Idle);

  for (size_t k = 0; k < platoon_ids.size(); ++k) {
    const int ego_index = platoon_ids[k];
    std::array<double, kActionCount> margins{};
    bool any = false;
    for (int a = 0; a < kActionCount; ++a) {
      std::vector<Action> trial = baseline;
      trial[k] = static_cast<Action>(a);
      const TwinTrajectories traj = rollout(world, platoon_ids, trial, cfg_.horizon);
      const CandidateEval eval =
          evaluate_candidate(traj, ego_index,
                             candidate_target_lane(world, platoon_ids[k], static_cast<Action>(a)),
                             cfg_, sentinel);
      margins[static_cast<size_t>(a)] = eval.margin;
      out[k][static_cast<size_t>(a)] = eval.conflict_free;
      any = any || out[k][static_cast<size_t>(a)];
    }
    if (!any) {
      const auto it = std::max_element(margins.begin(), margins.end());
      out[k][static_cast<size_t>(it - margins.begin())] = true;
    }
  }
  return out;
}

std::vector<std::uint8_t> TwinWorldProjector::joint_mask(
    const std::vector<std::array<bool, kActionCount>>& per_vehicle) const {
  const int n = static_cast<int>(per_vehicle.size());
  const long total = joint_action_space(n);
  std::vector<std::uint8_t> mask(static_cast<size_t>(total), 0);
  for (long idx = 0; idx < total; ++idx) {
    long rem = idx;
    bool ok = true;
    for (int k = n - 1; k >= 0; --k) {
      const int a = static_cast<int>(rem % kActionCount);
      rem /= kActionCount;
      if (!per_vehicle[static_cast<size_t>(k)][static_cast<size_t>(a)]) {
        ok = false;
        break;
      }
    }
    mask[static_cast<size_t>(idx)] = ok ? 1 : 0;
  }
  return mask;
}

}  // namespace platoon
