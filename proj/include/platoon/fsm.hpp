#pragma once

#include <vector>

#include "platoon/world.hpp"

namespace platoon {

enum class RiskLevel { RoutineSafe, Elevated };

struct RiskAssessment {
  bool same_lane = false;
  bool clear_zone = false;
  RiskLevel risk_level = RiskLevel::Elevated;
};

struct FsmConfig {
  double l_safe = 50.0;  // m, clear-zone band ahead of and behind the platoon
  int dwell = 15;        // consecutive RoutineSafe steps required for S2 -> S1
};

enum class FsmMode { S1_Lqr, S2_DataDriven };
inline const char* fsm_mode_name(FsmMode m) { return m == FsmMode::S1_Lqr ? "S1" : "S2"; }

struct FsmState {
  FsmMode q = FsmMode::S2_DataDriven;
  long entered_at = 0;
  int safe_streak = 0;
};

enum class StrategyTag { Lqr, DataDriven };
inline const char* strategy_name(StrategyTag t) {
  return t == StrategyTag::Lqr ? "LQR" : "DataDriven";
}

// RoutineSafe iff the platoon shares one lane and no other participant sits
// within l_safe of the platoon's longitudinal extent (any lane).
RiskAssessment assess_scene(const World& world, const std::vector<int>& platoon_ids,
                            double l_safe);

// Elevated switches to S2 on the same step; S2 -> S1 requires `dwell`
// consecutive RoutineSafe assessments.
std::pair<FsmState, StrategyTag> fsm_step(const FsmState& state, const RiskAssessment& assessment,
                                          long step_index, const FsmConfig& cfg);

}  // namespace platoon
