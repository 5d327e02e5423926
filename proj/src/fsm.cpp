#include "platoon/fsm.hpp"

#include <algorithm>

namespace platoon {

RiskAssessment assess_scene(const World& world, const std::vector<int>& platoon_ids,
                            double l_safe) {
  if (platoon_ids.empty()) throw SimError("assess_scene: empty platoon");

  RiskAssessment out;
  const int lane = world.vehicle(platoon_ids.front()).lane;
  out.same_lane = true;
  double s_min = 1e18, s_max = -1e18;
  for (const int id : platoon_ids) {
    const VehicleState& v = world.vehicle(id);
    if (v.lane != lane) out.same_lane = false;
    s_min = std::min(s_min, v.s);
    s_max = std::max(s_max, v.s);
  }

  out.clear_zone = true;
  for (const auto& v : world.vehicles) {
    if (v.in_platoon) continue;
    if (v.s >= s_min - l_safe && v.s <= s_max + l_safe) {
      out.clear_zone = false;
      break;
    }
  }

  out.risk_level =
      (out.same_lane && out.clear_zone) ? RiskLevel::RoutineSafe : RiskLevel::Elevated;
  return out;
}

std::pair<FsmState, StrategyTag> fsm_step(const FsmState& state, const RiskAssessment& assessment,
                                          long step_index, const FsmConfig& cfg) {
  FsmState next = state;
  if (assessment.risk_level == RiskLevel::Elevated) {
    if (state.q != FsmMode::S2_DataDriven) next.entered_at = step_index;
    next.q = FsmMode::S2_DataDriven;
    next.safe_streak = 0;
  } else {
    next.safe_streak = std::min(state.safe_streak + 1, cfg.dwell);
    if (state.q == FsmMode::S2_DataDriven && next.safe_streak >= cfg.dwell) {
      next.q = FsmMode::S1_Lqr;
      next.entered_at = step_index;
    }
  }
  const StrategyTag tag = next.q == FsmMode::S1_Lqr ? StrategyTag::Lqr : StrategyTag::DataDriven;
  return {next, tag};
}

}  // namespace platoon
