#include "platoon/driver_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "platoon/world.hpp"

namespace platoon {

double idm_accel(double v, double dv, double gap, const IdmParams& p) {
  if (!(gap > 0.0)) throw SimError("idm_accel: gap must be > 0 (overlapping pair)");
  const double dynamic = v * p.T + v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf));
  const double s_star = p.s0 + std::max(0.0, dynamic);
  const double ratio = s_star / gap;  // 0 for gap = +inf
  return p.a_max * (1.0 - std::pow(v / p.v0, p.delta) - ratio * ratio);
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// IDM acceleration of `self` following `leader` (nullptr = free road).
double accel_against(const VehicleState& self, const VehicleState* leader, const IdmParams& p) {
  if (leader == nullptr) return idm_accel(self.v, 0.0, kInf, p);
  const double gap = bumper_gap(*leader, self);
  if (gap <= 0.0) return -kInf;  // candidate arrangement is already infeasible
  return idm_accel(self.v, self.v - leader->v, gap, p);
}

}  // namespace

LaneChange mobil_decide(const World& world, int ego_id, const MobilParams& mp, const IdmParams& idm) {
  if (!world.has_vehicle(ego_id)) throw SimError("mobil_decide: unknown vehicle id");
  const VehicleState& ego = world.vehicle(ego_id);
  const int lane = ego.lane;

  const VehicleState* old_lead = world.leader_in_lane(lane, ego.s, ego_id);
  const VehicleState* old_fol = world.follower_in_lane(lane, ego.s, ego_id);
  const double a_ego_before = accel_against(ego, old_lead, idm);
  // old follower gains the ego's leader when the ego departs
  const double a_oldfol_before = old_fol ? accel_against(*old_fol, &ego, idm) : 0.0;
  const double a_oldfol_after = old_fol ? accel_against(*old_fol, old_lead, idm) : 0.0;

  double best_gain = -kInf;
  LaneChange best = LaneChange::KeepLane;

  for (const LaneChange dir : {LaneChange::ChangeRight, LaneChange::ChangeLeft}) {
    const int target = lane + (dir == LaneChange::ChangeRight ? 1 : -1);
    if (!world.road.valid_lane(target)) continue;

    const VehicleState* new_lead = world.leader_in_lane(target, ego.s, ego_id);
    const VehicleState* new_fol = world.follower_in_lane(target, ego.s, ego_id);

    // physical feasibility: positive gaps to both target-lane neighbors
    if (new_lead && bumper_gap(*new_lead, ego) <= 0.0) continue;
    if (new_fol && bumper_gap(ego, *new_fol) <= 0.0) continue;

    // safety criterion: the new follower must not be forced below -b_safe
    const double a_newfol_after = new_fol ? accel_against(*new_fol, &ego, idm) : 0.0;
    if (new_fol && a_newfol_after < -mp.b_safe) continue;

    const double a_ego_after = accel_against(ego, new_lead, idm);
    const double a_newfol_before = new_fol ? accel_against(*new_fol, new_lead, idm) : 0.0;

    const double gain = (a_ego_after - a_ego_before) +
                        mp.politeness * ((a_newfol_after - a_newfol_before) +
                                         (a_oldfol_after - a_oldfol_before));
    const double threshold =
        mp.a_thr + (dir == LaneChange::ChangeRight ? -mp.bias_right : mp.bias_right);
    if (gain > threshold && gain > best_gain) {
      best_gain = gain;
      best = dir;
    }
  }
  return best;
}

}  // namespace platoon
