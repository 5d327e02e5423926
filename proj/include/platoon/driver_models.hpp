#pragma once

#include "platoon/types.hpp"

namespace platoon {

struct World;

struct IdmParams {
  double v0 = 25.0;     // desired speed, m/s
  double T = 1.5;       // desired time headway, s
  double s0 = 2.0;      // jam distance, m
  double a_max = 1.5;   // max accel, m/s^2
  double b_comf = 3.0;  // comfortable decel, m/s^2 (> 0)
  double delta = 4.0;   // accel exponent

  void validate() const {
    if (v0 <= 0 || T <= 0 || s0 <= 0 || a_max <= 0 || b_comf <= 0)
      throw ConfigError("idm: all parameters must be positive");
    if (delta < 1.0) throw ConfigError("idm.delta: must be >= 1");
  }
};

struct MobilParams {
  double politeness = 0.3;   // in [0, 1]
  double b_safe = 4.0;       // max decel imposed on the new follower, m/s^2
  double a_thr = 0.2;        // switching threshold, m/s^2
  double bias_right = 0.0;   // keep-right incentive, m/s^2

  void validate() const {
    if (b_safe <= 0) throw ConfigError("mobil.b_safe: must be > 0");
    if (a_thr < 0) throw ConfigError("mobil.a_thr: must be >= 0");
    if (politeness < 0 || politeness > 1) throw ConfigError("mobil.politeness: must be in [0,1]");
  }
};

// Car-following acceleration. dv is the approach rate (ego speed minus leader
// speed, positive when closing); gap is the bumper-to-bumper distance. Pass
// gap = +inf for a free road.
double idm_accel(double v, double dv, double gap, const IdmParams& p);

enum class LaneChange { KeepLane, ChangeLeft, ChangeRight };

// Incentive/safety lane-change decision over the ego's 3-lane neighborhood.
// Both criteria are evaluated with IDM accelerations; ties favor KeepLane,
// and between equally attractive sides the right one wins.
LaneChange mobil_decide(const World& world, int ego_id, const MobilParams& mp, const IdmParams& idm);

}  // namespace platoon
