#include "platoon/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace platoon {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

const VehicleState& World::vehicle(int id) const {
  if (!has_vehicle(id)) throw SimError("world: unknown vehicle id " + std::to_string(id));
  return vehicles[static_cast<size_t>(id)];
}

VehicleState& World::vehicle(int id) {
  if (!has_vehicle(id)) throw SimError("world: unknown vehicle id " + std::to_string(id));
  return vehicles[static_cast<size_t>(id)];
}

bool World::occupies_lane(int id, int lane) const {
  const VehicleState& v = vehicle(id);
  if (v.lane == lane) return true;
  if (v.collided) return false;
  const auto& h = hdv[static_cast<size_t>(id)];
  if (h.has_value() && h->target_lane == lane) return true;
  const auto& c = cav[static_cast<size_t>(id)];
  return c.has_value() && c->target_lane == lane;
}

const VehicleState* World::leader_in_lane(int lane, double s, int skip_id, double max_dist) const {
  const VehicleState* best = nullptr;
  for (const auto& v : vehicles) {
    if (v.id == skip_id || !occupies_lane(v.id, lane)) continue;
    const double ds = v.s - s;
    if (ds <= 0.0 || ds > max_dist) continue;
    if (!best || ds < best->s - s) best = &v;
  }
  return best;
}

const VehicleState* World::follower_in_lane(int lane, double s, int skip_id, double max_dist) const {
  const VehicleState* best = nullptr;
  for (const auto& v : vehicles) {
    if (v.id == skip_id || !occupies_lane(v.id, lane)) continue;
    const double ds = s - v.s;
    if (ds <= 0.0 || ds > max_dist) continue;
    if (!best || ds < s - best->s) best = &v;
  }
  return best;
}

void World::add_vehicle(const VehicleState& state, std::optional<HdvBehavior> behavior,
                        std::optional<CavController> controller) {
  VehicleState v = state;
  v.id = static_cast<int>(vehicles.size());
  vehicles.push_back(v);
  hdv.push_back(std::move(behavior));
  cav.push_back(std::move(controller));
}

std::vector<Event> detect_collisions(const World& world) {
  std::vector<Event> out;
  const auto& vs = world.vehicles;
  for (size_t i = 0; i < vs.size(); ++i) {
    for (size_t j = i + 1; j < vs.size(); ++j) {
      const double dx = vs[i].s - vs[j].s;
      const double dy = vs[i].y - vs[j].y;
      const double rr = vs[i].radius() + vs[j].radius();
      if (dx * dx + dy * dy < rr * rr) {
        out.push_back(Event{Event::Kind::Collision, world.step_index, vs[i].id, vs[j].id});
      }
    }
  }
  return out;
}

std::vector<int> neighbors(const World& world, int vehicle_id, double d_vision) {
  const VehicleState& ego = world.vehicle(vehicle_id);
  struct Entry {
    double dist;
    int id;
  };
  std::vector<Entry> found;
  for (const auto& v : world.vehicles) {
    if (v.id == vehicle_id) continue;
    const double dist = std::abs(v.s - ego.s);
    if (dist <= d_vision) found.push_back({dist, v.id});
  }
  std::sort(found.begin(), found.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.id < b.id;
  });
  std::vector<int> ids;
  ids.reserve(found.size());
  for (const auto& e : found) ids.push_back(e.id);
  return ids;
}

namespace {

// HDV longitudinal acceleration: IDM against the nearer constraint of the
// current lane and (while changing) the target lane.
double hdv_longitudinal(const World& world, const VehicleState& me, const HdvBehavior& b) {
  IdmParams p = b.idm;
  p.v0 = b.desired_speed;
  if (b.oscillation.enabled) {
    p.v0 += b.oscillation.amplitude *
            std::sin(2.0 * std::numbers::pi * world.time / b.oscillation.period +
                     b.oscillation.phase);
  }
  p.v0 = std::max(p.v0, 0.5);

  double accel = kInf;
  const double d_vision = world.params.d_vision;
  auto consider = [&](int lane) {
    const VehicleState* lead = world.leader_in_lane(lane, me.s, me.id, d_vision);
    double a;
    if (lead == nullptr) {
      a = idm_accel(me.v, 0.0, kInf, p);
    } else {
      const double gap = bumper_gap(*lead, me);
      a = (gap <= 0.05) ? world.params.limits.accel_min
                        : idm_accel(me.v, me.v - lead->v, gap, p);
    }
    accel = std::min(accel, a);
  };
  consider(me.lane);
  if (b.target_lane != me.lane && world.road.valid_lane(b.target_lane)) consider(b.target_lane);
  return accel;
}

ControlCommand hdv_control(World& world, int idx) {
  VehicleState& me = world.vehicles[static_cast<size_t>(idx)];
  HdvBehavior& b = *world.hdv[static_cast<size_t>(idx)];
  const long step = world.step_index;

  if (b.forced.pending && step >= b.forced.at_step) {
    if (world.road.valid_lane(b.forced.to_lane)) b.target_lane = b.forced.to_lane;
    b.forced.pending = false;
    b.cooldown_until = step + world.params.mobil_cooldown;
  } else if (b.mobil_enabled && step >= b.next_mobil_step) {
    b.next_mobil_step = step + world.params.mobil_period;
    const bool settled = me.lane == b.target_lane &&
                         std::abs(me.y - world.road.lane_center(me.lane)) <
                             world.params.lane_settle_tol;
    // a change in progress is not re-opened while rolling, but a vehicle that
    // has ground to a crawl mid-change re-anchors so it cannot wedge between
    // two lanes indefinitely
    const bool stuck_mid_change = !settled && me.v < 3.0;
    if (step >= b.cooldown_until && (settled || stuck_mid_change)) {
      IdmParams p = b.idm;
      p.v0 = std::max(b.desired_speed, 0.5);
      const LaneChange decision = mobil_decide(world, me.id, b.mobil, p);
      if (decision == LaneChange::KeepLane) {
        b.target_lane = me.lane;
      } else {
        b.target_lane = me.lane + (decision == LaneChange::ChangeRight ? 1 : -1);
        b.cooldown_until = step + world.params.mobil_cooldown;
      }
    }
  }

  ControlCommand cmd;
  if (b.malfunction.stalling(step)) {
    cmd.throttle_accel = me.v > 0.0 ? -2.0 : 0.0;
  } else if (b.malfunction.braking(step)) {
    cmd.throttle_accel = -b.malfunction.decel;
  } else {
    cmd.throttle_accel = hdv_longitudinal(world, me, b);
  }
  cmd.throttle_accel = std::clamp(cmd.throttle_accel, world.params.limits.accel_min,
                                  world.params.limits.accel_max);
  cmd.steer = pid_steer(me, world.road, b.target_lane, world.params.pid, world.params.limits);
  return cmd;
}

}  // namespace

const std::vector<Event>& step_world(World& world, const std::vector<CavCommand>& cav_commands) {
  world.events.clear();

  // validate the command set: exactly one command per CAV, no strangers
  size_t matched = 0;
  for (const auto& c : cav_commands) {
    if (!world.has_vehicle(c.id) || !world.cav[static_cast<size_t>(c.id)].has_value())
      throw SimError("step_world: command for unknown CAV id " + std::to_string(c.id));
    ++matched;
  }
  size_t cav_count = 0;
  for (const auto& c : world.cav)
    if (c.has_value()) ++cav_count;
  if (matched != cav_count) throw SimError("step_world: missing command for some CAV");

  const size_t n = world.vehicles.size();
  std::vector<ControlCommand> cmds(n);
  for (size_t i = 0; i < n; ++i) {
    if (world.vehicles[i].collided) continue;
    if (world.hdv[i].has_value()) cmds[i] = hdv_control(world, static_cast<int>(i));
  }
  for (const auto& c : cav_commands) cmds[static_cast<size_t>(c.id)] = c.cmd;

  std::vector<double> prev_front(n), prev_rear(n);
  for (size_t i = 0; i < n; ++i) {
    prev_front[i] = world.vehicles[i].front();
    prev_rear[i] = world.vehicles[i].rear();
  }

  for (size_t i = 0; i < n; ++i) {
    VehicleState& v = world.vehicles[i];
    if (v.collided) {
      v.a = 0.0;
      continue;
    }
    v = step_kinematics(v, cmds[i], world.params.dt, world.params.limits,
                        world.params.wheelbase_ratio);
    const double y_lo = 0.5 * v.width;  // keep bodies inside the road edges
    const double y_hi = world.road.width() - 0.5 * v.width;
    if (v.y < y_lo) v.y = y_lo;
    if (v.y > y_hi) v.y = y_hi;
    v.lane = world.road.lane_at(v.y);
  }

  world.time = static_cast<double>(world.step_index + 1) * world.params.dt;
  world.step_index += 1;

  // collisions: freeze newly collided vehicles; existing wreck pairs are not re-reported
  for (const Event& e : detect_collisions(world)) {
    VehicleState& a = world.vehicle(e.a);
    VehicleState& b = world.vehicle(e.b);
    if (a.collided && b.collided) continue;
    for (VehicleState* v : {&a, &b}) {
      v->collided = true;
      v->v = 0.0;
      v->a = 0.0;
    }
    world.events.push_back(Event{Event::Kind::Collision, world.step_index, e.a, e.b});
  }

  for (size_t i = 0; i < n; ++i) {
    const VehicleState& v = world.vehicles[i];
    if (prev_front[i] < world.road.zone_start && v.front() >= world.road.zone_start)
      world.events.push_back(Event{Event::Kind::ZoneEnter, world.step_index, v.id, -1});
    if (prev_rear[i] < world.road.zone_end && v.rear() >= world.road.zone_end)
      world.events.push_back(Event{Event::Kind::ZoneExit, world.step_index, v.id, -1});
  }

  return world.events;
}

namespace {

// A same-lane spawn gap must leave the rear vehicle a feasible following
// situation: jam distance plus half a second of headway plus the distance the
// closing speed needs to bleed off at a comfortable 4 m/s^2.
double required_spawn_gap(double v_front, double v_rear, double s0) {
  const double closing = std::max(0.0, v_rear - v_front);
  return s0 + 0.5 * v_rear + closing * closing / (2.0 * 4.0);
}

}  // namespace

bool placement_clear(const World& world, const VehicleState& cand, double min_same_lane_gap) {
  for (const auto& v : world.vehicles) {
    const double dx = v.s - cand.s;
    const double dy = v.y - cand.y;
    const double rr = v.radius() + cand.radius();
    if (dx * dx + dy * dy < (rr + 0.5) * (rr + 0.5)) return false;
    if (v.lane == cand.lane) {
      const bool cand_behind = v.s > cand.s;
      const double gap = cand_behind ? bumper_gap(v, cand) : bumper_gap(cand, v);
      const double needed =
          cand_behind ? required_spawn_gap(v.v, cand.v, min_same_lane_gap)
                      : required_spawn_gap(cand.v, v.v, min_same_lane_gap);
      if (gap < std::max(min_same_lane_gap, needed)) return false;
    }
  }
  return true;
}

World make_base_world(const RoadSpec& road, const WorldParams& params, std::uint64_t seed) {
  road.validate();
  World world;
  world.road = road;
  world.params = params;
  world.rng = Rng(derive_seed(seed, 0x5741524c44ULL));
  return world;
}

void add_platoon(World& world, const SpawnConfig& cfg) {
  if (!world.road.valid_lane(cfg.platoon_lane))
    throw ConfigError("spawn.platoon_lane: out of range");
  if (cfg.platoon_n < 1) throw ConfigError("spawn.platoon_n: must be >= 1");

  // front to back; ids run lead first
  for (int k = 0; k < cfg.platoon_n; ++k) {
    VehicleState v;
    v.lane = cfg.platoon_lane;
    v.s = cfg.platoon_lead_s - static_cast<double>(k) * (cfg.vehicle_length + cfg.platoon_headway);
    v.y = world.road.lane_center(cfg.platoon_lane);
    v.v = cfg.platoon_speed;
    v.length = cfg.vehicle_length;
    v.width = cfg.vehicle_width;
    v.kind = VehicleKind::CAV;
    v.in_platoon = true;
    CavController ctl;
    ctl.target_speed = cfg.platoon_speed;
    ctl.target_lane = cfg.platoon_lane;
    world.add_vehicle(v, std::nullopt, ctl);
  }
}

void add_random_hdvs(World& world, const SpawnConfig& cfg) {
  if (cfg.hdv_min < 0 || cfg.hdv_max < cfg.hdv_min)
    throw ConfigError("spawn.hdv_count_range: must satisfy 0 <= min <= max");
  const double wsum = cfg.w_neutral + cfg.w_aggressive + cfg.w_conservative;
  if (wsum <= 0.0) throw ConfigError("spawn.style_mixture: weights must sum > 0");

  const int count = world.rng.uniform_int(cfg.hdv_min, cfg.hdv_max);
  double min_gap = cfg.idm_neutral.s0;
  min_gap = std::max(min_gap, cfg.idm_aggressive.s0);
  min_gap = std::max(min_gap, cfg.idm_conservative.s0);

  for (int k = 0; k < count; ++k) {
    VehicleState v;
    v.length = cfg.vehicle_length;
    v.width = cfg.vehicle_width;
    v.kind = VehicleKind::HDV;

    HdvBehavior b;
    const double pick = world.rng.uniform(0.0, wsum);
    if (pick < cfg.w_neutral) {
      b.idm = cfg.idm_neutral;
      b.mobil = cfg.mobil_neutral;
    } else if (pick < cfg.w_neutral + cfg.w_aggressive) {
      b.idm = cfg.idm_aggressive;
      b.mobil = cfg.mobil_aggressive;
    } else {
      b.idm = cfg.idm_conservative;
      b.mobil = cfg.mobil_conservative;
    }
    b.idm.validate();
    b.mobil.validate();
    b.desired_speed = world.rng.uniform(cfg.hdv_speed_min, cfg.hdv_speed_max);
    v.v = b.desired_speed;

    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      v.lane = world.rng.uniform_int(0, world.road.num_lanes - 1);
      v.s = world.rng.uniform(cfg.spawn_s_min, cfg.spawn_s_max);
      v.y = world.road.lane_center(v.lane);
      placed = placement_clear(world, v, min_gap);
    }
    if (!placed)
      throw ConfigError("spawn: infeasible traffic density (no non-overlapping slot in 100 attempts)");

    b.target_lane = v.lane;

    if (cfg.malfunction_rate > 0.0 && world.rng.bernoulli(cfg.malfunction_rate)) {
      b.malfunction.kind =
          world.rng.bernoulli(0.5) ? Malfunction::Kind::Stall : Malfunction::Kind::Brake;
      b.malfunction.at_step = world.rng.uniform_int(75, 375);
      b.malfunction.duration = 45;
      b.malfunction.decel = 4.0;
    }

    world.add_vehicle(v, b, std::nullopt);
    world.hdv.back()->next_mobil_step = world.vehicles.back().id % world.params.mobil_period;
  }
}

World spawn_traffic(const SpawnConfig& cfg, const RoadSpec& road, const WorldParams& params,
                    std::uint64_t seed) {
  World world = make_base_world(road, params, seed);
  add_platoon(world, cfg);
  add_random_hdvs(world, cfg);
  return world;
}

}  // namespace platoon
