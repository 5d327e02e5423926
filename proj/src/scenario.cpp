#include "platoon/scenario.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

std::vector<int> platoon_ids_of(const World& world) {
  std::vector<int> ids;
  for (const auto& v : world.vehicles)
    if (v.in_platoon) ids.push_back(v.id);
  return ids;
}

namespace {

void add_wreck_cluster(World& world, const ScenarioSpec& spec) {
  const ScenarioParams& p = spec.params;
  const RoadSpec& road = spec.road;
  const int platoon_lane = spec.spawn.platoon_lane;
  int other_lane = platoon_lane > 0 ? platoon_lane - 1 : platoon_lane + 1;
  if (!road.valid_lane(other_lane)) other_lane = platoon_lane;

  double s_base = p.wreck_s;
  if (s_base < 0.0)
    s_base = world.rng.uniform(road.zone_start + 50.0, road.zone_end - 100.0);

  for (int k = 0; k < p.wreck_count; ++k) {
    VehicleState v;
    v.length = spec.spawn.vehicle_length;
    v.width = spec.spawn.vehicle_width;
    v.kind = VehicleKind::HDV;
    v.collided = true;  // pre-existing wreck, frozen in place
    v.v = 0.0;
    v.lane = (p.wreck_spans_two_lanes && (k % 2 == 1)) ? other_lane : platoon_lane;
    v.y = road.lane_center(v.lane);
    v.s = s_base + static_cast<double>(k) * p.wreck_spacing;
    world.add_vehicle(v, std::nullopt, std::nullopt);
  }
}

void add_cutter(World& world, const ScenarioSpec& spec) {
  const ScenarioParams& p = spec.params;
  const int platoon_lane = spec.spawn.platoon_lane;
  int from_lane = platoon_lane - 1;
  if (!spec.road.valid_lane(from_lane)) from_lane = platoon_lane + 1;
  if (!spec.road.valid_lane(from_lane)) return;

  VehicleState v;
  v.length = spec.spawn.vehicle_length;
  v.width = spec.spawn.vehicle_width;
  v.kind = VehicleKind::HDV;
  v.lane = from_lane;
  v.y = spec.road.lane_center(from_lane);
  v.s = spec.spawn.platoon_lead_s + p.cutter_ahead;
  v.v = std::max(0.0, spec.spawn.platoon_speed - p.cutter_dv);

  HdvBehavior b;
  b.idm = spec.spawn.idm_aggressive;
  b.mobil = spec.spawn.mobil_aggressive;
  b.desired_speed = v.v;
  b.target_lane = from_lane;
  b.mobil_enabled = false;  // scripted actor
  b.forced.pending = true;
  b.forced.at_step = p.cut_in_step;
  b.forced.to_lane = platoon_lane;
  if (p.cutter_brakes) {
    b.malfunction.kind = Malfunction::Kind::Brake;
    b.malfunction.at_step = p.cut_in_step + 30;
    b.malfunction.duration = p.cutter_brake_duration;
    b.malfunction.decel = p.cutter_brake_decel;
  }
  world.add_vehicle(v, b, std::nullopt);
}

void add_oscillating_leader(World& world, const ScenarioSpec& spec) {
  const ScenarioParams& p = spec.params;
  VehicleState v;
  v.length = spec.spawn.vehicle_length;
  v.width = spec.spawn.vehicle_width;
  v.kind = VehicleKind::HDV;
  v.lane = spec.spawn.platoon_lane;
  v.y = spec.road.lane_center(v.lane);
  v.s = spec.spawn.platoon_lead_s + p.osc_lead_ahead;
  v.v = p.osc_base_speed;

  HdvBehavior b;
  b.idm = spec.spawn.idm_neutral;
  b.mobil = spec.spawn.mobil_neutral;
  b.desired_speed = p.osc_base_speed;
  b.target_lane = v.lane;
  b.mobil_enabled = false;  // stays in lane as the pace setter
  b.oscillation.enabled = true;
  b.oscillation.amplitude = p.osc_amplitude;
  b.oscillation.period = p.osc_period;
  b.oscillation.phase = world.rng.uniform(0.0, 2.0 * 3.141592653589793);
  world.add_vehicle(v, b, std::nullopt);
}

}  // namespace

World make_world(const ScenarioSpec& spec, std::uint64_t seed) {
  World world = make_base_world(spec.road, spec.world, seed);
  add_platoon(world, spec.spawn);

  switch (spec.scenario) {
    case ScenarioKind::Plain:
      break;
    case ScenarioKind::TrafficAccidents:
      add_wreck_cluster(world, spec);
      break;
    case ScenarioKind::HumanInterference:
      add_cutter(world, spec);
      break;
    case ScenarioKind::FlowOscillation:
      add_oscillating_leader(world, spec);
      break;
  }

  add_random_hdvs(world, spec.spawn);
  return world;
}

}  // namespace platoon
