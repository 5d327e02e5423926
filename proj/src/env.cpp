#include "platoon/env.hpp"

#include <algorithm>
#include <cmath>

namespace platoon {

long joint_action_space(int n) {
  long total = 1;
  for (int i = 0; i < n; ++i) total *= kActionCount;
  return total;
}

long encode_action(const std::vector<Action>& tuple) {
  long index = 0;
  for (const Action a : tuple) index = index * kActionCount + static_cast<int>(a);
  return index;
}

JointAction decode_action(long index, int n) {
  if (index < 0 || index >= joint_action_space(n))
    throw SimError("decode_action: index out of range");
  JointAction ja;
  ja.index = index;
  ja.per_vehicle.assign(static_cast<size_t>(n), Action::Idle);
  for (int k = n - 1; k >= 0; --k) {
    ja.per_vehicle[static_cast<size_t>(k)] = static_cast<Action>(index % kActionCount);
    index /= kActionCount;
  }
  return ja;
}

ObservationMatrix build_observation(const World& world, const std::vector<int>& platoon_ids,
                                    double d_vision, int max_vehicles) {
  if (platoon_ids.empty()) throw SimError("build_observation: empty platoon");

  // anchor: front-most platoon member (ties resolve to the lower id)
  const VehicleState* anchor = &world.vehicle(platoon_ids.front());
  for (const int id : platoon_ids) {
    const VehicleState& v = world.vehicle(id);
    if (v.s > anchor->s) anchor = &v;
  }

  struct Entry {
    double dist;
    int id;
  };
  std::vector<Entry> in_range;
  for (const auto& v : world.vehicles) {
    const double dist = std::abs(v.s - anchor->s);
    if (dist <= d_vision) in_range.push_back({dist, v.id});
  }
  std::sort(in_range.begin(), in_range.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.id < b.id;
  });

  ObservationMatrix obs;
  obs.max_vehicles = max_vehicles;
  obs.rows.assign(static_cast<size_t>(max_vehicles), {0.0, 0.0, 0.0, 0.0, 0.0});
  obs.valid.assign(static_cast<size_t>(max_vehicles), false);

  const double ax_v = anchor->v * std::cos(anchor->heading);
  const double ay_v = anchor->v * std::sin(anchor->heading);
  const size_t count = std::min(in_range.size(), static_cast<size_t>(max_vehicles));
  for (size_t i = 0; i < count; ++i) {
    const VehicleState& v = world.vehicle(in_range[i].id);
    obs.rows[i] = {v.s - anchor->s, v.y - anchor->y, v.v * std::cos(v.heading) - ax_v,
                   v.v * std::sin(v.heading) - ay_v, v.in_platoon ? 1.0 : 0.0};
    obs.valid[i] = true;
  }
  return obs;
}

namespace {

double population_stdev(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double mean = 0.0;
  for (const double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double var = 0.0;
  for (const double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

}  // namespace

RewardBreakdown compute_reward(const World& prev_world, const World& world,
                               const std::vector<int>& platoon_ids, const RewardWeights& w) {
  const size_t n = platoon_ids.size();
  if (n == 0) throw SimError("compute_reward: empty platoon");

  RewardBreakdown rb;
  rb.r_c.resize(n);
  rb.r_l.resize(n);
  rb.r_f.resize(n);
  rb.r_a.resize(n);
  rb.r_ind.resize(n);

  for (size_t k = 0; k < n; ++k) {
    const VehicleState& v = world.vehicle(platoon_ids[k]);

    bool collided_now = false;
    for (const Event& e : world.events) {
      if (e.kind == Event::Kind::Collision && (e.a == v.id || e.b == v.id)) collided_now = true;
    }
    rb.r_c[k] = collided_now ? -1.0 : 0.0;

    const double center = world.road.lane_center(v.lane);
    rb.r_l[k] = std::abs(v.y - center) <= w.lane_center_tol ? 1.0 : 0.0;

    rb.r_f[k] = std::clamp((v.v - w.v_lo) / (w.v_hi - w.v_lo), 0.0, 1.0);

    const double an = v.a / w.a_ref;
    rb.r_a[k] = -std::min(1.0, an * an);

    rb.r_ind[k] = w.w_c * rb.r_c[k] + w.w_l * rb.r_l[k] + w.w_f * rb.r_f[k] + w.w_a * rb.r_a[k];
  }

  // modal-lane fraction
  std::vector<int> lane_count(static_cast<size_t>(world.road.num_lanes), 0);
  for (const int id : platoon_ids) lane_count[static_cast<size_t>(world.vehicle(id).lane)]++;
  const int modal = *std::max_element(lane_count.begin(), lane_count.end());
  rb.r_m = static_cast<double>(modal) / static_cast<double>(n);

  // mean progress this step
  double ds_mean = 0.0;
  for (const int id : platoon_ids) ds_mean += world.vehicle(id).s - prev_world.vehicle(id).s;
  ds_mean /= static_cast<double>(n);
  rb.r_d = ds_mean / (w.v_max * world.params.dt);

  // headway: mean follower bumper gap to its platoon predecessor (by s order)
  std::vector<const VehicleState*> ordered;
  for (const int id : platoon_ids) ordered.push_back(&world.vehicle(id));
  std::sort(ordered.begin(), ordered.end(),
            [](const VehicleState* a, const VehicleState* b) { return a->s > b->s; });
  if (ordered.size() >= 2) {
    double h_mean = 0.0;
    for (size_t k = 1; k < ordered.size(); ++k) h_mean += bumper_gap(*ordered[k - 1], *ordered[k]);
    h_mean /= static_cast<double>(ordered.size() - 1);
    const double z = (h_mean - w.h_star) / w.sigma_h;
    rb.r_h = std::exp(-z * z);
  } else {
    rb.r_h = 1.0;
  }

  std::vector<double> speeds;
  for (const int id : platoon_ids) speeds.push_back(world.vehicle(id).v);
  rb.r_s = 1.0 - std::clamp(population_stdev(speeds) / w.v_spread_ref, 0.0, 1.0);

  rb.r_sys = w.w_m * rb.r_m + w.w_d * rb.r_d + w.w_h * rb.r_h + w.w_s * rb.r_s;

  double ind_sum = 0.0;
  for (const double r : rb.r_ind) ind_sum += r;
  rb.r_global = ind_sum / static_cast<double>(n) + rb.r_sys;
  return rb;
}

void apply_action(World& world, int vehicle_id, Action a, const EnvConfig& cfg) {
  auto& slot = world.cav[static_cast<size_t>(vehicle_id)];
  if (!slot.has_value()) throw SimError("apply_action: vehicle is not a CAV");
  CavController& ctl = *slot;
  const double v = world.vehicle(vehicle_id).v;
  switch (a) {
    case Action::LaneLeft:
      ctl.target_lane = std::max(0, ctl.target_lane - 1);
      break;
    case Action::LaneRight:
      ctl.target_lane = std::min(world.road.num_lanes - 1, ctl.target_lane + 1);
      break;
    // speed requests anchor to the current speed: FASTER/SLOWER mean faster or
    // slower than *now*, so a stale setpoint cannot mask the request
    case Action::Faster:
      ctl.target_speed =
          std::min(cfg.target_speed_max, std::max(ctl.target_speed, v) + cfg.speed_delta);
      ctl.pid.speed_integral = 0.0;  // setpoint change invalidates the accumulated error
      break;
    case Action::Slower:
      ctl.target_speed =
          std::max(cfg.target_speed_min, std::min(ctl.target_speed, v) - cfg.speed_delta);
      ctl.pid.speed_integral = 0.0;
      break;
    case Action::Idle:
      break;
  }
}

Episode::Episode(World world, std::vector<int> platoon_ids, EnvConfig cfg)
    : world_(std::move(world)), platoon_ids_(std::move(platoon_ids)), cfg_(std::move(cfg)) {
  if (platoon_ids_.empty()) throw SimError("episode: empty platoon");
}

ObservationMatrix Episode::observe() const {
  return build_observation(world_, platoon_ids_, cfg_.d_vision, cfg_.max_vehicles);
}

std::vector<CavCommand> Episode::track_commands() {
  std::vector<CavCommand> cmds;
  for (const auto& v : world_.vehicles) {
    auto& slot = world_.cav[static_cast<size_t>(v.id)];
    if (!slot.has_value()) continue;
    CavCommand c;
    c.id = v.id;
    c.cmd = pid_track(v, world_.road, slot->target_speed, slot->target_lane, slot->pid,
                      world_.params.pid, world_.params.limits, world_.params.dt);
    cmds.push_back(c);
  }
  return cmds;
}

std::pair<ObservationMatrix, double> Episode::step(long action_index, StepInfo* info) {
  if (done_) throw SimError("episode: step after done");
  const JointAction ja = decode_action(action_index, static_cast<int>(platoon_ids_.size()));
  for (size_t k = 0; k < platoon_ids_.size(); ++k)
    apply_action(world_, platoon_ids_[k], ja.per_vehicle[k], cfg_);
  return step_with_commands(track_commands(), info);
}

std::pair<ObservationMatrix, double> Episode::step_with_commands(const std::vector<CavCommand>& cmds,
                                                                 StepInfo* info) {
  if (done_) throw SimError("episode: step after done");
  const World prev = world_;
  step_world(world_, cmds);
  steps_ += 1;

  RewardBreakdown rb = compute_reward(prev, world_, platoon_ids_, cfg_.weights);
  finish_step(prev, info, &rb);
  return {observe(), rb.r_global};
}

void Episode::finish_step(const World& /*prev*/, StepInfo* info, RewardBreakdown* rb) {
  bool platoon_collision = false;
  for (const int id : platoon_ids_)
    if (world_.vehicle(id).collided) platoon_collision = true;

  // the episode runs until the whole platoon reaches the end of the road
  double trailing_front = 1e18;
  for (const int id : platoon_ids_)
    trailing_front = std::min(trailing_front, world_.vehicle(id).front());

  if (platoon_collision) {
    done_ = true;
    done_reason_ = "collision";
  } else if (trailing_front >= world_.road.length - cfg_.road_end_margin) {
    done_ = true;
    done_reason_ = "road_end";
  } else if (steps_ >= cfg_.step_cap) {
    done_ = true;
    done_reason_ = "timeout";
  }

  if (info != nullptr) {
    info->reward = *rb;
    info->events = world_.events;
    info->done_reason = done_ ? done_reason_ : "";
  }
}

}  // namespace platoon
