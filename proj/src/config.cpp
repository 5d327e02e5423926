#include "platoon/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace platoon {

using nlohmann::json;

const char* scenario_name(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Plain: return "plain";
    case ScenarioKind::HumanInterference: return "human_interference";
    case ScenarioKind::TrafficAccidents: return "traffic_accidents";
    case ScenarioKind::FlowOscillation: return "flow_oscillation";
  }
  return "plain";
}

ScenarioKind scenario_from_name(const std::string& name) {
  if (name == "plain") return ScenarioKind::Plain;
  if (name == "human_interference") return ScenarioKind::HumanInterference;
  if (name == "traffic_accidents") return ScenarioKind::TrafficAccidents;
  if (name == "flow_oscillation") return ScenarioKind::FlowOscillation;
  throw ConfigError("scenario: unknown value '" + name + "'");
}

void ScenarioSpec::validate() const {
  road.validate();
  train.validate();
  if (!road.valid_lane(spawn.platoon_lane)) throw ConfigError("spawn.platoon_lane: out of range");
  if (spawn.platoon_n < 1) throw ConfigError("spawn.platoon_n: must be >= 1");
  if (env.max_vehicles < spawn.platoon_n)
    throw ConfigError("env.max_vehicles: must cover the platoon");
  if (safety.horizon < 1) throw ConfigError("safety.horizon: must be >= 1");
  if (fsm.dwell < 1) throw ConfigError("fsm.dwell: must be >= 1");
  if (lqr.h_target < spawn.idm_neutral.s0) throw ConfigError("lqr.h_target: must be >= jam distance");
  spawn.idm_neutral.validate();
  spawn.idm_aggressive.validate();
  spawn.idm_conservative.validate();
  spawn.mobil_neutral.validate();
  spawn.mobil_aggressive.validate();
  spawn.mobil_conservative.validate();
}

namespace {

// Reads j[key] into out when present; otherwise leaves the default. Type
// errors surface with the full field path.
template <typename T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path + key + ": " + e.what());
  }
}

void read_idm(const json& j, const char* key, IdmParams& p, const std::string& path) {
  if (!j.contains(key)) return;
  const json& s = j.at(key);
  const std::string sub = path + key + ".";
  read(s, "v0", p.v0, sub);
  read(s, "T", p.T, sub);
  read(s, "s0", p.s0, sub);
  read(s, "a_max", p.a_max, sub);
  read(s, "b_comf", p.b_comf, sub);
  read(s, "delta", p.delta, sub);
}

void read_mobil(const json& j, const char* key, MobilParams& p, const std::string& path) {
  if (!j.contains(key)) return;
  const json& s = j.at(key);
  const std::string sub = path + key + ".";
  read(s, "politeness", p.politeness, sub);
  read(s, "b_safe", p.b_safe, sub);
  read(s, "a_thr", p.a_thr, sub);
  read(s, "bias_right", p.bias_right, sub);
}

json idm_to_json(const IdmParams& p) {
  return json{{"v0", p.v0},       {"T", p.T},           {"s0", p.s0},
              {"a_max", p.a_max}, {"b_comf", p.b_comf}, {"delta", p.delta}};
}

json mobil_to_json(const MobilParams& p) {
  return json{{"politeness", p.politeness},
              {"b_safe", p.b_safe},
              {"a_thr", p.a_thr},
              {"bias_right", p.bias_right}};
}

}  // namespace

ScenarioSpec parse_spec_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }

  ScenarioSpec spec;
  read(j, "name", spec.name, "");
  if (j.contains("scenario")) spec.scenario = scenario_from_name(j.at("scenario").get<std::string>());

  if (j.contains("road")) {
    const json& r = j.at("road");
    read(r, "num_lanes", spec.road.num_lanes, "road.");
    read(r, "lane_width", spec.road.lane_width, "road.");
    read(r, "length", spec.road.length, "road.");
    read(r, "zone_start", spec.road.zone_start, "road.");
    read(r, "zone_end", spec.road.zone_end, "road.");
  }

  if (j.contains("spawn")) {
    const json& s = j.at("spawn");
    read(s, "platoon_n", spec.spawn.platoon_n, "spawn.");
    read(s, "platoon_headway", spec.spawn.platoon_headway, "spawn.");
    read(s, "platoon_speed", spec.spawn.platoon_speed, "spawn.");
    read(s, "platoon_lane", spec.spawn.platoon_lane, "spawn.");
    read(s, "platoon_lead_s", spec.spawn.platoon_lead_s, "spawn.");
    read(s, "hdv_min", spec.spawn.hdv_min, "spawn.");
    read(s, "hdv_max", spec.spawn.hdv_max, "spawn.");
    read(s, "spawn_s_min", spec.spawn.spawn_s_min, "spawn.");
    read(s, "spawn_s_max", spec.spawn.spawn_s_max, "spawn.");
    read(s, "hdv_speed_min", spec.spawn.hdv_speed_min, "spawn.");
    read(s, "hdv_speed_max", spec.spawn.hdv_speed_max, "spawn.");
    read(s, "malfunction_rate", spec.spawn.malfunction_rate, "spawn.");
    read(s, "vehicle_length", spec.spawn.vehicle_length, "spawn.");
    read(s, "vehicle_width", spec.spawn.vehicle_width, "spawn.");
    read(s, "w_neutral", spec.spawn.w_neutral, "spawn.");
    read(s, "w_aggressive", spec.spawn.w_aggressive, "spawn.");
    read(s, "w_conservative", spec.spawn.w_conservative, "spawn.");
    read_idm(s, "idm_neutral", spec.spawn.idm_neutral, "spawn.");
    read_idm(s, "idm_aggressive", spec.spawn.idm_aggressive, "spawn.");
    read_idm(s, "idm_conservative", spec.spawn.idm_conservative, "spawn.");
    read_mobil(s, "mobil_neutral", spec.spawn.mobil_neutral, "spawn.");
    read_mobil(s, "mobil_aggressive", spec.spawn.mobil_aggressive, "spawn.");
    read_mobil(s, "mobil_conservative", spec.spawn.mobil_conservative, "spawn.");
  }

  if (j.contains("dynamics")) {
    const json& d = j.at("dynamics");
    read(d, "accel_min", spec.world.limits.accel_min, "dynamics.");
    read(d, "accel_max", spec.world.limits.accel_max, "dynamics.");
    read(d, "steer_max", spec.world.limits.steer_max, "dynamics.");
    read(d, "speed_kp", spec.world.pid.speed_kp, "dynamics.");
    read(d, "speed_ki", spec.world.pid.speed_ki, "dynamics.");
    read(d, "speed_kd", spec.world.pid.speed_kd, "dynamics.");
    read(d, "lat_kp", spec.world.pid.lat_kp, "dynamics.");
    read(d, "lat_kd", spec.world.pid.lat_kd, "dynamics.");
    read(d, "heading_cmd_max", spec.world.pid.heading_cmd_max, "dynamics.");
    read(d, "wheelbase_ratio", spec.world.wheelbase_ratio, "dynamics.");
    read(d, "d_vision", spec.world.d_vision, "dynamics.");
    read(d, "mobil_period", spec.world.mobil_period, "dynamics.");
    read(d, "mobil_cooldown", spec.world.mobil_cooldown, "dynamics.");
  }

  if (j.contains("safety")) {
    const json& s = j.at("safety");
    read(s, "horizon", spec.safety.horizon, "safety.");
    read(s, "buffer", spec.safety.buffer, "safety.");
    read(s, "sigma_scale", spec.safety.sigma_scale, "safety.");
    read(s, "v_floor", spec.safety.v_floor, "safety.");
    read(s, "hdv_mobil_in_prediction", spec.safety.hdv_mobil_in_prediction, "safety.");
    read(s, "enabled", spec.safety.enabled, "safety.");
  }

  if (j.contains("lqr")) {
    const json& l = j.at("lqr");
    read(l, "q_spacing", spec.lqr.q_spacing, "lqr.");
    read(l, "q_speed", spec.lqr.q_speed, "lqr.");
    read(l, "r_control", spec.lqr.r_control, "lqr.");
    read(l, "h_target", spec.lqr.h_target, "lqr.");
    read(l, "cruise_speed", spec.lqr.cruise_speed, "lqr.");
  }

  if (j.contains("fsm")) {
    const json& f = j.at("fsm");
    read(f, "l_safe", spec.fsm.l_safe, "fsm.");
    read(f, "dwell", spec.fsm.dwell, "fsm.");
  }

  if (j.contains("env")) {
    const json& e = j.at("env");
    read(e, "max_vehicles", spec.env.max_vehicles, "env.");
    read(e, "d_vision", spec.env.d_vision, "env.");
    read(e, "step_cap", spec.env.step_cap, "env.");
    read(e, "speed_delta", spec.env.speed_delta, "env.");
    read(e, "target_speed_min", spec.env.target_speed_min, "env.");
    read(e, "target_speed_max", spec.env.target_speed_max, "env.");
    read(e, "road_end_margin", spec.env.road_end_margin, "env.");
    if (e.contains("weights")) {
      const json& w = e.at("weights");
      read(w, "w_c", spec.env.weights.w_c, "env.weights.");
      read(w, "w_l", spec.env.weights.w_l, "env.weights.");
      read(w, "w_f", spec.env.weights.w_f, "env.weights.");
      read(w, "w_a", spec.env.weights.w_a, "env.weights.");
      read(w, "w_m", spec.env.weights.w_m, "env.weights.");
      read(w, "w_d", spec.env.weights.w_d, "env.weights.");
      read(w, "w_h", spec.env.weights.w_h, "env.weights.");
      read(w, "w_s", spec.env.weights.w_s, "env.weights.");
      read(w, "lane_center_tol", spec.env.weights.lane_center_tol, "env.weights.");
      read(w, "v_lo", spec.env.weights.v_lo, "env.weights.");
      read(w, "v_hi", spec.env.weights.v_hi, "env.weights.");
      read(w, "a_ref", spec.env.weights.a_ref, "env.weights.");
      read(w, "v_max", spec.env.weights.v_max, "env.weights.");
      read(w, "h_star", spec.env.weights.h_star, "env.weights.");
      read(w, "sigma_h", spec.env.weights.sigma_h, "env.weights.");
      read(w, "v_spread_ref", spec.env.weights.v_spread_ref, "env.weights.");
    }
  }

  if (j.contains("train")) {
    const json& t = j.at("train");
    read(t, "learning_rate", spec.train.learning_rate, "train.");
    read(t, "n_steps", spec.train.n_steps, "train.");
    read(t, "total_steps", spec.train.total_steps, "train.");
    read(t, "beta1", spec.train.beta1, "train.");
    read(t, "beta2", spec.train.beta2, "train.");
    read(t, "minibatch", spec.train.minibatch, "train.");
    read(t, "gamma", spec.train.gamma, "train.");
    read(t, "kl_bound", spec.train.kl_bound, "train.");
    read(t, "epochs", spec.train.epochs, "train.");
    read(t, "momentum", spec.train.momentum, "train.");
    read(t, "hidden", spec.train.hidden, "train.");
    read(t, "hidden_layers", spec.train.hidden_layers, "train.");
    read(t, "max_rollbacks", spec.train.max_rollbacks, "train.");
  }

  if (j.contains("scenario_params")) {
    const json& p = j.at("scenario_params");
    read(p, "wreck_count", spec.params.wreck_count, "scenario_params.");
    read(p, "wreck_s", spec.params.wreck_s, "scenario_params.");
    read(p, "wreck_spans_two_lanes", spec.params.wreck_spans_two_lanes, "scenario_params.");
    read(p, "wreck_spacing", spec.params.wreck_spacing, "scenario_params.");
    read(p, "cutter_ahead", spec.params.cutter_ahead, "scenario_params.");
    read(p, "cutter_dv", spec.params.cutter_dv, "scenario_params.");
    read(p, "cut_in_step", spec.params.cut_in_step, "scenario_params.");
    read(p, "cutter_brakes", spec.params.cutter_brakes, "scenario_params.");
    read(p, "cutter_brake_decel", spec.params.cutter_brake_decel, "scenario_params.");
    read(p, "cutter_brake_duration", spec.params.cutter_brake_duration, "scenario_params.");
    read(p, "osc_lead_ahead", spec.params.osc_lead_ahead, "scenario_params.");
    read(p, "osc_amplitude", spec.params.osc_amplitude, "scenario_params.");
    read(p, "osc_period", spec.params.osc_period, "scenario_params.");
    read(p, "osc_base_speed", spec.params.osc_base_speed, "scenario_params.");
  }

  read(j, "seeds", spec.seeds, "");

  spec.validate();
  return spec;
}

ScenarioSpec load_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_spec_json(ss.str());
}

std::string dump_spec_json(const ScenarioSpec& spec) {
  json j;
  j["name"] = spec.name;
  j["scenario"] = scenario_name(spec.scenario);
  j["road"] = {{"num_lanes", spec.road.num_lanes}, {"lane_width", spec.road.lane_width},
               {"length", spec.road.length},       {"zone_start", spec.road.zone_start},
               {"zone_end", spec.road.zone_end}};
  j["spawn"] = {{"platoon_n", spec.spawn.platoon_n},
                {"platoon_headway", spec.spawn.platoon_headway},
                {"platoon_speed", spec.spawn.platoon_speed},
                {"platoon_lane", spec.spawn.platoon_lane},
                {"platoon_lead_s", spec.spawn.platoon_lead_s},
                {"hdv_min", spec.spawn.hdv_min},
                {"hdv_max", spec.spawn.hdv_max},
                {"spawn_s_min", spec.spawn.spawn_s_min},
                {"spawn_s_max", spec.spawn.spawn_s_max},
                {"hdv_speed_min", spec.spawn.hdv_speed_min},
                {"hdv_speed_max", spec.spawn.hdv_speed_max},
                {"malfunction_rate", spec.spawn.malfunction_rate},
                {"vehicle_length", spec.spawn.vehicle_length},
                {"vehicle_width", spec.spawn.vehicle_width},
                {"w_neutral", spec.spawn.w_neutral},
                {"w_aggressive", spec.spawn.w_aggressive},
                {"w_conservative", spec.spawn.w_conservative},
                {"idm_neutral", idm_to_json(spec.spawn.idm_neutral)},
                {"idm_aggressive", idm_to_json(spec.spawn.idm_aggressive)},
                {"idm_conservative", idm_to_json(spec.spawn.idm_conservative)},
                {"mobil_neutral", mobil_to_json(spec.spawn.mobil_neutral)},
                {"mobil_aggressive", mobil_to_json(spec.spawn.mobil_aggressive)},
                {"mobil_conservative", mobil_to_json(spec.spawn.mobil_conservative)}};
  j["dynamics"] = {{"accel_min", spec.world.limits.accel_min},
                   {"accel_max", spec.world.limits.accel_max},
                   {"steer_max", spec.world.limits.steer_max},
                   {"speed_kp", spec.world.pid.speed_kp},
                   {"speed_ki", spec.world.pid.speed_ki},
                   {"speed_kd", spec.world.pid.speed_kd},
                   {"lat_kp", spec.world.pid.lat_kp},
                   {"lat_kd", spec.world.pid.lat_kd},
                   {"heading_cmd_max", spec.world.pid.heading_cmd_max},
                   {"wheelbase_ratio", spec.world.wheelbase_ratio},
                   {"d_vision", spec.world.d_vision},
                   {"mobil_period", spec.world.mobil_period},
                   {"mobil_cooldown", spec.world.mobil_cooldown}};
  j["safety"] = {{"horizon", spec.safety.horizon},
                 {"buffer", spec.safety.buffer},
                 {"sigma_scale", spec.safety.sigma_scale},
                 {"v_floor", spec.safety.v_floor},
                 {"hdv_mobil_in_prediction", spec.safety.hdv_mobil_in_prediction},
                 {"enabled", spec.safety.enabled}};
  j["lqr"] = {{"q_spacing", spec.lqr.q_spacing},
              {"q_speed", spec.lqr.q_speed},
              {"r_control", spec.lqr.r_control},
              {"h_target", spec.lqr.h_target},
              {"cruise_speed", spec.lqr.cruise_speed}};
  j["fsm"] = {{"l_safe", spec.fsm.l_safe}, {"dwell", spec.fsm.dwell}};
  j["env"] = {{"max_vehicles", spec.env.max_vehicles},
              {"d_vision", spec.env.d_vision},
              {"step_cap", spec.env.step_cap},
              {"speed_delta", spec.env.speed_delta},
              {"target_speed_min", spec.env.target_speed_min},
              {"target_speed_max", spec.env.target_speed_max},
              {"road_end_margin", spec.env.road_end_margin},
              {"weights",
               {{"w_c", spec.env.weights.w_c},
                {"w_l", spec.env.weights.w_l},
                {"w_f", spec.env.weights.w_f},
                {"w_a", spec.env.weights.w_a},
                {"w_m", spec.env.weights.w_m},
                {"w_d", spec.env.weights.w_d},
                {"w_h", spec.env.weights.w_h},
                {"w_s", spec.env.weights.w_s},
                {"lane_center_tol", spec.env.weights.lane_center_tol},
                {"v_lo", spec.env.weights.v_lo},
                {"v_hi", spec.env.weights.v_hi},
                {"a_ref", spec.env.weights.a_ref},
                {"v_max", spec.env.weights.v_max},
                {"h_star", spec.env.weights.h_star},
                {"sigma_h", spec.env.weights.sigma_h},
                {"v_spread_ref", spec.env.weights.v_spread_ref}}}};
  j["train"] = {{"learning_rate", spec.train.learning_rate},
                {"n_steps", spec.train.n_steps},
                {"total_steps", spec.train.total_steps},
                {"beta1", spec.train.beta1},
                {"beta2", spec.train.beta2},
                {"minibatch", spec.train.minibatch},
                {"gamma", spec.train.gamma},
                {"kl_bound", spec.train.kl_bound},
                {"epochs", spec.train.epochs},
                {"momentum", spec.train.momentum},
                {"hidden", spec.train.hidden},
                {"hidden_layers", spec.train.hidden_layers},
                {"max_rollbacks", spec.train.max_rollbacks}};
  j["scenario_params"] = {{"wreck_count", spec.params.wreck_count},
                          {"wreck_s", spec.params.wreck_s},
                          {"wreck_spans_two_lanes", spec.params.wreck_spans_two_lanes},
                          {"wreck_spacing", spec.params.wreck_spacing},
                          {"cutter_ahead", spec.params.cutter_ahead},
                          {"cutter_dv", spec.params.cutter_dv},
                          {"cut_in_step", spec.params.cut_in_step},
                          {"cutter_brakes", spec.params.cutter_brakes},
                          {"cutter_brake_decel", spec.params.cutter_brake_decel},
                          {"cutter_brake_duration", spec.params.cutter_brake_duration},
                          {"osc_lead_ahead", spec.params.osc_lead_ahead},
                          {"osc_amplitude", spec.params.osc_amplitude},
                          {"osc_period", spec.params.osc_period},
                          {"osc_base_speed", spec.params.osc_base_speed}};
  j["seeds"] = spec.seeds;
  return j.dump();
}

std::uint64_t config_hash(const ScenarioSpec& spec) {
  const std::string text = dump_spec_json(spec);
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace platoon
