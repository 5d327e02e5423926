#include "platoon/trace.hpp"

#include <json.hpp>

namespace platoon {

using nlohmann::json;

namespace {

json vehicle_to_json(const VehicleState& v) {
  return json{{"id", v.id},
              {"kind", v.kind == VehicleKind::CAV ? "CAV" : "HDV"},
              {"lane", v.lane},
              {"s", v.s},
              {"y", v.y},
              {"heading", v.heading},
              {"v", v.v},
              {"a", v.a},
              {"length", v.length},
              {"width", v.width},
              {"in_platoon", v.in_platoon},
              {"collided", v.collided}};
}

VehicleState vehicle_from_json(const json& j) {
  VehicleState v;
  v.id = j.at("id").get<int>();
  v.kind = j.at("kind").get<std::string>() == "CAV" ? VehicleKind::CAV : VehicleKind::HDV;
  v.lane = j.at("lane").get<int>();
  v.s = j.at("s").get<double>();
  v.y = j.at("y").get<double>();
  v.heading = j.at("heading").get<double>();
  v.v = j.at("v").get<double>();
  v.a = j.at("a").get<double>();
  v.length = j.at("length").get<double>();
  v.width = j.at("width").get<double>();
  v.in_platoon = j.at("in_platoon").get<bool>();
  v.collided = j.at("collided").get<bool>();
  return v;
}

json reward_to_json(const RewardBreakdown& r) {
  return json{{"r_c", r.r_c},     {"r_l", r.r_l},     {"r_f", r.r_f},
              {"r_a", r.r_a},     {"r_ind", r.r_ind}, {"r_m", r.r_m},
              {"r_d", r.r_d},     {"r_h", r.r_h},     {"r_s", r.r_s},
              {"r_sys", r.r_sys}, {"r_global", r.r_global}};
}

RewardBreakdown reward_from_json(const json& j) {
  RewardBreakdown r;
  r.r_c = j.at("r_c").get<std::vector<double>>();
  r.r_l = j.at("r_l").get<std::vector<double>>();
  r.r_f = j.at("r_f").get<std::vector<double>>();
  r.r_a = j.at("r_a").get<std::vector<double>>();
  r.r_ind = j.at("r_ind").get<std::vector<double>>();
  r.r_m = j.at("r_m").get<double>();
  r.r_d = j.at("r_d").get<double>();
  r.r_h = j.at("r_h").get<double>();
  r.r_s = j.at("r_s").get<double>();
  r.r_sys = j.at("r_sys").get<double>();
  r.r_global = j.at("r_global").get<double>();
  return r;
}

Event::Kind event_kind_from_name(const std::string& name) {
  if (name == "collision") return Event::Kind::Collision;
  if (name == "zone_enter") return Event::Kind::ZoneEnter;
  if (name == "zone_exit") return Event::Kind::ZoneExit;
  throw SimError("trace: unknown event kind '" + name + "'");
}

}  // namespace

std::string trace_header_line(const TraceHeader& h) {
  json j;
  j["trace_schema"] = h.schema;
  j["seed"] = h.seed;
  j["config_hash"] = h.config_hash;
  j["config"] = json::parse(h.config_json);
  j["policy"] = {{"type", h.policy_type}, {"path", h.policy_path}};
  return j.dump();
}

std::string trace_step_line(const TraceStep& s) {
  json j;
  j["step"] = s.step;
  j["time"] = s.time;
  j["fsm"] = s.fsm;
  j["strategy"] = s.strategy;
  j["risk"] = {{"same_lane", s.same_lane}, {"clear_zone", s.clear_zone}};
  j["action"] = s.action;
  j["action_index"] = s.action_index;
  json subs = json::array();
  for (const auto& sub : s.substitutions) {
    subs.push_back(json{{"id", sub.vehicle_id},
                        {"from", sub.from},
                        {"to", sub.to},
                        {"margin_from", sub.margin_from},
                        {"margin_to", sub.margin_to},
                        {"best_effort", sub.best_effort}});
  }
  j["substitutions"] = subs;
  j["reward"] = reward_to_json(s.reward);
  json vehicles = json::array();
  for (const auto& v : s.vehicles) vehicles.push_back(vehicle_to_json(v));
  j["vehicles"] = vehicles;
  json events = json::array();
  for (const auto& e : s.events)
    events.push_back(json{{"kind", event_kind_name(e.kind)}, {"a", e.a}, {"b", e.b}});
  j["events"] = events;
  if (!s.done_reason.empty()) j["done_reason"] = s.done_reason;
  return j.dump();
}

TraceWriter::TraceWriter(const std::string& path) : out_(path, std::ios::binary) {
  if (!out_) throw ConfigError("trace: cannot open '" + path + "' for writing");
}

void TraceWriter::write_header(const TraceHeader& header) {
  out_ << trace_header_line(header) << "\n";
}

void TraceWriter::write_step(const TraceStep& step) { out_ << trace_step_line(step) << "\n"; }

void TraceWriter::close() { out_.close(); }

TraceFile read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("trace: cannot open '" + path + "'");

  TraceFile file;
  std::string line;
  bool have_header = false;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SimError("trace: line " + std::to_string(line_no) + " is not valid JSON: " + e.what());
    }
    if (!have_header) {
      if (!j.contains("trace_schema")) throw SimError("trace: missing header record");
      file.header.schema = j.at("trace_schema").get<int>();
      file.header.seed = j.at("seed").get<std::uint64_t>();
      file.header.config_hash = j.at("config_hash").get<std::uint64_t>();
      file.header.config_json = j.at("config").dump();
      file.header.policy_type = j.at("policy").at("type").get<std::string>();
      file.header.policy_path = j.at("policy").at("path").get<std::string>();
      have_header = true;
      continue;
    }
    TraceStep s;
    s.step = j.at("step").get<long>();
    s.time = j.at("time").get<double>();
    s.fsm = j.at("fsm").get<std::string>();
    s.strategy = j.at("strategy").get<std::string>();
    s.same_lane = j.at("risk").at("same_lane").get<bool>();
    s.clear_zone = j.at("risk").at("clear_zone").get<bool>();
    s.action = j.at("action").get<std::vector<int>>();
    s.action_index = j.at("action_index").get<long>();
    for (const auto& sub : j.at("substitutions")) {
      SubstitutionRecord r;
      r.vehicle_id = sub.at("id").get<int>();
      r.from = sub.at("from").get<int>();
      r.to = sub.at("to").get<int>();
      r.margin_from = sub.at("margin_from").get<double>();
      r.margin_to = sub.at("margin_to").get<double>();
      r.best_effort = sub.at("best_effort").get<bool>();
      s.substitutions.push_back(r);
    }
    s.reward = reward_from_json(j.at("reward"));
    for (const auto& v : j.at("vehicles")) s.vehicles.push_back(vehicle_from_json(v));
    for (const auto& e : j.at("events")) {
      Event ev;
      ev.kind = event_kind_from_name(e.at("kind").get<std::string>());
      ev.step = s.step;
      ev.a = e.at("a").get<int>();
      ev.b = e.at("b").get<int>();
      s.events.push_back(ev);
    }
    if (j.contains("done_reason")) s.done_reason = j.at("done_reason").get<std::string>();
    file.steps.push_back(std::move(s));
  }
  if (!have_header) throw SimError("trace: empty file");
  return file;
}

}  // namespace platoon
