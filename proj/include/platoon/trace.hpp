#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "platoon/env.hpp"
#include "platoon/fsm.hpp"
#include "platoon/safety.hpp"

namespace platoon {

struct TraceHeader {
  int schema = 1;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  std::string config_json;      // fully resolved spec
  std::string policy_type;      // "scripted" | "checkpoint"
  std::string policy_path;      // checkpoint file when policy_type == "checkpoint"
};

struct SubstitutionRecord {
  int vehicle_id = -1;
  int from = 0;
  int to = 0;
  double margin_from = 0.0;
  double margin_to = 0.0;
  bool best_effort = false;
};

struct TraceStep {
  long step = 0;
  double time = 0.0;
  std::string fsm;       // "S1" | "S2"
  std::string strategy;  // "LQR" | "DataDriven"
  bool same_lane = false;
  bool clear_zone = false;
  std::vector<int> action;  // executed per-vehicle actions
  long action_index = 0;
  std::vector<SubstitutionRecord> substitutions;
  RewardBreakdown reward;
  std::vector<VehicleState> vehicles;
  std::vector<Event> events;
  std::string done_reason;  // set on the final record
};

// Line-delimited records: one header line followed by one line per step.
class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void write_header(const TraceHeader& header);
  void write_step(const TraceStep& step);
  void close();

 private:
  std::ofstream out_;
};

struct TraceFile {
  TraceHeader header;
  std::vector<TraceStep> steps;
};

TraceFile read_trace(const std::string& path);

// Serialization used by both the writer and tests.
std::string trace_header_line(const TraceHeader& header);
std::string trace_step_line(const TraceStep& step);

}  // namespace platoon
