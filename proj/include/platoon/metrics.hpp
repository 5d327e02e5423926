#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platoon/fsm.hpp"
#include "platoon/types.hpp"

namespace platoon {

struct MetricsRow {
  std::uint64_t seed = 0;
  std::string scenario;
  std::string outcome;  // passed | collided | safe_halt
  long steps = 0;
  double episode_return = 0.0;
  double avg_speed = 0.0;
  double avg_headway = 0.0;
  double collision = 0.0;  // 0/1 per episode
  double pass = 0.0;
  double safe_halt = 0.0;
  long substitutions = 0;
  double s1_fraction = 0.0;
  bool failed = false;
  std::string error;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  MetricsRow aggregate;  // means over non-failed rows
  int failed_count = 0;
};

// Streams per-step platoon statistics; usable on a live episode or on a
// parsed trace so reported rows can be recomputed independently.
class MetricsAccumulator {
 public:
  void step(const std::vector<VehicleState>& vehicles, const std::vector<int>& platoon_ids,
            StrategyTag strategy, long substitutions, double reward);

  // Outcome resolution needs the final states and the zone bound.
  MetricsRow finalize(const std::vector<VehicleState>& final_vehicles,
                      const std::vector<int>& platoon_ids, const RoadSpec& road) const;

 private:
  long steps_ = 0;
  long s1_steps_ = 0;
  long substitutions_ = 0;
  double speed_sum_ = 0.0;
  double headway_sum_ = 0.0;
  long headway_samples_ = 0;
  double return_sum_ = 0.0;
};

MetricsRow aggregate_rows(const std::vector<MetricsRow>& rows);

std::string metrics_csv(const MetricsReport& report);
void write_metrics_csv(const MetricsReport& report, const std::string& path);

}  // namespace platoon
