#include "platoon/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace platoon {

namespace {

const VehicleState& by_id(const std::vector<VehicleState>& vehicles, int id) {
  for (const auto& v : vehicles)
    if (v.id == id) return v;
  throw SimError("metrics: vehicle id not in state list");
}

}  // namespace

void MetricsAccumulator::step(const std::vector<VehicleState>& vehicles,
                              const std::vector<int>& platoon_ids, StrategyTag strategy,
                              long substitutions, double reward) {
  steps_ += 1;
  if (strategy == StrategyTag::Lqr) s1_steps_ += 1;
  substitutions_ += substitutions;
  return_sum_ += reward;

  double speed = 0.0;
  for (const int id : platoon_ids) speed += by_id(vehicles, id).v;
  speed_sum_ += speed / static_cast<double>(platoon_ids.size());

  // follower bumper gap to the platoon predecessor by s-order
  std::vector<const VehicleState*> ordered;
  for (const int id : platoon_ids) ordered.push_back(&by_id(vehicles, id));
  std::sort(ordered.begin(), ordered.end(),
            [](const VehicleState* a, const VehicleState* b) { return a->s > b->s; });
  for (size_t k = 1; k < ordered.size(); ++k) {
    headway_sum_ += bumper_gap(*ordered[k - 1], *ordered[k]);
    headway_samples_ += 1;
  }
}

MetricsRow MetricsAccumulator::finalize(const std::vector<VehicleState>& final_vehicles,
                                        const std::vector<int>& platoon_ids,
                                        const RoadSpec& road) const {
  MetricsRow row;
  row.steps = steps_;
  row.episode_return = return_sum_;
  row.substitutions = substitutions_;
  row.s1_fraction = steps_ > 0 ? static_cast<double>(s1_steps_) / static_cast<double>(steps_) : 0.0;
  row.avg_speed = steps_ > 0 ? speed_sum_ / static_cast<double>(steps_) : 0.0;
  row.avg_headway =
      headway_samples_ > 0 ? headway_sum_ / static_cast<double>(headway_samples_) : 0.0;

  bool collided = false;
  bool crossed = true;
  for (const int id : platoon_ids) {
    const VehicleState& v = by_id(final_vehicles, id);
    if (v.collided) collided = true;
    if (v.rear() < road.zone_end) crossed = false;
  }

  if (collided) {
    row.outcome = "collided";
    row.collision = 1.0;
  } else if (crossed) {
    row.outcome = "passed";
    row.pass = 1.0;
  } else {
    row.outcome = "safe_halt";
    row.safe_halt = 1.0;
  }
  return row;
}

MetricsRow aggregate_rows(const std::vector<MetricsRow>& rows) {
  MetricsRow agg;
  agg.scenario = "aggregate";
  agg.outcome = "aggregate";
  long n = 0;
  for (const MetricsRow& r : rows) {
    if (r.failed) continue;
    n += 1;
    agg.steps += r.steps;
    agg.episode_return += r.episode_return;
    agg.avg_speed += r.avg_speed;
    agg.avg_headway += r.avg_headway;
    agg.collision += r.collision;
    agg.pass += r.pass;
    agg.safe_halt += r.safe_halt;
    agg.substitutions += r.substitutions;
    agg.s1_fraction += r.s1_fraction;
  }
  if (n > 0) {
    const double dn = static_cast<double>(n);
    agg.steps = static_cast<long>(static_cast<double>(agg.steps) / dn);
    agg.episode_return /= dn;
    agg.avg_speed /= dn;
    agg.avg_headway /= dn;
    agg.collision /= dn;
    agg.pass /= dn;
    agg.safe_halt /= dn;
    agg.s1_fraction /= dn;
  }
  return agg;
}

std::string metrics_csv(const MetricsReport& report) {
  std::ostringstream os;
  os.precision(17);
  os << "seed,scenario,outcome,steps,return,avg_speed,avg_headway,collision,pass,safe_halt,"
        "substitutions,s1_fraction,failed,error\n";
  auto emit = [&os](const MetricsRow& r, const std::string& seed_field) {
    os << seed_field << ',' << r.scenario << ',' << r.outcome << ',' << r.steps << ','
       << r.episode_return << ',' << r.avg_speed << ',' << r.avg_headway << ',' << r.collision
       << ',' << r.pass << ',' << r.safe_halt << ',' << r.substitutions << ',' << r.s1_fraction
       << ',' << (r.failed ? 1 : 0) << ',' << r.error << '\n';
  };
  for (const MetricsRow& r : report.rows) emit(r, std::to_string(r.seed));
  emit(report.aggregate, "aggregate");
  return os.str();
}

void write_metrics_csv(const MetricsReport& report, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("metrics: cannot open '" + path + "' for writing");
  out << metrics_csv(report);
}

}  // namespace platoon
