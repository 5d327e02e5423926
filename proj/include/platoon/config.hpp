#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platoon/env.hpp"
#include "platoon/fsm.hpp"
#include "platoon/lqr.hpp"
#include "platoon/safety.hpp"
#include "platoon/world.hpp"

namespace platoon {

enum class ScenarioKind { Plain, HumanInterference, TrafficAccidents, FlowOscillation };

const char* scenario_name(ScenarioKind k);
ScenarioKind scenario_from_name(const std::string& name);

// Disturbance knobs for the three scripted scenario classes.
struct ScenarioParams {
  // traffic accidents: frozen wreck cluster inside the zone
  int wreck_count = 3;
  double wreck_s = -1.0;  // < 0: drawn uniformly inside the zone
  bool wreck_spans_two_lanes = true;
  double wreck_spacing = 6.0;

  // human interference: scripted cut-in ahead of the platoon lead
  double cutter_ahead = 15.0;
  double cutter_dv = 4.0;
  long cut_in_step = 45;
  bool cutter_brakes = true;
  double cutter_brake_decel = 2.0;
  long cutter_brake_duration = 30;

  // flow oscillation: pacing HDV ahead of the platoon
  double osc_lead_ahead = 50.0;
  double osc_amplitude = 3.0;
  double osc_period = 10.0;
  double osc_base_speed = 24.0;
};

struct TrainConfig {
  double learning_rate = 5e-4;  // eta
  long n_steps = 256;           // env steps per update
  long total_steps = 100000;    // N_t
  double beta1 = 1.0;           // value loss weight
  double beta2 = 0.01;          // entropy weight
  long minibatch = 128;         // lambda
  double gamma = 0.8;
  double kl_bound = 0.02;       // trust-region bound on mean KL(old || new)
  int epochs = 4;
  double momentum = 0.9;
  int hidden = 128;
  int hidden_layers = 2;
  int max_rollbacks = 20;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("train.learning_rate: must be > 0");
    if (n_steps <= 0 || minibatch <= 0 || minibatch > n_steps)
      throw ConfigError("train.minibatch: must satisfy 0 < minibatch <= n_steps");
    if (gamma < 0 || gamma > 1) throw ConfigError("train.gamma: must be in [0,1]");
    if (kl_bound <= 0) throw ConfigError("train.kl_bound: must be > 0");
  }
};

struct ScenarioSpec {
  std::string name = "default";
  ScenarioKind scenario = ScenarioKind::Plain;
  RoadSpec road;
  SpawnConfig spawn;
  WorldParams world;
  SafetyConfig safety;
  LqrConfig lqr;
  FsmConfig fsm;
  EnvConfig env;
  TrainConfig train;
  ScenarioParams params;
  std::vector<std::uint64_t> seeds;

  void validate() const;
};

ScenarioSpec parse_spec_json(const std::string& text);
ScenarioSpec load_spec_file(const std::string& path);

// Canonical (sorted-key) dump of the fully resolved spec.
std::string dump_spec_json(const ScenarioSpec& spec);

std::uint64_t config_hash(const ScenarioSpec& spec);

}  // namespace platoon
