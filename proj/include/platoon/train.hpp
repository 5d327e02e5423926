#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/policy.hpp"

namespace platoon {

struct TrainResult {
  long env_steps = 0;
  long updates = 0;
  long episodes = 0;
  double baseline_return = 0.0;  // mean episode return of the initial policy
  double final_return = 0.0;     // mean episode return after training
  std::string checkpoint_path;
  std::string stats_path;
};

// Rollout collection with the twin-world mask, one-step TD advantages, and
// trust-region updates. Episodes alternate between the Plain and
// FlowOscillation scenarios. Single-threaded and fully seeded.
class Trainer {
 public:
  Trainer(const ScenarioSpec& spec, std::uint64_t seed);

  ActorCritic& net() { return net_; }

  // Mean episode return of the current parameters (stochastic policy,
  // masked sampling) over `episodes` evaluation episodes.
  double measure_mean_return(int episodes);

  TrainResult run(const std::string& out_dir, int eval_episodes = 8);

 private:
  ScenarioSpec spec_;
  std::uint64_t seed_;
  ActorCritic net_;
  Rng action_rng_;
  long episode_counter_ = 0;
};

}  // namespace platoon
