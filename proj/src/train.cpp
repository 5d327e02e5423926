#include "platoon/train.hpp"

#include <filesystem>
#include <fstream>
#include <memory>

#include "platoon/env.hpp"
#include "platoon/safety.hpp"
#include "platoon/scenario.hpp"

namespace platoon {

namespace {

ScenarioSpec episode_spec(const ScenarioSpec& base, long episode_counter) {
  ScenarioSpec spec = base;
  spec.scenario =
      (episode_counter % 2 == 0) ? ScenarioKind::Plain : ScenarioKind::FlowOscillation;
  return spec;
}

struct LiveEpisode {
  std::unique_ptr<Episode> episode;
  std::unique_ptr<TwinWorldProjector> projector;
};

LiveEpisode start_episode(const ScenarioSpec& base, std::uint64_t seed, long counter) {
  const ScenarioSpec spec = episode_spec(base, counter);
  World world = make_world(spec, derive_seed(seed, static_cast<std::uint64_t>(counter)));
  std::vector<int> ids = platoon_ids_of(world);
  LiveEpisode live;
  live.episode = std::make_unique<Episode>(std::move(world), std::move(ids), spec.env);
  live.projector = std::make_unique<TwinWorldProjector>(spec.safety, spec.env);
  return live;
}

}  // namespace

Trainer::Trainer(const ScenarioSpec& spec, std::uint64_t seed)
    : spec_(spec),
      seed_(seed),
      net_(spec.env.max_vehicles * ObservationMatrix::kFeatures, spec.spawn.platoon_n, spec.train,
           seed),
      action_rng_(derive_seed(seed, 0x414354ULL)) {}

double Trainer::measure_mean_return(int episodes) {
  Rng eval_rng(derive_seed(seed_, 0x4556414cULL));
  double total = 0.0;
  for (int e = 0; e < episodes; ++e) {
    LiveEpisode live = start_episode(spec_, derive_seed(seed_, 0xe000 + static_cast<std::uint64_t>(e)),
                                     e);
    double ep_return = 0.0;
    while (!live.episode->done()) {
      const std::vector<double> obs = live.episode->observe().flatten();
      const auto admissible =
          live.projector->per_vehicle_admissible(live.episode->world(), live.episode->platoon_ids());
      const std::vector<std::uint8_t> mask = live.projector->joint_mask(admissible);
      const MaskedDist dist = net_.distribution(obs, mask);
      const long a = net_.sample(dist, eval_rng);
      const ProjectionResult projected = live.projector->project(
          live.episode->world(), live.episode->platoon_ids(),
          decode_action(a, static_cast<int>(live.episode->platoon_ids().size())),
          derive_seed(seed_, 0xf000 + static_cast<std::uint64_t>(live.episode->steps())));
      const auto [next_obs, reward] = live.episode->step(projected.action.index);
      (void)next_obs;
      ep_return += reward;
    }
    total += ep_return;
  }
  return total / static_cast<double>(episodes);
}

TrainResult Trainer::run(const std::string& out_dir, int eval_episodes) {
  std::filesystem::create_directories(out_dir);
  TrainResult result;
  result.checkpoint_path = out_dir + "/checkpoint.bin";
  result.stats_path = out_dir + "/stats.csv";

  std::ofstream stats(result.stats_path, std::ios::binary);
  if (!stats) throw ConfigError("train: cannot open stats file");
  stats.precision(12);
  stats << "update,env_steps,episodes,mean_episode_return,policy_term,value_term,entropy,kl,"
           "rolled_back,lr_scale\n";

  result.baseline_return = measure_mean_return(eval_episodes);

  const int obs_dim = net_.obs_dim();
  RolloutBuffer buffer;
  buffer.obs_dim = obs_dim;
  buffer.act_dim = net_.act_dim();

  LiveEpisode live = start_episode(spec_, seed_, episode_counter_);
  double ep_return = 0.0;
  double recent_return_sum = 0.0;
  long recent_return_count = 0;

  long update_idx = 0;
  while (result.env_steps < spec_.train.total_steps) {
    buffer.clear();
    for (long t = 0; t < spec_.train.n_steps; ++t) {
      const std::vector<double> raw_obs = live.episode->observe().flatten();
      const Eigen::RowVectorXd x = net_.normalize_obs(raw_obs);

      const auto admissible = live.projector->per_vehicle_admissible(
          live.episode->world(), live.episode->platoon_ids());
      const std::vector<std::uint8_t> mask = live.projector->joint_mask(admissible);

      const MaskedDist dist = net_.distribution(raw_obs, mask);
      const long a = net_.sample(dist, action_rng_);
      const double logp = dist.log_prob(a);
      const double v = net_.state_value(raw_obs);

      const ProjectionResult projected = live.projector->project(
          live.episode->world(), live.episode->platoon_ids(),
          decode_action(a, static_cast<int>(live.episode->platoon_ids().size())),
          derive_seed(seed_, 0xa000 + static_cast<std::uint64_t>(result.env_steps)));
      const auto [next_obs, reward] = live.episode->step(projected.action.index);
      (void)next_obs;

      for (long d = 0; d < x.size(); ++d) buffer.obs.push_back(x[d]);
      buffer.actions.push_back(a);
      buffer.log_probs.push_back(logp);
      buffer.rewards.push_back(reward);
      buffer.values.push_back(v);
      buffer.dones.push_back(live.episode->done() ? 1 : 0);
      buffer.masks.insert(buffer.masks.end(), mask.begin(), mask.end());

      ep_return += reward;
      result.env_steps += 1;

      if (live.episode->done()) {
        recent_return_sum += ep_return;
        recent_return_count += 1;
        result.episodes += 1;
        ep_return = 0.0;
        episode_counter_ += 1;
        live = start_episode(spec_, seed_, episode_counter_);
      }
    }
    buffer.bootstrap_value =
        live.episode->done() ? 0.0 : net_.state_value(live.episode->observe().flatten());

    const UpdateStats st = net_.update(buffer);
    update_idx += 1;
    result.updates = update_idx;

    const double mean_ep =
        recent_return_count > 0 ? recent_return_sum / static_cast<double>(recent_return_count) : 0.0;
    stats << update_idx << ',' << result.env_steps << ',' << result.episodes << ',' << mean_ep
          << ',' << st.policy_term << ',' << st.value_term << ',' << st.entropy << ',' << st.kl
          << ',' << (st.rolled_back ? 1 : 0) << ',' << st.lr_scale << '\n';
    recent_return_sum = 0.0;
    recent_return_count = 0;
  }

  result.final_return = measure_mean_return(eval_episodes);
  net_.save_checkpoint(result.checkpoint_path, config_hash(spec_), action_rng_.serialize());
  return result;
}

}  // namespace platoon
