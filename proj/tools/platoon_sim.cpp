#include <CLI11.hpp>
#include <cstdio>
#include <string>
#include <vector>

#include "platoon/config.hpp"
#include "platoon/metrics.hpp"
#include "platoon/runner.hpp"
#include "platoon/train.hpp"

namespace {

// "a..b" inclusive range or comma-separated list
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  const auto dots = text.find("..");
  if (dots != std::string::npos) {
    const std::uint64_t a = std::stoull(text.substr(0, dots));
    const std::uint64_t b = std::stoull(text.substr(dots + 2));
    if (b < a) throw platoon::ConfigError("seeds: range end before start");
    for (std::uint64_t s = a; s <= b; ++s) seeds.push_back(s);
    return seeds;
  }
  size_t pos = 0;
  while (pos < text.size()) {
    const size_t comma = text.find(',', pos);
    const std::string tok = text.substr(pos, comma == std::string::npos ? std::string::npos
                                                                        : comma - pos);
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw platoon::ConfigError("seeds: empty list");
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"platoon-sim: mixed-traffic platooning simulator and decision stack"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t train_seed = 0;
  CLI::App* train = app.add_subcommand("train", "train the policy and write a checkpoint");
  train->add_option("--config", config_path, "scenario config JSON")->required();
  train->add_option("--seed", train_seed, "training seed")->default_val(0);
  train->add_option("--out", out_dir, "output directory")->default_val("out");

  std::string checkpoint_path;
  std::string seeds_text = "0..7";
  std::string report_path = "report.csv";
  std::string trace_dir;
  int jobs = 1;
  CLI::App* eval = app.add_subcommand("eval", "run seeded evaluation episodes");
  eval->add_option("--config", config_path, "scenario config JSON")->required();
  eval->add_option("--checkpoint", checkpoint_path, "policy checkpoint (omit for scripted)");
  eval->add_option("--seeds", seeds_text, "seed range a..b or comma list")->default_val("0..7");
  eval->add_option("--jobs", jobs, "parallel episodes")->default_val(1);
  eval->add_option("--report", report_path, "metrics CSV output")->default_val("report.csv");
  eval->add_option("--traces", trace_dir, "directory for per-episode traces");

  std::string trace_path;
  std::string series_dir;
  CLI::App* replay_cmd = app.add_subcommand("replay", "validate a trace by re-simulation");
  replay_cmd->add_option("--trace", trace_path, "trace file")->required();
  replay_cmd->add_option("--emit-series", series_dir, "directory for plot-ready series tables");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const platoon::ScenarioSpec spec = platoon::load_spec_file(config_path);
      platoon::Trainer trainer(spec, train_seed);
      const platoon::TrainResult result = trainer.run(out_dir);
      std::printf("trained %ld env steps, %ld updates, %ld episodes\n", result.env_steps,
                  result.updates, result.episodes);
      std::printf("mean episode return: %.4f -> %.4f\n", result.baseline_return,
                  result.final_return);
      std::printf("checkpoint: %s\nstats: %s\n", result.checkpoint_path.c_str(),
                  result.stats_path.c_str());
      return 0;
    }

    if (*eval) {
      const platoon::ScenarioSpec spec = platoon::load_spec_file(config_path);
      const auto seeds = parse_seeds(seeds_text);
      const auto policy = platoon::make_policy_source(spec, checkpoint_path);
      platoon::EvalOptions opts;
      opts.jobs = jobs;
      opts.trace_dir = trace_dir;
      const platoon::MetricsReport report = platoon::run_eval(spec, seeds, *policy, opts);
      platoon::write_metrics_csv(report, report_path);
      std::printf("episodes: %zu  collision_rate: %.3f  pass_rate: %.3f  safe_halt_rate: %.3f\n",
                  report.rows.size(), report.aggregate.collision, report.aggregate.pass,
                  report.aggregate.safe_halt);
      std::printf("avg_speed: %.2f m/s  avg_headway: %.2f m\n", report.aggregate.avg_speed,
                  report.aggregate.avg_headway);
      std::printf("report: %s\n", report_path.c_str());
      if (report.failed_count > 0) {
        std::fprintf(stderr, "%d episode(s) failed\n", report.failed_count);
        return 2;
      }
      return 0;
    }

    if (*replay_cmd) {
      const platoon::ReplayResult result = platoon::replay(trace_path, series_dir);
      if (result.ok) {
        std::printf("replay ok: %ld steps verified\n", result.steps_checked);
        return 0;
      }
      std::fprintf(stderr, "replay diverged at step %ld (%s)\n", result.divergence_step,
                   result.divergence_field.c_str());
      return 2;
    }
  } catch (const platoon::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
