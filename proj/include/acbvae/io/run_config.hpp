#ifndef ACBVAE_IO_RUN_CONFIG_HPP_
#define ACBVAE_IO_RUN_CONFIG_HPP_

#include <filesystem>
#include <string>

#include <json.hpp>

#include "acbvae/metrics/disentanglement.hpp"
#include "acbvae/train/trainer.hpp"

namespace acbvae {

struct MetricSettings {
  std::size_t samples = 10000;
  int max_random_steps = 8;
  double validation_fraction = 0.2;
  int num_trees = 20;
  std::vector<int> depth_grid{2, 4, 8, 16};

  MetricOptions options(std::uint64_t seed) const;
  friend bool operator==(const MetricSettings&, const MetricSettings&) = default;
};

// Everything a run needs. Serialised as JSON with the sections
// "model", "hyperparams", "env", "train" and "metrics"; omitted keys take
// the defaults below, unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  MetricSettings metrics;

  friend bool operator==(const RunConfig& a, const RunConfig& b) {
    return a.train.model == b.train.model && a.train.hyper == b.train.hyper &&
           a.train.total_steps == b.train.total_steps && a.train.num_envs == b.train.num_envs &&
           a.train.checkpoint_every == b.train.checkpoint_every && a.train.seed == b.train.seed &&
           a.train.vae_only == b.train.vae_only && env_equal(a.train.env, b.train.env) && a.metrics == b.metrics;
  }

 private:
  static bool env_equal(const EnvConfig& a, const EnvConfig& b);
};

nlohmann::json run_config_to_json(const RunConfig& config);
/// Throws UsageError naming the offending key path.
RunConfig run_config_from_json(const nlohmann::json& doc);

RunConfig load_run_config(const std::filesystem::path& path);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace acbvae

#endif  // ACBVAE_IO_RUN_CONFIG_HPP_
