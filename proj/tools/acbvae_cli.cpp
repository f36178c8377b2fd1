#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acbvae/errors.hpp"
#include "acbvae/governance/govern.hpp"
#include "acbvae/io/checkpoint.hpp"
#include "acbvae/io/pgm.hpp"
#include "acbvae/metrics/disentanglement.hpp"
#include "acbvae/service/http_server.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace acbvae;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json report_to_json(const UpdateReport& r) {
  return {{"step", r.step},
          {"update", r.update},
          {"policy_loss", r.policy_loss},
          {"ac_loss", r.ac_loss},
          {"critic_loss", r.critic_loss},
          {"total_loss", r.total_loss},
          {"mean_return", r.mean_return},
          {"mean_kl", r.mean_kl},
          {"mean_recon", r.mean_recon},
          {"episodes_finished", r.episodes_finished},
          {"mean_episode_return", r.mean_episode_return}};
}

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, const fs::path& out_dir,
              bool vae_only, std::optional<std::int64_t> steps) {
  RunConfig config = config_path.empty() ? RunConfig{} : load_run_config(config_path);
  if (seed) config.train.seed = *seed;
  if (vae_only) config.train.vae_only = true;
  if (steps) config.train.total_steps = *steps;
  config.train.validate();
  fs::create_directories(out_dir);
  save_run_config(out_dir / "config.json", config);
  std::ofstream log(out_dir / "reports.jsonl");
  TrainCallbacks callbacks;
  callbacks.on_report = [&](const UpdateReport& r) {
    log << report_to_json(r).dump() << '\n';
    if (r.update % 100 == 0) {
      std::cerr << "step " << r.step << " recon " << r.mean_recon << " kl " << r.mean_kl << " return "
                << r.mean_episode_return << '\n';
    }
  };
  callbacks.on_checkpoint = [&](const AgentModelF& model, std::int64_t step) {
    save_checkpoint(out_dir / ("checkpoint_" + std::to_string(step) + ".json"),
                    Checkpoint{config, config.train.seed, step, model});
  };
  TrainResult result = train(config.train, callbacks);
  save_checkpoint(out_dir / "checkpoint.json", Checkpoint{config, config.train.seed, result.steps, result.model});
  std::cout << (out_dir / "checkpoint.json").string() << '\n';
  return 0;
}

json metric_report(const Checkpoint& ckpt, std::size_t samples, std::uint64_t seed) {
  const MetricSettings& settings = ckpt.config.metrics;
  const RepresentationDataset data =
      collect_dataset(ckpt.model, ckpt.config.train.env, samples, seed, settings.max_random_steps);
  const ImportanceFit fit = fit_importance_matrix(data, settings.options(seed));
  const ScoreResult d = disentanglement_scores(fit.importance);
  const ScoreResult c = completeness_scores(fit.importance);
  std::vector<std::string> warnings = fit.warnings;
  warnings.insert(warnings.end(), d.warnings.begin(), d.warnings.end());
  warnings.insert(warnings.end(), c.warnings.begin(), c.warnings.end());
  if (samples < 5000) warnings.push_back("fewer than 5000 samples; scores are noisy");
  json importance = json::array();
  for (std::size_t i = 0; i < fit.importance.rows; ++i) {
    std::vector<double> row(fit.importance.values.begin() + static_cast<std::ptrdiff_t>(i * fit.importance.cols),
                            fit.importance.values.begin() + static_cast<std::ptrdiff_t>((i + 1) * fit.importance.cols));
    importance.push_back(row);
  }
  std::vector<double> informativeness;
  for (double r2 : fit.validation_r2) informativeness.push_back(1.0 - r2);
  return {{"v", 1},
          {"per_dim_disentanglement", d.per_item},
          {"per_factor_completeness", c.per_item},
          {"averages", {{"disentanglement", d.average}, {"completeness", c.average}}},
          {"factors", {"x", "y", "scale", "rot"}},
          {"importance", importance},
          {"chosen_depth", fit.chosen_depth},
          {"validation_normalized_mse", informativeness},
          {"samples", samples},
          {"config", run_config_to_json(ckpt.config)},
          {"seed", seed},
          {"warnings", warnings}};
}

json effects_to_json(const EffectReport& r, std::size_t mapped) {
  json rows = json::array();
  for (std::size_t d = 0; d < r.dims; ++d) {
    json row = {{"dim", d + 1}, {"mapped", d < mapped}};
    for (std::size_t k = 0; k < kNumSummaries; ++k) row[kSummaryNames[k]] = r.at(d, k);
    rows.push_back(row);
  }
  return {{"v", 1},
          {"grid", r.grid},
          {"base_observations", r.base_count},
          {"dims", rows},
          {"mean_heart_std_mapped", r.mean_heart_std(0, mapped)},
          {"mean_heart_std_unmapped", r.mean_heart_std(mapped, r.dims)}};
}

int run_serve(const std::string& checkpoint, const std::string& addr) {
  std::optional<Checkpoint> ckpt;
  if (!checkpoint.empty()) ckpt = load_checkpoint(checkpoint);
  ControlService service(std::move(ckpt));
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  HttpServer server(service, parse_address(addr));
  const std::uint16_t port = server.start();
  std::cout << "listening on " << parse_address(addr).host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Action-conditional beta-VAE agent on a sprites world"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out, schedule_path, addr = "127.0.0.1:8080";
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::int64_t> train_steps;
  bool vae_only = false, zero_other = false;
  std::size_t samples = 10000, bases = 16, dim = 1;
  float lo = -2.0f, hi = 2.0f;
  int steps = 9;

  auto* train_cmd = app.add_subcommand("train", "Train an agent and write checkpoints");
  train_cmd->add_option("--config", config_path, "JSON run config (defaults when omitted)")->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_seed, "Seed; overrides the config");
  train_cmd->add_option("--out", out, "Output directory")->required();
  train_cmd->add_option("--steps", train_steps, "Total environment steps; overrides the config");
  train_cmd->add_flag("--vae-only", vae_only, "Uniform random policy, representation loss only");

  auto* metrics_cmd = app.add_subcommand("metrics", "Disentanglement and completeness of a checkpoint");
  metrics_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  metrics_cmd->add_option("--samples", samples)->check(CLI::Range(std::size_t{1000}, std::size_t{10000000}));
  metrics_cmd->add_option("--seed", seed);
  metrics_cmd->add_option("--out", out)->required();

  auto* traverse_cmd = app.add_subcommand("traverse", "Decode a latent traversal to a PGM strip");
  traverse_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  traverse_cmd->add_option("--dim", dim, "1-based latent dim")->required();
  traverse_cmd->add_option("--min", lo);
  traverse_cmd->add_option("--max", hi);
  traverse_cmd->add_option("--steps", steps)->check(CLI::PositiveNumber);
  traverse_cmd->add_option("--seed", seed, "Environment seed of the reference observation");
  traverse_cmd->add_flag("--zero-other-mapped", zero_other);
  traverse_cmd->add_option("--out", out)->required();

  auto* effects_cmd = app.add_subcommand("effects", "Per-dim effect sizes of traversals");
  effects_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  effects_cmd->add_option("--bases", bases, "Number of base observations")->check(CLI::Range(1, 100000));
  effects_cmd->add_option("--seed", seed);
  effects_cmd->add_option("--out", out)->required();

  auto* govern_cmd = app.add_subcommand("govern", "Roll out one episode under a latent override schedule");
  govern_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  govern_cmd->add_option("--schedule", schedule_path, "JSON {\"overrides\": [{begin, end, dim, value}]}")
      ->check(CLI::ExistingFile);
  govern_cmd->add_option("--seed", seed);
  govern_cmd->add_option("--out", out)->required();

  auto* serve_cmd = app.add_subcommand("serve", "HTTP and websocket control service");
  serve_cmd->add_option("--checkpoint", checkpoint, "Without one every endpoint answers 503");
  serve_cmd->add_option("--addr", addr);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) return run_train(config_path, train_seed, out, vae_only, train_steps);
    if (*metrics_cmd) {
      const Checkpoint ckpt = load_checkpoint(checkpoint);
      write_text(out, metric_report(ckpt, samples, seed).dump(2) + "\n");
      return 0;
    }
    if (*traverse_cmd) {
      const Checkpoint ckpt = load_checkpoint(checkpoint);
      TraversalSpec spec;
      spec.dim = dim;
      spec.grid = linear_grid(lo, hi, steps);
      spec.base = ckpt.model.encode(reference_observations(ckpt.config.train.env, 1, seed).front());
      spec.zero_other_mapped = zero_other;
      std::vector<std::vector<float>> images;
      for (const TraversalPoint& p : traverse(ckpt.model, spec)) images.push_back(p.image);
      write_pgm(out, images, PgmLayout{kImageSide, 1, images.size()});
      return 0;
    }
    if (*effects_cmd) {
      const Checkpoint ckpt = load_checkpoint(checkpoint);
      const auto base_obs = reference_observations(ckpt.config.train.env, bases, seed);
      const EffectReport report = effect_report(ckpt.model, base_obs);
      write_text(out, effects_to_json(report, ckpt.model.config.action_dims).dump(2) + "\n");
      return 0;
    }
    if (*govern_cmd) {
      const Checkpoint ckpt = load_checkpoint(checkpoint);
      OverrideSchedule schedule;
      if (!schedule_path.empty()) {
        json doc;
        try {
          doc = json::parse(read_text(schedule_path));
        } catch (const json::parse_error& e) {
          throw UsageError(std::string("schedule is not valid JSON: ") + e.what());
        }
        schedule = schedule_from_json(doc);
      }
      write_text(out, serialize_trace(govern_rollout(ckpt.model, ckpt.config.train.env, schedule, seed)));
      return 0;
    }
    if (*serve_cmd) return run_serve(checkpoint, addr);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const IntegrityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 2;
}
