#include "acbvae/io/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "acbvae/errors.hpp"

namespace acbvae {

using nlohmann::json;

namespace {

// Reads keys from one object and rejects whatever is left unread.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw UsageError("config: '" + path_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw UsageError("config: '" + path_ + "." + key + "' has the wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = doc_.begin(); it != doc_.end(); ++it) {
      if (!seen_.count(it.key())) throw UsageError("config: unknown key '" + path_ + "." + it.key() + "'");
    }
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

MetricOptions MetricSettings::options(std::uint64_t seed) const {
  MetricOptions o;
  o.validation_fraction = validation_fraction;
  o.num_trees = num_trees;
  o.depth_grid = depth_grid;
  o.seed = seed;
  return o;
}

bool RunConfig::env_equal(const EnvConfig& a, const EnvConfig& b) {
  return a.pos_min == b.pos_min && a.pos_max == b.pos_max && a.scale_min == b.scale_min &&
         a.scale_max == b.scale_max && a.pos_unit == b.pos_unit && a.scale_unit == b.scale_unit &&
         a.rot_unit == b.rot_unit && a.horizon == b.horizon;
}

json run_config_to_json(const RunConfig& config) {
  const TrainConfig& t = config.train;
  const ModelConfig& m = t.model;
  const Hyperparams& h = t.hyper;
  const EnvConfig& e = t.env;
  const MetricSettings& s = config.metrics;
  json doc;
  doc["model"] = {{"image_pixels", m.image_pixels},   {"latent_dim", m.latent_dim},
                  {"action_dims", m.action_dims},     {"encoder_hidden", m.encoder_hidden},
                  {"decoder_hidden", m.decoder_hidden}, {"head_hidden", m.head_hidden},
                  {"num_actions", m.num_actions},     {"logvar_min", m.logvar_min},
                  {"logvar_max", m.logvar_max}};
  doc["hyperparams"] = {{"beta", h.beta},
                        {"alpha", h.alpha},
                        {"gamma", h.gamma},
                        {"rollout_steps", h.rollout_steps},
                        {"entropy_coef", h.entropy_coef},
                        {"lr_vae", h.lr_vae},
                        {"lr_policy", h.lr_policy},
                        {"adam_beta1", h.adam_beta1},
                        {"adam_beta2", h.adam_beta2},
                        {"adam_eps", h.adam_eps},
                        {"action_map", action_map_mode_name(h.action_map)}};
  doc["env"] = {{"pos_min", e.pos_min},       {"pos_max", e.pos_max},       {"scale_min", e.scale_min},
                {"scale_max", e.scale_max},   {"pos_unit", e.pos_unit},     {"scale_unit", e.scale_unit},
                {"rot_unit", e.rot_unit},     {"horizon", e.horizon}};
  doc["train"] = {{"total_steps", t.total_steps},
                  {"num_envs", t.num_envs},
                  {"checkpoint_every", t.checkpoint_every},
                  {"seed", t.seed},
                  {"vae_only", t.vae_only}};
  doc["metrics"] = {{"samples", s.samples},
                    {"max_random_steps", s.max_random_steps},
                    {"validation_fraction", s.validation_fraction},
                    {"num_trees", s.num_trees},
                    {"depth_grid", s.depth_grid}};
  return doc;
}

RunConfig run_config_from_json(const json& doc) {
  RunConfig config;
  Section root(doc, "$");
  if (const json* j = root.child("model")) {
    Section s(*j, "model");
    ModelConfig& m = config.train.model;
    s.read("image_pixels", m.image_pixels);
    s.read("latent_dim", m.latent_dim);
    s.read("action_dims", m.action_dims);
    s.read("encoder_hidden", m.encoder_hidden);
    s.read("decoder_hidden", m.decoder_hidden);
    s.read("head_hidden", m.head_hidden);
    s.read("num_actions", m.num_actions);
    s.read("logvar_min", m.logvar_min);
    s.read("logvar_max", m.logvar_max);
    s.finish();
  }
  if (const json* j = root.child("hyperparams")) {
    Section s(*j, "hyperparams");
    Hyperparams& h = config.train.hyper;
    s.read("beta", h.beta);
    s.read("alpha", h.alpha);
    s.read("gamma", h.gamma);
    s.read("rollout_steps", h.rollout_steps);
    s.read("entropy_coef", h.entropy_coef);
    s.read("lr_vae", h.lr_vae);
    s.read("lr_policy", h.lr_policy);
    s.read("adam_beta1", h.adam_beta1);
    s.read("adam_beta2", h.adam_beta2);
    s.read("adam_eps", h.adam_eps);
    std::string mode = action_map_mode_name(h.action_map);
    s.read("action_map", mode);
    h.action_map = parse_action_map_mode(mode);
    s.finish();
  }
  if (const json* j = root.child("env")) {
    Section s(*j, "env");
    EnvConfig& e = config.train.env;
    s.read("pos_min", e.pos_min);
    s.read("pos_max", e.pos_max);
    s.read("scale_min", e.scale_min);
    s.read("scale_max", e.scale_max);
    s.read("pos_unit", e.pos_unit);
    s.read("scale_unit", e.scale_unit);
    s.read("rot_unit", e.rot_unit);
    s.read("horizon", e.horizon);
    s.finish();
  }
  if (const json* j = root.child("train")) {
    Section s(*j, "train");
    TrainConfig& t = config.train;
    s.read("total_steps", t.total_steps);
    s.read("num_envs", t.num_envs);
    s.read("checkpoint_every", t.checkpoint_every);
    s.read("seed", t.seed);
    s.read("vae_only", t.vae_only);
    s.finish();
  }
  if (const json* j = root.child("metrics")) {
    Section s(*j, "metrics");
    MetricSettings& m = config.metrics;
    s.read("samples", m.samples);
    s.read("max_random_steps", m.max_random_steps);
    s.read("validation_fraction", m.validation_fraction);
    s.read("num_trees", m.num_trees);
    s.read("depth_grid", m.depth_grid);
    s.finish();
  }
  root.finish();
  config.train.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(doc);
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << run_config_to_json(config).dump(2) << '\n';
}

}  // namespace acbvae
