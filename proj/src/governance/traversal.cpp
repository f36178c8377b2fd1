#include "acbvae/governance/traversal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "acbvae/errors.hpp"

namespace acbvae {

namespace {

constexpr int kTemplateAngles = 32;
constexpr double kTemplateScale = 0.15;
constexpr std::size_t kMinComponent = 4;

struct HeartTemplate {
  double area_per_scale2 = 0.0;  // pixels / scale^2
  std::array<std::array<double, 2>, kTemplateAngles> offset{};  // centroid - center, per unit scale
};

const HeartTemplate& heart_template() {
  static const HeartTemplate tmpl = [] {
    HeartTemplate t;
    double area = 0.0;
    for (int a = 0; a < kTemplateAngles; ++a) {
      ObjectPose pose{0.5, 0.5, kTemplateScale, 2.0 * std::numbers::pi * a / kTemplateAngles};
      const Observation img = render_heart(pose);
      double count = 0.0, sx = 0.0, sy = 0.0;
      for (std::size_t r = 0; r < kImageSide; ++r) {
        for (std::size_t c = 0; c < kImageSide; ++c) {
          if (img.at(r, c) > 0.5f) {
            count += 1.0;
            sx += (static_cast<double>(c) + 0.5) / kImageSide;
            sy += (static_cast<double>(r) + 0.5) / kImageSide;
          }
        }
      }
      area += count;
      t.offset[static_cast<std::size_t>(a)] = {(sx / count - 0.5) / kTemplateScale, (sy / count - 0.5) / kTemplateScale};
    }
    t.area_per_scale2 = area / kTemplateAngles / (kTemplateScale * kTemplateScale);
    return t;
  }();
  return tmpl;
}

double circular_std(std::span<const double> angles) {
  double c = 0.0, s = 0.0;
  for (double a : angles) {
    c += std::cos(a);
    s += std::sin(a);
  }
  const double n = static_cast<double>(angles.size());
  const double r = std::clamp(std::hypot(c, s) / n, 1e-12, 1.0);
  return std::sqrt(std::max(0.0, -2.0 * std::log(r)));
}

double linear_std(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / n);
}

void check_dim(std::size_t dim, std::size_t n) {
  if (dim < 1 || dim > n) {
    throw UsageError("latent dim " + std::to_string(dim) + " is out of range [1, " + std::to_string(n) + "]");
  }
}

}  // namespace

std::vector<float> linear_grid(float lo, float hi, int steps) {
  if (steps < 1) throw UsageError("grid needs at least one point");
  std::vector<float> g(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    g[static_cast<std::size_t>(i)] =
        steps == 1 ? lo : static_cast<float>(lo + (static_cast<double>(hi) - lo) * i / (steps - 1));
  }
  return g;
}

std::vector<TraversalPoint> traverse(const AgentModelF& model, const TraversalSpec& spec) {
  const std::size_t n = model.config.latent_dim;
  check_dim(spec.dim, n);
  if (spec.grid.empty()) throw UsageError("traversal grid is empty");
  for (std::size_t i = 1; i < spec.grid.size(); ++i) {
    if (!(spec.grid[i] > spec.grid[i - 1])) throw UsageError("traversal grid must be strictly increasing");
  }
  LatentStats base = spec.base.value_or(LatentStats{std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)});
  if (base.mu.size() != n || base.logvar.size() != n) {
    throw DimensionError("traversal base latent has the wrong width");
  }
  if (spec.zero_other_mapped) {
    for (std::size_t i = 0; i < model.config.action_dims; ++i) {
      if (i + 1 != spec.dim) base.mu[i] = 0.0f;
    }
  }
  const ActionVector av = action_to_vector(spec.reference_action);
  const std::vector<float> amap = make_action_map(std::span<const float>(av.data(), model.config.action_dims), n);
  std::vector<TraversalPoint> out;
  out.reserve(spec.grid.size());
  for (float v : spec.grid) {
    LatentStats s = base;
    s.mu[spec.dim - 1] = v;
    std::vector<float> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = s.mu[i] + amap[i];
    out.push_back(TraversalPoint{v, model.decode(z), model.policy_probs(s.h())});
  }
  return out;
}

ImageSummary summarize_image(std::span<const float> image) {
  if (image.size() != kImagePixels) throw DimensionError("summarize_image expects a 64x64 image");
  const HeartTemplate& tmpl = heart_template();
  constexpr int side = static_cast<int>(kImageSide);

  std::vector<int> label(kImagePixels, -1);
  std::vector<std::vector<std::size_t>> components;
  std::vector<std::size_t> stack;
  for (std::size_t p = 0; p < kImagePixels; ++p) {
    if (image[p] <= 0.5f || label[p] >= 0) continue;
    const int id = static_cast<int>(components.size());
    components.emplace_back();
    stack.push_back(p);
    label[p] = id;
    while (!stack.empty()) {
      const std::size_t q = stack.back();
      stack.pop_back();
      components.back().push_back(q);
      const int r = static_cast<int>(q) / side, c = static_cast<int>(q) % side;
      const int nbr[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& rc : nbr) {
        if (rc[0] < 0 || rc[0] >= side || rc[1] < 0 || rc[1] >= side) continue;
        const auto k = static_cast<std::size_t>(rc[0] * side + rc[1]);
        if (image[k] > 0.5f && label[k] < 0) {
          label[k] = id;
          stack.push_back(k);
        }
      }
    }
  }

  ImageSummary best;
  double best_iou = -1.0;
  int best_component = -1;
  for (std::size_t ci = 0; ci < components.size(); ++ci) {
    const auto& comp = components[ci];
    if (comp.size() < kMinComponent) continue;
    double sx = 0.0, sy = 0.0;
    for (std::size_t q : comp) {
      sx += (static_cast<double>(q % kImageSide) + 0.5) / kImageSide;
      sy += (static_cast<double>(q / kImageSide) + 0.5) / kImageSide;
    }
    const double cx = sx / static_cast<double>(comp.size());
    const double cy = sy / static_cast<double>(comp.size());
    const double scale = std::sqrt(static_cast<double>(comp.size()) / tmpl.area_per_scale2);
    for (int a = 0; a < kTemplateAngles; ++a) {
      const auto& off = tmpl.offset[static_cast<std::size_t>(a)];
      const double rot = 2.0 * std::numbers::pi * a / kTemplateAngles;
      const Observation t = render_heart(ObjectPose{cx - off[0] * scale, cy - off[1] * scale, scale, rot});
      std::size_t inter = 0, tcount = 0;
      for (std::size_t q = 0; q < kImagePixels; ++q) {
        if (t.pixels[q] > 0.5f) {
          ++tcount;
          if (label[q] == static_cast<int>(ci)) ++inter;
        }
      }
      const double uni = static_cast<double>(tcount + comp.size() - inter);
      const double iou = uni > 0.0 ? static_cast<double>(inter) / uni : 0.0;
      if (iou > best_iou) {
        best_iou = iou;
        best_component = static_cast<int>(ci);
        best.heart_found = true;
        best.x = cx;
        best.y = cy;
        best.scale = scale;
        best.rot = rot;
      }
    }
  }

  double sum = 0.0, sum_sq = 0.0, count = 0.0;
  for (std::size_t q = 0; q < kImagePixels; ++q) {
    if (best_component >= 0 && label[q] == best_component) continue;
    sum += image[q];
    sum_sq += static_cast<double>(image[q]) * image[q];
    count += 1.0;
  }
  if (count > 0.0) {
    const double mean = sum / count;
    best.distractor_variance = std::max(0.0, sum_sq / count - mean * mean);
  }
  return best;
}

double EffectReport::mean_heart_std(std::size_t first_dim0, std::size_t end_dim0) const {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t d = first_dim0; d < end_dim0 && d < dims; ++d) {
    for (std::size_t k = 0; k < kSumDistractor; ++k) {
      s += at(d, k);
      ++count;
    }
  }
  return count ? s / static_cast<double>(count) : 0.0;
}

EffectReport effect_report(const AgentModelF& model, std::span<const Observation> bases,
                           const std::vector<float>& grid) {
  if (bases.empty()) throw UsageError("effect report needs at least one base observation");
  const std::size_t n = model.config.latent_dim;
  EffectReport report;
  report.dims = n;
  report.base_count = bases.size();
  report.grid = grid;
  // per entry, one std per base observation
  std::vector<std::vector<double>> per_base(n * kNumSummaries);
  for (const Observation& obs : bases) {
    const LatentStats base = model.encode(obs);
    for (std::size_t d = 0; d < n; ++d) {
      TraversalSpec spec;
      spec.dim = d + 1;
      spec.grid = grid;
      spec.base = base;
      std::array<std::vector<double>, kNumSummaries> series;
      for (const TraversalPoint& p : traverse(model, spec)) {
        const ImageSummary s = summarize_image(p.image);
        series[kSumX].push_back(s.x);
        series[kSumY].push_back(s.y);
        series[kSumScale].push_back(s.scale);
        series[kSumRot].push_back(s.rot);
        series[kSumDistractor].push_back(s.distractor_variance);
      }
      for (std::size_t k = 0; k < kNumSummaries; ++k) {
        per_base[d * kNumSummaries + k].push_back(k == kSumRot ? circular_std(series[k]) : linear_std(series[k]));
      }
    }
  }
  // Sorted before summing so the mean does not depend on the base order.
  report.stds.resize(n * kNumSummaries);
  for (std::size_t e = 0; e < per_base.size(); ++e) {
    std::sort(per_base[e].begin(), per_base[e].end());
    report.stds[e] = std::accumulate(per_base[e].begin(), per_base[e].end(), 0.0) / static_cast<double>(bases.size());
  }
  return report;
}

std::vector<Observation> reference_observations(const EnvConfig& env_config, std::size_t count, std::uint64_t seed) {
  std::vector<Observation> out;
  SpritesEnv env(env_config);
  for (std::size_t i = 0; i < count; ++i) out.push_back(env.reset(mix_seed(seed, i)));
  return out;
}

void validate_overrides(const LatentOverrides& overrides, std::size_t latent_dim) {
  for (const auto& [dim, value] : overrides) {
    check_dim(dim, latent_dim);
    if (!std::isfinite(value)) throw UsageError("override for dim " + std::to_string(dim) + " is not finite");
  }
}

Prediction predict_with_override(const AgentModelF& model, const Observation& obs, const LatentOverrides& overrides,
                                 std::optional<DiscreteAction> action) {
  const std::size_t n = model.config.latent_dim;
  validate_overrides(overrides, n);
  Prediction out;
  out.latent = model.encode(obs);
  for (const auto& [dim, value] : overrides) out.latent.mu[dim - 1] = value;
  const std::vector<float> h = out.latent.h();
  out.policy = model.policy_probs(h);
  out.value = model.value(h);
  out.action = action.value_or(action_from_index(static_cast<std::size_t>(
      std::max_element(out.policy.begin(), out.policy.end()) - out.policy.begin())));
  const ActionVector av = action_to_vector(out.action);
  const std::vector<float> amap = make_action_map(std::span<const float>(av.data(), model.config.action_dims), n);
  std::vector<float> z(n);
  for (std::size_t i = 0; i < n; ++i) z[i] = out.latent.mu[i] + amap[i];
  out.image = model.decode(z);
  return out;
}

}  // namespace acbvae
