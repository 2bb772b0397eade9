#include "emohead/hyperplane/hyperplane.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::hyperplane {

namespace num = emohead::numerics;
using nlohmann::json;

namespace {

constexpr std::size_t kAug = kExpressionDim + 1;
using AugVector = std::array<double, kAug>;

struct Sample {
  AugVector x;
  double y;
};

double aug_dot(const AugVector& a, const AugVector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kAug; ++i) s += a[i] * b[i];
  return s;
}

enum Stream : std::uint64_t { kShuffle = 11, kBalance };

}  // namespace

json to_json(const SvmConfig& c) {
  return {{"lambda_reg", c.lambda_reg}, {"epochs", c.epochs},   {"seed", c.seed},         {"bias_feature", c.bias_feature},
          {"average", c.average},       {"mar_bins", c.mar_bins}, {"balance", c.balance}};
}

SvmConfig svm_config_from_json(const json& j) {
  SvmConfig c;
  c.lambda_reg = j.value("lambda_reg", c.lambda_reg);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.bias_feature = j.value("bias_feature", c.bias_feature);
  c.average = j.value("average", c.average);
  c.mar_bins = j.value("mar_bins", c.mar_bins);
  c.balance = j.value("balance", c.balance);
  return c;
}

std::vector<std::vector<std::size_t>> mar_bins(const std::vector<LabeledExpression>& samples, std::size_t k) {
  if (samples.empty()) throw TrainingError("mar_bins: no samples");
  if (k == 0) throw TrainingError("mar_bins: k must be positive");
  std::vector<std::vector<std::size_t>> bins(k);
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end(),
                                                  [](const auto& a, const auto& b) { return a.mar < b.mar; });
  const double lo = lo_it->mar;
  const double hi = hi_it->mar;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::size_t b = 0;
    if (hi > lo) {
      const double pos = (samples[i].mar - lo) / (hi - lo) * static_cast<double>(k);
      b = std::min(k - 1, static_cast<std::size_t>(std::floor(pos)));
    }
    bins[b].push_back(i);
  }
  return bins;
}

std::vector<std::size_t> balance_groups(const std::vector<std::vector<std::size_t>>& groups, std::uint64_t seed) {
  std::size_t smallest = 0;
  for (const auto& g : groups) {
    if (!g.empty() && (smallest == 0 || g.size() < smallest)) smallest = g.size();
  }
  if (smallest == 0) throw TrainingError("balance_groups: every group is empty");
  std::vector<std::size_t> out;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (g.empty()) continue;
    // Partial Fisher-Yates over positions, then restore original order.
    num::Rng rng(num::derive_seed(seed, kBalance, gi));
    std::vector<std::size_t> pos(g.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    for (std::size_t i = 0; i < smallest; ++i) {
      const std::size_t j = i + num::uniform_index(rng, pos.size() - i);
      std::swap(pos[i], pos[j]);
    }
    pos.resize(smallest);
    std::sort(pos.begin(), pos.end());
    for (std::size_t p : pos) out.push_back(g[p]);
  }
  return out;
}

EmotionHyperplane train_hyperplane(const std::vector<ExpressionVector>& positives,
                                   const std::vector<ExpressionVector>& negatives, const SvmConfig& config,
                                   Emotion emotion) {
  if (positives.empty()) throw TrainingError("train_hyperplane: no positive samples for " + std::string(to_string(emotion)));
  if (negatives.empty()) throw TrainingError("train_hyperplane: no negative samples for " + std::string(to_string(emotion)));
  if (!(config.lambda_reg > 0.0)) throw TrainingError("train_hyperplane: lambda_reg must be positive");
  if (config.epochs == 0) throw TrainingError("train_hyperplane: epochs must be positive");

  std::vector<Sample> data;
  data.reserve(positives.size() + negatives.size());
  auto add = [&](const ExpressionVector& v, double y) {
    Sample s;
    std::copy(v.begin(), v.end(), s.x.begin());
    s.x[kExpressionDim] = config.bias_feature;
    s.y = y;
    data.push_back(s);
  };
  for (const auto& v : positives) add(v, 1.0);
  for (const auto& v : negatives) add(v, -1.0);
  // Canonical order makes the visiting sequence independent of how the
  // classes were passed in; swapping labels then negates every iterate.
  std::sort(data.begin(), data.end(), [](const Sample& a, const Sample& b) { return a.x < b.x; });
  // Centring keeps the optimal bias small, so regularizing it through the
  // constant feature barely moves the solution.
  ExpressionVector mean{};
  for (const Sample& s : data) {
    for (std::size_t k = 0; k < kExpressionDim; ++k) mean[k] += s.x[k];
  }
  for (double& m : mean) m /= static_cast<double>(data.size());
  for (Sample& s : data) {
    for (std::size_t k = 0; k < kExpressionDim; ++k) s.x[k] -= mean[k];
  }

  const double lambda = config.lambda_reg;
  const double radius = 1.0 / std::sqrt(lambda);
  const std::size_t n = data.size();
  const std::size_t total = config.epochs * n;
  AugVector w{};
  AugVector avg{};
  std::size_t averaged = 0;
  std::vector<std::size_t> order(n);
  num::Rng rng(num::derive_seed(config.seed, kShuffle));
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[num::uniform_index(rng, i)]);
    for (std::size_t idx : order) {
      ++t;
      const Sample& s = data[idx];
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const double margin = s.y * aug_dot(w, s.x);
      const double shrink = 1.0 - eta * lambda;
      for (double& v : w) v *= shrink;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < kAug; ++k) w[k] += eta * s.y * s.x[k];
      }
      const double norm = std::sqrt(aug_dot(w, w));
      if (norm > radius) {
        const double scale = radius / norm;
        for (double& v : w) v *= scale;
      }
      if (config.average && t > total / 2) {
        for (std::size_t k = 0; k < kAug; ++k) avg[k] += w[k];
        ++averaged;
      }
    }
  }
  if (config.average && averaged > 0) {
    for (std::size_t k = 0; k < kAug; ++k) w[k] = avg[k] / static_cast<double>(averaged);
  }

  double norm2 = 0.0;
  for (std::size_t k = 0; k < kExpressionDim; ++k) norm2 += w[k] * w[k];
  const double norm = std::sqrt(norm2);
  if (!(norm > 0.0)) throw TrainingError("train_hyperplane: degenerate zero normal for " + std::string(to_string(emotion)));

  EmotionHyperplane plane;
  plane.emotion = emotion;
  for (std::size_t k = 0; k < kExpressionDim; ++k) plane.normal[k] = w[k] / norm;
  double shift = 0.0;
  for (std::size_t k = 0; k < kExpressionDim; ++k) shift += w[k] * mean[k];
  plane.bias = (w[kExpressionDim] * config.bias_feature - shift) / norm;

  std::size_t correct = 0;
  for (const auto& v : positives) correct += classify(plane, ExpressionParams{v}).positive ? 1 : 0;
  for (const auto& v : negatives) correct += classify(plane, ExpressionParams{v}).positive ? 0 : 1;
  plane.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return plane;
}

PlaneSet train_emotion_planes(const std::vector<LabeledExpression>& samples, const SvmConfig& config) {
  if (samples.empty()) throw TrainingError("train_emotion_planes: no samples");
  PlaneSet planes;
  for (Emotion e : kAllEmotions) {
    std::vector<LabeledExpression> pos, neg;
    for (const auto& s : samples) (s.emotion == e ? pos : neg).push_back(s);
    if (pos.empty()) continue;
    if (neg.empty()) {
      throw TrainingError("train_emotion_planes: tag " + std::string(to_string(e)) +
                          " has no negatives; one-vs-rest needs at least two tags");
    }
    auto pick = [&](const std::vector<LabeledExpression>& group, std::uint64_t salt) {
      std::vector<std::size_t> idx;
      if (config.balance) {
        idx = balance_groups(mar_bins(group, config.mar_bins),
                             num::derive_seed(config.seed, salt, static_cast<std::uint64_t>(emotion_index(e))));
      } else {
        idx.resize(group.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
      }
      std::vector<ExpressionVector> out;
      out.reserve(idx.size());
      for (std::size_t i : idx) out.push_back(group[i].alpha.alpha);
      return out;
    };
    SvmConfig plane_config = config;
    plane_config.seed = num::derive_seed(config.seed, 3, static_cast<std::uint64_t>(emotion_index(e)));
    planes[e] = train_hyperplane(pick(pos, 1), pick(neg, 2), plane_config, e);
  }
  return planes;
}

Classification classify(const EmotionHyperplane& plane, const ExpressionParams& alpha) {
  Classification c;
  c.score = dot(plane.normal, alpha.alpha) + plane.bias;
  c.positive = c.score >= 0.0;
  return c;
}

ExpressionParams refine(const ExpressionParams& alpha_tilde, double tau, const ExpressionVector& direction) {
  if (tau == 0.0) return alpha_tilde;
  ExpressionParams out = alpha_tilde;
  for (std::size_t k = 0; k < kExpressionDim; ++k) out[k] += tau * direction[k];
  return out;
}

ExpressionParams refine(const ExpressionParams& alpha_tilde, double tau, const EmotionHyperplane& plane) {
  return refine(alpha_tilde, tau, plane.normal);
}

ExpressionVector interpolate_planes(const EmotionHyperplane& p1, const EmotionHyperplane& p2, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw InterpolationError("interpolation weight " + std::to_string(lambda) + " outside [0, 1]");
  }
  if (lambda == 0.0) return p1.normal;
  if (lambda == 1.0) return p2.normal;
  ExpressionVector u{};
  for (std::size_t k = 0; k < kExpressionDim; ++k) u[k] = (1.0 - lambda) * p1.normal[k] + lambda * p2.normal[k];
  const double norm = std::sqrt(dot(u, u));
  if (norm < 1e-12) {
    throw InterpolationError("blended direction between " + std::string(to_string(p1.emotion)) + " and " +
                             std::string(to_string(p2.emotion)) + " vanishes at lambda " + std::to_string(lambda));
  }
  for (double& v : u) v /= norm;
  return u;
}

double CrossFade::lambda_at(std::size_t frame) const {
  if (span == 0) return frame >= switch_frame ? 1.0 : 0.0;
  const double start = static_cast<double>(switch_frame) - static_cast<double>(span) / 2.0;
  const double l = (static_cast<double>(frame) - start) / static_cast<double>(span);
  return std::clamp(l, 0.0, 1.0);
}

std::vector<double> CrossFade::schedule(std::size_t n_frames) const {
  std::vector<double> out(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) out[f] = lambda_at(f);
  return out;
}

json to_json(const EmotionHyperplane& p, const SvmConfig& config) {
  return {{"emotion_tag", std::string(to_string(p.emotion))},
          {"normal", p.normal},
          {"bias", p.bias},
          {"train_accuracy", p.train_accuracy},
          {"config", to_json(config)},
          {"seed", config.seed}};
}

EmotionHyperplane plane_from_json(const json& j) {
  EmotionHyperplane p;
  try {
    p.emotion = emotion_from_string(j.at("emotion_tag").get<std::string>());
    p.normal = j.at("normal").get<ExpressionVector>();
    p.bias = j.at("bias").get<double>();
    p.train_accuracy = j.value("train_accuracy", 0.0);
  } catch (const json::exception& ex) {
    throw LoadError(std::string("malformed plane: ") + ex.what());
  }
  const double norm = std::sqrt(dot(p.normal, p.normal));
  if (!std::isfinite(norm) || std::abs(norm - 1.0) > 1e-9 || !std::isfinite(p.bias)) {
    throw LoadError("plane for " + std::string(to_string(p.emotion)) + " is not unit-normalized");
  }
  return p;
}

void save_plane(const std::filesystem::path& path, const EmotionHyperplane& p, const SvmConfig& config) {
  num::write_bytes(path, to_json(p, config).dump(2) + "\n");
}

EmotionHyperplane load_plane(const std::filesystem::path& path) {
  try {
    return plane_from_json(json::parse(num::read_bytes(path)));
  } catch (const json::exception& ex) {
    throw LoadError(path.string() + ": " + ex.what());
  } catch (const LoadError& ex) {
    throw LoadError(path.string() + ": " + ex.what());
  }
}

void save_planes(const std::filesystem::path& dir, const PlaneSet& planes, const SvmConfig& config) {
  std::filesystem::create_directories(dir);
  for (const auto& [e, p] : planes) save_plane(dir / (std::string(to_string(e)) + ".json"), p, config);
}

PlaneSet load_planes(const std::filesystem::path& dir) {
  PlaneSet planes;
  for (Emotion e : kAllEmotions) {
    const auto path = dir / (std::string(to_string(e)) + ".json");
    if (std::filesystem::exists(path)) planes[e] = load_plane(path);
  }
  if (planes.empty()) throw LoadError(dir.string() + ": no plane files found");
  return planes;
}

}  // namespace emohead::hyperplane
