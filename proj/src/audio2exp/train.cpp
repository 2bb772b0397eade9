#include <cmath>
#include <iostream>
#include <map>
#include <set>

#include "emohead/audio2exp/audio2exp.hpp"
#include "emohead/numerics/adam.hpp"
#include "emohead/numerics/errors.hpp"
#include "emohead/numerics/ops.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::audio2exp {

namespace num = emohead::numerics;
using nlohmann::json;

namespace {

enum Stream : std::uint64_t { kBatchStream = 31, kPartnerStream, kModelStream };

struct FrameRef {
  std::size_t clip;
  std::size_t frame;
};

}  // namespace

json to_json(const Audio2ExpConfig& c) {
  return {{"model", to_json(c.model)},
          {"rho", c.rho},
          {"lr", c.lr},
          {"iterations", c.iterations},
          {"batch", c.batch},
          {"seed", c.seed},
          {"regression_only", c.regression_only},
          {"use_refinement", c.use_refinement},
          {"allow_single_speaker", c.allow_single_speaker}};
}

Audio2ExpConfig audio2exp_config_from_json(const json& j) {
  Audio2ExpConfig c;
  if (j.contains("model")) c.model = alignment_config_from_json(j.at("model"));
  c.rho = j.value("rho", c.rho);
  c.lr = j.value("lr", c.lr);
  c.iterations = j.value("iterations", c.iterations);
  c.batch = j.value("batch", c.batch);
  c.seed = j.value("seed", c.seed);
  c.regression_only = j.value("regression_only", c.regression_only);
  c.use_refinement = j.value("use_refinement", c.use_refinement);
  c.allow_single_speaker = j.value("allow_single_speaker", c.allow_single_speaker);
  return c;
}

Audio2ExpResult train_audio2exp(const std::vector<LabeledClip>& dataset, const hyperplane::PlaneSet& planes,
                                const Audio2ExpConfig& config, const StepCallback& on_step) {
  if (dataset.empty()) throw ConfigError("train_audio2exp: empty dataset");
  if (config.batch == 0) throw ConfigError("train_audio2exp: batch must be positive");
  if (config.rho < 0.0) throw ConfigError("train_audio2exp: rho must be non-negative");

  std::vector<FrameRef> frames;
  std::map<Emotion, std::set<std::string>> speakers;
  for (std::size_t c = 0; c < dataset.size(); ++c) {
    const LabeledClip& clip = dataset[c];
    if (clip.alpha.size() != clip.clip.size()) {
      throw ConfigError("train_audio2exp: clip " + std::to_string(c) + " lacks per-frame ground truth");
    }
    if (config.use_refinement && planes.find(clip.clip.emotion) == planes.end()) {
      throw ConfigError("train_audio2exp: no hyperplane for emotion '" + std::string(to_string(clip.clip.emotion)) +
                        "'");
    }
    speakers[clip.clip.emotion].insert(clip.clip.speaker_id);
    for (std::size_t f = 0; f < clip.clip.size(); ++f) frames.push_back({c, f});
  }

  bool contrastive = !config.regression_only;
  double rho = config.rho;
  if (contrastive) {
    for (const auto& [e, names] : speakers) {
      if (names.size() >= 2) continue;
      if (!config.allow_single_speaker) {
        throw ConfigError("train_audio2exp: emotion '" + std::string(to_string(e)) +
                          "' has a single speaker; the contrastive term needs two");
      }
      std::cerr << "warning: emotion '" << to_string(e) << "' has a single speaker; rho forced to 0\n";
      contrastive = false;
      rho = 0.0;
    }
  }

  // Partner clips for each clip: same tag, different speaker.
  std::vector<std::vector<std::size_t>> partners(dataset.size());
  if (contrastive) {
    for (std::size_t a = 0; a < dataset.size(); ++a) {
      for (std::size_t b = 0; b < dataset.size(); ++b) {
        if (dataset[b].clip.emotion == dataset[a].clip.emotion &&
            dataset[b].clip.speaker_id != dataset[a].clip.speaker_id) {
          partners[a].push_back(b);
        }
      }
    }
  }

  Audio2ExpResult result;
  result.params = AlignmentParams::init(config.model, num::derive_seed(config.seed, kModelStream));
  AlignmentParams& params = result.params;
  const num::ParamList plist = params.parameters();
  num::AdamState adam(num::AdamConfig{config.lr}, plist);
  result.losses.reserve(config.iterations);

  const std::size_t b = config.batch;
  for (std::size_t it = 0; it < config.iterations; ++it) {
    num::Rng batch_rng(num::derive_seed(config.seed, kBatchStream, it));
    num::Rng partner_rng(num::derive_seed(config.seed, kPartnerStream, it));
    Tape tape;
    const AlignmentVars vars = bind(tape, params, true);

    std::vector<Var> rows;
    rows.reserve(b);
    Tensor targets({b, kExpressionDim});
    Tensor others({b, kExpressionDim});
    Tensor dirs({b, kExpressionDim});
    for (std::size_t k = 0; k < b; ++k) {
      const FrameRef ref = frames[num::uniform_index(batch_rng, frames.size())];
      const LabeledClip& clip = dataset[ref.clip];
      const features::Window w = features::window(clip.clip, ref.frame, config.model.window);
      const WindowFeatures raw = gather_window(w);
      const FusedVars fused =
          fuse_window(vars, tape.constant(raw.audio), tape.constant(raw.emotion), tape.constant(raw.text));
      rows.push_back(readout(config.model.no_alignment ? joint_attention(vars, fused) : fused_attention(vars, fused)));

      for (std::size_t j = 0; j < kExpressionDim; ++j) targets.at(k, j) = clip.alpha[ref.frame][j];
      if (contrastive) {
        const auto& cand = partners[ref.clip];
        const LabeledClip& other = dataset[cand[num::uniform_index(partner_rng, cand.size())]];
        const std::size_t f = num::uniform_index(partner_rng, other.alpha.size());
        for (std::size_t j = 0; j < kExpressionDim; ++j) others.at(k, j) = other.alpha[f][j];
      }
      if (config.use_refinement) {
        const auto& normal = planes.at(clip.clip.emotion).normal;
        for (std::size_t j = 0; j < kExpressionDim; ++j) dirs.at(k, j) = normal[j];
      }
    }

    const OutputVars out = predict_expression(vars, num::concat_rows(rows));
    Var alpha_hat = out.alpha_tilde;
    if (config.use_refinement) alpha_hat = num::add(alpha_hat, num::scale_rows(tape.constant(dirs), out.tau));
    const Var loss = contrastive_loss(alpha_hat, tape.constant(targets),
                                      contrastive ? tape.constant(others) : Var{}, rho);
    tape.backward(loss);
    const std::vector<Tensor> grads = num::gradients(tape, vars.leaves);
    adam.update(plist, grads);

    const double value = loss.value().item();
    if (!std::isfinite(value)) throw NonFiniteError("train_audio2exp: loss diverged at iteration " + std::to_string(it));
    result.losses.push_back(value);
    if (on_step) on_step(it, value);
  }
  return result;
}

double expression_rmse(const std::vector<LabeledClip>& clips, const AlignmentParams& params,
                       const hyperplane::PlaneSet* planes) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const LabeledClip& c : clips) {
    for (std::size_t i = 0; i < c.clip.size(); ++i) {
      const ExpressionParams a = infer_refined(c.clip, i, params, planes);
      for (std::size_t k = 0; k < kExpressionDim; ++k) {
        const double diff = a[k] - c.alpha[i][k];
        sum += diff * diff;
      }
      count += kExpressionDim;
    }
  }
  if (count == 0) throw ConfigError("expression_rmse: no frames");
  return std::sqrt(sum / static_cast<double>(count));
}

}  // namespace emohead::audio2exp
