#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string_view>

#include "emohead/features/clip.hpp"
#include "emohead/numerics/random.hpp"

namespace emohead::features {

namespace num = emohead::numerics;

namespace {

constexpr std::uint64_t kWorldSeed = 0x456d6f48656164ULL;
constexpr std::size_t kVocab = 64;  // token ids 1..kVocab
constexpr std::size_t kTags = kAllEmotions.size();
constexpr double kTagScale = 1.5;
constexpr double kSpeakerScale = 0.1;
constexpr double kNoise = 0.01;

enum Stream : std::uint64_t { kWorld = 1, kLatent, kWords, kNoiseStream, kSpeaker };

// Fixed encoder stand-ins shared by every clip.
struct World {
  std::vector<double> av, bv, ae, ag;  // dim × kExpressionDim, row-major
  std::vector<double> tag_embed;       // kTags × kEmotionDim
  std::vector<double> token_embed;     // (kVocab + 1) × kTextDim, row 0 is silence
};

std::vector<double> gaussian(num::Rng& rng, std::size_t n, double scale) {
  std::vector<double> out(n);
  for (double& v : out) v = scale * num::standard_normal(rng);
  return out;
}

const World& world() {
  static const World w = [] {
    num::Rng rng(num::derive_seed(kWorldSeed, kWorld));
    World out;
    const double s = 1.0 / std::sqrt(static_cast<double>(kExpressionDim));
    out.av = gaussian(rng, kAudioDim * kExpressionDim, s);
    out.bv = gaussian(rng, kAudioDim * kExpressionDim, s);
    out.ae = gaussian(rng, kEmotionDim * kExpressionDim, s);
    out.ag = gaussian(rng, kTextDim * kExpressionDim, 0.1 * s);
    out.tag_embed = gaussian(rng, kTags * kEmotionDim, 0.5);
    out.token_embed = gaussian(rng, (kVocab + 1) * kTextDim, 0.5);
    for (std::size_t k = 0; k < kTextDim; ++k) out.token_embed[k] = 0.0;
    return out;
  }();
  return w;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

double affine_row(const std::vector<double>& m, std::size_t row, const ExpressionVector& a) {
  const double* r = m.data() + row * kExpressionDim;
  double s = 0.0;
  for (std::size_t j = 0; j < kExpressionDim; ++j) s += r[j] * a[j];
  return s;
}

// Float-rounded so a save/load round trip reproduces the values exactly.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::vector<Word> random_words(num::Rng& rng, std::int64_t duration_ms) {
  std::vector<Word> words;
  std::int64_t t = 0;
  while (true) {
    const std::int64_t start = t + 40 + static_cast<std::int64_t>(num::uniform_index(rng, 160));
    if (start >= duration_ms) break;
    const std::int64_t end =
        std::min(duration_ms, start + 120 + static_cast<std::int64_t>(num::uniform_index(rng, 280)));
    words.push_back({1 + static_cast<int>(num::uniform_index(rng, kVocab)), start, end});
    t = end;
  }
  return words;
}

}  // namespace

ExpressionVector synthetic_emotion_mean(Emotion e) {
  ExpressionVector mu{};
  mu[static_cast<std::size_t>(emotion_index(e))] = kTagScale;
  return mu;
}

SyntheticClip emit_synthetic_clip(std::uint64_t seed, std::size_t n_frames, Emotion emotion,
                                  const std::string& speaker_id, const SyntheticClipOptions& options) {
  if (n_frames == 0) throw std::invalid_argument("emit_synthetic_clip: n_frames must be at least 1");
  if (options.fps <= 0) throw std::invalid_argument("emit_synthetic_clip: fps must be positive");
  const World& w = world();
  const double var = options.variation;
  const bool dynamic = var > 0.0;

  SyntheticClip out;
  InputClip& clip = out.clip;
  clip.emotion = emotion;
  clip.speaker_id = speaker_id;
  clip.fps = options.fps;

  const std::int64_t duration = static_cast<std::int64_t>(n_frames) * 1000 / options.fps;
  num::Rng word_rng(num::derive_seed(seed, kWords));
  if (dynamic) clip.words = random_words(word_rng, duration);
  const std::vector<int> tokens = align_transcript(clip.words, clip.fps, n_frames);

  // Speaker identity: a small offset in α and a style vector in audio space.
  num::Rng spk_rng(num::derive_seed(fnv1a(speaker_id), kSpeaker));
  ExpressionVector offset{};
  for (double& v : offset) v = num::uniform(spk_rng, -kSpeakerScale, kSpeakerScale);
  const std::vector<double> style = gaussian(spk_rng, kAudioDim, 0.05);

  const ExpressionVector mu = synthetic_emotion_mean(emotion);
  const std::size_t tag = static_cast<std::size_t>(emotion_index(emotion));
  num::Rng latent_rng(num::derive_seed(seed, kLatent));
  num::Rng noise_rng(num::derive_seed(seed, kNoiseStream));
  ExpressionVector z{};
  for (double& v : z) v = num::standard_normal(latent_rng);

  clip.frames.resize(n_frames);
  out.alpha.resize(n_frames);
  out.mar.resize(n_frames);
  for (std::size_t i = 0; i < n_frames; ++i) {
    if (i > 0) {
      // AR(1) latent with unit stationary variance.
      for (double& v : z) v = 0.9 * v + std::sqrt(1.0 - 0.81) * num::standard_normal(latent_rng);
    }
    ExpressionVector a{};
    for (std::size_t j = 0; j < kExpressionDim; ++j) {
      // Emotion dims stay within ±var of the tag mean; mouth dims swing wider.
      const double amp = j < kTags ? var : 3.0 * var;
      a[j] = mu[j] + offset[j] + (dynamic ? amp * std::tanh(z[j]) : 0.0);
    }
    if (tokens[i] != kSilenceToken) a[kExpressionDim - 1] += 2.0 * var;
    out.alpha[i].alpha = a;
    out.mar[i] = 0.5 + 0.5 * std::tanh(a[kExpressionDim - 1]);

    FeatureFrame& f = clip.frames[i];
    f.index = static_cast<std::int64_t>(i);
    f.timestamp_ms = static_cast<std::int64_t>(i) * 1000 / options.fps;
    f.token_id = tokens[i];
    f.audio.resize(kAudioDim);
    f.emotion.resize(kEmotionDim);
    f.text.resize(kTextDim);
    for (std::size_t k = 0; k < kAudioDim; ++k) {
      const double noise = dynamic ? kNoise * num::standard_normal(noise_rng) : 0.0;
      f.audio[k] = f32(affine_row(w.av, k, a) + 0.1 * std::tanh(affine_row(w.bv, k, a)) + style[k] + noise);
    }
    for (std::size_t k = 0; k < kEmotionDim; ++k) {
      const double noise = dynamic ? kNoise * num::standard_normal(noise_rng) : 0.0;
      f.emotion[k] = f32(affine_row(w.ae, k, a) + w.tag_embed[tag * kEmotionDim + k] + noise);
    }
    const double* tok = w.token_embed.data() + static_cast<std::size_t>(tokens[i]) * kTextDim;
    for (std::size_t k = 0; k < kTextDim; ++k) f.text[k] = f32(tok[k] + affine_row(w.ag, k, a));
  }
  return out;
}

}  // namespace emohead::features
