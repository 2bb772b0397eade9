#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "emohead/common/emotion.hpp"
#include "emohead/common/expression.hpp"

namespace emohead::features {

inline constexpr std::size_t kAudioDim = 768;
inline constexpr std::size_t kEmotionDim = 768;
inline constexpr std::size_t kTextDim = 4096;
inline constexpr int kDefaultFps = 25;
inline constexpr int kSilenceToken = 0;

class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Encoder outputs for one video frame.
struct FeatureFrame {
  std::int64_t index = 0;
  std::vector<double> audio;    // kAudioDim
  std::vector<double> emotion;  // kEmotionDim
  std::vector<double> text;     // kTextDim
  int token_id = kSilenceToken;
  std::int64_t timestamp_ms = 0;
};

/// Transcript word with its [start_ms, end_ms) interval.
struct Word {
  int token_id = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
};

struct InputClip {
  std::vector<FeatureFrame> frames;
  Emotion emotion = Emotion::neutral;
  std::string speaker_id;
  int fps = kDefaultFps;
  std::vector<Word> words;

  std::size_t size() const { return frames.size(); }
  /// Throws LoadError on empty clips, wrong dims, or non-increasing timestamps.
  void validate() const;
};

/// Frames i−n..i, oldest first; leading rows before frame 0 are the silence frame.
/// Rows point into the clip, which must outlive the window.
struct Window {
  std::vector<const FeatureFrame*> rows;
  std::size_t pad_count = 0;
};

/// All-zero features with the silence token.
const FeatureFrame& silence_frame();

/// Token per frame by frame-centre time (i + 0.5)·1000/fps. A centre that lands
/// exactly on a boundary shared by two words goes to the earlier word; frames
/// outside every word get the silence token. Throws AlignmentError for
/// unsorted, empty or overlapping intervals.
std::vector<int> align_transcript(std::span<const Word> words, int fps, std::size_t n_frames);

/// Throws std::out_of_range unless i < clip.size().
Window window(const InputClip& clip, std::size_t i, std::size_t n);

// Feature file: compact JSON manifest line, '\n', then per-frame audio,
// emotion and text features as little-endian float32.
std::string encode_features(const InputClip& clip);
InputClip decode_features(const std::string& bytes, const std::string& origin = "<memory>");
void save_features(const std::filesystem::path& path, const InputClip& clip);
InputClip load_features(const std::filesystem::path& path);

struct SyntheticClipOptions {
  /// Scale of temporal variation around the emotion mean; 0 gives a static,
  /// silent clip whose frames all carry identical features.
  double variation = 0.3;
  int fps = kDefaultFps;
};

struct SyntheticClip {
  InputClip clip;
  std::vector<ExpressionParams> alpha;  // ground truth per frame
  std::vector<double> mar;              // mouth aspect ratio per frame, in (0, 1)
};

/// Per-tag mean of the synthetic expression distribution.
ExpressionVector synthetic_emotion_mean(Emotion e);

/// Deterministic clip whose features are a fixed (seed-independent) function of
/// a per-frame latent α, which is returned as ground truth. α clusters around
/// synthetic_emotion_mean(emotion) with a bounded speaker offset and bounded
/// smooth variation, so tags are linearly separable one-vs-rest.
SyntheticClip emit_synthetic_clip(std::uint64_t seed, std::size_t n_frames, Emotion emotion,
                                  const std::string& speaker_id, const SyntheticClipOptions& options = {});

/// Ground-truth sidecar: JSON {"alpha": [[10 floats]...], "mar": [...]}.
void save_ground_truth(const std::filesystem::path& path, const SyntheticClip& clip);
/// Fills alpha and mar of `out`; the clip member is left untouched.
void load_ground_truth(const std::filesystem::path& path, SyntheticClip& out);

}  // namespace emohead::features
