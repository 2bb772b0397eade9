#include "emohead/features/clip.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emohead/numerics/checkpoint.hpp"
#include "emohead/numerics/errors.hpp"

namespace emohead::features {

namespace num = emohead::numerics;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;
constexpr std::size_t kFrameFloats = kAudioDim + kEmotionDim + kTextDim;

// Compares the centre of frame i, (2i+1)·500/fps ms, against t ms without rounding.
// Returns <0, 0, >0 as centre is before, at, after t.
int compare_centre(std::size_t i, int fps, std::int64_t t) {
  const std::int64_t lhs = static_cast<std::int64_t>(2 * i + 1) * 500;
  const std::int64_t rhs = t * fps;
  return (lhs > rhs) - (lhs < rhs);
}

std::int64_t default_timestamp(std::size_t i, int fps) {
  return static_cast<std::int64_t>(i) * 1000 / fps;
}

void check_dims(const FeatureFrame& f, std::size_t i) {
  auto bad = [&](const char* what, std::size_t got, std::size_t want) {
    std::ostringstream os;
    os << "frame " << i << ": " << what << " feature has " << got << " dims, expected " << want;
    throw LoadError(os.str());
  };
  if (f.audio.size() != kAudioDim) bad("audio", f.audio.size(), kAudioDim);
  if (f.emotion.size() != kEmotionDim) bad("emotion", f.emotion.size(), kEmotionDim);
  if (f.text.size() != kTextDim) bad("text", f.text.size(), kTextDim);
}

}  // namespace

void InputClip::validate() const {
  if (frames.empty()) throw LoadError("clip has no frames");
  if (fps <= 0) throw LoadError("fps must be positive");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    check_dims(frames[i], i);
    if (i > 0 && frames[i].timestamp_ms <= frames[i - 1].timestamp_ms) {
      throw LoadError("frame " + std::to_string(i) + ": timestamp " + std::to_string(frames[i].timestamp_ms) +
                      " ms does not follow " + std::to_string(frames[i - 1].timestamp_ms) + " ms");
    }
  }
}

const FeatureFrame& silence_frame() {
  static const FeatureFrame pad = [] {
    FeatureFrame f;
    f.index = -1;
    f.audio.assign(kAudioDim, 0.0);
    f.emotion.assign(kEmotionDim, 0.0);
    f.text.assign(kTextDim, 0.0);
    f.token_id = kSilenceToken;
    return f;
  }();
  return pad;
}

std::vector<int> align_transcript(std::span<const Word> words, int fps, std::size_t n_frames) {
  if (fps <= 0) throw AlignmentError("fps must be positive");
  for (std::size_t j = 0; j < words.size(); ++j) {
    if (words[j].end_ms <= words[j].start_ms) {
      throw AlignmentError("word " + std::to_string(j) + " has an empty interval");
    }
    if (j > 0) {
      if (words[j].start_ms < words[j - 1].start_ms) {
        throw AlignmentError("words are not sorted at index " + std::to_string(j));
      }
      if (words[j].start_ms < words[j - 1].end_ms) {
        throw AlignmentError("word " + std::to_string(j) + " overlaps word " + std::to_string(j - 1));
      }
    }
  }

  std::vector<int> tokens(n_frames, kSilenceToken);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n_frames; ++i) {
    // Advance past words that end strictly before the centre. A centre exactly
    // at an end stays with that word only when the next word starts there.
    while (j < words.size()) {
      const int c = compare_centre(i, fps, words[j].end_ms);
      if (c < 0) break;
      const bool shared = j + 1 < words.size() && words[j + 1].start_ms == words[j].end_ms;
      if (c == 0 && shared) break;
      ++j;
    }
    if (j == words.size()) break;
    if (compare_centre(i, fps, words[j].start_ms) >= 0) tokens[i] = words[j].token_id;
  }
  return tokens;
}

Window window(const InputClip& clip, std::size_t i, std::size_t n) {
  if (i >= clip.size()) {
    throw std::out_of_range("window index " + std::to_string(i) + " outside clip of " +
                            std::to_string(clip.size()) + " frames");
  }
  Window w;
  w.rows.reserve(n + 1);
  w.pad_count = n > i ? n - i : 0;
  for (std::size_t k = 0; k < w.pad_count; ++k) w.rows.push_back(&silence_frame());
  for (std::size_t f = i + w.pad_count - n; f <= i; ++f) w.rows.push_back(&clip.frames[f]);
  return w;
}

std::string encode_features(const InputClip& clip) {
  clip.validate();
  json words = json::array();
  for (const Word& w : clip.words) {
    words.push_back({{"token_id", w.token_id}, {"start_ms", w.start_ms}, {"end_ms", w.end_ms}});
  }
  json stamps = json::array();
  for (const FeatureFrame& f : clip.frames) stamps.push_back(f.timestamp_ms);

  num::ManifestFile file;
  file.manifest = {{"version", kFormatVersion},
                   {"fps", clip.fps},
                   {"emotion_tag", std::string(to_string(clip.emotion))},
                   {"speaker_id", clip.speaker_id},
                   {"n_frames", clip.size()},
                   {"dims", {{"audio", kAudioDim}, {"emotion", kEmotionDim}, {"text", kTextDim}}},
                   {"words", words},
                   {"timestamps_ms", stamps}};
  file.payload.reserve(clip.size() * kFrameFloats * 4);
  for (const FeatureFrame& f : clip.frames) {
    for (double v : f.audio) num::append_f32(file.payload, static_cast<float>(v));
    for (double v : f.emotion) num::append_f32(file.payload, static_cast<float>(v));
    for (double v : f.text) num::append_f32(file.payload, static_cast<float>(v));
  }
  return num::encode_manifest_file(file);
}

InputClip decode_features(const std::string& bytes, const std::string& origin) {
  const num::ManifestFile file = num::decode_manifest_file(bytes, origin);
  const json& m = file.manifest;
  InputClip clip;
  std::size_t n = 0;
  try {
    if (m.at("version").get<int>() != kFormatVersion) {
      throw LoadError(origin + ": unsupported feature file version " + m.at("version").dump());
    }
    clip.fps = m.at("fps").get<int>();
    const std::string tag = m.at("emotion_tag").get<std::string>();
    const auto e = parse_emotion(tag);
    if (!e) throw LoadError(origin + ": unknown emotion tag '" + tag + "'");
    clip.emotion = *e;
    clip.speaker_id = m.at("speaker_id").get<std::string>();
    n = m.at("n_frames").get<std::size_t>();
    const json& d = m.at("dims");
    const std::size_t da = d.at("audio").get<std::size_t>();
    const std::size_t de = d.at("emotion").get<std::size_t>();
    const std::size_t dt = d.at("text").get<std::size_t>();
    if (da != kAudioDim || de != kEmotionDim || dt != kTextDim) {
      std::ostringstream os;
      os << origin << ": frame 0: feature dims " << da << "/" << de << "/" << dt << " do not match "
         << kAudioDim << "/" << kEmotionDim << "/" << kTextDim;
      throw LoadError(os.str());
    }
    for (const json& w : m.at("words")) {
      clip.words.push_back({w.at("token_id").get<int>(), w.at("start_ms").get<std::int64_t>(),
                            w.at("end_ms").get<std::int64_t>()});
    }
  } catch (const json::exception& ex) {
    throw LoadError(origin + ": malformed feature manifest: " + ex.what());
  }
  if (n == 0) throw LoadError(origin + ": clip has no frames");
  if (clip.fps <= 0) throw LoadError(origin + ": fps must be positive");

  const std::size_t frame_bytes = kFrameFloats * 4;
  const std::size_t complete = file.payload.size() / frame_bytes;
  if (complete < n) {
    std::ostringstream os;
    os << origin << ": payload truncated in frame " << complete << " of " << n << "; last complete frame is ";
    if (complete == 0) os << "none";
    else os << complete - 1;
    throw LoadError(os.str());
  }
  if (file.payload.size() != n * frame_bytes) {
    throw LoadError(origin + ": payload has " + std::to_string(file.payload.size() - n * frame_bytes) +
                    " trailing bytes after frame " + std::to_string(n - 1));
  }

  std::vector<std::int64_t> stamps;
  if (m.contains("timestamps_ms")) {
    try {
      stamps = m.at("timestamps_ms").get<std::vector<std::int64_t>>();
    } catch (const json::exception& ex) {
      throw LoadError(origin + ": malformed timestamps: " + ex.what());
    }
    if (stamps.size() != n) {
      throw LoadError(origin + ": " + std::to_string(stamps.size()) + " timestamps for " + std::to_string(n) +
                      " frames");
    }
  } else {
    for (std::size_t i = 0; i < n; ++i) stamps.push_back(default_timestamp(i, clip.fps));
  }

  std::vector<int> tokens;
  try {
    tokens = align_transcript(clip.words, clip.fps, n);
  } catch (const AlignmentError& ex) {
    throw LoadError(origin + ": " + ex.what());
  }

  clip.frames.resize(n);
  const char* p = file.payload.data();
  auto read_block = [&](std::vector<double>& dst, std::size_t dim, std::size_t i, const char* what) {
    dst.resize(dim);
    for (std::size_t k = 0; k < dim; ++k, p += 4) {
      const float v = num::read_f32(p);
      if (!std::isfinite(v)) {
        throw LoadError(origin + ": frame " + std::to_string(i) + ": non-finite " + what + " feature at dim " +
                        std::to_string(k));
      }
      dst[k] = v;
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    FeatureFrame& f = clip.frames[i];
    f.index = static_cast<std::int64_t>(i);
    f.timestamp_ms = stamps[i];
    f.token_id = tokens[i];
    read_block(f.audio, kAudioDim, i, "audio");
    read_block(f.emotion, kEmotionDim, i, "emotion");
    read_block(f.text, kTextDim, i, "text");
  }
  try {
    clip.validate();
  } catch (const LoadError& ex) {
    throw LoadError(origin + ": " + ex.what());
  }
  return clip;
}

void save_features(const std::filesystem::path& path, const InputClip& clip) {
  num::write_bytes(path, encode_features(clip));
}

InputClip load_features(const std::filesystem::path& path) {
  return decode_features(num::read_bytes(path), path.string());
}

void save_ground_truth(const std::filesystem::path& path, const SyntheticClip& clip) {
  json alpha = json::array();
  for (const ExpressionParams& a : clip.alpha) alpha.push_back(a.alpha);
  const json doc = {{"alpha", alpha}, {"mar", clip.mar}};
  num::write_bytes(path, doc.dump());
}

void load_ground_truth(const std::filesystem::path& path, SyntheticClip& out) {
  const std::string text = num::read_bytes(path);
  try {
    const json doc = json::parse(text);
    out.alpha.clear();
    for (const json& row : doc.at("alpha")) {
      ExpressionParams p;
      p.alpha = row.get<ExpressionVector>();
      out.alpha.push_back(p);
    }
    out.mar = doc.at("mar").get<std::vector<double>>();
  } catch (const json::exception& ex) {
    throw LoadError(path.string() + ": malformed ground truth: " + ex.what());
  }
  if (out.mar.size() != out.alpha.size()) throw LoadError(path.string() + ": alpha and mar lengths differ");
}

}  // namespace emohead::features
