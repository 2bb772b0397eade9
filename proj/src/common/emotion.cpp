#include "emohead/common/emotion.hpp"

#include "emohead/numerics/errors.hpp"

namespace emohead {

std::string_view to_string(Emotion e) {
  switch (e) {
    case Emotion::neutral: return "neutral";
    case Emotion::angry: return "angry";
    case Emotion::contempt: return "contempt";
    case Emotion::disgusted: return "disgusted";
    case Emotion::fear: return "fear";
    case Emotion::happy: return "happy";
    case Emotion::sad: return "sad";
    case Emotion::surprised: return "surprised";
  }
  return "unknown";
}

std::optional<Emotion> parse_emotion(std::string_view name) {
  for (Emotion e : kAllEmotions) {
    if (to_string(e) == name) return e;
  }
  return std::nullopt;
}

std::string emotion_list() {
  std::string out;
  for (Emotion e : kAllEmotions) {
    if (!out.empty()) out += ", ";
    out += to_string(e);
  }
  return out;
}

Emotion emotion_from_string(std::string_view name) {
  if (auto e = parse_emotion(name)) return *e;
  throw ConfigError("unknown emotion tag '" + std::string(name) + "'; known tags: " + emotion_list());
}

}  // namespace emohead
