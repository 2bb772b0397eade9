#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace emohead {

/// Emotion tags of the eight-category talking-head corpora.
enum class Emotion { neutral, angry, contempt, disgusted, fear, happy, sad, surprised };

inline constexpr std::array<Emotion, 8> kAllEmotions{Emotion::neutral, Emotion::angry,   Emotion::contempt,
                                                      Emotion::disgusted, Emotion::fear, Emotion::happy,
                                                      Emotion::sad, Emotion::surprised};

std::string_view to_string(Emotion e);
std::optional<Emotion> parse_emotion(std::string_view name);
/// Like parse_emotion but throws ConfigError listing the known tags.
Emotion emotion_from_string(std::string_view name);

/// Zero-based position in kAllEmotions.
inline int emotion_index(Emotion e) { return static_cast<int>(e); }

/// Comma-separated list of every tag name.
std::string emotion_list();

}  // namespace emohead
