#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace a3s {

inline constexpr std::string_view kCharset = "abcdefghijklmnopqrstuvwxyz0123456789";
inline constexpr int kCharsetSize = static_cast<int>(kCharset.size());
/// Recognition classes: charset followed by end-of-sequence.
inline constexpr int kNumClasses = kCharsetSize + 1;
inline constexpr int kEosIndex = kCharsetSize;
inline constexpr std::size_t kMaxWordLength = 12;

/// Index in kCharset, or -1.
int char_index(char c);
bool in_charset(std::string_view word);
/// Class indices of word followed by kEosIndex. Throws ValidationError on
/// characters outside the charset.
std::vector<int> encode_text(std::string_view word);
std::string lowercase(std::string_view s);

/// 5x7 bitmap glyph; each row holds 5 bits, most significant bit leftmost.
using Glyph = std::array<std::uint8_t, 7>;
inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;

const Glyph& glyph_for(char c);
bool glyph_bit(const Glyph& g, int col, int row);

}  // namespace a3s
