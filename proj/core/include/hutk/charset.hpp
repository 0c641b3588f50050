#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace hutk {

inline constexpr int kCtcBlank = 0;

// Emittable symbols: space + 29 Turkish letters. Ids run 1..charset_size();
// id 0 is reserved for the CTC blank and is never produced by encoding.
int charset_size();

// UTF-8 string for an id in [0, charset_size()]; id 0 maps to "".
const std::string& charset_symbol(int id);

// Id for a single-codepoint UTF-8 string, or -1 if it is not in the charset.
int charset_lookup(const std::string& utf8_char);

// Lowercases with Turkish casing rules (I -> dotless i, dotted I -> i),
// strips punctuation, collapses runs of whitespace to single spaces and trims.
// Characters that survive normalization but lie outside the charset raise
// UnmappableCharacter naming the codepoint position in the input.
std::string normalize_transcript(const std::string& raw);

// Maps a normalized string to symbol ids (1..charset_size()).
std::vector<uint16_t> encode_transcript(const std::string& normalized);

// Inverse of encode_transcript; blank ids are rejected.
std::string decode_transcript(const std::vector<uint16_t>& ids);

}  // namespace hutk
