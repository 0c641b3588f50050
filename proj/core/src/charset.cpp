#include "hutk/charset.hpp"

#include <map>

#include "hutk/common.hpp"

namespace hutk {

namespace {

const std::vector<std::string>& symbol_table() {
  static const std::vector<std::string> table = {
      "",  " ", "a", "b", "c", "ç", "d", "e", "f", "g", "ğ",
      "h", "ı", "i", "j", "k", "l", "m", "n", "o", "ö", "p",
      "r", "s", "ş", "t", "u", "ü", "v", "y", "z"};
  return table;
}

uint32_t decode_utf8(const std::string& s, size_t& i, size_t cp_index) {
  const auto bad = [&]() {
    raise(ErrorCode::Malformed,
          "invalid utf-8 at codepoint position " + std::to_string(cp_index));
  };
  const auto byte = [&](size_t j) { return static_cast<uint8_t>(s[j]); };
  uint8_t b0 = byte(i);
  if (b0 < 0x80) {
    i += 1;
    return b0;
  }
  int extra = 0;
  uint32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    extra = 1;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    extra = 2;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    extra = 3;
    cp = b0 & 0x07;
  } else {
    bad();
  }
  if (i + extra >= s.size()) bad();
  for (int j = 1; j <= extra; ++j) {
    uint8_t b = byte(i + j);
    if ((b & 0xC0) != 0x80) bad();
    cp = (cp << 6) | (b & 0x3F);
  }
  i += 1 + extra;
  return cp;
}

void append_utf8(std::string& out, uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

const std::map<uint32_t, int>& codepoint_ids() {
  static const std::map<uint32_t, int> ids = [] {
    std::map<uint32_t, int> m;
    const auto& table = symbol_table();
    for (int id = 1; id < static_cast<int>(table.size()); ++id) {
      size_t i = 0;
      m[decode_utf8(table[id], i, 0)] = id;
    }
    return m;
  }();
  return ids;
}

uint32_t lower_turkish(uint32_t cp) {
  switch (cp) {
    case 0x49: return 0x131;   // I -> dotless i
    case 0x130: return 0x69;   // dotted I -> i
    case 0xC7: return 0xE7;    // C cedilla
    case 0x11E: return 0x11F;  // G breve
    case 0xD6: return 0xF6;    // O diaeresis
    case 0x15E: return 0x15F;  // S cedilla
    case 0xDC: return 0xFC;    // U diaeresis
    default:
      if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
      return cp;
  }
}

bool is_separator(uint32_t cp) {
  return cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' ||
         cp == '\f' || cp == '\v' || cp == 0xA0;
}

bool is_punctuation(uint32_t cp) {
  if (cp < 0x80) {
    char c = static_cast<char>(cp);
    return (c >= '!' && c <= '/') || (c >= ':' && c <= '@') ||
           (c >= '[' && c <= '`') || (c >= '{' && c <= '~');
  }
  switch (cp) {
    case 0xAB:    // left guillemet
    case 0xBB:    // right guillemet
    case 0x2013:  // en dash
    case 0x2014:  // em dash
    case 0x2018:  // left single quote
    case 0x2019:  // right single quote
    case 0x201C:  // left double quote
    case 0x201D:  // right double quote
    case 0x2026:  // ellipsis
      return true;
    default:
      return false;
  }
}

}  // namespace

int charset_size() { return static_cast<int>(symbol_table().size()) - 1; }

const std::string& charset_symbol(int id) {
  require(id >= 0 && id <= charset_size(), ErrorCode::TargetOutOfRange,
          "symbol id " + std::to_string(id) + " outside [0, " +
              std::to_string(charset_size()) + "]");
  return symbol_table()[id];
}

int charset_lookup(const std::string& utf8_char) {
  if (utf8_char.empty()) return -1;
  size_t i = 0;
  uint32_t cp = decode_utf8(utf8_char, i, 0);
  if (i != utf8_char.size()) return -1;
  auto it = codepoint_ids().find(cp);
  return it == codepoint_ids().end() ? -1 : it->second;
}

std::string normalize_transcript(const std::string& raw) {
  const auto& ids = codepoint_ids();
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  size_t i = 0;
  size_t cp_index = 0;
  while (i < raw.size()) {
    uint32_t cp = lower_turkish(decode_utf8(raw, i, cp_index));
    if (is_separator(cp)) {
      pending_space = true;
    } else if (!is_punctuation(cp)) {
      if (ids.find(cp) == ids.end()) {
        std::string shown;
        append_utf8(shown, cp);
        raise(ErrorCode::UnmappableCharacter,
              "character '" + shown + "' at codepoint position " +
                  std::to_string(cp_index) + " is outside the charset");
      }
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      append_utf8(out, cp);
    }
    ++cp_index;
  }
  return out;
}

std::vector<uint16_t> encode_transcript(const std::string& normalized) {
  const auto& ids = codepoint_ids();
  std::vector<uint16_t> out;
  size_t i = 0;
  size_t cp_index = 0;
  while (i < normalized.size()) {
    uint32_t cp = decode_utf8(normalized, i, cp_index);
    auto it = ids.find(cp);
    if (it == ids.end()) {
      std::string shown;
      append_utf8(shown, cp);
      raise(ErrorCode::UnmappableCharacter,
            "character '" + shown + "' at codepoint position " +
                std::to_string(cp_index) + " is outside the charset");
    }
    out.push_back(static_cast<uint16_t>(it->second));
    ++cp_index;
  }
  return out;
}

std::string decode_transcript(const std::vector<uint16_t>& ids) {
  std::string out;
  for (uint16_t id : ids) {
    require(id != kCtcBlank, ErrorCode::TargetOutOfRange,
            "blank id in transcript");
    out += charset_symbol(id);
  }
  return out;
}

}  // namespace hutk
