#pragma once

// Language analyzers: lowercase, split on non-letters, drop stop words, stem.

#include <unicode/uchar.h>

#include <algorithm>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "cordiet/error.hpp"
#include "cordiet/stemmer_english.hpp"
#include "cordiet/stemmer_snowball.hpp"
#include "cordiet/stopwords.hpp"
#include "cordiet/xml.hpp"

namespace cordiet {

enum class Language { english, dutch, russian };

inline Language parse_language(std::string_view s) {
  if (s == "en" || s == "english") return Language::english;
  if (s == "nl" || s == "dutch") return Language::dutch;
  if (s == "ru" || s == "russian") return Language::russian;
  throw ConfigError("unsupported language: " + std::string(s));
}

inline const char* language_code(Language l) {
  switch (l) {
    case Language::english: return "en";
    case Language::dutch: return "nl";
    case Language::russian: return "ru";
  }
  return "?";
}

// Identifies the tokenizer + stop list + stemmer combination. Indexes record
// it so that an index built by a different analyzer version is rejected.
inline const char* analyzer_id(Language l) {
  switch (l) {
    case Language::english: return "en-porter-v2";
    case Language::dutch: return "nl-snowball-v2";
    case Language::russian: return "ru-snowball-v2";
  }
  return "?";
}

namespace utf8 {

// Invalid sequences decode to U+FFFD.
inline std::u32string decode(std::string_view s) {
  std::u32string out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) { cp = c; len = 1; }
    else if ((c & 0xE0) == 0xC0) { cp = c & 0x1F; len = 2; }
    else if ((c & 0xF0) == 0xE0) { cp = c & 0x0F; len = 3; }
    else if ((c & 0xF8) == 0xF0) { cp = c & 0x07; len = 4; }
    else { out.push_back(0xFFFD); ++i; continue; }
    if (i + len > s.size()) { out.push_back(0xFFFD); break; }
    bool ok = true;
    for (std::size_t k = 1; k < len; ++k) {
      auto cc = static_cast<unsigned char>(s[i + k]);
      if ((cc & 0xC0) != 0x80) { ok = false; break; }
      cp = (cp << 6) | (cc & 0x3F);
    }
    if (!ok) { out.push_back(0xFFFD); ++i; continue; }
    out.push_back(cp);
    i += len;
  }
  return out;
}

inline std::string encode(std::u32string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char32_t c : s) xml::append_utf8(out, static_cast<std::uint32_t>(c));
  return out;
}

}  // namespace utf8

class Analyzer {
 public:
  explicit Analyzer(Language language) : language_(language) {
    auto load = [this](const auto& list) {
      for (auto w : list) stop_.emplace(w);
    };
    switch (language) {
      case Language::english: load(stopwords::english); break;
      case Language::dutch: load(stopwords::dutch); break;
      case Language::russian: load(stopwords::russian); break;
    }
  }

  Language language() const { return language_; }
  std::string id() const { return analyzer_id(language_); }

  std::vector<std::string> operator()(std::string_view text) const {
    std::vector<std::string> tokens;
    std::u32string current;
    auto flush = [&] {
      if (current.empty()) return;
      std::string word = utf8::encode(current);
      current.clear();
      // stem to a fixpoint so analyzing analyzer output changes nothing
      for (int round = 0; round < 8; ++round) {
        if (word.empty() || stop_.count(word)) return;
        std::string next = stem(word);
        if (next == word) break;
        word = std::move(next);
      }
      tokens.push_back(std::move(word));
    };
    for (char32_t cp : utf8::decode(text)) {
      auto c = static_cast<UChar32>(cp);
      if (u_isalpha(c) || (U_GET_GC_MASK(c) & U_GC_M_MASK)) {
        current.push_back(static_cast<char32_t>(u_tolower(c)));
      } else {
        flush();
      }
    }
    flush();
    return tokens;
  }

 private:
  Language language_;
  std::unordered_set<std::string> stop_;

  std::string stem(const std::string& word) const {
    switch (language_) {
      case Language::english: return stem::PorterStemmer{}(word);
      case Language::dutch: return utf8::encode(stem::DutchStemmer{}(utf8::decode(word)));
      case Language::russian: return utf8::encode(stem::RussianStemmer{}(utf8::decode(word)));
    }
    return word;
  }
};

inline std::vector<std::string> analyze(std::string_view text, Language language) {
  return Analyzer(language)(text);
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace cordiet
