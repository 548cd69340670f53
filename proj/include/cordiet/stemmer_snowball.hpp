#pragma once

// Snowball stemmers for Dutch and Russian, operating on lowercase UTF-32 words.

#include <algorithm>
#include <initializer_list>
#include <string>
#include <string_view>

namespace cordiet::stem {

namespace detail {

inline bool ends_with(const std::u32string& w, std::u32string_view suffix) {
  return w.size() >= suffix.size() && std::u32string_view(w).substr(w.size() - suffix.size()) == suffix;
}

// Longest suffix of `w` from `candidates` that starts at or after `region`.
inline std::u32string_view longest_suffix(const std::u32string& w, std::size_t region,
                                          std::initializer_list<std::u32string_view> candidates) {
  std::u32string_view best;
  bool found = false;
  for (auto c : candidates) {
    if (ends_with(w, c) && (!found || c.size() > best.size())) {
      best = c;
      found = true;
    }
  }
  if (found && w.size() - best.size() < region) return U"";
  return best;
}

}  // namespace detail

class DutchStemmer {
 public:
  std::u32string operator()(std::u32string word) const {
    for (auto& c : word) {
      switch (c) {
        case U'ä': case U'á': c = U'a'; break;
        case U'ë': case U'é': c = U'e'; break;
        case U'ï': case U'í': c = U'i'; break;
        case U'ö': case U'ó': c = U'o'; break;
        case U'ü': case U'ú': c = U'u'; break;
        default: break;
      }
    }
    // Mark consonantal y and i with uppercase so they are not treated as vowels.
    if (!word.empty() && word[0] == U'y') word[0] = U'Y';
    for (std::size_t i = 1; i < word.size(); ++i) {
      if (word[i] == U'y' && is_vowel(word[i - 1])) word[i] = U'Y';
      else if (word[i] == U'i' && is_vowel(word[i - 1]) && i + 1 < word.size() && is_vowel(word[i + 1]))
        word[i] = U'I';
    }
    std::size_t r1 = word.size(), r2 = word.size();
    for (std::size_t i = 1; i < word.size(); ++i) {
      if (!is_vowel(word[i]) && is_vowel(word[i - 1])) {
        r1 = i + 1;
        break;
      }
    }
    for (std::size_t i = r1 + 1; i < word.size(); ++i) {
      if (!is_vowel(word[i]) && is_vowel(word[i - 1])) {
        r2 = i + 1;
        break;
      }
    }
    if (r1 < 3) r1 = std::min<std::size_t>(3, word.size());

    bool e_found = false;
    step1(word, r1);
    e_found = step2(word, r1);
    step3a(word, r1, r2);
    step3b(word, r1, r2, e_found);
    step4(word);

    for (auto& c : word) {
      if (c == U'I') c = U'i';
      else if (c == U'Y') c = U'y';
    }
    return word;
  }

 private:
  static bool is_vowel(char32_t c) {
    switch (c) {
      case U'a': case U'e': case U'i': case U'o': case U'u': case U'y': case U'è': return true;
      default: return false;
    }
  }

  static void undouble(std::u32string& w) {
    if (detail::ends_with(w, U"kk") || detail::ends_with(w, U"dd") || detail::ends_with(w, U"tt")) w.pop_back();
  }

  static bool valid_en_ending(const std::u32string& w, std::size_t end) {
    if (end == 0 || is_vowel(w[end - 1])) return false;
    return !(end >= 3 && std::u32string_view(w).substr(end - 3, 3) == U"gem");
  }

  static bool valid_s_ending(const std::u32string& w, std::size_t end) {
    return end > 0 && !is_vowel(w[end - 1]) && w[end - 1] != U'j';
  }

  static void step1(std::u32string& w, std::size_t r1) {
    auto suffix = detail::longest_suffix(w, 0, {U"heden", U"ene", U"en", U"se", U"s"});
    if (suffix.empty()) return;
    std::size_t start = w.size() - suffix.size();
    if (start < r1) return;
    if (suffix == U"heden") {
      w.replace(start, suffix.size(), U"heid");
    } else if (suffix == U"en" || suffix == U"ene") {
      if (valid_en_ending(w, start)) {
        w.erase(start);
        undouble(w);
      }
    } else if (valid_s_ending(w, start)) {
      w.erase(start);
    }
  }

  static bool step2(std::u32string& w, std::size_t r1) {
    if (!detail::ends_with(w, U"e")) return false;
    std::size_t start = w.size() - 1;
    if (start < r1 || start == 0 || is_vowel(w[start - 1])) return false;
    w.erase(start);
    undouble(w);
    return true;
  }

  static void step3a(std::u32string& w, std::size_t r1, std::size_t r2) {
    if (!detail::ends_with(w, U"heid")) return;
    std::size_t start = w.size() - 4;
    if (start < r2 || (start > 0 && w[start - 1] == U'c')) return;
    w.erase(start);
    if (detail::ends_with(w, U"en")) {
      std::size_t en = w.size() - 2;
      if (en >= r1 && valid_en_ending(w, en)) {
        w.erase(en);
        undouble(w);
      }
    }
  }

  static void step3b(std::u32string& w, std::size_t r1, std::size_t r2, bool e_found) {
    auto suffix = detail::longest_suffix(w, 0, {U"end", U"ing", U"ig", U"lijk", U"baar", U"bar"});
    if (suffix.empty()) return;
    std::size_t start = w.size() - suffix.size();
    if (start < r2) return;
    if (suffix == U"end" || suffix == U"ing") {
      w.erase(start);
      if (detail::ends_with(w, U"ig") && w.size() - 2 >= r2 && !(w.size() >= 3 && w[w.size() - 3] == U'e')) {
        w.erase(w.size() - 2);
      } else {
        undouble(w);
      }
    } else if (suffix == U"ig") {
      if (start == 0 || w[start - 1] != U'e') w.erase(start);
    } else if (suffix == U"lijk") {
      w.erase(start);
      step2(w, r1);
    } else if (suffix == U"baar") {
      w.erase(start);
    } else if (suffix == U"bar") {
      if (e_found) w.erase(start);
    }
  }

  static void step4(std::u32string& w) {
    if (w.size() < 4) return;
    std::size_t n = w.size();
    char32_t c = w[n - 4], v1 = w[n - 3], v2 = w[n - 2], d = w[n - 1];
    bool doubled = v1 == v2 && (v1 == U'a' || v1 == U'e' || v1 == U'o' || v1 == U'u');
    if (!is_vowel(c) && doubled && !is_vowel(d) && d != U'I') w.erase(n - 2, 1);
  }
};

class RussianStemmer {
 public:
  std::u32string operator()(std::u32string word) const {
    for (auto& c : word)
      if (c == U'ё') c = U'е';
    std::size_t rv = word.size();
    for (std::size_t i = 0; i < word.size(); ++i) {
      if (is_vowel(word[i])) {
        rv = i + 1;
        break;
      }
    }
    std::size_t r1 = word.size(), r2 = word.size();
    for (std::size_t i = 1; i < word.size(); ++i) {
      if (!is_vowel(word[i]) && is_vowel(word[i - 1])) {
        r1 = i + 1;
        break;
      }
    }
    for (std::size_t i = r1 + 1; i < word.size(); ++i) {
      if (!is_vowel(word[i]) && is_vowel(word[i - 1])) {
        r2 = i + 1;
        break;
      }
    }

    // Step 1
    if (!remove_perfective_gerund(word, rv)) {
      remove_any(word, rv, {U"ся", U"сь"});
      if (!remove_adjectival(word, rv) && !remove_verb(word, rv)) {
        remove_any(word, rv,
                   {U"а", U"ев", U"ов", U"ие", U"ье", U"е", U"иями", U"ями", U"ами", U"еи", U"ии", U"и",
                    U"ией", U"ей", U"ой", U"ий", U"й", U"иям", U"ям", U"ием", U"ем", U"ам", U"ом", U"о",
                    U"у", U"ах", U"иях", U"ях", U"ы", U"ь", U"ию", U"ью", U"ю", U"ия", U"ья", U"я"});
      }
    }
    // Step 2
    if (detail::ends_with(word, U"и") && word.size() - 1 >= rv) word.pop_back();
    // Step 3
    remove_any(word, std::max(r2, rv), {U"ост", U"ость"});
    // Step 4
    if (detail::ends_with(word, U"нн") && word.size() - 2 >= rv) {
      word.pop_back();
    } else if (remove_any(word, rv, {U"ейш", U"ейше"})) {
      if (detail::ends_with(word, U"нн") && word.size() - 2 >= rv) word.pop_back();
    } else if (detail::ends_with(word, U"ь") && word.size() - 1 >= rv) {
      word.pop_back();
    }
    return word;
  }

 private:
  static bool is_vowel(char32_t c) {
    switch (c) {
      case U'а': case U'е': case U'и': case U'о': case U'у': case U'ы': case U'э': case U'ю': case U'я':
        return true;
      default:
        return false;
    }
  }

  static bool remove_any(std::u32string& w, std::size_t rv, std::initializer_list<std::u32string_view> set) {
    auto s = detail::longest_suffix(w, rv, set);
    if (s.empty()) return false;
    w.erase(w.size() - s.size());
    return true;
  }

  // Group-1 endings must be preceded by а or я (which stays), group-2 endings
  // are removed unconditionally. The longest match across both groups wins.
  static bool remove_grouped(std::u32string& w, std::size_t rv, std::initializer_list<std::u32string_view> group1,
                             std::initializer_list<std::u32string_view> group2) {
    std::size_t best = 0;
    for (auto s : group1) {
      if (s.size() <= best || !detail::ends_with(w, s)) continue;
      std::size_t start = w.size() - s.size();
      if (start >= 1 && start - 1 >= rv && (w[start - 1] == U'а' || w[start - 1] == U'я')) best = s.size();
    }
    for (auto s : group2) {
      if (s.size() <= best || !detail::ends_with(w, s)) continue;
      if (w.size() - s.size() >= rv) best = s.size();
    }
    if (best == 0) return false;
    w.erase(w.size() - best);
    return true;
  }

  static bool remove_perfective_gerund(std::u32string& w, std::size_t rv) {
    return remove_grouped(w, rv, {U"в", U"вши", U"вшись"}, {U"ив", U"ивши", U"ившись", U"ыв", U"ывши", U"ывшись"});
  }

  static bool remove_adjectival(std::u32string& w, std::size_t rv) {
    if (!remove_any(w, rv,
                    {U"ее", U"ие", U"ые", U"ое", U"ими", U"ыми", U"ей", U"ий", U"ый", U"ой", U"ем", U"им",
                     U"ым", U"ом", U"его", U"ого", U"ему", U"ому", U"их", U"ых", U"ую", U"юю", U"ая", U"яя",
                     U"ою", U"ею"}))
      return false;
    remove_grouped(w, rv, {U"ем", U"нн", U"вш", U"ющ", U"щ"}, {U"ивш", U"ывш", U"ующ"});
    return true;
  }

  static bool remove_verb(std::u32string& w, std::size_t rv) {
    return remove_grouped(
        w, rv,
        {U"ла", U"на", U"ете", U"йте", U"ли", U"й", U"л", U"ем", U"н", U"ло", U"но", U"ет", U"ют", U"ны", U"ть",
         U"ешь", U"нно"},
        {U"ила", U"ыла", U"ена", U"ейте", U"уйте", U"ите", U"или", U"ыли", U"ей", U"уй", U"ил", U"ыл", U"им",
         U"ым", U"ен", U"ило", U"ыло", U"ено", U"ят", U"ует", U"уют", U"ит", U"ыт", U"ены", U"ить", U"ыть",
         U"ишь", U"ую", U"ю"});
  }
};

}  // namespace cordiet::stem
