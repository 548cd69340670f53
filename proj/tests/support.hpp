#pragma once

#include <algorithm>
#include <random>
#include <string>
#include <vector>

#include "cordiet/corpus.hpp"
#include "cordiet/ontology.hpp"

namespace fixtures {

inline std::string path(const std::string& name) { return std::string(CORDIET_FIXTURES) + "/" + name; }
inline std::string text(const std::string& name) { return cordiet::read_file(path(name)); }

inline cordiet::Corpus corpus(const std::string& name) { return cordiet::load_documents_file(path(name)); }
inline cordiet::Ontology ontology(const std::string& name) { return cordiet::parse_ontology(text(name)); }

// Brute-force phrase test: does `needle` occur as a contiguous run in `hay`?
inline bool contains_run(const std::vector<std::string>& hay, const std::vector<std::string>& needle) {
  if (needle.empty() || needle.size() > hay.size()) return false;
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i)
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) return true;
  return false;
}

// Brute-force phrase match over the given sections of one document.
inline bool doc_has_phrase(const cordiet::Document& d, const std::string& phrase, const cordiet::SectionSet& sections,
                           cordiet::Language lang) {
  auto needle = cordiet::analyze(phrase, lang);
  for (const auto& s : sections)
    if (contains_run(cordiet::analyze(d.sections[cordiet::require_section(s)], lang), needle)) return true;
  return false;
}

}  // namespace fixtures
