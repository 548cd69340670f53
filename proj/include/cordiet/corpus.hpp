#pragma once

// Document ingestion, section selection, inverted index and phrase queries.

#include <array>
#include <chrono>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/analyzer.hpp"
#include "cordiet/error.hpp"
#include "cordiet/timeutil.hpp"
#include "cordiet/xml.hpp"

namespace cordiet {

inline constexpr std::array<std::string_view, 5> kSectionNames = {"title", "authors", "abstract", "keywords",
                                                                  "body"};

inline std::optional<std::size_t> section_index(std::string_view name) {
  for (std::size_t i = 0; i < kSectionNames.size(); ++i)
    if (kSectionNames[i] == name) return i;
  return std::nullopt;
}

inline std::size_t require_section(std::string_view name) {
  auto i = section_index(name);
  if (!i) throw ConfigError("unknown section name: " + std::string(name));
  return *i;
}

// A set of canonical section names kept in canonical order.
using SectionSet = std::set<std::string>;

inline SectionSet all_sections() { return SectionSet(kSectionNames.begin(), kSectionNames.end()); }

inline SectionSet parse_section_list(std::string_view list) {
  SectionSet out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      require_section(cur);
      out.insert(cur);
      cur.clear();
    }
  };
  for (char c : list) {
    if (c == ',' || c == ' ' || c == '\t' || c == '\n') flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

struct Document {
  std::string id;
  std::array<std::string, kSectionNames.size()> sections;
  std::optional<Instant> timestamp;
  std::map<std::string, std::string> fields;
  std::string url;

  const std::string& title() const { return sections[0]; }
  const std::string& section(std::string_view name) const { return sections[require_section(name)]; }

  std::optional<std::string> field(const std::string& name) const {
    auto it = fields.find(name);
    if (it == fields.end()) return std::nullopt;
    return it->second;
  }

  bool operator==(const Document&) const = default;
};

struct Provenance {
  std::string source;
  Instant ingested_at{};
};

class Corpus {
 public:
  Corpus() = default;
  Corpus(Language language, std::vector<Document> docs, Provenance provenance = {})
      : language_(language), documents_(std::move(docs)), provenance_(std::move(provenance)) {
    for (std::size_t i = 0; i < documents_.size(); ++i) {
      const auto& d = documents_[i];
      if (!by_id_.emplace(d.id, i).second) throw IngestionError("duplicate document id: " + d.id);
      if (!d.timestamp) all_timestamped_ = false;
    }
  }

  Language language() const { return language_; }
  const std::vector<Document>& documents() const { return documents_; }
  const Provenance& provenance() const { return provenance_; }
  std::size_t size() const { return documents_.size(); }
  bool empty() const { return documents_.empty(); }

  // False when at least one document lacks a timestamp; such corpora support
  // atemporal analysis only.
  bool temporal() const { return all_timestamped_; }

  const Document* find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &documents_[it->second];
  }

  const Document& at(std::string_view id) const {
    auto d = find(id);
    if (!d) throw LookupError("unknown document id: " + std::string(id));
    return *d;
  }

  // Sub-corpus holding `ids` in corpus order.
  Corpus subset(const std::set<std::string>& ids) const {
    std::vector<Document> docs;
    for (const auto& d : documents_)
      if (ids.count(d.id)) docs.push_back(d);
    return Corpus(language_, std::move(docs), provenance_);
  }

  bool same_content(const Corpus& other) const {
    return language_ == other.language_ && documents_ == other.documents_;
  }

 private:
  Language language_ = Language::english;
  std::vector<Document> documents_;
  Provenance provenance_;
  std::unordered_map<std::string, std::size_t> by_id_;
  bool all_timestamped_ = true;
};

inline Document parse_document_element(const xml::Element& el, Instant now) {
  Document doc;
  auto id = el.attribute("id");
  if (!id || id->empty()) throw IngestionError("document without id at " + el.where());
  doc.id = *id;
  auto url = el.attribute("url");
  if (!url || url->empty()) throw IngestionError("document " + doc.id + " has no url");
  doc.url = *url;
  if (auto ts = el.attribute("timestamp"); ts && !ts->empty()) {
    auto t = parse_iso8601(*ts);
    if (!t) throw IngestionError("unparseable timestamp in document " + doc.id + ": " + *ts);
    if (*t > now + std::chrono::hours(24))
      throw IngestionError("timestamp of document " + doc.id + " lies in the future: " + *ts);
    doc.timestamp = *t;
  }
  for (const auto& child : el.children) {
    if (auto idx = section_index(child.name)) {
      doc.sections[*idx] = child.text;
    } else if (child.name == "field") {
      auto name = child.attribute("name");
      if (!name || name->empty()) throw IngestionError("field without name in document " + doc.id);
      if (!doc.fields.emplace(*name, child.text).second)
        throw IngestionError("duplicate field '" + *name + "' in document " + doc.id);
    } else {
      if (!doc.fields.emplace(child.name, child.text).second)
        throw IngestionError("duplicate field '" + child.name + "' in document " + doc.id);
    }
  }
  return doc;
}

// Parses a `<corpus>` document. `language` overrides a missing attribute and
// must agree with a present one.
inline Corpus load_documents(std::string_view xml_text, std::optional<Language> language = std::nullopt,
                             std::string source = "<memory>",
                             Instant now = std::chrono::time_point_cast<std::chrono::seconds>(
                                 std::chrono::system_clock::now())) {
  xml::Element root = xml::parse(xml_text);
  if (root.name != "corpus") throw ParseError("expected <corpus> root element, found <" + root.name + ">", root.line, root.column);
  std::optional<Language> declared;
  if (auto l = root.attribute("language")) declared = parse_language(*l);
  if (declared && language && *declared != *language)
    throw IngestionError(std::string("corpus language ") + language_code(*declared) +
                         " conflicts with requested language " + language_code(*language));
  Language lang = declared ? *declared : language.value_or(Language::english);
  std::vector<Document> docs;
  for (const auto& child : root.children) {
    if (child.name != "document") throw IngestionError("unexpected element <" + child.name + "> at " + child.where());
    docs.push_back(parse_document_element(child, now));
  }
  return Corpus(lang, std::move(docs), Provenance{std::move(source), now});
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Corpus load_documents_file(const std::string& path, std::optional<Language> language = std::nullopt) {
  return load_documents(read_file(path), language, path);
}

inline xml::Element document_to_xml(const Document& d) {
  xml::Element el;
  el.name = "document";
  el.attributes.emplace_back("id", d.id);
  if (d.timestamp) el.attributes.emplace_back("timestamp", format_iso8601(*d.timestamp));
  el.attributes.emplace_back("url", d.url);
  for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
    if (d.sections[i].empty()) continue;
    xml::Element s;
    s.name = std::string(kSectionNames[i]);
    s.text = d.sections[i];
    el.children.push_back(std::move(s));
  }
  for (const auto& [k, v] : d.fields) {
    xml::Element f;
    f.name = "field";
    f.attributes.emplace_back("name", k);
    f.text = v;
    el.children.push_back(std::move(f));
  }
  return el;
}

inline std::string serialize_corpus(const Corpus& corpus) {
  xml::Element root;
  root.name = "corpus";
  root.attributes.emplace_back("language", language_code(corpus.language()));
  for (const auto& d : corpus.documents()) root.children.push_back(document_to_xml(d));
  return "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n" + xml::to_string(root);
}

// Newline-joined text of the requested sections in canonical order. Empty
// sections contribute nothing.
inline std::string select_sections(const Document& doc, const SectionSet& names) {
  for (const auto& n : names) require_section(n);
  std::string out;
  for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
    if (!names.count(std::string(kSectionNames[i])) || doc.sections[i].empty()) continue;
    if (!out.empty()) out += '\n';
    out += doc.sections[i];
  }
  return out;
}

struct Posting {
  std::string document;
  std::string section;
  std::vector<std::uint32_t> positions;

  std::size_t count() const { return positions.size(); }
  bool operator==(const Posting&) const = default;
};

class InvertedIndex {
 public:
  static constexpr int kFormatVersion = 1;

  InvertedIndex() = default;

  const std::string& analyzer() const { return analyzer_id_; }
  Language language() const { return language_; }
  const SectionSet& sections() const { return sections_; }
  const std::map<std::string, std::vector<Posting>>& postings() const { return postings_; }

  const std::vector<Posting>* find(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
  }

  // Documents holding the analyzed phrase as a contiguous token run in at
  // least one of `within` (all indexed sections when empty).
  std::set<std::string> match_phrase(std::string_view phrase, const SectionSet& within = {}) const {
    auto tokens = analyze(phrase, language_);
    if (tokens.empty()) throw QueryError("phrase is empty after analysis: '" + std::string(phrase) + "'");
    for (const auto& s : within) {
      require_section(s);
      if (!sections_.count(s)) throw ConfigError("section '" + s + "' is not indexed");
    }
    std::set<std::string> hits;
    const auto* first = find(tokens[0]);
    if (!first) return hits;
    using Key = std::pair<std::string, std::string>;
    std::vector<std::map<Key, const std::vector<std::uint32_t>*>> rest(tokens.size());
    for (std::size_t t = 1; t < tokens.size(); ++t) {
      const auto* ps = find(tokens[t]);
      if (!ps) return hits;
      for (const auto& p : *ps) rest[t][{p.document, p.section}] = &p.positions;
    }
    for (const auto& p : *first) {
      if (!within.empty() && !within.count(p.section)) continue;
      if (hits.count(p.document)) continue;
      Key key{p.document, p.section};
      for (auto start : p.positions) {
        bool ok = true;
        for (std::size_t t = 1; t < tokens.size() && ok; ++t) {
          auto it = rest[t].find(key);
          ok = it != rest[t].end() && std::binary_search(it->second->begin(), it->second->end(),
                                                         start + static_cast<std::uint32_t>(t));
        }
        if (ok) {
          hits.insert(p.document);
          break;
        }
      }
    }
    return hits;
  }

  nlohmann::json to_json() const {
    nlohmann::json postings = nlohmann::json::object();
    for (const auto& [term, list] : postings_) {
      auto arr = nlohmann::json::array();
      for (const auto& p : list)
        arr.push_back({{"doc", p.document}, {"section", p.section}, {"positions", p.positions}});
      postings[term] = std::move(arr);
    }
    return {{"format", "cordiet-index"},
            {"version", kFormatVersion},
            {"analyzer", analyzer_id_},
            {"language", language_code(language_)},
            {"sections", sections_},
            {"postings", std::move(postings)}};
  }

  std::string serialize() const { return to_json().dump(); }

  // Rejects indexes written by another format version or analyzer.
  static InvertedIndex from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "cordiet-index") throw ParseError("not a cordiet index");
    if (j.value("version", 0) != kFormatVersion)
      throw ConfigError("unsupported index version " + std::to_string(j.value("version", 0)));
    InvertedIndex idx;
    idx.language_ = parse_language(j.at("language").get<std::string>());
    idx.analyzer_id_ = j.at("analyzer").get<std::string>();
    if (idx.analyzer_id_ != analyzer_id(idx.language_))
      throw ConfigError("stale index: built with analyzer " + idx.analyzer_id_ + ", current is " +
                        analyzer_id(idx.language_));
    for (const auto& s : j.at("sections")) idx.sections_.insert(s.get<std::string>());
    for (const auto& [term, arr] : j.at("postings").items()) {
      auto& list = idx.postings_[term];
      for (const auto& p : arr)
        list.push_back({p.at("doc").get<std::string>(), p.at("section").get<std::string>(),
                        p.at("positions").get<std::vector<std::uint32_t>>()});
    }
    return idx;
  }

 private:
  friend InvertedIndex build_index(const Corpus&, const SectionSet&);

  std::string analyzer_id_;
  Language language_ = Language::english;
  SectionSet sections_;
  std::map<std::string, std::vector<Posting>> postings_;
};

// Postings list the documents in corpus order and sections in canonical order.
inline InvertedIndex build_index(const Corpus& corpus, const SectionSet& sections) {
  for (const auto& s : sections) require_section(s);
  InvertedIndex idx;
  idx.language_ = corpus.language();
  idx.analyzer_id_ = analyzer_id(corpus.language());
  idx.sections_ = sections;
  Analyzer analyzer(corpus.language());
  for (const auto& doc : corpus.documents()) {
    for (std::size_t si = 0; si < kSectionNames.size(); ++si) {
      std::string name(kSectionNames[si]);
      if (!sections.count(name)) continue;
      auto tokens = analyzer(doc.sections[si]);
      std::map<std::string, std::vector<std::uint32_t>> local;
      for (std::size_t pos = 0; pos < tokens.size(); ++pos)
        local[tokens[pos]].push_back(static_cast<std::uint32_t>(pos));
      for (auto& [term, positions] : local) idx.postings_[term].push_back({doc.id, name, std::move(positions)});
    }
  }
  return idx;
}

inline std::set<std::string> match_phrase(const InvertedIndex& index, std::string_view phrase) {
  return index.match_phrase(phrase);
}

}  // namespace cordiet
