#pragma once

// Formal contexts (the cross table), derivation operators and attribute
// clustering.

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/bitset.hpp"
#include "cordiet/corpus.hpp"
#include "cordiet/error.hpp"
#include "cordiet/ontology.hpp"

namespace cordiet {

struct ContextObject {
  std::string id;
  std::string label;
  std::string url;
  bool operator==(const ContextObject&) const = default;
};

// Incidence is kept twice: packed rows (object -> attributes) and packed
// columns (attribute -> objects), so both derivation operators are word-wise
// intersections.
class FormalContext {
 public:
  FormalContext() = default;

  FormalContext(std::vector<ContextObject> objects, std::vector<std::string> attributes, std::vector<Bitset> rows)
      : objects_(std::move(objects)), attributes_(std::move(attributes)), rows_(std::move(rows)) {
    if (rows_.size() != objects_.size()) throw InternalError("incidence row count does not match object count");
    for (std::size_t g = 0; g < objects_.size(); ++g) {
      if (rows_[g].size() != attributes_.size()) throw InternalError("incidence row width does not match attribute count");
      if (!object_ix_.emplace(objects_[g].id, g).second) throw ConfigError("duplicate object id: " + objects_[g].id);
    }
    for (std::size_t m = 0; m < attributes_.size(); ++m)
      if (!attribute_ix_.emplace(attributes_[m], m).second) throw ConfigError("duplicate attribute name: " + attributes_[m]);
    cols_.assign(attributes_.size(), Bitset(objects_.size()));
    for (std::size_t g = 0; g < objects_.size(); ++g) rows_[g].for_each([&](std::size_t m) { cols_[m].set(g); });
  }

  // Builds from a 0/1 matrix; objects and attributes get generated names.
  static FormalContext from_matrix(const std::vector<std::vector<int>>& matrix, std::size_t attribute_count) {
    std::vector<ContextObject> objs;
    std::vector<std::string> attrs;
    std::vector<Bitset> rows;
    for (std::size_t m = 0; m < attribute_count; ++m) attrs.push_back("m" + std::to_string(m));
    for (std::size_t g = 0; g < matrix.size(); ++g) {
      objs.push_back({"g" + std::to_string(g), "g" + std::to_string(g), ""});
      Bitset row(attribute_count);
      for (std::size_t m = 0; m < attribute_count; ++m)
        if (matrix[g].at(m)) row.set(m);
      rows.push_back(std::move(row));
    }
    return FormalContext(std::move(objs), std::move(attrs), std::move(rows));
  }

  std::size_t object_count() const { return objects_.size(); }
  std::size_t attribute_count() const { return attributes_.size(); }
  const std::vector<ContextObject>& objects() const { return objects_; }
  const std::vector<std::string>& attributes() const { return attributes_; }
  const Bitset& row(std::size_t g) const { return rows_[g]; }
  const Bitset& column(std::size_t m) const { return cols_[m]; }
  bool incidence(std::size_t g, std::size_t m) const { return rows_[g].test(m); }

  std::size_t object_index(const std::string& id) const {
    auto it = object_ix_.find(id);
    if (it == object_ix_.end()) throw LookupError("unknown object: " + id);
    return it->second;
  }
  std::size_t attribute_index(const std::string& name) const {
    auto it = attribute_ix_.find(name);
    if (it == attribute_ix_.end()) throw LookupError("unknown attribute: " + name);
    return it->second;
  }
  bool has_object(const std::string& id) const { return object_ix_.count(id) > 0; }

  // B' : objects having every attribute of B.
  Bitset derive_extent(const Bitset& attrs) const {
    Bitset out(objects_.size(), true);
    attrs.for_each([&](std::size_t m) { out &= cols_[m]; });
    return out;
  }

  // A' : attributes shared by every object of A.
  Bitset derive_intent(const Bitset& objs) const {
    Bitset out(attributes_.size(), true);
    objs.for_each([&](std::size_t g) { out &= rows_[g]; });
    return out;
  }

  Bitset close_extent(const Bitset& objs) const { return derive_extent(derive_intent(objs)); }
  Bitset close_intent(const Bitset& attrs) const { return derive_intent(derive_extent(attrs)); }

  std::set<std::string> derive_extent(const std::set<std::string>& attribute_names) const {
    Bitset b(attributes_.size());
    for (const auto& n : attribute_names) b.set(attribute_index(n));
    std::set<std::string> out;
    derive_extent(b).for_each([&](std::size_t g) { out.insert(objects_[g].id); });
    return out;
  }

  std::set<std::string> derive_intent(const std::set<std::string>& object_ids) const {
    Bitset b(objects_.size());
    for (const auto& id : object_ids) b.set(object_index(id));
    std::set<std::string> out;
    derive_intent(b).for_each([&](std::size_t m) { out.insert(attributes_[m]); });
    return out;
  }

  bool operator==(const FormalContext& o) const {
    return objects_ == o.objects_ && attributes_ == o.attributes_ && rows_ == o.rows_;
  }

 private:
  std::vector<ContextObject> objects_;
  std::vector<std::string> attributes_;
  std::vector<Bitset> rows_;
  std::vector<Bitset> cols_;
  std::unordered_map<std::string, std::size_t> object_ix_;
  std::unordered_map<std::string, std::size_t> attribute_ix_;
};

// Objects are the corpus documents in order; the label is the title (or the
// id when untitled) and the URL is the document URL.
inline FormalContext build_context(const Corpus& corpus, const std::vector<std::string>& attribute_names,
                                   const Ontology& onto, const InvertedIndex& index) {
  Evaluator eval(onto, index);
  std::vector<const Attribute*> attrs;
  for (const auto& n : attribute_names) attrs.push_back(&onto.attribute(n));
  std::vector<ContextObject> objs;
  std::vector<Bitset> rows;
  for (const auto& d : corpus.documents()) {
    objs.push_back({d.id, d.title().empty() ? d.id : d.title(), d.url});
    Bitset row(attrs.size());
    for (std::size_t m = 0; m < attrs.size(); ++m) {
      try {
        if (eval(*attrs[m], d)) row.set(m);
      } catch (const Error& e) {
        throw EvaluationError("cannot evaluate attribute '" + attrs[m]->name + "' on object " + d.id + ": " + e.what());
      }
    }
    rows.push_back(std::move(row));
  }
  return FormalContext(std::move(objs), attribute_names, std::move(rows));
}

struct AttributeClustering {
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;  // group name -> members
};

enum class ClusterMode { any, all };

inline ClusterMode parse_cluster_mode(std::string_view s) {
  if (s == "any") return ClusterMode::any;
  if (s == "all") return ClusterMode::all;
  throw ConfigError("unknown clustering mode: " + std::string(s));
}

// One column per group: OR of the member columns for `any`, AND for `all`.
inline FormalContext cluster_attributes(const FormalContext& ctx, const AttributeClustering& clustering,
                                        ClusterMode mode = ClusterMode::any) {
  std::vector<int> seen(ctx.attribute_count(), 0);
  std::vector<std::string> names;
  for (const auto& [name, members] : clustering.groups) {
    if (members.empty()) throw ConfigError("attribute group '" + name + "' is empty");
    for (const auto& m : members) {
      std::size_t i;
      try {
        i = ctx.attribute_index(m);
      } catch (const LookupError&) {
        throw ConfigError("attribute group '" + name + "' names unknown attribute '" + m + "'");
      }
      if (seen[i]++) throw ConfigError("attribute '" + m + "' belongs to more than one group");
    }
    names.push_back(name);
  }
  for (std::size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw ConfigError("attribute '" + ctx.attributes()[i] + "' is not covered by any group");

  std::vector<Bitset> rows;
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    Bitset row(names.size());
    for (std::size_t k = 0; k < clustering.groups.size(); ++k) {
      const auto& members = clustering.groups[k].second;
      bool v = mode == ClusterMode::all;
      for (const auto& m : members) {
        bool x = ctx.incidence(g, ctx.attribute_index(m));
        v = mode == ClusterMode::all ? (v && x) : (v || x);
      }
      if (v) row.set(k);
    }
    rows.push_back(std::move(row));
  }
  return FormalContext(ctx.objects(), std::move(names), std::move(rows));
}

// Burmeister cross table. Object ids stand in for labels; URLs are dropped.
inline std::string to_burmeister(const FormalContext& ctx, const std::string& name = "") {
  std::ostringstream os;
  os << "B\n" << name << "\n" << ctx.object_count() << "\n" << ctx.attribute_count() << "\n\n";
  for (const auto& o : ctx.objects()) os << o.id << "\n";
  for (const auto& a : ctx.attributes()) os << a << "\n";
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    for (std::size_t m = 0; m < ctx.attribute_count(); ++m) os << (ctx.incidence(g, m) ? 'X' : '.');
    os << "\n";
  }
  return os.str();
}

inline FormalContext from_burmeister(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(is, line)) throw ParseError(std::string("Burmeister context truncated: missing ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };
  if (next("header") != "B") throw ParseError("Burmeister context must start with 'B'");
  next("name");
  std::size_t g_count, m_count;
  try {
    g_count = std::stoul(next("object count"));
    m_count = std::stoul(next("attribute count"));
  } catch (const std::logic_error&) {
    throw ParseError("bad object/attribute count in Burmeister context");
  }
  std::string l = next("blank line");
  std::vector<ContextObject> objs;
  std::vector<std::string> attrs;
  bool pending = !l.empty();  // tolerate a missing blank line
  for (std::size_t i = 0; i < g_count; ++i) {
    std::string id = pending ? l : next("object name");
    pending = false;
    objs.push_back({id, id, ""});
  }
  for (std::size_t i = 0; i < m_count; ++i) attrs.push_back(next("attribute name"));
  std::vector<Bitset> rows;
  for (std::size_t g = 0; g < g_count; ++g) {
    std::string r = next("incidence row");
    if (r.size() != m_count) throw ParseError("incidence row " + std::to_string(g + 1) + " has wrong width");
    Bitset row(m_count);
    for (std::size_t m = 0; m < m_count; ++m) {
      if (r[m] == 'X' || r[m] == 'x') row.set(m);
      else if (r[m] != '.') throw ParseError("incidence row " + std::to_string(g + 1) + " has invalid character");
    }
    rows.push_back(std::move(row));
  }
  return FormalContext(std::move(objs), std::move(attrs), std::move(rows));
}

inline nlohmann::json context_to_json(const FormalContext& ctx) {
  auto objs = nlohmann::json::array();
  for (const auto& o : ctx.objects()) objs.push_back({{"id", o.id}, {"label", o.label}, {"url", o.url}});
  auto rows = nlohmann::json::array();
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    std::string r;
    for (std::size_t m = 0; m < ctx.attribute_count(); ++m) r.push_back(ctx.incidence(g, m) ? 'X' : '.');
    rows.push_back(r);
  }
  return {{"format", "cordiet-context"}, {"objects", objs}, {"attributes", ctx.attributes()}, {"incidence", rows}};
}

inline FormalContext context_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "cordiet-context") throw ParseError("not a cordiet context");
  std::vector<ContextObject> objs;
  for (const auto& o : j.at("objects"))
    objs.push_back({o.at("id").get<std::string>(), o.value("label", o.at("id").get<std::string>()), o.value("url", "")});
  auto attrs = j.at("attributes").get<std::vector<std::string>>();
  std::vector<Bitset> rows;
  const auto& inc = j.at("incidence");
  if (inc.size() != objs.size()) throw ParseError("incidence has wrong number of rows");
  for (const auto& r : inc) {
    auto s = r.get<std::string>();
    if (s.size() != attrs.size()) throw ParseError("incidence row has wrong width");
    Bitset row(attrs.size());
    for (std::size_t m = 0; m < s.size(); ++m) {
      if (s[m] == 'X') row.set(m);
      else if (s[m] != '.') throw ParseError("incidence row has invalid character");
    }
    rows.push_back(std::move(row));
  }
  return FormalContext(std::move(objs), std::move(attrs), std::move(rows));
}

// Reads either the JSON form or the Burmeister form.
inline FormalContext parse_context(const std::string& text) {
  auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("context JSON: ") + e.what());
    }
    return context_from_json(j);
  }
  return from_burmeister(text);
}

}  // namespace cordiet
