#pragma once

// Concept enumeration, lattice construction and lattice export.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/bitset.hpp"
#include "cordiet/context.hpp"
#include "cordiet/error.hpp"

namespace cordiet {

inline constexpr std::size_t kDefaultConceptLimit = 1'000'000;

struct FormalConcept {
  Bitset extent;  // over objects
  Bitset intent;  // over attributes
  bool operator==(const FormalConcept&) const = default;
};

namespace detail {

class CloseByOne {
 public:
  CloseByOne(const FormalContext& ctx, std::size_t limit) : ctx_(ctx), limit_(limit) {}

  std::vector<FormalConcept> run() {
    Bitset intent0(ctx_.attribute_count(), true);
    Bitset extent0 = ctx_.derive_extent(intent0);
    intent0 = ctx_.derive_intent(extent0);
    generate(extent0, intent0, 0);
    return std::move(out_);
  }

 private:
  const FormalContext& ctx_;
  std::size_t limit_;
  std::vector<FormalConcept> out_;

  void generate(const Bitset& extent, const Bitset& intent, std::size_t from) {
    if (out_.size() >= limit_)
      throw ResourceError("concept count exceeds limit of " + std::to_string(limit_));
    out_.push_back({extent, intent});
    for (std::size_t j = from; j < ctx_.object_count(); ++j) {
      if (extent.test(j)) continue;
      Bitset child_intent = intent & ctx_.row(j);
      Bitset child_extent = ctx_.derive_extent(child_intent);
      // Canonicity: adding j must not pull in any object before j.
      if (child_extent.equal_below(extent, j)) generate(child_extent, child_intent, j + 1);
    }
  }
};

}  // namespace detail

// All formal concepts, sorted in lectic order of their extents (the empty-most
// extent first, the full object set last). Throws ResourceError when more than
// `limit` concepts exist; nothing is returned in that case.
inline std::vector<FormalConcept> compute_concepts(const FormalContext& ctx,
                                                   std::size_t limit = kDefaultConceptLimit) {
  auto concepts = detail::CloseByOne(ctx, limit).run();
  std::sort(concepts.begin(), concepts.end(),
            [](const FormalConcept& a, const FormalConcept& b) { return lectic_less(a.extent, b.extent); });
  return concepts;
}

struct LabelObject {
  std::size_t object;  // index into the context objects
  std::string id;
  std::string label;
  std::string url;
};

class ConceptLattice {
 public:
  const std::vector<FormalConcept>& concepts() const { return concepts_; }
  // (lower, upper) index pairs, sorted.
  const std::vector<std::pair<std::size_t, std::size_t>>& covering() const { return covering_; }
  const std::vector<std::vector<LabelObject>>& own_objects() const { return own_objects_; }
  const std::vector<std::vector<std::string>>& own_attributes() const { return own_attributes_; }
  const std::vector<std::size_t>& layers() const { return layer_; }
  std::size_t top() const { return top_; }
  std::size_t bottom() const { return bottom_; }
  std::size_t size() const { return concepts_.size(); }
  const std::vector<std::string>& attribute_names() const { return attribute_names_; }

  // Index of the concept whose extent is exactly `extent`.
  std::optional<std::size_t> find(const Bitset& extent) const {
    auto it = by_extent_.find(extent);
    if (it == by_extent_.end()) return std::nullopt;
    return it->second;
  }

  // Object concept of object g: the smallest concept whose extent holds g.
  std::size_t object_concept(std::size_t g) const { return object_concept_.at(g); }

  std::vector<std::size_t> upper_covers(std::size_t i) const { return upper_[i]; }
  std::vector<std::size_t> lower_covers(std::size_t i) const { return lower_[i]; }

 private:
  friend ConceptLattice build_lattice(const FormalContext&, std::vector<FormalConcept>);

  std::vector<FormalConcept> concepts_;
  std::vector<std::pair<std::size_t, std::size_t>> covering_;
  std::vector<std::vector<std::size_t>> upper_, lower_;
  std::vector<std::vector<LabelObject>> own_objects_;
  std::vector<std::vector<std::string>> own_attributes_;
  std::vector<std::size_t> layer_;
  std::vector<std::size_t> object_concept_;
  std::vector<std::string> attribute_names_;
  std::unordered_map<Bitset, std::size_t, BitsetHash> by_extent_;
  std::size_t top_ = 0, bottom_ = 0;
};

// Upper covers are found by counting, for each concept (A, B), how often each
// closure (A + g)'' is reached over g outside A: it is a cover exactly when
// the count equals |(A + g)'' \ A|.
inline ConceptLattice build_lattice(const FormalContext& ctx, std::vector<FormalConcept> concepts) {
  ConceptLattice lat;
  lat.concepts_ = std::move(concepts);
  lat.attribute_names_ = ctx.attributes();
  const std::size_t n = lat.concepts_.size();
  if (n == 0) throw InternalError("empty concept list");
  for (std::size_t i = 0; i < n; ++i)
    if (!lat.by_extent_.emplace(lat.concepts_[i].extent, i).second)
      throw InternalError("duplicate extent in concept list");

  auto require = [&](const Bitset& extent) {
    auto i = lat.find(extent);
    if (!i) throw InternalError("concept list is not closed: missing extent of size " + std::to_string(extent.count()));
    return *i;
  };

  lat.upper_.assign(n, {});
  lat.lower_.assign(n, {});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = lat.concepts_[i];
    std::size_t base = c.extent.count();
    std::unordered_map<std::size_t, std::size_t> hits;
    for (std::size_t g = 0; g < ctx.object_count(); ++g) {
      if (c.extent.test(g)) continue;
      Bitset closure = ctx.derive_extent(c.intent & ctx.row(g));
      std::size_t j = require(closure);
      if (++hits[j] == closure.count() - base) {
        lat.upper_[i].push_back(j);
        lat.lower_[j].push_back(i);
        lat.covering_.emplace_back(i, j);
      }
    }
  }
  std::sort(lat.covering_.begin(), lat.covering_.end());
  for (auto& v : lat.upper_) std::sort(v.begin(), v.end());
  for (auto& v : lat.lower_) std::sort(v.begin(), v.end());

  lat.top_ = require(Bitset(ctx.object_count(), true));
  lat.bottom_ = require(ctx.derive_extent(Bitset(ctx.attribute_count(), true)));

  // Longest path from the top; extents shrink strictly along downward covers.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return lat.concepts_[a].extent.count() > lat.concepts_[b].extent.count();
  });
  lat.layer_.assign(n, 0);
  for (std::size_t i : order)
    for (std::size_t lower : lat.lower_[i]) lat.layer_[lower] = std::max(lat.layer_[lower], lat.layer_[i] + 1);

  lat.own_objects_.assign(n, {});
  lat.own_attributes_.assign(n, {});
  lat.object_concept_.resize(ctx.object_count());
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    Bitset single(ctx.object_count());
    single.set(g);
    std::size_t i = require(ctx.close_extent(single));
    lat.object_concept_[g] = i;
    const auto& o = ctx.objects()[g];
    lat.own_objects_[i].push_back({g, o.id, o.label, o.url});
  }
  for (std::size_t m = 0; m < ctx.attribute_count(); ++m)
    lat.own_attributes_[require(ctx.column(m))].push_back(ctx.attributes()[m]);
  return lat;
}

inline ConceptLattice build_lattice(const FormalContext& ctx) { return build_lattice(ctx, compute_concepts(ctx)); }

inline nlohmann::json lattice_to_json(const ConceptLattice& lat) {
  auto nodes = nlohmann::json::array();
  std::size_t layer_count = 0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    const auto& c = lat.concepts()[i];
    auto objs = nlohmann::json::array();
    for (const auto& o : lat.own_objects()[i]) objs.push_back({{"id", o.id}, {"label", o.label}, {"url", o.url}});
    auto intent = nlohmann::json::array();
    c.intent.for_each([&](std::size_t m) { intent.push_back(lat.attribute_names()[m]); });
    nodes.push_back({{"id", i},
                     {"extentSize", c.extent.count()},
                     {"intentSize", c.intent.count()},
                     {"intent", intent},
                     {"layer", lat.layers()[i]},
                     {"ownObjects", objs},
                     {"ownAttributes", lat.own_attributes()[i]}});
    layer_count = std::max(layer_count, lat.layers()[i] + 1);
  }
  auto edges = nlohmann::json::array();
  for (auto [lower, upper] : lat.covering()) edges.push_back({{"lower", lower}, {"upper", upper}});
  std::vector<std::vector<std::size_t>> layers(layer_count);
  for (std::size_t i = 0; i < lat.size(); ++i) layers[lat.layers()[i]].push_back(i);
  return {{"format", "cordiet-lattice"},
          {"nodes", nodes},
          {"edges", edges},
          {"layers", layers},
          {"top", lat.top()},
          {"bottom", lat.bottom()}};
}

namespace detail {

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline std::string lattice_to_dot(const ConceptLattice& lat) {
  std::string out = "digraph lattice {\n  rankdir=BT;\n  node [shape=box];\n";
  for (std::size_t i = 0; i < lat.size(); ++i) {
    std::string attrs, objs;
    for (const auto& a : lat.own_attributes()[i]) attrs += (attrs.empty() ? "" : ", ") + a;
    for (const auto& o : lat.own_objects()[i]) objs += (objs.empty() ? "" : ", ") + o.id;
    out += "  c" + std::to_string(i) + " [label=\"" + detail::dot_escape(attrs) + "\\n" + detail::dot_escape(objs) +
           "\"";
    if (lat.own_objects()[i].size() == 1 && !lat.own_objects()[i][0].url.empty())
      out += ", URL=\"" + detail::dot_escape(lat.own_objects()[i][0].url) + "\"";
    out += "];\n";
  }
  for (auto [lower, upper] : lat.covering())
    out += "  c" + std::to_string(lower) + " -> c" + std::to_string(upper) + ";\n";
  out += "}\n";
  return out;
}

inline std::string export_lattice(const ConceptLattice& lat, std::string_view format) {
  if (format == "json") return lattice_to_json(lat).dump(2);
  if (format == "dot") return lattice_to_dot(lat);
  throw ConfigError("unknown lattice export format: " + std::string(format));
}

// Optional pre-pass: merges objects with identical rows and attributes with
// identical columns (first occurrence kept, merged ids appended to its label).
inline FormalContext clarify(const FormalContext& ctx) {
  std::vector<std::size_t> keep_g, keep_m;
  std::vector<ContextObject> objs;
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    bool dup = false;
    for (std::size_t k = 0; k < keep_g.size(); ++k) {
      if (ctx.row(keep_g[k]) == ctx.row(g)) {
        objs[k].label += ", " + ctx.objects()[g].id;
        dup = true;
        break;
      }
    }
    if (!dup) {
      keep_g.push_back(g);
      objs.push_back(ctx.objects()[g]);
    }
  }
  std::vector<std::string> attrs;
  for (std::size_t m = 0; m < ctx.attribute_count(); ++m) {
    bool dup = false;
    for (std::size_t k : keep_m)
      if (ctx.column(k) == ctx.column(m)) dup = true;
    if (!dup) {
      keep_m.push_back(m);
      attrs.push_back(ctx.attributes()[m]);
    }
  }
  std::vector<Bitset> rows;
  for (std::size_t g : keep_g) {
    Bitset row(keep_m.size());
    for (std::size_t k = 0; k < keep_m.size(); ++k)
      if (ctx.incidence(g, keep_m[k])) row.set(k);
    rows.push_back(std::move(row));
  }
  return FormalContext(std::move(objs), std::move(attrs), std::move(rows));
}

}  // namespace cordiet
