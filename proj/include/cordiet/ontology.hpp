#pragma once

// Layered attribute ontology: search terms grouped into term clusters,
// text-mining / temporal / compound attributes, object-cluster rules and
// segmentation rules, all parsed from XML and evaluated against documents.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "cordiet/corpus.hpp"
#include "cordiet/error.hpp"
#include "cordiet/timeutil.hpp"
#include "cordiet/xml.hpp"

namespace cordiet {

inline constexpr int kMaxExpressionDepth = 32;

struct SearchTerm {
  std::string phrase;
  std::string notes;
};

struct TermCluster {
  std::string name;
  std::vector<SearchTerm> terms;
};

// Boolean expression over attribute names.
struct Expr {
  enum class Op { ref, all_of, any_of, negate };
  Op op = Op::ref;
  std::string name;  // for Op::ref
  std::vector<Expr> operands;

  static Expr ref(std::string n) { return {Op::ref, std::move(n), {}}; }
  static Expr all_of(std::vector<Expr> xs) { return {Op::all_of, {}, std::move(xs)}; }
  static Expr any_of(std::vector<Expr> xs) { return {Op::any_of, {}, std::move(xs)}; }
  static Expr negate(Expr x) { return {Op::negate, {}, {std::move(x)}}; }

  void collect_refs(std::vector<std::string>& out) const {
    if (op == Op::ref) out.push_back(name);
    for (const auto& o : operands) o.collect_refs(out);
  }
};

// Half-open interval [from, to).
struct TimeWindow {
  Instant from;
  Instant to;
  bool contains(Instant t) const { return from <= t && t < to; }
};

// Weekday set (0 = Sunday) and/or hour-of-day range [first, last) which wraps
// past midnight when first > last. Unset parts always match.
struct PeriodicPredicate {
  std::optional<std::set<unsigned>> weekdays;
  std::optional<std::pair<int, int>> hours;

  bool contains(Instant t) const {
    if (weekdays && !weekdays->count(weekday_index(t))) return false;
    if (hours) {
      int h = hour_of_day(t);
      auto [a, b] = *hours;
      bool in = a <= b ? (h >= a && h < b) : (h >= a || h < b);
      if (!in) return false;
    }
    return true;
  }
};

struct TextMiningAttribute {
  std::string cluster;
  SectionSet sections;  // empty: every indexed section
};

struct TemporalAttribute {
  std::variant<TimeWindow, PeriodicPredicate> predicate;
};

struct CompoundAttribute {
  Expr expr;
};

struct Attribute {
  std::string name;
  std::variant<TextMiningAttribute, TemporalAttribute, CompoundAttribute> definition;

  const char* kind() const {
    switch (definition.index()) {
      case 0: return "textmining";
      case 1: return "temporal";
      default: return "compound";
    }
  }
};

enum class MissingKeyPolicy { skip, own_group, error };

struct ObjectClusterRule {
  std::string name;
  // Exactly one of the two key sources is set.
  std::optional<std::string> field;
  std::optional<Granularity> time_granularity;
  MissingKeyPolicy missing = MissingKeyPolicy::skip;

  std::optional<std::string> key_of(const Document& d) const {
    if (field) return d.field(*field);
    if (d.timestamp) return format_iso8601(truncate(*d.timestamp, *time_granularity));
    return std::nullopt;
  }

  std::string key_spec() const {
    return field ? "field:" + *field : std::string("timestamp:") + to_string(*time_granularity);
  }
};

struct SegmentInterval {
  Instant from;
  Instant to;
  std::string label;
};

struct SegmentationRule {
  std::string name;
  std::variant<Expr, std::vector<SegmentInterval>> predicate;
};

class Ontology {
 public:
  const std::vector<TermCluster>& clusters() const { return clusters_; }
  const std::vector<Attribute>& attributes() const { return attributes_; }
  const std::vector<ObjectClusterRule>& object_cluster_rules() const { return object_rules_; }
  const std::vector<SegmentationRule>& segmentation_rules() const { return segmentations_; }

  const TermCluster& cluster(const std::string& name) const { return lookup(clusters_, cluster_ix_, name, "cluster"); }
  const Attribute& attribute(const std::string& name) const {
    return lookup(attributes_, attribute_ix_, name, "attribute");
  }
  const ObjectClusterRule& object_cluster_rule(const std::string& name) const {
    return lookup(object_rules_, object_rule_ix_, name, "object-cluster rule");
  }
  const SegmentationRule& segmentation_rule(const std::string& name) const {
    return lookup(segmentations_, segmentation_ix_, name, "segmentation rule");
  }
  bool has_attribute(const std::string& name) const { return attribute_ix_.count(name) > 0; }
  const ObjectClusterRule* find_object_cluster(const std::string& name) const {
    auto it = object_rule_ix_.find(name);
    return it == object_rule_ix_.end() ? nullptr : &object_rules_[it->second];
  }
  const SegmentationRule* find_segmentation(const std::string& name) const {
    auto it = segmentation_ix_.find(name);
    return it == segmentation_ix_.end() ? nullptr : &segmentations_[it->second];
  }

  void add_cluster(TermCluster c) { add(clusters_, cluster_ix_, std::move(c), "cluster"); }
  void add_attribute(Attribute a) { add(attributes_, attribute_ix_, std::move(a), "attribute"); }
  void add_object_cluster_rule(ObjectClusterRule r) { add(object_rules_, object_rule_ix_, std::move(r), "object-cluster rule"); }
  void add_segmentation_rule(SegmentationRule r) { add(segmentations_, segmentation_ix_, std::move(r), "segmentation rule"); }

  // Reference existence and acyclicity of compound attributes.
  void resolve() const {
    for (const auto& a : attributes_) {
      if (auto tm = std::get_if<TextMiningAttribute>(&a.definition)) {
        if (!cluster_ix_.count(tm->cluster))
          throw OntologyError("attribute '" + a.name + "' references unknown cluster '" + tm->cluster + "'");
      } else if (auto c = std::get_if<CompoundAttribute>(&a.definition)) {
        check_refs(c->expr, "attribute '" + a.name + "'");
      }
    }
    for (const auto& s : segmentations_)
      if (auto e = std::get_if<Expr>(&s.predicate)) check_refs(*e, "segmentation rule '" + s.name + "'");

    enum class Mark { none, active, done };
    std::unordered_map<std::string, Mark> mark;
    std::vector<std::string> stack;
    std::function<void(const std::string&)> visit = [&](const std::string& name) {
      auto& m = mark[name];
      if (m == Mark::done) return;
      if (m == Mark::active) {
        auto it = std::find(stack.begin(), stack.end(), name);
        std::string path;
        for (; it != stack.end(); ++it) path += *it + " -> ";
        throw OntologyError("cycle in compound attributes: " + path + name);
      }
      m = Mark::active;
      stack.push_back(name);
      const auto& a = attribute(name);
      if (auto c = std::get_if<CompoundAttribute>(&a.definition)) {
        std::vector<std::string> refs;
        c->expr.collect_refs(refs);
        for (const auto& r : refs) visit(r);
      }
      stack.pop_back();
      mark[name] = Mark::done;
    };
    for (const auto& a : attributes_) visit(a.name);
  }

  // Every search term must survive analysis in the corpus language.
  void validate_terms(Language language) const {
    Analyzer analyzer(language);
    for (const auto& c : clusters_)
      for (const auto& t : c.terms)
        if (analyzer(t.phrase).empty())
          throw OntologyError("search term '" + t.phrase + "' in cluster '" + c.name + "' is empty after analysis");
  }

 private:
  std::vector<TermCluster> clusters_;
  std::vector<Attribute> attributes_;
  std::vector<ObjectClusterRule> object_rules_;
  std::vector<SegmentationRule> segmentations_;
  std::unordered_map<std::string, std::size_t> cluster_ix_, attribute_ix_, object_rule_ix_, segmentation_ix_;

  template <class T>
  static void add(std::vector<T>& v, std::unordered_map<std::string, std::size_t>& ix, T item, const char* what) {
    if (!ix.emplace(item.name, v.size()).second)
      throw OntologyError(std::string("duplicate ") + what + " name: " + item.name);
    v.push_back(std::move(item));
  }

  template <class T>
  static const T& lookup(const std::vector<T>& v, const std::unordered_map<std::string, std::size_t>& ix,
                         const std::string& name, const char* what) {
    auto it = ix.find(name);
    if (it == ix.end()) throw LookupError(std::string("unknown ") + what + ": " + name);
    return v[it->second];
  }

  void check_refs(const Expr& e, const std::string& owner) const {
    std::vector<std::string> refs;
    e.collect_refs(refs);
    for (const auto& r : refs)
      if (!attribute_ix_.count(r)) throw OntologyError(owner + " references unknown attribute '" + r + "'");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string required_attr(const xml::Element& el, const char* key) {
  auto v = el.attribute(key);
  if (!v || v->empty())
    throw ParseError("<" + el.name + "> requires attribute '" + key + "'", el.line, el.column);
  return *v;
}

inline Instant required_instant(const xml::Element& el, const char* key) {
  auto raw = required_attr(el, key);
  auto t = parse_iso8601(raw);
  if (!t) throw ParseError("bad timestamp '" + raw + "' in <" + el.name + ">", el.line, el.column);
  return *t;
}

inline Expr parse_expr(const xml::Element& el, int depth) {
  if (depth > kMaxExpressionDepth)
    throw ParseError("expression nesting exceeds depth " + std::to_string(kMaxExpressionDepth), el.line, el.column);
  if (el.name == "ref") return Expr::ref(required_attr(el, "name"));
  std::vector<Expr> ops;
  for (const auto& c : el.children) ops.push_back(parse_expr(c, depth + 1));
  if (el.name == "and" || el.name == "or") {
    if (ops.empty()) throw ParseError("<" + el.name + "> needs at least one operand", el.line, el.column);
    return el.name == "and" ? Expr::all_of(std::move(ops)) : Expr::any_of(std::move(ops));
  }
  if (el.name == "not") {
    if (ops.size() != 1) throw ParseError("<not> needs exactly one operand", el.line, el.column);
    return Expr::negate(std::move(ops[0]));
  }
  throw ParseError("unknown expression element <" + el.name + ">", el.line, el.column);
}

inline const xml::Element& single_expression_child(const xml::Element& el) {
  if (el.children.size() != 1)
    throw ParseError("<" + el.name + "> must contain exactly one expression", el.line, el.column);
  return el.children[0];
}

inline std::set<unsigned> parse_weekdays(const std::string& list, const xml::Element& el) {
  static const char* names[] = {"sun", "mon", "tue", "wed", "thu", "fri", "sat"};
  std::set<unsigned> out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    std::string lower;
    for (char c : cur) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    bool found = false;
    for (unsigned i = 0; i < 7; ++i)
      if (lower.rfind(names[i], 0) == 0) {
        out.insert(i);
        found = true;
      }
    if (!found) throw ParseError("unknown weekday '" + cur + "'", el.line, el.column);
    cur.clear();
  };
  for (char c : list) {
    if (c == ',' || c == ' ') flush();
    else cur.push_back(c);
  }
  flush();
  return out;
}

inline std::pair<int, int> parse_hours(const std::string& spec, const xml::Element& el) {
  auto dash = spec.find('-');
  try {
    if (dash == std::string::npos) throw std::invalid_argument(spec);
    int a = std::stoi(spec.substr(0, dash));
    int b = std::stoi(spec.substr(dash + 1));
    if (a < 0 || a > 23 || b < 0 || b > 24) throw std::out_of_range(spec);
    return {a, b};
  } catch (const std::logic_error&) {
    throw ParseError("bad hour range '" + spec + "', expected H-H", el.line, el.column);
  }
}

inline Attribute parse_attribute(const xml::Element& el) {
  Attribute a;
  a.name = required_attr(el, "name");
  auto kind = required_attr(el, "kind");
  if (kind == "textmining") {
    TextMiningAttribute tm;
    const auto* ref = el.child("clusterRef");
    if (!ref) throw ParseError("text-mining attribute '" + a.name + "' needs <clusterRef>", el.line, el.column);
    tm.cluster = required_attr(*ref, "name");
    if (const auto* s = el.child("sections")) {
      try {
        tm.sections = parse_section_list(s->text);
      } catch (const ConfigError& e) {
        throw ParseError(e.what(), s->line, s->column);
      }
    }
    a.definition = std::move(tm);
  } else if (kind == "temporal") {
    TemporalAttribute t;
    if (const auto* w = el.child("window")) {
      TimeWindow win{required_instant(*w, "from"), required_instant(*w, "to")};
      if (!(win.from < win.to)) throw ParseError("empty time window in '" + a.name + "'", w->line, w->column);
      t.predicate = win;
    } else if (const auto* p = el.child("periodic")) {
      PeriodicPredicate pp;
      if (auto wd = p->attribute("weekdays")) pp.weekdays = parse_weekdays(*wd, *p);
      if (auto h = p->attribute("hours")) pp.hours = parse_hours(*h, *p);
      if (!pp.weekdays && !pp.hours)
        throw ParseError("<periodic> needs weekdays and/or hours", p->line, p->column);
      t.predicate = pp;
    } else {
      throw ParseError("temporal attribute '" + a.name + "' needs <window> or <periodic>", el.line, el.column);
    }
    a.definition = std::move(t);
  } else if (kind == "compound") {
    a.definition = CompoundAttribute{parse_expr(single_expression_child(el), 1)};
  } else {
    throw ParseError("unknown attribute kind '" + kind + "'", el.line, el.column);
  }
  return a;
}

inline ObjectClusterRule parse_object_cluster(const xml::Element& el) {
  ObjectClusterRule r;
  r.name = required_attr(el, "name");
  auto key = required_attr(el, "key");
  if (key.rfind("field:", 0) == 0 && key.size() > 6) {
    r.field = key.substr(6);
  } else if (key.rfind("timestamp:", 0) == 0) {
    try {
      r.time_granularity = parse_granularity(key.substr(10));
    } catch (const ConfigError& e) {
      throw ParseError(e.what(), el.line, el.column);
    }
  } else {
    throw ParseError("object-cluster key must be field:NAME or timestamp:GRANULARITY", el.line, el.column);
  }
  auto missing = el.attribute_or("missing", "skip");
  if (missing == "skip") r.missing = MissingKeyPolicy::skip;
  else if (missing == "own-group") r.missing = MissingKeyPolicy::own_group;
  else if (missing == "error") r.missing = MissingKeyPolicy::error;
  else throw ParseError("unknown missing-key policy '" + missing + "'", el.line, el.column);
  return r;
}

inline SegmentationRule parse_segmentation(const xml::Element& el) {
  SegmentationRule r;
  r.name = required_attr(el, "name");
  bool intervals = !el.children.empty() && el.children[0].name == "interval";
  if (intervals) {
    std::vector<SegmentInterval> list;
    for (const auto& c : el.children) {
      if (c.name != "interval") throw ParseError("cannot mix <interval> with expressions", c.line, c.column);
      SegmentInterval iv{required_instant(c, "from"), required_instant(c, "to"), ""};
      if (!(iv.from < iv.to)) throw ParseError("empty interval", c.line, c.column);
      iv.label = c.attribute_or("label", format_iso8601(iv.from) + ".." + format_iso8601(iv.to));
      list.push_back(std::move(iv));
    }
    r.predicate = std::move(list);
  } else {
    r.predicate = parse_expr(single_expression_child(el), 1);
  }
  return r;
}

}  // namespace detail

inline Ontology parse_ontology(std::string_view xml_text) {
  xml::Element root = xml::parse(xml_text);
  if (root.name != "ontology") throw ParseError("expected <ontology> root element", root.line, root.column);
  Ontology onto;
  for (const auto& el : root.children) {
    if (el.name == "cluster") {
      TermCluster c;
      c.name = detail::required_attr(el, "name");
      for (const auto& t : el.children) {
        if (t.name != "term") throw ParseError("unexpected <" + t.name + "> in cluster", t.line, t.column);
        auto phrase = detail::trim(t.text);
        if (phrase.empty()) throw ParseError("empty search term", t.line, t.column);
        c.terms.push_back({phrase, t.attribute_or("notes", "")});
      }
      if (c.terms.empty()) throw OntologyError("cluster '" + c.name + "' has no terms");
      onto.add_cluster(std::move(c));
    } else if (el.name == "attribute") {
      onto.add_attribute(detail::parse_attribute(el));
    } else if (el.name == "objectCluster") {
      onto.add_object_cluster_rule(detail::parse_object_cluster(el));
    } else if (el.name == "segmentation") {
      onto.add_segmentation_rule(detail::parse_segmentation(el));
    } else {
      throw ParseError("unexpected element <" + el.name + "> in ontology", el.line, el.column);
    }
  }
  onto.resolve();
  return onto;
}

namespace detail {

inline xml::Element expr_to_xml(const Expr& e) {
  xml::Element el;
  switch (e.op) {
    case Expr::Op::ref:
      el.name = "ref";
      el.attributes.emplace_back("name", e.name);
      return el;
    case Expr::Op::all_of: el.name = "and"; break;
    case Expr::Op::any_of: el.name = "or"; break;
    case Expr::Op::negate: el.name = "not"; break;
  }
  for (const auto& o : e.operands) el.children.push_back(expr_to_xml(o));
  return el;
}

inline std::string join(const std::set<std::string>& s, const char* sep) {
  std::string out;
  for (const auto& x : s) {
    if (!out.empty()) out += sep;
    out += x;
  }
  return out;
}

}  // namespace detail

inline std::string serialize_ontology(const Ontology& onto) {
  static const char* days[] = {"sun", "mon", "tue", "wed", "thu", "fri", "sat"};
  xml::Element root;
  root.name = "ontology";
  for (const auto& c : onto.clusters()) {
    xml::Element el{"cluster", {{"name", c.name}}, {}, {}, 0, 0};
    for (const auto& t : c.terms) {
      xml::Element te{"term", {}, {}, t.phrase, 0, 0};
      if (!t.notes.empty()) te.attributes.emplace_back("notes", t.notes);
      el.children.push_back(std::move(te));
    }
    root.children.push_back(std::move(el));
  }
  for (const auto& a : onto.attributes()) {
    xml::Element el{"attribute", {{"kind", a.kind()}, {"name", a.name}}, {}, {}, 0, 0};
    if (auto tm = std::get_if<TextMiningAttribute>(&a.definition)) {
      el.children.push_back({"clusterRef", {{"name", tm->cluster}}, {}, {}, 0, 0});
      if (!tm->sections.empty()) el.children.push_back({"sections", {}, {}, detail::join(tm->sections, " "), 0, 0});
    } else if (auto t = std::get_if<TemporalAttribute>(&a.definition)) {
      if (auto w = std::get_if<TimeWindow>(&t->predicate)) {
        el.children.push_back(
            {"window", {{"from", format_iso8601(w->from)}, {"to", format_iso8601(w->to)}}, {}, {}, 0, 0});
      } else {
        const auto& p = std::get<PeriodicPredicate>(t->predicate);
        xml::Element pe{"periodic", {}, {}, {}, 0, 0};
        if (p.weekdays) {
          std::string list;
          for (auto d : *p.weekdays) list += (list.empty() ? "" : ",") + std::string(days[d]);
          pe.attributes.emplace_back("weekdays", list);
        }
        if (p.hours)
          pe.attributes.emplace_back("hours", std::to_string(p.hours->first) + "-" + std::to_string(p.hours->second));
        el.children.push_back(std::move(pe));
      }
    } else {
      el.children.push_back(detail::expr_to_xml(std::get<CompoundAttribute>(a.definition).expr));
    }
    root.children.push_back(std::move(el));
  }
  for (const auto& r : onto.object_cluster_rules()) {
    static const char* policies[] = {"skip", "own-group", "error"};
    root.children.push_back({"objectCluster",
                             {{"name", r.name}, {"key", r.key_spec()}, {"missing", policies[static_cast<int>(r.missing)]}},
                             {}, {}, 0, 0});
  }
  for (const auto& s : onto.segmentation_rules()) {
    xml::Element el{"segmentation", {{"name", s.name}}, {}, {}, 0, 0};
    if (auto e = std::get_if<Expr>(&s.predicate)) {
      el.children.push_back(detail::expr_to_xml(*e));
    } else {
      for (const auto& iv : std::get<std::vector<SegmentInterval>>(s.predicate))
        el.children.push_back({"interval",
                               {{"from", format_iso8601(iv.from)}, {"to", format_iso8601(iv.to)}, {"label", iv.label}},
                               {}, {}, 0, 0});
    }
    root.children.push_back(std::move(el));
  }
  return xml::to_string(root);
}

// Evaluates attributes against documents of one indexed corpus. Term-match
// results are memoized per instance; an Evaluator must not be shared across
// threads, but separate instances over the same inputs are independent.
class Evaluator {
 public:
  Evaluator(const Ontology& onto, const InvertedIndex& index) : onto_(onto), index_(index) {}
  // holds references; temporaries would dangle
  Evaluator(const Ontology&, InvertedIndex&&) = delete;
  Evaluator(Ontology&&, const InvertedIndex&) = delete;
  Evaluator(Ontology&&, InvertedIndex&&) = delete;

  bool operator()(const Attribute& attr, const Document& doc) const {
    return std::visit([&](const auto& def) { return eval(attr, def, doc); }, attr.definition);
  }

  bool operator()(const std::string& attribute_name, const Document& doc) const {
    return (*this)(onto_.attribute(attribute_name), doc);
  }

  bool operator()(const Expr& e, const Document& doc) const {
    switch (e.op) {
      case Expr::Op::ref: return (*this)(e.name, doc);
      case Expr::Op::all_of:
        for (const auto& o : e.operands)
          if (!(*this)(o, doc)) return false;
        return true;
      case Expr::Op::any_of:
        for (const auto& o : e.operands)
          if ((*this)(o, doc)) return true;
        return false;
      case Expr::Op::negate: return !(*this)(e.operands[0], doc);
    }
    return false;
  }

  const Ontology& ontology() const { return onto_; }
  const InvertedIndex& index() const { return index_; }

 private:
  const Ontology& onto_;
  const InvertedIndex& index_;
  mutable std::map<std::pair<std::string, SectionSet>, std::set<std::string>> matches_;

  const std::set<std::string>& matches(const std::string& phrase, const SectionSet& sections) const {
    auto key = std::make_pair(phrase, sections);
    auto it = matches_.find(key);
    if (it == matches_.end()) it = matches_.emplace(key, index_.match_phrase(phrase, sections)).first;
    return it->second;
  }

  bool eval(const Attribute&, const TextMiningAttribute& tm, const Document& doc) const {
    for (const auto& term : onto_.cluster(tm.cluster).terms)
      if (matches(term.phrase, tm.sections).count(doc.id)) return true;
    return false;
  }

  bool eval(const Attribute& a, const TemporalAttribute& t, const Document& doc) const {
    if (!doc.timestamp)
      throw EvaluationError("temporal attribute '" + a.name + "' on document " + doc.id + " without timestamp");
    return std::visit([&](const auto& p) { return p.contains(*doc.timestamp); }, t.predicate);
  }

  bool eval(const Attribute&, const CompoundAttribute& c, const Document& doc) const {
    return (*this)(c.expr, doc);
  }
};

inline bool evaluate_attribute(const Ontology& onto, const Attribute& attr, const Document& doc,
                               const InvertedIndex& index) {
  return Evaluator(onto, index)(attr, doc);
}

struct Segment {
  std::string label;
  Corpus documents;
};

// Predicate rules give "match" and "non-match"; interval rules give one
// segment per interval (in rule order) followed by "outside". Empty segments
// are kept so labels are stable.
inline std::vector<Segment> apply_segmentation(const Corpus& corpus, const SegmentationRule& rule,
                                               const Ontology& onto, const InvertedIndex& index) {
  std::vector<std::set<std::string>> buckets;
  std::vector<std::string> labels;
  if (auto e = std::get_if<Expr>(&rule.predicate)) {
    labels = {"match", "non-match"};
    buckets.resize(2);
    Evaluator eval(onto, index);
    for (const auto& d : corpus.documents()) buckets[eval(*e, d) ? 0 : 1].insert(d.id);
  } else {
    const auto& intervals = std::get<std::vector<SegmentInterval>>(rule.predicate);
    std::vector<const SegmentInterval*> sorted;
    for (const auto& iv : intervals) sorted.push_back(&iv);
    std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->from < b->from; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
      if (sorted[i]->from < sorted[i - 1]->to)
        throw RuleError("segmentation rule '" + rule.name + "' has overlapping intervals '" + sorted[i - 1]->label +
                        "' and '" + sorted[i]->label + "'");
    for (const auto& iv : intervals) labels.push_back(iv.label);
    labels.push_back("outside");
    buckets.resize(labels.size());
    for (const auto& d : corpus.documents()) {
      if (!d.timestamp)
        throw EvaluationError("segmentation rule '" + rule.name + "' needs a timestamp on document " + d.id);
      std::size_t slot = intervals.size();
      for (std::size_t i = 0; i < intervals.size(); ++i)
        if (*d.timestamp >= intervals[i].from && *d.timestamp < intervals[i].to) slot = i;
      buckets[slot].insert(d.id);
    }
  }
  std::vector<Segment> out;
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], corpus.subset(buckets[i])});
  return out;
}

struct CompositeObject {
  std::string id;
  std::string key;
  std::vector<std::string> members;
  std::vector<std::string> member_urls;
};

struct ObjectClustering {
  std::vector<CompositeObject> composites;
  std::vector<std::string> skipped;
  std::vector<std::string> warnings;
};

inline std::string composite_url(const std::string& composite_id) { return "cordiet://composite/" + composite_id; }

// Composites appear in order of their first member. A document without a key
// under the own-group policy becomes a singleton keyed by its own id.
inline ObjectClustering apply_object_cluster(const Corpus& corpus, const ObjectClusterRule& rule) {
  ObjectClustering out;
  std::map<std::string, std::size_t> by_key;
  for (const auto& d : corpus.documents()) {
    auto key = rule.key_of(d);
    if (!key) {
      switch (rule.missing) {
        case MissingKeyPolicy::error:
          throw RuleError("object-cluster rule '" + rule.name + "' has no key (" + rule.key_spec() + ") for document " + d.id);
        case MissingKeyPolicy::skip:
          out.skipped.push_back(d.id);
          out.warnings.push_back("document " + d.id + " skipped by object-cluster rule '" + rule.name +
                                 "': missing " + rule.key_spec());
          continue;
        case MissingKeyPolicy::own_group:
          key = d.id;
          break;
      }
    }
    auto [it, inserted] = by_key.emplace(*key, out.composites.size());
    if (inserted) out.composites.push_back({rule.name + "/" + *key, *key, {}, {}});
    auto& c = out.composites[it->second];
    c.members.push_back(d.id);
    c.member_urls.push_back(d.url);
  }
  return out;
}

// Materializes composites as documents so they can be indexed and placed in
// a context: sections are the members' sections joined by newlines, the
// timestamp is the earliest member timestamp, and the member list is kept in
// the "members" field.
inline Corpus composite_corpus(const Corpus& corpus, const std::vector<CompositeObject>& composites) {
  std::vector<Document> docs;
  for (const auto& c : composites) {
    Document d;
    d.id = c.id;
    d.url = composite_url(c.id);
    bool all_stamped = true;
    std::string members;
    for (const auto& m : c.members) {
      const auto& src = corpus.at(m);
      for (std::size_t i = 0; i < kSectionNames.size(); ++i) {
        if (src.sections[i].empty()) continue;
        if (!d.sections[i].empty()) d.sections[i] += '\n';
        d.sections[i] += src.sections[i];
      }
      if (!src.timestamp) all_stamped = false;
      else if (!d.timestamp || *src.timestamp < *d.timestamp) d.timestamp = src.timestamp;
      members += (members.empty() ? "" : ",") + m;
    }
    if (!all_stamped) d.timestamp.reset();
    d.fields["members"] = members;
    d.fields["key"] = c.key;
    docs.push_back(std::move(d));
  }
  return Corpus(corpus.language(), std::move(docs), corpus.provenance());
}

}  // namespace cordiet
