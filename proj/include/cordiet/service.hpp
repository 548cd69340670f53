#pragma once

// Session-based orchestration of the four design-loop phases:
// start_investigation -> compose_artifact -> analyze_artifact -> deploy_knowledge.
// Sessions persist as one JSON file each in the data directory.

#include <array>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <regex>
#include <shared_mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/context.hpp"
#include "cordiet/corpus.hpp"
#include "cordiet/error.hpp"
#include "cordiet/esom.hpp"
#include "cordiet/fca.hpp"
#include "cordiet/hmm.hpp"
#include "cordiet/ontology.hpp"
#include "cordiet/tca.hpp"
#include "cordiet/timeutil.hpp"
#include "cordiet/xml.hpp"

namespace cordiet {

using nlohmann::json;

inline constexpr int kEnvelopeVersion = 1;
inline constexpr const char* kDataDirEnv = "CORDIET_DATA_DIR";

struct Endpoint {
  const char* method;
  const char* path;
  const char* summary;
};

inline constexpr std::array<Endpoint, 13> kEndpoints{{
    {"POST", "/sessions", "create a session from corpus and ontology XML"},
    {"GET", "/sessions", "list session ids"},
    {"GET", "/sessions/{id}", "session summary: artifacts, profiles, audit log"},
    {"POST", "/sessions/{id}/phases", "run a phase from an inline profile"},
    {"GET", "/sessions/{id}/artifacts", "list artifacts"},
    {"GET", "/sessions/{id}/artifacts/{name}", "artifact bytes; ?format=json|dot|xml|checkpoint"},
    {"GET", "/sessions/{id}/documents/{id}", "document or composite; ?format=json|xml"},
    {"GET", "/sessions/{id}/resolve", "document behind an artifact URL; ?url="},
    {"GET", "/sessions/{id}/profiles", "stored profiles"},
    {"PUT", "/sessions/{id}/profiles/{name}", "create or replace a stored profile"},
    {"DELETE", "/sessions/{id}/profiles/{name}", "delete a stored profile"},
    {"POST", "/sessions/{id}/profiles/{name}/run", "run a stored profile"},
    {"PUT", "/sessions/{id}/ontology", "replace the ontology (later phases use the new version)"},
}};

// ---------------------------------------------------------------- profiles

enum class Phase { start_investigation, compose_artifact, analyze_artifact, deploy_knowledge };

inline const char* to_string(Phase p) {
  switch (p) {
    case Phase::start_investigation: return "start_investigation";
    case Phase::compose_artifact: return "compose_artifact";
    case Phase::analyze_artifact: return "analyze_artifact";
    case Phase::deploy_knowledge: return "deploy_knowledge";
  }
  return "?";
}

inline Phase parse_phase(std::string_view s) {
  if (s == "start_investigation") return Phase::start_investigation;
  if (s == "compose_artifact") return Phase::compose_artifact;
  if (s == "analyze_artifact") return Phase::analyze_artifact;
  if (s == "deploy_knowledge") return Phase::deploy_knowledge;
  throw ConfigError("unknown phase: " + std::string(s));
}

struct Profile {
  Phase phase = Phase::start_investigation;
  json parameters = json::object();

  json to_json() const { return {{"phase", to_string(phase)}, {"parameters", parameters}}; }
};

namespace detail {

enum class T { string, number, integer, boolean, array, object };

struct Field {
  const char* name;
  T type;
  bool required = false;
};

inline bool type_ok(const json& v, T t) {
  switch (t) {
    case T::string: return v.is_string();
    case T::number: return v.is_number();
    case T::integer: return v.is_number_integer() || v.is_number_unsigned();
    case T::boolean: return v.is_boolean();
    case T::array: return v.is_array();
    case T::object: return v.is_object();
  }
  return false;
}

inline void check_schema(const json& params, std::initializer_list<Field> fields, const std::string& where) {
  if (!params.is_object()) throw ConfigError(where + ": parameters must be an object");
  for (const auto& [key, value] : params.items()) {
    auto it = std::find_if(fields.begin(), fields.end(), [&](const Field& f) { return key == f.name; });
    if (it == fields.end()) throw ConfigError(where + ": unknown parameter '" + key + "'");
    if (!type_ok(value, it->type)) throw ConfigError(where + ": parameter '" + key + "' has the wrong type");
  }
  for (const auto& f : fields)
    if (f.required && !params.contains(f.name)) throw ConfigError(where + ": missing parameter '" + f.name + "'");
}

}  // namespace detail

inline void validate_profile(const Profile& p) {
  using detail::Field;
  using detail::T;
  const auto& q = p.parameters;
  switch (p.phase) {
    case Phase::start_investigation:
      detail::check_schema(q,
                           {{"name", T::string},
                            {"attributes", T::array, true},
                            {"objects", T::array},
                            {"objectCluster", T::string},
                            {"segmentation", T::object},
                            {"attributeClustering", T::object}},
                           "start_investigation");
      if (q["attributes"].empty()) throw ConfigError("start_investigation: attributes must not be empty");
      if (q.contains("segmentation"))
        detail::check_schema(q["segmentation"], {{"rule", T::string, true}, {"segment", T::string, true}},
                             "start_investigation.segmentation");
      if (q.contains("attributeClustering"))
        detail::check_schema(q["attributeClustering"], {{"mode", T::string}, {"groups", T::object, true}},
                             "start_investigation.attributeClustering");
      return;
    case Phase::compose_artifact: {
      if (!q.is_object() || !q.contains("kind") || !q["kind"].is_string())
        throw ConfigError("compose_artifact: missing parameter 'kind'");
      auto kind = q["kind"].get<std::string>();
      if (kind == "fca")
        detail::check_schema(q, {{"kind", T::string}, {"name", T::string}, {"context", T::string}, {"limit", T::integer}},
                             "compose_artifact(fca)");
      else if (kind == "tca")
        detail::check_schema(q,
                             {{"kind", T::string},
                              {"name", T::string},
                              {"context", T::string},
                              {"entity", T::string, true},
                              {"granularity", T::string}},
                             "compose_artifact(tca)");
      else if (kind == "esom")
        detail::check_schema(q,
                             {{"kind", T::string},
                              {"name", T::string},
                              {"context", T::string},
                              {"rows", T::integer},
                              {"cols", T::integer},
                              {"topology", T::string},
                              {"seed", T::integer},
                              {"epochs", T::integer},
                              {"rateStart", T::number},
                              {"rateEnd", T::number},
                              {"radiusStart", T::number},
                              {"radiusEnd", T::number},
                              {"features", T::string},
                              {"initFromData", T::boolean}},
                             "compose_artifact(esom)");
      else if (kind == "hmm")
        detail::check_schema(q,
                             {{"kind", T::string},
                              {"name", T::string},
                              {"context", T::string},
                              {"mode", T::string},
                              {"entity", T::string, true},
                              {"field", T::string},
                              {"attributes", T::array},
                              {"groups", T::object},
                              {"symbols", T::array},
                              {"unmapped", T::string},
                              {"laplace", T::number},
                              {"states", T::integer},
                              {"seed", T::integer},
                              {"init", T::string},
                              {"tol", T::number},
                              {"maxIter", T::integer},
                              {"threshold", T::number}},
                             "compose_artifact(hmm)");
      else
        throw ConfigError("compose_artifact: unknown artifact kind '" + kind + "'");
      return;
    }
    case Phase::analyze_artifact:
      detail::check_schema(q, {{"name", T::string}, {"artifact", T::string}, {"topTerms", T::integer}},
                           "analyze_artifact");
      return;
    case Phase::deploy_knowledge:
      detail::check_schema(q, {{"name", T::string}, {"artifacts", T::array}, {"annotations", T::array}},
                           "deploy_knowledge");
      if (q.contains("annotations"))
        for (const auto& a : q["annotations"])
          detail::check_schema(a, {{"artifact", T::string, true}, {"target", T::string}, {"note", T::string, true}},
                               "deploy_knowledge.annotations");
      return;
  }
}

inline Profile profile_from_json(const json& j) {
  if (!j.is_object() || !j.contains("phase") || !j["phase"].is_string())
    throw ConfigError("profile needs a 'phase' string");
  for (const auto& [key, _] : j.items())
    if (key != "phase" && key != "parameters") throw ConfigError("profile has unknown key '" + key + "'");
  Profile p{parse_phase(j["phase"].get<std::string>()), j.value("parameters", json::object())};
  validate_profile(p);
  return p;
}

// 64-bit FNV-1a over the canonical (key-sorted, compact) JSON form.
inline std::string profile_hash(const Profile& p) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : p.to_json().dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- session

struct Artifact {
  std::string name;
  std::string kind;  // context, lattice, tracks, esom, hmm, report, bundle
  std::string json_payload;
  std::optional<std::string> dot_payload;
  std::optional<std::string> checkpoint;
  std::vector<std::string> warnings;
  // Inputs: the profile that produced it, the artifacts it read and the
  // ontology version in force.
  json profile;
  std::string profile_hash;
  std::vector<std::string> inputs;
  std::size_t ontology_version = 0;
};

struct AuditEntry {
  std::size_t sequence = 0;
  std::string phase;
  json profile;
  std::string profile_hash;
  std::string artifact;
  std::size_t ontology_version = 0;
  std::string started_at;
  std::string finished_at;
};

struct Session {
  std::string id;
  Language language = Language::english;
  std::string corpus_xml;
  std::vector<std::string> ontology_xml;  // versions, latest last
  Corpus corpus;
  Ontology ontology;
  InvertedIndex index;
  std::map<std::string, Artifact> artifacts;
  std::vector<std::string> artifact_order;
  std::map<std::string, Profile> profiles;
  std::vector<AuditEntry> audit;

  std::size_t ontology_version() const { return ontology_xml.size() - 1; }

  const Artifact& artifact(const std::string& name) const {
    auto it = artifacts.find(name);
    if (it == artifacts.end()) throw NotFoundError("unknown artifact: " + name);
    return it->second;
  }
};

inline Ontology load_ontology_checked(const std::string& xml_text, Language lang) {
  auto onto = parse_ontology(xml_text);
  onto.validate_terms(lang);
  return onto;
}

// Parses both inputs and builds the index over all sections before anything
// is kept, so a failing upload leaves no session behind.
inline Session create_session(std::string id, std::string corpus_xml, std::string ontology_xml,
                              std::optional<Language> language = std::nullopt) {
  Session s;
  s.id = std::move(id);
  s.corpus = load_documents(corpus_xml, language, "upload");
  s.language = s.corpus.language();
  s.ontology = load_ontology_checked(ontology_xml, s.language);
  s.index = build_index(s.corpus, all_sections());
  s.corpus_xml = std::move(corpus_xml);
  s.ontology_xml.push_back(std::move(ontology_xml));
  return s;
}

inline void replace_ontology(Session& s, std::string ontology_xml) {
  s.ontology = load_ontology_checked(ontology_xml, s.language);
  s.ontology_xml.push_back(std::move(ontology_xml));
}

namespace detail {

inline std::string now_iso() {
  return format_iso8601(std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()));
}

inline std::string param_string(const json& q, const char* key, const std::string& fallback) {
  return q.contains(key) ? q[key].get<std::string>() : fallback;
}

inline const Artifact& require_artifact(const Session& s, const std::string& name, const std::string& kind,
                                        const std::string& phase, const std::string& producer) {
  auto it = s.artifacts.find(name);
  if (it == s.artifacts.end())
    throw OrderingError(phase + " requires " + kind + " artifact '" + name + "'; run " + producer + " first");
  if (it->second.kind != kind)
    throw OrderingError(phase + " requires a " + kind + " artifact but '" + name + "' is a " + it->second.kind);
  return it->second;
}

inline json parse_payload(const Artifact& a) { return json::parse(a.json_payload); }

// Documents of the session corpus that stand behind the context objects:
// the objects themselves, or the members of composite objects.
inline Corpus documents_behind(const Session& s, const FormalContext& ctx) {
  std::set<std::string> ids;
  for (const auto& o : ctx.objects()) {
    if (s.corpus.find(o.id)) {
      ids.insert(o.id);
      continue;
    }
    auto slash = o.id.find('/');
    if (slash == std::string::npos) continue;
    auto rule = s.ontology.find_object_cluster(o.id.substr(0, slash));
    if (!rule) continue;
    for (const auto& c : apply_object_cluster(s.corpus, *rule).composites)
      if (c.id == o.id) ids.insert(c.members.begin(), c.members.end());
  }
  return s.corpus.subset(ids);
}

inline Artifact phase_context(const Session& s, const json& q) {
  Artifact a;
  a.kind = "context";
  Corpus objects = s.corpus;
  if (q.contains("segmentation")) {
    auto rule_name = q["segmentation"]["rule"].get<std::string>();
    auto label = q["segmentation"]["segment"].get<std::string>();
    const auto* rule = s.ontology.find_segmentation(rule_name);
    if (!rule) throw ConfigError("unknown segmentation rule: " + rule_name);
    auto segments = apply_segmentation(objects, *rule, s.ontology, s.index);
    auto it = std::find_if(segments.begin(), segments.end(), [&](const Segment& seg) { return seg.label == label; });
    if (it == segments.end()) {
      std::string known;
      for (const auto& seg : segments) known += (known.empty() ? "" : ", ") + seg.label;
      throw ConfigError("segmentation rule " + rule_name + " has no segment '" + label + "' (segments: " + known + ")");
    }
    objects = it->documents;
  }
  if (q.contains("objects")) {
    std::set<std::string> ids;
    for (const auto& id : q["objects"]) {
      auto sid = id.get<std::string>();
      if (!s.corpus.find(sid)) throw LookupError("unknown document id in objects: " + sid);
      ids.insert(sid);
    }
    objects = objects.subset(ids);
  }
  std::vector<std::string> attrs = q["attributes"].get<std::vector<std::string>>();
  FormalContext ctx;
  if (q.contains("objectCluster")) {
    auto rule_name = q["objectCluster"].get<std::string>();
    const auto* rule = s.ontology.find_object_cluster(rule_name);
    if (!rule) throw ConfigError("unknown object-cluster rule: " + rule_name);
    auto clustering = apply_object_cluster(objects, *rule);
    a.warnings = clustering.warnings;
    auto composites = composite_corpus(objects, clustering.composites);
    auto idx = build_index(composites, s.index.sections());
    ctx = build_context(composites, attrs, s.ontology, idx);
  } else {
    ctx = build_context(objects, attrs, s.ontology, s.index);
  }
  if (q.contains("attributeClustering")) {
    const auto& c = q["attributeClustering"];
    AttributeClustering clustering;
    for (const auto& [group, members] : c["groups"].items())
      clustering.groups.emplace_back(group, members.get<std::vector<std::string>>());
    ctx = cluster_attributes(ctx, clustering, parse_cluster_mode(param_string(c, "mode", "any")));
  }
  a.json_payload = context_to_json(ctx).dump(2);
  a.dot_payload = std::nullopt;
  return a;
}

inline Artifact phase_compose(const Session& s, const json& q, std::vector<std::string>& inputs) {
  auto kind = q["kind"].get<std::string>();
  auto context_name = param_string(q, "context", "context");
  const auto& ctx_art = require_artifact(s, context_name, "context", "compose_artifact", "start_investigation");
  inputs.push_back(context_name);
  auto ctx = context_from_json(parse_payload(ctx_art));
  Artifact a;
  if (kind == "fca") {
    a.kind = "lattice";
    std::size_t limit = q.value("limit", kDefaultConceptLimit);
    auto lat = build_lattice(ctx, compute_concepts(ctx, limit));
    a.json_payload = export_lattice(lat, "json");
    a.dot_payload = export_lattice(lat, "dot");
  } else if (kind == "tca") {
    a.kind = "tracks";
    auto rule_name = q["entity"].get<std::string>();
    const auto* rule = s.ontology.find_object_cluster(rule_name);
    if (!rule) throw ConfigError("unknown object-cluster rule: " + rule_name);
    auto gran = parse_granularity(param_string(q, "granularity", "day"));
    auto systems = build_time_system(documents_behind(s, ctx), *rule, gran);
    a.warnings = systems.warnings;
    auto lat = build_lattice(ctx);
    auto tracks = compute_life_tracks(systems.systems, lat, ctx);
    a.json_payload = export_tracks(lat, tracks);
    a.dot_payload = lattice_to_dot(lat);
  } else if (kind == "esom") {
    a.kind = "esom";
    TrainingSchedule sched;
    sched.epochs = q.value("epochs", sched.epochs);
    sched.rate_start = q.value("rateStart", sched.rate_start);
    sched.rate_end = q.value("rateEnd", sched.rate_end);
    std::size_t rows = q.value("rows", std::size_t{20});
    std::size_t cols = q.value("cols", std::size_t{30});
    sched.radius_start = q.value("radiusStart", std::min(8.0, static_cast<double>(std::max(rows, cols))));
    sched.radius_end = q.value("radiusEnd", std::min(sched.radius_start, 1.0));
    auto features = param_string(q, "features", "context");
    std::vector<FeatureVector> vectors;
    if (features == "context") vectors = context_vectors(ctx);
    else if (features == "terms") vectors = term_frequency_vectors(ctx, s.index);
    else throw ConfigError("unknown ESOM feature source: " + features);
    if (vectors.empty()) throw ConfigError("ESOM needs at least one object in the context");
    std::size_t dim = vectors[0].values.size();
    std::uint64_t seed = q.value("seed", std::uint64_t{1});
    std::optional<DataBounds> bounds;
    if (q.value("initFromData", true)) bounds = data_bounds(vectors);
    auto grid = init_grid(rows, cols, parse_topology(param_string(q, "topology", "toroid")), dim, seed, bounds);
    std::vector<double> trace;
    grid = train(grid, vectors, sched, &trace);
    auto j = map_to_json(grid, project(grid, vectors, context_labels(ctx)));
    j["quantizationError"] = trace;
    a.json_payload = j.dump(2);
    a.checkpoint = grid_checkpoint(grid).dump();
  } else {
    a.kind = "hmm";
    auto rule_name = q["entity"].get<std::string>();
    const auto* rule = s.ontology.find_object_cluster(rule_name);
    if (!rule) throw ConfigError("unknown object-cluster rule: " + rule_name);
    SymbolMap map;
    if (q.contains("field")) map.field = q["field"].get<std::string>();
    if (q.contains("attributes")) map.attributes = q["attributes"].get<std::vector<std::string>>();
    if (q.contains("groups")) map.groups = q["groups"].get<std::map<std::string, std::string>>();
    if (q.contains("symbols")) map.symbols = q["symbols"].get<std::vector<std::string>>();
    auto unmapped = param_string(q, "unmapped", "error");
    if (unmapped == "skip") map.unmapped = UnmappedPolicy::skip;
    else if (unmapped != "error") throw ConfigError("unknown unmapped policy: " + unmapped);
    auto log = sequences_from_corpus(documents_behind(s, ctx), *rule, map, &s.ontology, &s.index);
    a.warnings = log.warnings;
    std::vector<Sequence> seqs;
    for (const auto& e : log.sequences) seqs.push_back(e.symbols);
    std::size_t M = log.symbol_names.size();
    auto mode = param_string(q, "mode", "process");
    HmmModel model;
    std::vector<double> trace;
    if (mode == "process") {
      model = fit_process_model(seqs, M, {q.value("laplace", 0.0)});
    } else if (mode == "baum_welch") {
      std::size_t N = q.value("states", M);
      std::uint64_t seed = q.value("seed", std::uint64_t{1});
      auto init_kind = param_string(q, "init", "random");
      HmmInit init = SeededRandomInit{seed};
      if (init_kind == "uniform") init = UniformPerturbedInit{seed};
      else if (init_kind != "random") throw ConfigError("unknown HMM init: " + init_kind);
      auto r = baum_welch(seqs, N, M, init, {q.value("tol", 1e-6), q.value("maxIter", std::size_t{200})});
      model = std::move(r.model);
      trace = std::move(r.trace);
    } else {
      throw ConfigError("unknown HMM mode: " + mode);
    }
    model.symbol_names = log.symbol_names;
    auto graph = export_hmm_graph(model, q.value("threshold", 0.0));
    a.json_payload = graph.json;
    a.dot_payload = graph.dot;
    a.checkpoint = model_checkpoint(model, trace).dump();
  }
  return a;
}

inline json artifact_summary(const Artifact& a) {
  json j{{"name", a.name}, {"kind", a.kind}};
  auto p = parse_payload(a);
  if (a.kind == "context") {
    std::size_t crosses = 0;
    for (const auto& r : p["incidence"]) crosses += std::count(r.get<std::string>().begin(), r.get<std::string>().end(), 'X');
    j["objects"] = p["objects"].size();
    j["attributes"] = p["attributes"].size();
    j["incidences"] = crosses;
  } else if (a.kind == "lattice" || a.kind == "tracks") {
    j["concepts"] = p["nodes"].size();
    j["edges"] = p["edges"].size();
    j["layers"] = p["layers"].size();
    if (a.kind == "tracks") {
      std::size_t steps = 0;
      for (const auto& t : p["trackList"]) steps += t["steps"].size();
      j["entities"] = p["trackList"].size();
      j["transitions"] = steps;
    }
  } else if (a.kind == "esom") {
    j["rows"] = p["rows"];
    j["cols"] = p["cols"];
    j["labels"] = p["labels"].size();
    j["finalQuantizationError"] = p["quantizationError"].back();
  } else if (a.kind == "hmm") {
    j["states"] = p["nodes"].size();
    j["edges"] = p["edges"].size();
  }
  if (!a.warnings.empty()) j["warnings"] = a.warnings;
  return j;
}

// Per search term: the documents it matches; per cluster: their union. A
// term matching much more than its siblings is a specificity suspect.
inline Artifact phase_analyze(const Session& s, const json& q, std::vector<std::string>& inputs) {
  std::vector<std::string> targets;
  if (q.contains("artifact")) {
    auto name = q["artifact"].get<std::string>();
    if (!s.artifacts.count(name))
      throw OrderingError("analyze_artifact requires artifact '" + name + "'; run compose_artifact first");
    targets.push_back(name);
  } else {
    for (const auto& name : s.artifact_order) {
      const auto& k = s.artifacts.at(name).kind;
      if (k == "lattice" || k == "tracks" || k == "esom" || k == "hmm") targets.push_back(name);
    }
    if (targets.empty())
      throw OrderingError("analyze_artifact requires a composed artifact; run compose_artifact first");
  }
  inputs = targets;
  auto clusters = json::array();
  for (const auto& cluster : s.ontology.clusters()) {
    auto terms = json::array();
    std::set<std::string> all;
    for (const auto& t : cluster.terms) {
      auto hits = s.index.match_phrase(t.phrase);
      auto docs = json::array();
      for (const auto& id : hits) docs.push_back({{"id", id}, {"url", s.corpus.at(id).url}});
      all.insert(hits.begin(), hits.end());
      terms.push_back({{"phrase", t.phrase}, {"documentCount", hits.size()}, {"documents", docs}});
    }
    clusters.push_back({{"cluster", cluster.name}, {"documentCount", all.size()}, {"terms", terms}});
  }
  struct TermStat {
    std::string term;
    std::size_t docs;
    std::size_t occurrences;
  };
  std::vector<TermStat> stats;
  for (const auto& [term, postings] : s.index.postings()) {
    std::set<std::string> docs;
    std::size_t occ = 0;
    for (const auto& p : postings) {
      docs.insert(p.document);
      occ += p.count();
    }
    stats.push_back({term, docs.size(), occ});
  }
  std::stable_sort(stats.begin(), stats.end(), [](const TermStat& a, const TermStat& b) {
    return a.docs != b.docs ? a.docs > b.docs : a.occurrences > b.occurrences;
  });
  std::size_t top = q.value("topTerms", std::size_t{20});
  auto top_terms = json::array();
  for (std::size_t i = 0; i < std::min(top, stats.size()); ++i)
    top_terms.push_back(
        {{"term", stats[i].term}, {"documentFrequency", stats[i].docs}, {"occurrences", stats[i].occurrences}});
  auto summaries = json::array();
  for (const auto& name : targets) summaries.push_back(artifact_summary(s.artifacts.at(name)));
  Artifact a;
  a.kind = "report";
  a.json_payload = json{{"format", "cordiet-report"},
                        {"termClusters", clusters},
                        {"topTerms", top_terms},
                        {"artifacts", summaries}}
                       .dump(2);
  return a;
}

inline Artifact phase_deploy(const Session& s, const json& q, std::vector<std::string>& inputs) {
  bool has_report = std::any_of(s.artifacts.begin(), s.artifacts.end(),
                                [](const auto& kv) { return kv.second.kind == "report"; });
  if (!has_report) throw OrderingError("deploy_knowledge requires a report artifact; run analyze_artifact first");
  std::vector<std::string> names;
  if (q.contains("artifacts")) {
    for (const auto& n : q["artifacts"]) {
      auto name = n.get<std::string>();
      if (!s.artifacts.count(name)) throw NotFoundError("unknown artifact: " + name);
      names.push_back(name);
    }
  } else {
    for (const auto& name : s.artifact_order)
      if (s.artifacts.at(name).kind != "bundle") names.push_back(name);
  }
  inputs = names;
  auto annotations = json::array();
  if (q.contains("annotations"))
    for (const auto& an : q["annotations"]) {
      auto target = an["artifact"].get<std::string>();
      if (std::find(names.begin(), names.end(), target) == names.end())
        throw ConfigError("annotation refers to artifact '" + target + "' outside the bundle");
      annotations.push_back(an);
    }
  auto arts = json::array();
  for (const auto& name : names) {
    const auto& src = s.artifacts.at(name);
    arts.push_back({{"name", name}, {"kind", src.kind}, {"profileHash", src.profile_hash}, {"payload", parse_payload(src)}});
  }
  Artifact a;
  a.kind = "bundle";
  a.json_payload = json{{"format", "cordiet-bundle"}, {"artifacts", arts}, {"annotations", annotations}}.dump(2);
  return a;
}

inline std::string default_name(Phase phase, const json& q) {
  switch (phase) {
    case Phase::start_investigation: return "context";
    case Phase::compose_artifact: return q["kind"].get<std::string>();
    case Phase::analyze_artifact: return "report";
    case Phase::deploy_knowledge: return "bundle";
  }
  return "artifact";
}

}  // namespace detail

// Runs one phase and records the resulting artifact with its inputs.
// Artifact names are unique per session and artifacts are never replaced.
inline const Artifact& run_phase(Session& s, const Profile& profile) {
  validate_profile(profile);
  const auto& q = profile.parameters;
  auto name = detail::param_string(q, "name", detail::default_name(profile.phase, q));
  if (name.empty()) throw ConfigError("artifact name must not be empty");
  if (s.artifacts.count(name)) throw ConfigError("artifact already exists: " + name);
  AuditEntry entry;
  entry.started_at = detail::now_iso();
  std::vector<std::string> inputs;
  Artifact a;
  switch (profile.phase) {
    case Phase::start_investigation: a = detail::phase_context(s, q); break;
    case Phase::compose_artifact: a = detail::phase_compose(s, q, inputs); break;
    case Phase::analyze_artifact: a = detail::phase_analyze(s, q, inputs); break;
    case Phase::deploy_knowledge: a = detail::phase_deploy(s, q, inputs); break;
  }
  a.name = name;
  a.profile = profile.to_json();
  a.profile_hash = profile_hash(profile);
  a.inputs = std::move(inputs);
  a.ontology_version = s.ontology_version();
  entry.sequence = s.audit.size();
  entry.phase = to_string(profile.phase);
  entry.profile = a.profile;
  entry.profile_hash = a.profile_hash;
  entry.artifact = name;
  entry.ontology_version = a.ontology_version;
  entry.finished_at = detail::now_iso();
  s.audit.push_back(std::move(entry));
  s.artifact_order.push_back(name);
  return s.artifacts.emplace(name, std::move(a)).first->second;
}

// ---------------------------------------------------------------- access

namespace detail {

inline std::string cdata(const std::string& payload) {
  std::string out = "<![CDATA[";
  std::size_t start = 0;
  for (auto pos = payload.find("]]>"); pos != std::string::npos; pos = payload.find("]]>", start)) {
    out.append(payload, start, pos + 2 - start);
    out += "]]><![CDATA[";
    start = pos + 2;
  }
  out.append(payload, start, std::string::npos);
  out += "]]>";
  return out;
}

}  // namespace detail

inline std::string envelope(const std::string& kind, const std::string& name, const std::string& payload_format,
                            const std::string& payload) {
  std::string out = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<cordiet version=\"" +
                    std::to_string(kEnvelopeVersion) + "\">\n  <metadata kind=\"" + xml::escape(kind) +
                    "\" name=\"" + xml::escape(name) + "\" format=\"" + xml::escape(payload_format) + "\"/>\n";
  out += "  <payload>" + detail::cdata(payload) + "</payload>\n</cordiet>\n";
  return out;
}

// Inverse of `envelope`: returns the payload text.
inline std::string open_envelope(std::string_view text) {
  auto root = xml::parse(text);
  if (root.name != "cordiet") throw ParseError("not a cordiet envelope");
  if (root.attribute_or("version", "") != std::to_string(kEnvelopeVersion))
    throw ConfigError("unsupported envelope version");
  const auto* payload = root.child("payload");
  if (!payload) throw ParseError("envelope has no payload");
  return payload->text;
}

inline std::string get_artifact(const Session& s, const std::string& name, std::string_view format) {
  const auto& a = s.artifact(name);
  if (format == "json") return a.json_payload;
  if (format == "dot") {
    if (!a.dot_payload) throw ConfigError("artifact " + name + " has no dot form");
    return *a.dot_payload;
  }
  if (format == "checkpoint") {
    if (!a.checkpoint) throw ConfigError("artifact " + name + " has no checkpoint");
    return *a.checkpoint;
  }
  if (format == "xml") return envelope(a.kind, a.name, "json", a.json_payload);
  throw ConfigError("unknown artifact format: " + std::string(format));
}

inline json document_to_json(const Document& d) {
  json sections = json::object();
  for (std::size_t i = 0; i < kSectionNames.size(); ++i) sections[std::string(kSectionNames[i])] = d.sections[i];
  return {{"kind", "document"},
          {"id", d.id},
          {"url", d.url},
          {"timestamp", d.timestamp ? json(format_iso8601(*d.timestamp)) : json(nullptr)},
          {"sections", sections},
          {"fields", d.fields}};
}

inline std::string document_link(const std::string& session_id, const std::string& doc_id) {
  return "/sessions/" + session_id + "/documents/" + doc_id;
}

// A document by id, or a composite object "rule/key" with its members.
inline json get_document_json(const Session& s, const std::string& id) {
  if (const auto* d = s.corpus.find(id)) return document_to_json(*d);
  auto slash = id.find('/');
  if (slash != std::string::npos)
    if (const auto* rule = s.ontology.find_object_cluster(id.substr(0, slash)))
      for (const auto& c : apply_object_cluster(s.corpus, *rule).composites)
        if (c.id == id) {
          auto members = json::array();
          for (std::size_t i = 0; i < c.members.size(); ++i)
            members.push_back({{"id", c.members[i]}, {"url", c.member_urls[i]}, {"link", document_link(s.id, c.members[i])}});
          return {{"kind", "composite"},
                  {"id", c.id},
                  {"url", composite_url(c.id)},
                  {"rule", rule->name},
                  {"key", c.key},
                  {"members", members}};
        }
  throw NotFoundError("unknown document: " + id);
}

inline std::string get_document(const Session& s, const std::string& id, std::string_view format = "json") {
  auto j = get_document_json(s, id);
  if (format == "json") return j.dump(2);
  if (format == "xml") {
    if (j["kind"] == "document") return envelope("document", id, "xml", xml::to_string(document_to_xml(s.corpus.at(id))));
    return envelope("composite", id, "json", j.dump(2));
  }
  throw ConfigError("unknown document format: " + std::string(format));
}

// Maps a URL found in an artifact back to the object id that get_document
// accepts: document URLs by lookup, composite URLs by their suffix.
inline std::string resolve_url(const Session& s, const std::string& url) {
  static const std::string composite_prefix = composite_url("");
  if (url.rfind(composite_prefix, 0) == 0) {
    auto id = url.substr(composite_prefix.size());
    get_document_json(s, id);
    return id;
  }
  for (const auto& d : s.corpus.documents())
    if (d.url == url) return d.id;
  throw NotFoundError("no document behind URL: " + url);
}

// Every string stored under a "url" key anywhere in `j`.
inline void collect_urls(const json& j, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) {
      if (k == "url" && v.is_string()) out.push_back(v.get<std::string>());
      else collect_urls(v, out);
    }
  } else if (j.is_array()) {
    for (const auto& v : j) collect_urls(v, out);
  }
}

// Re-runs the audit log on a fresh session built from the same uploads.
inline Session replay(const Session& s) {
  Session r = create_session(s.id + "-replay", s.corpus_xml, s.ontology_xml.at(0), s.language);
  for (const auto& e : s.audit) {
    while (r.ontology_version() < e.ontology_version) replace_ontology(r, s.ontology_xml.at(r.ontology_version() + 1));
    run_phase(r, profile_from_json(e.profile));
  }
  return r;
}

// ---------------------------------------------------------------- persistence

inline json session_to_json(const Session& s) {
  auto arts = json::array();
  for (const auto& name : s.artifact_order) {
    const auto& a = s.artifacts.at(name);
    json j{{"name", a.name},     {"kind", a.kind},         {"json", a.json_payload},   {"warnings", a.warnings},
           {"profile", a.profile}, {"profileHash", a.profile_hash}, {"inputs", a.inputs}, {"ontologyVersion", a.ontology_version}};
    if (a.dot_payload) j["dot"] = *a.dot_payload;
    if (a.checkpoint) j["checkpoint"] = *a.checkpoint;
    arts.push_back(std::move(j));
  }
  auto audit = json::array();
  for (const auto& e : s.audit)
    audit.push_back({{"sequence", e.sequence},
                     {"phase", e.phase},
                     {"profile", e.profile},
                     {"profileHash", e.profile_hash},
                     {"artifact", e.artifact},
                     {"ontologyVersion", e.ontology_version},
                     {"startedAt", e.started_at},
                     {"finishedAt", e.finished_at}});
  json profiles = json::object();
  for (const auto& [name, p] : s.profiles) profiles[name] = p.to_json();
  return {{"format", "cordiet-session"},
          {"version", 1},
          {"id", s.id},
          {"language", language_code(s.language)},
          {"corpus", s.corpus_xml},
          {"ontologies", s.ontology_xml},
          {"index", s.index.to_json()},
          {"artifacts", arts},
          {"profiles", profiles},
          {"audit", audit}};
}

inline Session session_from_json(const json& j) {
  if (j.value("format", "") != "cordiet-session") throw ParseError("not a cordiet session file");
  auto versions = j.at("ontologies").get<std::vector<std::string>>();
  if (versions.empty()) throw ParseError("session file has no ontology");
  auto lang = parse_language(j.at("language").get<std::string>());
  Session s = create_session(j.at("id").get<std::string>(), j.at("corpus").get<std::string>(), versions[0], lang);
  for (std::size_t v = 1; v < versions.size(); ++v) replace_ontology(s, versions[v]);
  for (const auto& a : j.at("artifacts")) {
    Artifact art;
    art.name = a.at("name").get<std::string>();
    art.kind = a.at("kind").get<std::string>();
    art.json_payload = a.at("json").get<std::string>();
    if (a.contains("dot")) art.dot_payload = a["dot"].get<std::string>();
    if (a.contains("checkpoint")) art.checkpoint = a["checkpoint"].get<std::string>();
    art.warnings = a.value("warnings", std::vector<std::string>{});
    art.profile = a.at("profile");
    art.profile_hash = a.at("profileHash").get<std::string>();
    art.inputs = a.value("inputs", std::vector<std::string>{});
    art.ontology_version = a.value("ontologyVersion", std::size_t{0});
    s.artifact_order.push_back(art.name);
    s.artifacts.emplace(art.name, std::move(art));
  }
  for (const auto& [name, p] : j.at("profiles").items()) s.profiles[name] = profile_from_json(p);
  for (const auto& e : j.at("audit"))
    s.audit.push_back({e.at("sequence").get<std::size_t>(), e.at("phase").get<std::string>(), e.at("profile"),
                       e.at("profileHash").get<std::string>(), e.at("artifact").get<std::string>(),
                       e.value("ontologyVersion", std::size_t{0}), e.value("startedAt", ""), e.value("finishedAt", "")});
  return s;
}

// Sessions live in memory and are written through to `<dir>/<id>.json`.
// Phase runs and other writes on one session are serialized; reads share.
class SessionStore {
 public:
  explicit SessionStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
    for (const auto& entry : std::filesystem::directory_iterator(dir_)) {
      // other files may share the directory
      static const std::regex id_file(R"(s\d+\.json)");
      if (!std::regex_match(entry.path().filename().string(), id_file)) continue;
      auto text = read_file(entry.path().string());
      auto slot = std::make_shared<Slot>();
      slot->session = session_from_json(json::parse(text));
      if (slot->session.id + ".json" != entry.path().filename().string())
        throw ParseError("session file " + entry.path().filename().string() + " holds session " + slot->session.id);
      next_ = std::max(next_, number_of(slot->session.id) + 1);
      slots_.emplace(slot->session.id, std::move(slot));
    }
  }

  // Directory from the environment, falling back to `fallback`.
  static std::filesystem::path data_dir(const std::filesystem::path& fallback = "cordiet-data") {
    const char* env = std::getenv(kDataDirEnv);
    return env && *env ? std::filesystem::path(env) : fallback;
  }

  std::string create(std::string corpus_xml, std::string ontology_xml, std::optional<Language> lang = std::nullopt) {
    std::unique_lock lock(mu_);
    char buf[32];
    std::snprintf(buf, sizeof buf, "s%04zu", next_);
    auto slot = std::make_shared<Slot>();
    slot->session = create_session(buf, std::move(corpus_xml), std::move(ontology_xml), lang);
    ++next_;
    persist(slot->session);
    slots_.emplace(buf, slot);
    return buf;
  }

  std::vector<std::string> ids() const {
    std::shared_lock lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : slots_) out.push_back(id);
    return out;
  }

  // Calls f(const Session&) under a shared lock.
  template <class F>
  auto read(const std::string& id, F&& f) const {
    auto slot = find(id);
    std::shared_lock lock(slot->mu);
    return f(static_cast<const Session&>(slot->session));
  }

  // Calls f(Session&) under an exclusive lock and persists afterwards. The
  // session is restored if f throws.
  template <class F>
  auto write(const std::string& id, F&& f) {
    auto slot = find(id);
    std::unique_lock lock(slot->mu);
    Session backup = slot->session;
    try {
      if constexpr (std::is_void_v<decltype(f(slot->session))>) {
        f(slot->session);
        persist(slot->session);
      } else {
        auto r = f(slot->session);
        persist(slot->session);
        return r;
      }
    } catch (...) {
      slot->session = std::move(backup);
      throw;
    }
  }

  std::string run_phase(const std::string& id, const Profile& p) {
    return write(id, [&](Session& s) { return cordiet::run_phase(s, p).name; });
  }

  std::string run_profile(const std::string& id, const std::string& profile_name) {
    return write(id, [&](Session& s) {
      auto it = s.profiles.find(profile_name);
      if (it == s.profiles.end()) throw NotFoundError("unknown profile: " + profile_name);
      return cordiet::run_phase(s, it->second).name;
    });
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  struct Slot {
    mutable std::shared_mutex mu;
    Session session;
  };

  static std::size_t number_of(const std::string& id) {
    if (id.size() < 2 || id[0] != 's') return 0;
    try {
      return std::stoul(id.substr(1));
    } catch (const std::exception&) {
      return 0;
    }
  }

  std::shared_ptr<Slot> find(const std::string& id) const {
    std::shared_lock lock(mu_);
    auto it = slots_.find(id);
    if (it == slots_.end()) throw NotFoundError("unknown session: " + id);
    return it->second;
  }

  void persist(const Session& s) const {
    auto path = dir_ / (s.id + ".json");
    auto tmp = path;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << session_to_json(s).dump();
      if (!out) throw ResourceError("cannot write session file " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
  }

  std::filesystem::path dir_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
  std::size_t next_ = 1;
};

}  // namespace cordiet
