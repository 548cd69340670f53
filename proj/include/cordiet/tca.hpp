#pragma once

// Temporal concept analysis: conceptual time systems per tracked entity and
// life tracks overlaid on a concept lattice.

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/context.hpp"
#include "cordiet/corpus.hpp"
#include "cordiet/fca.hpp"
#include "cordiet/ontology.hpp"
#include "cordiet/timeutil.hpp"

namespace cordiet {

struct Granule {
  std::string object;
  Instant timestamp;  // as recorded on the document
  Instant time;       // truncated to the system granularity
  unsigned tie_rank;  // position among granules sharing `time`, ordered by object id

  // Strict order of granules in one system.
  friend bool operator<(const Granule& a, const Granule& b) {
    return a.time != b.time ? a.time < b.time : a.tie_rank < b.tie_rank;
  }
};

struct ConceptualTimeSystem {
  std::string entity;
  Granularity granularity = Granularity::day;
  std::vector<Granule> granules;  // ascending

  // Successor relation R as index pairs (i, i + 1).
  std::vector<std::pair<std::size_t, std::size_t>> relation() const {
    std::vector<std::pair<std::size_t, std::size_t>> r;
    for (std::size_t i = 1; i < granules.size(); ++i) r.emplace_back(i - 1, i);
    return r;
  }
};

struct TimeSystems {
  std::vector<ConceptualTimeSystem> systems;  // in order of first appearance of each entity
  std::vector<std::string> warnings;
};

// Granules sharing a truncated instant are ordered by document id and a
// warning is emitted for each such tie.
inline TimeSystems build_time_system(const Corpus& corpus, const ObjectClusterRule& entity_key, Granularity granularity) {
  TimeSystems out;
  for (const auto& d : corpus.documents())
    if (!d.timestamp) throw EvaluationError("document " + d.id + " has no timestamp; temporal analysis impossible");
  auto clustering = apply_object_cluster(corpus, entity_key);
  out.warnings = clustering.warnings;
  for (const auto& c : clustering.composites) {
    ConceptualTimeSystem sys;
    sys.entity = c.key;
    sys.granularity = granularity;
    for (const auto& id : c.members) {
      const auto& d = corpus.at(id);
      sys.granules.push_back({d.id, *d.timestamp, truncate(*d.timestamp, granularity), 0});
    }
    std::sort(sys.granules.begin(), sys.granules.end(), [](const Granule& a, const Granule& b) {
      return a.time != b.time ? a.time < b.time : a.object < b.object;
    });
    for (std::size_t i = 1; i < sys.granules.size(); ++i) {
      auto& g = sys.granules[i];
      const auto& prev = sys.granules[i - 1];
      if (g.time == prev.time) {
        g.tie_rank = prev.tie_rank + 1;
        out.warnings.push_back("entity " + sys.entity + ": documents " + prev.object + " and " + g.object +
                               " share the " + to_string(granularity) + " " + format_iso8601(g.time) +
                               "; ordered by document id");
      }
    }
    out.systems.push_back(std::move(sys));
  }
  return out;
}

struct Transition {
  std::size_t from_concept;
  std::size_t to_concept;
  std::size_t from_granule;
  std::size_t to_granule;
};

struct LifeTrack {
  std::string entity;
  std::vector<Granule> granules;
  std::vector<std::size_t> concepts;  // object concept of each granule
  std::vector<Transition> transitions;
};

// Each granule is placed at the object concept of its document; consecutive
// granules under R form the transitions.
inline std::vector<LifeTrack> compute_life_tracks(const std::vector<ConceptualTimeSystem>& systems,
                                                  const ConceptLattice& lat, const FormalContext& ctx) {
  std::vector<LifeTrack> tracks;
  for (const auto& sys : systems) {
    LifeTrack t;
    t.entity = sys.entity;
    t.granules = sys.granules;
    for (const auto& g : sys.granules) {
      if (!ctx.has_object(g.object))
        throw LookupError("granule object " + g.object + " of entity " + sys.entity + " is not in the context");
      t.concepts.push_back(lat.object_concept(ctx.object_index(g.object)));
    }
    for (auto [a, b] : sys.relation()) t.transitions.push_back({t.concepts[a], t.concepts[b], a, b});
    tracks.push_back(std::move(t));
  }
  return tracks;
}

inline nlohmann::json tracks_to_json(const ConceptLattice& lat, const std::vector<LifeTrack>& tracks) {
  auto list = nlohmann::json::array();
  for (const auto& t : tracks) {
    auto steps = nlohmann::json::array();
    for (const auto& tr : t.transitions) {
      if (tr.from_concept >= lat.size() || tr.to_concept >= lat.size())
        throw InternalError("life track of " + t.entity + " references unknown concept");
      const auto& a = t.granules[tr.from_granule];
      const auto& b = t.granules[tr.to_granule];
      steps.push_back({{"from", tr.from_concept},
                       {"to", tr.to_concept},
                       {"fromObject", a.object},
                       {"toObject", b.object},
                       {"fromTime", format_iso8601(a.timestamp)},
                       {"toTime", format_iso8601(b.timestamp)}});
    }
    auto granules = nlohmann::json::array();
    for (std::size_t i = 0; i < t.granules.size(); ++i) {
      if (t.concepts[i] >= lat.size()) throw InternalError("life track of " + t.entity + " references unknown concept");
      granules.push_back({{"object", t.granules[i].object},
                          {"time", format_iso8601(t.granules[i].timestamp)},
                          {"concept", t.concepts[i]}});
    }
    list.push_back({{"entity", t.entity}, {"granules", granules}, {"steps", steps}});
  }
  return list;
}

// Lattice JSON with a `trackList` field appended.
inline std::string export_tracks(const ConceptLattice& lat, const std::vector<LifeTrack>& tracks) {
  auto j = lattice_to_json(lat);
  j["trackList"] = tracks_to_json(lat, tracks);
  return j.dump(2);
}

}  // namespace cordiet
