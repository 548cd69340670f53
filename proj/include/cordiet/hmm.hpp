#pragma once

// Discrete hidden Markov models in the (A, B, T, N, M) form: A transitions,
// B emissions, T initial distribution, N states, M symbols.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <cstdio>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/corpus.hpp"
#include "cordiet/error.hpp"
#include "cordiet/ontology.hpp"

namespace cordiet {

using Matrix = std::vector<std::vector<double>>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kStochasticTolerance = 1e-9;

struct HmmModel {
  std::size_t N = 0;
  std::size_t M = 0;
  Matrix A;                  // N x N
  Matrix B;                  // N x M
  std::vector<double> T;     // N
  std::vector<std::string> symbol_names;
  std::optional<std::uint64_t> seed;
  // States whose outgoing row is a convention rather than an estimate
  // (never left in the training data). Their edges are not exported.
  std::vector<bool> unexited;

  void validate() const {
    auto check_row = [](const std::vector<double>& row, std::size_t width, const std::string& what) {
      if (row.size() != width) throw ConfigError(what + " has wrong width");
      double s = 0;
      for (double x : row) {
        if (!(x >= 0) || !std::isfinite(x)) throw ConfigError(what + " has a negative or non-finite entry");
        s += x;
      }
      if (std::abs(s - 1.0) > kStochasticTolerance) throw ConfigError(what + " does not sum to 1");
    };
    if (N == 0 || M == 0) throw ConfigError("HMM needs N >= 1 and M >= 1");
    if (A.size() != N || B.size() != N) throw ConfigError("HMM matrices have wrong row count");
    for (std::size_t i = 0; i < N; ++i) {
      check_row(A[i], N, "A row " + std::to_string(i));
      check_row(B[i], M, "B row " + std::to_string(i));
    }
    check_row(T, N, "T");
    if (!symbol_names.empty() && symbol_names.size() != M) throw ConfigError("symbol name count differs from M");
  }

  std::string symbol_name(std::size_t k) const {
    return k < symbol_names.size() ? symbol_names[k] : std::to_string(k);
  }
};

using Sequence = std::vector<std::size_t>;

namespace detail {

inline double safe_log(double x) { return x > 0 ? std::log(x) : kNegInf; }

inline double log_sum_exp(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

inline void check_symbols(const HmmModel& model, const Sequence& seq) {
  for (auto s : seq)
    if (s >= model.M)
      throw ConfigError("symbol " + std::to_string(s) + " out of range for M=" + std::to_string(model.M));
}

struct LogModel {
  Matrix A, B;
  std::vector<double> T;
  explicit LogModel(const HmmModel& m) : A(m.N, std::vector<double>(m.N)), B(m.N, std::vector<double>(m.M)), T(m.N) {
    for (std::size_t i = 0; i < m.N; ++i) {
      for (std::size_t j = 0; j < m.N; ++j) A[i][j] = safe_log(m.A[i][j]);
      for (std::size_t k = 0; k < m.M; ++k) B[i][k] = safe_log(m.B[i][k]);
      T[i] = safe_log(m.T[i]);
    }
  }
};

inline Matrix log_forward(const LogModel& lm, std::size_t N, const Sequence& seq) {
  Matrix alpha(seq.size(), std::vector<double>(N, kNegInf));
  for (std::size_t i = 0; i < N; ++i) alpha[0][i] = lm.T[i] + lm.B[i][seq[0]];
  for (std::size_t t = 1; t < seq.size(); ++t)
    for (std::size_t j = 0; j < N; ++j) {
      double acc = kNegInf;
      for (std::size_t i = 0; i < N; ++i) acc = log_sum_exp(acc, alpha[t - 1][i] + lm.A[i][j]);
      alpha[t][j] = acc + lm.B[j][seq[t]];
    }
  return alpha;
}

inline Matrix log_backward(const LogModel& lm, std::size_t N, const Sequence& seq) {
  Matrix beta(seq.size(), std::vector<double>(N, 0.0));
  for (std::size_t t = seq.size() - 1; t-- > 0;)
    for (std::size_t i = 0; i < N; ++i) {
      double acc = kNegInf;
      for (std::size_t j = 0; j < N; ++j) acc = log_sum_exp(acc, lm.A[i][j] + lm.B[j][seq[t + 1]] + beta[t + 1][j]);
      beta[t][i] = acc;
    }
  return beta;
}

}  // namespace detail

// log P(seq | model). The empty sequence has probability 1; impossible
// sequences give -infinity.
inline double forward_likelihood(const HmmModel& model, const Sequence& seq) {
  detail::check_symbols(model, seq);
  if (seq.empty()) return 0.0;
  detail::LogModel lm(model);
  auto alpha = detail::log_forward(lm, model.N, seq);
  double acc = kNegInf;
  for (double a : alpha.back()) acc = detail::log_sum_exp(acc, a);
  return acc;
}

struct ViterbiResult {
  std::vector<std::size_t> path;
  double log_probability = 0.0;
};

// Ties go to the lowest state index, both for the final state and at every
// backtracking step.
inline ViterbiResult viterbi(const HmmModel& model, const Sequence& seq) {
  detail::check_symbols(model, seq);
  if (seq.empty()) return {};
  detail::LogModel lm(model);
  const std::size_t N = model.N;
  Matrix delta(seq.size(), std::vector<double>(N, kNegInf));
  std::vector<std::vector<std::size_t>> back(seq.size(), std::vector<std::size_t>(N, 0));
  for (std::size_t i = 0; i < N; ++i) delta[0][i] = lm.T[i] + lm.B[i][seq[0]];
  for (std::size_t t = 1; t < seq.size(); ++t)
    for (std::size_t j = 0; j < N; ++j) {
      double best = kNegInf;
      std::size_t arg = 0;
      for (std::size_t i = 0; i < N; ++i) {
        double v = delta[t - 1][i] + lm.A[i][j];
        if (v > best) {
          best = v;
          arg = i;
        }
      }
      delta[t][j] = best + lm.B[j][seq[t]];
      back[t][j] = arg;
    }
  ViterbiResult r;
  r.path.assign(seq.size(), 0);
  double best = kNegInf;
  for (std::size_t i = 0; i < N; ++i)
    if (delta.back()[i] > best) {
      best = delta.back()[i];
      r.path.back() = i;
    }
  r.log_probability = best;
  for (std::size_t t = seq.size() - 1; t > 0; --t) r.path[t - 1] = back[t][r.path[t]];
  return r;
}

namespace detail {

inline void normalize(std::vector<double>& row) {
  double s = 0;
  for (double x : row) s += x;
  for (double& x : row) x /= s;
}

inline std::vector<double> random_row(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> row(n);
  for (double& x : row) x = 0.05 + static_cast<double>(rng() >> 11) * 0x1.0p-53;
  normalize(row);
  return row;
}

inline std::vector<double> perturbed_uniform_row(std::size_t n, std::mt19937_64& rng) {
  std::vector<double> row(n);
  for (double& x : row) x = 1.0 + 0.1 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
  normalize(row);
  return row;
}

}  // namespace detail

struct SeededRandomInit {
  std::uint64_t seed = 1;
};
struct UniformPerturbedInit {
  std::uint64_t seed = 1;
};
using HmmInit = std::variant<SeededRandomInit, UniformPerturbedInit, HmmModel>;

inline HmmModel initial_model(std::size_t N, std::size_t M, const HmmInit& init) {
  if (auto explicit_model = std::get_if<HmmModel>(&init)) {
    if (explicit_model->N != N || explicit_model->M != M) throw ConfigError("initial model has wrong dimensions");
    explicit_model->validate();
    return *explicit_model;
  }
  bool random = std::holds_alternative<SeededRandomInit>(init);
  std::uint64_t seed = random ? std::get<SeededRandomInit>(init).seed : std::get<UniformPerturbedInit>(init).seed;
  std::mt19937_64 rng(seed);
  auto row = [&](std::size_t n) { return random ? detail::random_row(n, rng) : detail::perturbed_uniform_row(n, rng); };
  HmmModel m;
  m.N = N;
  m.M = M;
  m.seed = seed;
  m.T = row(N);
  for (std::size_t i = 0; i < N; ++i) m.A.push_back(row(N));
  for (std::size_t i = 0; i < N; ++i) m.B.push_back(row(M));
  return m;
}

struct BaumWelchResult {
  HmmModel model;
  std::vector<double> trace;  // total log-likelihood of the initial model and after each update
};

struct BaumWelchOptions {
  double tol = 1e-6;
  std::size_t max_iter = 200;
};

// EM re-estimation over all non-empty sequences. Stops once an update improves
// the total log-likelihood by less than `tol`, or after `max_iter` updates.
// Rows whose expected counts vanish keep their previous values.
inline BaumWelchResult baum_welch(const std::vector<Sequence>& sequences, std::size_t N, std::size_t M,
                                  const HmmInit& init, BaumWelchOptions opts = {}) {
  if (N == 0 || M == 0) throw ConfigError("Baum-Welch needs N >= 1 and M >= 1");
  std::vector<const Sequence*> data;
  for (const auto& s : sequences)
    if (!s.empty()) data.push_back(&s);
  if (data.empty()) throw ConfigError("Baum-Welch needs at least one non-empty sequence");

  HmmModel model = initial_model(N, M, init);
  for (auto* s : data) detail::check_symbols(model, *s);

  struct Stats {
    double ll = 0;
    Matrix a_num, b_num;
    std::vector<double> t_num, a_den, b_den;
  };
  auto e_step = [&](const HmmModel& m) {
    Stats st;
    st.a_num.assign(N, std::vector<double>(N, 0.0));
    st.b_num.assign(N, std::vector<double>(M, 0.0));
    st.t_num.assign(N, 0.0);
    st.a_den.assign(N, 0.0);
    st.b_den.assign(N, 0.0);
    detail::LogModel lm(m);
    for (auto* sp : data) {
      const auto& seq = *sp;
      auto alpha = detail::log_forward(lm, N, seq);
      auto beta = detail::log_backward(lm, N, seq);
      double lp = kNegInf;
      for (double a : alpha.back()) lp = detail::log_sum_exp(lp, a);
      st.ll += lp;
      if (lp == kNegInf) continue;
      for (std::size_t t = 0; t < seq.size(); ++t)
        for (std::size_t i = 0; i < N; ++i) {
          double gamma = std::exp(alpha[t][i] + beta[t][i] - lp);
          if (t == 0) st.t_num[i] += gamma;
          st.b_num[i][seq[t]] += gamma;
          st.b_den[i] += gamma;
          if (t + 1 < seq.size()) {
            st.a_den[i] += gamma;
            for (std::size_t j = 0; j < N; ++j)
              st.a_num[i][j] +=
                  std::exp(alpha[t][i] + lm.A[i][j] + lm.B[j][seq[t + 1]] + beta[t + 1][j] - lp);
          }
        }
    }
    return st;
  };

  BaumWelchResult result;
  Stats st = e_step(model);
  result.trace.push_back(st.ll);
  for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
    HmmModel next = model;
    double t_total = 0;
    for (double x : st.t_num) t_total += x;
    if (t_total > 0)
      for (std::size_t i = 0; i < N; ++i) next.T[i] = st.t_num[i] / t_total;
    for (std::size_t i = 0; i < N; ++i) {
      if (st.a_den[i] > 0) {
        for (std::size_t j = 0; j < N; ++j) next.A[i][j] = st.a_num[i][j];
        detail::normalize(next.A[i]);
      }
      if (st.b_den[i] > 0) {
        for (std::size_t k = 0; k < M; ++k) next.B[i][k] = st.b_num[i][k];
        detail::normalize(next.B[i]);
      }
    }
    Stats next_st = e_step(next);
    double gain = next_st.ll - st.ll;
    model = std::move(next);
    st = std::move(next_st);
    result.trace.push_back(st.ll);
    if (gain < opts.tol) break;
  }
  result.model = std::move(model);
  return result;
}

struct ProcessModelOptions {
  double laplace = 0.0;  // additive smoothing, off by default
};

// One state per symbol with identity emissions; A and T by counting.
// A state never left in the data gets a uniform row and is flagged unexited.
inline HmmModel fit_process_model(const std::vector<Sequence>& sequences, std::size_t M,
                                  ProcessModelOptions opts = {}) {
  if (M == 0) throw ConfigError("process model needs M >= 1");
  HmmModel m;
  m.N = M;
  m.M = M;
  m.A.assign(M, std::vector<double>(M, 0.0));
  m.B.assign(M, std::vector<double>(M, 0.0));
  m.T.assign(M, 0.0);
  m.unexited.assign(M, false);
  for (std::size_t i = 0; i < M; ++i) m.B[i][i] = 1.0;
  Matrix counts(M, std::vector<double>(M, 0.0));
  std::vector<double> starts(M, 0.0);
  double started = 0;
  for (const auto& s : sequences) {
    detail::check_symbols(m, s);
    if (s.empty()) continue;
    starts[s[0]] += 1;
    started += 1;
    for (std::size_t t = 1; t < s.size(); ++t) counts[s[t - 1]][s[t]] += 1;
  }
  if (started == 0) throw ConfigError("process model needs at least one non-empty sequence");
  for (std::size_t i = 0; i < M; ++i) {
    double total = 0;
    for (double c : counts[i]) total += c;
    if (total == 0) m.unexited[i] = true;
    if (total == 0 && opts.laplace == 0) {
      for (double& x : m.A[i]) x = 1.0 / static_cast<double>(M);
      continue;
    }
    for (std::size_t j = 0; j < M; ++j)
      m.A[i][j] = (counts[i][j] + opts.laplace) / (total + opts.laplace * static_cast<double>(M));
  }
  for (std::size_t i = 0; i < M; ++i)
    m.T[i] = (starts[i] + opts.laplace) / (started + opts.laplace * static_cast<double>(M));
  return m;
}

struct Sample {
  std::vector<std::size_t> states;
  Sequence symbols;
};

// Draws up to `length` steps. With `stop_at_unexited`, generation ends after
// entering a state flagged unexited.
inline Sample sample(const HmmModel& model, std::size_t length, std::mt19937_64& rng, bool stop_at_unexited = false) {
  auto draw = [&](const std::vector<double>& p) {
    double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    for (std::size_t i = p.size(); i-- > 0;)
      if (p[i] > 0) return i;
    return std::size_t{0};
  };
  Sample s;
  std::size_t state = draw(model.T);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) state = draw(model.A[state]);
    s.states.push_back(state);
    s.symbols.push_back(draw(model.B[state]));
    if (stop_at_unexited && state < model.unexited.size() && model.unexited[state]) break;
  }
  return s;
}

struct HmmGraph {
  std::string json;
  std::string dot;
};

// Nodes list up to three most probable symbols per state; edges are the
// positive A entries at or above `threshold` from states that were exited.
inline HmmGraph export_hmm_graph(const HmmModel& model, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
  model.validate();
  auto nodes = nlohmann::json::array();
  std::string dot = "digraph hmm {\n  rankdir=LR;\n";
  for (std::size_t i = 0; i < model.N; ++i) {
    std::vector<std::size_t> order(model.M);
    for (std::size_t k = 0; k < model.M; ++k) order[k] = k;
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return model.B[i][a] > model.B[i][b]; });
    auto symbols = nlohmann::json::array();
    std::string label;
    for (std::size_t r = 0; r < std::min<std::size_t>(3, model.M); ++r) {
      auto k = order[r];
      if (model.B[i][k] <= 0) break;
      symbols.push_back({{"symbol", k}, {"name", model.symbol_name(k)}, {"p", model.B[i][k]}});
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", model.B[i][k]);
      label += (label.empty() ? "" : "\\n") + model.symbol_name(k) + " " + buf;
    }
    bool unexited = i < model.unexited.size() && model.unexited[i];
    nodes.push_back({{"state", i}, {"symbols", symbols}, {"unexited", unexited}, {"initial", model.T[i]}});
    dot += "  s" + std::to_string(i) + " [label=\"" + label + "\"];\n";
  }
  auto edges = nlohmann::json::array();
  for (std::size_t i = 0; i < model.N; ++i) {
    if (i < model.unexited.size() && model.unexited[i]) continue;
    for (std::size_t j = 0; j < model.N; ++j) {
      double p = model.A[i][j];
      if (p <= 0 || p < threshold) continue;
      edges.push_back({{"from", i}, {"to", j}, {"p", p}});
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", p);
      dot += "  s" + std::to_string(i) + " -> s" + std::to_string(j) + " [label=\"" + buf + "\"];\n";
    }
  }
  dot += "}\n";
  nlohmann::json j{{"format", "cordiet-hmm-graph"}, {"threshold", threshold}, {"nodes", nodes}, {"edges", edges}};
  return {j.dump(2), dot};
}

inline nlohmann::json model_checkpoint(const HmmModel& m, const std::vector<double>& trace = {}) {
  nlohmann::json j{{"format", "cordiet-hmm"}, {"N", m.N}, {"M", m.M}, {"A", m.A}, {"B", m.B},
                   {"T", m.T},                {"symbolNames", m.symbol_names}, {"trace", trace}};
  j["seed"] = m.seed ? nlohmann::json(*m.seed) : nlohmann::json(nullptr);
  std::vector<bool> flags = m.unexited;
  j["unexited"] = flags;
  return j;
}

inline HmmModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "cordiet-hmm") throw ParseError("not an HMM checkpoint");
  HmmModel m;
  m.N = j.at("N").get<std::size_t>();
  m.M = j.at("M").get<std::size_t>();
  m.A = j.at("A").get<Matrix>();
  m.B = j.at("B").get<Matrix>();
  m.T = j.at("T").get<std::vector<double>>();
  m.symbol_names = j.value("symbolNames", std::vector<std::string>{});
  if (j.contains("seed") && !j["seed"].is_null()) m.seed = j["seed"].get<std::uint64_t>();
  m.unexited = j.value("unexited", std::vector<bool>{});
  m.validate();
  return m;
}

struct EventSequence {
  std::string entity;
  Sequence symbols;
  std::vector<Instant> timestamps;
};

enum class UnmappedPolicy { error, skip };

// Maps documents to symbols. With `field` set, the field value (an activity
// code) is looked up in `groups` when given, which merges codes into
// semantic groups; otherwise the value is the symbol itself. With
// `attributes` set instead, the first attribute true on the document names
// the symbol. `symbols` fixes the symbol order; when empty the distinct
// symbol names are sorted.
struct SymbolMap {
  std::optional<std::string> field;
  std::map<std::string, std::string> groups;
  std::vector<std::string> attributes;
  std::vector<std::string> symbols;
  UnmappedPolicy unmapped = UnmappedPolicy::error;
};

struct EventLog {
  std::vector<EventSequence> sequences;
  std::vector<std::string> symbol_names;
  std::vector<std::string> warnings;
};

inline EventLog sequences_from_corpus(const Corpus& corpus, const ObjectClusterRule& entity_key, const SymbolMap& map,
                                      const Ontology* onto = nullptr, const InvertedIndex* index = nullptr) {
  if (map.field.has_value() == !map.attributes.empty())
    throw ConfigError("symbol map needs exactly one of a field or an attribute list");
  if (!map.attributes.empty() && (!onto || !index))
    throw ConfigError("attribute-based symbol map needs an ontology and an index");
  for (const auto& d : corpus.documents())
    if (!d.timestamp) throw EvaluationError("document " + d.id + " has no timestamp; event sequences impossible");

  std::optional<Evaluator> eval;
  if (onto && index) eval.emplace(*onto, *index);
  auto symbol_of = [&](const Document& d) -> std::optional<std::string> {
    if (map.field) {
      auto v = d.field(*map.field);
      if (!v) return std::nullopt;
      if (map.groups.empty()) return v;
      auto it = map.groups.find(*v);
      if (it == map.groups.end()) return std::nullopt;
      return it->second;
    }
    for (const auto& a : map.attributes)
      if ((*eval)(a, d)) return a;
    return std::nullopt;
  };

  EventLog log;
  std::vector<std::string> names = map.symbols;
  if (names.empty()) {
    std::set<std::string> distinct;
    if (!map.groups.empty())
      for (const auto& [_, g] : map.groups) distinct.insert(g);
    else if (!map.attributes.empty())
      distinct.insert(map.attributes.begin(), map.attributes.end());
    else
      for (const auto& d : corpus.documents())
        if (auto s = symbol_of(d)) distinct.insert(*s);
    names.assign(distinct.begin(), distinct.end());
  }
  std::map<std::string, std::size_t> index_of;
  for (std::size_t i = 0; i < names.size(); ++i) index_of[names[i]] = i;
  log.symbol_names = names;

  auto clustering = apply_object_cluster(corpus, entity_key);
  log.warnings = clustering.warnings;
  for (const auto& c : clustering.composites) {
    std::vector<const Document*> docs;
    for (const auto& id : c.members) docs.push_back(&corpus.at(id));
    std::stable_sort(docs.begin(), docs.end(), [](const Document* a, const Document* b) {
      return *a->timestamp != *b->timestamp ? *a->timestamp < *b->timestamp : a->id < b->id;
    });
    EventSequence seq;
    seq.entity = c.key;
    for (const auto* d : docs) {
      auto sym = symbol_of(*d);
      std::optional<std::size_t> ix;
      if (sym) {
        auto it = index_of.find(*sym);
        if (it != index_of.end()) ix = it->second;
      }
      if (!ix) {
        if (map.unmapped == UnmappedPolicy::error) throw RuleError("document " + d->id + " has no symbol mapping");
        log.warnings.push_back("document " + d->id + " has no symbol mapping; skipped");
        continue;
      }
      seq.symbols.push_back(*ix);
      seq.timestamps.push_back(*d->timestamp);
    }
    log.sequences.push_back(std::move(seq));
  }
  return log;
}

}  // namespace cordiet
