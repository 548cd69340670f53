#pragma once

// Emergent self-organizing maps: seeded initialization, online training with
// a gaussian neighborhood, U-matrix terrain and projection of labeled objects.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cordiet/context.hpp"
#include "cordiet/corpus.hpp"
#include "cordiet/error.hpp"

namespace cordiet {

enum class Topology { planar, toroid };

inline Topology parse_topology(std::string_view s) {
  if (s == "planar") return Topology::planar;
  if (s == "toroid") return Topology::toroid;
  throw ConfigError("unknown topology: " + std::string(s));
}

inline const char* to_string(Topology t) { return t == Topology::toroid ? "toroid" : "planar"; }

struct FeatureVector {
  std::string object;
  std::vector<double> values;
};

struct TrainingSchedule {
  std::size_t epochs = 20;
  double rate_start = 0.5;
  double rate_end = 0.05;
  double radius_start = 8.0;
  double radius_end = 1.0;

  void validate(std::size_t rows, std::size_t cols) const {
    if (!(rate_start >= rate_end && rate_end > 0)) throw ConfigError("learning rate must satisfy start >= end > 0");
    if (!(radius_start >= radius_end && radius_end > 0)) throw ConfigError("radius must satisfy start >= end > 0");
    if (radius_start > static_cast<double>(std::max(rows, cols)))
      throw ConfigError("radius start exceeds the larger grid dimension");
  }

  // Linear decay over epochs; a single epoch uses the start values.
  double rate_at(std::size_t epoch) const { return lerp(rate_start, rate_end, epoch); }
  double radius_at(std::size_t epoch) const { return lerp(radius_start, radius_end, epoch); }

 private:
  double lerp(double a, double b, std::size_t epoch) const {
    if (epochs <= 1) return a;
    double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
    return a + (b - a) * t;
  }
};

namespace detail {

// Platform-independent draws on top of mt19937_64, whose output sequence is
// fixed by the standard.
class SeededRandom {
 public:
  explicit SeededRandom(std::uint64_t seed) : engine_(seed) {}
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  std::size_t below(std::size_t n) {
    std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do x = engine_();
    while (x >= limit);
    return static_cast<std::size_t>(x % n);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace detail

class EsomGrid {
 public:
  EsomGrid() = default;
  EsomGrid(std::size_t rows, std::size_t cols, Topology topology, std::size_t dim, std::uint64_t seed)
      : rows_(rows), cols_(cols), dim_(dim), topology_(topology), seed_(seed), weights_(rows * cols * dim, 0.0) {
    if (rows == 0 || cols == 0 || dim == 0) throw ConfigError("grid rows, cols and dimension must be positive");
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t units() const { return rows_ * cols_; }
  std::size_t dim() const { return dim_; }
  Topology topology() const { return topology_; }
  std::uint64_t seed() const { return seed_; }
  bool trained() const { return trained_; }
  const std::optional<TrainingSchedule>& schedule() const { return schedule_; }
  const std::vector<double>& weights() const { return weights_; }

  std::span<const double> weight(std::size_t unit) const { return {weights_.data() + unit * dim_, dim_}; }
  std::span<double> weight(std::size_t unit) { return {weights_.data() + unit * dim_, dim_}; }
  std::span<const double> weight(std::size_t r, std::size_t c) const { return weight(r * cols_ + c); }
  std::span<double> weight(std::size_t r, std::size_t c) { return weight(r * cols_ + c); }

  // Squared grid distance between units, wrapping per axis on a toroid.
  double grid_distance2(std::size_t a, std::size_t b) const {
    double dr = axis_offset(a / cols_, b / cols_, rows_);
    double dc = axis_offset(a % cols_, b % cols_, cols_);
    return dr * dr + dc * dc;
  }

  double axis_offset(std::size_t x, std::size_t y, std::size_t extent) const {
    std::size_t d = x > y ? x - y : y - x;
    if (topology_ == Topology::toroid) d = std::min(d, extent - d);
    return static_cast<double>(d);
  }

  // 4-neighborhood; on a toroid positions wrap and a wrapped position equal
  // to the unit itself is dropped.
  std::vector<std::size_t> neighbors(std::size_t unit) const {
    std::vector<std::size_t> out;
    std::size_t r = unit / cols_, c = unit % cols_;
    auto add = [&](long rr, long cc) {
      long R = static_cast<long>(rows_), C = static_cast<long>(cols_);
      if (topology_ == Topology::toroid) {
        rr = (rr + R) % R;
        cc = (cc + C) % C;
      } else if (rr < 0 || rr >= R || cc < 0 || cc >= C) {
        return;
      }
      std::size_t u = static_cast<std::size_t>(rr) * cols_ + static_cast<std::size_t>(cc);
      if (u != unit) out.push_back(u);
    };
    long lr = static_cast<long>(r), lc = static_cast<long>(c);
    add(lr - 1, lc);
    add(lr + 1, lc);
    add(lr, lc - 1);
    add(lr, lc + 1);
    return out;
  }

  bool operator==(const EsomGrid& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && dim_ == o.dim_ && topology_ == o.topology_ && seed_ == o.seed_ &&
           trained_ == o.trained_ && weights_ == o.weights_;
  }

 private:
  friend EsomGrid train(const EsomGrid&, const std::vector<FeatureVector>&, const TrainingSchedule&,
                        std::vector<double>*);
  friend EsomGrid grid_from_checkpoint(const nlohmann::json&);

  std::size_t rows_ = 0, cols_ = 0, dim_ = 0;
  Topology topology_ = Topology::toroid;
  std::uint64_t seed_ = 0;
  bool trained_ = false;
  std::optional<TrainingSchedule> schedule_;
  std::vector<double> weights_;
};

struct DataBounds {
  std::vector<double> low, high;
};

inline DataBounds data_bounds(const std::vector<FeatureVector>& vectors) {
  if (vectors.empty()) throw ConfigError("no vectors to bound");
  DataBounds b{vectors[0].values, vectors[0].values};
  for (const auto& v : vectors)
    for (std::size_t i = 0; i < v.values.size() && i < b.low.size(); ++i) {
      b.low[i] = std::min(b.low[i], v.values[i]);
      b.high[i] = std::max(b.high[i], v.values[i]);
    }
  return b;
}

// Weights drawn uniformly within per-dimension bounds, [0, 1] when none are given.
inline EsomGrid init_grid(std::size_t rows, std::size_t cols, Topology topology, std::size_t dim, std::uint64_t seed,
                          const std::optional<DataBounds>& bounds = std::nullopt) {
  EsomGrid grid(rows, cols, topology, dim, seed);
  if (bounds && (bounds->low.size() != dim || bounds->high.size() != dim))
    throw ConfigError("data bounds dimension does not match grid dimension");
  detail::SeededRandom rng(seed);
  for (std::size_t u = 0; u < grid.units(); ++u) {
    auto w = grid.weight(u);
    for (std::size_t i = 0; i < dim; ++i) {
      double lo = bounds ? bounds->low[i] : 0.0, hi = bounds ? bounds->high[i] : 1.0;
      w[i] = lo + (hi - lo) * rng.uniform();
    }
  }
  return grid;
}

inline void check_vector(const EsomGrid& grid, std::span<const double> v) {
  if (v.size() != grid.dim())
    throw ConfigError("vector dimension " + std::to_string(v.size()) + " does not match grid dimension " +
                      std::to_string(grid.dim()));
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// Unit index minimizing Euclidean distance; the first in row-major order wins ties.
inline std::size_t best_matching_unit_index(const EsomGrid& grid, std::span<const double> v) {
  check_vector(grid, v);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < grid.units(); ++u) {
    double d = squared_distance(grid.weight(u), v);
    if (d < best_d) {
      best_d = d;
      best = u;
    }
  }
  return best;
}

inline std::pair<std::size_t, std::size_t> best_matching_unit(const EsomGrid& grid, std::span<const double> v) {
  std::size_t u = best_matching_unit_index(grid, v);
  return {u / grid.cols(), u % grid.cols()};
}

inline double quantization_error(const EsomGrid& grid, const std::vector<FeatureVector>& vectors) {
  if (vectors.empty()) return 0.0;
  double total = 0;
  for (const auto& v : vectors)
    total += std::sqrt(squared_distance(grid.weight(best_matching_unit_index(grid, v.values)), v.values));
  return total / static_cast<double>(vectors.size());
}

// Online training. Each epoch visits the vectors in a seeded shuffled order;
// every visit moves all units toward the vector by rate * exp(-d^2 / 2r^2)
// where d is the grid distance to the best-matching unit. When `qe_trace` is
// given it receives the quantization error before training and after each epoch.
inline EsomGrid train(const EsomGrid& grid, const std::vector<FeatureVector>& vectors,
                      const TrainingSchedule& schedule, std::vector<double>* qe_trace = nullptr) {
  if (vectors.empty()) throw ConfigError("training needs at least one vector");
  for (const auto& v : vectors) {
    check_vector(grid, v.values);
    for (double x : v.values)
      if (!std::isfinite(x)) throw ConfigError("non-finite value in vector of object " + v.object);
  }
  schedule.validate(grid.rows(), grid.cols());
  EsomGrid out = grid;
  if (qe_trace) qe_trace->assign(1, quantization_error(out, vectors));
  if (schedule.epochs == 0) return out;
  detail::SeededRandom rng(grid.seed() ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(vectors.size());
  for (std::size_t e = 0; e < schedule.epochs; ++e) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    double rate = schedule.rate_at(e);
    double radius = schedule.radius_at(e);
    double denom = 2.0 * radius * radius;
    for (std::size_t idx : order) {
      const auto& v = vectors[idx].values;
      std::size_t bmu = best_matching_unit_index(out, v);
      for (std::size_t u = 0; u < out.units(); ++u) {
        double h = rate * std::exp(-out.grid_distance2(bmu, u) / denom);
        if (h < 1e-12) continue;
        auto w = out.weight(u);
        for (std::size_t k = 0; k < w.size(); ++k) w[k] += h * (v[k] - w[k]);
      }
    }
    if (qe_trace) qe_trace->push_back(quantization_error(out, vectors));
  }
  out.trained_ = true;
  out.schedule_ = schedule;
  return out;
}

// Mean distance from each unit's weight to its 4-neighbors' weights.
inline std::vector<double> compute_umatrix(const EsomGrid& grid) {
  std::vector<double> u(grid.units(), 0.0);
  for (std::size_t i = 0; i < grid.units(); ++i) {
    auto ns = grid.neighbors(i);
    if (ns.empty()) continue;
    double s = 0;
    for (auto n : ns) s += std::sqrt(squared_distance(grid.weight(i), grid.weight(n)));
    u[i] = s / static_cast<double>(ns.size());
  }
  return u;
}

struct Projection {
  std::string object;
  std::size_t row;
  std::size_t col;
  std::string label;
  std::string url;
};

struct ObjectLabel {
  std::string label;
  std::string url;
};

inline std::vector<Projection> project(const EsomGrid& grid, const std::vector<FeatureVector>& vectors,
                                       const std::vector<ObjectLabel>& labels) {
  if (labels.size() != vectors.size()) throw ConfigError("one label per vector required");
  std::vector<Projection> out;
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    auto [r, c] = best_matching_unit(grid, vectors[i].values);
    out.push_back({vectors[i].object, r, c, labels[i].label, labels[i].url});
  }
  return out;
}

// Context rows as 0/1 vectors with their labels.
inline std::vector<FeatureVector> context_vectors(const FormalContext& ctx) {
  std::vector<FeatureVector> out;
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    FeatureVector v{ctx.objects()[g].id, std::vector<double>(ctx.attribute_count(), 0.0)};
    ctx.row(g).for_each([&](std::size_t m) { v.values[m] = 1.0; });
    out.push_back(std::move(v));
  }
  return out;
}

inline std::vector<ObjectLabel> context_labels(const FormalContext& ctx) {
  std::vector<ObjectLabel> out;
  for (const auto& o : ctx.objects()) out.push_back({o.label, o.url});
  return out;
}

// Relative term frequencies over the index vocabulary (sorted terms) for the
// context objects, which must be documents of the index.
inline std::vector<FeatureVector> term_frequency_vectors(const FormalContext& ctx, const InvertedIndex& index) {
  std::vector<std::string> vocab;
  for (const auto& [term, _] : index.postings()) vocab.push_back(term);
  std::vector<FeatureVector> out;
  std::map<std::string, std::size_t> row_of;
  for (std::size_t g = 0; g < ctx.object_count(); ++g) {
    row_of[ctx.objects()[g].id] = g;
    out.push_back({ctx.objects()[g].id, std::vector<double>(vocab.size(), 0.0)});
  }
  std::vector<double> length(ctx.object_count(), 0.0);
  for (std::size_t t = 0; t < vocab.size(); ++t)
    for (const auto& p : *index.find(vocab[t])) {
      auto it = row_of.find(p.document);
      if (it == row_of.end()) continue;
      out[it->second].values[t] += static_cast<double>(p.count());
      length[it->second] += static_cast<double>(p.count());
    }
  for (std::size_t g = 0; g < out.size(); ++g)
    if (length[g] > 0)
      for (auto& x : out[g].values) x /= length[g];
  return out;
}

inline nlohmann::json map_to_json(const EsomGrid& grid, const std::vector<Projection>& projections) {
  auto labels = nlohmann::json::array();
  for (const auto& p : projections)
    labels.push_back({{"id", p.object}, {"row", p.row}, {"col", p.col}, {"label", p.label}, {"url", p.url}});
  return {{"format", "cordiet-esom"},
          {"rows", grid.rows()},
          {"cols", grid.cols()},
          {"topology", to_string(grid.topology())},
          {"umatrix", compute_umatrix(grid)},
          {"labels", labels}};
}

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json grid_checkpoint(const EsomGrid& grid) {
  nlohmann::json j{{"format", "cordiet-esom-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"rows", grid.rows()},
                   {"cols", grid.cols()},
                   {"dim", grid.dim()},
                   {"topology", to_string(grid.topology())},
                   {"seed", grid.seed()},
                   {"trained", grid.trained()},
                   {"weights", grid.weights()}};
  if (const auto& s = grid.schedule())
    j["schedule"] = {{"epochs", s->epochs},
                     {"rateStart", s->rate_start},
                     {"rateEnd", s->rate_end},
                     {"radiusStart", s->radius_start},
                     {"radiusEnd", s->radius_end}};
  return j;
}

inline EsomGrid grid_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "cordiet-esom-checkpoint") throw ParseError("not an ESOM checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw ConfigError("unsupported ESOM checkpoint version");
  EsomGrid g(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
             parse_topology(j.at("topology").get<std::string>()), j.at("dim").get<std::size_t>(),
             j.at("seed").get<std::uint64_t>());
  auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != g.weights_.size()) throw ParseError("ESOM checkpoint has wrong weight count");
  g.weights_ = std::move(w);
  g.trained_ = j.value("trained", false);
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    g.schedule_ = TrainingSchedule{s.at("epochs").get<std::size_t>(), s.at("rateStart").get<double>(),
                                   s.at("rateEnd").get<double>(), s.at("radiusStart").get<double>(),
                                   s.at("radiusEnd").get<double>()};
  }
  return g;
}

}  // namespace cordiet
