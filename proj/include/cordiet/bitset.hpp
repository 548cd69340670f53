#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <vector>

namespace cordiet {

// Fixed-size dynamic bitset with the set algebra FCA needs.
class Bitset {
 public:
  Bitset() = default;
  explicit Bitset(std::size_t n, bool value = false)
      : n_(n), words_((n + 63) / 64, value ? ~std::uint64_t{0} : 0) {
    trim();
  }

  std::size_t size() const { return n_; }

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }

  std::size_t count() const {
    std::size_t c = 0;
    for (auto w : words_) c += static_cast<std::size_t>(std::popcount(w));
    return c;
  }
  bool none() const {
    for (auto w : words_)
      if (w) return false;
    return true;
  }

  Bitset& operator&=(const Bitset& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
    return *this;
  }
  Bitset& operator|=(const Bitset& o) {
    for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
    return *this;
  }
  friend Bitset operator&(Bitset a, const Bitset& b) { return a &= b; }
  friend Bitset operator|(Bitset a, const Bitset& b) { return a |= b; }

  bool is_subset_of(const Bitset& o) const {
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (words_[i] & ~o.words_[i]) return false;
    return true;
  }

  // True when the two sets agree on every element below `j`.
  bool equal_below(const Bitset& o, std::size_t j) const {
    std::size_t full = j >> 6;
    for (std::size_t i = 0; i < full; ++i)
      if (words_[i] != o.words_[i]) return false;
    if (j & 63) {
      std::uint64_t mask = (std::uint64_t{1} << (j & 63)) - 1;
      if ((words_[full] ^ o.words_[full]) & mask) return false;
    }
    return true;
  }

  // Lectic order: a < b iff the smallest element of the symmetric difference
  // belongs to b.
  friend bool lectic_less(const Bitset& a, const Bitset& b) {
    for (std::size_t i = 0; i < a.words_.size(); ++i) {
      std::uint64_t diff = a.words_[i] ^ b.words_[i];
      if (diff) {
        int bit = std::countr_zero(diff);
        return (b.words_[i] >> bit) & 1u;
      }
    }
    return false;
  }

  bool operator==(const Bitset& o) const = default;

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        int b = std::countr_zero(bits);
        f(w * 64 + static_cast<std::size_t>(b));
        bits &= bits - 1;
      }
    }
  }

  std::vector<std::size_t> elements() const {
    std::vector<std::size_t> out;
    for_each([&](std::size_t i) { out.push_back(i); });
    return out;
  }

  std::size_t hash() const {
    std::size_t h = n_;
    for (auto w : words_) h ^= std::hash<std::uint64_t>{}(w) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> words_;

  void trim() {
    if (n_ & 63) words_.back() &= (std::uint64_t{1} << (n_ & 63)) - 1;
  }
};

struct BitsetHash {
  std::size_t operator()(const Bitset& b) const { return b.hash(); }
};

}  // namespace cordiet
