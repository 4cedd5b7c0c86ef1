#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lernr {

// A feature vector with finite entries. Providers hand out unit-norm
// embeddings.
class Embedding {
 public:
  static constexpr double kUnitTolerance = 1e-6;

  Embedding() = default;
  // Throws InputError on empty input or non-finite entries.
  explicit Embedding(std::vector<float> values);

  std::span<const float> values() const { return values_; }
  std::size_t dim() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  double norm() const;

  // Unit-norm copy. Vectors already within kUnitTolerance of unit norm are
  // returned unchanged (bit for bit). Throws InputError for a zero vector.
  Embedding normalized() const;

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<float> values_;
};

// Cosine similarity accumulated in double, clamped to [-1, 1]. Returns 0 when
// either vector has zero norm.
double cosine(std::span<const float> a, std::span<const float> b);

std::uint64_t fnv1a64(std::string_view bytes);
std::string to_hex(std::uint64_t value);

// Lower-cased runs of ASCII letters and digits.
std::vector<std::string> tokenize(std::string_view text);

std::string_view trim(std::string_view s);

// Deterministic token-hash embedding.
//
// Each token seeds a 64-bit xorshift generator with its FNV-1a hash (a zero
// hash is replaced by 0x9E3779B97F4A7C15). Every component is drawn as
//
//   x ^= x << 13; x ^= x >> 7; x ^= x << 17;
//   value = (x >> 11) * 2^-53 * 2 - 1          // uniform in [-1, 1)
//
// The token vectors are summed in double, normalized in double and stored as
// float. Independent tokens give near-orthogonal directions (|cos| is on the
// order of 1/sqrt(dim)). Throws InputError for an empty token list or dim 0.
Embedding synthetic_scheme(std::span<const std::string> tokens, std::size_t dim);

}  // namespace lernr
