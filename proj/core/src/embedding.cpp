#include "lernr/embedding.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "lernr/error.hpp"

namespace lernr {

Embedding::Embedding(std::vector<float> values) : values_(std::move(values)) {
  if (values_.empty()) throw InputError("embedding must have at least one component");
  for (float v : values_)
    if (!std::isfinite(v)) throw InputError("embedding has non-finite components");
}

double Embedding::norm() const {
  double sum = 0;
  for (float v : values_) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

Embedding Embedding::normalized() const {
  const double n = norm();
  if (n == 0) throw InputError("cannot normalize a zero vector");
  if (std::abs(n - 1.0) <= kUnitTolerance) return *this;
  std::vector<float> out(values_.size());
  for (std::size_t i = 0; i < values_.size(); ++i) out[i] = static_cast<float>(values_[i] / n);
  return Embedding(std::move(out));
}

double cosine(std::span<const float> a, std::span<const float> b) {
  double dot = 0, na = 0, nb = 0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0 || nb == 0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string to_hex(std::uint64_t value) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kDigits[value & 0xf];
    value >>= 4;
  }
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::string_view trim(std::string_view s) {
  const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && is_space(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && is_space(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

Embedding synthetic_scheme(std::span<const std::string> tokens, std::size_t dim) {
  if (dim == 0) throw InputError("embedding dimension must be positive");
  if (tokens.empty()) throw InputError("synthetic embedding needs at least one token");

  std::vector<double> sum(dim, 0.0);
  for (const std::string& token : tokens) {
    std::uint64_t x = fnv1a64(token);
    if (x == 0) x = 0x9E3779B97F4A7C15ULL;
    for (std::size_t i = 0; i < dim; ++i) {
      x ^= x << 13;
      x ^= x >> 7;
      x ^= x << 17;
      sum[i] += static_cast<double>(x >> 11) * 0x1.0p-53 * 2.0 - 1.0;
    }
  }

  double norm2 = 0;
  for (double v : sum) norm2 += v * v;
  const double norm = std::sqrt(norm2);
  if (norm == 0) throw InputError("synthetic embedding collapsed to zero");
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(sum[i] / norm);
  return Embedding(std::move(out));
}

}  // namespace lernr
