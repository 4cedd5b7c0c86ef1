#pragma once

#include <atomic>
#include <chrono>
#include <deque>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <semaphore>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>

#include "lernr/embedding.hpp"
#include "lernr/frame.hpp"

namespace lernr {

// Source of language-aligned (d_clip) and visual (d_rnr) features. All
// returned embeddings are unit norm. Implementations are safe to call
// concurrently.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual std::size_t clip_dim() const = 0;
  virtual std::size_t rnr_dim() const = 0;

  // Throws InputError when `query` is blank.
  virtual Embedding embed_text(std::string_view query) const = 0;
  virtual Embedding embed_frame(const PosedFrame& frame) const = 0;
  virtual Embedding embed_visual(const PosedFrame& frame) const = 0;
};

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
};

struct ProviderConfig {
  enum class Kind { synthetic, file, remote };

  Kind kind = Kind::synthetic;
  std::size_t d_clip = 512;
  std::size_t d_rnr = 32;
  std::string endpoint;                     // remote: base URL, e.g. http://127.0.0.1:8100
  std::filesystem::path features_manifest;  // file: JSONL manifest
  std::size_t cache_capacity = 0;           // 0 disables caching
  int max_in_flight = 4;                    // remote only
  RetryPolicy retry;

  void validate() const;
  static Kind parse_kind(std::string_view name);
};

// Text embeds as synthetic_scheme(tokenize(text)). A frame embeds as the
// normalized sum of embed_text(label) over its labels, so a frame with the
// single label "couch" carries exactly embed_text("couch"). The visual
// feature is synthetic_scheme({"rnr/" + id}, d_rnr).
class SyntheticProvider final : public EmbeddingProvider {
 public:
  explicit SyntheticProvider(std::size_t d_clip = 512, std::size_t d_rnr = 32);

  std::size_t clip_dim() const override { return d_clip_; }
  std::size_t rnr_dim() const override { return d_rnr_; }
  Embedding embed_text(std::string_view query) const override;
  Embedding embed_frame(const PosedFrame& frame) const override;
  Embedding embed_visual(const PosedFrame& frame) const override;

  Embedding embed_labels(std::span<const std::string> labels) const;

 private:
  std::size_t d_clip_;
  std::size_t d_rnr_;
};

// Precomputed vectors from a JSONL manifest. Each line is
//   {"id": "...", "dim": N, "values": [...]}            inline, or
//   {"id": "...", "dim": N, "path": "x.bin", "offset": B}  little-endian f32
// with `path` relative to the manifest and `offset` in bytes (default 0).
// Frames are looked up by clip_ref (falling back to the frame id) and
// rnr_ref (falling back to id + "#rnr"); text queries by the trimmed query.
class FileProvider final : public EmbeddingProvider {
 public:
  FileProvider(const std::filesystem::path& manifest, std::size_t d_clip, std::size_t d_rnr);

  std::size_t clip_dim() const override { return d_clip_; }
  std::size_t rnr_dim() const override { return d_rnr_; }
  Embedding embed_text(std::string_view query) const override;
  Embedding embed_frame(const PosedFrame& frame) const override;
  Embedding embed_visual(const PosedFrame& frame) const override;

  std::size_t entries() const { return vectors_.size(); }

 private:
  Embedding lookup(const std::string& key, std::size_t dim) const;

  std::size_t d_clip_;
  std::size_t d_rnr_;
  std::unordered_map<std::string, Embedding> vectors_;
};

// Client for an embedding service speaking
//   POST /embed {"kind": "text"|"image", "payload": ...} -> {"dim": N, "values": [...]}
// Text payloads are the trimmed query string. Image payloads are
//   {"id": frame id, "ref": clip_ref or rnr_ref, "encoder": "clip"|"rnr"}
// since the service owns the image store. Transport failures and 5xx
// responses are retried with exponential backoff; 4xx fail immediately.
class RemoteProvider final : public EmbeddingProvider {
 public:
  RemoteProvider(std::string endpoint, std::size_t d_clip, std::size_t d_rnr, RetryPolicy retry = {},
                 int max_in_flight = 4);
  ~RemoteProvider() override;

  std::size_t clip_dim() const override { return d_clip_; }
  std::size_t rnr_dim() const override { return d_rnr_; }
  Embedding embed_text(std::string_view query) const override;
  Embedding embed_frame(const PosedFrame& frame) const override;
  Embedding embed_visual(const PosedFrame& frame) const override;

 private:
  Embedding request(const std::string& body, std::size_t expected_dim) const;

  std::string endpoint_;
  std::size_t d_clip_;
  std::size_t d_rnr_;
  RetryPolicy retry_;
  mutable std::counting_semaphore<1024> in_flight_;
};

// Memoizes another provider. Readers share the cache; insertion is exclusive.
// Eviction is first-in first-out once `capacity` entries are held.
class CachedProvider final : public EmbeddingProvider {
 public:
  CachedProvider(std::shared_ptr<const EmbeddingProvider> inner, std::size_t capacity);

  std::size_t clip_dim() const override { return inner_->clip_dim(); }
  std::size_t rnr_dim() const override { return inner_->rnr_dim(); }
  Embedding embed_text(std::string_view query) const override;
  Embedding embed_frame(const PosedFrame& frame) const override;
  Embedding embed_visual(const PosedFrame& frame) const override;

  std::size_t size() const;
  std::size_t hits() const;

 private:
  template <class Compute>
  Embedding cached(const std::string& key, Compute&& compute) const;

  std::shared_ptr<const EmbeddingProvider> inner_;
  std::size_t capacity_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::string, Embedding> entries_;
  mutable std::deque<std::string> order_;
  mutable std::atomic<std::size_t> hits_{0};
};

std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderConfig& config);

}  // namespace lernr
