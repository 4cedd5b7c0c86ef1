#include "lernr/providers.hpp"

#include <cstring>
#include <fstream>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lernr/error.hpp"

namespace lernr {

using nlohmann::json;

void attach_features(PosedFrame& frame, const EmbeddingProvider& provider) {
  frame.f_clip = provider.embed_frame(frame);
  frame.f_rnr = provider.embed_visual(frame);
}

void ProviderConfig::validate() const {
  if (d_clip == 0 || d_rnr == 0) throw InputError("embedding dimensions must be positive");
  if (kind == Kind::remote && endpoint.empty()) throw InputError("remote provider requires an endpoint");
  if (kind == Kind::file && features_manifest.empty()) throw InputError("file provider requires a features manifest");
  if (max_in_flight < 1) throw InputError("max_in_flight must be at least 1");
  if (retry.attempts < 1) throw InputError("retry attempts must be at least 1");
}

ProviderConfig::Kind ProviderConfig::parse_kind(std::string_view name) {
  if (name == "synthetic") return Kind::synthetic;
  if (name == "file") return Kind::file;
  if (name == "remote") return Kind::remote;
  throw InputError("unknown provider kind '" + std::string(name) + "'");
}

// ---------------------------------------------------------------- synthetic

SyntheticProvider::SyntheticProvider(std::size_t d_clip, std::size_t d_rnr) : d_clip_(d_clip), d_rnr_(d_rnr) {
  if (d_clip == 0 || d_rnr == 0) throw InputError("embedding dimensions must be positive");
}

Embedding SyntheticProvider::embed_text(std::string_view query) const {
  if (trim(query).empty()) throw InputError("query must not be empty");
  const std::vector<std::string> tokens = tokenize(query);
  if (tokens.empty()) throw InputError("query '" + std::string(query) + "' has no tokens");
  return synthetic_scheme(tokens, d_clip_);
}

Embedding SyntheticProvider::embed_labels(std::span<const std::string> labels) const {
  if (labels.empty()) throw InputError("synthetic frame embedding needs at least one label");
  if (labels.size() == 1) return embed_text(labels.front());
  std::vector<double> sum(d_clip_, 0.0);
  for (const std::string& label : labels) {
    const Embedding e = embed_text(label);
    for (std::size_t i = 0; i < d_clip_; ++i) sum[i] += e.values()[i];
  }
  double norm2 = 0;
  for (double v : sum) norm2 += v * v;
  if (norm2 == 0) throw InputError("label embeddings cancel out");
  const double norm = std::sqrt(norm2);
  std::vector<float> out(d_clip_);
  for (std::size_t i = 0; i < d_clip_; ++i) out[i] = static_cast<float>(sum[i] / norm);
  return Embedding(std::move(out));
}

Embedding SyntheticProvider::embed_frame(const PosedFrame& frame) const {
  if (frame.labels.empty()) throw InputError("frame '" + frame.id + "' has no labels for the synthetic provider");
  return embed_labels(frame.labels);
}

Embedding SyntheticProvider::embed_visual(const PosedFrame& frame) const {
  const std::string token = "rnr/" + frame.id;
  return synthetic_scheme(std::span<const std::string>(&token, 1), d_rnr_);
}

// --------------------------------------------------------------------- file

namespace {

std::vector<float> read_f32_sidecar(const std::filesystem::path& path, std::uint64_t offset, std::size_t dim) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LookupError("cannot open feature sidecar " + path.string());
  in.seekg(static_cast<std::streamoff>(offset));
  std::vector<unsigned char> bytes(dim * 4);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size())
    throw LookupError("feature sidecar " + path.string() + " is truncated");
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[i * 4]) |
                               (static_cast<std::uint32_t>(bytes[i * 4 + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[i * 4 + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[i * 4 + 3]) << 24);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

}  // namespace

FileProvider::FileProvider(const std::filesystem::path& manifest, std::size_t d_clip, std::size_t d_rnr)
    : d_clip_(d_clip), d_rnr_(d_rnr) {
  std::ifstream in(manifest);
  if (!in) throw InputError("cannot open features manifest " + manifest.string());
  const std::filesystem::path base = manifest.parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json entry;
    try {
      entry = json::parse(line);
    } catch (const json::exception& e) {
      throw InputError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string id = entry.at("id").get<std::string>();
    const std::size_t dim = entry.at("dim").get<std::size_t>();
    std::vector<float> values;
    if (entry.contains("values")) {
      values = entry.at("values").get<std::vector<float>>();
    } else if (entry.contains("path")) {
      values = read_f32_sidecar(base / entry.at("path").get<std::string>(), entry.value("offset", std::uint64_t{0}), dim);
    } else {
      throw InputError(manifest.string() + ":" + std::to_string(line_no) + ": entry needs 'values' or 'path'");
    }
    if (values.size() != dim)
      throw InputError(manifest.string() + ":" + std::to_string(line_no) + ": declared dim " + std::to_string(dim) +
                       " but found " + std::to_string(values.size()) + " values");
    vectors_.insert_or_assign(id, Embedding(std::move(values)));
  }
}

Embedding FileProvider::lookup(const std::string& key, std::size_t dim) const {
  const auto it = vectors_.find(key);
  if (it == vectors_.end()) throw LookupError("no precomputed feature for '" + key + "'");
  if (it->second.dim() != dim)
    throw LookupError("feature '" + key + "' has dim " + std::to_string(it->second.dim()) + ", expected " +
                      std::to_string(dim));
  return it->second.normalized();
}

Embedding FileProvider::embed_text(std::string_view query) const {
  const std::string_view key = trim(query);
  if (key.empty()) throw InputError("query must not be empty");
  return lookup(std::string(key), d_clip_);
}

Embedding FileProvider::embed_frame(const PosedFrame& frame) const {
  return lookup(frame.clip_ref.empty() ? frame.id : frame.clip_ref, d_clip_);
}

Embedding FileProvider::embed_visual(const PosedFrame& frame) const {
  return lookup(frame.rnr_ref.empty() ? frame.id + "#rnr" : frame.rnr_ref, d_rnr_);
}

// ------------------------------------------------------------------- remote

RemoteProvider::RemoteProvider(std::string endpoint, std::size_t d_clip, std::size_t d_rnr, RetryPolicy retry,
                               int max_in_flight)
    : endpoint_(std::move(endpoint)), d_clip_(d_clip), d_rnr_(d_rnr), retry_(retry), in_flight_(max_in_flight) {
  if (endpoint_.empty()) throw InputError("remote provider requires an endpoint");
  if (max_in_flight < 1 || max_in_flight > 1024) throw InputError("max_in_flight must be in [1, 1024]");
  if (retry_.attempts < 1) throw InputError("retry attempts must be at least 1");
}

RemoteProvider::~RemoteProvider() = default;

Embedding RemoteProvider::request(const std::string& body, std::size_t expected_dim) const {
  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  std::chrono::milliseconds backoff = retry_.initial_backoff;
  int status = 0;
  std::string reason;
  for (int attempt = 1; attempt <= retry_.attempts; ++attempt) {
    httplib::Client client(endpoint_);
    client.set_connection_timeout(5);
    client.set_read_timeout(30);
    const httplib::Result res = client.Post("/embed", body, "application/json");
    if (!res) {
      status = 0;
      reason = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 200 && res->status < 300) {
      json reply;
      try {
        reply = json::parse(res->body);
        const std::size_t dim = reply.at("dim").get<std::size_t>();
        std::vector<float> values = reply.at("values").get<std::vector<float>>();
        if (dim != values.size() || dim != expected_dim)
          throw ProviderError("embedding service returned dim " + std::to_string(values.size()) + ", expected " +
                                  std::to_string(expected_dim),
                              attempt, res->status);
        return Embedding(std::move(values)).normalized();
      } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what(), attempt, res->status);
      }
    } else {
      status = res->status;
      reason = "HTTP " + std::to_string(status);
      if (status < 500) throw ProviderError("embedding service rejected request: " + reason, attempt, status);
    }
    if (attempt < retry_.attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw ProviderError("embedding service failed after " + std::to_string(retry_.attempts) + " attempts: " + reason,
                      retry_.attempts, status);
}

Embedding RemoteProvider::embed_text(std::string_view query) const {
  const std::string_view q = trim(query);
  if (q.empty()) throw InputError("query must not be empty");
  return request(json{{"kind", "text"}, {"payload", std::string(q)}}.dump(), d_clip_);
}

Embedding RemoteProvider::embed_frame(const PosedFrame& frame) const {
  const json payload{{"id", frame.id}, {"ref", frame.clip_ref}, {"encoder", "clip"}};
  return request(json{{"kind", "image"}, {"payload", payload}}.dump(), d_clip_);
}

Embedding RemoteProvider::embed_visual(const PosedFrame& frame) const {
  const json payload{{"id", frame.id}, {"ref", frame.rnr_ref}, {"encoder", "rnr"}};
  return request(json{{"kind", "image"}, {"payload", payload}}.dump(), d_rnr_);
}

// ------------------------------------------------------------------- cached

CachedProvider::CachedProvider(std::shared_ptr<const EmbeddingProvider> inner, std::size_t capacity)
    : inner_(std::move(inner)), capacity_(capacity) {
  if (!inner_) throw InputError("cached provider needs an inner provider");
}

template <class Compute>
Embedding CachedProvider::cached(const std::string& key, Compute&& compute) const {
  {
    std::shared_lock lock(mutex_);
    const auto it = entries_.find(key);
    if (it != entries_.end()) {
      hits_.fetch_add(1, std::memory_order_relaxed);
      return it->second;
    }
  }
  Embedding value = compute();
  if (capacity_ == 0) return value;
  std::unique_lock lock(mutex_);
  if (entries_.emplace(key, value).second) {
    order_.push_back(key);
    while (order_.size() > capacity_) {
      entries_.erase(order_.front());
      order_.pop_front();
    }
  }
  return value;
}

namespace {

std::string frame_key(std::string_view channel, const PosedFrame& frame) {
  std::string key(channel);
  for (const std::string* part : {&frame.id, &frame.clip_ref, &frame.rnr_ref}) {
    key += '\x1f';
    key += *part;
  }
  for (const std::string& label : frame.labels) {
    key += '\x1e';
    key += label;
  }
  return key;
}

}  // namespace

Embedding CachedProvider::embed_text(std::string_view query) const {
  const std::string_view q = trim(query);
  if (q.empty()) throw InputError("query must not be empty");
  return cached("text\x1f" + std::string(q), [&] { return inner_->embed_text(q); });
}

Embedding CachedProvider::embed_frame(const PosedFrame& frame) const {
  return cached(frame_key("clip", frame), [&] { return inner_->embed_frame(frame); });
}

Embedding CachedProvider::embed_visual(const PosedFrame& frame) const {
  return cached(frame_key("rnr", frame), [&] { return inner_->embed_visual(frame); });
}

std::size_t CachedProvider::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::size_t CachedProvider::hits() const { return hits_.load(); }

std::shared_ptr<const EmbeddingProvider> make_provider(const ProviderConfig& config) {
  config.validate();
  std::shared_ptr<const EmbeddingProvider> provider;
  switch (config.kind) {
    case ProviderConfig::Kind::synthetic:
      provider = std::make_shared<SyntheticProvider>(config.d_clip, config.d_rnr);
      break;
    case ProviderConfig::Kind::file:
      provider = std::make_shared<FileProvider>(config.features_manifest, config.d_clip, config.d_rnr);
      break;
    case ProviderConfig::Kind::remote:
      provider = std::make_shared<RemoteProvider>(config.endpoint, config.d_clip, config.d_rnr, config.retry,
                                                  config.max_in_flight);
      break;
  }
  if (config.cache_capacity > 0) provider = std::make_shared<CachedProvider>(provider, config.cache_capacity);
  return provider;
}

}  // namespace lernr
