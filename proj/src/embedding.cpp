#include "sggr/embedding.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "sggr/codec.hpp"
#include "sggr/error.hpp"

namespace sggr {

EmbeddingVector::EmbeddingVector(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidVector, "empty embedding");
  double sq = 0;
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(ErrorCode::InvalidVector, "non-finite embedding component");
    sq += v * v;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > 0) || !std::isfinite(norm)) throw Error(ErrorCode::InvalidVector, "zero-norm embedding");
  for (double& v : values) v /= norm;
  values_ = std::make_shared<const std::vector<double>>(std::move(values));
}

std::span<const double> EmbeddingVector::values() const {
  if (!values_) return {};
  return {values_->data(), values_->size()};
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim() || a.dim() == 0) {
    throw Error(ErrorCode::DimMismatch, std::to_string(a.dim()) + " vs " + std::to_string(b.dim()));
  }
  if (a.shares_storage_with(b)) return 1.0;
  const auto x = a.values();
  const auto y = b.values();
  double dot = 0;
  bool identical = true;
  for (std::size_t i = 0; i < x.size(); ++i) {
    dot += x[i] * y[i];
    identical = identical && x[i] == y[i];
  }
  // Equal unit vectors are exactly parallel; rounding in the dot product must not say otherwise.
  if (identical) return 1.0;
  return std::clamp(dot, -1.0, 1.0);
}

double reward_sim(const EmbeddingVector& a, const EmbeddingVector& b) { return std::max(0.0, cosine(a, b)); }

TableProvider::TableProvider(std::map<std::string, std::vector<double>> table) {
  for (auto& [key, values] : table) {
    if (key.empty()) throw Error(ErrorCode::InvalidInput, "empty embedding key");
    if (dim_ == 0) dim_ = values.size();
    if (values.size() != dim_) {
      throw Error(ErrorCode::InvalidInput, "embedding '" + key + "' has dimension " + std::to_string(values.size()) +
                                               ", expected " + std::to_string(dim_));
    }
    table_.emplace(key, EmbeddingVector(std::move(values)));
  }
}

std::unique_ptr<TableProvider> TableProvider::load(const std::string& path) {
  std::map<std::string, std::vector<double>> table;
  for_each_json_line(path, [&](const json& doc, std::size_t lineno) {
    const auto where = path + ":" + std::to_string(lineno);
    if (!doc.is_object() || !doc.contains("key") || !doc.contains("vector") || !doc["key"].is_string() ||
        !doc["vector"].is_array()) {
      throw Error(ErrorCode::InvalidInput, where + ": expected {\"key\": string, \"vector\": [float]}");
    }
    std::vector<double> v;
    v.reserve(doc["vector"].size());
    for (const auto& x : doc["vector"]) {
      if (!x.is_number()) throw Error(ErrorCode::InvalidInput, where + ": non-numeric vector component");
      v.push_back(x.get<double>());
    }
    auto key = doc["key"].get<std::string>();
    if (!table.emplace(key, std::move(v)).second) {
      throw Error(ErrorCode::InvalidInput, where + ": duplicate key '" + key + "'");
    }
  });
  auto out = std::make_unique<TableProvider>(std::move(table));
  out->origin_ = path;
  return out;
}

std::vector<EmbeddingVector> TableProvider::fetch(std::span<const std::string> keys) {
  std::vector<EmbeddingVector> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    auto it = table_.find(k);
    if (it == table_.end()) throw Error(ErrorCode::MissingEmbedding, "no embedding for '" + k + "'");
    out.push_back(it->second);
  }
  return out;
}

std::string TableProvider::describe() const {
  return "table:" + origin_ + " (" + std::to_string(table_.size()) + " keys, dim " + std::to_string(dim_) + ")";
}

RemoteProvider::RemoteProvider(Options opts) : opts_(std::move(opts)) {
  if (opts_.max_attempts < 1) throw Error(ErrorCode::InvalidConfig, "max_attempts must be >= 1");
}

std::vector<EmbeddingVector> RemoteProvider::fetch(std::span<const std::string> keys) {
  if (keys.empty()) return {};
  httplib::Client client(opts_.base_url);
  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(opts_.timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  const std::string body = json{{"keys", std::vector<std::string>(keys.begin(), keys.end())}}.dump();

  int last_status = 0;
  std::string last_error;
  double backoff = opts_.backoff_s;
  int attempts = 0;
  for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
    attempts = attempt;
    auto res = client.Post("/embed", body, "application/json");
    if (res && res->status == 200) {
      auto doc = json::parse(res->body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("vectors") || !doc["vectors"].is_array() ||
          doc["vectors"].size() != keys.size()) {
        throw Error(ErrorCode::InvalidInput, "malformed /embed response");
      }
      std::vector<EmbeddingVector> out;
      out.reserve(keys.size());
      for (const auto& row : doc["vectors"]) {
        if (!row.is_array()) throw Error(ErrorCode::InvalidInput, "malformed /embed response");
        out.emplace_back(row.get<std::vector<double>>());
      }
      return out;
    }
    if (res) {
      last_status = res->status;
      last_error = "HTTP " + std::to_string(res->status);
      if (res->status == 404 && res->body.find("MISSING_EMBEDDING") != std::string::npos) {
        throw Error(ErrorCode::MissingEmbedding, res->body);
      }
      if (res->status >= 400 && res->status < 500) break;  // not retryable
    } else {
      last_error = httplib::to_string(res.error());
    }
    if (attempt < opts_.max_attempts) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2;
    }
  }
  throw ProviderUnavailable(opts_.base_url + "/embed: " + last_error, attempts, last_status);
}

std::string RemoteProvider::describe() const { return "remote:" + opts_.base_url; }

bool RemoteProvider::ready() const {
  httplib::Client client(opts_.base_url);
  client.set_connection_timeout(1, 0);
  auto res = client.Post("/embed", R"({"keys":[]})", "application/json");
  return res && res->status < 500;
}

EmbeddingStore::EmbeddingStore(std::shared_ptr<EmbeddingProvider> provider, std::size_t cache_capacity)
    : provider_(std::move(provider)), capacity_(cache_capacity) {
  if (!provider_) throw Error(ErrorCode::InvalidConfig, "embedding store needs a provider");
  if (capacity_ == 0) throw Error(ErrorCode::InvalidConfig, "cache capacity must be positive");
}

void EmbeddingStore::insert_locked(const std::string& key, const EmbeddingVector& v) {
  if (auto it = index_.find(key); it != index_.end()) {
    lru_.splice(lru_.begin(), lru_, it->second);
    return;
  }
  lru_.emplace_front(key, v);
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
    ++stats_.evictions;
  }
  stats_.entries = lru_.size();
}

EmbeddingVector EmbeddingStore::embed(const std::string& key) {
  return embed_many(std::span<const std::string>(&key, 1)).front();
}

std::vector<EmbeddingVector> EmbeddingStore::embed_many(std::span<const std::string> keys) {
  std::vector<EmbeddingVector> out(keys.size());
  std::vector<std::string> missing;
  std::vector<std::size_t> missing_pos;
  {
    std::lock_guard lock(mu_);
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].empty()) throw Error(ErrorCode::InvalidInput, "empty embedding key");
      if (auto it = index_.find(keys[i]); it != index_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        out[i] = it->second->second;
        ++stats_.hits;
      } else {
        missing.push_back(keys[i]);
        missing_pos.push_back(i);
        ++stats_.misses;
      }
    }
  }
  if (missing.empty()) return out;

  // Provider calls happen outside the lock; a concurrent fetch of the same key yields equal values.
  auto fetched = provider_->fetch(missing);
  std::lock_guard lock(mu_);
  for (std::size_t j = 0; j < missing.size(); ++j) {
    out[missing_pos[j]] = fetched[j];
    insert_locked(missing[j], fetched[j]);
  }
  return out;
}

CacheStats EmbeddingStore::stats() const {
  std::lock_guard lock(mu_);
  return stats_;
}

}  // namespace sggr
