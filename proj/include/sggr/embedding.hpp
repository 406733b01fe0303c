#pragma once

#include <cstddef>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sggr {

inline constexpr std::size_t kDefaultEmbeddingDim = 384;

/// Immutable unit-norm vector. Copies share storage.
class EmbeddingVector {
 public:
  EmbeddingVector() = default;
  /// Normalizes `values`. Throws Error(InvalidVector) for empty, zero or non-finite input.
  explicit EmbeddingVector(std::vector<double> values);

  std::size_t dim() const { return values_ ? values_->size() : 0; }
  std::span<const double> values() const;
  bool shares_storage_with(const EmbeddingVector& other) const { return values_ && values_ == other.values_; }

 private:
  std::shared_ptr<const std::vector<double>> values_;
};

/// Dot product of unit vectors, clamped to [-1,1]. Throws Error(DimMismatch).
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// max(0, cosine). Every similarity feeding a reward goes through this.
double reward_sim(const EmbeddingVector& a, const EmbeddingVector& b);

/// Backing store that resolves keys to raw vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  /// Order-preserving. Throws Error(MissingEmbedding) or ProviderUnavailable.
  virtual std::vector<EmbeddingVector> fetch(std::span<const std::string> keys) = 0;
  virtual std::string describe() const = 0;
  /// Cheap liveness probe for health reporting.
  virtual bool ready() const { return true; }
};

/// In-memory table, typically loaded from a line-delimited {"key","vector"} file.
class TableProvider : public EmbeddingProvider {
 public:
  TableProvider() = default;
  /// Throws Error(InvalidInput) on duplicate keys or ragged dimensions.
  explicit TableProvider(std::map<std::string, std::vector<double>> table);
  static std::unique_ptr<TableProvider> load(const std::string& path);

  std::vector<EmbeddingVector> fetch(std::span<const std::string> keys) override;
  std::string describe() const override;
  std::size_t size() const { return table_.size(); }
  std::size_t dim() const { return dim_; }

 private:
  std::unordered_map<std::string, EmbeddingVector> table_;
  std::size_t dim_ = 0;
  std::string origin_ = "memory";
};

/// POST {endpoint}/embed with {"keys":[...]} -> {"vectors":[[...]]}.
class RemoteProvider : public EmbeddingProvider {
 public:
  struct Options {
    std::string base_url;  // e.g. "http://127.0.0.1:8090"
    double timeout_s = 10.0;
    int max_attempts = 3;
    double backoff_s = 0.05;  // doubled after each failed attempt
  };
  explicit RemoteProvider(Options opts);

  std::vector<EmbeddingVector> fetch(std::span<const std::string> keys) override;
  std::string describe() const override;
  bool ready() const override;

 private:
  Options opts_;
};

struct CacheStats {
  std::size_t hits = 0;
  std::size_t misses = 0;
  std::size_t evictions = 0;
  std::size_t entries = 0;
};

/// Thread-safe LRU cache in front of a provider. Eviction never changes returned values.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::shared_ptr<EmbeddingProvider> provider, std::size_t cache_capacity = 65536);

  /// Throws Error(InvalidInput) for an empty key, otherwise whatever the provider throws.
  EmbeddingVector embed(const std::string& key);
  /// Resolves all keys, fetching the misses in one provider call.
  std::vector<EmbeddingVector> embed_many(std::span<const std::string> keys);

  CacheStats stats() const;
  const EmbeddingProvider& provider() const { return *provider_; }
  std::size_t capacity() const { return capacity_; }

 private:
  void insert_locked(const std::string& key, const EmbeddingVector& v);

  std::shared_ptr<EmbeddingProvider> provider_;
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::list<std::pair<std::string, EmbeddingVector>> lru_;  // front = most recent
  std::unordered_map<std::string, decltype(lru_)::iterator> index_;
  CacheStats stats_;
};

}  // namespace sggr
