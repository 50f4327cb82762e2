#pragma once

#include <list>
#include <memory>
#include <mutex>
#include <unordered_map>

#include "lmr/io.hpp"
#include "lmr/model.hpp"

namespace lmr {

/// Read-only source of per-image local features.
class FeatureSource {
 public:
  virtual ~FeatureSource() = default;
  /// Throws LookupError naming the id when the image has no features.
  virtual std::shared_ptr<const LocalFeatureSet> get(std::string_view image) const = 0;
};

/// Features held in memory, keyed by image id.
class MemoryFeatureSource final : public FeatureSource {
 public:
  void add(LocalFeatureSet set);
  std::shared_ptr<const LocalFeatureSet> get(std::string_view image) const override;
  std::size_t size() const noexcept { return sets_.size(); }

 private:
  std::unordered_map<ImageId, std::shared_ptr<const LocalFeatureSet>> sets_;
};

/// `<dir>/<id>.lf` files behind an LRU cache. Thread-safe.
class DirectoryFeatureSource final : public FeatureSource {
 public:
  explicit DirectoryFeatureSource(fs::path dir, std::size_t cache_capacity = 4096);
  std::shared_ptr<const LocalFeatureSet> get(std::string_view image) const override;

  std::size_t cached() const;
  std::size_t loads() const;

 private:
  using Entry = std::pair<ImageId, std::shared_ptr<const LocalFeatureSet>>;
  fs::path dir_;
  std::size_t capacity_;
  mutable std::mutex mutex_;
  mutable std::list<Entry> lru_;
  mutable std::unordered_map<ImageId, std::list<Entry>::iterator> index_;
  mutable std::size_t loads_ = 0;
};

}  // namespace lmr
