#include "lmr/features.hpp"

#include "lmr/error.hpp"

namespace lmr {

void MemoryFeatureSource::add(LocalFeatureSet set) {
  auto id = set.image;
  validate_image_id(id);
  if (set.descriptors.size() != set.keypoints.size() * set.desc_dim) {
    throw ValidationError("descriptor block size does not match keypoint count for '" + id + "'");
  }
  sets_[id] = std::make_shared<const LocalFeatureSet>(std::move(set));
}

std::shared_ptr<const LocalFeatureSet> MemoryFeatureSource::get(std::string_view image) const {
  auto it = sets_.find(std::string(image));
  if (it == sets_.end()) {
    throw LookupError("no local features for image '" + std::string(image) + "'");
  }
  return it->second;
}

DirectoryFeatureSource::DirectoryFeatureSource(fs::path dir, std::size_t cache_capacity)
    : dir_(std::move(dir)), capacity_(std::max<std::size_t>(1, cache_capacity)) {}

std::shared_ptr<const LocalFeatureSet> DirectoryFeatureSource::get(std::string_view image) const {
  const std::string key(image);
  {
    std::lock_guard lock(mutex_);
    auto it = index_.find(key);
    if (it != index_.end()) {
      lru_.splice(lru_.begin(), lru_, it->second);
      return it->second->second;
    }
  }
  auto path = local_feature_path(dir_, image);
  if (!fs::exists(path)) {
    throw LookupError("no local features for image '" + key + "' (" + path.string() + ")");
  }
  auto set = std::make_shared<const LocalFeatureSet>(load_local_features(path));

  std::lock_guard lock(mutex_);
  ++loads_;
  auto it = index_.find(key);
  if (it != index_.end()) return it->second->second;
  lru_.emplace_front(key, set);
  index_[key] = lru_.begin();
  while (lru_.size() > capacity_) {
    index_.erase(lru_.back().first);
    lru_.pop_back();
  }
  return set;
}

std::size_t DirectoryFeatureSource::cached() const {
  std::lock_guard lock(mutex_);
  return lru_.size();
}

std::size_t DirectoryFeatureSource::loads() const {
  std::lock_guard lock(mutex_);
  return loads_;
}

}  // namespace lmr
