#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lmr {

using ImageId = std::string;
using ClassLabel = std::uint64_t;

/// Dot product of two float rows accumulated in double, in index order.
inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

/// Throws ValidationError unless `id` is non-empty and free of commas and whitespace.
void validate_image_id(std::string_view id);

/// Id-indexed matrix of fixed-dimension global descriptors, kept in insertion order.
class DescriptorStore {
 public:
  DescriptorStore() = default;
  explicit DescriptorStore(std::uint32_t dim) : dim_(dim) {}

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  /// Appends a descriptor. Rejects duplicate ids, wrong lengths and non-finite values.
  void add(const ImageId& id, std::span<const float> values);
  void add(const ImageId& id, std::span<const double> values);

  const ImageId& id(std::size_t i) const { return ids_.at(i); }
  const std::vector<ImageId>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<const float> matrix() const noexcept { return data_; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Row for `id`; throws LookupError naming the id when absent.
  std::span<const float> at(std::string_view id) const;

  bool operator==(const DescriptorStore& other) const {
    return dim_ == other.dim_ && ids_ == other.ids_ && data_ == other.data_;
  }

 private:
  std::uint32_t dim_ = 0;
  std::vector<ImageId> ids_;
  std::vector<float> data_;
  std::unordered_map<ImageId, std::size_t> index_;
};

/// Image id to landmark class. Insertion order is kept for deterministic output.
class LabelTable {
 public:
  void add(const ImageId& id, ClassLabel label);
  std::size_t size() const noexcept { return order_.size(); }
  bool empty() const noexcept { return order_.empty(); }
  bool contains(std::string_view id) const { return map_.find(std::string(id)) != map_.end(); }
  std::optional<ClassLabel> find(std::string_view id) const;
  /// Throws LookupError naming the id when absent.
  ClassLabel at(std::string_view id) const;
  const std::vector<std::pair<ImageId, ClassLabel>>& entries() const noexcept { return order_; }

  bool operator==(const LabelTable& other) const { return order_ == other.order_; }

 private:
  std::vector<std::pair<ImageId, ClassLabel>> order_;
  std::unordered_map<ImageId, ClassLabel> map_;
};

struct Guess {
  ClassLabel label = 0;
  double confidence = 0.0;
  bool operator==(const Guess&) const = default;
};

/// One submission row; an empty guess is a distractor call.
struct Prediction {
  ImageId image;
  std::optional<Guess> guess;
  bool operator==(const Prediction&) const = default;
};

struct Submission {
  std::vector<Prediction> rows;
  bool operator==(const Submission&) const = default;
};

/// Strict weak order defining "ranked order": non-empty before empty, confidence
/// descending, then ascending id.
bool ranks_before(const Prediction& a, const Prediction& b);

/// Copy of `sub` sorted in ranked order.
Submission ranked(const Submission& sub);

/// Throws ValidationError on duplicate ids or non-finite confidences.
void validate_submission(const Submission& sub);

struct Keypoint {
  float x = 0;
  float y = 0;
  float scale = 1;
  bool operator==(const Keypoint&) const = default;
};

/// Keypoints of one image with a row-major (n x desc_dim) descriptor block.
struct LocalFeatureSet {
  ImageId image;
  std::uint32_t desc_dim = 0;
  std::vector<Keypoint> keypoints;
  std::vector<float> descriptors;

  std::size_t size() const noexcept { return keypoints.size(); }
  std::span<const float> descriptor(std::size_t i) const {
    return {descriptors.data() + i * desc_dim, desc_dim};
  }
  bool operator==(const LocalFeatureSet&) const = default;
};

}  // namespace lmr
