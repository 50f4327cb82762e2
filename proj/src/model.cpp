#include "lmr/model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_set>

#include "lmr/error.hpp"

namespace lmr {

void validate_image_id(std::string_view id) {
  if (id.empty()) throw ValidationError("image id must be non-empty");
  for (char c : id) {
    if (c == ',' || std::isspace(static_cast<unsigned char>(c))) {
      throw ValidationError("image id '" + std::string(id) + "' contains a comma or whitespace");
    }
  }
}

namespace {

template <typename T>
void append_row(std::vector<float>& data, std::uint32_t dim, const ImageId& id,
                std::span<const T> values) {
  if (values.size() != dim) {
    throw ValidationError("descriptor for '" + id + "' has length " +
                          std::to_string(values.size()) + ", store dim is " + std::to_string(dim));
  }
  for (T v : values) {
    if (!std::isfinite(v)) throw ValidationError("descriptor for '" + id + "' is not finite");
    data.push_back(static_cast<float>(v));
  }
}

}  // namespace

void DescriptorStore::add(const ImageId& id, std::span<const float> values) {
  validate_image_id(id);
  if (index_.count(id)) throw ValidationError("duplicate image id '" + id + "' in store");
  append_row(data_, dim_, id, values);
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
}

void DescriptorStore::add(const ImageId& id, std::span<const double> values) {
  validate_image_id(id);
  if (index_.count(id)) throw ValidationError("duplicate image id '" + id + "' in store");
  append_row(data_, dim_, id, values);
  index_.emplace(id, ids_.size());
  ids_.push_back(id);
}

std::optional<std::size_t> DescriptorStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::span<const float> DescriptorStore::at(std::string_view id) const {
  auto i = find(id);
  if (!i) throw LookupError("no descriptor for image '" + std::string(id) + "'");
  return row(*i);
}

void LabelTable::add(const ImageId& id, ClassLabel label) {
  validate_image_id(id);
  if (!map_.emplace(id, label).second) {
    throw ValidationError("duplicate image id '" + id + "' in label table");
  }
  order_.emplace_back(id, label);
}

std::optional<ClassLabel> LabelTable::find(std::string_view id) const {
  auto it = map_.find(std::string(id));
  if (it == map_.end()) return std::nullopt;
  return it->second;
}

ClassLabel LabelTable::at(std::string_view id) const {
  auto it = map_.find(std::string(id));
  if (it == map_.end()) throw LookupError("no label for image '" + std::string(id) + "'");
  return it->second;
}

bool ranks_before(const Prediction& a, const Prediction& b) {
  if (a.guess.has_value() != b.guess.has_value()) return a.guess.has_value();
  if (a.guess && a.guess->confidence != b.guess->confidence) {
    return a.guess->confidence > b.guess->confidence;
  }
  return a.image < b.image;
}

Submission ranked(const Submission& sub) {
  Submission out = sub;
  std::sort(out.rows.begin(), out.rows.end(), ranks_before);
  return out;
}

void validate_submission(const Submission& sub) {
  std::unordered_set<std::string_view> seen;
  seen.reserve(sub.rows.size());
  for (const auto& row : sub.rows) {
    validate_image_id(row.image);
    if (!seen.insert(row.image).second) {
      throw ValidationError("duplicate image id '" + row.image + "' in submission");
    }
    if (row.guess && !std::isfinite(row.guess->confidence)) {
      throw ValidationError("non-finite confidence for '" + row.image + "'");
    }
  }
}

}  // namespace lmr
