#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "lmr/io.hpp"
#include "lmr/model.hpp"
#include "lmr/random.hpp"

namespace lmr::test {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("lmr-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n = 0.0;
  do {
    n = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      n += x * x;
    }
  } while (n == 0.0);
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

inline std::string numbered(const std::string& prefix, std::size_t i) {
  std::string digits = std::to_string(i);
  return prefix + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

inline DescriptorStore random_store(Rng& rng, std::size_t n, std::size_t dim,
                                    const std::string& prefix) {
  DescriptorStore store(static_cast<std::uint32_t>(dim));
  for (std::size_t i = 0; i < n; ++i) store.add(numbered(prefix, i), random_unit(rng, dim));
  return store;
}

struct AffineMap {
  double a11, a12, tx, a21, a22, ty;
  std::pair<double, double> apply(double x, double y) const {
    return {a11 * x + a12 * y + tx, a21 * x + a22 * y + ty};
  }
};

/// Rotation, anisotropic scale and shift that keep a 1000 px frame mostly in view.
inline AffineMap random_affine(Rng& rng) {
  const double th = rng.uniform(-0.5, 0.5);
  const double sx = rng.uniform(0.8, 1.2);
  const double sy = rng.uniform(0.8, 1.2);
  const double shear = rng.uniform(-0.1, 0.1);
  return {sx * std::cos(th), -sy * std::sin(th) + shear, rng.uniform(-80, 80),
          sx * std::sin(th), sy * std::cos(th), rng.uniform(-80, 80)};
}

inline void push_feature(LocalFeatureSet& set, double x, double y, const std::vector<double>& desc) {
  set.keypoints.push_back({static_cast<float>(x), static_cast<float>(y), 1.0f});
  for (double d : desc) set.descriptors.push_back(static_cast<float>(d));
}

inline LocalFeatureSet random_features(Rng& rng, const ImageId& id, std::size_t n,
                                       std::uint32_t dim, double frame = 1000.0) {
  LocalFeatureSet set{id, dim, {}, {}};
  for (std::size_t i = 0; i < n; ++i) {
    push_feature(set, rng.uniform(0, frame), rng.uniform(0, frame), random_unit(rng, dim));
  }
  return set;
}

/// Two images whose first `inliers` features are related by an exact affine map
/// and share descriptors; the next `outliers` features also share descriptors
/// but sit at unrelated positions in `b`.
struct PlantedPair {
  LocalFeatureSet a;
  LocalFeatureSet b;
  AffineMap map;
};

inline PlantedPair planted_pair(Rng& rng, const ImageId& ida, const ImageId& idb,
                                std::size_t inliers, std::size_t outliers, std::uint32_t dim = 16) {
  PlantedPair p{{ida, dim, {}, {}}, {idb, dim, {}, {}}, random_affine(rng)};
  for (std::size_t i = 0; i < inliers + outliers; ++i) {
    const auto desc = random_unit(rng, dim);
    const double x = rng.uniform(100, 900);
    const double y = rng.uniform(100, 900);
    push_feature(p.a, x, y, desc);
    if (i < inliers) {
      const auto [u, v] = p.map.apply(x, y);
      push_feature(p.b, u, v, desc);
    } else {
      push_feature(p.b, rng.uniform(0, 1000), rng.uniform(0, 1000), desc);
    }
  }
  return p;
}

}  // namespace lmr::test
