#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lmr {

using Vector = std::vector<double>;

/// H x W x C activations, stored row-major with channels innermost.
class FeatureMap {
 public:
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, std::vector<double> values);

  std::size_t height() const noexcept { return h_; }
  std::size_t width() const noexcept { return w_; }
  std::size_t channels() const noexcept { return c_; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return v_[(y * w_ + x) * c_ + c]; }
  std::span<const double> values() const noexcept { return v_; }

 private:
  std::size_t h_, w_, c_;
  std::vector<double> v_;
};

double l2_norm(std::span<const double> v);
/// Throws DomainError on a zero vector.
Vector l2_normalize(std::span<const double> v);

/// Generalized mean per channel: ((1/HW) sum x^p)^(1/p). Fractional p needs x >= 0.
Vector gem_pool(const FeatureMap& map, double p = 3.0);
/// Per-channel maximum (GeM as p -> infinity).
Vector mac_pool(const FeatureMap& map);
/// Per-channel mean (GeM with p = 1).
Vector spoc_pool(const FeatureMap& map);

/// Square pooling window [y, y+size) x [x, x+size).
struct Region {
  std::size_t y = 0;
  std::size_t x = 0;
  std::size_t size = 0;
  bool operator==(const Region&) const = default;
};

/// R-MAC region grid. At level l the side is max(1, floor(2 min(H,W) / (l+1))).
/// Along each axis of length D the window count n (>= 2 when side < D) is the one
/// whose overlap 1 - (D - side) / ((n - 1) side) is closest to 0.4, smaller n on
/// ties, capped at D - side + 1; offsets are round(i (D - side) / (n - 1)).
std::vector<Region> rmac_regions(std::size_t height, std::size_t width, int levels);

/// Regional MAC: L2-normalized per-region maxima summed, then L2-normalized.
Vector rmac_pool(const FeatureMap& map, int levels = 3);

/// Concatenation followed by L2 normalization.
Vector concat_descriptors(std::span<const Vector> parts);

/// l2_normalize(sum) of the descriptors extracted at the three test scales.
Vector multiscale_aggregate(std::span<const Vector> descs);
inline constexpr std::array<double, 3> kMultiscaleFactors = {0.70710678118654752, 1.0,
                                                            1.41421356237309505};

/// Attenuated PCA whitening. Projection of v is diag(lambda^(-t/2)) basis^T (v - mean).
struct WhiteningModel {
  Vector mean;               // d
  std::vector<double> basis; // d x m, column-major (column j = j-th eigenvector)
  Vector eigenvalues;        // m, descending
  double t = 0.5;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  std::span<const double> column(std::size_t j) const { return {basis.data() + j * in_dim, in_dim}; }
};

inline constexpr double kAuwDefaultT = 0.5;
inline constexpr double kEigenFloor = 1e-10;

/// Fits on `n` rows of `data` (row-major n x d). Throws DomainError reporting the
/// effective rank when fewer than `out_dim` eigenvalues exceed 1e-10 * lambda_1.
WhiteningModel fit_auw(std::span<const double> data, std::size_t n, std::size_t d, double t,
                       std::size_t out_dim);

/// Whitened projection before the final normalization.
Vector project_auw(const WhiteningModel& model, std::span<const double> v);
/// l2_normalize(project_auw(model, v)).
Vector apply_auw(const WhiteningModel& model, std::span<const double> v);

inline constexpr double kContrastiveMargin = 0.9;
inline constexpr double kTripletMargin = 0.2;

/// Positive pair: 0.5 |a-b|^2. Negative pair: 0.5 max(0, margin - |a-b|)^2.
double contrastive_loss(std::span<const double> a, std::span<const double> b, bool is_positive,
                        double margin = kContrastiveMargin);

/// max(0, margin + |q-p|^2 - |q-n|^2).
double triplet_loss(std::span<const double> q, std::span<const double> p,
                    std::span<const double> n, double margin = kTripletMargin);

struct TrainingTuple {
  Vector query;
  Vector positive;
  std::array<Vector, 5> negatives;
};

struct TupleLosses {
  std::array<double, 6> pairs{};     // (q,p) then (q,n_i)
  std::array<double, 5> triplets{};  // (q,p,n_i)
  double total = 0.0;
};

TupleLosses expand_tuple(const TrainingTuple& tuple, double contrastive_margin = kContrastiveMargin,
                         double triplet_margin = kTripletMargin);

}  // namespace lmr
