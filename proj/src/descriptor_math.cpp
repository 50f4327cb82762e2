#include "lmr/descriptor_math.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "lmr/error.hpp"

namespace lmr {

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels,
                       std::vector<double> values)
    : h_(height), w_(width), c_(channels), v_(std::move(values)) {
  if (h_ == 0 || w_ == 0 || c_ == 0) throw ValidationError("feature map dimensions must be positive");
  if (v_.size() != h_ * w_ * c_) {
    throw ValidationError("feature map has " + std::to_string(v_.size()) + " values, expected " +
                          std::to_string(h_ * w_ * c_));
  }
  for (double x : v_) {
    if (!std::isfinite(x)) throw ValidationError("feature map contains non-finite values");
  }
}

double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

Vector l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  if (!(n > 0.0)) throw DomainError("cannot L2-normalize a zero vector");
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Vector gem_pool(const FeatureMap& map, double p) {
  if (!(p >= 1.0) || !std::isfinite(p)) throw DomainError("GeM exponent must be finite and >= 1");
  const bool integral = std::floor(p) == p;
  const std::size_t cells = map.height() * map.width();
  Vector out(map.channels());
  for (std::size_t c = 0; c < map.channels(); ++c) {
    double peak = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      const double x = map.values()[i * map.channels() + c];
      if (x < 0.0 && !integral) {
        throw DomainError("GeM with fractional p requires non-negative activations");
      }
      peak = std::max(peak, std::abs(x));
    }
    if (p == 1.0) {
      double s = 0.0;
      for (std::size_t i = 0; i < cells; ++i) s += map.values()[i * map.channels() + c];
      out[c] = s / static_cast<double>(cells);
      continue;
    }
    if (peak == 0.0) {
      out[c] = 0.0;
      continue;
    }
    // Scale by the peak so large p neither overflows nor underflows everything.
    double s = 0.0;
    for (std::size_t i = 0; i < cells; ++i) {
      s += std::pow(map.values()[i * map.channels() + c] / peak, p);
    }
    const double m = s / static_cast<double>(cells);
    out[c] = m < 0.0 ? -peak * std::pow(-m, 1.0 / p) : peak * std::pow(m, 1.0 / p);
  }
  return out;
}

Vector mac_pool(const FeatureMap& map) {
  Vector out(map.channels(), -std::numeric_limits<double>::infinity());
  const std::size_t cells = map.height() * map.width();
  for (std::size_t i = 0; i < cells; ++i) {
    for (std::size_t c = 0; c < map.channels(); ++c) {
      out[c] = std::max(out[c], map.values()[i * map.channels() + c]);
    }
  }
  return out;
}

Vector spoc_pool(const FeatureMap& map) { return gem_pool(map, 1.0); }

namespace {

constexpr double kRmacOverlap = 0.4;

std::vector<std::size_t> window_offsets(std::size_t length, std::size_t side) {
  if (side >= length) return {0};
  const double span = static_cast<double>(length - side);
  const std::size_t max_count = length - side + 1;
  std::size_t best = 2;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t n = 2; n <= max_count; ++n) {
    const double overlap = 1.0 - span / (static_cast<double>(n - 1) * static_cast<double>(side));
    const double err = std::abs(overlap - kRmacOverlap);
    if (err < best_err) {
      best_err = err;
      best = n;
    }
  }
  std::vector<std::size_t> offsets(best);
  for (std::size_t i = 0; i < best; ++i) {
    offsets[i] = static_cast<std::size_t>(std::lround(static_cast<double>(i) * span /
                                                      static_cast<double>(best - 1)));
  }
  return offsets;
}

}  // namespace

std::vector<Region> rmac_regions(std::size_t height, std::size_t width, int levels) {
  if (levels < 1) throw ValidationError("R-MAC needs at least one level");
  if (height == 0 || width == 0) throw ValidationError("R-MAC needs a non-empty map");
  const std::size_t short_side = std::min(height, width);
  std::vector<Region> regions;
  for (int l = 1; l <= levels; ++l) {
    std::size_t side = static_cast<std::size_t>(2.0 * static_cast<double>(short_side) / (l + 1));
    side = std::clamp<std::size_t>(side, 1, short_side);
    for (std::size_t y : window_offsets(height, side)) {
      for (std::size_t x : window_offsets(width, side)) regions.push_back({y, x, side});
    }
  }
  return regions;
}

Vector rmac_pool(const FeatureMap& map, int levels) {
  const std::size_t channels = map.channels();
  Vector acc(channels, 0.0);
  Vector region_max(channels);
  for (const Region& r : rmac_regions(map.height(), map.width(), levels)) {
    std::fill(region_max.begin(), region_max.end(), -std::numeric_limits<double>::infinity());
    for (std::size_t y = r.y; y < r.y + r.size; ++y) {
      for (std::size_t x = r.x; x < r.x + r.size; ++x) {
        for (std::size_t c = 0; c < channels; ++c) {
          region_max[c] = std::max(region_max[c], map.at(y, x, c));
        }
      }
    }
    const double n = l2_norm(region_max);
    if (n == 0.0) continue;
    for (std::size_t c = 0; c < channels; ++c) acc[c] += region_max[c] / n;
  }
  return l2_normalize(acc);
}

Vector concat_descriptors(std::span<const Vector> parts) {
  if (parts.empty()) throw ValidationError("concatenation needs at least one descriptor");
  Vector out;
  for (const auto& part : parts) {
    for (double x : part) {
      if (!std::isfinite(x)) throw ValidationError("descriptor part is not finite");
    }
    out.insert(out.end(), part.begin(), part.end());
  }
  return l2_normalize(out);
}

Vector multiscale_aggregate(std::span<const Vector> descs) {
  if (descs.size() != kMultiscaleFactors.size()) {
    throw ValidationError("multi-scale aggregation expects one descriptor per scale (3)");
  }
  Vector sum(descs.front().size(), 0.0);
  for (const auto& d : descs) {
    if (d.size() != sum.size()) throw ValidationError("multi-scale descriptors differ in length");
    for (std::size_t i = 0; i < d.size(); ++i) sum[i] += d[i];
  }
  return l2_normalize(sum);
}

WhiteningModel fit_auw(std::span<const double> data, std::size_t n, std::size_t d, double t,
                       std::size_t out_dim) {
  if (data.size() != n * d) throw ValidationError("whitening data is not n x d");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("attenuation exponent must lie in [0, 1]");
  if (out_dim < 1 || out_dim > d) throw ValidationError("output dimension must be in [1, d]");
  if (n <= out_dim) throw ValidationError("whitening needs more samples than output dimensions");
  for (double x : data) {
    if (!std::isfinite(x)) throw ValidationError("whitening data is not finite");
  }

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      data.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw DomainError("eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd& values = solver.eigenvalues();
  const Eigen::MatrixXd& vectors = solver.eigenvectors();
  const auto last = static_cast<Eigen::Index>(d) - 1;
  const double top = values(last);
  std::size_t rank = 0;
  for (Eigen::Index i = last; i >= 0; --i) {
    if (top > 0.0 && values(i) >= kEigenFloor * top) ++rank;
  }
  if (rank < out_dim) {
    throw DomainError("covariance is rank deficient: effective rank " + std::to_string(rank) +
                      " < output dimension " + std::to_string(out_dim));
  }

  WhiteningModel model;
  model.t = t;
  model.in_dim = d;
  model.out_dim = out_dim;
  model.mean.assign(mean.data(), mean.data() + d);
  model.basis.resize(d * out_dim);
  model.eigenvalues.resize(out_dim);
  for (std::size_t j = 0; j < out_dim; ++j) {
    const Eigen::Index src = last - static_cast<Eigen::Index>(j);
    model.eigenvalues[j] = values(src);
    Eigen::VectorXd col = vectors.col(src);
    // Sign convention: largest-magnitude component positive.
    Eigen::Index arg = 0;
    col.cwiseAbs().maxCoeff(&arg);
    if (col(arg) < 0) col = -col;
    std::copy(col.data(), col.data() + d, model.basis.begin() + static_cast<std::ptrdiff_t>(j * d));
  }
  return model;
}

Vector project_auw(const WhiteningModel& model, std::span<const double> v) {
  if (v.size() != model.in_dim) {
    throw ValidationError("descriptor length " + std::to_string(v.size()) +
                          " does not match whitening input dim " + std::to_string(model.in_dim));
  }
  Vector out(model.out_dim);
  for (std::size_t j = 0; j < model.out_dim; ++j) {
    auto col = model.column(j);
    double s = 0.0;
    for (std::size_t i = 0; i < model.in_dim; ++i) s += col[i] * (v[i] - model.mean[i]);
    out[j] = s * std::pow(model.eigenvalues[j], -model.t / 2.0);
  }
  return out;
}

Vector apply_auw(const WhiteningModel& model, std::span<const double> v) {
  return l2_normalize(project_auw(model, v));
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ValidationError("descriptor lengths differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

double contrastive_loss(std::span<const double> a, std::span<const double> b, bool is_positive,
                        double margin) {
  const double d2 = squared_distance(a, b);
  if (is_positive) return 0.5 * d2;
  const double gap = std::max(0.0, margin - std::sqrt(d2));
  return 0.5 * gap * gap;
}

double triplet_loss(std::span<const double> q, std::span<const double> p,
                    std::span<const double> n, double margin) {
  return std::max(0.0, margin + squared_distance(q, p) - squared_distance(q, n));
}

TupleLosses expand_tuple(const TrainingTuple& tuple, double contrastive_margin,
                         double triplet_margin) {
  TupleLosses out;
  out.pairs[0] = contrastive_loss(tuple.query, tuple.positive, true, contrastive_margin);
  for (std::size_t i = 0; i < tuple.negatives.size(); ++i) {
    out.pairs[i + 1] = contrastive_loss(tuple.query, tuple.negatives[i], false, contrastive_margin);
    out.triplets[i] = triplet_loss(tuple.query, tuple.positive, tuple.negatives[i], triplet_margin);
  }
  out.total = std::accumulate(out.pairs.begin(), out.pairs.end(), 0.0) +
              std::accumulate(out.triplets.begin(), out.triplets.end(), 0.0);
  return out;
}

}  // namespace lmr
