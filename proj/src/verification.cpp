#include "lmr/verification.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"
#include "lmr/random.hpp"

namespace lmr {

std::vector<Correspondence> match_features(const LocalFeatureSet& a, const LocalFeatureSet& b) {
  if (a.desc_dim != b.desc_dim) {
    throw ValidationError("local descriptor dims differ: '" + a.image + "' has " +
                          std::to_string(a.desc_dim) + ", '" + b.image + "' has " +
                          std::to_string(b.desc_dim));
  }
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  std::vector<Correspondence> out;
  if (na == 0 || nb == 0) return out;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_for_a(na, 0);
  std::vector<double> best_dist_a(na, kInf);
  std::vector<std::size_t> best_for_b(nb, 0);
  std::vector<double> best_dist_b(nb, kInf);
  for (std::size_t i = 0; i < na; ++i) {
    const auto da = a.descriptor(i);
    for (std::size_t j = 0; j < nb; ++j) {
      const auto db = b.descriptor(j);
      double d2 = 0.0;
      for (std::size_t k = 0; k < a.desc_dim; ++k) {
        const double diff = static_cast<double>(da[k]) - db[k];
        d2 += diff * diff;
      }
      // Strict comparisons keep the lowest index on ties.
      if (d2 < best_dist_a[i]) {
        best_dist_a[i] = d2;
        best_for_a[i] = j;
      }
      if (d2 < best_dist_b[j]) {
        best_dist_b[j] = d2;
        best_for_b[j] = i;
      }
    }
  }
  for (std::size_t i = 0; i < na; ++i) {
    const std::size_t j = best_for_a[i];
    if (best_for_b[j] == i) out.push_back({i, j, std::sqrt(best_dist_a[i])});
  }
  return out;
}

namespace {

struct PointPair {
  double xa, ya, xb, yb;
};

struct Affine {
  double a11, a12, tx, a21, a22, ty;
};

// Exact affine through three correspondences; false when the source is collinear.
bool fit_affine(const PointPair& p0, const PointPair& p1, const PointPair& p2, Affine& out) {
  const double det = p0.xa * (p1.ya - p2.ya) - p0.ya * (p1.xa - p2.xa) + (p1.xa * p2.ya - p2.xa * p1.ya);
  const double scale = std::max({std::abs(p1.xa - p0.xa), std::abs(p1.ya - p0.ya),
                                 std::abs(p2.xa - p0.xa), std::abs(p2.ya - p0.ya), 1.0});
  if (std::abs(det) <= 1e-9 * scale * scale) return false;
  // Cramer's rule on [x y 1] [c0 c1 c2]^T = target for each output coordinate.
  auto solve = [&](double t0, double t1, double t2, double& c0, double& c1, double& c2) {
    c0 = (t0 * (p1.ya - p2.ya) - p0.ya * (t1 - t2) + (t1 * p2.ya - t2 * p1.ya)) / det;
    c1 = (p0.xa * (t1 - t2) - t0 * (p1.xa - p2.xa) + (p1.xa * t2 - p2.xa * t1)) / det;
    c2 = (p0.xa * (p1.ya * t2 - p2.ya * t1) - p0.ya * (p1.xa * t2 - p2.xa * t1) +
          t0 * (p1.xa * p2.ya - p2.xa * p1.ya)) /
         det;
  };
  solve(p0.xb, p1.xb, p2.xb, out.a11, out.a12, out.tx);
  solve(p0.yb, p1.yb, p2.yb, out.a21, out.a22, out.ty);
  return std::isfinite(out.a11) && std::isfinite(out.a12) && std::isfinite(out.tx) &&
         std::isfinite(out.a21) && std::isfinite(out.a22) && std::isfinite(out.ty);
}

}  // namespace

int ransac_verify(const std::vector<Correspondence>& corr, const LocalFeatureSet& a,
                  const LocalFeatureSet& b, const RansacParams& params) {
  if (params.iterations < 1) throw ValidationError("RANSAC needs at least one iteration");
  if (!(params.residual_px > 0.0)) throw ValidationError("RANSAC residual must be positive");
  if (corr.size() < kAffineSample) return 0;

  std::vector<PointPair> pts;
  pts.reserve(corr.size());
  for (const auto& c : corr) {
    if (c.a_index >= a.size() || c.b_index >= b.size()) {
      throw ValidationError("correspondence index out of range");
    }
    const auto& ka = a.keypoints[c.a_index];
    const auto& kb = b.keypoints[c.b_index];
    pts.push_back({ka.x, ka.y, kb.x, kb.y});
  }
  const double r2 = params.residual_px * params.residual_px;
  const std::size_t n = pts.size();
  Rng rng(params.seed);
  int best = 0;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t i0 = rng.below(n);
    std::size_t i1 = rng.below(n - 1);
    if (i1 >= i0) ++i1;
    std::size_t i2 = rng.below(n - 2);
    const std::size_t lo = std::min(i0, i1);
    const std::size_t hi = std::max(i0, i1);
    if (i2 >= lo) ++i2;
    if (i2 >= hi) ++i2;

    Affine m;
    if (!fit_affine(pts[i0], pts[i1], pts[i2], m)) continue;
    int count = 0;
    for (const auto& p : pts) {
      const double dx = m.a11 * p.xa + m.a12 * p.ya + m.tx - p.xb;
      const double dy = m.a21 * p.xa + m.a22 * p.ya + m.ty - p.yb;
      if (dx * dx + dy * dy <= r2) ++count;
    }
    best = std::max(best, count);
  }
  return best;
}

LocalFeatureSet cap_features(const LocalFeatureSet& set, std::size_t cap) {
  if (set.size() <= cap) return set;
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return set.keypoints[x].scale > set.keypoints[y].scale;
  });
  order.resize(cap);
  std::sort(order.begin(), order.end());
  LocalFeatureSet out;
  out.image = set.image;
  out.desc_dim = set.desc_dim;
  for (std::size_t i : order) {
    out.keypoints.push_back(set.keypoints[i]);
    auto d = set.descriptor(i);
    out.descriptors.insert(out.descriptors.end(), d.begin(), d.end());
  }
  return out;
}

int inlier_score(const LocalFeatureSet& a, const LocalFeatureSet& b, const RansacParams& params) {
  RansacParams pair = params;
  pair.seed = pair_seed(params.seed, a.image, b.image);
  if (a.size() <= kMaxFeaturesPerImage && b.size() <= kMaxFeaturesPerImage) {
    return ransac_verify(match_features(a, b), a, b, pair);
  }
  const auto ca = cap_features(a);
  const auto cb = cap_features(b);
  return ransac_verify(match_features(ca, cb), ca, cb, pair);
}

RescoreResult rescore_candidates(const std::vector<NeighborList>& neighbors,
                                 const LabelTable& labels, const FeatureSource& features,
                                 const RansacParams& params, std::size_t k_agg,
                                 CandidateOrder order) {
  if (k_agg < 1) throw ValidationError("k_agg must be at least 1");
  std::vector<Prediction> rows(neighbors.size());
  std::vector<std::vector<int>> inliers(neighbors.size());

  parallel_for(neighbors.size(), [&](std::size_t q) {
    const auto& list = neighbors[q];
    rows[q].image = list.query;
    if (list.neighbors.empty()) return;
    const auto query = features.get(list.query);
    auto& scores = inliers[q];
    for (const auto& n : list.neighbors) {
      scores.push_back(inlier_score(*query, *features.get(n.train), params));
    }
    std::vector<std::size_t> ranking(list.neighbors.size());
    std::iota(ranking.begin(), ranking.end(), 0);
    if (order == CandidateOrder::kInliers) {
      std::stable_sort(ranking.begin(), ranking.end(), [&](std::size_t x, std::size_t y) {
        if (scores[x] != scores[y]) return scores[x] > scores[y];
        return neighbor_before(list.neighbors[x], list.neighbors[y]);
      });
    }
    std::map<ClassLabel, double> by_class;
    const std::size_t take = std::min(k_agg, ranking.size());
    for (std::size_t r = 0; r < take; ++r) {
      const auto& n = list.neighbors[ranking[r]];
      by_class[labels.at(n.train)] += scores[ranking[r]];
    }
    for (const auto& [label, score] : by_class) {
      if (!rows[q].guess || score > rows[q].guess->confidence) rows[q].guess = Guess{label, score};
    }
  });

  RescoreResult out;
  out.submission.rows = std::move(rows);
  validate_submission(out.submission);
  for (std::size_t q = 0; q < neighbors.size(); ++q) {
    for (std::size_t i = 0; i < inliers[q].size(); ++i) {
      out.pair_scores.push_back({neighbors[q].query, neighbors[q].neighbors[i].train, inliers[q][i]});
    }
  }
  return out;
}

std::string format_pair_scores(const std::vector<PairScore>& scores) {
  std::string out = "test,candidate,inliers\n";
  for (const auto& s : scores) {
    out += s.test + "," + s.candidate + "," + std::to_string(s.inliers) + "\n";
  }
  return out;
}

}  // namespace lmr
