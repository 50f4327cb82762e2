#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lmr/features.hpp"
#include "lmr/global_search.hpp"
#include "lmr/model.hpp"

namespace lmr {

struct Correspondence {
  std::size_t a_index = 0;
  std::size_t b_index = 0;
  double distance = 0.0;
  bool operator==(const Correspondence&) const = default;
};

struct RansacParams {
  int iterations = 1000;
  double residual_px = 5.0;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kAffineSample = 3;
inline constexpr std::size_t kMaxFeaturesPerImage = 1000;

/// Mutual nearest neighbours under Euclidean descriptor distance. Distance ties
/// go to the lower index. Output is ordered by a_index.
std::vector<Correspondence> match_features(const LocalFeatureSet& a, const LocalFeatureSet& b);

/// Best affine consensus over a fixed number of 3-point samples; an inlier has
/// |A p_a + t - p_b| <= residual_px. Collinear samples are skipped. Returns 0
/// below three correspondences.
int ransac_verify(const std::vector<Correspondence>& corr, const LocalFeatureSet& a,
                  const LocalFeatureSet& b, const RansacParams& params);

/// At most `cap` features, largest scale first (stable on index).
LocalFeatureSet cap_features(const LocalFeatureSet& set, std::size_t cap = kMaxFeaturesPerImage);

/// match_features then ransac_verify, with `a` as the query side. The RANSAC
/// seed is pair_seed(params.seed, a.image, b.image).
int inlier_score(const LocalFeatureSet& a, const LocalFeatureSet& b, const RansacParams& params);

enum class CandidateOrder {
  kInliers,  // (inliers desc, similarity desc, id asc)
  kGlobal,   // keep the global neighbour order
};

struct PairScore {
  ImageId test;
  ImageId candidate;
  int inliers = 0;
  bool operator==(const PairScore&) const = default;
};

struct RescoreResult {
  Submission submission;
  std::vector<PairScore> pair_scores;  // per test, candidates in neighbour order
};

/// Inlier scores against each stored candidate, accumulated per class over the
/// first `k_agg` candidates of the chosen order.
RescoreResult rescore_candidates(const std::vector<NeighborList>& neighbors,
                                 const LabelTable& labels, const FeatureSource& features,
                                 const RansacParams& params,
                                 std::size_t k_agg = kNeighborsAggregated,
                                 CandidateOrder order = CandidateOrder::kInliers);

std::string format_pair_scores(const std::vector<PairScore>& scores);  // "test,candidate,inliers"

}  // namespace lmr
