#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lmr/features.hpp"
#include "lmr/model.hpp"
#include "lmr/verification.hpp"

namespace lmr {

inline constexpr std::size_t kRerankPool = 20000;
inline constexpr int kRerankInlierThreshold = 24;
inline constexpr int kRerankRounds = 2;
inline constexpr double kSvmThreshold = 0.55;
inline constexpr double kModifyDivisor = 1000.0;

struct RerankParams {
  std::size_t pool_size = kRerankPool;
  int inlier_threshold = kRerankInlierThreshold;
  std::size_t anchors = 0;  // required, N < 1000 in practice
  int rounds = kRerankRounds;
  RansacParams ransac;
};

/// One absorption: `absorbed` was moved directly below `anchor`.
struct RerankEvent {
  int round = 0;
  ImageId anchor;
  ImageId absorbed;
  int inliers = 0;
  bool operator==(const RerankEvent&) const = default;
};

struct RerankResult {
  Submission submission;  // in ranked order
  std::vector<RerankEvent> audit;
};

/// Inlier-driven re-ranking of the top `pool_size` non-empty predictions.
/// Anchors walk the head in current order, skipping absorbed images; each anchor
/// pulls every lower, non-absorbed image scoring >= inlier_threshold to sit
/// directly beneath it, strongest first (ties: id). Head confidences are then
/// reassigned strictly decreasing and kept above the untouched tail.
RerankResult rerank_inliers(const Submission& sub, const FeatureSource& features,
                            const RerankParams& params);

std::string format_rerank_audit(const std::vector<RerankEvent>& audit);  // "round,anchor,absorbed,inliers"

/// Strictly decreasing values from `hi` down to `lo` over `n` positions. The span is
/// widened when it is too narrow to survive 9-digit serialization.
std::vector<double> descending_confidences(double hi, double lo, std::size_t n);

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;

  double decision(std::span<const float> x) const;
  /// Sigmoid of the decision value, in (0, 1).
  double output(std::span<const float> x) const;
  bool operator==(const LinearModel&) const = default;
};

inline constexpr double kSvmLambda = 1e-4;
inline constexpr int kSvmEpochs = 10;

/// L2-regularized hinge loss minimized by seeded stochastic subgradient descent.
/// Samples are visited in a fresh seeded permutation each epoch.
LinearModel svm_train(const std::vector<std::vector<float>>& positives,
                      const std::vector<std::vector<float>>& negatives,
                      double lambda = kSvmLambda, int epochs = kSvmEpochs,
                      std::uint64_t seed = 0);

/// lambda/2 |w|^2 + mean hinge loss over both sets.
double svm_objective(const LinearModel& model, const std::vector<std::vector<float>>& positives,
                     const std::vector<std::vector<float>>& negatives, double lambda);

/// Text form: "dim bias" on the first line, then one weight per line.
std::string format_linear_model(const LinearModel& model);
LinearModel parse_linear_model(std::string_view text);

/// confidence += (o - threshold) whenever o = sigmoid(w.x + b) < threshold.
Submission svm_reweight(const Submission& sub, const LinearModel& model,
                        const DescriptorStore& descriptors, double threshold = kSvmThreshold);

/// confidence(main) += confidence(ref) / divisor per image; labels from `main`.
Submission modify_confidences(const Submission& main, const Submission& ref,
                              double divisor = kModifyDivisor);

/// Alternates a1, b1, a2, b2, ... over the first `head_size` non-empty ranked
/// rows of each input, first occurrence winning; the rest follow in `a`'s ranked
/// order. Confidences are respread over `a`'s range, strictly decreasing.
Submission merge_alternating(const Submission& a, const Submission& b,
                             std::size_t head_size = kRerankPool);

}  // namespace lmr
