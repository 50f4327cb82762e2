#include "lmr/reranking.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "lmr/error.hpp"
#include "lmr/io.hpp"
#include "lmr/parallel.hpp"
#include "lmr/random.hpp"

namespace lmr {

std::vector<double> descending_confidences(double hi, double lo, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {hi};
  const double min_step = 1e-6 * std::max({1.0, std::abs(hi), std::abs(lo)});
  const double steps = static_cast<double>(n - 1);
  if (!(hi - lo >= min_step * steps)) hi = lo + min_step * steps;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = hi - (hi - lo) * (static_cast<double>(i) / steps);
  }
  out.back() = lo;
  return out;
}

namespace {

void check_rerank_params(const RerankParams& p) {
  if (p.anchors < 1) throw ValidationError("rerank anchors N must be at least 1");
  if (p.pool_size < p.anchors) throw ValidationError("rerank pool size K must be >= N");
  if (p.inlier_threshold < 1) throw ValidationError("rerank inlier threshold must be >= 1");
  if (p.rounds < 1) throw ValidationError("rerank rounds must be >= 1");
}

}  // namespace

RerankResult rerank_inliers(const Submission& sub, const FeatureSource& features,
                            const RerankParams& params) {
  check_rerank_params(params);
  validate_submission(sub);
  const Submission sorted = ranked(sub);
  std::size_t head_size = 0;
  while (head_size < sorted.rows.size() && head_size < params.pool_size &&
         sorted.rows[head_size].guess) {
    ++head_size;
  }

  std::vector<std::shared_ptr<const LocalFeatureSet>> feats(head_size);
  parallel_for(head_size, [&](std::size_t i) { feats[i] = features.get(sorted.rows[i].image); });

  std::vector<std::size_t> order(head_size);
  std::iota(order.begin(), order.end(), 0);
  std::vector<bool> absorbed(head_size, false);
  std::unordered_map<std::uint64_t, int> cache;
  auto key = [&](std::size_t anchor, std::size_t target) {
    return static_cast<std::uint64_t>(anchor) * head_size + target;
  };

  RerankResult result;
  for (int round = 1; round <= params.rounds; ++round) {
    std::size_t used = 0;
    for (std::size_t pos = 0; pos < order.size() && used < params.anchors; ++pos) {
      const std::size_t anchor = order[pos];
      if (absorbed[anchor]) continue;
      ++used;

      std::vector<std::size_t> targets;
      for (std::size_t j = pos + 1; j < order.size(); ++j) {
        if (!absorbed[order[j]]) targets.push_back(order[j]);
      }
      std::vector<int> scores(targets.size());
      std::vector<bool> fresh(targets.size(), false);
      for (std::size_t i = 0; i < targets.size(); ++i) {
        auto it = cache.find(key(anchor, targets[i]));
        if (it != cache.end()) {
          scores[i] = it->second;
        } else {
          fresh[i] = true;
        }
      }
      parallel_for(targets.size(), [&](std::size_t i) {
        if (fresh[i]) scores[i] = inlier_score(*feats[anchor], *feats[targets[i]], params.ransac);
      });

      std::vector<std::pair<int, std::size_t>> pulled;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        if (fresh[i]) cache.emplace(key(anchor, targets[i]), scores[i]);
        if (scores[i] >= params.inlier_threshold) pulled.emplace_back(scores[i], targets[i]);
      }
      if (pulled.empty()) continue;
      std::sort(pulled.begin(), pulled.end(), [&](const auto& x, const auto& y) {
        if (x.first != y.first) return x.first > y.first;
        return sorted.rows[x.second].image < sorted.rows[y.second].image;
      });

      std::vector<std::size_t> moved;
      for (const auto& [score, idx] : pulled) {
        absorbed[idx] = true;
        moved.push_back(idx);
        result.audit.push_back({round, sorted.rows[anchor].image, sorted.rows[idx].image, score});
      }
      std::vector<std::size_t> rest;
      rest.reserve(order.size() - pos - 1);
      std::unordered_set<std::size_t> moved_set(moved.begin(), moved.end());
      for (std::size_t j = pos + 1; j < order.size(); ++j) {
        if (!moved_set.count(order[j])) rest.push_back(order[j]);
      }
      order.resize(pos + 1);
      order.insert(order.end(), moved.begin(), moved.end());
      order.insert(order.end(), rest.begin(), rest.end());
    }
  }

  // Reassign head confidences; the tail keeps its values.
  std::optional<double> tail_max;
  for (std::size_t i = head_size; i < sorted.rows.size(); ++i) {
    if (sorted.rows[i].guess) {
      tail_max = sorted.rows[i].guess->confidence;
      break;
    }
  }
  auto& rows = result.submission.rows;
  rows.reserve(sorted.rows.size());
  if (head_size > 0) {
    const double hi_orig = sorted.rows.front().guess->confidence;
    double lo = sorted.rows[head_size - 1].guess->confidence;
    if (tail_max && lo <= *tail_max) lo = *tail_max + 1e-6 * std::max(1.0, std::abs(*tail_max));
    const double hi = std::max(hi_orig, lo);
    const auto conf = descending_confidences(hi, lo, head_size);
    for (std::size_t i = 0; i < head_size; ++i) {
      Prediction p = sorted.rows[order[i]];
      p.guess->confidence = conf[i];
      rows.push_back(std::move(p));
    }
  }
  rows.insert(rows.end(), sorted.rows.begin() + static_cast<std::ptrdiff_t>(head_size),
              sorted.rows.end());
  return result;
}

std::string format_rerank_audit(const std::vector<RerankEvent>& audit) {
  std::string out = "round,anchor,absorbed,inliers\n";
  for (const auto& e : audit) {
    out += std::to_string(e.round) + "," + e.anchor + "," + e.absorbed + "," +
           std::to_string(e.inliers) + "\n";
  }
  return out;
}

double LinearModel::decision(std::span<const float> x) const {
  if (x.size() != weights.size()) {
    throw ValidationError("descriptor length " + std::to_string(x.size()) +
                          " does not match model dim " + std::to_string(weights.size()));
  }
  double s = bias;
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
  return s;
}

double LinearModel::output(std::span<const float> x) const {
  return 1.0 / (1.0 + std::exp(-decision(x)));
}

namespace {

std::size_t common_dim(const std::vector<std::vector<float>>& positives,
                       const std::vector<std::vector<float>>& negatives) {
  if (positives.empty() || negatives.empty()) {
    throw ValidationError("SVM training needs positives and negatives");
  }
  const std::size_t dim = positives.front().size();
  for (const auto* set : {&positives, &negatives}) {
    for (const auto& x : *set) {
      if (x.size() != dim) throw ValidationError("SVM samples differ in dimension");
    }
  }
  return dim;
}

}  // namespace

LinearModel svm_train(const std::vector<std::vector<float>>& positives,
                      const std::vector<std::vector<float>>& negatives, double lambda, int epochs,
                      std::uint64_t seed) {
  const std::size_t dim = common_dim(positives, negatives);
  if (!(lambda > 0.0)) throw ValidationError("SVM lambda must be positive");
  if (epochs < 1) throw ValidationError("SVM epochs must be >= 1");

  const std::size_t n = positives.size() + negatives.size();
  auto sample = [&](std::size_t i) -> const std::vector<float>& {
    return i < positives.size() ? positives[i] : negatives[i - positives.size()];
  };
  LinearModel model;
  model.weights.assign(dim, 0.0);
  // Step size eta0 / (1 + eta0 lambda t).
  constexpr double eta0 = 1.0;
  std::uint64_t t = 0;
  Rng rng(seed);
  std::vector<std::size_t> perm(n);
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    for (std::size_t idx : perm) {
      const auto& x = sample(idx);
      const double y = idx < positives.size() ? 1.0 : -1.0;
      const double eta = eta0 / (1.0 + eta0 * lambda * static_cast<double>(t++));
      const double margin = y * model.decision(x);
      const double shrink = 1.0 - eta * lambda;
      for (double& w : model.weights) w *= shrink;
      if (margin < 1.0) {
        for (std::size_t k = 0; k < dim; ++k) model.weights[k] += eta * y * x[k];
        model.bias += eta * y;
      }
    }
  }
  return model;
}

double svm_objective(const LinearModel& model, const std::vector<std::vector<float>>& positives,
                     const std::vector<std::vector<float>>& negatives, double lambda) {
  common_dim(positives, negatives);
  double hinge = 0.0;
  for (const auto& x : positives) hinge += std::max(0.0, 1.0 - model.decision(x));
  for (const auto& x : negatives) hinge += std::max(0.0, 1.0 + model.decision(x));
  double norm2 = 0.0;
  for (double w : model.weights) norm2 += w * w;
  return 0.5 * lambda * norm2 + hinge / static_cast<double>(positives.size() + negatives.size());
}

std::string format_linear_model(const LinearModel& model) {
  std::string out = std::to_string(model.weights.size()) + " " + format_exact(model.bias) + "\n";
  for (double w : model.weights) out += format_exact(w) + "\n";
  return out;
}

LinearModel parse_linear_model(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    auto end = nl == std::string_view::npos ? text.size() : nl;
    lines.push_back(text.substr(pos, end - pos));
    pos = end + 1;
  }
  if (lines.empty()) throw ParseError("empty model file", 1);
  auto head = split_fields(lines[0], ' ');
  if (head.size() != 2) throw ParseError("expected '<dim> <bias>'", 1);
  const auto dim = parse_label(head[0], 1);
  LinearModel model;
  model.bias = parse_real(head[1], 1);
  if (lines.size() != dim + 1) {
    throw ParseError("expected " + std::to_string(dim) + " weights", lines.size());
  }
  for (std::size_t i = 1; i < lines.size(); ++i) model.weights.push_back(parse_real(lines[i], i + 1));
  return model;
}

Submission svm_reweight(const Submission& sub, const LinearModel& model,
                        const DescriptorStore& descriptors, double threshold) {
  Submission out = sub;
  for (auto& row : out.rows) {
    if (!row.guess) continue;
    const double o = model.output(descriptors.at(row.image));
    if (o < threshold) row.guess->confidence += o - threshold;
  }
  return out;
}

namespace {

std::unordered_map<std::string_view, const Prediction*> index_rows(const Submission& sub) {
  std::unordered_map<std::string_view, const Prediction*> index;
  for (const auto& row : sub.rows) index.emplace(row.image, &row);
  return index;
}

void check_same_ids(const Submission& a, const Submission& b,
                    const std::unordered_map<std::string_view, const Prediction*>& b_index) {
  if (a.rows.size() != b.rows.size()) {
    throw ValidationError("submissions cover different image sets (" +
                          std::to_string(a.rows.size()) + " vs " + std::to_string(b.rows.size()) +
                          " rows)");
  }
  for (const auto& row : a.rows) {
    if (!b_index.count(row.image)) {
      throw ValidationError("image '" + row.image + "' missing from the second submission");
    }
  }
}

}  // namespace

Submission modify_confidences(const Submission& main, const Submission& ref, double divisor) {
  if (!(divisor != 0.0) || !std::isfinite(divisor)) throw ValidationError("divisor must be non-zero");
  validate_submission(main);
  validate_submission(ref);
  const auto ref_index = index_rows(ref);
  check_same_ids(main, ref, ref_index);
  Submission out = main;
  for (auto& row : out.rows) {
    const Prediction* r = ref_index.at(row.image);
    if (row.guess && r->guess) row.guess->confidence += r->guess->confidence / divisor;
  }
  return out;
}

Submission merge_alternating(const Submission& a, const Submission& b, std::size_t head_size) {
  validate_submission(a);
  validate_submission(b);
  check_same_ids(a, b, index_rows(b));
  const Submission ra = ranked(a);
  const Submission rb = ranked(b);
  auto head_of = [&](const Submission& s) {
    std::size_t n = 0;
    while (n < s.rows.size() && n < head_size && s.rows[n].guess) ++n;
    return n;
  };
  const std::size_t ha = head_of(ra);
  const std::size_t hb = head_of(rb);

  std::vector<Prediction> merged;
  merged.reserve(ra.rows.size());
  std::unordered_set<std::string_view> seen;
  auto take = [&](const Prediction& p) {
    if (seen.insert(p.image).second) merged.push_back(p);
  };
  for (std::size_t i = 0; i < std::max(ha, hb); ++i) {
    if (i < ha) take(ra.rows[i]);
    if (i < hb) take(rb.rows[i]);
  }
  for (const auto& row : ra.rows) take(row);

  std::optional<double> hi, lo;
  for (const auto& row : ra.rows) {
    if (!row.guess) continue;
    if (!hi) hi = row.guess->confidence;
    lo = row.guess->confidence;
  }
  std::vector<std::size_t> labelled;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    if (merged[i].guess) labelled.push_back(i);
  }
  const auto conf = descending_confidences(hi.value_or(1.0), lo.value_or(0.0), labelled.size());
  for (std::size_t j = 0; j < labelled.size(); ++j) merged[labelled[j]].guess->confidence = conf[j];

  // Labelled rows first, in construction order, then the empty ones.
  Submission out;
  for (std::size_t i : labelled) out.rows.push_back(merged[i]);
  for (const auto& p : merged) {
    if (!p.guess) out.rows.push_back(p);
  }
  return out;
}

}  // namespace lmr
