#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lmr/io.hpp"
#include "lmr/model.hpp"

namespace lmr {

inline constexpr double kCleanThreshold = 0.5;
inline constexpr std::size_t kCleanMinClassSize = 4;  // classes of <= 3 images are dropped
inline constexpr std::size_t kCleanMaxPairs = 100;

struct Edge {
  ImageId a;  // a < b
  ImageId b;
  double similarity = 0.0;
  bool operator==(const Edge&) const = default;
};

/// Undirected within-class match graph.
struct PairGraph {
  std::vector<ImageId> vertices;
  std::vector<Edge> edges;  // sorted by (a, b)
};

using ImagePair = std::pair<ImageId, ImageId>;

struct CleanStats {
  std::size_t classes_removed_small = 0;
  std::size_t classes_removed_no_pairs = 0;
  std::size_t images_kept = 0;
  std::size_t classes_kept = 0;
  std::size_t pairs_sampled = 0;
  bool operator==(const CleanStats&) const = default;
};

struct CleanDataset {
  std::map<ClassLabel, std::vector<ImageId>> kept;  // ids sorted ascending
  std::vector<ImagePair> pairs;                     // grouped by class, ascending class
  CleanStats stats;
};

/// Keeps exactly the classes having at least `min_size` images.
LabelTable filter_small_classes(const LabelTable& labels, std::size_t min_size = kCleanMinClassSize);

/// Edge (a, b) iff dot(d_a, d_b) > threshold (strict), over all pairs.
PairGraph build_match_graph(const std::vector<ImageId>& images, const DescriptorStore& store,
                            double threshold = kCleanThreshold);

/// Largest component among vertices with at least one edge; ties go to the
/// component holding the smallest id. Empty when the graph has no edges.
std::set<ImageId> max_connected_component(const PairGraph& graph);

/// Seeded partial Fisher-Yates over the edges sorted by (a, b); returns
/// min(|edges|, max_pairs) distinct pairs in sampling order.
std::vector<ImagePair> sample_pairs(std::vector<Edge> edges, std::size_t max_pairs,
                                    std::uint64_t seed);

/// Full cleaning pipeline, processed per class (in parallel) and merged in
/// ascending class order. Per-class sampling seeds derive from `seed` and the label.
CleanDataset clean_dataset(const LabelTable& labels, const DescriptorStore& store,
                           double threshold = kCleanThreshold,
                           std::size_t min_size = kCleanMinClassSize,
                           std::size_t max_pairs = kCleanMaxPairs, std::uint64_t seed = 0);

/// Kept images as an "id,landmark_id" table, ascending class then id.
LabelTable kept_labels(const CleanDataset& clean);
std::string format_pairs(const std::vector<ImagePair>& pairs);  // "id1,id2"
std::string format_clean_stats(const CleanStats& stats);        // JSON object
void save_clean_dataset(const CleanDataset& clean, const fs::path& kept_csv,
                        const fs::path& pairs_csv, const fs::path& stats_json);

}  // namespace lmr
