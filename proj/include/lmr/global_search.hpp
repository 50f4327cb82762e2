#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lmr/io.hpp"
#include "lmr/model.hpp"

namespace lmr {

inline constexpr std::size_t kNeighborsStored = 10;
inline constexpr std::size_t kNeighborsAggregated = 5;

struct Neighbor {
  ImageId train;
  double similarity = 0.0;
  bool operator==(const Neighbor&) const = default;
};

/// Ranked by (similarity desc, train id asc).
struct NeighborList {
  ImageId query;
  std::vector<Neighbor> neighbors;
  bool operator==(const NeighborList&) const = default;
};

bool neighbor_before(const Neighbor& a, const Neighbor& b);

/// Query x train tile sizes of the blocked scan.
struct TileShape {
  std::size_t queries = 1024;
  std::size_t train = 8192;
};

/// Exact top-k by dot product for every test descriptor, in test store order.
/// Results do not depend on the tile shape or thread count.
std::vector<NeighborList> knn_search(const DescriptorStore& test, const DescriptorStore& train,
                                     std::size_t k = kNeighborsStored, TileShape tiles = {});

/// Sums the similarities of the top `k_agg` neighbors per class and predicts the
/// best class (ties: lower label). Never emits an empty guess.
Submission aggregate_topk(const std::vector<NeighborList>& neighbors, const LabelTable& labels,
                          std::size_t k_agg = kNeighborsAggregated);

/// Class scores summed over several models' top `k_agg` neighbors.
Submission ensemble_aggregate(const std::vector<std::vector<NeighborList>>& per_model,
                              const LabelTable& labels, std::size_t k_agg = kNeighborsAggregated);

/// CSV "query,rank,train,similarity" with 1-based ranks and exact similarities.
std::string format_neighbors(const std::vector<NeighborList>& lists);
std::vector<NeighborList> parse_neighbors(std::string_view text);
void save_neighbors(const std::vector<NeighborList>& lists, const fs::path& path);
std::vector<NeighborList> load_neighbors(const fs::path& path);

}  // namespace lmr
