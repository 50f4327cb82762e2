#include "lmr/cleaning.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"
#include "lmr/random.hpp"

namespace lmr {

namespace {

std::map<ClassLabel, std::vector<ImageId>> group_by_class(const LabelTable& labels) {
  std::map<ClassLabel, std::vector<ImageId>> groups;
  for (const auto& [id, label] : labels.entries()) groups[label].push_back(id);
  for (auto& [label, ids] : groups) std::sort(ids.begin(), ids.end());
  return groups;
}

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace

LabelTable filter_small_classes(const LabelTable& labels, std::size_t min_size) {
  if (min_size < 1) throw ValidationError("min_size must be at least 1");
  std::unordered_map<ClassLabel, std::size_t> counts;
  for (const auto& [id, label] : labels.entries()) ++counts[label];
  LabelTable out;
  for (const auto& [id, label] : labels.entries()) {
    if (counts[label] >= min_size) out.add(id, label);
  }
  return out;
}

PairGraph build_match_graph(const std::vector<ImageId>& images, const DescriptorStore& store,
                            double threshold) {
  PairGraph graph;
  graph.vertices = images;
  std::sort(graph.vertices.begin(), graph.vertices.end());
  std::vector<std::span<const float>> rows;
  rows.reserve(graph.vertices.size());
  for (const auto& id : graph.vertices) rows.push_back(store.at(id));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && graph.vertices[i] == graph.vertices[i - 1]) {
      throw ValidationError("duplicate vertex '" + graph.vertices[i] + "' in match graph");
    }
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      const double s = dot(rows[i], rows[j]);
      if (s > threshold) graph.edges.push_back({graph.vertices[i], graph.vertices[j], s});
    }
  }
  return graph;
}

std::set<ImageId> max_connected_component(const PairGraph& graph) {
  std::vector<ImageId> vertices = graph.vertices;
  std::sort(vertices.begin(), vertices.end());
  auto index_of = [&](const ImageId& id) {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), id);
    if (it == vertices.end() || *it != id) {
      throw LookupError("edge endpoint '" + id + "' is not a graph vertex");
    }
    return static_cast<std::size_t>(it - vertices.begin());
  };

  DisjointSets sets(vertices.size());
  std::vector<bool> touched(vertices.size(), false);
  for (const auto& e : graph.edges) {
    auto a = index_of(e.a);
    auto b = index_of(e.b);
    if (a == b) throw ValidationError("self-loop on '" + e.a + "'");
    touched[a] = touched[b] = true;
    sets.unite(a, b);
  }
  // Roots are the smallest index of each component, so scanning roots in
  // ascending order and keeping strict improvements yields the smallest-id tie rule.
  std::vector<std::size_t> size(vertices.size(), 0);
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (touched[i]) ++size[sets.find(i)];
  }
  std::size_t best_root = vertices.size();
  for (std::size_t r = 0; r < vertices.size(); ++r) {
    if (size[r] > 0 && (best_root == vertices.size() || size[r] > size[best_root])) best_root = r;
  }
  std::set<ImageId> out;
  if (best_root == vertices.size()) return out;
  for (std::size_t i = 0; i < vertices.size(); ++i) {
    if (touched[i] && sets.find(i) == best_root) out.insert(vertices[i]);
  }
  return out;
}

std::vector<ImagePair> sample_pairs(std::vector<Edge> edges, std::size_t max_pairs,
                                    std::uint64_t seed) {
  if (max_pairs < 1) throw ValidationError("max_pairs must be at least 1");
  std::sort(edges.begin(), edges.end(),
            [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
  const std::size_t take = std::min(edges.size(), max_pairs);
  Rng rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(edges.size() - i));
    std::swap(edges[i], edges[j]);
  }
  std::vector<ImagePair> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.emplace_back(edges[i].a, edges[i].b);
  return out;
}

CleanDataset clean_dataset(const LabelTable& labels, const DescriptorStore& store, double threshold,
                           std::size_t min_size, std::size_t max_pairs, std::uint64_t seed) {
  if (min_size < 1) throw ValidationError("min_size must be at least 1");
  if (max_pairs < 1) throw ValidationError("max_pairs must be at least 1");
  const auto groups = group_by_class(labels);
  std::vector<const std::pair<const ClassLabel, std::vector<ImageId>>*> classes;
  for (const auto& g : groups) classes.push_back(&g);

  struct ClassResult {
    bool too_small = false;
    std::vector<ImageId> kept;
    std::vector<ImagePair> pairs;
  };
  std::vector<ClassResult> results(classes.size());
  parallel_for(classes.size(), [&](std::size_t i) {
    const auto& [label, ids] = *classes[i];
    auto& r = results[i];
    if (ids.size() < min_size) {
      r.too_small = true;
      return;
    }
    const PairGraph graph = build_match_graph(ids, store, threshold);
    const auto component = max_connected_component(graph);
    if (component.empty()) return;
    r.kept.assign(component.begin(), component.end());
    std::vector<Edge> edges;
    for (const auto& e : graph.edges) {
      if (component.count(e.a)) edges.push_back(e);
    }
    r.pairs = sample_pairs(std::move(edges), max_pairs, mix64(seed ^ mix64(label)));
  });

  CleanDataset out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto& r = results[i];
    if (r.too_small) {
      ++out.stats.classes_removed_small;
    } else if (r.kept.empty()) {
      ++out.stats.classes_removed_no_pairs;
    } else {
      out.stats.images_kept += r.kept.size();
      ++out.stats.classes_kept;
      out.stats.pairs_sampled += r.pairs.size();
      out.pairs.insert(out.pairs.end(), r.pairs.begin(), r.pairs.end());
      out.kept.emplace(classes[i]->first, std::move(r.kept));
    }
  }
  return out;
}

LabelTable kept_labels(const CleanDataset& clean) {
  LabelTable out;
  for (const auto& [label, ids] : clean.kept) {
    for (const auto& id : ids) out.add(id, label);
  }
  return out;
}

std::string format_pairs(const std::vector<ImagePair>& pairs) {
  std::string out = "id1,id2\n";
  for (const auto& [a, b] : pairs) out += a + "," + b + "\n";
  return out;
}

std::string format_clean_stats(const CleanStats& stats) {
  nlohmann::ordered_json j;
  j["classes_removed_small"] = stats.classes_removed_small;
  j["classes_removed_no_pairs"] = stats.classes_removed_no_pairs;
  j["images_kept"] = stats.images_kept;
  j["classes_kept"] = stats.classes_kept;
  j["pairs_sampled"] = stats.pairs_sampled;
  return j.dump(2) + "\n";
}

void save_clean_dataset(const CleanDataset& clean, const fs::path& kept_csv,
                        const fs::path& pairs_csv, const fs::path& stats_json) {
  save_label_table(kept_labels(clean), kept_csv);
  write_text_file(pairs_csv, format_pairs(clean.pairs));
  write_text_file(stats_json, format_clean_stats(clean.stats));
}

}  // namespace lmr
