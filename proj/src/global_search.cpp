#include "lmr/global_search.hpp"

#include <algorithm>
#include <map>
#include <unordered_map>

#include "lmr/error.hpp"
#include "lmr/parallel.hpp"

namespace lmr {

bool neighbor_before(const Neighbor& a, const Neighbor& b) {
  if (a.similarity != b.similarity) return a.similarity > b.similarity;
  return a.train < b.train;
}

namespace {

struct Candidate {
  double similarity;
  std::size_t train;  // row in train store
};

// Train rows are visited in id order inside the comparator, not row order.
struct CandidateOrder {
  const DescriptorStore* train;
  bool operator()(const Candidate& a, const Candidate& b) const {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return train->id(a.train) < train->id(b.train);
  }
};

void keep_top(std::vector<Candidate>& pool, std::size_t k, const CandidateOrder& order) {
  if (pool.size() > k) {
    std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), order);
    pool.resize(k);
  } else {
    std::sort(pool.begin(), pool.end(), order);
  }
}

}  // namespace

std::vector<NeighborList> knn_search(const DescriptorStore& test, const DescriptorStore& train,
                                     std::size_t k, TileShape tiles) {
  if (k < 1) throw ValidationError("k must be at least 1");
  if (tiles.queries < 1 || tiles.train < 1) throw ValidationError("tile sizes must be positive");
  if (!test.empty() && !train.empty() && test.dim() != train.dim()) {
    throw ValidationError("descriptor dimensions differ: test " + std::to_string(test.dim()) +
                          ", train " + std::to_string(train.dim()));
  }
  std::vector<NeighborList> out(test.size());
  const CandidateOrder order{&train};
  const std::size_t query_tiles = (test.size() + tiles.queries - 1) / tiles.queries;

  parallel_for(query_tiles, [&](std::size_t qt) {
    const std::size_t q0 = qt * tiles.queries;
    const std::size_t q1 = std::min(test.size(), q0 + tiles.queries);
    std::vector<std::vector<Candidate>> best(q1 - q0);
    std::vector<Candidate> scratch;
    for (std::size_t t0 = 0; t0 < train.size(); t0 += tiles.train) {
      const std::size_t t1 = std::min(train.size(), t0 + tiles.train);
      for (std::size_t q = q0; q < q1; ++q) {
        const auto query = test.row(q);
        scratch.clear();
        for (std::size_t t = t0; t < t1; ++t) scratch.push_back({dot(query, train.row(t)), t});
        keep_top(scratch, k, order);
        auto& running = best[q - q0];
        running.insert(running.end(), scratch.begin(), scratch.end());
        keep_top(running, k, order);
      }
    }
    for (std::size_t q = q0; q < q1; ++q) {
      auto& list = out[q];
      list.query = test.id(q);
      for (const auto& c : best[q - q0]) list.neighbors.push_back({train.id(c.train), c.similarity});
    }
  });
  return out;
}

namespace {

void accumulate_scores(const NeighborList& list, const LabelTable& labels, std::size_t k_agg,
                       std::map<ClassLabel, double>& scores) {
  if (k_agg < 1) throw ValidationError("k_agg must be at least 1");
  if (list.neighbors.size() < k_agg) {
    throw ValidationError("query '" + list.query + "' has " +
                          std::to_string(list.neighbors.size()) + " neighbors, fewer than k_agg " +
                          std::to_string(k_agg));
  }
  for (std::size_t i = 0; i < k_agg; ++i) {
    const auto& n = list.neighbors[i];
    auto label = labels.find(n.train);
    if (!label) throw LookupError("neighbor '" + n.train + "' has no class label");
    scores[*label] += n.similarity;
  }
}

Prediction best_class(const ImageId& query, const std::map<ClassLabel, double>& scores) {
  Prediction p{query, std::nullopt};
  for (const auto& [label, score] : scores) {
    if (!p.guess || score > p.guess->confidence) p.guess = Guess{label, score};
  }
  return p;
}

}  // namespace

Submission aggregate_topk(const std::vector<NeighborList>& neighbors, const LabelTable& labels,
                          std::size_t k_agg) {
  Submission sub;
  sub.rows.reserve(neighbors.size());
  for (const auto& list : neighbors) {
    std::map<ClassLabel, double> scores;
    accumulate_scores(list, labels, k_agg, scores);
    sub.rows.push_back(best_class(list.query, scores));
  }
  validate_submission(sub);
  return sub;
}

Submission ensemble_aggregate(const std::vector<std::vector<NeighborList>>& per_model,
                              const LabelTable& labels, std::size_t k_agg) {
  if (per_model.empty()) throw ValidationError("ensemble needs at least one model");
  const auto& first = per_model.front();
  std::vector<std::unordered_map<std::string_view, const NeighborList*>> lookup(per_model.size());
  for (std::size_t m = 0; m < per_model.size(); ++m) {
    if (per_model[m].size() != first.size()) {
      throw ValidationError("model " + std::to_string(m) + " covers " +
                            std::to_string(per_model[m].size()) + " test images, model 0 covers " +
                            std::to_string(first.size()));
    }
    for (const auto& list : per_model[m]) lookup[m].emplace(list.query, &list);
  }
  Submission sub;
  for (const auto& list : first) {
    std::map<ClassLabel, double> scores;
    for (std::size_t m = 0; m < per_model.size(); ++m) {
      auto it = lookup[m].find(list.query);
      if (it == lookup[m].end()) {
        throw ValidationError("model " + std::to_string(m) + " has no neighbors for '" +
                              list.query + "'");
      }
      accumulate_scores(*it->second, labels, k_agg, scores);
    }
    sub.rows.push_back(best_class(list.query, scores));
  }
  validate_submission(sub);
  return sub;
}

std::string format_neighbors(const std::vector<NeighborList>& lists) {
  std::string out = "query,rank,train,similarity\n";
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.neighbors.size(); ++r) {
      out += list.query + "," + std::to_string(r + 1) + "," + list.neighbors[r].train + "," +
             format_exact(list.neighbors[r].similarity) + "\n";
    }
  }
  return out;
}

std::vector<NeighborList> parse_neighbors(std::string_view text) {
  std::vector<NeighborList> lists;
  std::unordered_map<std::string, std::size_t> index;
  for (auto [line_no, line] : csv_body(text, "query,rank,train,similarity")) {
    auto f = split_fields(line);
    if (f.size() != 4) throw ParseError("expected 4 fields", line_no);
    std::string query(f[0]);
    std::string train(f[2]);
    try {
      validate_image_id(query);
      validate_image_id(train);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    const auto rank = parse_label(f[1], line_no);
    const double sim = parse_real(f[3], line_no);
    auto [it, inserted] = index.emplace(query, lists.size());
    if (inserted) lists.push_back({query, {}});
    auto& list = lists[it->second];
    if (rank != list.neighbors.size() + 1) {
      throw ParseError("rank " + std::to_string(rank) + " out of sequence for '" + query + "'",
                       line_no);
    }
    list.neighbors.push_back({train, sim});
  }
  return lists;
}

void save_neighbors(const std::vector<NeighborList>& lists, const fs::path& path) {
  write_text_file(path, format_neighbors(lists));
}

std::vector<NeighborList> load_neighbors(const fs::path& path) {
  try {
    return parse_neighbors(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

}  // namespace lmr
