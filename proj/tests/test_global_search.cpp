#include <doctest.h>

#include "lmr/error.hpp"
#include "lmr/global_search.hpp"
#include "lmr/parallel.hpp"
#include "oracles.hpp"

using namespace lmr;
using doctest::Approx;

namespace {

NeighborList list(const char* q, std::initializer_list<Neighbor> n) { return {q, n}; }

}  // namespace

TEST_SUITE("global_search") {

TEST_CASE("orthonormal training set") {
  DescriptorStore train(2), test(2);
  train.add("a", std::vector<double>{1.0, 0.0});
  train.add("b", std::vector<double>{0.0, 1.0});
  test.add("q", std::vector<double>{1.0, 0.0});
  const auto r = knn_search(test, train, 2);
  REQUIRE(r.size() == 1);
  CHECK(r[0].neighbors == std::vector<Neighbor>{{"a", 1.0}, {"b", 0.0}});
}

TEST_CASE("equal similarities fall back to ascending id") {
  DescriptorStore train(2), test(2);
  train.add("b", std::vector<double>{0.0, 1.0});
  train.add("a", std::vector<double>{1.0, 0.0});
  const double h = 1.0 / std::sqrt(2.0);
  test.add("q", std::vector<double>{h, h});
  const auto r = knn_search(test, train, 2);
  CHECK(r[0].neighbors[0].train == "a");
  CHECK(r[0].neighbors[1].train == "b");
  CHECK(r[0].neighbors[0].similarity == Approx(0.70711).epsilon(1e-5));
  CHECK(r[0].neighbors[0].similarity == r[0].neighbors[1].similarity);
}

TEST_CASE("blocked search equals the quadratic scan for any tile shape and worker count") {
  Rng rng(21);
  const auto train = test::random_store(rng, 1000, 16, "tr");
  const auto test = test::random_store(rng, 100, 16, "te");
  const auto oracle = test::knn_oracle(test, train, 10);
  for (TileShape tiles : {TileShape{1, 1}, TileShape{7, 33}, TileShape{64, 1000}, TileShape{}}) {
    for (std::size_t threads : {1u, 3u}) {
      set_thread_count(threads);
      CHECK(knn_search(test, train, 10, tiles) == oracle);
    }
  }
  set_thread_count(1);
}

TEST_CASE("k larger than the training set returns every image") {
  Rng rng(22);
  const auto train = test::random_store(rng, 3, 4, "tr");
  const auto test = test::random_store(rng, 2, 4, "te");
  const auto r = knn_search(test, train, 10);
  CHECK(r[0].neighbors.size() == 3);
  CHECK(r == test::knn_oracle(test, train, 10));
}

TEST_CASE("search rejects mismatched dimensions") {
  DescriptorStore a(2), b(3);
  a.add("x", std::vector<double>{1.0, 0.0});
  b.add("y", std::vector<double>{1.0, 0.0, 0.0});
  CHECK_THROWS_AS(knn_search(a, b, 1), ValidationError);
}

TEST_CASE("top-k aggregation sums similarities per class") {
  LabelTable labels;
  labels.add("A", 1);
  labels.add("B", 2);
  labels.add("C", 1);
  const std::vector<NeighborList> n{list("q", {{"A", 0.9}, {"B", 0.8}, {"C", 0.7}})};
  const auto sub = aggregate_topk(n, labels, 3);
  REQUIRE(sub.rows.size() == 1);
  CHECK(sub.rows[0].guess->label == 1);
  CHECK(sub.rows[0].guess->confidence == Approx(1.6).epsilon(1e-12));
}

TEST_CASE("a single-class neighbourhood sums all five similarities") {
  LabelTable labels;
  std::vector<Neighbor> n;
  double total = 0.0;
  for (int i = 0; i < 7; ++i) {
    labels.add("t" + std::to_string(i), 4);
    n.push_back({"t" + std::to_string(i), 0.9 - 0.1 * i});
    if (i < 5) total += 0.9 - 0.1 * i;
  }
  const auto sub = aggregate_topk({{"q", n}}, labels);
  CHECK(sub.rows[0].guess->label == 4);
  CHECK(sub.rows[0].guess->confidence == Approx(total).epsilon(1e-12));
}

TEST_CASE("tied class scores go to the lower label") {
  LabelTable labels;
  labels.add("x", 9);
  labels.add("y", 3);
  const auto sub = aggregate_topk({list("q", {{"x", 0.5}, {"y", 0.5}})}, labels, 2);
  CHECK(sub.rows[0].guess->label == 3);
}

TEST_CASE("ensembles sum class scores across models") {
  LabelTable labels;
  labels.add("A", 1);
  labels.add("B", 2);
  labels.add("C", 1);
  labels.add("D", 2);
  const std::vector<NeighborList> m1{list("q", {{"A", 0.9}, {"C", 0.7}, {"B", 0.2}})};
  const std::vector<NeighborList> m2{list("q", {{"B", 0.8}, {"D", 0.7}, {"A", 0.0}})};
  CHECK(ensemble_aggregate({m1}, labels, 3) == aggregate_topk(m1, labels, 3));
  // Class 1 totals 1.6, class 2 totals 0.2 + 1.5 = 1.7.
  const auto both = ensemble_aggregate({m1, m2}, labels, 3);
  CHECK(both.rows[0].guess->label == 2);
  CHECK(both.rows[0].guess->confidence == Approx(1.7));
  const auto seven = ensemble_aggregate(std::vector<std::vector<NeighborList>>(7, m1), labels, 3);
  CHECK(seven.rows[0].guess->label == aggregate_topk(m1, labels, 3).rows[0].guess->label);
  CHECK(seven.rows[0].guess->confidence == Approx(7 * 1.6));
}

TEST_CASE("neighbour lists round trip through CSV with exact similarities") {
  Rng rng(23);
  const auto train = test::random_store(rng, 50, 8, "tr");
  const auto test = test::random_store(rng, 5, 8, "te");
  const auto r = knn_search(test, train, 10);
  CHECK(parse_neighbors(format_neighbors(r)) == r);
  CHECK(format_neighbors(r).rfind("query,rank,train,similarity\n", 0) == 0);
}

TEST_CASE("aggregation names an unlabeled neighbour") {
  LabelTable labels;
  labels.add("A", 1);
  try {
    aggregate_topk({list("q", {{"ghost", 0.9}})}, labels, 1);
    FAIL("missing label accepted");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find("ghost") != std::string::npos);
  }
  CHECK_THROWS_AS(aggregate_topk({list("q", {{"A", 0.9}})}, labels, 2), ValidationError);
  CHECK(kNeighborsStored == 10);
  CHECK(kNeighborsAggregated == 5);
}

TEST_CASE("aggregated confidence is bounded and the argmax is scale invariant") {
  Rng rng(24);
  const auto train = test::random_store(rng, 300, 8, "tr");
  const auto query = test::random_store(rng, 40, 8, "te");
  LabelTable labels;
  for (const auto& id : train.ids()) labels.add(id, rng.below(6));
  auto lists = knn_search(query, train, 10);
  for (auto& l : lists) {
    for (auto& n : l.neighbors) n.similarity = std::abs(n.similarity) + 1e-3;
  }
  const auto sub = aggregate_topk(lists, labels);
  auto scaled = lists;
  for (auto& l : scaled) {
    for (auto& n : l.neighbors) n.similarity *= 3.5;
  }
  const auto sub3 = aggregate_topk(scaled, labels);
  for (std::size_t i = 0; i < sub.rows.size(); ++i) {
    CHECK(sub.rows[i].guess->confidence > 0.0);
    CHECK(sub.rows[i].guess->confidence <= 5.0 + 5e-3);
    CHECK(sub3.rows[i].guess->label == sub.rows[i].guess->label);
  }
}

TEST_CASE("duplicating the top neighbour of the winning class keeps the winner") {
  Rng rng(25);
  const auto train = test::random_store(rng, 200, 8, "tr");
  const auto query = test::random_store(rng, 30, 8, "te");
  LabelTable labels;
  for (const auto& id : train.ids()) labels.add(id, rng.below(4));
  const auto lists = knn_search(query, train, 10);
  const auto sub = aggregate_topk(lists, labels);
  for (std::size_t i = 0; i < lists.size(); ++i) {
    const ClassLabel winner = sub.rows[i].guess->label;
    NeighborList more = lists[i];
    const auto best = std::find_if(more.neighbors.begin(), more.neighbors.end(),
                                   [&](const Neighbor& n) { return labels.at(n.train) == winner; });
    REQUIRE(best != more.neighbors.end());
    more.neighbors.insert(more.neighbors.begin(), *best);
    CHECK(aggregate_topk({more}, labels).rows[0].guess->label == winner);
  }
}

}  // TEST_SUITE
