#include <doctest.h>

#include <nlohmann/json.hpp>

#include "lmr/cleaning.hpp"
#include "lmr/error.hpp"
#include "lmr/parallel.hpp"
#include "oracles.hpp"

using namespace lmr;

namespace {

LabelTable table(std::initializer_list<std::pair<const char*, ClassLabel>> rows) {
  LabelTable t;
  for (const auto& [id, label] : rows) t.add(id, label);
  return t;
}

}  // namespace

TEST_SUITE("cleaning") {

TEST_CASE("classes of three images are dropped and classes of four kept") {
  const auto t = table({{"a", 1}, {"b", 1}, {"c", 1}, {"d", 2}, {"e", 2}, {"f", 2}, {"g", 2}});
  const auto kept = filter_small_classes(t);
  CHECK(kept.size() == 4);
  CHECK_FALSE(kept.contains("a"));
  CHECK(kept.at("g") == 2);
  CHECK(filter_small_classes(LabelTable{}).empty());
  CHECK(kCleanMinClassSize == 4);
}

TEST_CASE("identical descriptors form one edge, orthogonal ones none") {
  DescriptorStore s(2);
  s.add("a", std::vector<double>{1.0, 0.0});
  s.add("b", std::vector<double>{1.0, 0.0});
  s.add("c", std::vector<double>{0.0, 1.0});
  const auto g = build_match_graph({"a", "b"}, s);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0] == Edge{"a", "b", 1.0});
  CHECK(build_match_graph({"a", "c"}, s).edges.empty());
}

TEST_CASE("threshold is strict") {
  DescriptorStore s(2);
  s.add("a", std::vector<double>{1.0, 0.0});
  s.add("b", std::vector<double>{0.5, std::sqrt(0.75)});
  const double sim = dot(s.at("a"), s.at("b"));
  CHECK(build_match_graph({"a", "b"}, s, sim).edges.empty());
  CHECK(build_match_graph({"a", "b"}, s, std::nextafter(sim, 0.0)).edges.size() == 1);
}

TEST_CASE("match graph equals the all-pairs oracle") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto store = test::random_store(rng, 5 + rng.below(20), 3, "g");
    const double threshold = rng.uniform(-0.2, 0.8);
    std::vector<ImageId> ids(store.ids().rbegin(), store.ids().rend());
    const auto g = build_match_graph(ids, store, threshold);
    std::vector<Edge> want;
    for (std::size_t i = 0; i < store.size(); ++i)
      for (std::size_t j = i + 1; j < store.size(); ++j) {
        const double s = dot(store.row(i), store.row(j));
        if (s > threshold) want.push_back({store.id(i), store.id(j), s});
      }
    CHECK(g.edges == want);
  }
}

TEST_CASE("largest component of a triangle plus an edge is the triangle") {
  PairGraph g{{"a", "b", "c", "d", "e"},
              {{"a", "b", 1}, {"a", "c", 1}, {"b", "c", 1}, {"d", "e", 1}}};
  CHECK(max_connected_component(g) == std::set<ImageId>{"a", "b", "c"});
  CHECK(max_connected_component(PairGraph{{"a", "b"}, {}}).empty());
}

TEST_CASE("equal-sized components resolve to the one holding the smallest id") {
  PairGraph g{{"a", "b", "c", "d"}, {{"c", "d", 1}, {"a", "b", 1}}};
  CHECK(max_connected_component(g) == std::set<ImageId>{"a", "b"});
}

TEST_CASE("largest component matches breadth-first search on random graphs") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ImageId> v;
    for (int i = 0; i < 50; ++i) v.push_back(test::numbered("v", i));
    const double p = rng.uniform(0.0, 0.08);
    PairGraph g{v, {}};
    std::vector<std::pair<ImageId, ImageId>> pairs;
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = i + 1; j < v.size(); ++j)
        if (rng.uniform() < p) {
          g.edges.push_back({v[i], v[j], 1.0});
          pairs.emplace_back(v[i], v[j]);
        }
    CHECK(max_connected_component(g) == test::largest_component_oracle(v, pairs));
  }
}

TEST_CASE("pair sampling caps, deduplicates and is seeded") {
  std::vector<Edge> three{{"a", "b", 1}, {"a", "c", 1}, {"b", "c", 1}};
  CHECK(sample_pairs(three, 100, 1).size() == 3);
  std::vector<Edge> many;
  for (int i = 0; i < 200; ++i) many.push_back({test::numbered("x", i), test::numbered("y", i), 1});
  const auto s1 = sample_pairs(many, 100, 5);
  CHECK(s1.size() == 100);
  CHECK(std::set<ImagePair>(s1.begin(), s1.end()).size() == 100);
  CHECK(sample_pairs(many, 100, 5) == s1);
  CHECK(sample_pairs(many, 100, 6) != s1);
  auto shuffled = many;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(sample_pairs(shuffled, 100, 5) == s1);
}

TEST_CASE("classes without any within-class match are counted as no-pair removals") {
  Rng rng(14);
  LabelTable labels;
  DescriptorStore store(16);
  for (int c = 0; c < 10; ++c) {
    const auto center = test::random_unit(rng, 16);
    for (int i = 0; i < 5; ++i) {
      const auto id = test::numbered("k" + std::to_string(c) + "_", i);
      std::vector<double> v(16, 0.0);
      if (c < 2) {
        v[c * 5 + i] = 1.0;  // mutually orthogonal members
      } else {
        v = center;
      }
      store.add(id, v);
      labels.add(id, c);
    }
  }
  const auto clean = clean_dataset(labels, store);
  CHECK(clean.stats.classes_removed_no_pairs == 2);
  CHECK(clean.stats.classes_kept == 8);
  CHECK_FALSE(clean.kept.count(0));
  CHECK_FALSE(clean.kept.count(1));
}

TEST_CASE("tiny classes remove everything") {
  Rng rng(15);
  const auto store = test::random_store(rng, 6, 4, "s");
  LabelTable labels;
  for (std::size_t i = 0; i < 6; ++i) labels.add(store.id(i), i / 2);
  const auto clean = clean_dataset(labels, store);
  CHECK(clean.kept.empty());
  CHECK(clean.pairs.empty());
  CHECK(clean.stats.classes_removed_small == 3);
}

TEST_CASE("only the larger of two components survives") {
  DescriptorStore store(2);
  LabelTable labels;
  for (int i = 0; i < 4; ++i) {
    store.add("big" + std::to_string(i), std::vector<double>{1.0, 0.0});
    labels.add("big" + std::to_string(i), 9);
  }
  for (int i = 0; i < 2; ++i) {
    store.add("small" + std::to_string(i), std::vector<double>{0.0, 1.0});
    labels.add("small" + std::to_string(i), 9);
  }
  const auto clean = clean_dataset(labels, store);
  REQUIRE(clean.kept.count(9));
  CHECK(clean.kept.at(9) == std::vector<ImageId>{"big0", "big1", "big2", "big3"});
  CHECK(clean.stats.pairs_sampled == 6);
  std::vector<std::pair<ImageId, ImageId>> edges;
  for (const auto& e : build_match_graph(store.ids(), store).edges) edges.emplace_back(e.a, e.b);
  const auto oracle = test::largest_component_oracle(store.ids(), edges);
  CHECK(std::vector<ImageId>(oracle.begin(), oracle.end()) == clean.kept.at(9));
}

TEST_CASE("clean_dataset matches the breadth-first oracle on random fixtures") {
  Rng rng(16);
  for (int trial = 0; trial < 10; ++trial) {
    const auto f = test::clean_fixture(rng, 300);
    const double threshold = rng.uniform(0.3, 0.7);
    const auto clean = clean_dataset(f.labels, f.store, threshold, 4, 10, trial);
    const auto oracle = test::clean_oracle(f.labels, f.store, threshold, 4, 10);
    CHECK(clean.stats == oracle.stats);
    REQUIRE(clean.kept.size() == oracle.kept.size());
    for (const auto& [label, ids] : clean.kept) {
      CHECK(std::set<ImageId>(ids.begin(), ids.end()) == oracle.kept.at(label));
    }
    for (const auto& [a, b] : clean.pairs) {
      CHECK(a < b);
      CHECK(f.labels.at(a) == f.labels.at(b));
      CHECK(dot(f.store.at(a), f.store.at(b)) > threshold);
    }
  }
}

TEST_CASE("cleaning output does not depend on the worker count") {
  Rng rng(17);
  const auto f = test::clean_fixture(rng, 400);
  set_thread_count(1);
  const auto one = clean_dataset(f.labels, f.store, 0.5, 4, 100, 3);
  set_thread_count(4);
  const auto four = clean_dataset(f.labels, f.store, 0.5, 4, 100, 3);
  set_thread_count(1);
  CHECK(one.kept == four.kept);
  CHECK(one.pairs == four.pairs);
  CHECK(one.stats == four.stats);
}

TEST_CASE("stats serialize as a JSON object with every counter") {
  const CleanStats s{1, 2, 30, 4, 50};
  const auto j = nlohmann::json::parse(format_clean_stats(s));
  CHECK(j.at("classes_removed_small") == 1);
  CHECK(j.at("classes_removed_no_pairs") == 2);
  CHECK(j.at("images_kept") == 30);
  CHECK(j.at("classes_kept") == 4);
  CHECK(j.at("pairs_sampled") == 50);
}

TEST_CASE("every kept image has a within-class edge and output is reproducible") {
  Rng rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = test::clean_fixture(rng, 500);
    const auto clean = clean_dataset(f.labels, f.store, 0.5, 4, 100, 9);
    for (const auto& [label, ids] : clean.kept) {
      for (const auto& id : ids) {
        const bool linked = std::any_of(ids.begin(), ids.end(), [&](const ImageId& other) {
          return other != id && dot(f.store.at(id), f.store.at(other)) > 0.5;
        });
        CHECK_MESSAGE(linked, id);
      }
    }
    test::TempDir a("clean-a"), b("clean-b");
    save_clean_dataset(clean, a / "kept.csv", a / "pairs.csv", a / "stats.json");
    save_clean_dataset(clean_dataset(f.labels, f.store, 0.5, 4, 100, 9), b / "kept.csv",
                       b / "pairs.csv", b / "stats.json");
    for (const char* name : {"kept.csv", "pairs.csv", "stats.json"}) {
      CHECK(read_text_file(a / name) == read_text_file(b / name));
    }
  }
}

}  // TEST_SUITE
