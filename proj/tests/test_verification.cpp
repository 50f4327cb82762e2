#include <doctest.h>

#include "lmr/error.hpp"
#include "lmr/features.hpp"
#include "lmr/parallel.hpp"
#include "lmr/verification.hpp"
#include "oracles.hpp"

using namespace lmr;

namespace {

std::vector<Correspondence> identity_corr(std::size_t n) {
  std::vector<Correspondence> c;
  for (std::size_t i = 0; i < n; ++i) c.push_back({i, i, 0.0});
  return c;
}

// A query whose features split into groups; candidate g repeats group g under
// its own affine map, so its inlier score is exactly the group size.
struct Scene {
  LocalFeatureSet query;
  std::vector<LocalFeatureSet> candidates;
};

Scene scene(Rng& rng, const std::vector<std::size_t>& groups) {
  Scene s{{"q", 16, {}, {}}, {}};
  for (std::size_t g = 0; g < groups.size(); ++g) {
    LocalFeatureSet cand{"c" + std::to_string(g), 16, {}, {}};
    const auto map = test::random_affine(rng);
    for (std::size_t i = 0; i < groups[g]; ++i) {
      const auto d = test::random_unit(rng, 16);
      const double x = rng.uniform(100, 900), y = rng.uniform(100, 900);
      test::push_feature(s.query, x, y, d);
      const auto [u, v] = map.apply(x, y);
      test::push_feature(cand, u, v, d);
    }
    if (groups[g] == 0) {
      // Two stray features can never support an affine fit.
      for (int i = 0; i < 2; ++i) {
        test::push_feature(cand, rng.uniform(0, 1000), rng.uniform(0, 1000),
                           test::random_unit(rng, 16));
      }
    }
    s.candidates.push_back(cand);
  }
  return s;
}

}  // namespace

TEST_SUITE("verification") {

TEST_CASE("identical feature sets match index to index") {
  Rng rng(31);
  const auto a = test::random_features(rng, "a", 25, 8);
  const auto c = match_features(a, a);
  REQUIRE(c.size() == 25);
  for (std::size_t i = 0; i < c.size(); ++i) {
    CHECK(c[i].a_index == i);
    CHECK(c[i].b_index == i);
    CHECK(c[i].distance == 0.0);
  }
}

TEST_CASE("single features are mutual by vacuity") {
  Rng rng(32);
  const auto a = test::random_features(rng, "a", 1, 8);
  const auto b = test::random_features(rng, "b", 1, 8);
  CHECK(match_features(a, b).size() == 1);
}

TEST_CASE("mutual nearest neighbours equal the exhaustive oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 50; ++trial) {
    const auto a = test::random_features(rng, "a", 20, 6);
    const auto b = test::random_features(rng, "b", 20, 6);
    std::vector<std::pair<std::size_t, std::size_t>> got;
    for (const auto& c : match_features(a, b)) got.emplace_back(c.a_index, c.b_index);
    CHECK(got == test::mutual_nn_oracle(a, b));
  }
}

TEST_CASE("matching rejects different descriptor sizes") {
  Rng rng(34);
  CHECK_THROWS_AS(match_features(test::random_features(rng, "a", 3, 4),
                                 test::random_features(rng, "b", 3, 5)),
                  ValidationError);
}

TEST_CASE("ten exact affine correspondences give ten inliers") {
  Rng rng(35);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = test::planted_pair(rng, "a", "b", 10, 0);
    CHECK(ransac_verify(identity_corr(10), p.a, p.b, {1000, 5.0, static_cast<std::uint64_t>(trial)}) == 10);
  }
}

TEST_CASE("planted inliers survive five random outliers") {
  Rng rng(36);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = test::planted_pair(rng, "a", "b", 10, 5);
    const int n = ransac_verify(identity_corr(15), p.a, p.b, {1000, 5.0, seed});
    CHECK(n >= 10);
    CHECK(n <= 11);
  }
}

TEST_CASE("fewer than three correspondences score zero") {
  Rng rng(37);
  const auto p = test::planted_pair(rng, "a", "b", 2, 0);
  CHECK(ransac_verify(identity_corr(2), p.a, p.b, {}) == 0);
}

TEST_CASE("collinear samples never produce a model") {
  LocalFeatureSet a{"a", 1, {}, {}}, b{"b", 1, {}, {}};
  for (int i = 0; i < 6; ++i) {
    test::push_feature(a, 10.0 * i, 20.0 * i, {static_cast<double>(i)});
    test::push_feature(b, 10.0 * i, 20.0 * i, {static_cast<double>(i)});
  }
  CHECK(ransac_verify(identity_corr(6), a, b, {}) == 0);
}

TEST_CASE("an image against itself scores its feature count") {
  Rng rng(38);
  const auto a = test::random_features(rng, "a", 40, 8);
  CHECK(inlier_score(a, a, {}) == 40);
}

TEST_CASE("unrelated 50-feature images score at most five") {
  Rng rng(39);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = test::random_features(rng, "a", 50, 32);
    const auto b = test::random_features(rng, "b", 50, 32);
    CHECK(inlier_score(a, b, {1000, 5.0, seed}) <= 5);
  }
}

TEST_CASE("planted pair scores through matching equal the direct count") {
  Rng rng(40);
  const auto p = test::planted_pair(rng, "a", "b", 10, 0);
  CHECK(inlier_score(p.a, p.b, {}) == ransac_verify(identity_corr(10), p.a, p.b, {}));
  CHECK(inlier_score(p.a, p.b, {}) == 10);
}

TEST_CASE("scores are reproducible and seeded per pair") {
  Rng rng(41);
  const auto a = test::random_features(rng, "a", 50, 4);
  const auto b = test::random_features(rng, "b", 50, 4);
  const RansacParams params{200, 20.0, 7};
  CHECK(inlier_score(a, b, params) == inlier_score(a, b, params));
  CHECK(pair_seed(7, "a", "b") != pair_seed(7, "b", "a"));
}

TEST_CASE("capping keeps the largest-scale features in their original order") {
  LocalFeatureSet s{"s", 1, {}, {}};
  for (int i = 0; i < 5; ++i) {
    s.keypoints.push_back({0, 0, static_cast<float>(i % 3)});
    s.descriptors.push_back(static_cast<float>(i));
  }
  const auto c = cap_features(s, 3);
  REQUIRE(c.size() == 3);
  CHECK(c.descriptors == std::vector<float>{1.0f, 2.0f, 4.0f});
  CHECK(kMaxFeaturesPerImage == 1000);
}

TEST_CASE("rescoring sums inliers per class over the top five") {
  Rng rng(42);
  const auto s = scene(rng, {30, 20, 25, 0, 0});
  MemoryFeatureSource src;
  src.add(s.query);
  LabelTable labels;
  const ClassLabel classes[] = {1, 2, 1, 3, 4};
  NeighborList n{"q", {}};
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    src.add(s.candidates[i]);
    labels.add(s.candidates[i].image, classes[i]);
    n.neighbors.push_back({s.candidates[i].image, 0.9 - 0.1 * i});
  }
  const auto r = rescore_candidates({n}, labels, src, {});
  REQUIRE(r.submission.rows.size() == 1);
  CHECK(r.submission.rows[0].guess->label == 1);
  CHECK(r.submission.rows[0].guess->confidence == 55.0);
  std::vector<int> inliers;
  for (const auto& p : r.pair_scores) inliers.push_back(p.inliers);
  CHECK(inliers == std::vector<int>{30, 20, 25, 0, 0});
}

TEST_CASE("rescoring with no geometric support falls back to the lowest label") {
  Rng rng(43);
  const auto s = scene(rng, {0, 0, 0});
  MemoryFeatureSource src;
  LocalFeatureSet q{"q", 16, {}, {}};
  for (int i = 0; i < 2; ++i) test::push_feature(q, 10.0 * i, 5.0, test::random_unit(rng, 16));
  src.add(q);
  LabelTable labels;
  NeighborList n{"q", {}};
  const ClassLabel classes[] = {8, 5, 6};
  for (std::size_t i = 0; i < 3; ++i) {
    src.add(s.candidates[i]);
    labels.add(s.candidates[i].image, classes[i]);
    n.neighbors.push_back({s.candidates[i].image, 0.5});
  }
  const auto r = rescore_candidates({n}, labels, src, {});
  CHECK(r.submission.rows[0].guess->label == 5);
  CHECK(r.submission.rows[0].guess->confidence == 0.0);
}

TEST_CASE("a single candidate yields its class and its score") {
  Rng rng(44);
  const auto s = scene(rng, {12});
  MemoryFeatureSource src;
  src.add(s.query);
  src.add(s.candidates[0]);
  LabelTable labels;
  labels.add("c0", 77);
  const auto r = rescore_candidates({{"q", {{"c0", 0.3}}}}, labels, src, {});
  CHECK(r.submission.rows[0].guess->label == 77);
  CHECK(r.submission.rows[0].guess->confidence == 12.0);
}

TEST_CASE("rescoring is independent of the worker count") {
  Rng rng(45);
  const auto s = scene(rng, {9, 14, 0, 6, 21, 3, 0});
  MemoryFeatureSource src;
  src.add(s.query);
  LabelTable labels;
  NeighborList n{"q", {}};
  for (std::size_t i = 0; i < s.candidates.size(); ++i) {
    src.add(s.candidates[i]);
    labels.add(s.candidates[i].image, i % 3);
    n.neighbors.push_back({s.candidates[i].image, 1.0 - 0.01 * i});
  }
  set_thread_count(1);
  const auto one = rescore_candidates({n}, labels, src, {});
  set_thread_count(4);
  const auto four = rescore_candidates({n}, labels, src, {});
  set_thread_count(1);
  CHECK(one.submission == four.submission);
  CHECK(one.pair_scores == four.pair_scores);
}

TEST_CASE("missing features are reported by image id") {
  MemoryFeatureSource src;
  try {
    src.get("nowhere");
    FAIL("lookup succeeded");
  } catch (const LookupError& e) {
    CHECK(std::string(e.what()).find("nowhere") != std::string::npos);
  }
}

TEST_CASE("directory source loads lazily and caches") {
  Rng rng(46);
  test::TempDir dir("feat");
  for (int i = 0; i < 3; ++i) {
    save_local_features(test::random_features(rng, "f" + std::to_string(i), 4, 4),
                        local_feature_path(dir.path(), "f" + std::to_string(i)));
  }
  DirectoryFeatureSource src(dir.path(), 2);
  CHECK(src.get("f0")->size() == 4);
  src.get("f0");
  CHECK(src.loads() == 1);
  src.get("f1");
  src.get("f2");
  CHECK(src.cached() == 2);
  CHECK_THROWS_AS(src.get("f9"), Error);
}

TEST_CASE("matches form a partial matching and inliers never exceed correspondences") {
  Rng rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const auto p = test::planted_pair(rng, "a", "b", 1 + rng.below(15), rng.below(15));
    auto b = p.b;
    for (int i = 0; i < 5; ++i) test::push_feature(b, rng.uniform(0, 1000), rng.uniform(0, 1000), test::random_unit(rng, 16));
    const auto corr = match_features(p.a, b);
    std::set<std::size_t> left, right;
    for (const auto& c : corr) {
      CHECK(left.insert(c.a_index).second);
      CHECK(right.insert(c.b_index).second);
    }
    const auto seed = static_cast<std::uint64_t>(trial);
    int previous = -1;
    for (double px : {1.0, 2.0, 5.0, 10.0, 50.0}) {
      const int n = ransac_verify(corr, p.a, b, {300, px, seed});
      CHECK(n <= static_cast<int>(corr.size()));
      CHECK(n >= previous);
      previous = n;
    }
  }
}

}  // TEST_SUITE
