#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lmr/cleaning.hpp"
#include "lmr/descriptor_math.hpp"
#include "lmr/global_search.hpp"
#include "lmr/io.hpp"
#include "lmr/reranking.hpp"
#include "lmr/verification.hpp"

namespace lmr {

struct PipelineConfig {
  // Relative paths resolve against the config file's directory.
  fs::path train_store;
  fs::path test_store;
  fs::path train_labels;
  fs::path features_dir;
  fs::path work_dir = "work";
  fs::path truth;  // optional, enables report.txt

  std::size_t search_k_store = kNeighborsStored;
  std::size_t search_k_agg = kNeighborsAggregated;
  std::size_t search_tile_queries = TileShape{}.queries;
  std::size_t search_tile_train = TileShape{}.train;

  double clean_threshold = kCleanThreshold;
  std::size_t clean_min_size = kCleanMinClassSize;
  std::size_t clean_max_pairs = kCleanMaxPairs;

  double whiten_t = kAuwDefaultT;
  std::size_t whiten_dim = 0;  // 0 disables whitening before search

  int ransac_iterations = RansacParams{}.iterations;
  double ransac_residual_px = RansacParams{}.residual_px;
  CandidateOrder verify_order = CandidateOrder::kInliers;
  std::size_t feature_cache = 4096;

  std::size_t rerank_k = kRerankPool;
  int rerank_theta = kRerankInlierThreshold;
  std::optional<std::size_t> rerank_n;  // required for recipes that re-rank
  int rerank_rounds = kRerankRounds;

  double svm_threshold = kSvmThreshold;
  double svm_lambda = kSvmLambda;
  int svm_epochs = kSvmEpochs;
  std::size_t svm_positives = 20000;
  std::size_t svm_negatives = 10000;

  double modify_divisor = kModifyDivisor;
  std::optional<std::size_t> merge_head_size;  // defaults to rerank_k

  std::uint64_t seed = 0;

  RansacParams ransac() const;
  RerankParams rerank() const;  // throws UsageError when rerank.N is unset
};

/// Flat "key = value" text; unknown keys and malformed values are ParseErrors.
PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir = {});
PipelineConfig load_pipeline_config(const fs::path& path);
std::string format_pipeline_config(const PipelineConfig& cfg);
/// Every recognised key, in canonical order.
const std::vector<std::string>& pipeline_config_keys();

const std::vector<std::string>& pipeline_recipes();

/// Config for a directory written by save_synthetic_benchmark: relative paths,
/// rerank.N = `anchors`, a quarter of the test images as SVM negatives.
PipelineConfig benchmark_pipeline_config(std::size_t test_count, std::size_t anchors,
                                         std::uint64_t seed);

struct PipelineRun {
  std::map<std::string, fs::path> artifacts;  // step name -> file
  std::optional<std::string> report;
};

/// Runs a recipe end to end, writing each intermediate submission into the
/// work directory. Throws UsageError for an unknown recipe.
PipelineRun run_pipeline(const PipelineConfig& cfg, const std::string& recipe);

}  // namespace lmr
