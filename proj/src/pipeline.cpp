#include "lmr/pipeline.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>

#include "lmr/error.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/features.hpp"
#include "lmr/random.hpp"

namespace lmr {

RansacParams PipelineConfig::ransac() const {
  RansacParams p;
  p.iterations = ransac_iterations;
  p.residual_px = ransac_residual_px;
  p.seed = derive_seed(seed, "ransac");
  return p;
}

RerankParams PipelineConfig::rerank() const {
  if (!rerank_n) throw UsageError("rerank.N is required for re-ranking (no default)");
  RerankParams p;
  p.pool_size = rerank_k;
  p.inlier_threshold = rerank_theta;
  p.anchors = *rerank_n;
  p.rounds = rerank_rounds;
  p.ransac = ransac();
  return p;
}

namespace {

struct ConfigKey {
  std::string key;
  std::function<void(PipelineConfig&, const std::string&, std::size_t)> set;
  std::function<std::optional<std::string>(const PipelineConfig&)> get;
};

template <typename T>
ConfigKey count_key(std::string key, T PipelineConfig::*member) {
  return {std::move(key),
          [member](PipelineConfig& c, const std::string& v, std::size_t line) {
            c.*member = static_cast<T>(parse_count(v, line));
          },
          [member](const PipelineConfig& c) -> std::optional<std::string> {
            return std::to_string(c.*member);
          }};
}

ConfigKey int_key(std::string key, int PipelineConfig::*member) {
  return {std::move(key),
          [member](PipelineConfig& c, const std::string& v, std::size_t line) {
            const auto n = parse_count(v, line);
            if (n > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) {
              throw ParseError("value out of range", line);
            }
            c.*member = static_cast<int>(n);
          },
          [member](const PipelineConfig& c) -> std::optional<std::string> {
            return std::to_string(c.*member);
          }};
}

ConfigKey real_key(std::string key, double PipelineConfig::*member) {
  return {std::move(key),
          [member](PipelineConfig& c, const std::string& v, std::size_t line) {
            c.*member = parse_real(v, line);
          },
          [member](const PipelineConfig& c) -> std::optional<std::string> {
            return format_exact(c.*member);
          }};
}

ConfigKey path_key(std::string key, fs::path PipelineConfig::*member) {
  return {std::move(key),
          [member](PipelineConfig& c, const std::string& v, std::size_t) { c.*member = v; },
          [member](const PipelineConfig& c) -> std::optional<std::string> {
            if ((c.*member).empty()) return std::nullopt;
            return (c.*member).string();
          }};
}

ConfigKey optional_count_key(std::string key, std::optional<std::size_t> PipelineConfig::*member) {
  return {std::move(key),
          [member](PipelineConfig& c, const std::string& v, std::size_t line) {
            c.*member = static_cast<std::size_t>(parse_count(v, line));
          },
          [member](const PipelineConfig& c) -> std::optional<std::string> {
            if (!(c.*member)) return std::nullopt;
            return std::to_string(*(c.*member));
          }};
}

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      path_key("paths.train_store", &PipelineConfig::train_store),
      path_key("paths.test_store", &PipelineConfig::test_store),
      path_key("paths.train_labels", &PipelineConfig::train_labels),
      path_key("paths.features_dir", &PipelineConfig::features_dir),
      path_key("paths.work_dir", &PipelineConfig::work_dir),
      path_key("paths.truth", &PipelineConfig::truth),
      count_key("search.k_store", &PipelineConfig::search_k_store),
      count_key("search.k_agg", &PipelineConfig::search_k_agg),
      count_key("search.tile_queries", &PipelineConfig::search_tile_queries),
      count_key("search.tile_train", &PipelineConfig::search_tile_train),
      real_key("clean.threshold", &PipelineConfig::clean_threshold),
      count_key("clean.min_size", &PipelineConfig::clean_min_size),
      count_key("clean.max_pairs", &PipelineConfig::clean_max_pairs),
      real_key("whiten.t", &PipelineConfig::whiten_t),
      count_key("whiten.dim", &PipelineConfig::whiten_dim),
      int_key("ransac.iterations", &PipelineConfig::ransac_iterations),
      real_key("ransac.residual_px", &PipelineConfig::ransac_residual_px),
      {"verify.order",
       [](PipelineConfig& c, const std::string& v, std::size_t line) {
         if (v == "inliers") {
           c.verify_order = CandidateOrder::kInliers;
         } else if (v == "global") {
           c.verify_order = CandidateOrder::kGlobal;
         } else {
           throw ParseError("verify.order must be 'inliers' or 'global'", line);
         }
       },
       [](const PipelineConfig& c) -> std::optional<std::string> {
         return c.verify_order == CandidateOrder::kInliers ? "inliers" : "global";
       }},
      count_key("verify.cache_size", &PipelineConfig::feature_cache),
      count_key("rerank.K", &PipelineConfig::rerank_k),
      int_key("rerank.theta", &PipelineConfig::rerank_theta),
      optional_count_key("rerank.N", &PipelineConfig::rerank_n),
      int_key("rerank.rounds", &PipelineConfig::rerank_rounds),
      real_key("svm.threshold", &PipelineConfig::svm_threshold),
      real_key("svm.lambda", &PipelineConfig::svm_lambda),
      int_key("svm.epochs", &PipelineConfig::svm_epochs),
      count_key("svm.positives", &PipelineConfig::svm_positives),
      count_key("svm.negatives", &PipelineConfig::svm_negatives),
      real_key("modify.divisor", &PipelineConfig::modify_divisor),
      optional_count_key("merge.head_size", &PipelineConfig::merge_head_size),
      count_key("seed", &PipelineConfig::seed),
  };
  return keys;
}

}  // namespace

const std::vector<std::string>& pipeline_config_keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& k : config_keys()) out.push_back(k.key);
    return out;
  }();
  return names;
}

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path& base_dir) {
  PipelineConfig cfg;
  for (const auto& kv : parse_key_values(text)) {
    const auto& keys = config_keys();
    auto it = std::find_if(keys.begin(), keys.end(), [&](const ConfigKey& k) { return k.key == kv.key; });
    if (it == keys.end()) throw ParseError("unknown config key '" + kv.key + "'", kv.line);
    it->set(cfg, kv.value, kv.line);
  }
  for (auto* p : {&cfg.train_store, &cfg.test_store, &cfg.train_labels, &cfg.features_dir,
                  &cfg.work_dir, &cfg.truth}) {
    if (!p->empty() && p->is_relative() && !base_dir.empty()) *p = base_dir / *p;
  }
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  try {
    return parse_pipeline_config(read_text_file(path), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

std::string format_pipeline_config(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    if (auto v = k.get(cfg)) out += k.key + " = " + *v + "\n";
  }
  return out;
}

const std::vector<std::string>& pipeline_recipes() {
  static const std::vector<std::string> recipes = {
      "step1", "step1-svm", "step1-svm-step3", "step1-step2", "step1-step2-step3",
      "modify", "merge", "full"};
  return recipes;
}

namespace {

// Stages memoize their submissions so shared prefixes run once per recipe.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg) : cfg_(cfg) {
    fs::create_directories(cfg_.work_dir);
  }

  const Submission& step1() {
    if (!step1_) {
      auto train = load_store(cfg_.train_store, "paths.train_store");
      auto test = load_store(cfg_.test_store, "paths.test_store");
      if (cfg_.whiten_dim > 0) whiten(train, test);
      neighbors_ = knn_search(test, train, cfg_.search_k_store,
                              {cfg_.search_tile_queries, cfg_.search_tile_train});
      save_neighbors(*neighbors_, cfg_.work_dir / "neighbors.csv");
      step1_ = aggregate_topk(*neighbors_, labels(), cfg_.search_k_agg);
      emit("step1", *step1_);
      train_ = std::move(train);
      test_ = std::move(test);
    }
    return *step1_;
  }

  const Submission& step1_svm() {
    if (!step1_svm_) {
      const auto& base = step1();
      std::vector<std::vector<float>> positives, negatives;
      // Positives: a seeded sample of train descriptors.
      std::vector<std::size_t> rows(train_->size());
      std::iota(rows.begin(), rows.end(), 0);
      Rng rng(derive_seed(cfg_.seed, "svm.positives"));
      const std::size_t take = std::min(cfg_.svm_positives, rows.size());
      for (std::size_t i = 0; i < take; ++i) {
        std::swap(rows[i], rows[i + rng.below(rows.size() - i)]);
        auto r = train_->row(rows[i]);
        positives.emplace_back(r.begin(), r.end());
      }
      // Negatives: the bottom of the Step-1 ranking.
      const auto order = ranked(base);
      const std::size_t neg = std::min(cfg_.svm_negatives, order.rows.size());
      for (std::size_t i = order.rows.size() - neg; i < order.rows.size(); ++i) {
        auto r = test_->at(order.rows[i].image);
        negatives.emplace_back(r.begin(), r.end());
      }
      const auto model = svm_train(positives, negatives, cfg_.svm_lambda, cfg_.svm_epochs,
                                   derive_seed(cfg_.seed, "svm"));
      write_text_file(cfg_.work_dir / "svm_model.txt", format_linear_model(model));
      step1_svm_ = svm_reweight(base, model, *test_, cfg_.svm_threshold);
      emit("step1_svm", *step1_svm_);
    }
    return *step1_svm_;
  }

  const Submission& step1_svm_step3() {
    if (!step1_svm_step3_) step1_svm_step3_ = rerank("step1_svm_step3", step1_svm());
    return *step1_svm_step3_;
  }

  const Submission& step2() {
    if (!step2_) {
      step1();
      auto result = rescore_candidates(*neighbors_, labels(), features(), cfg_.ransac(),
                                       cfg_.search_k_agg, cfg_.verify_order);
      write_text_file(cfg_.work_dir / "pair_scores.csv", format_pair_scores(result.pair_scores));
      step2_ = std::move(result.submission);
      emit("step2", *step2_);
    }
    return *step2_;
  }

  const Submission& step2_step3() {
    if (!step2_step3_) step2_step3_ = rerank("step2_step3", step2());
    return *step2_step3_;
  }

  const Submission& modified() {
    if (!modified_) {
      modified_ = modify_confidences(step2_step3(), step1(), cfg_.modify_divisor);
      emit("modified", *modified_);
    }
    return *modified_;
  }

  const Submission& merged() {
    if (!merged_) {
      merged_ = merge_alternating(modified(), step1_svm_step3(),
                                  cfg_.merge_head_size.value_or(cfg_.rerank_k));
      emit("final", *merged_);
    }
    return *merged_;
  }

  PipelineRun finish() {
    PipelineRun run;
    run.artifacts = artifacts_;
    if (!cfg_.truth.empty()) {
      const auto truth = load_ground_truth(cfg_.truth);
      std::vector<std::pair<std::string, Submission>> steps;
      for (const auto& name : {"step1", "step1_svm", "step1_svm_step3", "step2", "step2_step3",
                               "modified", "final"}) {
        auto it = produced_.find(name);
        if (it != produced_.end()) steps.emplace_back(name, it->second);
      }
      run.report = report(steps, truth);
      write_text_file(cfg_.work_dir / "report.txt", *run.report);
      run.artifacts["report"] = cfg_.work_dir / "report.txt";
    }
    return run;
  }

 private:
  static DescriptorStore load_store(const fs::path& path, const char* key) {
    if (path.empty()) throw UsageError(std::string("config key ") + key + " is required");
    return load_descriptor_store(path);
  }

  const LabelTable& labels() {
    if (!labels_) {
      if (cfg_.train_labels.empty()) throw UsageError("config key paths.train_labels is required");
      labels_ = load_label_table(cfg_.train_labels);
    }
    return *labels_;
  }

  const FeatureSource& features() {
    if (!features_) {
      if (cfg_.features_dir.empty()) throw UsageError("config key paths.features_dir is required");
      features_ = std::make_unique<DirectoryFeatureSource>(cfg_.features_dir, cfg_.feature_cache);
    }
    return *features_;
  }

  void whiten(DescriptorStore& train, DescriptorStore& test) const {
    const std::size_t d = train.dim();
    std::vector<double> data(train.matrix().begin(), train.matrix().end());
    const auto model = fit_auw(data, train.size(), d, cfg_.whiten_t, cfg_.whiten_dim);
    auto transform = [&](const DescriptorStore& in) {
      DescriptorStore out(static_cast<std::uint32_t>(cfg_.whiten_dim));
      for (std::size_t i = 0; i < in.size(); ++i) {
        std::vector<double> v(in.row(i).begin(), in.row(i).end());
        out.add(in.id(i), std::span<const double>(apply_auw(model, v)));
      }
      return out;
    };
    train = transform(train);
    test = transform(test);
  }

  Submission rerank(const std::string& name, const Submission& input) {
    auto result = rerank_inliers(input, features(), cfg_.rerank());
    write_text_file(cfg_.work_dir / (name + "_audit.csv"), format_rerank_audit(result.audit));
    emit(name, result.submission);
    return std::move(result.submission);
  }

  void emit(const std::string& name, const Submission& sub) {
    const auto path = cfg_.work_dir / (name + ".csv");
    save_submission(sub, path);
    artifacts_[name] = path;
    produced_[name] = sub;
  }

  const PipelineConfig& cfg_;
  std::optional<DescriptorStore> train_, test_;
  std::optional<LabelTable> labels_;
  std::unique_ptr<DirectoryFeatureSource> features_;
  std::optional<std::vector<NeighborList>> neighbors_;
  std::optional<Submission> step1_, step1_svm_, step1_svm_step3_, step2_, step2_step3_, modified_,
      merged_;
  std::map<std::string, fs::path> artifacts_;
  std::map<std::string, Submission> produced_;
};

}  // namespace

PipelineConfig benchmark_pipeline_config(std::size_t test_count, std::size_t anchors,
                                         std::uint64_t seed) {
  PipelineConfig pc;
  pc.train_store = "train.glds";
  pc.test_store = "test.glds";
  pc.train_labels = "train_labels.csv";
  pc.features_dir = "features";
  pc.truth = "truth.csv";
  pc.work_dir = "work";
  pc.rerank_n = anchors;
  pc.svm_negatives = std::max<std::size_t>(1, test_count / 4);
  pc.seed = seed;
  return pc;
}

PipelineRun run_pipeline(const PipelineConfig& cfg, const std::string& recipe) {
  const auto& recipes = pipeline_recipes();
  if (std::find(recipes.begin(), recipes.end(), recipe) == recipes.end()) {
    std::string list;
    for (const auto& r : recipes) list += (list.empty() ? "" : ", ") + r;
    throw UsageError("unknown recipe '" + recipe + "'; expected one of: " + list);
  }
  if (recipe != "step1" && recipe != "step1-svm" && recipe != "step1-step2") cfg.rerank();

  Pipeline p(cfg);
  if (recipe == "step1") {
    p.step1();
  } else if (recipe == "step1-svm") {
    p.step1_svm();
  } else if (recipe == "step1-svm-step3") {
    p.step1_svm_step3();
  } else if (recipe == "step1-step2") {
    p.step2();
  } else if (recipe == "step1-step2-step3") {
    p.step2_step3();
  } else if (recipe == "modify") {
    p.modified();
  } else {
    p.merged();
  }
  return p.finish();
}

}  // namespace lmr
