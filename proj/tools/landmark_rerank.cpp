// landmark-rerank: command-line front end for every pipeline stage.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "lmr/cleaning.hpp"
#include "lmr/error.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/features.hpp"
#include "lmr/global_search.hpp"
#include "lmr/io.hpp"
#include "lmr/parallel.hpp"
#include "lmr/pipeline.hpp"
#include "lmr/random.hpp"
#include "lmr/reranking.hpp"
#include "lmr/verification.hpp"

namespace {

using namespace lmr;

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct Globals {
  std::string config;
  std::size_t threads = 1;
};

PipelineConfig base_config(const Globals& g) {
  if (g.config.empty()) return PipelineConfig{};
  return load_pipeline_config(g.config);
}

template <typename T>
T pick(const std::optional<T>& flag, T fallback) {
  return flag ? *flag : fallback;
}

std::vector<float> row_vector(const DescriptorStore& store, std::size_t i) {
  auto r = store.row(i);
  return {r.begin(), r.end()};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landmark recognition by retrieval: search, verification, re-ranking, evaluation"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "Pipeline config file (key = value)");
  app.add_option("--threads", g.threads, "Worker thread cap")->check(CLI::PositiveNumber);

  // clean
  auto* clean = app.add_subcommand("clean", "Filter classes, build match graphs, sample pairs");
  std::string clean_labels, clean_store, clean_out;
  std::optional<double> clean_threshold;
  std::optional<std::size_t> clean_min, clean_pairs;
  std::optional<std::uint64_t> clean_seed;
  clean->add_option("--labels", clean_labels, "Train labels CSV")->required();
  clean->add_option("--store", clean_store, "Train descriptor store")->required();
  clean->add_option("--out-dir", clean_out, "Output directory")->required();
  clean->add_option("--threshold", clean_threshold, "Cosine similarity threshold (strict)");
  clean->add_option("--min-size", clean_min, "Smallest class size kept");
  clean->add_option("--max-pairs", clean_pairs, "Pairs sampled per class");
  clean->add_option("--seed", clean_seed, "Sampling seed");

  // search
  auto* search = app.add_subcommand("search", "Exact top-k cosine search of test vs train");
  std::string search_test, search_train, search_out;
  std::optional<std::size_t> search_k;
  search->add_option("--test", search_test, "Test descriptor store")->required();
  search->add_option("--train", search_train, "Train descriptor store")->required();
  search->add_option("--out", search_out, "Neighbors CSV")->required();
  search->add_option("--k", search_k, "Neighbors kept per query");

  // aggregate
  auto* aggregate = app.add_subcommand("aggregate", "Top-k class voting over neighbor lists");
  std::vector<std::string> agg_neighbors;
  std::string agg_labels, agg_out;
  std::optional<std::size_t> agg_k;
  aggregate->add_option("--neighbors", agg_neighbors, "Neighbors CSV (repeat for an ensemble)")
      ->required();
  aggregate->add_option("--labels", agg_labels, "Train labels CSV")->required();
  aggregate->add_option("--out", agg_out, "Submission CSV")->required();
  aggregate->add_option("--k-agg", agg_k, "Neighbors aggregated");

  // verify
  auto* verify = app.add_subcommand("verify", "Inlier rescoring of the stored candidates");
  std::string ver_neighbors, ver_labels, ver_features, ver_out, ver_pairs, ver_order;
  std::optional<std::size_t> ver_k;
  verify->add_option("--neighbors", ver_neighbors, "Neighbors CSV")->required();
  verify->add_option("--labels", ver_labels, "Train labels CSV")->required();
  verify->add_option("--features", ver_features, "Local feature directory")->required();
  verify->add_option("--out", ver_out, "Submission CSV")->required();
  verify->add_option("--pair-scores", ver_pairs, "Pair scores CSV");
  verify->add_option("--k-agg", ver_k, "Candidates aggregated");
  verify->add_option("--order", ver_order, "Candidate order")->check(CLI::IsMember({"inliers", "global"}));

  // rerank
  auto* rerank = app.add_subcommand("rerank", "Inlier-driven re-ranking of a submission");
  std::string rr_sub, rr_features, rr_out, rr_audit;
  std::optional<std::size_t> rr_n, rr_k;
  std::optional<int> rr_theta, rr_rounds;
  rerank->add_option("--submission", rr_sub, "Input submission")->required();
  rerank->add_option("--features", rr_features, "Local feature directory")->required();
  rerank->add_option("--out", rr_out, "Output submission")->required();
  rerank->add_option("--audit", rr_audit, "Audit CSV");
  rerank->add_option("--N", rr_n, "Anchors per round (required unless set in config)");
  rerank->add_option("--K", rr_k, "Pool size");
  rerank->add_option("--theta", rr_theta, "Inlier threshold");
  rerank->add_option("--rounds", rr_rounds, "Rounds");

  // svm-train
  auto* svm_tr = app.add_subcommand("svm-train", "Train the linear distractor SVM");
  std::string svm_pos, svm_neg, svm_out, svm_bottom;
  std::optional<std::size_t> svm_count;
  svm_tr->add_option("--positives", svm_pos, "Positive descriptor store")->required();
  svm_tr->add_option("--negatives", svm_neg, "Negative descriptor store")->required();
  svm_tr->add_option("--bottom-of", svm_bottom,
                     "Use only the lowest-ranked images of this submission as negatives");
  svm_tr->add_option("--count", svm_count, "Number of bottom-ranked negatives");
  svm_tr->add_option("--out", svm_out, "Model file")->required();

  // svm-reweight
  auto* svm_rw = app.add_subcommand("svm-reweight", "Lower confidences the SVM rejects");
  std::string rw_sub, rw_model, rw_desc, rw_out;
  std::optional<double> rw_threshold;
  svm_rw->add_option("--submission", rw_sub, "Input submission")->required();
  svm_rw->add_option("--model", rw_model, "Model file")->required();
  svm_rw->add_option("--descriptors", rw_desc, "Test descriptor store")->required();
  svm_rw->add_option("--out", rw_out, "Output submission")->required();
  svm_rw->add_option("--threshold", rw_threshold, "Output threshold");

  // modify
  auto* modify = app.add_subcommand("modify", "Add reference confidences / divisor");
  std::string mod_main, mod_ref, mod_out;
  std::optional<double> mod_div;
  modify->add_option("--main", mod_main, "Main submission")->required();
  modify->add_option("--ref", mod_ref, "Reference submission")->required();
  modify->add_option("--out", mod_out, "Output submission")->required();
  modify->add_option("--divisor", mod_div, "Divisor");

  // merge
  auto* merge = app.add_subcommand("merge", "Alternating merge of two submissions");
  std::string merge_a, merge_b, merge_out;
  std::optional<std::size_t> merge_head;
  merge->add_option("--a", merge_a, "First submission (leads)")->required();
  merge->add_option("--b", merge_b, "Second submission")->required();
  merge->add_option("--out", merge_out, "Output submission")->required();
  merge->add_option("--head-size", merge_head, "Rows alternated from each input");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Print the GAP of a submission");
  std::string ev_sub, ev_truth;
  evaluate->add_option("--submission", ev_sub, "Submission CSV")->required();
  evaluate->add_option("--truth", ev_truth, "Truth CSV")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic benchmark directory");
  std::string syn_cfg, syn_out;
  std::optional<std::uint64_t> syn_seed;
  std::optional<std::size_t> syn_n;
  synth->add_option("--synth-config", syn_cfg, "Generator config (key = value)");
  synth->add_option("--out", syn_out, "Output directory")->required();
  synth->add_option("--seed", syn_seed, "Seed override");
  synth->add_option("--N", syn_n, "rerank.N written into pipeline.cfg");

  // report
  auto* rep = app.add_subcommand("report", "GAP table over several submissions");
  std::vector<std::string> rep_steps;
  std::string rep_truth;
  rep->add_option("--truth", rep_truth, "Truth CSV")->required();
  rep->add_option("steps", rep_steps, "NAME=submission.csv ...")->required();

  // run
  auto* run = app.add_subcommand("run", "Run a pipeline recipe from the config");
  std::string run_recipe = "full";
  std::string run_work;
  run->add_option("--recipe", run_recipe, "Recipe name");
  run->add_option("--work-dir", run_work, "Override paths.work_dir");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    set_thread_count(g.threads);

    if (*clean) {
      const auto cfg = base_config(g);
      const auto result = clean_dataset(load_label_table(clean_labels), load_descriptor_store(clean_store),
                                        pick(clean_threshold, cfg.clean_threshold),
                                        pick(clean_min, cfg.clean_min_size),
                                        pick(clean_pairs, cfg.clean_max_pairs),
                                        pick(clean_seed, cfg.seed));
      fs::create_directories(clean_out);
      const fs::path dir(clean_out);
      save_clean_dataset(result, dir / "kept_labels.csv", dir / "pairs.csv", dir / "stats.json");
      std::cout << format_clean_stats(result.stats);
    } else if (*search) {
      const auto cfg = base_config(g);
      const auto lists = knn_search(load_descriptor_store(search_test), load_descriptor_store(search_train),
                                    pick(search_k, cfg.search_k_store),
                                    {cfg.search_tile_queries, cfg.search_tile_train});
      save_neighbors(lists, search_out);
    } else if (*aggregate) {
      const auto cfg = base_config(g);
      std::vector<std::vector<NeighborList>> models;
      for (const auto& path : agg_neighbors) models.push_back(load_neighbors(path));
      save_submission(ensemble_aggregate(models, load_label_table(agg_labels), pick(agg_k, cfg.search_k_agg)),
                      agg_out);
    } else if (*verify) {
      auto cfg = base_config(g);
      if (!ver_order.empty()) cfg.verify_order = ver_order == "global" ? CandidateOrder::kGlobal : CandidateOrder::kInliers;
      DirectoryFeatureSource features(ver_features, cfg.feature_cache);
      const auto result = rescore_candidates(load_neighbors(ver_neighbors), load_label_table(ver_labels),
                                             features, cfg.ransac(), pick(ver_k, cfg.search_k_agg),
                                             cfg.verify_order);
      save_submission(result.submission, ver_out);
      if (!ver_pairs.empty()) write_text_file(ver_pairs, format_pair_scores(result.pair_scores));
    } else if (*rerank) {
      auto cfg = base_config(g);
      if (rr_n) cfg.rerank_n = *rr_n;
      if (rr_k) cfg.rerank_k = *rr_k;
      if (rr_theta) cfg.rerank_theta = *rr_theta;
      if (rr_rounds) cfg.rerank_rounds = *rr_rounds;
      DirectoryFeatureSource features(rr_features, cfg.feature_cache);
      const auto result = rerank_inliers(load_submission(rr_sub), features, cfg.rerank());
      save_submission(result.submission, rr_out);
      if (!rr_audit.empty()) write_text_file(rr_audit, format_rerank_audit(result.audit));
    } else if (*svm_tr) {
      const auto cfg = base_config(g);
      const auto pos_store = load_descriptor_store(svm_pos);
      const auto neg_store = load_descriptor_store(svm_neg);
      std::vector<std::vector<float>> positives, negatives;
      for (std::size_t i = 0; i < pos_store.size(); ++i) positives.push_back(row_vector(pos_store, i));
      if (!svm_bottom.empty()) {
        const auto order = ranked(load_submission(svm_bottom));
        const std::size_t n = std::min(pick(svm_count, cfg.svm_negatives), order.rows.size());
        for (std::size_t i = order.rows.size() - n; i < order.rows.size(); ++i) {
          auto r = neg_store.at(order.rows[i].image);
          negatives.emplace_back(r.begin(), r.end());
        }
      } else {
        for (std::size_t i = 0; i < neg_store.size(); ++i) negatives.push_back(row_vector(neg_store, i));
      }
      const auto model = svm_train(positives, negatives, cfg.svm_lambda, cfg.svm_epochs,
                                   derive_seed(cfg.seed, "svm"));
      write_text_file(svm_out, format_linear_model(model));
    } else if (*svm_rw) {
      const auto cfg = base_config(g);
      const auto model = parse_linear_model(read_text_file(rw_model));
      save_submission(svm_reweight(load_submission(rw_sub), model, load_descriptor_store(rw_desc),
                                   pick(rw_threshold, cfg.svm_threshold)),
                      rw_out);
    } else if (*modify) {
      const auto cfg = base_config(g);
      save_submission(modify_confidences(load_submission(mod_main), load_submission(mod_ref),
                                         pick(mod_div, cfg.modify_divisor)),
                      mod_out);
    } else if (*merge) {
      const auto cfg = base_config(g);
      save_submission(merge_alternating(load_submission(merge_a), load_submission(merge_b),
                                        pick(merge_head, cfg.merge_head_size.value_or(cfg.rerank_k))),
                      merge_out);
    } else if (*evaluate) {
      std::printf("%.9f\n", gap(load_submission(ev_sub), load_ground_truth(ev_truth)));
    } else if (*synth) {
      SynthConfig cfg;
      if (!syn_cfg.empty()) cfg = parse_synth_config(read_text_file(syn_cfg));
      if (syn_seed) cfg.seed = *syn_seed;
      const auto bench = generate_synthetic_benchmark(cfg);
      const fs::path dir(syn_out);
      save_synthetic_benchmark(bench, cfg, dir);
      const auto pc = benchmark_pipeline_config(bench.test.size(),
                                                pick(syn_n, bench.test.size()), cfg.seed);
      write_text_file(dir / "pipeline.cfg", format_pipeline_config(pc));
    } else if (*rep) {
      std::vector<std::pair<std::string, Submission>> steps;
      for (const auto& item : rep_steps) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw UsageError("report steps are NAME=path, got '" + item + "'");
        steps.emplace_back(item.substr(0, eq), load_submission(item.substr(eq + 1)));
      }
      std::cout << report(steps, load_ground_truth(rep_truth));
    } else if (*run) {
      if (g.config.empty()) throw UsageError("run needs --config");
      auto cfg = base_config(g);
      if (!run_work.empty()) cfg.work_dir = run_work;
      const auto result = run_pipeline(cfg, run_recipe);
      for (const auto& [name, path] : result.artifacts) std::cerr << name << ": " << path.string() << "\n";
      if (result.report) std::cout << *result.report;
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
