#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lmr/features.hpp"
#include "lmr/io.hpp"
#include "lmr/model.hpp"

namespace lmr {

/// Test id to landmark class; nullopt marks a distractor.
using GroundTruth = std::map<ImageId, std::optional<ClassLabel>>;

/// Global Average Precision: over non-empty predictions in ranked order,
/// (1/M) * sum of precision@i at each correct prediction i, where M counts the
/// landmark images in `truth`.
double gap(const Submission& sub, const GroundTruth& truth);

/// CSV "id,landmark_id", empty landmark_id for distractors.
GroundTruth parse_ground_truth(std::string_view text);
std::string format_ground_truth(const GroundTruth& truth);
GroundTruth load_ground_truth(const fs::path& path);
void save_ground_truth(const GroundTruth& truth, const fs::path& path);

struct SynthConfig {
  std::size_t num_classes = 50;
  std::size_t images_per_class_min = 5;
  std::size_t images_per_class_max = 20;
  std::size_t num_test_landmarks = 200;
  std::size_t num_distractors = 200;
  std::size_t descriptor_dim = 64;
  double intra_class_noise = 1.7;

  std::size_t features_per_image = 50;
  std::size_t local_desc_dim = 32;
  std::size_t base_points = 30;
  double local_desc_noise = 0.3;
  double keypoint_noise_px = 0.5;
  // Train images share the test viewpoint with probability train_view_rate and
  // then show a per-class fraction of the base points drawn from the visibility
  // range; otherwise they show off_view_visibility of them.
  double train_visibility_min = 0.5;
  double train_visibility_max = 0.9;
  double train_view_rate = 0.3;
  double off_view_visibility = 0.17;
  std::size_t generic_patterns = 4;
  std::size_t generic_points = 16;
  double train_generic_rate = 0.5;
  double distractor_generic_rate = 1.0;
  double max_rotation_deg = 15.0;
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_translation_px = 50.0;
  double frame_px = 1000.0;

  std::uint64_t seed = 0;
};

/// key=value text; unknown keys are rejected.
SynthConfig parse_synth_config(std::string_view text);
std::string format_synth_config(const SynthConfig& cfg);

struct SyntheticBenchmark {
  DescriptorStore train;
  LabelTable train_labels;
  DescriptorStore test;
  GroundTruth truth;
  std::vector<LocalFeatureSet> features;  // train images then test images
};

/// Class prototypes are random unit vectors; members are l2_normalize(prototype +
/// noise * g) with g ~ N(0, I/dim); distractors are fresh random unit vectors.
/// Local features place each class's base points under a per-image affine jitter,
/// with descriptor noise and random clutter; distractors are pure clutter.
SyntheticBenchmark generate_synthetic_benchmark(const SynthConfig& cfg);

/// Writes train.glds, train_labels.csv, test.glds, truth.csv, features/<id>.lf
/// and synth.cfg into `dir`.
void save_synthetic_benchmark(const SyntheticBenchmark& bench, const SynthConfig& cfg,
                              const fs::path& dir);

MemoryFeatureSource feature_source(const SyntheticBenchmark& bench);

/// Fixed-width step table: "#", "Method", "GAP".
std::string report(const std::vector<std::pair<std::string, Submission>>& steps,
                   const GroundTruth& truth);

}  // namespace lmr
