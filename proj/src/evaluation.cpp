#include "lmr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>

#include "lmr/descriptor_math.hpp"
#include "lmr/error.hpp"
#include "lmr/random.hpp"

namespace lmr {

double gap(const Submission& sub, const GroundTruth& truth) {
  validate_submission(sub);
  std::size_t landmarks = 0;
  for (const auto& [id, label] : truth) {
    if (label) ++landmarks;
  }
  for (const auto& row : sub.rows) {
    if (!truth.count(row.image)) {
      throw LookupError("image '" + row.image + "' is missing from the ground truth");
    }
  }
  if (landmarks == 0) return 0.0;

  const Submission order = ranked(sub);
  double sum = 0.0;
  std::size_t correct = 0;
  std::size_t seen = 0;
  for (const auto& row : order.rows) {
    if (!row.guess) break;
    ++seen;
    const auto& label = truth.at(row.image);
    if (label && *label == row.guess->label) {
      ++correct;
      sum += static_cast<double>(correct) / static_cast<double>(seen);
    }
  }
  return sum / static_cast<double>(landmarks);
}

GroundTruth parse_ground_truth(std::string_view text) {
  GroundTruth truth;
  for (auto [line_no, line] : csv_body(text, "id,landmark_id")) {
    auto fields = split_fields(line);
    if (fields.size() != 2) throw ParseError("expected 2 fields", line_no);
    std::string id(fields[0]);
    try {
      validate_image_id(id);
    } catch (const ValidationError& e) {
      throw ParseError(e.what(), line_no);
    }
    std::optional<ClassLabel> label;
    if (!fields[1].empty()) label = parse_label(fields[1], line_no);
    if (!truth.emplace(id, label).second) throw ParseError("duplicate id '" + id + "'", line_no);
  }
  return truth;
}

std::string format_ground_truth(const GroundTruth& truth) {
  std::string out = "id,landmark_id\n";
  for (const auto& [id, label] : truth) {
    out += id + ",";
    if (label) out += std::to_string(*label);
    out += "\n";
  }
  return out;
}

GroundTruth load_ground_truth(const fs::path& path) {
  try {
    return parse_ground_truth(read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  }
}

void save_ground_truth(const GroundTruth& truth, const fs::path& path) {
  write_text_file(path, format_ground_truth(truth));
}

namespace {

struct SynthField {
  const char* key;
  std::function<void(SynthConfig&, std::string_view, std::size_t)> set;
  std::function<std::string(const SynthConfig&)> get;
};

template <typename T>
SynthField count_field(const char* key, T SynthConfig::*member) {
  return {key,
          [member](SynthConfig& c, std::string_view v, std::size_t line) {
            c.*member = static_cast<T>(parse_count(v, line));
          },
          [member](const SynthConfig& c) { return std::to_string(c.*member); }};
}

SynthField real_field(const char* key, double SynthConfig::*member) {
  return {key,
          [member](SynthConfig& c, std::string_view v, std::size_t line) {
            c.*member = parse_real(v, line);
          },
          [member](const SynthConfig& c) { return format_exact(c.*member); }};
}

const std::vector<SynthField>& synth_fields() {
  static const std::vector<SynthField> fields = {
      count_field("num_classes", &SynthConfig::num_classes),
      count_field("images_per_class_min", &SynthConfig::images_per_class_min),
      count_field("images_per_class_max", &SynthConfig::images_per_class_max),
      count_field("num_test_landmarks", &SynthConfig::num_test_landmarks),
      count_field("num_distractors", &SynthConfig::num_distractors),
      count_field("descriptor_dim", &SynthConfig::descriptor_dim),
      real_field("intra_class_noise", &SynthConfig::intra_class_noise),
      count_field("features_per_image", &SynthConfig::features_per_image),
      count_field("local_desc_dim", &SynthConfig::local_desc_dim),
      count_field("base_points", &SynthConfig::base_points),
      real_field("local_desc_noise", &SynthConfig::local_desc_noise),
      real_field("keypoint_noise_px", &SynthConfig::keypoint_noise_px),
      real_field("train_visibility_min", &SynthConfig::train_visibility_min),
      real_field("train_visibility_max", &SynthConfig::train_visibility_max),
      real_field("train_view_rate", &SynthConfig::train_view_rate),
      real_field("off_view_visibility", &SynthConfig::off_view_visibility),
      count_field("generic_patterns", &SynthConfig::generic_patterns),
      count_field("generic_points", &SynthConfig::generic_points),
      real_field("train_generic_rate", &SynthConfig::train_generic_rate),
      real_field("distractor_generic_rate", &SynthConfig::distractor_generic_rate),
      real_field("max_rotation_deg", &SynthConfig::max_rotation_deg),
      real_field("min_scale", &SynthConfig::min_scale),
      real_field("max_scale", &SynthConfig::max_scale),
      real_field("max_translation_px", &SynthConfig::max_translation_px),
      real_field("frame_px", &SynthConfig::frame_px),
      count_field("seed", &SynthConfig::seed),
  };
  return fields;
}

void validate_synth_config(const SynthConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ValidationError(std::string("synthetic config: ") + what);
  };
  require(c.num_classes > 0, "num_classes must be positive");
  require(c.images_per_class_min > 0 && c.images_per_class_min <= c.images_per_class_max,
          "need 0 < images_per_class_min <= images_per_class_max");
  require(c.descriptor_dim > 0 && c.local_desc_dim > 0, "dimensions must be positive");
  require(c.intra_class_noise >= 0.0, "intra_class_noise must be >= 0");
  require(c.local_desc_noise >= 0.0 && c.keypoint_noise_px >= 0.0, "noise must be >= 0");
  require(c.base_points > 0 && c.base_points <= c.features_per_image,
          "need 0 < base_points <= features_per_image");
  require(c.train_visibility_min >= 0.0 && c.train_visibility_min <= c.train_visibility_max &&
              c.train_visibility_max <= 1.0,
          "need 0 <= train_visibility_min <= train_visibility_max <= 1");
  require(c.train_view_rate >= 0.0 && c.train_view_rate <= 1.0, "train_view_rate must be in [0, 1]");
  require(c.off_view_visibility >= 0.0 && c.off_view_visibility <= 1.0,
          "off_view_visibility must be in [0, 1]");
  require(c.train_generic_rate >= 0.0 && c.train_generic_rate <= 1.0 &&
              c.distractor_generic_rate >= 0.0 && c.distractor_generic_rate <= 1.0,
          "generic content rates must be in [0, 1]");
  require(c.base_points + c.generic_points <= c.features_per_image,
          "base_points + generic_points must fit in features_per_image");
  require(c.min_scale > 0.0 && c.min_scale <= c.max_scale, "need 0 < min_scale <= max_scale");
  require(c.frame_px > 0.0, "frame_px must be positive");
}

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  return l2_normalize(v);
}

std::vector<double> perturb(Rng& rng, const std::vector<double>& base, double noise) {
  std::vector<double> v = base;
  const double scale = noise / std::sqrt(static_cast<double>(base.size()));
  for (auto& x : v) x += scale * rng.normal();
  return l2_normalize(v);
}

std::string make_id(char prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%05zu", prefix, i);
  return buf;
}

struct ClassGeometry {
  std::vector<std::array<double, 2>> points;
  std::vector<std::vector<double>> descriptors;
};

void append_feature(LocalFeatureSet& set, double x, double y, double scale,
                    const std::vector<double>& desc) {
  set.keypoints.push_back({static_cast<float>(x), static_cast<float>(y), static_cast<float>(scale)});
  for (double v : desc) set.descriptors.push_back(static_cast<float>(v));
}

struct PlantedObject {
  const ClassGeometry* geometry;
  double visibility;
};

// Each planted object gets its own affine jitter about the frame center; the
// remaining feature budget is filled with unstructured clutter.
LocalFeatureSet synth_features(const SynthConfig& cfg, Rng& rng, const ImageId& id,
                               const std::vector<PlantedObject>& objects) {
  LocalFeatureSet set;
  set.image = id;
  set.desc_dim = static_cast<std::uint32_t>(cfg.local_desc_dim);
  const double c = cfg.frame_px / 2.0;
  for (const auto& object : objects) {
    const double angle = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg) *
                         std::numbers::pi / 180.0;
    const double s = rng.uniform(cfg.min_scale, cfg.max_scale);
    const double tx = rng.uniform(-cfg.max_translation_px, cfg.max_translation_px);
    const double ty = rng.uniform(-cfg.max_translation_px, cfg.max_translation_px);
    const auto& g = *object.geometry;
    for (std::size_t p = 0; p < g.points.size(); ++p) {
      const bool visible = rng.uniform() < object.visibility;
      const double nx = cfg.keypoint_noise_px * rng.normal();
      const double ny = cfg.keypoint_noise_px * rng.normal();
      const double scale = rng.uniform(1.0, 4.0);
      auto desc = perturb(rng, g.descriptors[p], cfg.local_desc_noise);
      if (!visible) continue;
      const double x0 = g.points[p][0] - c;
      const double y0 = g.points[p][1] - c;
      const double x = s * (std::cos(angle) * x0 - std::sin(angle) * y0) + c + tx + nx;
      const double y = s * (std::sin(angle) * x0 + std::cos(angle) * y0) + c + ty + ny;
      append_feature(set, x, y, scale, desc);
    }
  }
  for (std::size_t k = set.size(); k < cfg.features_per_image; ++k) {
    const double x = rng.uniform(0.0, cfg.frame_px);
    const double y = rng.uniform(0.0, cfg.frame_px);
    const double scale = rng.uniform(1.0, 4.0);
    append_feature(set, x, y, scale, random_unit(rng, cfg.local_desc_dim));
  }
  return set;
}

ClassGeometry random_geometry(const SynthConfig& cfg, Rng& rng, std::size_t points) {
  ClassGeometry g;
  for (std::size_t p = 0; p < points; ++p) {
    g.points.push_back({rng.uniform(0.0, cfg.frame_px), rng.uniform(0.0, cfg.frame_px)});
    g.descriptors.push_back(random_unit(rng, cfg.local_desc_dim));
  }
  return g;
}

}  // namespace

SynthConfig parse_synth_config(std::string_view text) {
  SynthConfig cfg;
  for (const auto& kv : parse_key_values(text)) {
    const auto& fields = synth_fields();
    auto it = std::find_if(fields.begin(), fields.end(),
                           [&](const SynthField& f) { return kv.key == f.key; });
    if (it == fields.end()) throw ParseError("unknown synthetic config key '" + kv.key + "'", kv.line);
    it->set(cfg, kv.value, kv.line);
  }
  validate_synth_config(cfg);
  return cfg;
}

std::string format_synth_config(const SynthConfig& cfg) {
  std::string out;
  for (const auto& f : synth_fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

SyntheticBenchmark generate_synthetic_benchmark(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  SyntheticBenchmark bench;
  bench.train = DescriptorStore(static_cast<std::uint32_t>(cfg.descriptor_dim));
  bench.test = DescriptorStore(static_cast<std::uint32_t>(cfg.descriptor_dim));

  Rng global(derive_seed(cfg.seed, "synth.global"));
  std::vector<std::vector<double>> prototypes;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    prototypes.push_back(random_unit(global, cfg.descriptor_dim));
  }

  std::vector<ClassLabel> train_class;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    const auto span = cfg.images_per_class_max - cfg.images_per_class_min + 1;
    const auto count = cfg.images_per_class_min + global.below(span);
    for (std::size_t i = 0; i < count; ++i) {
      const auto id = make_id('t', train_class.size());
      bench.train.add(id, std::span<const double>(perturb(global, prototypes[c], cfg.intra_class_noise)));
      bench.train_labels.add(id, c);
      train_class.push_back(c);
    }
  }

  // Test images are drawn, then shuffled so ids carry no information.
  struct TestImage {
    std::optional<ClassLabel> label;
    std::vector<double> desc;
  };
  std::vector<TestImage> tests;
  for (std::size_t i = 0; i < cfg.num_test_landmarks; ++i) {
    const ClassLabel c = global.below(cfg.num_classes);
    tests.push_back({c, perturb(global, prototypes[c], cfg.intra_class_noise)});
  }
  for (std::size_t i = 0; i < cfg.num_distractors; ++i) {
    tests.push_back({std::nullopt, random_unit(global, cfg.descriptor_dim)});
  }
  for (std::size_t i = tests.size(); i > 1; --i) std::swap(tests[i - 1], tests[global.below(i)]);
  std::vector<std::optional<ClassLabel>> test_class;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto id = make_id('q', i);
    bench.test.add(id, std::span<const double>(tests[i].desc));
    bench.truth.emplace(id, tests[i].label);
    test_class.push_back(tests[i].label);
  }

  Rng local(derive_seed(cfg.seed, "synth.local"));
  std::vector<ClassGeometry> geometry;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    geometry.push_back(random_geometry(cfg, local, cfg.base_points));
  }
  // Generic content (people, vehicles, signage) that is not specific to any
  // landmark turns up in some train photos and in most distractors.
  std::vector<ClassGeometry> generic;
  for (std::size_t k = 0; k < cfg.generic_patterns; ++k) {
    generic.push_back(random_geometry(cfg, local, cfg.generic_points));
  }
  auto maybe_generic = [&](double rate, std::vector<PlantedObject>& objects) {
    if (generic.empty() || local.uniform() >= rate) return;
    objects.push_back({&generic[local.below(generic.size())], 1.0});
  };

  // How much of the test viewpoint a class's train images show is a property
  // of the class. Each train image either shares that viewpoint or shows the
  // landmark from another side, where only a few of the points appear.
  std::vector<double> coverage;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    coverage.push_back(local.uniform(cfg.train_visibility_min, cfg.train_visibility_max));
  }
  for (std::size_t i = 0; i < bench.train.size(); ++i) {
    const bool same_view = local.uniform() < cfg.train_view_rate;
    const double vis = same_view ? coverage[train_class[i]] : cfg.off_view_visibility;
    std::vector<PlantedObject> objects{{&geometry[train_class[i]], vis}};
    maybe_generic(cfg.train_generic_rate, objects);
    bench.features.push_back(synth_features(cfg, local, bench.train.id(i), objects));
  }
  for (std::size_t i = 0; i < bench.test.size(); ++i) {
    std::vector<PlantedObject> objects;
    if (test_class[i]) {
      objects.push_back({&geometry[*test_class[i]], 1.0});
    } else {
      maybe_generic(cfg.distractor_generic_rate, objects);
    }
    bench.features.push_back(synth_features(cfg, local, bench.test.id(i), objects));
  }
  return bench;
}

void save_synthetic_benchmark(const SyntheticBenchmark& bench, const SynthConfig& cfg,
                              const fs::path& dir) {
  fs::create_directories(dir / "features");
  save_descriptor_store(bench.train, dir / "train.glds");
  save_label_table(bench.train_labels, dir / "train_labels.csv");
  save_descriptor_store(bench.test, dir / "test.glds");
  save_ground_truth(bench.truth, dir / "truth.csv");
  for (const auto& set : bench.features) {
    save_local_features(set, local_feature_path(dir / "features", set.image));
  }
  write_text_file(dir / "synth.cfg", format_synth_config(cfg));
}

MemoryFeatureSource feature_source(const SyntheticBenchmark& bench) {
  MemoryFeatureSource source;
  for (const auto& set : bench.features) source.add(set);
  return source;
}

std::string report(const std::vector<std::pair<std::string, Submission>>& steps,
                   const GroundTruth& truth) {
  std::size_t width = 6;
  for (const auto& [name, sub] : steps) width = std::max(width, name.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("#", 6) + pad("Method", width + 2) + "GAP\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    char value[32];
    std::snprintf(value, sizeof value, "%.5f", gap(steps[i].second, truth));
    out += pad("(" + std::to_string(i + 1) + ")", 6) + pad(steps[i].first, width + 2) + value + "\n";
  }
  return out;
}

}  // namespace lmr
