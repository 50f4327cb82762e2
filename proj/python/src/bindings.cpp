#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lmr/descriptor_math.hpp"
#include "lmr/error.hpp"
#include "lmr/evaluation.hpp"
#include "lmr/global_search.hpp"
#include "lmr/io.hpp"
#include "lmr/parallel.hpp"
#include "lmr/pipeline.hpp"

namespace py = pybind11;
using namespace lmr;

namespace {

using MapArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using RowsArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FeatureMap to_map(const MapArray& a) {
  if (a.ndim() != 3) throw ValidationError("feature map must be a (height, width, channels) array");
  return FeatureMap(a.shape(0), a.shape(1), a.shape(2),
                    std::vector<double>(a.data(), a.data() + a.size()));
}

DescriptorStore to_store(const std::vector<ImageId>& ids, const RowsArray& rows) {
  if (rows.ndim() != 2) throw ValidationError("descriptors must be a (count, dim) array");
  if (static_cast<std::size_t>(rows.shape(0)) != ids.size()) {
    throw ValidationError("got " + std::to_string(ids.size()) + " ids for " +
                          std::to_string(rows.shape(0)) + " descriptor rows");
  }
  const auto dim = static_cast<std::size_t>(rows.shape(1));
  DescriptorStore store(static_cast<std::uint32_t>(dim));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    store.add(ids[i], std::span<const float>(rows.data() + i * dim, dim));
  }
  return store;
}

RowsArray store_matrix(const DescriptorStore& store) {
  RowsArray out({store.size(), static_cast<std::size_t>(store.dim())});
  std::copy(store.matrix().begin(), store.matrix().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Landmark recognition retrieval, verification and re-ranking";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<LookupError>(m, "LookupError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());
  py::register_exception<UsageError>(m, "UsageError", base.ptr());

  py::class_<Guess>(m, "Guess")
      .def(py::init<ClassLabel, double>(), py::arg("label"), py::arg("confidence"))
      .def_readwrite("label", &Guess::label)
      .def_readwrite("confidence", &Guess::confidence)
      .def("__eq__", [](const Guess& a, const Guess& b) { return a == b; })
      .def("__repr__", [](const Guess& g) {
        return "Guess(" + std::to_string(g.label) + ", " + format_confidence(g.confidence) + ")";
      });

  py::class_<Prediction>(m, "Prediction")
      .def(py::init<ImageId, std::optional<Guess>>(), py::arg("image"), py::arg("guess") = py::none())
      .def_readwrite("image", &Prediction::image)
      .def_readwrite("guess", &Prediction::guess)
      .def("__eq__", [](const Prediction& a, const Prediction& b) { return a == b; });

  py::class_<Submission>(m, "Submission")
      .def(py::init<>())
      .def(py::init([](std::vector<Prediction> rows) { return Submission{std::move(rows)}; }),
           py::arg("rows"))
      .def_readwrite("rows", &Submission::rows)
      .def("__len__", [](const Submission& s) { return s.rows.size(); })
      .def("__eq__", [](const Submission& a, const Submission& b) { return a == b; });

  m.def("parse_submission", &parse_submission, py::arg("text"));
  m.def("format_submission", &format_submission, py::arg("submission"));
  m.def("load_submission", &load_submission, py::arg("path"));
  m.def("save_submission", &save_submission, py::arg("submission"), py::arg("path"));
  m.def("ranked", &ranked, py::arg("submission"), "Copy sorted guesses first, confidence desc, id asc.");

  m.def("gap", &gap, py::arg("submission"), py::arg("truth"),
        "Global Average Precision; truth maps image id to its landmark or None.");
  m.def("load_ground_truth", &load_ground_truth, py::arg("path"));

  m.def("gem_pool", [](const MapArray& a, double p) { return gem_pool(to_map(a), p); },
        py::arg("feature_map"), py::arg("p") = 3.0);
  m.def("mac_pool", [](const MapArray& a) { return mac_pool(to_map(a)); }, py::arg("feature_map"));
  m.def("spoc_pool", [](const MapArray& a) { return spoc_pool(to_map(a)); }, py::arg("feature_map"));
  m.def("rmac_pool", [](const MapArray& a, int levels) { return rmac_pool(to_map(a), levels); },
        py::arg("feature_map"), py::arg("levels") = 3);
  m.def("contrastive_loss",
        [](const std::vector<double>& a, const std::vector<double>& b, bool positive, double margin) {
          return contrastive_loss(a, b, positive, margin);
        },
        py::arg("a"), py::arg("b"), py::arg("is_positive"), py::arg("margin") = kContrastiveMargin);
  m.def("triplet_loss",
        [](const std::vector<double>& q, const std::vector<double>& p, const std::vector<double>& n,
           double margin) { return triplet_loss(q, p, n, margin); },
        py::arg("query"), py::arg("positive"), py::arg("negative"), py::arg("margin") = kTripletMargin);

  m.def("knn_search",
        [](const std::vector<ImageId>& test_ids, const RowsArray& test, const std::vector<ImageId>& train_ids,
           const RowsArray& train, std::size_t k) {
          std::vector<std::pair<ImageId, std::vector<std::pair<ImageId, double>>>> out;
          for (const auto& list : knn_search(to_store(test_ids, test), to_store(train_ids, train), k)) {
            auto& row = out.emplace_back(list.query, std::vector<std::pair<ImageId, double>>{}).second;
            for (const auto& n : list.neighbors) row.emplace_back(n.train, n.similarity);
          }
          return out;
        },
        py::arg("test_ids"), py::arg("test"), py::arg("train_ids"), py::arg("train"),
        py::arg("k") = kNeighborsStored,
        "Exact top-k cosine neighbours as [(query, [(train, similarity), ...]), ...].");
  m.def("save_descriptors",
        [](const std::vector<ImageId>& ids, const RowsArray& rows, const fs::path& path) {
          save_descriptor_store(to_store(ids, rows), path);
        },
        py::arg("ids"), py::arg("descriptors"), py::arg("path"));
  m.def("load_descriptors",
        [](const fs::path& path) {
          const auto store = load_descriptor_store(path);
          return py::make_tuple(store.ids(), store_matrix(store));
        },
        py::arg("path"), "Returns (ids, float32 array of shape (count, dim)).");

  m.def("write_benchmark",
        [](const fs::path& dir, std::uint64_t seed) {
          SynthConfig cfg;
          cfg.seed = seed;
          const auto bench = generate_synthetic_benchmark(cfg);
          save_synthetic_benchmark(bench, cfg, dir);
          write_text_file(dir / "pipeline.cfg",
                          format_pipeline_config(benchmark_pipeline_config(
                              bench.test.size(), bench.test.size(), seed)));
          return dir / "pipeline.cfg";
        },
        py::arg("directory"), py::arg("seed") = 0,
        "Writes the default synthetic benchmark and its pipeline.cfg; returns the config path.");
  m.def("run_pipeline",
        [](const fs::path& config, const std::string& recipe, std::optional<fs::path> work_dir) {
          auto cfg = load_pipeline_config(config);
          if (work_dir) cfg.work_dir = *work_dir;
          py::gil_scoped_release release;
          return run_pipeline(cfg, recipe).artifacts;
        },
        py::arg("config"), py::arg("recipe") = "full", py::arg("work_dir") = py::none(),
        "Runs a recipe and returns {stage name: submission path}.");
  m.def("recipes", &pipeline_recipes);
  m.def("set_thread_count", &set_thread_count, py::arg("n"));
}
