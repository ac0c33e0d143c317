#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "propfield/error.hpp"
#include "propfield/fusion.hpp"
#include "propfield/metrics.hpp"
#include "propfield/pipeline.hpp"
#include "propfield/pointcloud.hpp"
#include "propfield/regression.hpp"
#include "propfield/synthetic.hpp"

namespace py = pybind11;
using namespace propfield;
namespace fs = std::filesystem;

namespace {

using Points = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

SourcePointCloud to_cloud(const Points& pts) {
  SourcePointCloud c;
  for (Eigen::Index i = 0; i < pts.rows(); ++i) c.push_back(pts.row(i).transpose(), 0);
  return c;
}

Points to_array(const SourcePointCloud& c) {
  Points out(static_cast<Eigen::Index>(c.size()), 3);
  for (std::size_t i = 0; i < c.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = c.points[i].transpose();
  return out;
}

py::dict metrics_dict(const InstanceMetrics& m) {
  py::dict d;
  d["ade"] = m.ade;
  d["alde"] = m.alde;
  d["ape"] = m.ape;
  d["mnre"] = m.mnre;
  return d;
}

PipelineConfig config_from(const std::string& json_text) {
  return json_text.empty() ? PipelineConfig{} : pipeline_config_from_json(nlohmann::json::parse(json_text));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Physical property fields from posed RGB-D captures";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  m.def("kernel_regress",
        [](const Eigen::VectorXd& weights, const std::vector<double>& values, double temperature) {
          return kernel_regress(weights, values, temperature);
        },
        py::arg("weights"), py::arg("values"), py::arg("temperature"));
  m.def("softmax_weights", [](const Eigen::VectorXd& w, double t) { return softmax_weights(w, t); },
        py::arg("weights"), py::arg("temperature"));
  m.def("segment_material", [](const Eigen::VectorXd& w) { return segment_material(w); }, py::arg("weights"));

  m.def("voxel_downsample", [](const Points& pts, double grid) { return to_array(voxel_downsample(to_cloud(pts), grid)); },
        py::arg("points"), py::arg("grid"));
  m.def("remove_outliers",
        [](const Points& pts, std::size_t k, double sigma) { return to_array(remove_outliers(to_cloud(pts), k, sigma)); },
        py::arg("points"), py::arg("k") = 20, py::arg("sigma") = 10.0);
  m.def("pca_project", [](const FeatureMatrix& f) { return pca_project(f); }, py::arg("features"));
  m.def("pca_colorize", [](const FeatureMatrix& f) { return pca_colorize(f); }, py::arg("features"));

  m.def("compute_metrics", [](double pred, double gt) { return metrics_dict(compute_metrics(pred, gt)); },
        py::arg("pred"), py::arg("gt"));
  m.def("pairwise_relationship_accuracy",
        [](const std::vector<double>& p, const std::vector<double>& g) { return pairwise_relationship_accuracy(p, g); },
        py::arg("preds"), py::arg("gts"));

  m.def("analytic_mass", [](const std::string& preset) { return analytic_mass(SyntheticSpec::preset(preset)); },
        py::arg("preset"));
  m.def("generate_scene",
        [](const std::string& preset, const fs::path& dir, std::uint64_t seed) {
          SyntheticSpec spec = SyntheticSpec::preset(preset);
          spec.seed = seed;
          generate_scene(spec, dir);
        },
        py::arg("preset"), py::arg("out_dir"), py::arg("seed") = 0);

  m.def("default_config", [] { return to_json(PipelineConfig{}).dump(); });
  m.def("run_pipeline",
        [](const fs::path& scene, const fs::path& out, const std::string& config_json, bool force) {
          Pipeline p(scene, out, config_from(config_json), force);
          p.extract();
          p.fuse();
          p.propose();
          p.predict();
          p.mass();
          p.export_ply();
          return read_json_file(out / "mass.json").dump();
        },
        py::arg("scene_dir"), py::arg("out_dir"), py::arg("config_json") = "", py::arg("force") = false,
        "Runs every stage and returns mass.json as text.");
  m.def("load_field",
        [](const fs::path& out, const std::string& tag) {
          const PropertyField f = load_property_field(out, tag);
          return py::make_tuple(to_array(f.source_points), f.values, f.material);
        },
        py::arg("out_dir"), py::arg("property") = "mass_density",
        "Returns (points, values, material indices) of a predicted field.");
}
