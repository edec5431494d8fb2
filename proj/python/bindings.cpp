// Python bindings. Arrays cross the boundary as float32/float64 numpy arrays
// and are copied, so libtorch's own Python layer is not required.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <torch/torch.h>

#include <cstring>
#include <map>
#include <optional>
#include <string>

#include "starnet/attention.hpp"
#include "starnet/checkpoint.hpp"
#include "starnet/dataset.hpp"
#include "starnet/errors.hpp"
#include "starnet/losses.hpp"
#include "starnet/metrics.hpp"
#include "starnet/starnet.hpp"
#include "starnet/synth.hpp"
#include "starnet/train.hpp"

namespace py = pybind11;
using namespace starnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const Array& a, torch::ScalarType dtype = torch::kFloat64) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).to(dtype).clone();
}

py::array_t<float> to_numpy(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat32).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), c.data_ptr<float>(), sizeof(float) * c.numel());
  return out;
}

Preset parse_preset(const std::string& name) {
  if (name == "full") return Preset::full;
  if (name == "tiny") return Preset::tiny;
  if (name == "micro") return Preset::micro;
  throw ConfigError("unknown preset '" + name + "'");
}

class PyModel {
 public:
  explicit PyModel(ModelState m) : m_(std::move(m)) { m_.net->eval(); }

  static PyModel create(const std::string& preset, uint64_t seed, const std::map<std::string, bool>& flags) {
    return PyModel(build(ablate(make_preset(parse_preset(preset)), flags), seed));
  }

  py::array_t<float> forward(const Array& x) {
    torch::NoGradGuard no_grad;
    return to_numpy(m_.net->forward(to_tensor(x, torch::kFloat32)));
  }

  py::array_t<float> restore(const Array& image) { return to_numpy(restore_image(m_, to_tensor(image, torch::kFloat32))); }

  int64_t input_multiple() const { return m_.config.input_multiple(); }
  int64_t parameter_count() const { return m_.parameter_count; }
  std::string config_text() const { return m_.config.canonical_text(); }
  void save(const std::filesystem::path& path, int64_t epoch) const { save_model(path, m_, epoch); }

 private:
  ModelState m_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Single-image desnowing network";
  torch::set_num_threads(1);

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParameterError>(m, "ParameterError", PyExc_ValueError);
  py::register_exception<IngestionError>(m, "IngestionError", PyExc_OSError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_OSError);

  m.def("psnr", [](const Array& p, const Array& g, double peak) { return psnr(to_tensor(p), to_tensor(g), peak); },
        py::arg("pred"), py::arg("gt"), py::arg("peak") = 1.0);
  m.def("ssim", [](const Array& p, const Array& g) { return ssim(to_tensor(p), to_tensor(g)); }, py::arg("pred"),
        py::arg("gt"));
  m.def("smooth_l1",
        [](const Array& p, const Array& g, double beta) {
          return smooth_l1(to_tensor(p), to_tensor(g), beta).item<double>();
        },
        py::arg("pred"), py::arg("gt"), py::arg("beta") = 1.0);
  m.def("lr_at_epoch", &lr_at_epoch, py::arg("base_lr"), py::arg("epoch"), py::arg("period") = 40);
  m.def("channel_shuffle", [](const Array& x, int64_t groups) { return to_numpy(starnet::channel_shuffle(to_tensor(x), groups)); },
        py::arg("x"), py::arg("groups"));
  m.def("procedural_clean", [](int64_t h, int64_t w, uint64_t seed) { return to_numpy(procedural_clean(h, w, seed)); },
        py::arg("height"), py::arg("width"), py::arg("seed"));
  m.def("synthesize_pair",
        [](const Array& clean, uint64_t seed) {
          SnowSynthesisSpec spec;
          spec.seed = seed;
          auto pair = synthesize_pair(to_tensor(clean, torch::kFloat32), spec);
          return py::make_tuple(to_numpy(pair.snowy), to_numpy(pair.clean));
        },
        py::arg("clean"), py::arg("seed") = 0);
  m.def("load_manifest",
        [](const std::filesystem::path& root, const std::string& kind, const std::string& split) {
          py::list out;
          for (const auto& s : load_manifest(root, parse_dataset_kind(kind), split).samples) {
            py::dict d;
            d["id"] = s.id;
            d["snowy"] = s.snowy;
            d["clean"] = s.clean;
            out.append(d);
          }
          return out;
        },
        py::arg("root"), py::arg("kind") = "paired", py::arg("split") = "train");

  py::class_<Vgg16Features, std::shared_ptr<Vgg16Features>>(m, "Vgg16Features")
      .def(py::init([](std::optional<std::filesystem::path> weights) {
             return std::make_shared<Vgg16Features>(weights ? *weights : Vgg16Features::default_weights());
           }),
           py::arg("weights") = py::none(), "Weights container; defaults to $STARNET_VGG16_WEIGHTS")
      .def_property_readonly("pretrained", &Vgg16Features::pretrained)
      .def("features",
           [](Vgg16Features& self, const Array& x) {
             py::list out;
             for (const auto& t : self.features(to_tensor(x, torch::kFloat32))) out.append(to_numpy(t));
             return out;
           })
      .def("perceptual_loss", [](Vgg16Features& self, const Array& p, const Array& g) {
        return perceptual_loss(to_tensor(p, torch::kFloat32), to_tensor(g, torch::kFloat32), self).item<double>();
      });

  py::class_<PyModel>(m, "Model")
      .def(py::init(&PyModel::create), py::arg("preset") = "tiny", py::arg("seed") = 0,
           py::arg("flags") = std::map<std::string, bool>{})
      .def_static("load", [](const std::filesystem::path& p) { return PyModel(load_model(p)); })
      .def("forward", &PyModel::forward, "Raw network output for a [B, 3, H, W] batch")
      .def("restore", &PyModel::restore, "Clamped output for one [3, H, W] image of any size")
      .def("save", &PyModel::save, py::arg("path"), py::arg("epoch") = 0)
      .def_property_readonly("input_multiple", &PyModel::input_multiple)
      .def_property_readonly("parameter_count", &PyModel::parameter_count)
      .def_property_readonly("config_text", &PyModel::config_text);
}
