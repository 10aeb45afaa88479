// Python bindings. Tensors cross the boundary as float64 numpy arrays; masks
// as boolean (or 0/1) 2-D arrays; prediction maps as 2-D float arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "myolo/attention.hpp"
#include "myolo/fmap_io.hpp"
#include "myolo/gradcheck.hpp"
#include "myolo/image.hpp"
#include "myolo/metrics.hpp"
#include "myolo/neck.hpp"
#include "myolo/ops.hpp"
#include "myolo/polygon.hpp"
#include "myolo/report.hpp"

namespace py = pybind11;
using namespace myolo;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(std::move(shape), std::move(data));
}

F64Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  F64Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

std::vector<Tensor> to_tensors(const std::vector<F64Array>& arrays) {
  std::vector<Tensor> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(to_tensor(a));
  return out;
}

void require_2d(const py::array& a, const char* what) {
  if (a.ndim() != 2) {
    throw ShapeError(std::string(what) + ": expected a 2-D array, got " +
                     std::to_string(a.ndim()) + "-D");
  }
}

BinaryMask to_mask(const py::array& a) {
  require_2d(a, "mask");
  const auto b = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(a);
  const auto h = static_cast<std::size_t>(b.shape(0));
  const auto w = static_cast<std::size_t>(b.shape(1));
  BinaryMask m(h, w);
  const double* p = b.data();
  for (std::size_t i = 0; i < h * w; ++i) m.set(i / w, i % w, p[i] != 0.0);
  return m;
}

py::array_t<bool> from_mask(const BinaryMask& m) {
  py::array_t<bool> out({static_cast<py::ssize_t>(m.height()), static_cast<py::ssize_t>(m.width())});
  bool* p = out.mutable_data();
  for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i];
  return out;
}

PredictionMap to_prediction(const F64Array& a) {
  require_2d(a, "prediction");
  const auto h = static_cast<std::size_t>(a.shape(0));
  const auto w = static_cast<std::size_t>(a.shape(1));
  return PredictionMap(h, w, std::vector<double>(a.data(), a.data() + a.size()));
}

// The reduction ratio is implied by the weight shapes.
std::size_t implied_reduction(const Tensor& w0) {
  if (w0.rank() != 2 || w0.dim(0) == 0) throw ShapeError("attention: w0 must be (hidden, channels)");
  return w0.dim(1) / w0.dim(0);
}

ChannelAttentionParams channel_params(const F64Array& w0, const F64Array& w1) {
  ChannelAttentionParams p{to_tensor(w0), to_tensor(w1)};
  p.reduction = implied_reduction(p.w0);
  p.validate();
  return p;
}

SpatialAttentionParams spatial_params(const F64Array& kernel, double bias) {
  SpatialAttentionParams p{to_tensor(kernel), bias};
  p.validate();
  return p;
}

fmap::TensorMap to_tensor_map(const std::map<std::string, F64Array>& m) {
  fmap::TensorMap out;
  for (const auto& [k, v] : m) out.emplace(k, to_tensor(v));
  return out;
}

std::map<std::string, F64Array> from_tensor_map(const fmap::TensorMap& m) {
  std::map<std::string, F64Array> out;
  for (const auto& [k, v] : m) out.emplace(k, to_array(v));
  return out;
}

}  // namespace

PYBIND11_MODULE(_myolo, m) {
  m.doc() = "Attention-augmented feature fusion, polygon encoding and saliency metrics.";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ValueError>(m, "InvalidValueError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

  py::enum_<PoolMode>(m, "PoolMode").value("avg", PoolMode::avg).value("max", PoolMode::max);
  py::enum_<UpsampleMode>(m, "UpsampleMode")
      .value("nearest", UpsampleMode::nearest)
      .value("bilinear", UpsampleMode::bilinear);

  // Kernels
  m.def(
      "conv2d",
      [](const F64Array& x, const F64Array& kernel, std::optional<F64Array> bias,
         std::size_t stride, std::size_t pad) {
        return to_array(ops::conv2d(to_tensor(x), to_tensor(kernel),
                                    bias ? to_tensor(*bias) : Tensor(), stride, pad));
      },
      py::arg("x"), py::arg("kernel"), py::arg("bias") = py::none(), py::arg("stride") = 1,
      py::arg("pad") = 0, "Cross-correlation with zero padding; x is (n,c,h,w).");
  m.def(
      "pool_global",
      [](const F64Array& x, PoolMode mode) { return to_array(ops::pool_global(to_tensor(x), mode)); },
      py::arg("x"), py::arg("mode"), "Per-channel spatial pooling to (n,c,1,1).");
  m.def(
      "pool_channelwise",
      [](const F64Array& x, PoolMode mode) {
        return to_array(ops::pool_channelwise(to_tensor(x), mode));
      },
      py::arg("x"), py::arg("mode"), "Pooling across channels to (n,1,h,w).");
  m.def(
      "dense",
      [](const F64Array& x, const F64Array& w, std::optional<F64Array> bias, bool relu) {
        return to_array(ops::dense(to_tensor(x), to_tensor(w), bias ? to_tensor(*bias) : Tensor(),
                                   relu ? Activation::relu : Activation::none));
      },
      py::arg("x"), py::arg("w"), py::arg("bias") = py::none(), py::arg("relu") = false);
  m.def(
      "upsample",
      [](const F64Array& x, std::size_t factor, UpsampleMode mode) {
        return to_array(ops::upsample(to_tensor(x), factor, mode));
      },
      py::arg("x"), py::arg("factor"), py::arg("mode") = UpsampleMode::nearest);

  // Attention
  m.def("effective_reduction", &effective_reduction, py::arg("channels"), py::arg("requested"));
  m.def(
      "channel_attention",
      [](const F64Array& f, const F64Array& w0, const F64Array& w1) {
        return to_array(channel_attention(to_tensor(f), channel_params(w0, w1)));
      },
      py::arg("f"), py::arg("w0"), py::arg("w1"), "Channel gate of shape (n,c,1,1).");
  m.def(
      "spatial_attention",
      [](const F64Array& f, const F64Array& kernel, double bias) {
        return to_array(spatial_attention(to_tensor(f), spatial_params(kernel, bias)));
      },
      py::arg("f"), py::arg("kernel"), py::arg("bias") = 0.0, "Spatial gate of shape (n,1,h,w).");
  m.def(
      "cbam",
      [](const F64Array& f, const F64Array& w0, const F64Array& w1, const F64Array& kernel,
         double bias) {
        return to_array(apply_cbam(to_tensor(f), channel_params(w0, w1), spatial_params(kernel, bias)));
      },
      py::arg("f"), py::arg("w0"), py::arg("w1"), py::arg("kernel"), py::arg("bias") = 0.0);
  m.def(
      "se",
      [](const F64Array& f, const F64Array& w0, const F64Array& w1) {
        SEParams p{to_tensor(w0), to_tensor(w1)};
        p.reduction = implied_reduction(p.w0);
        p.validate();
        return to_array(apply_se(to_tensor(f), p));
      },
      py::arg("f"), py::arg("w0"), py::arg("w1"));

  // Fusion
  m.def(
      "hypercolumn_fuse",
      [](const std::vector<F64Array>& pyramid, const std::vector<F64Array>& weights,
         UpsampleMode mode) {
        const auto p = to_tensors(pyramid);
        const auto w = to_tensors(weights);
        return to_array(hypercolumn_fuse(p, w, mode));
      },
      py::arg("pyramid"), py::arg("weights"), py::arg("mode") = UpsampleMode::nearest);
  m.def(
      "stairstep_fuse",
      [](const std::vector<F64Array>& pyramid, const std::vector<F64Array>& weights,
         UpsampleMode mode) {
        const auto p = to_tensors(pyramid);
        const auto w = to_tensors(weights);
        return to_array(stairstep_fuse(p, w, mode));
      },
      py::arg("pyramid"), py::arg("weights"), py::arg("mode") = UpsampleMode::nearest);
  m.def(
      "neck_config",
      [](const std::string& text) { return NeckConfig::parse(text).to_text(); },
      py::arg("text") = "", "Normalised config text with every default filled in.");
  m.def(
      "random_neck_params",
      [](const std::string& config, std::uint64_t seed) {
        Rng rng(seed);
        return from_tensor_map(NeckParams::random(NeckConfig::parse(config), rng).to_tensors());
      },
      py::arg("config") = "", py::arg("seed") = 42, "Named parameter arrays for a neck config.");
  m.def(
      "assemble_neck",
      [](const std::vector<F64Array>& pyramid, const std::string& config,
         const std::map<std::string, F64Array>& params) {
        const NeckConfig cfg = NeckConfig::parse(config);
        const NeckParams p = NeckParams::from_tensors(cfg, to_tensor_map(params));
        const auto levels = to_tensors(pyramid);
        return to_array(assemble_neck(levels, cfg, p));
      },
      py::arg("pyramid"), py::arg("config"), py::arg("params"));

  // Polygons
  py::class_<PolygonVertex>(m, "PolygonVertex")
      .def(py::init<std::size_t, double, double>(), py::arg("angle_bin"), py::arg("distance"),
           py::arg("confidence"))
      .def_readwrite("angle_bin", &PolygonVertex::angle_bin)
      .def_readwrite("distance", &PolygonVertex::distance)
      .def_readwrite("confidence", &PolygonVertex::confidence)
      .def("__repr__", [](const PolygonVertex& v) {
        return "PolygonVertex(" + std::to_string(v.angle_bin) + ", " + std::to_string(v.distance) +
               ", " + std::to_string(v.confidence) + ")";
      });
  py::class_<PolygonDetection>(m, "PolygonDetection")
      .def(py::init<>())
      .def_readwrite("cx", &PolygonDetection::cx)
      .def_readwrite("cy", &PolygonDetection::cy)
      .def_readwrite("bins", &PolygonDetection::bins)
      .def_readwrite("vertices", &PolygonDetection::vertices)
      .def_readwrite("threshold", &PolygonDetection::threshold)
      .def("label", &format_label)
      .def_static("parse", &parse_label, py::arg("line"), py::arg("bins"))
      .def("__eq__", [](const PolygonDetection& a, const PolygonDetection& b) { return a == b; });
  m.def(
      "encode_mask",
      [](const py::array& mask, std::size_t bins) { return encode_mask_to_polygon(to_mask(mask), bins); },
      py::arg("mask"), py::arg("bins") = kDefaultBins);
  m.def("decode_vertices", &decode_vertices, py::arg("raw"), py::arg("threshold") = kDefaultVertexThreshold);
  m.def(
      "rasterize",
      [](const PolygonDetection& poly, std::size_t height, std::size_t width) {
        return from_mask(rasterize_polygon(poly, height, width).mask);
      },
      py::arg("poly"), py::arg("height"), py::arg("width"));
  m.def(
      "iou", [](const py::array& a, const py::array& b) { return polygon_iou(to_mask(a), to_mask(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "head_parameters",
      [](std::size_t in_channels, std::size_t anchors, std::size_t classes, std::size_t bins) {
        const auto r = head_parameter_report(in_channels, anchors, classes, bins);
        return py::dict(py::arg("box") = r.box_parameters, py::arg("polygon") = r.polygon_parameters,
                        py::arg("ratio") = r.overhead_ratio);
      },
      py::arg("in_channels"), py::arg("anchors"), py::arg("classes"), py::arg("bins") = kDefaultBins);

  // Metrics
  m.def(
      "mae", [](const F64Array& p, const py::array& gt) { return metrics::mae(to_prediction(p), to_mask(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "f_beta",
      [](const F64Array& p, const py::array& gt, double beta2, std::optional<double> threshold) {
        return metrics::f_beta(to_prediction(p), to_mask(gt), {beta2, threshold});
      },
      py::arg("pred"), py::arg("gt"), py::arg("beta2") = metrics::kDefaultBeta2,
      py::arg("threshold") = py::none(), "None when gt has no foreground.");
  m.def(
      "e_measure",
      [](const py::array& pred, const py::array& gt) { return metrics::e_measure(to_mask(pred), to_mask(gt)); },
      py::arg("pred"), py::arg("gt"));
  m.def(
      "s_measure",
      [](const F64Array& p, const py::array& gt, double alpha) {
        return metrics::s_measure(to_prediction(p), to_mask(gt), alpha);
      },
      py::arg("pred"), py::arg("gt"), py::arg("alpha") = metrics::kDefaultAlpha);
  m.def(
      "ssim", [](const F64Array& a, const F64Array& b) { return metrics::ssim(to_prediction(a), to_prediction(b)); },
      py::arg("a"), py::arg("b"));
  m.def(
      "dataset_similarity",
      [](const std::vector<F64Array>& images, std::size_t pairs, std::uint64_t seed) {
        std::vector<PredictionMap> maps;
        for (const auto& a : images) maps.push_back(to_prediction(a));
        const auto r = metrics::dataset_similarity(maps, pairs, seed);
        return py::make_tuple(r.mean_ssim, r.pairs);
      },
      py::arg("images"), py::arg("pairs") = 1000, py::arg("seed") = metrics::kDefaultSeed,
      "(mean SSIM, pairs used); pairs=0 uses every pair.");
  m.def(
      "evaluate",
      [](const F64Array& p, const py::array& gt, double beta2, std::optional<double> threshold,
         double alpha) {
        const auto r = evaluate_image("", to_prediction(p), to_mask(gt), {beta2, threshold, alpha});
        return py::dict(py::arg("mae") = r.mae, py::arg("f_beta") = r.f_beta,
                        py::arg("e_measure") = r.e_measure, py::arg("s_measure") = r.s_measure);
      },
      py::arg("pred"), py::arg("gt"), py::arg("beta2") = metrics::kDefaultBeta2,
      py::arg("threshold") = py::none(), py::arg("alpha") = metrics::kDefaultAlpha);

  // Tensor files
  m.def(
      "read_fmap", [](const std::filesystem::path& p) { return to_array(fmap::read(p)); }, py::arg("path"));
  m.def(
      "write_fmap",
      [](const std::filesystem::path& p, const F64Array& a) { fmap::write(p, to_tensor(a)); },
      py::arg("path"), py::arg("array"), "Stored as float32.");

  // Gradient check
  m.def(
      "gradcheck",
      [](std::uint64_t seed, std::size_t trials, std::vector<std::string> cases) {
        gradcheck::Options opt;
        opt.seed = seed;
        opt.trials = trials;
        opt.cases = std::move(cases);
        py::list out;
        for (const auto& c : gradcheck::run(opt).cases) {
          out.append(py::dict(py::arg("name") = c.name, py::arg("configurations") = c.configurations,
                              py::arg("max_rel_error") = c.max_rel_error, py::arg("passed") = c.passed));
        }
        return out;
      },
      py::arg("seed") = 42, py::arg("trials") = 4, py::arg("cases") = std::vector<std::string>{});
}
