// pybind11 front end. Arrays cross as float32 C-contiguous buffers; inputs are
// copied into the core types, outputs hand their storage to numpy.
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "attnwarp/blending.hpp"
#include "attnwarp/error.hpp"
#include "attnwarp/feature_warp.hpp"
#include "attnwarp/geometry.hpp"
#include "attnwarp/splat.hpp"
#include "attnwarp/tensor_io.hpp"

namespace py = pybind11;
using namespace attnwarp;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

PyObject* g_error_type = nullptr;

Tensor tensor_from_array(const FloatArray& a) {
  Tensor t;
  for (py::ssize_t k = 0; k < a.ndim(); ++k) {
    require(a.shape(k) >= 0 && a.shape(k) <= 0xFFFFFFFFll, ErrorKind::Size, "array dimension out of range");
    t.dims.push_back(static_cast<std::uint32_t>(a.shape(k)));
  }
  t.data.assign(a.data(), a.data() + a.size());
  return t;
}

template <class T>
py::array_t<T> array_from_vector(std::vector<T>&& values, std::vector<py::ssize_t> shape) {
  auto* owned = new std::vector<T>(std::move(values));
  py::capsule free_when_done(owned, [](void* p) { delete static_cast<std::vector<T>*>(p); });
  return py::array_t<T>(shape, owned->data(), free_when_done);
}

py::array_t<float> array_from_tensor(Tensor&& t) {
  std::vector<py::ssize_t> shape(t.dims.begin(), t.dims.end());
  return array_from_vector(std::move(t.data), shape);
}

py::array_t<float> array_from_features(FeatureMap&& f, bool squeeze) {
  std::vector<py::ssize_t> shape = {f.channels, f.height, f.width};
  if (squeeze) shape.erase(shape.begin());
  return array_from_vector(std::move(f.data), shape);
}

py::array_t<float> array_from_grid(std::vector<float>&& data, int h, int w) {
  return array_from_vector(std::move(data), {h, w});
}

Camera camera_arg(const py::object& obj) {
  if (py::isinstance<py::str>(obj)) return camera_from_json_text(obj.cast<std::string>());
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return camera_from_json_text(text);
}

py::object to_py_json(const nlohmann::ordered_json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

nlohmann::json from_py_json(const py::object& obj) {
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

Sampling sampling_arg(const std::string& s) { return sampling_from_string(s); }

/// Bundle as (manifest, tensors) in the on-disk manifest order.
py::tuple bundle_to_py(const AttentionBundle& bundle) {
  BundleParts parts = bundle_to_parts(bundle);
  py::list tensors;
  for (auto& t : parts.tensors) tensors.append(array_from_tensor(std::move(t)));
  return py::make_tuple(to_py_json(parts.manifest), tensors);
}

}  // namespace

PYBIND11_MODULE(_attnwarp, m) {
  m.doc() = "Depth-guided attention warping core";

  g_error_type = PyErr_NewExceptionWithDoc("attnwarp.Error",
                                           "Raised by the core; `kind` names the error variant.",
                                           PyExc_RuntimeError, nullptr);
  m.attr("Error") = py::handle(g_error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      const std::string kind(kind_name(e.kind()));
      py::object err = py::reinterpret_borrow<py::object>(g_error_type)(kind + ": " + e.what());
      err.attr("kind") = kind;
      PyErr_SetObject(g_error_type, err.ptr());
    }
  });

  py::class_<WarpField>(m, "WarpField")
      .def_readonly("width", &WarpField::width)
      .def_readonly("height", &WarpField::height)
      .def_readonly("src_width", &WarpField::src_width)
      .def_readonly("src_height", &WarpField::src_height)
      .def_property_readonly("u", [](const WarpField& f) {
        return array_from_vector(std::vector<double>(f.u), {f.height, f.width});
      })
      .def_property_readonly("v", [](const WarpField& f) {
        return array_from_vector(std::vector<double>(f.v), {f.height, f.width});
      })
      .def_property_readonly("valid", [](const WarpField& f) {
        return array_from_grid(std::vector<float>(f.valid.data), f.height, f.width);
      })
      .def("resample", [](const WarpField& f, int h, int w, int src_h, int src_w) {
        py::gil_scoped_release release;
        return resample_warp_field(f, h, w, src_h, src_w);
      }, py::arg("height"), py::arg("width"), py::arg("src_height") = 0, py::arg("src_width") = 0);

  m.def("compute_warp_field", [](const FloatArray& depth, const py::object& tgt, const py::object& src) {
    const DepthMap d = depth_from_tensor(tensor_from_array(depth));
    const Camera t = camera_arg(tgt), s = camera_arg(src);
    py::gil_scoped_release release;
    return compute_warp_field(d, t, s);
  }, py::arg("depth"), py::arg("tgt_camera"), py::arg("src_camera"),
        "Per-pixel source coordinates for every target pixel of `depth` [H,W].");

  m.def("warp_feature_map", [](const FloatArray& src, const WarpField& field, const std::string& sampling) {
    const bool flat = src.ndim() == 2;
    const FeatureMap f = feature_from_tensor(tensor_from_array(src));
    const Sampling s = sampling_arg(sampling);
    WarpedFeatures out;
    {
      py::gil_scoped_release release;
      out = warp_feature_map(f, field, s);
    }
    const int h = out.mask.height, w = out.mask.width;
    return py::make_tuple(array_from_features(std::move(out.features), flat),
                          array_from_grid(std::move(out.mask.data), h, w));
  }, py::arg("src"), py::arg("field"), py::arg("sampling") = "bilinear",
        "Warps a [C,h,w] or [h,w] array; returns (warped, mask).");

  m.def("warp_bundle", [](const py::object& manifest, const std::vector<FloatArray>& tensors,
                          const WarpField& field, const std::string& sampling) {
    std::vector<Tensor> parts;
    for (const auto& a : tensors) parts.push_back(tensor_from_array(a));
    const AttentionBundle bundle = bundle_from_parts(from_py_json(manifest), parts);
    const Sampling s = sampling_arg(sampling);
    WarpedBundle out;
    {
      py::gil_scoped_release release;
      out = warp_bundle(bundle, field, s);
    }
    py::tuple warped = bundle_to_py(out.bundle);
    py::dict masks;
    for (auto& [res, mask] : out.masks)
      masks[py::make_tuple(res.first, res.second)] = array_from_grid(std::move(mask.data), res.first, res.second);
    return py::make_tuple(warped[0], warped[1], masks);
  }, py::arg("manifest"), py::arg("tensors"), py::arg("field"), py::arg("sampling") = "bilinear",
        "Warps a bundle given as (manifest, tensors); returns (manifest, tensors, masks by (h, w)).");

  m.def("blend_masked", [](const FloatArray& warped, const FloatArray& fresh, const FloatArray& mask, double alpha) {
    const bool flat = warped.ndim() == 2;
    const FeatureMap w = feature_from_tensor(tensor_from_array(warped));
    const FeatureMap f = feature_from_tensor(tensor_from_array(fresh));
    const Mask mk = mask_from_tensor(tensor_from_array(mask));
    FeatureMap out;
    {
      py::gil_scoped_release release;
      out = blend_masked(w, f, mk, alpha);
    }
    return array_from_features(std::move(out), flat);
  }, py::arg("warped"), py::arg("fresh"), py::arg("mask"), py::arg("alpha"));

  m.def("alpha_at", [](std::int64_t t, std::int64_t total, double alpha0) {
    return alpha_at(BlendSchedule{alpha0, total}, t);
  }, py::arg("t"), py::arg("total"), py::arg("alpha0") = 0.9);

  m.def("filter_splats", [](const FloatArray& splats, const py::object& src, const py::object& tgt,
                            double theta_max_deg) {
    const SplatSet set = splats_from_tensor(tensor_from_array(splats));
    const Camera s = camera_arg(src), t = camera_arg(tgt);
    SplatSet kept;
    {
      py::gil_scoped_release release;
      kept = filter_splats(set, s, t, FilterConfig{theta_max_deg});
    }
    return array_from_tensor(splats_to_tensor(kept));
  }, py::arg("splats"), py::arg("src_camera"), py::arg("tgt_camera"), py::arg("theta_max_deg") = 60.0,
        "Keeps the rows of an [N,9] splat table whose view normals agree within theta_max.");

  m.def("render_depth", [](const FloatArray& splats, const py::object& cam) {
    const SplatSet set = splats_from_tensor(tensor_from_array(splats));
    const Camera c = camera_arg(cam);
    DepthMap d;
    {
      py::gil_scoped_release release;
      d = render_depth(set, c);
    }
    return array_from_tensor(to_tensor(d));
  }, py::arg("splats"), py::arg("camera"));

  m.def("read_tensor", [](const std::string& path) { return array_from_tensor(load_tensor(path)); },
        py::arg("path"));
  m.def("write_tensor", [](const std::string& path, const FloatArray& a) { save_tensor(path, tensor_from_array(a)); },
        py::arg("path"), py::arg("array"));
  m.def("decode_tensor", [](const py::bytes& b) { return array_from_tensor(decode_tensor(std::string(b))); },
        py::arg("data"));
  m.def("encode_tensor", [](const FloatArray& a) { return py::bytes(encode_tensor(tensor_from_array(a))); },
        py::arg("array"));
  m.def("read_bundle", [](const std::string& dir) { return bundle_to_py(load_bundle(dir)); }, py::arg("path"));
  m.def("write_bundle", [](const std::string& dir, const py::object& manifest,
                           const std::vector<FloatArray>& tensors) {
    std::vector<Tensor> parts;
    for (const auto& a : tensors) parts.push_back(tensor_from_array(a));
    save_bundle(dir, bundle_from_parts(from_py_json(manifest), parts));
  }, py::arg("path"), py::arg("manifest"), py::arg("tensors"));
}
