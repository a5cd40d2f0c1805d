#include <pybind11/complex.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "degflow/commands.hpp"
#include "degflow/fourier.hpp"
#include "degflow/metrics.hpp"
#include "degflow/png_io.hpp"
#include "degflow/studies.hpp"
#include "degflow/version.hpp"

namespace py = pybind11;
using namespace degflow;

namespace {

ImageF image_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() == 2) {
    ImageF img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), 1);
    std::memcpy(img.data.data(), a.data(), sizeof(float) * img.size());
    return img;
  }
  if (a.ndim() == 3 && (a.shape(2) == 1 || a.shape(2) == 3)) {
    ImageF img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
               static_cast<int>(a.shape(2)));
    std::memcpy(img.data.data(), a.data(), sizeof(float) * img.size());
    return img;
  }
  throw DataError("expected an (H,W) or (H,W,C) float array with C in {1,3}");
}

py::array_t<float> image_to_array(const ImageF& img) {
  py::array_t<float> a({img.height, img.width, img.channels});
  std::memcpy(a.mutable_data(), img.data.data(), sizeof(float) * img.size());
  return a;
}

py::array_t<std::complex<double>> spectrum_to_array(const Spectrum& s) {
  py::array_t<std::complex<double>> a({s.channels, s.height, s.width});
  std::memcpy(a.mutable_data(), s.data.data(), sizeof(std::complex<double>) * s.data.size());
  return a;
}

Spectrum spectrum_from_array(
    const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 3) throw DataError("expected a (C,H,W) complex array");
  Spectrum s(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
             static_cast<int>(a.shape(0)));
  std::memcpy(s.data.data(), a.data(), sizeof(std::complex<double>) * s.data.size());
  return s;
}

Tensor<float> tensor_from_array(
    const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.ndim());
  for (ssize_t i = 0; i < a.ndim(); ++i) shape[i] = a.shape(i);
  Tensor<float> t(shape);
  std::memcpy(t.data.data(), a.data(), sizeof(float) * t.data.size());
  return t;
}

py::array_t<float> tensor_to_array(const Tensor<float>& t) {
  std::vector<ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<float> a(shape);
  std::memcpy(a.mutable_data(), t.data.data(), sizeof(float) * t.data.size());
  return a;
}

std::vector<ImageF> images_from_list(const py::list& lst) {
  std::vector<ImageF> out;
  for (const auto& item : lst)
    out.push_back(image_from_array(
        item.cast<py::array_t<float, py::array::c_style | py::array::forcecast>>()));
  return out;
}

}  // namespace

PYBIND11_MODULE(_degflow, m) {
  m.doc() = "degradation modeling via Fourier priors and rectified flow";
  m.attr("__version__") = kVersion;

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<DivergenceError>(m, "DivergenceError");

  // rng / tensors
  m.def("rng_sequence", [](uint64_t seed, uint64_t stream, int count) {
    Rng rng(seed, stream);
    py::array_t<uint64_t> a(count);
    auto* p = a.mutable_data();
    for (int i = 0; i < count; ++i) p[i] = rng.next_u64();
    return a;
  }, py::arg("seed"), py::arg("stream") = 0, py::arg("count") = 1,
     "raw counter-RNG outputs (for cross-language stream checks)");
  m.def("randn", [](const std::vector<int64_t>& shape, uint64_t seed) {
    return tensor_to_array(randn<float>(shape, seed));
  }, py::arg("shape"), py::arg("seed"));

  // imgio
  m.def("load_image", [](const std::string& p) { return image_to_array(load_image(p)); });
  m.def("save_image", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                         const std::string& p) { save_image(image_from_array(a), p); });
  m.def("center_crop", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                          int h, int w) { return image_to_array(center_crop(image_from_array(a), h, w)); });
  m.def("random_patch", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                           int size, uint64_t seed) {
    return image_to_array(random_patch(image_from_array(a), size, seed));
  });

  // resample
  m.def("resize", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                     int h, int w, const std::string& filter) {
    return image_to_array(resize(image_from_array(a), h, w, filter_from_string(filter)));
  }, py::arg("img"), py::arg("out_h"), py::arg("out_w"), py::arg("filter") = "bilinear");
  m.def("dtlr", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                   int iterations, int scale, const std::string& filter) {
    return image_to_array(
        dtlr(image_from_array(a), DtlrSpec{iterations, scale, filter_from_string(filter)}));
  }, py::arg("img"), py::arg("iterations") = 10, py::arg("scale") = 4,
     py::arg("filter") = "bilinear");

  // fourier
  m.def("fft2", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
    return spectrum_to_array(fft2(image_from_array(a)));
  });
  m.def("ifft2", [](const py::array_t<std::complex<double>,
                                      py::array::c_style | py::array::forcecast>& a) {
    return image_to_array(ifft2(spectrum_from_array(a)));
  });
  m.def("amp_phase", [](const py::array_t<std::complex<double>,
                                          py::array::c_style | py::array::forcecast>& a) {
    const Spectrum s = spectrum_from_array(a);
    const AmpPhase ap = amp_phase(s);
    py::array_t<double> amp({ap.channels, ap.height, ap.width});
    py::array_t<double> phase({ap.channels, ap.height, ap.width});
    std::memcpy(amp.mutable_data(), ap.amplitude.data(), sizeof(double) * ap.amplitude.size());
    std::memcpy(phase.mutable_data(), ap.phase.data(), sizeof(double) * ap.phase.size());
    return py::make_tuple(amp, phase);
  });
  m.def("swap_amplitude",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& y) {
          return image_to_array(swap_amplitude(image_from_array(x), image_from_array(y)));
        });

  // metrics
  m.def("psnr", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                   const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
    return psnr(image_from_array(a), image_from_array(b));
  });
  m.def("ssim", [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                   const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
    return ssim(image_from_array(a), image_from_array(b));
  });

  // models
  py::class_<FgdmModel>(m, "FgdmModel")
      .def_static("load", [](const std::string& p) { return FgdmModel::load(p); })
      .def("save", [](const FgdmModel& model, const std::string& p) { model.save(p); })
      .def("apply", [](FgdmModel& model,
                       const py::array_t<float, py::array::c_style | py::array::forcecast>& a) {
        return image_to_array(fgdm_apply(image_from_array(a), model));
      })
      .def_property_readonly("trained_steps",
                             [](const FgdmModel& model) { return model.trained_steps; });

  py::class_<RfdmModel>(m, "RfdmModel")
      .def_static("load", [](const std::string& p) { return RfdmModel::load(p); })
      .def("save", [](const RfdmModel& model, const std::string& p) { model.save(p); })
      .def("apply", [](RfdmModel& model,
                       const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                       double lambda, int steps, uint64_t seed) {
        return image_to_array(rfdm_apply(image_from_array(a), model, lambda, steps, seed));
      }, py::arg("lr_bar"), py::arg("lam") = 0.1, py::arg("steps") = 20, py::arg("seed") = 0)
      .def("velocity", [](RfdmModel& model,
                          const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                          double t) { return tensor_to_array(model.velocity(tensor_from_array(a), t)); })
      .def_property_readonly("lam", [](const RfdmModel& model) { return model.lambda; })
      .def_property_readonly("trained_steps",
                             [](const RfdmModel& model) { return model.trained_steps; });

  m.def("fgdm_train", [](const py::list& lr_images, int iterations, int scale,
                         const std::string& filter, int steps, int batch, float lr, int patch,
                         uint64_t seed) {
    FgdmTrainConfig tc{steps, batch, lr, patch};
    auto res = fgdm_train(images_from_list(lr_images),
                          DtlrSpec{iterations, scale, filter_from_string(filter)}, AENetConfig{},
                          tc, seed);
    return py::make_tuple(std::move(res.model), res.losses);
  }, py::arg("lr_images"), py::arg("iterations") = 10, py::arg("scale") = 4,
     py::arg("filter") = "bilinear", py::arg("steps") = 2000, py::arg("batch") = 8,
     py::arg("lr") = 1e-4f, py::arg("patch") = 32, py::arg("seed") = 17);

  m.def("rfdm_train", [](const py::list& lr_images, FgdmModel& fgdm, int steps, int batch,
                         float lr, int patch, float lambda, uint64_t seed) {
    RfdmTrainConfig tc{steps, batch, lr, patch, lambda};
    auto res = rfdm_train(images_from_list(lr_images), fgdm, VelocityNetConfig{}, tc, seed);
    return py::make_tuple(std::move(res.model), res.losses);
  }, py::arg("lr_images"), py::arg("fgdm"), py::arg("steps") = 3000, py::arg("batch") = 8,
     py::arg("lr") = 1e-4f, py::arg("patch") = 32, py::arg("lam") = 0.1f, py::arg("seed") = 17);

  // flow machinery
  m.def("euler_integrate", [](const std::function<py::array_t<float>(py::array_t<float>, double)>& field,
                              const py::array_t<float, py::array::c_style | py::array::forcecast>& x0,
                              int steps) {
    VelocityField f = [&field](const Tensor<float>& state, double t) {
      return tensor_from_array(field(tensor_to_array(state), t));
    };
    return tensor_to_array(euler_integrate(f, tensor_from_array(x0), steps));
  });
  m.def("make_flow_sample",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& x_bar,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& x_real,
           double lambda, double t, uint64_t seed) {
          const FlowSample s =
              make_flow_sample(tensor_from_array(x_bar), tensor_from_array(x_real), lambda, t, seed);
          return py::make_tuple(tensor_to_array(s.x0), tensor_to_array(s.x1), s.t,
                                tensor_to_array(s.xt));
        });

  // studies / pipeline
  m.def("degradation_convergence_study",
        [](const py::list& real_set, const py::list& bi_set, int max_iters,
           const std::string& filter, int scale) {
          const auto rows = degradation_convergence_study(
              images_from_list(real_set), images_from_list(bi_set), max_iters,
              filter_from_string(filter), scale);
          py::list out;
          for (const auto& r : rows) out.append(py::make_tuple(r.iters, r.psnr, r.ssim));
          return out;
        }, py::arg("real_set"), py::arg("bi_set"), py::arg("max_iters") = 10,
           py::arg("filter") = "bilinear", py::arg("scale") = 4);
  m.def("generate_corpus", [](const std::string& root, int train_images, int val_images,
                              int hr_size, uint64_t seed) {
    CorpusSpec spec;
    spec.train_images = train_images;
    spec.val_images = val_images;
    spec.hr_size = hr_size;
    const auto paths = generate_corpus(root, spec, seed);
    return py::make_tuple(paths.train.hr_dir.string(), paths.train.lr_dir.string(),
                          paths.val.hr_dir.string(), paths.val.lr_dir.string());
  }, py::arg("root"), py::arg("train_images") = 8, py::arg("val_images") = 4,
     py::arg("hr_size") = 64, py::arg("seed") = 17);
}
