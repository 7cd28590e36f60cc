#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "pets/sdaq.hpp"
#include "pets/tasks.hpp"

namespace py = pybind11;
using namespace pets;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

struct SeriesView {
  std::vector<double> x;
  int C = 1;
  int L = 0;
  bool was_1d = true;
};

SeriesView to_series(const DoubleArray& arr) {
  SeriesView v;
  const auto info = arr.request();
  if (info.ndim == 1) {
    v.C = 1;
    v.L = static_cast<int>(info.shape[0]);
    v.was_1d = true;
  } else if (info.ndim == 2) {
    v.C = static_cast<int>(info.shape[0]);
    v.L = static_cast<int>(info.shape[1]);
    v.was_1d = false;
  } else {
    throw py::value_error("expected a 1-d series or a [C, L] array");
  }
  const auto* p = static_cast<const double*>(info.ptr);
  v.x.assign(p, p + static_cast<std::size_t>(v.C) * v.L);
  return v;
}

SdaqConfig make_cfg(int lambda, const std::vector<double>& mus,
                    const std::string& backend,
                    const std::string& wavelet) {
  SdaqConfig cfg;
  cfg.lambda = lambda;
  cfg.mus = mus;
  if (backend == "fft") {
    cfg.backend = Backend::FFT;
  } else if (backend == "cwt") {
    cfg.backend = Backend::CWT;
  } else {
    throw py::value_error("backend must be 'fft' or 'cwt'");
  }
  if (wavelet == "haar") {
    cfg.wavelet = Wavelet::Haar;
  } else if (wavelet == "morlet") {
    cfg.wavelet = Wavelet::Morlet;
  } else {
    throw py::value_error("wavelet must be 'haar' or 'morlet'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(petspy, m) {
  m.doc() = "Energy-guided time-frequency decomposition and forecast "
            "metrics.";

  m.def(
      "decompose",
      [](const DoubleArray& x, int lambda, const std::vector<double>& mus,
         const std::string& backend, const std::string& wavelet) {
        const SeriesView v = to_series(x);
        const SdaqConfig cfg = make_cfg(lambda, mus, backend, wavelet);
        const DecoupledSeries dec = sdaq_decompose(v.x, v.C, v.L, cfg);
        py::array_t<double> patterns({dec.K, dec.C, dec.L});
        std::copy(dec.patterns.begin(), dec.patterns.end(),
                  patterns.mutable_data());
        py::dict out;
        out["patterns"] = patterns;
        out["boundaries"] = dec.boundaries;
        out["band_energy"] = dec.band_energy;
        return out;
      },
      py::arg("x"), py::arg("lambda_") = 50,
      py::arg("mus") = std::vector<double>{0.7, 0.9},
      py::arg("backend") = "fft", py::arg("wavelet") = "haar",
      "Splits a series (1-d, or [C, L] for multichannel) into "
      "energy-ordered fluctuation patterns laid out [K, C, L].");

  m.def(
      "reconstruct",
      [](const DoubleArray& x, int lambda, const std::string& wavelet) {
        const SeriesView v = to_series(x);
        SdaqConfig cfg = make_cfg(lambda, {0.7, 0.9}, "cwt", wavelet);
        cfg.icwt_calibration = calibrate_icwt(cfg);
        const Spectrogram spec = cwt(v.x, v.C, v.L, cfg);
        const std::vector<double> y = icwt(spec, cfg);
        if (v.was_1d) {
          py::array_t<double> out(v.L);
          std::copy(y.begin(), y.end(), out.mutable_data());
          return out;
        }
        py::array_t<double> out({v.C, v.L});
        std::copy(y.begin(), y.end(), out.mutable_data());
        return out;
      },
      py::arg("x"), py::arg("lambda_") = 50, py::arg("wavelet") = "haar",
      "Round-trips a series through the calibrated wavelet transform "
      "and its inverse, returning the reconstruction.");

  m.def(
      "band_boundaries",
      [](const DoubleArray& x, int lambda, const std::vector<double>& mus,
         const std::string& backend, const std::string& wavelet) {
        const SeriesView v = to_series(x);
        const SdaqConfig cfg = make_cfg(lambda, mus, backend, wavelet);
        const Spectrogram spec = spectrogram(v.x, v.C, v.L, cfg);
        return partition_bands(spec, cfg.mus).boundaries;
      },
      py::arg("x"), py::arg("lambda_") = 50,
      py::arg("mus") = std::vector<double>{0.7, 0.9},
      py::arg("backend") = "fft", py::arg("wavelet") = "haar",
      "K + 1 ascending 1-based band boundaries of the energy "
      "partition.");

  m.def("ami", &ami, py::arg("column_energy"), py::arg("mu"),
        "Smallest 1-based index whose cumulative energy reaches mu "
        "times the total.");

  m.def(
      "calibrate_icwt",
      [](int lambda, const std::string& wavelet) {
        return calibrate_icwt(make_cfg(lambda, {0.7, 0.9}, "cwt", wavelet));
      },
      py::arg("lambda_") = 50, py::arg("wavelet") = "haar",
      "Least-squares gain applied by the wavelet inverse.");

  m.def("mse", &mse, py::arg("y"), py::arg("yhat"));
  m.def("mae", &mae, py::arg("y"), py::arg("yhat"));
  m.def("rmse", &rmse, py::arg("y"), py::arg("yhat"));
  m.def("mape", &mape, py::arg("y"), py::arg("yhat"));
  m.def("smape", &smape, py::arg("y"), py::arg("yhat"));
  m.def("mase", &mase, py::arg("y"), py::arg("yhat"), py::arg("season"));
  m.def("owa", &owa, py::arg("y"), py::arg("yhat"),
        py::arg("naive2_pred"), py::arg("season"));
  m.def("naive2_forecast", &naive2_forecast, py::arg("history"),
        py::arg("season"), py::arg("horizon"),
        "Repeats the last season of the history for horizon steps.");

  m.attr("__version__") = "0.1.0";
}
