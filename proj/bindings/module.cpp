#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "json.hpp"
#include "stib/commands.hpp"
#include "stib/ksg.hpp"
#include "stib/linalg.hpp"
#include "stib/runio.hpp"
#include "stib/train.hpp"
#include "stib/version.hpp"

namespace py = pybind11;
using namespace stib;

namespace {

Matrix to_matrix(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D float64 array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::memcpy(m.data.data(), a.data(), m.size() * sizeof(double));
  return m;
}

py::array_t<double> to_array(const Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.data.data(), m.size() * sizeof(double));
  return a;
}

TrainConfig config_from_dict(const py::dict& d) {
  nlohmann::json j;
  for (const auto& item : d) {
    const std::string key = py::cast<std::string>(item.first);
    const py::handle v = item.second;
    if (py::isinstance<py::bool_>(v)) j[key] = py::cast<bool>(v);
    else if (py::isinstance<py::int_>(v)) j[key] = py::cast<std::int64_t>(v);
    else if (py::isinstance<py::float_>(v)) j[key] = py::cast<double>(v);
    else if (py::isinstance<py::str>(v)) j[key] = py::cast<std::string>(v);
    else throw ParseError("config: unsupported value type for key \"" + key + "\"");
  }
  return parse_train_config(j.dump());
}

py::dict config_to_dict(const TrainConfig& cfg) {
  const nlohmann::json j = nlohmann::json::parse(train_config_to_json(cfg));
  py::dict d;
  for (const auto& item : j.items()) {
    const nlohmann::json& v = item.value();
    if (v.is_string()) d[item.key().c_str()] = v.get<std::string>();
    else if (v.is_number_integer()) d[item.key().c_str()] = v.get<std::int64_t>();
    else d[item.key().c_str()] = v.get<double>();
  }
  return d;
}

py::dict metrics_to_dict(const Metrics& m) {
  py::dict d;
  d["mae_x"] = m.mae_x;
  d["mae_y"] = m.mae_y;
  d["mi_gauss_bits"] = m.mi_gauss_bits;
  d["mi_ksg_bits"] = m.mi_ksg_bits;
  return d;
}

// Trained model handle: parameters plus the config that produced them.
struct Model {
  StibParams params;
  TrainConfig config;
  std::vector<EpochTrace> trace;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Partitioned-latent information bottleneck with an adversarial "
            "Gaussian-correlation MI regulariser";
  m.attr("__version__") = kToolVersion;

  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);
  py::register_exception<NotPositiveDefiniteError>(m, "NotPositiveDefiniteError",
                                                   PyExc_ArithmeticError);

  m.def(
      "gen_spiral",
      [](std::size_t n, std::uint64_t seed, bool noise) {
        SpiralConfig cfg;
        cfg.n = n;
        cfg.seed = seed;
        cfg.noise_enabled = noise;
        const Dataset ds = gen_spiral(cfg);
        return py::make_tuple(to_array(ds.x), to_array(ds.y));
      },
      py::arg("n"), py::arg("seed") = 1, py::arg("noise") = true,
      "Generate the synthetic spiral dataset; returns (x, y) arrays.");

  m.def(
      "save_csv",
      [](const py::array_t<double>& x, const py::array_t<double>& y,
         const std::string& path) {
        Dataset ds;
        ds.x = to_matrix(x);
        ds.y = to_matrix(y);
        for (std::size_t j = 0; j < ds.x.cols; ++j)
          ds.column_names.push_back("x" + std::to_string(j));
        for (std::size_t j = 0; j < ds.y.cols; ++j)
          ds.column_names.push_back("y" + std::to_string(j));
        save_csv(ds, path);
      },
      py::arg("x"), py::arg("y"), py::arg("path"));

  m.def(
      "load_csv",
      [](const std::string& path) {
        const Dataset ds = load_csv(path);
        return py::make_tuple(to_array(ds.x), to_array(ds.y));
      },
      py::arg("path"));

  m.def("digamma", &digamma, py::arg("x"));
  m.def("gaussian_mi_closed_form", &gaussian_mi_closed_form, py::arg("rho"),
        "MI of a bivariate Gaussian with correlation rho, in bits.");

  m.def(
      "ksg_mi",
      [](const py::array_t<double>& x, const py::array_t<double>& y, int k,
         const std::string& units) {
        KsgConfig cfg;
        cfg.k = k;
        if (units == "bits") cfg.units = MiUnits::bits;
        else if (units == "nats") cfg.units = MiUnits::nats;
        else throw ParseError("units must be \"bits\" or \"nats\"");
        return ksg_mi(to_matrix(x), to_matrix(y), cfg);
      },
      py::arg("x"), py::arg("y"), py::arg("k") = 3, py::arg("units") = "bits",
      "Kraskov k-NN mutual information estimate between two sample blocks.");

  m.def(
      "gaussian_corr_mi",
      [](const py::array_t<double>& z0, const py::array_t<double>& y, double jitter) {
        return gaussian_corr_mi(to_matrix(z0), to_matrix(y), jitter).first;
      },
      py::arg("z0"), py::arg("y"), py::arg("jitter") = 1e-5,
      "Correlation-based Gaussian MI in nats.");

  m.def(
      "sample_correlation",
      [](const py::array_t<double>& x) { return to_array(sample_correlation(to_matrix(x))); },
      py::arg("x"));

  m.def(
      "cholesky",
      [](const py::array_t<double>& a, double jitter) {
        return to_array(cholesky(to_matrix(a), jitter));
      },
      py::arg("a"), py::arg("jitter") = 0.0);

  m.def("default_config", [] { return config_to_dict(TrainConfig{}); },
        "The shipped default training configuration as a dict.");

  py::class_<Model>(m, "Model")
      .def_property_readonly("config", [](const Model& mo) { return config_to_dict(mo.config); })
      .def_property_readonly("trace",
                             [](const Model& mo) {
                               py::list rows;
                               for (const EpochTrace& t : mo.trace) {
                                 py::dict r;
                                 r["loss_main"] = t.loss_main;
                                 r["loss_adv"] = t.loss_adv;
                                 r["mae_x"] = t.mae_x;
                                 r["mae_y"] = t.mae_y;
                                 rows.append(r);
                               }
                               return rows;
                             })
      .def("evaluate",
           [](const Model& mo, const py::array_t<double>& x, const py::array_t<double>& y) {
             Dataset ds;
             ds.x = to_matrix(x);
             ds.y = to_matrix(y);
             return metrics_to_dict(evaluate(mo.params, mo.config, ds));
           },
           py::arg("x"), py::arg("y"))
      .def("encode",
           [](const Model& mo, const py::array_t<double>& x) {
             Matrix mu, logvar;
             encode(mo.params.encoder, to_matrix(x), mu, logvar);
             return py::make_tuple(to_array(mu), to_array(logvar));
           },
           py::arg("x"))
      .def("decode",
           [](const Model& mo, const py::array_t<double>& z) {
             return to_array(mlp_forward(mo.params.decoder, to_matrix(z)));
           },
           py::arg("z"))
      .def("predict",
           [](const Model& mo, const py::array_t<double>& z) {
             const Matrix zm = to_matrix(z);
             const Matrix zp = mo.config.mode == Mode::vae
                                   ? zm
                                   : slice_cols(zm, mo.config.d_z0, zm.cols);
             return to_array(mlp_forward(mo.params.predictor, zp));
           },
           py::arg("z"), "Predict targets from full latent rows.")
      .def("traverse",
           [](const Model& mo, const py::array_t<double>& anchor_x, double lo,
              double hi, std::size_t steps) {
             const TraverseTable t =
                 traverse_z0(mo.params, mo.config, to_matrix(anchor_x), lo, hi, steps);
             py::dict d;
             d["t"] = py::cast(t.t);
             d["xhat"] = to_array(t.xhat);
             d["yhat"] = to_array(t.yhat);
             d["ydec"] = to_array(t.ydec);
             return d;
           },
           py::arg("anchor_x"), py::arg("lo") = -3.0, py::arg("hi") = 3.0,
           py::arg("steps") = 61)
      .def("save",
           [](const Model& mo, const std::string& path) {
             save_params(mo.params, mo.config, path);
           },
           py::arg("path"))
      .def_static("load", [](const std::string& path) {
        auto [params, cfg] = load_params(path);
        Model mo;
        mo.params = std::move(params);
        mo.config = cfg;
        return mo;
      });

  m.def(
      "fit",
      [](const py::dict& config, const py::array_t<double>& x,
         const py::array_t<double>& y) {
        Dataset ds;
        ds.x = to_matrix(x);
        ds.y = to_matrix(y);
        for (std::size_t j = 0; j < ds.x.cols; ++j)
          ds.column_names.push_back("x" + std::to_string(j));
        for (std::size_t j = 0; j < ds.y.cols; ++j)
          ds.column_names.push_back("y" + std::to_string(j));
        const TrainConfig cfg = config_from_dict(config);
        FitResult res = fit(cfg, ds);
        Model mo;
        mo.params = std::move(res.params);
        mo.config = cfg;
        mo.trace = std::move(res.trace);
        return mo;
      },
      py::arg("config"), py::arg("x"), py::arg("y"),
      "Train a model; config is a dict with exactly the training keys.");
}
