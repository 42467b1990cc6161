#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "heywood/errors.hpp"
#include "heywood/io.hpp"
#include "heywood/irt.hpp"
#include "heywood/numcore.hpp"
#include "heywood/ordfa.hpp"
#include "heywood/simgen.hpp"
#include "heywood/study.hpp"
#include "heywood/tetra.hpp"

namespace py = pybind11;
using namespace heywood;

namespace {

using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

BinaryDataset to_dataset(const ByteArray& arr) {
  if (arr.ndim() != 2) throw DomainError("expected a two-dimensional 0/1 array");
  const auto rows = static_cast<std::size_t>(arr.shape(0));
  const auto cols = static_cast<std::size_t>(arr.shape(1));
  std::vector<std::uint8_t> values(arr.data(), arr.data() + rows * cols);
  for (std::uint8_t v : values)
    if (v > 1) throw DomainError("responses must be 0 or 1");
  return BinaryDataset(rows, cols, std::move(values));
}

ByteArray to_array(const BinaryDataset& d) {
  ByteArray out({d.rows(), d.cols()});
  std::copy(d.values().begin(), d.values().end(), out.mutable_data());
  return out;
}

Estimator estimator_arg(const std::string& s) {
  auto e = parse_estimator(s);
  if (!e) throw DomainError("unknown estimator '" + s + "'");
  return *e;
}

Parameterization param_arg(const std::string& s) {
  auto p = parse_parameterization(s);
  if (!p) throw DomainError("unknown parameterization '" + s + "'");
  return *p;
}

py::dict summary_dict(const TetrachoricSummary& s) {
  py::dict d;
  d["n"] = s.n;
  d["taus"] = s.taus;
  d["rho"] = s.rho.matrix();
  d["boundary"] = s.boundary_flags;
  d["positive_definite"] = s.positive_definite;
  if (s.acov) d["acov"] = *s.acov;
  else d["acov"] = py::none();
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  static PyObject* error_type =
      PyErr_NewException("heywood._core.HeywoodError", PyExc_RuntimeError, nullptr);
  m.attr("HeywoodError") = py::handle(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::handle(error_type)(e.what());
      err.attr("kind") = e.kind();
      PyErr_SetObject(error_type, err.ptr());
    }
  });

  m.def("std_normal_cdf", &std_normal_cdf, py::arg("x"));
  m.def("std_normal_quantile", &std_normal_quantile, py::arg("p"));
  m.def("bivariate_normal_cdf", &bivariate_normal_cdf, py::arg("h"), py::arg("k"), py::arg("rho"));
  m.def("gauss_hermite", [](int n) {
    QuadratureRule r = gauss_hermite(n);
    return py::make_tuple(r.nodes, r.weights);
  }, py::arg("n"), "Nodes and weights of the n-point rule for E[f(Z)], Z standard normal.");

  m.def("theta_to_delta", &theta_to_delta, py::arg("lam"));
  m.def("delta_to_theta", &delta_to_theta, py::arg("lam"));

  m.def("table1_covariance", [] { return table1_covariance().matrix(); });
  m.def("simulate", [](std::size_t n, std::uint64_t seed, std::uint64_t replication, double tau) {
    const ContinuousDataset x = sample_mvn(table1_covariance(), n, SeedSpec{seed, replication});
    return to_array(dichotomize(x, tau));
  }, py::arg("n") = 200, py::arg("seed") = 20210101, py::arg("replication") = 0, py::arg("tau") = 0.0);

  m.def("tetrachoric", [](const ByteArray& data, bool acov) {
    const BinaryDataset d = to_dataset(data);
    TetrachoricSummary s = tetrachoric_matrix(d);
    if (acov) s.acov = acov_tetrachoric(d, s);
    return summary_dict(s);
  }, py::arg("data"), py::arg("acov") = false);

  m.def("fit_one_factor", [](const ByteArray& data, const std::string& estimator, const std::string& param) {
    const BinaryDataset d = to_dataset(data);
    const Estimator est = estimator_arg(estimator);
    const Parameterization p = param_arg(param);
    TetrachoricSummary s = tetrachoric_matrix(d);
    if (est != Estimator::uls) s.acov = acov_tetrachoric(d, s);
    const FactorFit fit = fit_one_factor(s, est, p);
    py::dict out;
    out["estimator"] = std::string(to_string(fit.estimator));
    out["parameterization"] = std::string(to_string(fit.parameterization));
    out["loadings"] = fit.loadings;
    out["residual_variances"] = fit.residual_variances;
    out["discrepancy"] = fit.discrepancy;
    out["iterations"] = fit.iterations;
    out["converged"] = fit.converged;
    out["diagnosis"] = std::string(to_string(fit.diagnosis));
    out["flagged"] = fit.flagged_variables;
    return out;
  }, py::arg("data"), py::arg("estimator") = "wlsmv", py::arg("parameterization") = "delta");

  m.def("fit_2pl", [](const ByteArray& data, int nodes) {
    IrtOptions opts;
    opts.nodes = nodes;
    const IrtFit fit = fit_2pl(to_dataset(data), opts);
    py::dict out;
    out["discriminations"] = fit.discriminations;
    out["difficulties"] = fit.difficulties;
    out["loglik"] = fit.loglik();
    out["converged"] = fit.converged;
    out["em_cycles"] = fit.em_cycles;
    out["extreme_items"] = fit.extreme_items;
    out["at_bound"] = fit.at_bound;
    return out;
  }, py::arg("data"), py::arg("nodes") = kDefaultQuadratureNodes);

  m.def("run_study_json", [](int replications, std::uint64_t seed, std::size_t n, double tau, unsigned threads) {
    StudyConfig c;
    c.replications = replications;
    c.base_seed = seed;
    c.n = n;
    c.tau = tau;
    c.threads = threads;
    StudyReport r;
    {
      py::gil_scoped_release release;
      r = run_study(c);
    }
    return report_json(r);
  });
}
