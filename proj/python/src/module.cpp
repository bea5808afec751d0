#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <map>
#include <string>

#include "icl/errors.hpp"
#include "icl/evaluator.hpp"
#include "icl/harness.hpp"
#include "icl/lsa_model.hpp"
#include "icl/numerics.hpp"
#include "icl/os_trainer.hpp"
#include "icl/rmt_theory.hpp"
#include "icl/sft_trainer.hpp"
#include "icl/task_data.hpp"

namespace py = pybind11;
using namespace icl;

namespace {

LsaParams make_params(const Matrix& value, const std::optional<Matrix>& key_query) {
  LsaParams p;
  p.value = value;
  p.key_query = key_query ? *key_query : Matrix::Identity(value.rows(), value.cols());
  return p;
}

py::dict components_dict(const TheoryComponents& c) {
  py::dict d;
  d["q"] = c.q;
  d["saturated"] = c.saturated;
  d["w1"] = c.w1;
  d["w2"] = c.w2;
  d["v1"] = c.v1;
  d["v2"] = c.v2;
  d["T12"] = c.t12;
  d["Bias"] = c.bias;
  d["T_inv"] = c.t_inv;
  d["T_inv_Sigma"] = c.t_inv_sigma;
  d["T_var"] = c.t_var;
  d["T_var_Sigma"] = c.t_var_sigma;
  d["F"] = c.f;
  return d;
}

TheoryInputs theory_inputs(double beta, double rho, double r, double eta, double gamma,
                           double mu1) {
  TheoryInputs in;
  in.beta = beta;
  in.rho = rho;
  in.r = r;
  in.eta = eta;
  in.gamma = gamma;
  in.mu1 = mu1;
  return in;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Linear self-attention post-training simulator (C++ core).";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  auto numerical = py::register_exception<NumericalError>(m, "NumericalError", base.ptr());
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", numerical.ptr());
  py::register_exception<SingularityError>(m, "SingularityError", numerical.ptr());

  // Covariances.
  m.def("pretrain_covariance", [](Index d, Index mm, double rho) {
    return materialize(CovarianceSpec::pretrain(d, mm, rho));
  }, py::arg("d"), py::arg("m"), py::arg("rho"));
  m.def("posttest_covariance", [](Index d, Index mm, double rho) {
    return materialize(CovarianceSpec::posttest(d, mm, rho));
  }, py::arg("d"), py::arg("m"), py::arg("rho"));
  m.def("posttrain_covariance", [](Index d, Index mm, double rho, double r, double eta) {
    return materialize(CovarianceSpec::posttrain(d, mm, rho, r, eta));
  }, py::arg("d"), py::arg("m"), py::arg("rho"), py::arg("r"), py::arg("eta"));
  m.def("gamma0_inverse", &gamma0_inverse, py::arg("sigma0"), py::arg("n"));

  // Numerics.
  m.def("pinv", [](const Matrix& a, double tol) { return pinv(a, tol); }, py::arg("a"),
        py::arg("rel_tol") = kDefaultPinvTolerance);
  m.def("spectral_radius", &spectral_radius, py::arg("a"));

  // Data.
  py::class_<PromptBatch>(m, "PromptBatch")
      .def_readonly("n", &PromptBatch::n)
      .def_readonly("omega", &PromptBatch::omega)
      .def_readonly("signal", &PromptBatch::signal)
      .def_readonly("covariances", &PromptBatch::covariances)
      .def_property_readonly("size", &PromptBatch::size)
      .def_property_readonly("dim", &PromptBatch::dim);
  m.def("gen_prompt_batch",
        [](const Matrix& a, Index b, Index n, std::uint64_t seed, std::uint64_t stream) {
          RngStream rng(seed, stream);
          return gen_prompt_batch(a, b, n, rng);
        },
        py::arg("A"), py::arg("B"), py::arg("n"), py::arg("seed"), py::arg("stream") = 0);
  m.def("gen_prompt_signals",
        [](const Matrix& a, Index b, Index n, std::uint64_t seed, std::uint64_t stream) {
          RngStream rng(seed, stream);
          return gen_prompt_signals(a, b, n, rng);
        },
        py::arg("A"), py::arg("B"), py::arg("n"), py::arg("seed"), py::arg("stream") = 0);

  // SFT.
  m.def("sft_minimizer",
        [](const Matrix& phi, const Matrix& omega, const Matrix& g, double eta) {
          return sft_minimizer(phi, omega, g, eta);
        },
        py::arg("phi"), py::arg("omega"), py::arg("gamma0_inv"), py::arg("eta"));
  m.def("sft_first_order",
        [](const Matrix& phi, const Matrix& omega, const Matrix& a, const Matrix& g, double eta) {
          return sft_first_order(phi, omega, a, g, eta);
        },
        py::arg("phi"), py::arg("omega"), py::arg("A"), py::arg("gamma0_inv"), py::arg("eta"));
  m.def("sft_closed_form",
        [](const PromptBatch& b, const Matrix& g, double eta) {
          return sft_closed_form(b, g, eta).value;
        },
        py::arg("batch"), py::arg("gamma0_inv"), py::arg("eta"));
  m.def("sft_population_limit", &sft_population_limit, py::arg("A"), py::arg("gamma0_inv"),
        py::arg("eta"), py::arg("n"));

  // OS.
  m.def("os_loss", &os_loss_power_form, py::arg("value"), py::arg("batch"), py::arg("k"));
  m.def("os_grad", &os_grad, py::arg("value"), py::arg("batch"), py::arg("k"));
  m.def("os_hessian_bound", &os_hessian_bound, py::arg("value"), py::arg("batch"), py::arg("k"));
  m.def("os_gd",
        [](const Matrix& value, const PromptBatch& b, Index k, double step, Index steps) {
          OsConfig cfg;
          cfg.k = k;
          cfg.step = step;
          cfg.steps = steps;
          cfg.telemetry_every = 0;
          const OsGdResult r = os_gd(make_params(value, std::nullopt), b, cfg);
          return py::make_tuple(r.params.value, r.loss);
        },
        py::arg("value"), py::arg("batch"), py::arg("k"), py::arg("step"), py::arg("steps"));

  // Evaluation.
  m.def("posttest_error_exact", &posttest_error_exact, py::arg("value"), py::arg("sigma"),
        py::arg("n"));
  m.def("posttest_error_mc",
        [](const Matrix& value, const Matrix& sigma, Index n, Index k, Index trials,
           std::uint64_t seed, std::optional<Matrix> key_query) {
          RngStream rng(seed, 0);
          const ErrorReport r =
              posttest_error_mc(make_params(value, key_query), sigma, n, k, trials, rng);
          py::dict d;
          d["mean"] = r.mc_mean;
          d["stderr"] = r.mc_stderr;
          d["divergent"] = r.divergent;
          d["exact"] = r.exact;
          return d;
        },
        py::arg("value"), py::arg("sigma"), py::arg("n"), py::arg("k"), py::arg("trials"),
        py::arg("seed"), py::arg("key_query") = std::nullopt);

  // Theory.
  m.def("solve_q", &solve_q, py::arg("beta"), py::arg("mu"), py::arg("a_sq"));
  m.def("theory_components",
        [](double beta, double rho, double r, double eta, double gamma, double mu1) {
          return components_dict(theory_components(theory_inputs(beta, rho, r, eta, gamma, mu1)));
        },
        py::arg("beta"), py::arg("rho") = 0.1, py::arg("r") = 0.1, py::arg("eta") = 0.2,
        py::arg("gamma") = 1.0, py::arg("mu1") = 0.5);
  m.def("theory_endpoints",
        [](double rho, double r, double eta, double gamma, double mu1) {
          const TheoryEndpoints e = theory_endpoints(theory_inputs(0.0, rho, r, eta, gamma, mu1));
          return py::make_tuple(e.f0, e.f_inf, e.f_prime0);
        },
        py::arg("rho") = 0.1, py::arg("r") = 0.1, py::arg("eta") = 0.2, py::arg("gamma") = 1.0,
        py::arg("mu1") = 0.5);

  // Harness.
  m.def("experiment_names", [] {
    std::vector<std::string> out;
    for (auto n : experiment_names()) out.emplace_back(n);
    return out;
  });
  m.def("schema", [](const std::string& name) {
    const auto kind = parse_experiment(name);
    if (!kind) throw ConfigError("unknown experiment: " + name);
    return schema(*kind);
  }, py::arg("experiment"));
  m.def("run_experiment",
        [](const std::map<std::string, std::string>& settings) {
          ExperimentConfig cfg;
          for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
          SweepTable t;
          {
            py::gil_scoped_release release;
            t = run_experiment(cfg);
          }
          return to_csv(t);
        },
        py::arg("settings"),
        "Runs an experiment from config-file style settings and returns the CSV text.");
}
