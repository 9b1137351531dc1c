#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "shufflevar/design.hpp"
#include "shufflevar/error.hpp"
#include "shufflevar/estimators.hpp"
#include "shufflevar/io.hpp"
#include "shufflevar/noise_models.hpp"
#include "shufflevar/permutations.hpp"
#include "shufflevar/reml.hpp"
#include "shufflevar/simulation.hpp"

namespace py = pybind11;
namespace sv = shufflevar;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using PermArg = std::variant<std::string, std::vector<std::size_t>>;

std::vector<double> to_vector(const Array& y) {
  if (y.ndim() != 1) throw py::value_error("expected a 1-d array");
  return {y.data(), y.data() + y.size()};
}

sv::Permutation to_permutation(const PermArg& arg, const sv::DesignSchedule& d,
                               std::uint64_t seed) {
  if (const auto* text = std::get_if<std::string>(&arg)) {
    return sv::build_permutation(sv::parse_permutation_spec(*text), d, seed);
  }
  return sv::Permutation(std::get<std::vector<std::size_t>>(arg));
}

py::dict to_dict(const sv::VarianceEstimate& e) {
  py::dict out;
  out["method"] = e.method;
  out["sigma2_A_raw"] = e.sigma2_A_raw;
  out["sigma2_A"] = e.sigma2_A;
  out["noise_level"] = e.noise_level;
  out["ms_between"] = e.total;
  out["omega2"] = e.omega2;
  out["alpha"] = e.alpha ? py::cast(*e.alpha) : py::none();
  out["f_statistic"] = e.f_statistic ? py::cast(*e.f_statistic) : py::none();
  out["flags"] = e.flags.to_string();
  return out;
}

}  // namespace

PYBIND11_MODULE(_shufflevar, m) {
  m.doc() = "Shuffle estimator of signal and explainable variance";

  static py::exception<sv::Error> error(m, "ShufflevarError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const sv::Error& e) {
      py::set_error(error, e.what());
    }
  });

  py::class_<sv::DesignSchedule>(m, "Design")
      .def(py::init([](const std::vector<std::string>& stimuli,
                       std::optional<std::vector<std::string>> blocks) {
             return blocks ? sv::DesignSchedule::build(stimuli, *blocks)
                           : sv::DesignSchedule::build(stimuli);
           }),
           py::arg("stimuli"), py::arg("blocks") = py::none())
      .def_property_readonly("T", &sv::DesignSchedule::T)
      .def_property_readonly("m", &sv::DesignSchedule::m)
      .def_property_readonly("n", &sv::DesignSchedule::n)
      .def_property_readonly("num_blocks", &sv::DesignSchedule::num_blocks)
      .def_property_readonly("stimulus_labels", &sv::DesignSchedule::stimulus_labels)
      .def("__repr__", [](const sv::DesignSchedule& d) {
        return "Design(T=" + std::to_string(d.T()) + ", m=" + std::to_string(d.m()) +
               ", n=" + std::to_string(d.n()) + ")";
      });

  m.def("permutation",
        [](const std::string& spec, const sv::DesignSchedule& d, std::uint64_t seed) {
          const auto p = sv::build_permutation(sv::parse_permutation_spec(spec), d, seed);
          return std::vector<std::size_t>(p.mapping().begin(), p.mapping().end());
        },
        py::arg("spec"), py::arg("design"), py::arg("seed") = 1,
        "0-based mapping g with (PY)_t = Y[g(t)].");

  m.def("alpha",
        [](const sv::DesignSchedule& d, const PermArg& p, std::uint64_t seed) {
          return sv::alpha(d, to_permutation(p, d, seed));
        },
        py::arg("design"), py::arg("permutation") = "reverse", py::arg("seed") = 1);

  m.def("is_trivial",
        [](const sv::DesignSchedule& d, const PermArg& p, std::uint64_t seed) {
          return sv::is_trivial(to_permutation(p, d, seed), d);
        },
        py::arg("design"), py::arg("permutation") = "reverse", py::arg("seed") = 1);

  m.def("ms_between", [](const Array& y, const sv::DesignSchedule& d) {
    return sv::ms_between(to_vector(y), d);
  }, py::arg("y"), py::arg("design"));
  m.def("ms_within", [](const Array& y, const sv::DesignSchedule& d) {
    return sv::ms_within(to_vector(y), d);
  }, py::arg("y"), py::arg("design"));

  m.def("estimate",
        [](const Array& y, const sv::DesignSchedule& d, const std::string& method,
           const PermArg& p, std::uint64_t seed) {
          const auto v = to_vector(y);
          if (method == "mom") return to_dict(sv::mom_estimate(v, d));
          if (method != "shuffle") throw py::value_error("method must be 'shuffle' or 'mom'");
          return to_dict(sv::shuffle_estimate(v, d, to_permutation(p, d, seed)));
        },
        py::arg("y"), py::arg("design"), py::arg("method") = "shuffle",
        py::arg("permutation") = "reverse", py::arg("seed") = 1);

  m.def("reml",
        [](const Array& y, const sv::DesignSchedule& d, const std::string& family,
           std::size_t starts) {
          const auto choice = sv::parse_estimators("reml:" + family).front();
          sv::RemlOptions options;
          options.starts = starts;
          const auto r = sv::reml_estimate(to_vector(y), d, choice.reml, options);
          auto out = to_dict(r.estimate);
          out["sigma2_eps"] = r.fit.sigma2_eps;
          out["theta"] = r.fit.theta;
          out["log_likelihood"] = r.fit.log_restricted_likelihood;
          out["converged"] = r.fit.converged;
          return out;
        },
        py::arg("y"), py::arg("design"), py::arg("family") = "exp_nugget", py::arg("starts") = 5);

  m.def("cov_exp_nugget", &sv::cov_exp_nugget, py::arg("T"), py::arg("lambda1"), py::arg("lambda2"));

  m.def("noise_level",
        [](const Eigen::MatrixXd& sigma, const sv::DesignSchedule& d, double sigma2_eps) {
          return sv::noise_level(sigma, d, sigma2_eps);
        },
        py::arg("sigma"), py::arg("design"), py::arg("sigma2_eps") = 1.0);

  m.def("run_sweep",
        [](const std::string& preset, std::optional<std::size_t> replicates,
           std::optional<std::vector<double>> grid, std::uint64_t seed, unsigned threads) {
          auto cfg = sv::sweep_preset(preset);
          if (replicates) cfg.replicates = *replicates;
          if (grid) cfg.grid = *grid;
          cfg.seed = seed;
          cfg.threads = threads;
          sv::SweepResult r;
          {
            py::gil_scoped_release unlocked;
            r = sv::run_sweep(cfg);
          }
          py::list rows;
          for (const auto& row : r.rows) {
            py::dict d;
            d["sigma2_A_true"] = row.sigma2_A_true;
            d["estimator"] = row.estimator;
            d["mean_sigma2_A"] = row.mean_sigma2_A;
            d["bias"] = row.bias;
            d["sd"] = row.sd;
            d["q25"] = row.q25;
            d["q75"] = row.q75;
            d["mean_omega2"] = row.mean_omega2;
            d["omega2_true"] = row.omega2_true;
            d["n_fail"] = row.n_fail;
            d["n_reps"] = row.n_reps;
            d["alpha_realized"] = row.alpha_realized;
            rows.append(d);
          }
          return rows;
        },
        py::arg("preset"), py::arg("replicates") = py::none(), py::arg("grid") = py::none(),
        py::arg("seed") = 1, py::arg("threads") = 0);
}
