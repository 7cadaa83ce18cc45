#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "encqr/experiment.hpp"

namespace py = pybind11;
using namespace encqr;

namespace {

template <class T>
py::array_t<T> to_array(std::span<const T> values) {
  py::array_t<T> out(static_cast<py::ssize_t>(values.size()));
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

template <class T>
py::array_t<T> to_array(const std::vector<T>& values) {
  return to_array(std::span<const T>(values));
}

py::array_t<double> to_matrix(std::span<const double> values, std::size_t rows, std::size_t cols) {
  py::array_t<double> out({static_cast<py::ssize_t>(rows), static_cast<py::ssize_t>(cols)});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

QuantileConvention parse_convention(const std::string& name) {
  if (name == "conformal") return QuantileConvention::conformal;
  if (name == "plain") return QuantileConvention::plain;
  fail(ErrorCode::InvalidArgument, "unknown quantile convention '" + name + "'");
}

py::object parse_json(const std::string& text) { return py::module_::import("json").attr("loads")(text); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Ensemble conformalized quantile regression for time series";
  py::register_exception<Error>(m, "EncqrError", PyExc_ValueError);

  m.def(
      "empirical_quantile",
      [](const std::vector<double>& values, double level, const std::string& convention) {
        return empirical_quantile(values, level, parse_convention(convention));
      },
      py::arg("values"), py::arg("level"), py::arg("convention") = "conformal");
  m.def("pinball_loss", &pinball_loss, py::arg("y"), py::arg("q_hat"), py::arg("alpha"));
  m.def(
      "asymmetric_scores",
      [](double q_lo, double q_hi, double y) {
        const auto s = asymmetric_scores(q_lo, q_hi, y);
        return py::make_tuple(s.lo, s.hi);
      },
      py::arg("q_lo"), py::arg("q_hi"), py::arg("y"));
  m.def("cqr_score", &cqr_score, py::arg("q_lo"), py::arg("q_hi"), py::arg("y"));

  m.def(
      "picp",
      [](const std::vector<double>& y, const std::vector<double>& lo, const std::vector<double>& hi) {
        return picp(y, lo, hi);
      },
      py::arg("y"), py::arg("lower"), py::arg("upper"));
  m.def(
      "pinaw",
      [](const std::vector<double>& y, const std::vector<double>& lo, const std::vector<double>& hi) {
        return pinaw(y, lo, hi);
      },
      py::arg("y"), py::arg("lower"), py::arg("upper"));
  m.def("cwc", &cwc, py::arg("picp"), py::arg("pinaw"), py::arg("alpha"), py::arg("eta") = 30.0);
  m.def(
      "heteroscedasticity_measure",
      [](const std::vector<double>& values, std::size_t period) { return heteroscedasticity_measure(values, period); },
      py::arg("values"), py::arg("period") = 24);

  m.def(
      "make_sliding_windows",
      [](const std::vector<double>& values, std::size_t n_x, std::size_t n_y, std::size_t stride) {
        const auto w = make_sliding_windows(TimeSeries::regular(0, 1, values), n_x, n_y, stride);
        std::vector<double> flat;
        for (std::size_t k = 0; k < w.size(); ++k) flat.insert(flat.end(), w.input(k).begin(), w.input(k).end());
        return py::make_tuple(to_matrix(flat, w.size(), n_x), to_matrix(w.all_targets(), w.size(), n_y),
                              to_array(w.origins()));
      },
      py::arg("values"), py::arg("n_x"), py::arg("n_y"), py::arg("stride") = 1,
      "Returns (inputs[n, n_x], targets[n, n_y], origins[n]).");

  m.def(
      "plan_subsets",
      [](std::size_t length, std::size_t members, std::size_t n_x, std::size_t n_y) {
        const auto plan = plan_subsets(length, members, n_x, n_y);
        py::list subsets;
        for (const auto& r : plan.subsets()) subsets.append(py::make_tuple(r.begin, r.end));
        py::dict out;
        out["subsets"] = subsets;
        out["subset_length"] = plan.subset_length();
        out["residual_count"] = plan.residual_count();
        out["residual_steps"] = to_array(plan.residual_steps());
        return out;
      },
      py::arg("length"), py::arg("members"), py::arg("n_x"), py::arg("n_y"));

  m.def(
      "gen_synthetic",
      [](const std::string& kind, std::size_t length, std::uint64_t seed) {
        const auto g = gen_synthetic(parse_synthetic_kind(kind), length, seed);
        py::dict out;
        out["timestamp"] = to_array(g.series.timestamps());
        out["target"] = to_array(g.series.target());
        out["true_lo"] = to_array(g.true_lo);
        out["true_mid"] = to_array(g.true_mid);
        out["true_hi"] = to_array(g.true_hi);
        return out;
      },
      py::arg("kind") = "heteroscedastic_daily", py::arg("length") = 8760, py::arg("seed") = 0);

  m.def("default_config", [] { return parse_json(ExperimentConfig{}.to_json()); });

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::vector<std::string>& overrides) {
        const auto config = ExperimentConfig::from_json(config_json, overrides);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(config);
        }
        std::vector<double> y, lower, center, upper, raw_lo, raw_hi;
        std::vector<std::int64_t> ts;
        std::vector<std::size_t> step;
        for (const auto& row : r.trace) {
          step.push_back(row.step);
          ts.push_back(row.timestamp);
          y.push_back(row.y);
          lower.push_back(row.lower);
          center.push_back(row.center);
          upper.push_back(row.upper);
          raw_lo.push_back(row.raw_lo);
          raw_hi.push_back(row.raw_hi);
        }
        py::dict trace;
        trace["step"] = to_array(step);
        trace["timestamp"] = to_array(ts);
        trace["y"] = to_array(y);
        trace["lower"] = to_array(lower);
        trace["center"] = to_array(center);
        trace["upper"] = to_array(upper);
        trace["raw_lo"] = to_array(raw_lo);
        trace["raw_hi"] = to_array(raw_hi);
        py::dict out;
        out["report"] = parse_json(r.report.to_json());
        out["trace"] = trace;
        if (!r.true_lo.empty()) {
          out["true_lo"] = to_array(r.true_lo);
          out["true_hi"] = to_array(r.true_hi);
        }
        return out;
      },
      py::arg("config_json"), py::arg("overrides") = std::vector<std::string>{},
      "Runs one experiment from a JSON config; returns {'report', 'trace'[, 'true_lo', 'true_hi']}.");
}
