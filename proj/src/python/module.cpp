#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <optional>

#include "percnn/commands.hpp"
#include "percnn/dataset_io.hpp"

namespace py = pybind11;
using namespace percnn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (C, *grid) array -> Field.
Field to_field(const Array& a, std::vector<double> spacing) {
  if (a.ndim() < 2 || a.ndim() > 4) throw ShapeError("expected an array of shape (C, *grid)");
  Extents ext;
  for (py::ssize_t d = 1; d < a.ndim(); ++d) ext.push_back(static_cast<std::size_t>(a.shape(d)));
  std::vector<double> v(a.data(), a.data() + a.size());
  return Field(static_cast<std::size_t>(a.shape(0)), ext, std::move(spacing), std::move(v));
}

Array from_field(const Field& f) {
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(f.channels())};
  for (auto e : f.extents()) shape.push_back(static_cast<py::ssize_t>(e));
  Array out(shape);
  std::copy(f.values().begin(), f.values().end(), out.mutable_data());
  return out;
}

// (T, C, *grid) array <-> Trajectory.
Trajectory to_traj(const Array& a, double dt, double t0, const std::vector<double>& spacing) {
  if (a.ndim() < 3) throw ShapeError("expected an array of shape (T, C, *grid)");
  Trajectory t;
  t.dt = dt;
  t.t0 = t0;
  const py::ssize_t per = a.size() / std::max<py::ssize_t>(1, a.shape(0));
  Extents ext;
  for (py::ssize_t d = 2; d < a.ndim(); ++d) ext.push_back(static_cast<std::size_t>(a.shape(d)));
  for (py::ssize_t k = 0; k < a.shape(0); ++k)
    t.fields.emplace_back(static_cast<std::size_t>(a.shape(1)), ext, spacing,
                          std::vector<double>(a.data() + k * per, a.data() + (k + 1) * per));
  return t;
}

Array from_traj(const Trajectory& t) {
  if (t.size() == 0) throw ShapeError("empty trajectory");
  std::vector<py::ssize_t> shape{static_cast<py::ssize_t>(t.size()),
                                 static_cast<py::ssize_t>(t[0].channels())};
  for (auto e : t[0].extents()) shape.push_back(static_cast<py::ssize_t>(e));
  Array out(shape);
  double* p = out.mutable_data();
  for (const Field& f : t.fields) p = std::copy(f.values().begin(), f.values().end(), p);
  return out;
}

py::dict curve_dict(const ErrorCurve& c) {
  std::vector<std::string> phase;
  for (Phase p : c.phase) phase.emplace_back(to_string(p));
  py::dict d;
  d["t"] = c.times;
  d["rmse"] = c.rmse;
  d["phase"] = phase;
  return d;
}

std::vector<std::map<std::string, double>> expr_dicts(const std::vector<PolyExpr>& exprs) {
  std::vector<std::map<std::string, double>> out;
  for (const auto& e : exprs) {
    std::map<std::string, double> m;
    for (const auto& [mono, coef] : e.terms) m[monomial_name(mono, exprs.size())] = coef;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(percnn, m) {
  m.doc() = "Physics-encoded recurrent CNN: PDE data, training, evaluation, equation extraction";

  // Later registrations are tried first, so the base class goes first.
  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("preset", &RunConfig::preset, py::arg("name"))
      .def("set", &RunConfig::set, py::arg("key"), py::arg("value"))
      .def("get", &RunConfig::text, py::arg("key"))
      .def("load_file", [](RunConfig& c, const std::string& p) { c.load_file(p); })
      .def("echo", &RunConfig::echo)
      .def("validate", &RunConfig::validate)
      .def("__repr__", [](const RunConfig& c) { return "<RunConfig preset=" + c.text("preset") + ">"; });
  m.def("presets", &preset_names);

  m.def("generate", [](const RunConfig& c, const fs::path& out) { cmd_generate(c, out, nullptr); },
        py::arg("config"), py::arg("out"), "Write reference and measurement data into `out`.");
  m.def(
      "train",
      [](const RunConfig& c, const fs::path& data, const fs::path& out,
         const std::optional<fs::path>& resume) {
        TrainReport r;
        {
          py::gil_scoped_release release;
          r = cmd_train(c, data, out, nullptr, resume.value_or(fs::path()));
        }
        std::vector<double> train, val;
        for (const auto& e : r.epochs) {
          train.push_back(e.train_loss);
          val.push_back(e.val_loss);
        }
        py::dict d;
        d["best_epoch"] = r.best_epoch;
        d["best_val_loss"] = r.best_val_loss;
        d["train_loss"] = train;
        d["val_loss"] = val;
        d["stopped_early"] = r.stopped_early;
        d["diff_coef"] = std::vector<double>(r.params.diff_coef.values().begin(),
                                             r.params.diff_coef.values().end());
        return d;
      },
      py::arg("config"), py::arg("data"), py::arg("out"), py::arg("resume") = py::none());
  m.def(
      "predict",
      [](const RunConfig& c, const fs::path& ck, const fs::path& data, const fs::path& out) {
        return from_traj(cmd_predict(c, ck, data, out, nullptr));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("data"), py::arg("out"));
  m.def(
      "evaluate",
      [](const RunConfig& c, const fs::path& pred, const fs::path& ref, const fs::path& out) {
        return curve_dict(cmd_evaluate(c, pred, ref, out, nullptr));
      },
      py::arg("config"), py::arg("prediction"), py::arg("reference"), py::arg("out"));
  m.def(
      "interpret",
      [](const RunConfig& c, const fs::path& ck, const fs::path& out) {
        return expr_dicts(cmd_interpret(c, ck, out, nullptr));
      },
      py::arg("config"), py::arg("checkpoint"), py::arg("out"));

  m.def(
      "read_dataset",
      [](const fs::path& p) {
        const Dataset d = read_dataset(p);
        return py::make_tuple(from_traj(d.trajectory), d.trajectory.dt, d.trajectory.t0);
      },
      py::arg("path"), "Returns (array of shape (T, C, *grid), dt, t0).");
  m.def(
      "write_dataset",
      [](const fs::path& p, const Array& a, double dt, double t0, std::vector<double> spacing) {
        write_dataset(p, to_traj(a, dt, t0, spacing), DatasetKind::model);
      },
      py::arg("path"), py::arg("data"), py::arg("dt"), py::arg("t0") = 0.0,
      py::arg("spacing") = std::vector<double>{});

  m.def(
      "laplacian",
      [](const Array& a, std::vector<double> spacing) { return from_field(laplacian(to_field(a, spacing))); },
      py::arg("field"), py::arg("spacing"), "Fourth-order periodic Laplacian of a (C, *grid) array.");
  m.def(
      "first_derivative",
      [](const Array& a, std::vector<double> spacing, std::size_t axis) {
        return from_field(first_derivative(to_field(a, spacing), axis));
      },
      py::arg("field"), py::arg("spacing"), py::arg("axis"));
  m.def(
      "solve",
      [](const std::string& system, const Array& ic, std::vector<double> spacing, std::size_t steps,
         double dt) {
        PdeSystem s;
        s.kind = system_kind_from_string(system);
        if (spacing.size() != static_cast<std::size_t>(ic.ndim() - 1))
          throw ShapeError("one spacing per grid axis required");
        for (std::size_t a = 0; a < spacing.size(); ++a)
          s.domain.emplace_back(0.0, spacing[a] * static_cast<double>(ic.shape(a + 1)));
        Trajectory t;
        {
          const Field f = to_field(ic, spacing);
          py::gil_scoped_release release;
          t = generate_trajectory(s, f, steps, dt);
        }
        return from_traj(t);
      },
      py::arg("system"), py::arg("ic"), py::arg("spacing"), py::arg("steps"), py::arg("dt"),
      "RK4 reference solution with the default PDE parameters; returns (steps+1, C, *grid).");
  m.def(
      "accumulative_rmse",
      [](const Array& pred, const Array& ref, std::size_t k) {
        return accumulative_rmse(to_traj(pred, 1.0, 0.0, {}), to_traj(ref, 1.0, 0.0, {}), k);
      },
      py::arg("prediction"), py::arg("reference"), py::arg("k"));
}
