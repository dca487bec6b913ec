#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "chpd/dispatch.hpp"
#include "chpd/errors.hpp"
#include "chpd/validation.hpp"

namespace py = pybind11;
using namespace chpd;

namespace {

TightenMode parse_mode(const std::string& mode, std::optional<double> gamma) {
    if (mode == "do" || mode == "none") return TightenMode::none();
    if (mode == "box") return TightenMode::box();
    if (mode == "budget") {
        if (!gamma) throw Error("mode 'budget' needs gamma");
        return TightenMode::with_budget(*gamma);
    }
    throw Error("unknown mode '" + mode + "'");
}

// Everything the pipeline derives from one system model.
struct Problem {
    SystemModel model;
    StateSpaceModel ssm;
    ConstraintFamily constraints;
    UncertaintyTube tube;
    FeedbackGain gain;
    CostModel costs;

    explicit Problem(SystemModel m)
        : model(std::move(m)),
          ssm(compile_state_space(model)),
          constraints(compile_constraints(model, ssm)),
          tube(compile_uncertainty_tube(model)),
          gain(choose_gain(ssm, model.feedback.gain.empty() ? GainMethod::zero : GainMethod::configured,
                           model.feedback)),
          costs(CostModel::from_system(model)) {}

    TightenedSchedule schedule(const std::string& mode, std::optional<double> gamma) const {
        return tighten(ssm, constraints, tube, gain, parse_mode(mode, gamma));
    }
};

}  // namespace

PYBIND11_MODULE(_chpd, m) {
    m.doc() = "Robust dispatch of CHP systems under interval uncertainty";

    auto base = py::register_exception<Error>(m, "ChpdError");
    py::register_exception<InfeasibleError>(m, "InfeasibleError", base.ptr());

    m.def("gamma", &chpd::gamma, py::arg("v"), py::arg("budget"),
          "Worst case of v.w over the unit box intersected with the budget ball");

    py::class_<Problem>(m, "Problem")
        .def_static("reference", [](int horizon, double step) {
            return Problem(build_reference_system(ReferenceOptions{horizon, step}));
        }, py::arg("horizon") = 24, py::arg("step_seconds") = 3600.0)
        .def_static("load", [](const std::filesystem::path& p) { return Problem(load_system(p)); })
        .def("to_json", [](const Problem& p) { return to_document(p.model); })
        .def_property_readonly("A", [](const Problem& p) { return p.ssm.A; })
        .def_property_readonly("B", [](const Problem& p) { return p.ssm.B; })
        .def_property_readonly("D", [](const Problem& p) { return p.ssm.D; })
        .def_property_readonly("x0", [](const Problem& p) { return p.ssm.x0; })
        .def_property_readonly("horizon", [](const Problem& p) { return p.ssm.horizon; })
        .def_property_readonly("dims", [](const Problem& p) {
            auto d = p.ssm.dims();
            return py::dict(py::arg("n_x") = d.n_x, py::arg("n_u") = d.n_u, py::arg("n_y") = d.n_y,
                            py::arg("n_w") = d.n_w);
        })
        .def_property_readonly("names", [](const Problem& p) {
            const auto& v = p.ssm.manifest;
            return py::dict(py::arg("x") = v.x, py::arg("u") = v.u, py::arg("y") = v.y, py::arg("w") = v.w);
        })
        .def_property_readonly("constraint_counts", [](const Problem& p) {
            const auto& c = p.constraints;
            return py::dict(py::arg("X") = c.x.rows(), py::arg("U") = c.u.rows(), py::arg("Y") = c.y.rows(),
                            py::arg("DU") = c.du.rows(), py::arg("DY") = c.dy.rows());
        })
        .def("tighten_csv", [](const Problem& p, const std::string& mode, std::optional<double> gamma) {
            return p.schedule(mode, gamma).to_csv();
        }, py::arg("mode") = "box", py::arg("gamma") = py::none())
        .def("dispatch", [](const Problem& p, const std::string& mode, std::optional<double> gamma) {
            DispatchSolution s = solve_dispatch(p.ssm, p.schedule(mode, gamma), p.costs, p.tube.center);
            py::dict d;
            d["status"] = to_string(s.status);
            d["objective"] = s.objective;
            d["x"] = s.x;
            d["u"] = s.u;
            d["y"] = s.y;
            d["variables"] = s.lp_variables;
            d["constraints"] = s.lp_inequalities + s.lp_equalities;
            d["kkt_ok"] = s.kkt.passes();
            return d;
        }, py::arg("mode") = "box", py::arg("gamma") = py::none())
        .def("validate", [](const Problem& p, const std::string& mode, std::optional<double> gamma, int samples,
                            std::uint64_t seed, const std::string& sampling) {
            DispatchSolution s = solve_dispatch(p.ssm, p.schedule(mode, gamma), p.costs, p.tube.center);
            ScenarioBatch batch = sample_disturbances(p.tube, samples, seed, parse_sampling_mode(sampling),
                                                      gamma.value_or(0.0));
            Metrics mt = evaluate(Policy{std::move(s), p.gain}, p.ssm, p.constraints, p.costs, batch);
            return mt.to_json();
        }, py::arg("mode") = "box", py::arg("gamma") = py::none(), py::arg("samples") = 1000,
           py::arg("seed") = 1, py::arg("sampling") = "uniform")
        .def("compare", [](const Problem& p, const std::vector<std::string>& methods, int samples,
                           std::uint64_t seed) {
            BatchSpec spec;
            spec.count = samples;
            spec.seed = seed;
            return compare_methods(p.model, methods, spec).to_json();
        }, py::arg("methods"), py::arg("samples") = 1000, py::arg("seed") = 1);
}
