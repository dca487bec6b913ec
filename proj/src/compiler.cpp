#include "chpd/compiler.hpp"

#include <cmath>
#include <numeric>

#include "chpd/electric.hpp"
#include "chpd/errors.hpp"
#include "chpd/heat.hpp"
#include "json.hpp"

namespace chpd {

namespace {

std::string tagged(const std::string& symbol, const std::string& tag) { return symbol + "[" + tag + "]"; }

// Flattened copy of the first `steps` columns of z.
Eigen::Map<const Eigen::VectorXd> leading_columns(const Eigen::MatrixXd& z, int steps) {
    return {z.data(), z.rows() * steps};
}

}  // namespace

// ---------------------------------------------------------------- manifest

int VariableManifest::index_of(const std::string& kind, const std::string& name) const {
    const std::vector<std::string>* list = nullptr;
    if (kind == "x") list = &x;
    else if (kind == "u") list = &u;
    else if (kind == "y") list = &y;
    else if (kind == "w") list = &w;
    if (!list) return -1;
    for (std::size_t i = 0; i < list->size(); ++i)
        if ((*list)[i] == name) return static_cast<int>(i);
    return -1;
}

std::string VariableManifest::to_json() const {
    nlohmann::json doc;
    doc["x"] = x;
    doc["u"] = u;
    doc["y"] = y;
    doc["w"] = w;
    doc["groups"] = {{"u_chp_p", u_chp_p},     {"u_chp_q", u_chp_q},   {"u_hp_p", u_hp_p},
                     {"u_grid_p", u_grid_p},   {"y_bu", y_bu},         {"y_ts", y_ts},
                     {"y_branch", y_branch},   {"y_voltage", y_voltage}, {"y_supply", y_supply},
                     {"y_return", y_return},   {"y_grid_q", y_grid_q}, {"w_pv", w_pv},
                     {"w_p_load", w_p_load},   {"w_q_load", w_q_load}, {"w_heat_load", w_heat_load}};
    return doc.dump(1);
}

// ---------------------------------------------------------------- lifted map

Eigen::MatrixXd LiftedOutputMap::evaluate_linear(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const {
    const auto T = static_cast<int>(u.cols());
    Eigen::MatrixXd y = C * u + E * w;
    if (has_memory()) {
        Eigen::MatrixXd z = input_u * u + input_w * w;
        for (int t = 0; t < T; ++t) {
            Eigen::VectorXd m = kernel[static_cast<std::size_t>(t)] * leading_columns(z, t + 1);
            for (std::size_t i = 0; i < memory_rows.size(); ++i) y(memory_rows[i], t) += m(static_cast<Eigen::Index>(i));
        }
    }
    return y;
}

Eigen::MatrixXd LiftedOutputMap::evaluate(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const {
    Eigen::MatrixXd y = evaluate_linear(u, w);
    y += offset.leftCols(u.cols());
    return y;
}

Dimensions StateSpaceModel::dims() const {
    return {static_cast<int>(A.rows()), static_cast<int>(B.cols()), static_cast<int>(outputs.C.rows()),
            static_cast<int>(D.cols())};
}

Eigen::MatrixXd StateSpaceModel::propagate(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const {
    const auto T = u.cols();
    Eigen::MatrixXd x(A.rows(), T + 1);
    x.col(0) = x0;
    for (Eigen::Index t = 0; t < T; ++t) x.col(t + 1) = A * x.col(t) + B * u.col(t) + D * w.col(t);
    return x;
}

// ---------------------------------------------------------------- polyhedra

void PolyhedronH::add(const Eigen::VectorXd& s, double rhs, std::string label) {
    const auto n = r.size();
    if (S.cols() != s.size() && n > 0) throw Error("row dimension mismatch for " + label);
    if (s.isZero(0.0)) throw Error("zero constraint row " + label);
    if (!std::isfinite(rhs)) throw Error("non-finite right-hand side for " + label);
    Eigen::MatrixXd grown(n + 1, s.size());
    if (n > 0) grown.topRows(n) = S;
    grown.row(n) = s.transpose();
    S = std::move(grown);
    r.conservativeResize(n + 1);
    r(n) = rhs;
    labels.push_back(std::move(label));
}

bool PolyhedronH::contains(const Eigen::VectorXd& z, double tol) const {
    if (rows() == 0) return true;
    return ((S * z - r).array() <= tol).all();
}

int PolyhedronH::opposite_of(int i) const {
    for (int j = 0; j < rows(); ++j)
        if (j != i && (S.row(j) + S.row(i)).isZero(0.0)) return j;
    return -1;
}

PolyhedronH PolyhedronH::empty(int dim) {
    PolyhedronH p;
    p.S.resize(0, dim);
    p.r.resize(0);
    return p;
}

// ---------------------------------------------------------------- tube

UncertaintyTube make_tube(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& center, const Eigen::MatrixXd& upper,
                          std::optional<double> budget, OffsetConvention convention) {
    if (lower.rows() != center.rows() || upper.rows() != center.rows() || lower.cols() != center.cols() ||
        upper.cols() != center.cols())
        throw Error("tube bounds must share one shape");
    if (budget && !(*budget >= 0.0)) throw Error("budget must be non-negative");
    UncertaintyTube tube;
    tube.lower = lower;
    tube.center = center;
    tube.upper = upper;
    tube.budget = budget;
    tube.convention = convention;
    tube.half_width.resize(center.rows(), center.cols());
    tube.offset.resize(center.rows(), center.cols());
    for (Eigen::Index j = 0; j < center.rows(); ++j)
        for (Eigen::Index t = 0; t < center.cols(); ++t) {
            const double lo = lower(j, t), hi = upper(j, t), c = center(j, t);
            if (hi < lo)
                throw InfeasibleError("negative interval width for channel " + std::to_string(j) + " at t=" +
                                      std::to_string(t));
            if (c < lo || c > hi)
                throw InfeasibleError("center outside its interval for channel " + std::to_string(j) + " at t=" +
                                      std::to_string(t));
            const double width = hi - lo;
            tube.half_width(j, t) = width / 2.0;
            if (width == 0.0)
                tube.offset(j, t) = 0.0;
            else if (convention == OffsetConvention::deviation)
                tube.offset(j, t) = (hi + lo - 2.0 * c) / width;
            else
                tube.offset(j, t) = (hi - lo - 2.0 * c) / width;
        }
    return tube;
}

UncertaintyTube compile_uncertainty_tube(const SystemModel& model, std::optional<double> budget,
                                         OffsetConvention convention) {
    const auto& f = model.forecast;
    const int T = model.horizon;
    std::vector<const IntervalSeries*> channels;
    for (const auto& s : f.pv) channels.push_back(&s);
    for (const auto& s : f.p_load) channels.push_back(&s);
    for (const auto& s : f.q_load) channels.push_back(&s);
    for (const auto& s : f.heat_load) channels.push_back(&s);
    const auto nw = static_cast<Eigen::Index>(channels.size());
    Eigen::MatrixXd lo(nw, T), c(nw, T), hi(nw, T);
    for (Eigen::Index j = 0; j < nw; ++j)
        for (int t = 0; t < T; ++t) {
            const auto tz = static_cast<std::size_t>(t);
            lo(j, t) = channels[static_cast<std::size_t>(j)]->lower[tz];
            c(j, t) = channels[static_cast<std::size_t>(j)]->center[tz];
            hi(j, t) = channels[static_cast<std::size_t>(j)]->upper[tz];
        }
    return make_tube(lo, c, hi, budget, convention);
}

// ---------------------------------------------------------------- compile

StateSpaceModel compile_state_space(const SystemModel& model) {
    require_valid(model);
    if (model.batteries.empty())
        throw StructuralError("no battery in the system: nothing closes the active power balance");
    const bool has_heat = !model.heat.empty() || !model.chps.empty() || !model.heat_pumps.empty();
    if (has_heat && model.tanks.empty())
        throw StructuralError("no thermal tank in the system: nothing closes the heat balance");

    const int T = model.horizon;
    const double dt_h = model.step_hours();
    const auto& net = model.electric;
    const int nb = net.bus_count();
    const int nh = model.heat.node_count();
    const auto nc = static_cast<int>(model.chps.size());
    const auto nhp = static_cast<int>(model.heat_pumps.size());
    const auto nbu = static_cast<int>(model.batteries.size());
    const auto nts = static_cast<int>(model.tanks.size());
    const auto npv = static_cast<int>(model.pv_units.size());
    const auto nl = static_cast<int>(net.branches.size());

    StateSpaceModel ssm;
    ssm.horizon = T;
    ssm.step_seconds = model.step_seconds;
    auto& man = ssm.manifest;

    for (const auto& b : model.batteries) man.x.push_back(tagged("E_BU", b.name));
    for (const auto& s : model.tanks) man.x.push_back(tagged("E_TS", s.name));
    for (const auto& c : model.chps) {
        man.u_chp_p.push_back(static_cast<int>(man.u.size()));
        man.u.push_back(tagged("P_CHP", c.name));
        man.chp_heat_ratio.push_back(c.heat_ratio);
    }
    for (const auto& c : model.chps) {
        man.u_chp_q.push_back(static_cast<int>(man.u.size()));
        man.u.push_back(tagged("Q_CHP", c.name));
    }
    man.u_grid_p = static_cast<int>(man.u.size());
    man.u.push_back("P_G");
    for (const auto& h : model.heat_pumps) {
        man.u_hp_p.push_back(static_cast<int>(man.u.size()));
        man.u.push_back(tagged("P_HP", h.name));
        man.hp_heat_ratio.push_back(h.heat_ratio);
        man.hp_reactive_ratio.push_back(std::sqrt(1.0 - h.power_factor * h.power_factor) / h.power_factor);
    }
    for (const auto& p : model.pv_units) {
        man.w_pv.push_back(static_cast<int>(man.w.size()));
        man.w.push_back(tagged("P_PV", p.name));
    }
    for (int b = 0; b < nb; ++b) {
        man.w_p_load.push_back(static_cast<int>(man.w.size()));
        man.w.push_back(tagged("P_D", std::to_string(b)));
    }
    for (int b = 0; b < nb; ++b) {
        man.w_q_load.push_back(static_cast<int>(man.w.size()));
        man.w.push_back(tagged("Q_D", std::to_string(b)));
    }
    for (int j = 0; j < nh; ++j) {
        man.w_heat_load.push_back(static_cast<int>(man.w.size()));
        man.w.push_back(tagged("H_D", std::to_string(j)));
    }
    for (const auto& b : model.batteries) {
        man.y_bu.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("P_BU", b.name));
    }
    for (const auto& s : model.tanks) {
        man.y_ts.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("H_TS", s.name));
    }
    for (const auto& br : net.branches) {
        man.y_branch.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("T_branch", std::to_string(br.from) + "-" + std::to_string(br.to)));
    }
    for (int b = 0; b < nb; ++b) {
        if (b == net.slack) continue;
        man.y_voltage.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("V", std::to_string(b)));
    }
    for (int j = 0; j < nh; ++j) {
        man.y_supply.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("T_s", std::to_string(j)));
    }
    for (int j = 0; j < nh; ++j) {
        man.y_return.push_back(static_cast<int>(man.y.size()));
        man.y.push_back(tagged("T_r", std::to_string(j)));
    }
    man.y_grid_q = static_cast<int>(man.y.size());
    man.y.push_back("Q_G");

    const int n_x = nbu + nts;
    const auto n_u = static_cast<int>(man.u.size());
    const auto n_w = static_cast<int>(man.w.size());
    const auto n_y = static_cast<int>(man.y.size());

    // Active residual absorbed by batteries, heat residual by tanks.
    Eigen::RowVectorXd pres_u = Eigen::RowVectorXd::Zero(n_u), pres_w = Eigen::RowVectorXd::Zero(n_w);
    for (int i = 0; i < nc; ++i) pres_u(man.u_chp_p[static_cast<std::size_t>(i)]) += 1.0;
    pres_u(man.u_grid_p) += 1.0;
    for (int i = 0; i < nhp; ++i) pres_u(man.u_hp_p[static_cast<std::size_t>(i)]) -= 1.0;
    for (int i : man.w_pv) pres_w(i) += 1.0;
    for (int i : man.w_p_load) pres_w(i) -= 1.0;

    Eigen::RowVectorXd hres_u = Eigen::RowVectorXd::Zero(n_u), hres_w = Eigen::RowVectorXd::Zero(n_w);
    for (int i = 0; i < nc; ++i)
        hres_u(man.u_chp_p[static_cast<std::size_t>(i)]) += model.chps[static_cast<std::size_t>(i)].heat_ratio;
    for (int i = 0; i < nhp; ++i)
        hres_u(man.u_hp_p[static_cast<std::size_t>(i)]) += model.heat_pumps[static_cast<std::size_t>(i)].heat_ratio;
    for (int i : man.w_heat_load) hres_w(i) -= 1.0;

    double bu_share = 0.0, ts_share = 0.0;
    for (const auto& b : model.batteries) bu_share += b.balance_share;
    for (const auto& s : model.tanks) ts_share += s.balance_share;

    ssm.A = Eigen::MatrixXd::Zero(n_x, n_x);
    ssm.B = Eigen::MatrixXd::Zero(n_x, n_u);
    ssm.D = Eigen::MatrixXd::Zero(n_x, n_w);
    ssm.x0.resize(n_x);
    auto& out = ssm.outputs;
    out.horizon = T;
    out.C = Eigen::MatrixXd::Zero(n_y, n_u);
    out.E = Eigen::MatrixXd::Zero(n_y, n_w);
    out.offset = Eigen::MatrixXd::Zero(n_y, T);

    for (int k = 0; k < nbu; ++k) {
        const auto& b = model.batteries[static_cast<std::size_t>(k)];
        const double frac = b.balance_share / bu_share;
        const int row = man.y_bu[static_cast<std::size_t>(k)];
        out.C.row(row) = frac * pres_u;
        out.E.row(row) = frac * pres_w;
        const double gain = dt_h * b.model_efficiency() / b.capacity;
        ssm.A(k, k) = b.self_discharge;
        ssm.B.row(k) = gain * out.C.row(row);
        ssm.D.row(k) = gain * out.E.row(row);
        ssm.x0(k) = b.e_init;
    }
    for (int k = 0; k < nts; ++k) {
        const auto& s = model.tanks[static_cast<std::size_t>(k)];
        const double frac = s.balance_share / ts_share;
        const int row = man.y_ts[static_cast<std::size_t>(k)];
        out.C.row(row) = frac * hres_u;
        out.E.row(row) = frac * hres_w;
        const double gain = dt_h * s.model_efficiency() / s.capacity;
        ssm.A(nbu + k, nbu + k) = s.self_discharge;
        ssm.B.row(nbu + k) = gain * out.C.row(row);
        ssm.D.row(nbu + k) = gain * out.E.row(row);
        ssm.x0(nbu + k) = s.e_init;
    }

    // Nodal injections as linear functions of (u, w).
    Eigen::MatrixXd pu = Eigen::MatrixXd::Zero(nb, n_u), pw = Eigen::MatrixXd::Zero(nb, n_w);
    Eigen::MatrixXd qu = Eigen::MatrixXd::Zero(nb, n_u), qw = Eigen::MatrixXd::Zero(nb, n_w);
    for (int i = 0; i < nc; ++i) {
        const int bus = model.chps[static_cast<std::size_t>(i)].bus;
        pu(bus, man.u_chp_p[static_cast<std::size_t>(i)]) += 1.0;
        qu(bus, man.u_chp_q[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int i = 0; i < nhp; ++i) {
        const int bus = model.heat_pumps[static_cast<std::size_t>(i)].bus;
        pu(bus, man.u_hp_p[static_cast<std::size_t>(i)]) -= 1.0;
        qu(bus, man.u_hp_p[static_cast<std::size_t>(i)]) -= man.hp_reactive_ratio[static_cast<std::size_t>(i)];
    }
    for (int i = 0; i < npv; ++i) pw(model.pv_units[static_cast<std::size_t>(i)].bus, man.w_pv[static_cast<std::size_t>(i)]) += 1.0;
    for (int b = 0; b < nb; ++b) {
        pw(b, man.w_p_load[static_cast<std::size_t>(b)]) -= 1.0;
        qw(b, man.w_q_load[static_cast<std::size_t>(b)]) -= 1.0;
    }
    for (int k = 0; k < nbu; ++k) {
        const int bus = model.batteries[static_cast<std::size_t>(k)].bus;
        pu.row(bus) -= out.C.row(man.y_bu[static_cast<std::size_t>(k)]);
        pw.row(bus) -= out.E.row(man.y_bu[static_cast<std::size_t>(k)]);
    }
    // The grid exchange is the slack injection and never enters the maps.
    pu.row(net.slack).setZero();
    pw.row(net.slack).setZero();
    qu.row(net.slack).setZero();
    qw.row(net.slack).setZero();

    // Linearization point: forecast centers at t = 0, every device at zero.
    Eigen::VectorXcd s0 = Eigen::VectorXcd::Zero(nb);
    for (int i = 0; i < npv; ++i) s0(model.pv_units[static_cast<std::size_t>(i)].bus) += model.forecast.pv[static_cast<std::size_t>(i)].center[0];
    for (int b = 0; b < nb; ++b)
        s0(b) -= std::complex<double>(model.forecast.p_load[static_cast<std::size_t>(b)].center[0],
                                      model.forecast.q_load[static_cast<std::size_t>(b)].center[0]);
    s0(net.slack) = 0.0;
    OperatingPoint op = nominal_operating_point(net, s0);
    BranchFlowMap flows = branch_flow_map(net, op);
    SensitivityMatrices sens = voltage_sensitivities(net, op);

    Eigen::VectorXd flow_offset = flows.flow - flows.dp * flows.p0 - flows.dq * flows.q0;
    for (int l = 0; l < nl; ++l) {
        const int row = man.y_branch[static_cast<std::size_t>(l)];
        out.C.row(row) = flows.dp.row(l) * pu + flows.dq.row(l) * qu;
        out.E.row(row) = flows.dp.row(l) * pw + flows.dq.row(l) * qw;
        out.offset.row(row).setConstant(flow_offset(l));
    }
    Eigen::VectorXd p0 = s0.real(), q0 = s0.imag();
    int vi = 0;
    for (int b = 0; b < nb; ++b) {
        if (b == net.slack) continue;
        const int row = man.y_voltage[static_cast<std::size_t>(vi++)];
        out.C.row(row) = sens.dv_dp.row(b) * pu + sens.dv_dq.row(b) * qu;
        out.E.row(row) = sens.dv_dp.row(b) * pw + sens.dv_dq.row(b) * qw;
        const double v0 = std::abs(op.voltage(b)) - sens.dv_dp.row(b).dot(p0) - sens.dv_dq.row(b).dot(q0);
        out.offset.row(row).setConstant(v0);
    }

    // Reactive balance closed by the grid.
    {
        const int row = man.y_grid_q;
        for (int i : man.w_q_load) out.E(row, i) += 1.0;
        for (int i = 0; i < nhp; ++i)
            out.C(row, man.u_hp_p[static_cast<std::size_t>(i)]) += man.hp_reactive_ratio[static_cast<std::size_t>(i)];
        for (int i : man.u_chp_q) out.C(row, i) -= 1.0;
    }

    // Heating temperatures. With the tank closing the heat balance, the net
    // source injection equals the total heat load.
    if (nh > 0) {
        DelayTable delays = compute_delays(model.heat, model.step_seconds, T);
        TemperatureMaps maps = temperature_maps(model.heat, delays, model.step_seconds, T);
        out.memory_rows = man.y_supply;
        out.memory_rows.insert(out.memory_rows.end(), man.y_return.begin(), man.y_return.end());
        const int nz = maps.inputs();
        out.input_u.resize(nz, n_u);
        std::vector<Eigen::Triplet<double>> trips;
        for (int j = 0; j < nh; ++j) {
            const int ch = man.w_heat_load[static_cast<std::size_t>(j)];
            trips.emplace_back(0, ch, 1.0);
            trips.emplace_back(1 + j, ch, 1.0);
        }
        out.input_w.resize(nz, n_w);
        out.input_w.setFromTriplets(trips.begin(), trips.end());
        for (std::size_t i = 0; i < out.memory_rows.size(); ++i)
            out.offset.row(out.memory_rows[i]) = maps.offset.row(static_cast<Eigen::Index>(i));
        out.kernel = std::move(maps.kernel);
    } else {
        out.input_u.resize(0, n_u);
        out.input_w.resize(0, n_w);
    }
    return ssm;
}

ConstraintFamily compile_constraints(const SystemModel& model, const StateSpaceModel& ssm) {
    const auto d = ssm.dims();
    const auto& man = ssm.manifest;
    ConstraintFamily f;
    f.x = PolyhedronH::empty(d.n_x);
    f.u = PolyhedronH::empty(d.n_u);
    f.y = PolyhedronH::empty(d.n_y);
    f.du = PolyhedronH::empty(d.n_u);
    f.dy = PolyhedronH::empty(d.n_y);

    auto two_sided = [](PolyhedronH& p, int dim, int index, double lo, double hi, const std::string& name) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e(index) = 1.0;
        p.add(e, hi, name + "<=max");
        p.add(-e, -lo, name + ">=min");
    };
    auto ramp = [](PolyhedronH& p, int dim, int index, double limit, const std::string& name) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
        e(index) = 1.0;
        p.add(e, limit, "d" + name + "<=ramp");
        p.add(-e, limit, "d" + name + ">=-ramp");
    };

    const auto nbu = model.batteries.size();
    for (std::size_t k = 0; k < nbu; ++k) {
        const auto& b = model.batteries[k];
        two_sided(f.x, d.n_x, static_cast<int>(k), b.e_min, b.e_max, man.x[k]);
    }
    for (std::size_t k = 0; k < model.tanks.size(); ++k) {
        const auto& s = model.tanks[k];
        two_sided(f.x, d.n_x, static_cast<int>(nbu + k), s.e_min, s.e_max, man.x[nbu + k]);
    }

    for (std::size_t i = 0; i < model.chps.size(); ++i) {
        const auto& c = model.chps[i];
        two_sided(f.u, d.n_u, man.u_chp_p[i], c.p_min, c.p_max, man.u[static_cast<std::size_t>(man.u_chp_p[i])]);
        two_sided(f.u, d.n_u, man.u_chp_q[i], c.q_min, c.q_max, man.u[static_cast<std::size_t>(man.u_chp_q[i])]);
    }
    two_sided(f.u, d.n_u, man.u_grid_p, model.grid.p_min, model.grid.p_max, "P_G");
    for (std::size_t i = 0; i < model.heat_pumps.size(); ++i) {
        const auto& h = model.heat_pumps[i];
        two_sided(f.u, d.n_u, man.u_hp_p[i], h.p_min, h.p_max, man.u[static_cast<std::size_t>(man.u_hp_p[i])]);
    }

    auto yname = [&](int i) { return man.y[static_cast<std::size_t>(i)]; };
    for (std::size_t k = 0; k < nbu; ++k) {
        const auto& b = model.batteries[k];
        two_sided(f.y, d.n_y, man.y_bu[k], b.p_min, b.p_max, yname(man.y_bu[k]));
    }
    for (std::size_t k = 0; k < model.tanks.size(); ++k) {
        const auto& s = model.tanks[k];
        two_sided(f.y, d.n_y, man.y_ts[k], s.h_min, s.h_max, yname(man.y_ts[k]));
    }
    for (std::size_t l = 0; l < model.electric.branches.size(); ++l) {
        const double lim = model.electric.branches[l].flow_limit;
        if (std::isfinite(lim)) two_sided(f.y, d.n_y, man.y_branch[l], -lim, lim, yname(man.y_branch[l]));
    }
    {
        std::size_t vi = 0;
        for (int b = 0; b < model.electric.bus_count(); ++b) {
            if (b == model.electric.slack) continue;
            const auto& bus = model.electric.buses[static_cast<std::size_t>(b)];
            two_sided(f.y, d.n_y, man.y_voltage[vi], bus.v_min, bus.v_max, yname(man.y_voltage[vi]));
            ++vi;
        }
    }
    for (std::size_t j = 0; j < model.heat.nodes.size(); ++j) {
        const auto& n = model.heat.nodes[j];
        two_sided(f.y, d.n_y, man.y_supply[j], n.supply_min, n.supply_max, yname(man.y_supply[j]));
    }
    for (std::size_t j = 0; j < model.heat.nodes.size(); ++j) {
        const auto& n = model.heat.nodes[j];
        two_sided(f.y, d.n_y, man.y_return[j], n.return_min, n.return_max, yname(man.y_return[j]));
    }
    two_sided(f.y, d.n_y, man.y_grid_q, model.grid.q_min, model.grid.q_max, "Q_G");

    for (std::size_t i = 0; i < model.chps.size(); ++i) {
        const auto& c = model.chps[i];
        ramp(f.du, d.n_u, man.u_chp_p[i], c.ramp_p, man.u[static_cast<std::size_t>(man.u_chp_p[i])]);
        ramp(f.du, d.n_u, man.u_chp_q[i], c.ramp_q, man.u[static_cast<std::size_t>(man.u_chp_q[i])]);
    }
    for (std::size_t i = 0; i < model.heat_pumps.size(); ++i)
        ramp(f.du, d.n_u, man.u_hp_p[i], model.heat_pumps[i].ramp_p, man.u[static_cast<std::size_t>(man.u_hp_p[i])]);
    for (std::size_t k = 0; k < nbu; ++k) ramp(f.dy, d.n_y, man.y_bu[k], model.batteries[k].ramp_p, yname(man.y_bu[k]));
    for (std::size_t k = 0; k < model.tanks.size(); ++k)
        ramp(f.dy, d.n_y, man.y_ts[k], model.tanks[k].ramp_h, yname(man.y_ts[k]));
    return f;
}

double balance_residual(const SystemModel& model, const StateSpaceModel& ssm, const Eigen::MatrixXd& u,
                        const Eigen::MatrixXd& w, const Eigen::MatrixXd& y) {
    const auto& man = ssm.manifest;
    const auto T = static_cast<int>(u.cols());
    double worst = 0.0;
    const auto nh = model.heat.node_count();
    Eigen::MatrixXd z(nh + 1, T);
    for (int t = 0; t < T; ++t) {
        double active = u(man.u_grid_p, t), reactive = y(man.y_grid_q, t), heat = 0.0;
        for (std::size_t i = 0; i < man.u_chp_p.size(); ++i) {
            active += u(man.u_chp_p[i], t);
            reactive += u(man.u_chp_q[i], t);
            heat += man.chp_heat_ratio[i] * u(man.u_chp_p[i], t);
        }
        for (std::size_t i = 0; i < man.u_hp_p.size(); ++i) {
            active -= u(man.u_hp_p[i], t);
            reactive -= man.hp_reactive_ratio[i] * u(man.u_hp_p[i], t);
            heat += man.hp_heat_ratio[i] * u(man.u_hp_p[i], t);
        }
        for (int i : man.w_pv) active += w(i, t);
        for (int i : man.w_p_load) active -= w(i, t);
        for (int i : man.w_q_load) reactive -= w(i, t);
        for (int i : man.y_bu) active -= y(i, t);
        double source = heat;
        for (int i : man.y_ts) source -= y(i, t);
        heat = source;
        for (int i : man.w_heat_load) heat -= w(i, t);
        worst = std::max({worst, std::abs(active), std::abs(reactive), std::abs(heat)});
        if (nh > 0) {
            z(0, t) = source;
            for (int j = 0; j < nh; ++j) z(1 + j, t) = w(man.w_heat_load[static_cast<std::size_t>(j)], t);
        }
    }
    if (nh > 0) {
        DelayTable delays = compute_delays(model.heat, model.step_seconds, model.horizon);
        Eigen::MatrixXd temps(2 * nh, T);
        for (int j = 0; j < nh; ++j) {
            temps.row(j) = y.row(man.y_supply[static_cast<std::size_t>(j)]);
            temps.row(nh + j) = y.row(man.y_return[static_cast<std::size_t>(j)]);
        }
        worst = std::max(worst, heat_balance_residual(model.heat, delays, model.step_seconds, z, temps));
    }
    return worst;
}

}  // namespace chpd
