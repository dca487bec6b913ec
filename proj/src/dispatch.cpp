#include "chpd/dispatch.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "chpd/errors.hpp"
#include "json.hpp"

namespace chpd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

// u-coefficients of s^T y(t) over steps [first, t], plus the constant part.
struct OutputRow {
    int first = 0;
    Eigen::MatrixXd coef;  // n_u x (t - first + 1)
    double constant = 0.0;
};

OutputRow output_row(const StateSpaceModel& ssm, const Eigen::VectorXd& s, int t, const Eigen::MatrixXd& y_free) {
    const auto& out = ssm.outputs;
    OutputRow row;
    row.constant = s.dot(y_free.col(t));
    bool memory = false;
    for (int r : out.memory_rows) memory = memory || s(r) != 0.0;
    memory = memory && out.input_u.nonZeros() > 0;
    row.first = memory ? 0 : t;
    row.coef = Eigen::MatrixXd::Zero(out.C.cols(), t - row.first + 1);
    row.coef.col(t - row.first) = out.C.transpose() * s;
    if (memory) {
        Eigen::VectorXd sm(static_cast<Eigen::Index>(out.memory_rows.size()));
        for (std::size_t i = 0; i < out.memory_rows.size(); ++i) sm(static_cast<Eigen::Index>(i)) = s(out.memory_rows[i]);
        const Eigen::RowVectorXd weights = sm.transpose() * out.kernel[static_cast<std::size_t>(t)];
        Eigen::Map<const Eigen::MatrixXd> blocks(weights.data(), out.memory_inputs(), t + 1);
        row.coef += out.input_u.transpose() * blocks;
    }
    return row;
}

class RowBuilder {
public:
    explicit RowBuilder(std::vector<Eigen::Triplet<double>>& trips) : trips_(trips) {}
    void add(int col, double v) {
        if (v != 0.0) entries_.emplace_back(col, v);
    }
    bool empty() const { return entries_.empty(); }
    void commit(int row) {
        for (auto [c, v] : entries_) trips_.emplace_back(row, c, v);
        entries_.clear();
    }
    void clear() { entries_.clear(); }

private:
    std::vector<Eigen::Triplet<double>>& trips_;
    std::vector<std::pair<int, double>> entries_;
};

}  // namespace

CostModel CostModel::from_system(const SystemModel& model) {
    CostModel c;
    for (const auto& u : model.chps) c.chp.push_back(u.cost);
    for (const auto& u : model.heat_pumps) c.heat_pump.push_back(u.cost);
    for (const auto& u : model.batteries) c.battery.push_back(u.cost);
    for (const auto& u : model.tanks) c.tank.push_back(u.cost);
    c.grid_price = model.grid.price;
    return c;
}

void CostModel::validate(const StateSpaceModel& ssm) const {
    const auto& m = ssm.manifest;
    if (chp.size() != m.u_chp_p.size() || heat_pump.size() != m.u_hp_p.size() || battery.size() != m.y_bu.size() ||
        tank.size() != m.y_ts.size())
        throw ConfigError("costs", "cost vectors do not match the device counts");
    for (const auto* v : {&chp, &heat_pump, &battery, &tank})
        for (double c : *v)
            if (!(c >= 0.0)) throw ConfigError("costs", "maintenance coefficients must be non-negative");
    if (grid_price.size() != static_cast<std::size_t>(ssm.horizon))
        throw ConfigError("grid.price", "series length " + std::to_string(grid_price.size()) +
                                            " does not match horizon " + std::to_string(ssm.horizon));
    for (double p : grid_price)
        if (!std::isfinite(p)) throw ConfigError("grid.price", "prices must be finite");
}

double trajectory_cost(const CostModel& costs, const VariableManifest& m, const Eigen::MatrixXd& u,
                       const Eigen::MatrixXd& y) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < u.cols(); ++t) {
        for (std::size_t k = 0; k < m.u_chp_p.size(); ++k) total += costs.chp[k] * u(m.u_chp_p[k], t);
        for (std::size_t k = 0; k < m.u_hp_p.size(); ++k) total += costs.heat_pump[k] * u(m.u_hp_p[k], t);
        total += costs.grid_price[static_cast<std::size_t>(t)] * u(m.u_grid_p, t);
        for (std::size_t k = 0; k < m.y_bu.size(); ++k) total += costs.battery[k] * std::abs(y(m.y_bu[k], t));
        for (std::size_t k = 0; k < m.y_ts.size(); ++k) total += costs.tank[k] * std::abs(y(m.y_ts[k], t));
    }
    return total;
}

NominalProblem build_nominal_problem(const StateSpaceModel& ssm, const TightenedSchedule& schedule,
                                     const CostModel& costs, const Eigen::MatrixXd& w_center) {
    const auto d = ssm.dims();
    const int T = ssm.horizon;
    const auto& man = ssm.manifest;
    if (w_center.rows() != d.n_w || w_center.cols() != T) throw Error("forecast centers must be n_w x T");
    costs.validate(ssm);

    NominalProblem np;
    np.horizon = T;
    np.n_x = d.n_x;
    np.n_u = d.n_u;
    np.n_bu = static_cast<int>(man.y_bu.size());
    np.n_ts = static_cast<int>(man.y_ts.size());
    const int n = T * (d.n_u + d.n_x + np.n_bu + np.n_ts);
    LinearProgram& lp = np.lp;
    lp.c = Eigen::VectorXd::Zero(n);
    lp.lower = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    lp.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    lp.variable_names.resize(static_cast<std::size_t>(n));
    for (int t = 0; t < T; ++t) {
        const std::string at = "(" + std::to_string(t) + ")";
        for (int k = 0; k < d.n_u; ++k) lp.variable_names[static_cast<std::size_t>(np.u_index(t, k))] = man.u[static_cast<std::size_t>(k)] + at;
        for (int k = 0; k < d.n_x; ++k)
            lp.variable_names[static_cast<std::size_t>(np.x_index(t + 1, k))] = man.x[static_cast<std::size_t>(k)] + "(" + std::to_string(t + 1) + ")";
        for (int k = 0; k < np.n_bu; ++k) {
            const int j = np.bu_index(t, k);
            lp.variable_names[static_cast<std::size_t>(j)] = "abs_" + man.y[static_cast<std::size_t>(man.y_bu[static_cast<std::size_t>(k)])] + at;
            lp.lower(j) = 0.0;
            lp.c(j) = costs.battery[static_cast<std::size_t>(k)];
        }
        for (int k = 0; k < np.n_ts; ++k) {
            const int j = np.ts_index(t, k);
            lp.variable_names[static_cast<std::size_t>(j)] = "abs_" + man.y[static_cast<std::size_t>(man.y_ts[static_cast<std::size_t>(k)])] + at;
            lp.lower(j) = 0.0;
            lp.c(j) = costs.tank[static_cast<std::size_t>(k)];
        }
        for (std::size_t k = 0; k < man.u_chp_p.size(); ++k) lp.c(np.u_index(t, man.u_chp_p[k])) += costs.chp[k];
        for (std::size_t k = 0; k < man.u_hp_p.size(); ++k) lp.c(np.u_index(t, man.u_hp_p[k])) += costs.heat_pump[k];
        lp.c(np.u_index(t, man.u_grid_p)) += costs.grid_price[static_cast<std::size_t>(t)];
    }

    // Dynamics.
    {
        std::vector<Eigen::Triplet<double>> eq;
        lp.b.resize(T * d.n_x);
        Eigen::VectorXd ax0 = ssm.A * ssm.x0;
        for (int t = 0; t < T; ++t) {
            Eigen::VectorXd rhs = ssm.D * w_center.col(t);
            if (t == 0) rhs += ax0;
            for (int i = 0; i < d.n_x; ++i) {
                const int row = t * d.n_x + i;
                eq.emplace_back(row, np.x_index(t + 1, i), 1.0);
                if (t >= 1)
                    for (int k = 0; k < d.n_x; ++k)
                        if (ssm.A(i, k) != 0.0) eq.emplace_back(row, np.x_index(t, k), -ssm.A(i, k));
                for (int k = 0; k < d.n_u; ++k)
                    if (ssm.B(i, k) != 0.0) eq.emplace_back(row, np.u_index(t, k), -ssm.B(i, k));
                lp.b(row) = rhs(i);
                lp.equality_names.push_back("dyn_" + man.x[static_cast<std::size_t>(i)] + "(" + std::to_string(t + 1) + ")");
            }
        }
        lp.A.resize(T * d.n_x, n);
        lp.A.setFromTriplets(eq.begin(), eq.end());
    }

    // Inequalities.
    const Eigen::MatrixXd y_free = ssm.outputs.evaluate(Eigen::MatrixXd::Zero(d.n_u, T), w_center);
    std::vector<Eigen::Triplet<double>> trips;
    std::vector<double> rhs;
    RowBuilder rb(trips);
    auto finish_row = [&](double bound, const std::string& name) {
        if (rb.empty()) {
            ++np.dropped_rows;
            if (bound < -1e-9)
                throw InfeasibleError("row " + name + " cannot hold: its fixed part exceeds the bound by " + fmt(-bound));
            return;
        }
        rb.commit(static_cast<int>(rhs.size()));
        rhs.push_back(bound);
        lp.inequality_names.push_back(name);
    };

    for (const FamilySchedule* fam : schedule.families()) {
        const PolyhedronH& p = fam->rows;
        for (int t = fam->first_step; t <= fam->last_step; ++t) {
            for (int i = 0; i < p.rows(); ++i) {
                const Eigen::VectorXd s = p.S.row(i).transpose();
                double bound = fam->tightened_rhs(i, t);
                const std::string name = p.labels[static_cast<std::size_t>(i)] + "(" + std::to_string(t) + ")";
                if (fam->family == "X") {
                    for (int k = 0; k < d.n_x; ++k) rb.add(np.x_index(t, k), s(k));
                } else if (fam->family == "U") {
                    for (int k = 0; k < d.n_u; ++k) rb.add(np.u_index(t, k), s(k));
                } else if (fam->family == "DU") {
                    for (int k = 0; k < d.n_u; ++k) {
                        rb.add(np.u_index(t, k), s(k));
                        rb.add(np.u_index(t - 1, k), -s(k));
                    }
                } else {
                    // Y and DY: accumulate coefficients per variable before adding.
                    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(d.n_u, t + 1);
                    auto accumulate = [&](int step, double sign) {
                        OutputRow r = output_row(ssm, s, step, y_free);
                        coef.middleCols(r.first, r.coef.cols()) += sign * r.coef;
                        bound -= sign * r.constant;
                    };
                    accumulate(t, 1.0);
                    if (fam->family == "DY") accumulate(t - 1, -1.0);
                    for (int step = 0; step <= t; ++step)
                        for (int k = 0; k < d.n_u; ++k) rb.add(np.u_index(step, k), coef(k, step));
                }
                finish_row(bound, name);
            }
        }
    }

    // Storage throughput epigraphs: a >= y and a >= -y.
    for (int t = 0; t < T; ++t) {
        auto epigraph = [&](int yrow, int aux, const std::string& label) {
            Eigen::VectorXd s = Eigen::VectorXd::Unit(d.n_y, yrow);
            OutputRow r = output_row(ssm, s, t, y_free);
            for (double sign : {1.0, -1.0}) {
                for (int step = r.first; step <= t; ++step)
                    for (int k = 0; k < d.n_u; ++k) rb.add(np.u_index(step, k), sign * r.coef(k, step - r.first));
                rb.add(aux, -1.0);
                finish_row(-sign * r.constant, label + (sign > 0 ? "_pos(" : "_neg(") + std::to_string(t) + ")");
            }
        };
        for (int k = 0; k < np.n_bu; ++k)
            epigraph(man.y_bu[static_cast<std::size_t>(k)], np.bu_index(t, k), "abs_" + man.y[static_cast<std::size_t>(man.y_bu[static_cast<std::size_t>(k)])]);
        for (int k = 0; k < np.n_ts; ++k)
            epigraph(man.y_ts[static_cast<std::size_t>(k)], np.ts_index(t, k), "abs_" + man.y[static_cast<std::size_t>(man.y_ts[static_cast<std::size_t>(k)])]);
    }

    lp.G.resize(static_cast<Eigen::Index>(rhs.size()), n);
    lp.G.setFromTriplets(trips.begin(), trips.end());
    lp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    return np;
}

DispatchSolution solve_dispatch(const StateSpaceModel& ssm, const TightenedSchedule& schedule, const CostModel& costs,
                                const Eigen::MatrixXd& w_center) {
    const auto start = Clock::now();
    NominalProblem np = build_nominal_problem(ssm, schedule, costs, w_center);
    DispatchSolution sol;
    sol.build_seconds = seconds_since(start);
    sol.lp_variables = np.variables();
    sol.lp_inequalities = np.lp.inequalities();
    sol.lp_equalities = np.lp.equalities();
    sol.schedule = schedule;

    const auto solve_start = Clock::now();
    LpSolution lps = solve_lp(np.lp);
    sol.solve_seconds = seconds_since(solve_start);
    sol.status = lps.status;
    sol.iterations = lps.iterations;
    sol.presolve_removed_rows = lps.presolve_removed_rows;
    if (lps.status == LpStatus::infeasible) {
        std::string rows;
        for (std::size_t k = 0; k < lps.blocking_rows.size() && k < 12; ++k) rows += (k ? ", " : "") + lps.blocking_rows[k];
        if (lps.blocking_rows.size() > 12) rows += ", ...";
        throw InfeasibleError("dispatch problem is infeasible; blocking rows: " + (rows.empty() ? std::string("unknown") : rows));
    }
    if (!lps.optimal()) throw Error("dispatch LP ended with status " + to_string(lps.status) + ": " + lps.message);
    sol.kkt = check_kkt(np.lp, lps);

    const auto d = ssm.dims();
    const int T = ssm.horizon;
    sol.u.resize(d.n_u, T);
    for (int t = 0; t < T; ++t)
        for (int k = 0; k < d.n_u; ++k) sol.u(k, t) = lps.x(np.u_index(t, k));
    sol.x = ssm.propagate(sol.u, w_center);
    sol.y = ssm.outputs.evaluate(sol.u, w_center);
    for (int t = 1; t <= T; ++t)
        for (int k = 0; k < d.n_x; ++k)
            sol.dynamics_residual = std::max(sol.dynamics_residual, std::abs(sol.x(k, t) - lps.x(np.x_index(t, k))));
    sol.objective = lps.objective;

    // Audit the nominal trajectory against the tightened rows.
    for (const FamilySchedule* fam : schedule.families())
        for (int t = fam->first_step; t <= fam->last_step; ++t)
            for (int i = 0; i < fam->rows.rows(); ++i) {
                const Eigen::VectorXd s = fam->rows.S.row(i).transpose();
                double lhs;
                if (fam->family == "X") lhs = s.dot(sol.x.col(t));
                else if (fam->family == "U") lhs = s.dot(sol.u.col(t));
                else if (fam->family == "Y") lhs = s.dot(sol.y.col(t));
                else if (fam->family == "DU") lhs = s.dot(sol.u.col(t) - sol.u.col(t - 1));
                else lhs = s.dot(sol.y.col(t) - sol.y.col(t - 1));
                sol.tightened_violation = std::max(sol.tightened_violation, lhs - fam->tightened_rhs(i, t));
            }
    return sol;
}

std::string DispatchSolution::to_csv(const VariableManifest& m) const {
    std::ostringstream os;
    os << "step";
    for (const auto* names : {&m.x, &m.u, &m.y})
        for (const auto& name : *names) os << ',' << name << " [" << unit_of_label(name) << ']';
    os << '\n';
    const auto T = u.cols();
    for (Eigen::Index t = 0; t <= T; ++t) {
        os << t;
        for (Eigen::Index k = 0; k < x.rows(); ++k) os << ',' << fmt(x(k, t));
        for (Eigen::Index k = 0; k < u.rows(); ++k) os << ',' << (t < T ? fmt(u(k, t)) : "");
        for (Eigen::Index k = 0; k < y.rows(); ++k) os << ',' << (t < T ? fmt(y(k, t)) : "");
        os << '\n';
    }
    return os.str();
}

std::string DispatchSolution::summary_json() const {
    nlohmann::ordered_json j;
    j["status"] = to_string(status);
    j["mode"] = schedule.mode.describe();
    j["objective"] = objective;
    j["lp"] = {{"variables", lp_variables},
               {"inequalities", lp_inequalities},
               {"equalities", lp_equalities},
               {"iterations", iterations},
               {"presolve_removed_rows", presolve_removed_rows}};
    j["kkt"] = {{"primal_residual", kkt.primal_residual},
                {"dual_residual", kkt.dual_residual},
                {"complementarity", kkt.complementarity},
                {"gap", kkt.gap}};
    j["dynamics_residual"] = dynamics_residual;
    j["tightened_violation"] = tightened_violation;
    return j.dump(1);
}

FeedbackGain choose_gain(const StateSpaceModel& ssm, GainMethod method, const FeedbackSettings& settings) {
    const auto d = ssm.dims();
    if (method == GainMethod::zero || settings.gain.empty()) {
        FeedbackGain g = zero_gain(ssm);
        return g;
    }
    Eigen::MatrixXd K(d.n_u, d.n_x);
    if (settings.gain.size() != static_cast<std::size_t>(d.n_u))
        throw ConfigError("policy.gain", "expected " + std::to_string(d.n_u) + " rows");
    for (int i = 0; i < d.n_u; ++i) {
        const auto& row = settings.gain[static_cast<std::size_t>(i)];
        if (row.size() != static_cast<std::size_t>(d.n_x))
            throw ConfigError("policy.gain[" + std::to_string(i) + "]", "expected " + std::to_string(d.n_x) + " columns");
        for (int k = 0; k < d.n_x; ++k) K(i, k) = row[static_cast<std::size_t>(k)];
    }
    return make_gain(ssm, K, settings.spectral_radius_cap);
}

}  // namespace chpd
