#pragma once

// Nominal dispatch under tightened constraints and the affine policy
// u(t) = u_bar(t) + K (x(t) - x_bar(t)).

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chpd/compiler.hpp"
#include "chpd/lp.hpp"
#include "chpd/tightening.hpp"

namespace chpd {

/// Per-step cost coefficients ($ per pu or per MW over one step).
struct CostModel {
    std::vector<double> chp, heat_pump, battery, tank;
    Series grid_price;

    static CostModel from_system(const SystemModel& model);
    /// Throws ConfigError on negative maintenance coefficients or a price
    /// series of the wrong length.
    void validate(const StateSpaceModel& ssm) const;
};

/// Cost of one trajectory: fuel, maintenance, grid purchase and the
/// absolute storage throughput terms. u: n_u x T, y: n_y x T.
double trajectory_cost(const CostModel& costs, const VariableManifest& manifest, const Eigen::MatrixXd& u,
                       const Eigen::MatrixXd& y);

struct NominalProblem {
    LinearProgram lp;
    int horizon = 0;
    int n_x = 0, n_u = 0, n_bu = 0, n_ts = 0;
    int dropped_rows = 0;  // rows without decision variables (constant checked)

    int u_index(int t, int k) const { return t * n_u + k; }
    int x_index(int t, int k) const { return horizon * n_u + (t - 1) * n_x + k; }  // t >= 1
    int bu_index(int t, int k) const { return horizon * (n_u + n_x) + t * (n_bu + n_ts) + k; }
    int ts_index(int t, int k) const { return bu_index(t, n_bu + k); }
    int variables() const { return lp.variables(); }
    int constraints() const { return lp.inequalities() + lp.equalities(); }
};

/// Decision variables u_bar(0..T-1), x_bar(1..T) and the storage epigraph
/// auxiliaries; dynamics as equalities, every schedule row as an inequality.
/// Throws InfeasibleError when a row without decision variables is violated
/// by its constant part.
NominalProblem build_nominal_problem(const StateSpaceModel& ssm, const TightenedSchedule& schedule,
                                     const CostModel& costs, const Eigen::MatrixXd& w_center);

struct DispatchSolution {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::MatrixXd x;  // n_x x (T+1)
    Eigen::MatrixXd u;  // n_u x T
    Eigen::MatrixXd y;  // n_y x T
    double objective = 0.0;
    int lp_variables = 0, lp_inequalities = 0, lp_equalities = 0;
    int iterations = 0, presolve_removed_rows = 0;
    KktReport kkt;
    double dynamics_residual = 0.0;
    double tightened_violation = 0.0;
    double build_seconds = 0.0, solve_seconds = 0.0;
    TightenedSchedule schedule;

    /// Columns: step, then every x, u and y entry with its unit.
    std::string to_csv(const VariableManifest& manifest) const;
    std::string summary_json() const;
};

/// Throws InfeasibleError naming the blocking rows when the tightened
/// problem has no solution, and Error on any other solver failure.
DispatchSolution solve_dispatch(const StateSpaceModel& ssm, const TightenedSchedule& schedule, const CostModel& costs,
                                const Eigen::MatrixXd& w_center);

enum class GainMethod { zero, configured };

FeedbackGain choose_gain(const StateSpaceModel& ssm, GainMethod method, const FeedbackSettings& settings = {});

struct Policy {
    DispatchSolution nominal;
    FeedbackGain gain;

    Eigen::VectorXd control(int t, const Eigen::VectorXd& x) const {
        return nominal.u.col(t) + gain.K * (x - nominal.x.col(t));
    }
};

}  // namespace chpd
