#pragma once

// Compact state-space form of a SystemModel.
//
//   x(t+1) = A x(t) + B u(t) + D w(t)
//   y(t)   = C u(t) + E w(t) + offset(t) + sum_{s<=t} M(t,s) z(s),
//   z(s)   = Gu u(s) + Gw w(s)
//
// x = [E_BU, E_TS], u = [P_CHP, Q_CHP, P_G, P_HP],
// y = [P_BU, H_TS, T_branch, V, T_s, T_r, Q_G], w = [P_PV, P_D, Q_D, H_D].
// The memory term M only touches the heating temperature rows of y.

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "chpd/system.hpp"

namespace chpd {

struct Dimensions {
    int n_x = 0, n_u = 0, n_y = 0, n_w = 0;
};

/// Names of every vector entry and the index groups used by the balances.
struct VariableManifest {
    std::vector<std::string> x, u, y, w;

    // Index groups (into u, y or w). Empty when the device class is absent.
    std::vector<int> u_chp_p, u_chp_q, u_hp_p;
    int u_grid_p = -1;
    std::vector<int> y_bu, y_ts, y_branch, y_voltage, y_supply, y_return;
    int y_grid_q = -1;
    std::vector<int> w_pv, w_p_load, w_q_load, w_heat_load;
    std::vector<double> chp_heat_ratio, hp_heat_ratio, hp_reactive_ratio;

    /// -1 when the name is unknown. `kind` is one of "x", "u", "y", "w".
    int index_of(const std::string& kind, const std::string& name) const;
    std::string to_json() const;
};

struct LiftedOutputMap {
    int horizon = 0;
    Eigen::MatrixXd C;       // n_y x n_u
    Eigen::MatrixXd E;       // n_y x n_w
    Eigen::MatrixXd offset;  // n_y x T
    std::vector<int> memory_rows;
    Eigen::SparseMatrix<double> input_u;  // n_z x n_u
    Eigen::SparseMatrix<double> input_w;  // n_z x n_w
    // kernel[t]: |memory_rows| x n_z*(t+1); block s = columns [n_z s, n_z (s+1)).
    std::vector<Eigen::MatrixXd> kernel;

    int memory_inputs() const { return static_cast<int>(input_u.rows()); }
    bool has_memory() const { return !memory_rows.empty(); }
    /// u: n_u x T, w: n_w x T. Returns n_y x T.
    Eigen::MatrixXd evaluate(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const;
    /// Same map without the constant offset (linear part only).
    Eigen::MatrixXd evaluate_linear(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const;
};

struct StateSpaceModel {
    int horizon = 0;
    double step_seconds = 0.0;
    Eigen::MatrixXd A, B, D;
    Eigen::VectorXd x0;
    LiftedOutputMap outputs;
    VariableManifest manifest;

    Dimensions dims() const;
    /// Forward simulation of the dynamics; returns n_x x (T+1).
    Eigen::MatrixXd propagate(const Eigen::MatrixXd& u, const Eigen::MatrixXd& w) const;
};

/// Rows S z <= r with labels.
struct PolyhedronH {
    Eigen::MatrixXd S;
    Eigen::VectorXd r;
    std::vector<std::string> labels;

    int rows() const { return static_cast<int>(r.size()); }
    int dim() const { return static_cast<int>(S.cols()); }
    void add(const Eigen::VectorXd& s, double rhs, std::string label);
    bool contains(const Eigen::VectorXd& z, double tol = 0.0) const;
    /// Index of the row with normal -S.row(i), or -1.
    int opposite_of(int i) const;
    static PolyhedronH empty(int dim);
};

/// X rows act on x(t), U on u(t), Y on y(t), DU on u(t)-u(t-1),
/// DY on y(t)-y(t-1).
struct ConstraintFamily {
    PolyhedronH x, u, y, du, dy;
    int total_rows() const { return x.rows() + u.rows() + y.rows() + du.rows() + dy.rows(); }
};

/// Offset convention for the normalized uncertainty vector.
enum class OffsetConvention {
    deviation,  // varpi = (w_max + w_min - 2 w_center) / (w_max - w_min)
    printed,    // varpi = (w_max - w_min - 2 w_center) / (w_max - w_min), entering with a minus sign
};

struct UncertaintyTube {
    Eigen::MatrixXd lower, center, upper;  // n_w x T
    Eigen::MatrixXd half_width;            // W^j(t,t)
    Eigen::MatrixXd offset;                // varpi_j(t)
    std::optional<double> budget;
    OffsetConvention convention = OffsetConvention::deviation;

    int channels() const { return static_cast<int>(center.rows()); }
    int horizon() const { return static_cast<int>(center.cols()); }
    bool zero_width() const { return half_width.isZero(0.0); }
};

/// Builds the tube from explicit bounds (n_w x T each).
UncertaintyTube make_tube(const Eigen::MatrixXd& lower, const Eigen::MatrixXd& center, const Eigen::MatrixXd& upper,
                          std::optional<double> budget = std::nullopt,
                          OffsetConvention convention = OffsetConvention::deviation);

StateSpaceModel compile_state_space(const SystemModel& model);
ConstraintFamily compile_constraints(const SystemModel& model, const StateSpaceModel& ssm);
UncertaintyTube compile_uncertainty_tube(const SystemModel& model, std::optional<double> budget = std::nullopt,
                                         OffsetConvention convention = OffsetConvention::deviation);

/// Largest residual of the active, reactive and heat balances plus the
/// nodal heating balances for one (u, w, y) trajectory.
double balance_residual(const SystemModel& model, const StateSpaceModel& ssm, const Eigen::MatrixXd& u,
                        const Eigen::MatrixXd& w, const Eigen::MatrixXd& y);

}  // namespace chpd
