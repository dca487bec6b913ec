#pragma once

// Constraint tightening against time-variant interval uncertainty.
//
// Under u(t) = u_bar(t) + K (x(t) - x_bar(t)) the state deviation obeys
// x_dot(t+1) = Phi x_dot(t) + D w_dot(t) with x_dot(0) = 0, Phi = A + B K.
// Every constraint row turns into a linear functional of the disturbance
// deviations; its worst case is subtracted from the right-hand side.

#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chpd/compiler.hpp"

namespace chpd {

struct FeedbackGain {
    Eigen::MatrixXd K;    // n_u x n_x
    Eigen::MatrixXd Phi;  // A + B K
    double spectral_radius = 0.0;
    std::string warning;  // set when the radius exceeds one

    bool is_zero() const { return K.isZero(0.0); }
};

/// Validates K against the spectral-radius cap (StructuralError above it).
FeedbackGain make_gain(const StateSpaceModel& ssm, const Eigen::MatrixXd& K, double radius_cap = 1.1);
FeedbackGain zero_gain(const StateSpaceModel& ssm);

/// X(t) = sum_{i<t} Phi^{t-1-i} D W_dot(i), kept as generator pairs.
struct ReachableSets {
    int horizon = 0;
    std::vector<Eigen::MatrixXd> maps;  // maps[k] = Phi^k D
    Eigen::MatrixXd dev_lower, dev_upper;  // W_dot(i) = [lower - center, upper - center], n_w x T

    int generator_count(int t) const { return t; }
    /// sup { c^T x : x in X(t) }.
    double support(int t, const Eigen::VectorXd& c) const;
    /// Componentwise interval hull of X(t).
    std::pair<Eigen::VectorXd, Eigen::VectorXd> hull(int t) const;
};

ReachableSets reachable_sets(const StateSpaceModel& ssm, const UncertaintyTube& tube, const FeedbackGain& gain);

/// sup { v^T w : ||w||_inf <= 1 } = ||v||_1.
double support_box(const Eigen::VectorXd& v);
/// Adds the offset term v^T varpi (sign depends on the convention).
double support_box(const Eigen::VectorXd& v, const Eigen::VectorXd& varpi, OffsetConvention convention);

/// sup { v^T w : ||w||_inf <= 1, ||w||_1 <= budget }. Throws on a negative budget.
double gamma(const Eigen::VectorXd& v, double budget);

enum class TightenKind { none, box, budget };

struct TightenMode {
    TightenKind kind = TightenKind::box;
    double budget = 0.0;

    static TightenMode none() { return {TightenKind::none, 0.0}; }
    static TightenMode box() { return {TightenKind::box, 0.0}; }
    static TightenMode with_budget(double g) { return {TightenKind::budget, g}; }
    std::string describe() const;
};

/// Reductions for one constraint family. Column t holds step t; steps
/// outside [first_step, last_step] carry no rows.
struct FamilySchedule {
    std::string family;  // "X", "U", "Y", "DU", "DY"
    PolyhedronH rows;
    Eigen::MatrixXd reduction;
    int first_step = 0;
    int last_step = -1;

    bool active(int t) const { return t >= first_step && t <= last_step; }
    double tightened_rhs(int row, int t) const { return rows.r(row) - reduction(row, t); }
};

struct TightenedSchedule {
    TightenMode mode;
    FamilySchedule x, u, y, du, dy;
    bool complete = true;  // false when an iterative run hit its deadline
    int rows_solved = 0;   // number of (row, step) reductions computed
    double seconds = 0.0;

    std::vector<const FamilySchedule*> families() const { return {&x, &u, &y, &du, &dy}; }
    /// Largest |reduction difference| over every row and step.
    double max_difference(const TightenedSchedule& other) const;
    /// Columns: family, step, row, unit, original_rhs, reduction, tightened_rhs.
    std::string to_csv() const;
};

/// All-zero reductions: the deterministic problem.
TightenedSchedule untightened(const StateSpaceModel& ssm, const ConstraintFamily& constraints);

struct TightenOptions {
    bool throw_on_empty = true;
    double empty_tolerance = 1e-9;
};

/// Direct tightening via dual norms (box) or the budget closed form.
/// Throws InfeasibleError naming the step and rows when a tightened set
/// is empty.
TightenedSchedule tighten(const StateSpaceModel& ssm, const ConstraintFamily& constraints, const UncertaintyTube& tube,
                          const FeedbackGain& gain, const TightenMode& mode, const TightenOptions& options = {});

struct IterativeOptions {
    /// Stop once this much wall time has passed; the schedule is then
    /// flagged incomplete.
    std::optional<std::chrono::duration<double>> deadline;
};

/// Baseline: one support LP per row and step, solved with the bundled
/// simplex over the explicit dynamics.
TightenedSchedule tighten_iterative_lp(const StateSpaceModel& ssm, const ConstraintFamily& constraints,
                                       const UncertaintyTube& tube, const FeedbackGain& gain, const TightenMode& mode,
                                       const IterativeOptions& options = {});

/// Physical unit of a constraint label ("pu", "MW", "degC", "fraction").
std::string unit_of_label(const std::string& label);

namespace detail {

/// Linear functional sum_sigma a_sigma x_dot(sigma) + sum_tau b_tau w_dot(tau)
/// describing the deviation of one constraint row at one step.
struct DeviationFunctional {
    int n_x = 0, n_w = 0;
    int a_hi = -1;           // last sigma with a term; a covers sigma in [0, a_hi]
    Eigen::MatrixXd a;       // n_x x (a_hi + 1)
    int b_lo = 0, b_hi = -1;  // b covers tau in [b_lo, b_hi]
    Eigen::MatrixXd b;       // n_w x (b_hi - b_lo + 1)

    DeviationFunctional(int nx, int nw, int sigma_hi, int tau_lo, int tau_hi);
    void add_state(int sigma, const Eigen::RowVectorXd& row);
    void add_disturbance(int tau, const Eigen::RowVectorXd& row);
    bool empty() const;
};

/// Builds the functional of row `s` of a family at step t.
DeviationFunctional row_functional(const StateSpaceModel& ssm, const FeedbackGain& gain, const std::string& family,
                                   const Eigen::VectorXd& s, int t);

/// Resolves the state terms through the dynamics: returns phi with column
/// k holding the coefficient of w_dot(first + k).
Eigen::MatrixXd resolve(const DeviationFunctional& f, const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& D,
                        int& first);

}  // namespace detail

}  // namespace chpd
