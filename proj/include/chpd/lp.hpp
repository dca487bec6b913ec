#pragma once

// Linear programs  min c^T z + offset
//                  s.t. G z <= h,  A z = b,  lower <= z <= upper
// and the bundled bounded revised simplex solver.

#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace chpd {

using SparseMatrixD = Eigen::SparseMatrix<double>;

struct LinearProgram {
    Eigen::VectorXd c;
    double objective_offset = 0.0;
    SparseMatrixD G;  // inequality rows
    Eigen::VectorXd h;
    SparseMatrixD A;  // equality rows
    Eigen::VectorXd b;
    Eigen::VectorXd lower, upper;  // may hold +-infinity
    std::vector<std::string> variable_names, inequality_names, equality_names;

    int variables() const { return static_cast<int>(c.size()); }
    int inequalities() const { return static_cast<int>(h.size()); }
    int equalities() const { return static_cast<int>(b.size()); }
    /// Throws chpd::Error on inconsistent dimensions or non-finite data.
    void validate() const;
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit, numerical_failure };

std::string to_string(LpStatus status);

struct LpSolution {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::VectorXd x;
    // c = G^T y + A^T mu + r, with y <= 0 on inequality rows.
    Eigen::VectorXd y;   // inequality duals
    Eigen::VectorXd mu;  // equality duals
    Eigen::VectorXd reduced_costs;
    double objective = 0.0;
    int iterations = 0;
    int presolve_removed_rows = 0;
    std::vector<std::string> blocking_rows;  // rows left infeasible by phase one
    std::string message;

    bool optimal() const { return status == LpStatus::optimal; }
};

struct LpOptions {
    double feasibility_tolerance = 1e-8;
    double optimality_tolerance = 1e-9;
    int max_iterations = 0;  // 0 picks a size-based limit
    int refactor_interval = 50;
    bool presolve = true;
};

LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options = {});

struct KktReport {
    double primal_residual = 0.0;   // worst bound / row violation
    double dual_residual = 0.0;     // stationarity and dual sign violations
    double complementarity = 0.0;   // worst |dual * slack|
    double gap = 0.0;               // |primal - dual| / (1 + |primal|)

    bool passes(double tolerance = 1e-7) const {
        return primal_residual <= tolerance && dual_residual <= tolerance && complementarity <= tolerance &&
               gap <= tolerance;
    }
};

KktReport check_kkt(const LinearProgram& lp, const LpSolution& solution);

/// Free-format MPS export (inequalities as L rows, equalities as E rows).
void write_mps(const LinearProgram& lp, std::ostream& out, const std::string& name = "CHPD");

}  // namespace chpd
