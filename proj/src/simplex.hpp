#pragma once

// Bounded revised simplex on  M z + s = rhs,  lo <= z <= up,  slo <= s <= sup.

#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "chpd/lp.hpp"

namespace chpd::detail {

struct StandardForm {
    SparseMatrixD M;  // m x n, column major
    Eigen::VectorXd rhs;
    Eigen::VectorXd c;
    Eigen::VectorXd lo, up;    // structural bounds
    Eigen::VectorXd slo, sup;  // slack bounds per row
};

struct SimplexResult {
    LpStatus status = LpStatus::numerical_failure;
    Eigen::VectorXd z;  // structural values
    Eigen::VectorXd y;  // row duals: c = M^T y + r
    Eigen::VectorXd r;  // structural reduced costs
    std::vector<int> infeasible_rows;
    int iterations = 0;
    std::string message;
};

SimplexResult run_simplex(const StandardForm& form, const LpOptions& options);

}  // namespace chpd::detail
