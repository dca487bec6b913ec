#pragma once

// Radial distribution network: Z-bus power flow, branch-flow linearization
// and voltage-magnitude sensitivities. Bus vectors are full length (slack
// included); slack rows/columns of the matrices below are zero.

#include <Eigen/Dense>

#include "chpd/system.hpp"

namespace chpd {

struct OperatingPoint {
    Eigen::VectorXcd voltage;    // per bus
    Eigen::VectorXcd injection;  // per bus; slack entry is the balancing injection
    int iterations = 0;
    double residual = 0.0;
};

struct SensitivityMatrices {
    Eigen::MatrixXd dv_dp;  // d|V_i| / dP_k
    Eigen::MatrixXd dv_dq;  // d|V_i| / dQ_k
};

/// T = flow + dp * (P - p0) + dq * (Q - q0), all quantities per unit.
struct BranchFlowMap {
    Eigen::VectorXd flow;  // flows at the operating point
    Eigen::VectorXd p0, q0;
    Eigen::MatrixXd dp, dq;  // branches x buses

    Eigen::VectorXd apply(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const;
};

/// Signed incidence matrix (+1 at the from bus, -1 at the to bus).
Eigen::MatrixXd incidence_matrix(const ElectricNetwork& net);

/// Inverse of the slack-reduced admittance matrix, embedded in a full
/// bus x bus matrix with a zero slack row and column.
Eigen::MatrixXcd zbus_matrix(const ElectricNetwork& net);

/// Solves V = V_slack + Z conj(S / V) by fixed-point iteration from a flat
/// start. `injections` is per bus; the slack entry is ignored.
OperatingPoint nominal_operating_point(const ElectricNetwork& net, const Eigen::VectorXcd& injections,
                                       int max_iterations = 100, double tolerance = 1e-10);

/// Active flow at the from end of every branch, from the exact voltages.
Eigen::VectorXd branch_flows(const ElectricNetwork& net, const OperatingPoint& op);

BranchFlowMap branch_flow_map(const ElectricNetwork& net, const OperatingPoint& op);

SensitivityMatrices voltage_sensitivities(const ElectricNetwork& net, const OperatingPoint& op);

}  // namespace chpd
