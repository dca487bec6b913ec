#pragma once

// District heating network under constant mass flow: node-method transport
// delays and horizon-lifted affine temperature maps.
//
// Heat inputs per step are z(t) = [Q_src, H_1, ..., H_n]: net heat injected
// at the source node and the heat extracted by each node's load (MW).
// Temperature outputs per step are [T_s(0..n-1), T_r(0..n-1)] in degC.

#include <vector>

#include <Eigen/Dense>

#include "chpd/system.hpp"

namespace chpd {

struct DelayTable {
    std::vector<std::vector<int>> tau;  // [pipe][t]

    int at(int pipe, int t) const { return tau[static_cast<std::size_t>(pipe)][static_cast<std::size_t>(t)]; }
};

/// Minimal tau with sum_{s=t-tau}^{t} m(s) dt > pipe mass; flows before t=0
/// equal m(0). Throws InfeasibleError naming the pipe when no finite tau
/// satisfies the condition.
DelayTable compute_delays(const HeatNetwork& net, double step_seconds, int horizon);

/// Supply/return attenuation exp(-k dt tau / (A rho c)).
double attenuation(const HeatNetwork& net, int pipe, double step_seconds, int tau);

struct TemperatureMaps {
    int horizon = 0;
    int nodes = 0;
    // temperature(t) = offset.col(t) + sum_{s<=t} kernel[t].block(s) z(s),
    // block(s) = columns [inputs*s, inputs*(s+1)).
    Eigen::MatrixXd offset;              // 2n x T
    std::vector<Eigen::MatrixXd> kernel;  // kernel[t]: 2n x inputs*(t+1)

    int inputs() const { return nodes + 1; }
    int outputs() const { return 2 * nodes; }
    /// z: inputs x T. Returns 2n x T temperatures.
    Eigen::MatrixXd evaluate(const Eigen::MatrixXd& z) const;
};

TemperatureMaps temperature_maps(const HeatNetwork& net, const DelayTable& delays, double step_seconds,
                                 int horizon);

/// Largest nodal energy-balance residual (MW) of a temperature trajectory:
/// source c m_in (T_s(t) - T_r(t-1)) = Q_src(t), and
/// c m_ot (T_s - T_load_return) = H at every load node.
double heat_balance_residual(const HeatNetwork& net, const DelayTable& delays, double step_seconds,
                             const Eigen::MatrixXd& z, const Eigen::MatrixXd& temps);

}  // namespace chpd
