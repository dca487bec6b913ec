#include "chpd/heat.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "chpd/errors.hpp"

namespace chpd {

namespace {

struct Tree {
    std::vector<int> order;                  // breadth-first from the source
    std::vector<std::vector<int>> children;  // child pipes per node
};

Tree supply_tree(const HeatNetwork& net) {
    Tree tree;
    const int n = net.node_count();
    tree.children.assign(static_cast<std::size_t>(n), {});
    std::vector<int> indegree(static_cast<std::size_t>(n), 0);
    for (int p = 0; p < static_cast<int>(net.pipes.size()); ++p) {
        const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
        tree.children[static_cast<std::size_t>(pipe.from)].push_back(p);
        ++indegree[static_cast<std::size_t>(pipe.to)];
    }
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    tree.order.push_back(net.source);
    seen[static_cast<std::size_t>(net.source)] = true;
    for (std::size_t head = 0; head < tree.order.size(); ++head) {
        for (int p : tree.children[static_cast<std::size_t>(tree.order[head])]) {
            int to = net.pipes[static_cast<std::size_t>(p)].to;
            if (seen[static_cast<std::size_t>(to)] || indegree[static_cast<std::size_t>(to)] != 1)
                throw StructuralError("heating supply network contains a cycle or a node with several feeds");
            seen[static_cast<std::size_t>(to)] = true;
            tree.order.push_back(to);
        }
    }
    if (static_cast<int>(tree.order.size()) != n)
        throw StructuralError("heating supply network is not a tree rooted at the source");
    return tree;
}

double pipe_mass(const HeatNetwork& net, const HeatPipe& pipe) {
    return std::numbers::pi * pipe.length * pipe.diameter * pipe.diameter * net.water_density / 4.0;
}

}  // namespace

DelayTable compute_delays(const HeatNetwork& net, double step_seconds, int horizon) {
    DelayTable table;
    table.tau.resize(net.pipes.size());
    for (std::size_t p = 0; p < net.pipes.size(); ++p) {
        const auto& pipe = net.pipes[p];
        if (pipe.mass_flow.size() < static_cast<std::size_t>(horizon))
            throw Error("pipe " + std::to_string(p) + ": mass-flow schedule shorter than the horizon");
        const double mass = pipe_mass(net, pipe);
        auto flow = [&](int s) { return pipe.mass_flow[static_cast<std::size_t>(std::max(s, 0))]; };
        auto& row = table.tau[p];
        row.resize(static_cast<std::size_t>(horizon));
        for (int t = 0; t < horizon; ++t) {
            double delivered = 0.0;
            int tau = 0;
            for (;; ++tau) {
                delivered += flow(t - tau) * step_seconds;
                if (delivered > mass) break;
                if (t - tau <= 0 && !(flow(0) > 0.0))
                    throw InfeasibleError("pipe " + std::to_string(p) + " (" + std::to_string(pipe.from) + "->" +
                                          std::to_string(pipe.to) +
                                          "): delivered mass never exceeds the pipe volume");
            }
            row[static_cast<std::size_t>(t)] = tau;
        }
    }
    return table;
}

double attenuation(const HeatNetwork& net, int pipe, double step_seconds, int tau) {
    const auto& p = net.pipes[static_cast<std::size_t>(pipe)];
    return std::exp(-p.conductivity * step_seconds * tau / (p.area() * net.water_density * net.water_heat_capacity));
}

Eigen::MatrixXd TemperatureMaps::evaluate(const Eigen::MatrixXd& z) const {
    const int nz = inputs();
    Eigen::MatrixXd out = offset;
    Eigen::Map<const Eigen::VectorXd> flat(z.data(), z.size());
    for (int t = 0; t < horizon; ++t)
        out.col(t) += kernel[static_cast<std::size_t>(t)] * flat.head(static_cast<Eigen::Index>(nz) * (t + 1));
    return out;
}

TemperatureMaps temperature_maps(const HeatNetwork& net, const DelayTable& delays, double step_seconds,
                                 int horizon) {
    const Tree tree = supply_tree(net);
    const int n = net.node_count();
    const int nz = n + 1;
    const double c = net.water_heat_capacity;

    TemperatureMaps maps;
    maps.horizon = horizon;
    maps.nodes = n;
    maps.offset = Eigen::MatrixXd::Zero(2 * n, horizon);
    maps.kernel.reserve(static_cast<std::size_t>(horizon));

    for (int t = 0; t < horizon; ++t) {
        const auto tz = static_cast<std::size_t>(t);
        const Eigen::Index width = static_cast<Eigen::Index>(nz) * (t + 1);
        Eigen::MatrixXd k = Eigen::MatrixXd::Zero(2 * n, width);
        Eigen::VectorXd off = Eigen::VectorXd::Zero(2 * n);
        const double ground = net.ground_temperature[tz];

        // Adds f * (row `row` at step s) to row `dst` of the step-t expression.
        auto add_past = [&](int dst, int row, int s, double f) {
            if (s == t) {
                k.row(dst) += f * k.row(row);
                off(dst) += f * off(row);
            } else {
                const auto& past = maps.kernel[static_cast<std::size_t>(s)];
                k.row(dst).head(past.cols()) += f * past.row(row);
                off(dst) += f * maps.offset(row, s);
            }
        };

        // Source supply: previous-step return water heated by Q_src.
        const int src = net.source;
        const double m_in = net.source_inflow(t);
        if (!(m_in > 0.0)) throw StructuralError("heating source has no mass injection at t=" + std::to_string(t));
        if (t == 0)
            off(src) = net.nodes[static_cast<std::size_t>(src)].return_init;
        else
            add_past(src, n + src, t - 1, 1.0);
        k(src, static_cast<Eigen::Index>(nz) * t) += 1e6 / (c * m_in);

        for (std::size_t h = 1; h < tree.order.size(); ++h) {
            const int j = tree.order[h];
            // Pipe feeding j.
            int p = -1;
            for (int q = 0; q < static_cast<int>(net.pipes.size()); ++q)
                if (net.pipes[static_cast<std::size_t>(q)].to == j) p = q;
            const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
            const int tau = delays.at(p, t);
            const double f = attenuation(net, p, step_seconds, tau);
            off(j) += ground * (1.0 - f);
            if (t - tau >= 0)
                add_past(j, pipe.from, t - tau, f);
            else
                off(j) += f * net.nodes[static_cast<std::size_t>(pipe.from)].supply_init;
        }

        for (auto it = tree.order.rbegin(); it != tree.order.rend(); ++it) {
            const int j = *it;
            const double m_ot = net.nodes[static_cast<std::size_t>(j)].outflow[tz];
            double total = m_ot;
            for (int p : tree.children[static_cast<std::size_t>(j)]) total += net.pipes[static_cast<std::size_t>(p)].mass_flow[tz];
            if (!(total > 0.0)) throw StructuralError("heat node " + std::to_string(j) + " carries no flow at t=" + std::to_string(t));
            const int r = n + j;
            if (m_ot > 0.0) {
                add_past(r, j, t, m_ot / total);
                k(r, static_cast<Eigen::Index>(nz) * t + 1 + j) -= 1e6 / (c * total);
            }
            for (int p : tree.children[static_cast<std::size_t>(j)]) {
                const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
                const double share = pipe.mass_flow[tz] / total;
                const int tau = delays.at(p, t);
                const double f = attenuation(net, p, step_seconds, tau);
                off(r) += share * ground * (1.0 - f);
                if (t - tau >= 0)
                    add_past(r, n + pipe.to, t - tau, share * f);
                else
                    off(r) += share * f * net.nodes[static_cast<std::size_t>(pipe.to)].return_init;
            }
        }
        maps.offset.col(t) = off;
        maps.kernel.push_back(std::move(k));
    }
    return maps;
}

double heat_balance_residual(const HeatNetwork& net, const DelayTable& delays, double step_seconds,
                             const Eigen::MatrixXd& z, const Eigen::MatrixXd& temps) {
    const Tree tree = supply_tree(net);
    const int n = net.node_count();
    const double c = net.water_heat_capacity;
    const auto T = static_cast<int>(temps.cols());
    double worst = 0.0;
    for (int t = 0; t < T; ++t) {
        const auto tz = static_cast<std::size_t>(t);
        const int src = net.source;
        double prev_return = t == 0 ? net.nodes[static_cast<std::size_t>(src)].return_init : temps(n + src, t - 1);
        double injected = c * net.source_inflow(t) * (temps(src, t) - prev_return) / 1e6;
        worst = std::max(worst, std::abs(injected - z(0, t)));
        for (int j = 0; j < n; ++j) {
            const double m_ot = net.nodes[static_cast<std::size_t>(j)].outflow[tz];
            if (!(m_ot > 0.0)) continue;
            // Recover the load's return water from the mixing relation.
            double total = m_ot, mixed_in = 0.0;
            for (int p : tree.children[static_cast<std::size_t>(j)]) {
                const auto& pipe = net.pipes[static_cast<std::size_t>(p)];
                const double m = pipe.mass_flow[tz];
                const int tau = delays.at(p, t);
                const double f = attenuation(net, p, step_seconds, tau);
                double upstream = t - tau >= 0 ? temps(n + pipe.to, t - tau)
                                               : net.nodes[static_cast<std::size_t>(pipe.to)].return_init;
                double g = net.ground_temperature[tz];
                mixed_in += m * (g + (upstream - g) * f);
                total += m;
            }
            double load_return = (total * temps(n + j, t) - mixed_in) / m_ot;
            double extracted = c * m_ot * (temps(j, t) - load_return) / 1e6;
            worst = std::max(worst, std::abs(extracted - z(1 + j, t)));
        }
    }
    return worst;
}

}  // namespace chpd
