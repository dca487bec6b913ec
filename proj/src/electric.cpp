#include "chpd/electric.hpp"

#include <cmath>
#include <queue>

#include "chpd/errors.hpp"

namespace chpd {

namespace {

using cd = std::complex<double>;

std::vector<int> non_slack_buses(const ElectricNetwork& net) {
    std::vector<int> idx;
    for (int i = 0; i < net.bus_count(); ++i)
        if (i != net.slack) idx.push_back(i);
    return idx;
}

// coef(l, k): +-1 when the injection current at bus k flows through branch l
// (positive in the from->to direction).
Eigen::MatrixXd branch_current_map(const ElectricNetwork& net) {
    const int n = net.bus_count();
    const int nl = static_cast<int>(net.branches.size());
    std::vector<std::vector<std::pair<int, int>>> adj(static_cast<std::size_t>(n));
    for (int l = 0; l < nl; ++l) {
        const auto& b = net.branches[static_cast<std::size_t>(l)];
        adj[static_cast<std::size_t>(b.from)].push_back({b.to, l});
        adj[static_cast<std::size_t>(b.to)].push_back({b.from, l});
    }
    std::vector<int> parent_branch(static_cast<std::size_t>(n), -1), parent(static_cast<std::size_t>(n), -1);
    std::vector<int> order;
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    std::queue<int> q;
    q.push(net.slack);
    seen[static_cast<std::size_t>(net.slack)] = true;
    while (!q.empty()) {
        int v = q.front();
        q.pop();
        order.push_back(v);
        for (auto [w, l] : adj[static_cast<std::size_t>(v)]) {
            if (seen[static_cast<std::size_t>(w)]) continue;
            seen[static_cast<std::size_t>(w)] = true;
            parent[static_cast<std::size_t>(w)] = v;
            parent_branch[static_cast<std::size_t>(w)] = l;
            q.push(w);
        }
    }
    if (static_cast<int>(order.size()) != n) throw StructuralError("electric network is not connected");
    Eigen::MatrixXd coef = Eigen::MatrixXd::Zero(nl, n);
    // Walk from every bus up to the slack; each branch on the path carries
    // that bus's injection toward the slack.
    for (int k = 0; k < n; ++k) {
        int v = k;
        while (v != net.slack) {
            int l = parent_branch[static_cast<std::size_t>(v)];
            // Upstream direction is v -> parent.
            coef(l, k) = net.branches[static_cast<std::size_t>(l)].from == v ? 1.0 : -1.0;
            v = parent[static_cast<std::size_t>(v)];
        }
    }
    return coef;
}

}  // namespace

Eigen::VectorXd BranchFlowMap::apply(const Eigen::VectorXd& p, const Eigen::VectorXd& q) const {
    return flow + dp * (p - p0) + dq * (q - q0);
}

Eigen::MatrixXd incidence_matrix(const ElectricNetwork& net) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(net.bus_count(), static_cast<Eigen::Index>(net.branches.size()));
    for (std::size_t l = 0; l < net.branches.size(); ++l) {
        a(net.branches[l].from, static_cast<Eigen::Index>(l)) = 1.0;
        a(net.branches[l].to, static_cast<Eigen::Index>(l)) = -1.0;
    }
    return a;
}

Eigen::MatrixXcd zbus_matrix(const ElectricNetwork& net) {
    const int n = net.bus_count();
    Eigen::MatrixXcd y = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& b : net.branches) {
        cd adm = 1.0 / b.impedance;
        y(b.from, b.from) += adm;
        y(b.to, b.to) += adm;
        y(b.from, b.to) -= adm;
        y(b.to, b.from) -= adm;
    }
    auto idx = non_slack_buses(net);
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n, n);
    if (m == 0) return z;
    Eigen::MatrixXcd yr(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) yr(i, j) = y(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    Eigen::FullPivLU<Eigen::MatrixXcd> lu(yr);
    if (!lu.isInvertible()) throw StructuralError("reduced admittance matrix is singular (disconnected network)");
    Eigen::MatrixXcd zr = lu.inverse();
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) z(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]) = zr(i, j);
    return z;
}

OperatingPoint nominal_operating_point(const ElectricNetwork& net, const Eigen::VectorXcd& injections,
                                       int max_iterations, double tolerance) {
    const int n = net.bus_count();
    if (injections.size() != n) throw Error("injection vector length must equal the bus count");
    Eigen::MatrixXcd z = zbus_matrix(net);
    Eigen::VectorXcd s = injections;
    s(net.slack) = 0.0;
    const cd vs = net.slack_voltage;

    Eigen::VectorXcd v = Eigen::VectorXcd::Constant(n, vs);
    auto image = [&](const Eigen::VectorXcd& volt) {
        Eigen::VectorXcd current(n);
        for (int i = 0; i < n; ++i) current(i) = std::conj(s(i) / volt(i));
        Eigen::VectorXcd out = z * current;
        out.array() += vs;
        out(net.slack) = vs;
        return out;
    };
    OperatingPoint op;
    double residual = (image(v) - v).cwiseAbs().maxCoeff();
    int it = 0;
    while (residual > tolerance) {
        if (it >= max_iterations)
            throw ConvergenceError("power flow did not converge in " + std::to_string(max_iterations) +
                                   " iterations (residual " + std::to_string(residual) + ")");
        v = image(v);
        ++it;
        for (int i = 0; i < n; ++i)
            if (!(std::abs(v(i)) > 0.0) || !std::isfinite(std::abs(v(i))))
                throw ConvergenceError("power flow diverged (voltage collapse at bus " + std::to_string(i) + ")");
        residual = (image(v) - v).cwiseAbs().maxCoeff();
    }
    op.voltage = v;
    op.iterations = it;
    op.residual = residual;
    op.injection = s;
    // Slack injection from the slack row of the admittance matrix.
    cd slack_current = 0.0;
    for (const auto& b : net.branches) {
        if (b.from != net.slack && b.to != net.slack) continue;
        int other = b.from == net.slack ? b.to : b.from;
        slack_current += (v(net.slack) - v(other)) / b.impedance;
    }
    op.injection(net.slack) = vs * std::conj(slack_current);
    return op;
}

Eigen::VectorXd branch_flows(const ElectricNetwork& net, const OperatingPoint& op) {
    const int n = net.bus_count();
    Eigen::MatrixXd coef = branch_current_map(net);
    Eigen::VectorXcd current(n);
    for (int i = 0; i < n; ++i) current(i) = i == net.slack ? cd(0.0) : std::conj(op.injection(i) / op.voltage(i));
    Eigen::VectorXcd ib = coef.cast<cd>() * current;
    Eigen::VectorXd flows(ib.size());
    for (Eigen::Index l = 0; l < ib.size(); ++l)
        flows(l) = (op.voltage(net.branches[static_cast<std::size_t>(l)].from) * std::conj(ib(l))).real();
    return flows;
}

namespace {

// Complex dV/dP and dV/dQ (bus x bus) from the implicit Z-bus relation.
std::pair<Eigen::MatrixXcd, Eigen::MatrixXcd> complex_sensitivities(const ElectricNetwork& net,
                                                                    const OperatingPoint& op) {
    const int n = net.bus_count();
    auto idx = non_slack_buses(net);
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXcd z = zbus_matrix(net);
    Eigen::MatrixXcd dvp = Eigen::MatrixXcd::Zero(n, n), dvq = Eigen::MatrixXcd::Zero(n, n);
    if (m == 0) return {dvp, dvq};

    Eigen::MatrixXcd mm(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) {
            int bi = idx[static_cast<std::size_t>(i)], bj = idx[static_cast<std::size_t>(j)];
            cd vj = std::conj(op.voltage(bj));
            mm(i, j) = -z(bi, bj) * std::conj(op.injection(bj)) / (vj * vj);
        }
    Eigen::MatrixXd sys(2 * m, 2 * m);
    Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
    sys.topLeftCorner(m, m) = id - mm.real();
    sys.topRightCorner(m, m) = -mm.imag();
    sys.bottomLeftCorner(m, m) = -mm.imag();
    sys.bottomRightCorner(m, m) = id + mm.real();
    Eigen::MatrixXd rhs(2 * m, 2 * m);
    for (Eigen::Index k = 0; k < m; ++k) {
        int bk = idx[static_cast<std::size_t>(k)];
        for (Eigen::Index i = 0; i < m; ++i) {
            int bi = idx[static_cast<std::size_t>(i)];
            cd bp = z(bi, bk) / std::conj(op.voltage(bk));
            cd bq = cd(0.0, -1.0) * bp;
            rhs(i, k) = bp.real();
            rhs(m + i, k) = bp.imag();
            rhs(i, m + k) = bq.real();
            rhs(m + i, m + k) = bq.imag();
        }
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(sys);
    if (!(std::abs(lu.determinant()) > 0.0) || !std::isfinite(lu.determinant()))
        throw StructuralError("voltage sensitivity system is singular");
    Eigen::MatrixXd sol = lu.solve(rhs);
    for (Eigen::Index k = 0; k < m; ++k)
        for (Eigen::Index i = 0; i < m; ++i) {
            int bi = idx[static_cast<std::size_t>(i)], bk = idx[static_cast<std::size_t>(k)];
            dvp(bi, bk) = cd(sol(i, k), sol(m + i, k));
            dvq(bi, bk) = cd(sol(i, m + k), sol(m + i, m + k));
        }
    if (!dvp.allFinite() || !dvq.allFinite()) throw StructuralError("voltage sensitivities are not finite");
    return {dvp, dvq};
}

}  // namespace

SensitivityMatrices voltage_sensitivities(const ElectricNetwork& net, const OperatingPoint& op) {
    auto [dvp, dvq] = complex_sensitivities(net, op);
    const int n = net.bus_count();
    SensitivityMatrices out{Eigen::MatrixXd::Zero(n, n), Eigen::MatrixXd::Zero(n, n)};
    for (int i = 0; i < n; ++i) {
        if (i == net.slack) continue;
        const cd vi = op.voltage(i);
        const double mag = std::abs(vi);
        for (int k = 0; k < n; ++k) {
            out.dv_dp(i, k) = (std::conj(vi) * dvp(i, k)).real() / mag;
            out.dv_dq(i, k) = (std::conj(vi) * dvq(i, k)).real() / mag;
        }
    }
    return out;
}

BranchFlowMap branch_flow_map(const ElectricNetwork& net, const OperatingPoint& op) {
    const int n = net.bus_count();
    const auto nl = static_cast<Eigen::Index>(net.branches.size());
    Eigen::MatrixXd coef = branch_current_map(net);
    auto [dvp, dvq] = complex_sensitivities(net, op);

    Eigen::VectorXcd current(n);
    for (int i = 0; i < n; ++i) current(i) = i == net.slack ? cd(0.0) : std::conj(op.injection(i) / op.voltage(i));
    // dI_i/dP_k and dI_i/dQ_k.
    Eigen::MatrixXcd dip = Eigen::MatrixXcd::Zero(n, n), diq = Eigen::MatrixXcd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        if (i == net.slack) continue;
        const cd vc = std::conj(op.voltage(i));
        const cd factor = -std::conj(op.injection(i)) / (vc * vc);
        for (int k = 0; k < n; ++k) {
            dip(i, k) = factor * std::conj(dvp(i, k));
            diq(i, k) = factor * std::conj(dvq(i, k));
        }
        dip(i, i) += 1.0 / vc;
        diq(i, i) += cd(0.0, -1.0) / vc;
    }
    Eigen::MatrixXcd cc = coef.cast<cd>();
    Eigen::VectorXcd ib = cc * current;
    Eigen::MatrixXcd dib_p = cc * dip, dib_q = cc * diq;

    BranchFlowMap map;
    map.flow.resize(nl);
    map.dp.resize(nl, n);
    map.dq.resize(nl, n);
    for (Eigen::Index l = 0; l < nl; ++l) {
        const int f = net.branches[static_cast<std::size_t>(l)].from;
        const cd vf = op.voltage(f);
        map.flow(l) = (vf * std::conj(ib(l))).real();
        for (int k = 0; k < n; ++k) {
            map.dp(l, k) = (dvp(f, k) * std::conj(ib(l)) + vf * std::conj(dib_p(l, k))).real();
            map.dq(l, k) = (dvq(f, k) * std::conj(ib(l)) + vf * std::conj(dib_q(l, k))).real();
        }
    }
    map.p0 = op.injection.real();
    map.q0 = op.injection.imag();
    map.p0(net.slack) = 0.0;
    map.q0(net.slack) = 0.0;
    return map;
}

}  // namespace chpd
