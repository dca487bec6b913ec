#include "chpd/lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "chpd/errors.hpp"
#include "simplex.hpp"

namespace chpd {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool finite_entries(const SparseMatrixD& m) {
    for (int k = 0; k < m.outerSize(); ++k)
        for (SparseMatrixD::InnerIterator it(m, k); it; ++it)
            if (!std::isfinite(it.value())) return false;
    return true;
}

std::string row_name(const std::vector<std::string>& names, int i, const char* prefix) {
    if (static_cast<std::size_t>(i) < names.size() && !names[static_cast<std::size_t>(i)].empty())
        return names[static_cast<std::size_t>(i)];
    return prefix + std::to_string(i);
}

std::string mps_name(std::string s) {
    for (char& ch : s)
        if (ch == ' ' || ch == '\t') ch = '_';
    return s;
}

}  // namespace

std::string to_string(LpStatus status) {
    switch (status) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
        case LpStatus::iteration_limit: return "iteration_limit";
        case LpStatus::numerical_failure: return "numerical_failure";
    }
    return "unknown";
}

void LinearProgram::validate() const {
    const auto n = c.size();
    if (lower.size() != n || upper.size() != n) throw Error("LP bound vectors must match the variable count");
    if ((G.rows() != h.size()) || (G.rows() > 0 && G.cols() != n) || (G.rows() == 0 && G.cols() != 0 && G.cols() != n))
        throw Error("LP inequality block has inconsistent dimensions");
    if ((A.rows() != b.size()) || (A.rows() > 0 && A.cols() != n) || (A.rows() == 0 && A.cols() != 0 && A.cols() != n))
        throw Error("LP equality block has inconsistent dimensions");
    if (!c.allFinite() || !h.allFinite() || !b.allFinite() || !std::isfinite(objective_offset))
        throw Error("LP data must be finite");
    if (!finite_entries(G) || !finite_entries(A)) throw Error("LP matrix entries must be finite");
    for (Eigen::Index j = 0; j < n; ++j)
        if (std::isnan(lower(j)) || std::isnan(upper(j)) || lower(j) == kInf || upper(j) == -kInf)
            throw Error("LP variable " + std::to_string(j) + " has invalid bounds");
}

LpSolution solve_lp(const LinearProgram& lp, const LpOptions& options) {
    lp.validate();
    const int n = lp.variables();
    const int mg = lp.inequalities();
    const int me = lp.equalities();
    const double ftol = options.feasibility_tolerance;

    LpSolution sol;
    Eigen::VectorXd lo = lp.lower, up = lp.upper;

    // Row-wise view of G for presolve.
    Eigen::SparseMatrix<double, Eigen::RowMajor> Gr = lp.G;
    std::vector<int> keep;          // inequality rows passed to the simplex
    std::vector<int> lo_row(static_cast<std::size_t>(n), -1), up_row(static_cast<std::size_t>(n), -1);
    std::vector<double> lo_coef(static_cast<std::size_t>(n), 0.0), up_coef(static_cast<std::size_t>(n), 0.0);

    auto infeasible = [&](std::vector<std::string> rows, const std::string& why) {
        sol.status = LpStatus::infeasible;
        sol.blocking_rows = std::move(rows);
        sol.message = why;
        sol.x = Eigen::VectorXd::Zero(n);
        sol.y = Eigen::VectorXd::Zero(mg);
        sol.mu = Eigen::VectorXd::Zero(me);
        sol.reduced_costs = Eigen::VectorXd::Zero(n);
        return sol;
    };

    std::vector<bool> singleton(static_cast<std::size_t>(mg), false);
    if (options.presolve) {
        for (int i = 0; i < mg; ++i) {
            int count = 0, col = -1;
            double coef = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Gr, i); it; ++it)
                if (it.value() != 0.0) {
                    ++count;
                    col = static_cast<int>(it.col());
                    coef = it.value();
                }
            if (count == 0) {
                if (lp.h(i) < -ftol) return infeasible({row_name(lp.inequality_names, i, "G")}, "empty row with negative bound");
                singleton[static_cast<std::size_t>(i)] = true;
                continue;
            }
            if (count != 1) continue;
            singleton[static_cast<std::size_t>(i)] = true;
            const double bound = lp.h(i) / coef;
            const auto cz = static_cast<std::size_t>(col);
            if (coef > 0 && bound < up(col)) {
                up(col) = bound;
                up_row[cz] = i;
                up_coef[cz] = coef;
            } else if (coef < 0 && bound > lo(col)) {
                lo(col) = bound;
                lo_row[cz] = i;
                lo_coef[cz] = coef;
            }
        }
        for (int j = 0; j < n; ++j) {
            if (lo(j) > up(j) + ftol) {
                std::vector<std::string> rows;
                if (lo_row[static_cast<std::size_t>(j)] >= 0) rows.push_back(row_name(lp.inequality_names, lo_row[static_cast<std::size_t>(j)], "G"));
                if (up_row[static_cast<std::size_t>(j)] >= 0) rows.push_back(row_name(lp.inequality_names, up_row[static_cast<std::size_t>(j)], "G"));
                return infeasible(rows, "crossing bounds on " + row_name(lp.variable_names, j, "z"));
            }
            if (lo(j) > up(j)) lo(j) = up(j);
        }
        for (int i = 0; i < mg; ++i) {
            if (singleton[static_cast<std::size_t>(i)]) continue;
            double hi_act = 0.0;
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Gr, i); it; ++it)
                hi_act += it.value() > 0 ? it.value() * up(it.col()) : it.value() * lo(it.col());
            if (hi_act <= lp.h(i)) continue;  // redundant under the bounds
            keep.push_back(i);
        }
    } else {
        for (int i = 0; i < mg; ++i) keep.push_back(i);
    }
    sol.presolve_removed_rows = mg - static_cast<int>(keep.size());

    const int mk = static_cast<int>(keep.size());
    detail::StandardForm form;
    form.M.resize(mk + me, n);
    {
        std::vector<Eigen::Triplet<double>> trips;
        for (int k = 0; k < mk; ++k)
            for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Gr, keep[static_cast<std::size_t>(k)]); it; ++it)
                trips.emplace_back(k, static_cast<int>(it.col()), it.value());
        for (int k = 0; k < lp.A.outerSize(); ++k)
            for (SparseMatrixD::InnerIterator it(lp.A, k); it; ++it)
                trips.emplace_back(mk + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
        form.M.setFromTriplets(trips.begin(), trips.end());
        form.M.makeCompressed();
    }
    form.rhs.resize(mk + me);
    form.slo = Eigen::VectorXd::Zero(mk + me);
    form.sup.resize(mk + me);
    for (int k = 0; k < mk; ++k) {
        form.rhs(k) = lp.h(keep[static_cast<std::size_t>(k)]);
        form.sup(k) = kInf;
    }
    for (int k = 0; k < me; ++k) {
        form.rhs(mk + k) = lp.b(k);
        form.sup(mk + k) = 0.0;
    }
    form.c = lp.c;
    form.lo = lo;
    form.up = up;

    detail::SimplexResult res = detail::run_simplex(form, options);
    sol.status = res.status;
    sol.iterations = res.iterations;
    sol.message = res.message;
    sol.x = res.z;
    sol.y = Eigen::VectorXd::Zero(mg);
    sol.mu = Eigen::VectorXd::Zero(me);
    sol.reduced_costs = res.r;
    for (int k = 0; k < mk; ++k) sol.y(keep[static_cast<std::size_t>(k)]) = res.y(k);
    for (int k = 0; k < me; ++k) sol.mu(k) = res.y(mk + k);
    for (int r : res.infeasible_rows)
        sol.blocking_rows.push_back(r < mk ? row_name(lp.inequality_names, keep[static_cast<std::size_t>(r)], "G")
                                           : row_name(lp.equality_names, r - mk, "A"));

    // Hand reduced costs of bounds created from singleton rows back to those rows.
    const double btol = 1e-9;
    for (int j = 0; j < n; ++j) {
        const auto jz = static_cast<std::size_t>(j);
        const double rj = sol.reduced_costs(j);
        if (up_row[jz] >= 0 && rj < 0 && sol.x(j) >= up(j) - btol * std::max(1.0, std::abs(up(j)))) {
            sol.y(up_row[jz]) = rj / up_coef[jz];
            sol.reduced_costs(j) = 0.0;
        } else if (lo_row[jz] >= 0 && rj > 0 && sol.x(j) <= lo(j) + btol * std::max(1.0, std::abs(lo(j)))) {
            sol.y(lo_row[jz]) = rj / lo_coef[jz];
            sol.reduced_costs(j) = 0.0;
        }
    }
    sol.objective = lp.c.dot(sol.x) + lp.objective_offset;
    return sol;
}

KktReport check_kkt(const LinearProgram& lp, const LpSolution& s) {
    KktReport rep;
    const int n = lp.variables();
    const double btol = 1e-7;
    Eigen::VectorXd gx = lp.inequalities() > 0 ? Eigen::VectorXd(lp.G * s.x) : Eigen::VectorXd();
    Eigen::VectorXd ax = lp.equalities() > 0 ? Eigen::VectorXd(lp.A * s.x) : Eigen::VectorXd();
    for (int i = 0; i < lp.inequalities(); ++i) rep.primal_residual = std::max(rep.primal_residual, gx(i) - lp.h(i));
    for (int i = 0; i < lp.equalities(); ++i) rep.primal_residual = std::max(rep.primal_residual, std::abs(ax(i) - lp.b(i)));
    for (int j = 0; j < n; ++j)
        rep.primal_residual = std::max({rep.primal_residual, lp.lower(j) - s.x(j), s.x(j) - lp.upper(j)});

    Eigen::VectorXd r = lp.c;
    if (lp.inequalities() > 0) r -= lp.G.transpose() * s.y;
    if (lp.equalities() > 0) r -= lp.A.transpose() * s.mu;
    double dual_obj = lp.objective_offset;
    for (int i = 0; i < lp.inequalities(); ++i) {
        rep.dual_residual = std::max(rep.dual_residual, s.y(i));
        rep.complementarity = std::max(rep.complementarity, std::abs(s.y(i) * (lp.h(i) - gx(i))));
        dual_obj += lp.h(i) * s.y(i);
    }
    for (int i = 0; i < lp.equalities(); ++i) dual_obj += lp.b(i) * s.mu(i);
    for (int j = 0; j < n; ++j) {
        const double lo = lp.lower(j), up = lp.upper(j), x = s.x(j), rj = r(j);
        const bool at_lo = std::isfinite(lo) && x - lo <= btol * std::max(1.0, std::abs(lo));
        const bool at_up = std::isfinite(up) && up - x <= btol * std::max(1.0, std::abs(up));
        double viol = 0.0;
        if (at_lo && at_up) viol = 0.0;
        else if (at_lo) viol = std::max(0.0, -rj);
        else if (at_up) viol = std::max(0.0, rj);
        else viol = std::abs(rj);
        rep.dual_residual = std::max(rep.dual_residual, viol);
        if (rj > 0 && std::isfinite(lo)) {
            dual_obj += rj * lo;
            rep.complementarity = std::max(rep.complementarity, std::abs(rj * (x - lo)));
        } else if (rj < 0 && std::isfinite(up)) {
            dual_obj += rj * up;
            rep.complementarity = std::max(rep.complementarity, std::abs(rj * (up - x)));
        }
    }
    const double primal_obj = lp.c.dot(s.x) + lp.objective_offset;
    rep.gap = std::abs(primal_obj - dual_obj) / (1.0 + std::abs(primal_obj));
    return rep;
}

void write_mps(const LinearProgram& lp, std::ostream& out, const std::string& name) {
    lp.validate();
    const int n = lp.variables();
    auto var = [&](int j) { return mps_name(row_name(lp.variable_names, j, "z")); };
    auto grow = [&](int i) { return mps_name(row_name(lp.inequality_names, i, "G")); };
    auto arow = [&](int i) { return mps_name(row_name(lp.equality_names, i, "A")); };
    out.precision(17);
    out << "NAME " << mps_name(name) << "\nROWS\n N COST\n";
    for (int i = 0; i < lp.inequalities(); ++i) out << " L " << grow(i) << '\n';
    for (int i = 0; i < lp.equalities(); ++i) out << " E " << arow(i) << '\n';
    out << "COLUMNS\n";
    SparseMatrixD G = lp.G, A = lp.A;
    if (G.cols() == 0) G.resize(0, n);
    if (A.cols() == 0) A.resize(0, n);
    for (int j = 0; j < n; ++j) {
        if (lp.c(j) != 0.0) out << ' ' << var(j) << " COST " << lp.c(j) << '\n';
        for (SparseMatrixD::InnerIterator it(G, j); it; ++it)
            out << ' ' << var(j) << ' ' << grow(static_cast<int>(it.row())) << ' ' << it.value() << '\n';
        for (SparseMatrixD::InnerIterator it(A, j); it; ++it)
            out << ' ' << var(j) << ' ' << arow(static_cast<int>(it.row())) << ' ' << it.value() << '\n';
    }
    out << "RHS\n";
    if (lp.objective_offset != 0.0) out << " RHS COST " << -lp.objective_offset << '\n';
    for (int i = 0; i < lp.inequalities(); ++i)
        if (lp.h(i) != 0.0) out << " RHS " << grow(i) << ' ' << lp.h(i) << '\n';
    for (int i = 0; i < lp.equalities(); ++i)
        if (lp.b(i) != 0.0) out << " RHS " << arow(i) << ' ' << lp.b(i) << '\n';
    out << "BOUNDS\n";
    for (int j = 0; j < n; ++j) {
        const double lo = lp.lower(j), up = lp.upper(j);
        if (lo == up) {
            out << " FX BND " << var(j) << ' ' << lo << '\n';
            continue;
        }
        if (!std::isfinite(lo) && !std::isfinite(up)) {
            out << " FR BND " << var(j) << '\n';
            continue;
        }
        if (!std::isfinite(lo)) out << " MI BND " << var(j) << '\n';
        else if (lo != 0.0) out << " LO BND " << var(j) << ' ' << lo << '\n';
        if (std::isfinite(up)) out << " UP BND " << var(j) << ' ' << up << '\n';
    }
    out << "ENDATA\n";
}

}  // namespace chpd
