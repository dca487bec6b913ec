// Iterative baseline: every reduction is the optimum of its own support LP
// over the explicit deviation dynamics.

#include <chrono>
#include <cmath>

#include "chpd/errors.hpp"
#include "chpd/lp.hpp"
#include "chpd/tightening.hpp"

namespace chpd {

namespace {

struct SupportProblem {
    LinearProgram lp;
    double constant = 0.0;
};

// max  sum_sigma a_sigma x_dot(sigma) + sum_tau b_tau w_dot(tau)
// with x_dot(s+1) = Phi x_dot(s) + D w_dot(s), x_dot(0) = 0,
// w_dot = hw .* (w_tilde + sign * varpi), w_tilde in the box or budget set.
SupportProblem support_problem(const detail::DeviationFunctional& f, const Eigen::MatrixXd& Phi,
                               const Eigen::MatrixXd& D, const UncertaintyTube& tube, const TightenMode& mode) {
    const int nx = f.n_x, nw = f.n_w;
    const double sign = tube.convention == OffsetConvention::deviation ? 1.0 : -1.0;
    int sigma_max = 0;
    for (int s = f.a_hi; s >= 1; --s)
        if (!f.a.col(s).isZero(0.0)) {
            sigma_max = s;
            break;
        }
    int tau_lo = f.b.cols() > 0 ? f.b_lo : 0;
    int tau_hi = f.b.cols() > 0 ? f.b_hi : -1;
    if (sigma_max >= 1) {
        tau_lo = 0;
        tau_hi = std::max(tau_hi, sigma_max - 1);
    }
    const bool budget = mode.kind == TightenKind::budget;

    // Variable layout: x_dot(1..sigma_max), then one (box) or two (budget)
    // columns per uncertain (channel, step).
    const int n_state = nx * sigma_max;
    std::vector<std::vector<int>> wcol(static_cast<std::size_t>(std::max(tau_hi - tau_lo + 1, 0)),
                                       std::vector<int>(static_cast<std::size_t>(nw), -1));
    int n = n_state;
    for (int tau = tau_lo; tau <= tau_hi; ++tau)
        for (int j = 0; j < nw; ++j)
            if (tube.half_width(j, tau) > 0.0) {
                wcol[static_cast<std::size_t>(tau - tau_lo)][static_cast<std::size_t>(j)] = n;
                n += budget ? 2 : 1;
            }

    SupportProblem sp;
    LinearProgram& lp = sp.lp;
    lp.c = Eigen::VectorXd::Zero(n);
    lp.lower = Eigen::VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    lp.upper = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    for (int k = n_state; k < n; ++k) {
        lp.lower(k) = budget ? 0.0 : -1.0;
        lp.upper(k) = 1.0;
    }
    auto xcol = [&](int sigma, int i) { return nx * (sigma - 1) + i; };

    // Maximize by minimizing the negated functional.
    for (int sigma = 1; sigma <= sigma_max; ++sigma)
        for (int i = 0; i < nx; ++i) lp.c(xcol(sigma, i)) -= f.a(i, sigma);
    auto add_w_cost = [&](int tau, int j, double coef) {
        const double hw = tube.half_width(j, tau);
        const int col = wcol[static_cast<std::size_t>(tau - tau_lo)][static_cast<std::size_t>(j)];
        if (col < 0) return;
        sp.constant += coef * hw * sign * tube.offset(j, tau);
        lp.c(col) -= coef * hw;
        if (budget) lp.c(col + 1) += coef * hw;
    };
    for (int k = 0; k < f.b.cols(); ++k)
        for (int j = 0; j < nw; ++j)
            if (f.b(j, k) != 0.0) add_w_cost(f.b_lo + k, j, f.b(j, k));

    std::vector<Eigen::Triplet<double>> eq;
    lp.b = Eigen::VectorXd::Zero(nx * sigma_max);
    for (int s = 0; s < sigma_max; ++s) {
        for (int i = 0; i < nx; ++i) {
            const int row = nx * s + i;
            eq.emplace_back(row, xcol(s + 1, i), 1.0);
            if (s >= 1)
                for (int k = 0; k < nx; ++k)
                    if (Phi(i, k) != 0.0) eq.emplace_back(row, xcol(s, k), -Phi(i, k));
            for (int j = 0; j < nw; ++j) {
                const double hw = tube.half_width(j, s);
                if (D(i, j) == 0.0 || hw == 0.0) continue;
                const int col = wcol[static_cast<std::size_t>(s - tau_lo)][static_cast<std::size_t>(j)];
                eq.emplace_back(row, col, -D(i, j) * hw);
                if (budget) eq.emplace_back(row, col + 1, D(i, j) * hw);
                lp.b(row) += D(i, j) * hw * sign * tube.offset(j, s);
            }
        }
    }
    lp.A.resize(nx * sigma_max, n);
    lp.A.setFromTriplets(eq.begin(), eq.end());

    if (budget) {
        std::vector<Eigen::Triplet<double>> ineq;
        std::vector<double> rhs;
        for (int j = 0; j < nw; ++j) {
            bool any = false;
            for (int tau = tau_lo; tau <= tau_hi; ++tau) {
                const int col = wcol[static_cast<std::size_t>(tau - tau_lo)][static_cast<std::size_t>(j)];
                if (col < 0) continue;
                ineq.emplace_back(static_cast<int>(rhs.size()), col, 1.0);
                ineq.emplace_back(static_cast<int>(rhs.size()), col + 1, 1.0);
                any = true;
            }
            if (any) rhs.push_back(mode.budget);
        }
        lp.G.resize(static_cast<Eigen::Index>(rhs.size()), n);
        lp.G.setFromTriplets(ineq.begin(), ineq.end());
        lp.h = Eigen::Map<Eigen::VectorXd>(rhs.data(), static_cast<Eigen::Index>(rhs.size()));
    } else {
        lp.G.resize(0, n);
        lp.h.resize(0);
    }
    return sp;
}

}  // namespace

TightenedSchedule tighten_iterative_lp(const StateSpaceModel& ssm, const ConstraintFamily& constraints,
                                       const UncertaintyTube& tube, const FeedbackGain& gain, const TightenMode& mode,
                                       const IterativeOptions& options) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    const int T = ssm.horizon;
    if (tube.horizon() != T || tube.channels() != ssm.dims().n_w)
        throw Error("tube shape does not match the state-space model");
    if (mode.kind == TightenKind::budget && !(mode.budget >= 0.0)) throw Error("budget must be non-negative");
    TightenedSchedule sched = untightened(ssm, constraints);
    sched.mode = mode;
    if (mode.kind == TightenKind::none) return sched;

    // Tiny disturbance coefficients still count toward the support value.
    LpOptions support_options;
    support_options.optimality_tolerance = 1e-13;

    for (FamilySchedule* fam : {&sched.x, &sched.u, &sched.y, &sched.du, &sched.dy}) {
        for (int i = 0; i < fam->rows.rows(); ++i) {
            const Eigen::VectorXd s = fam->rows.S.row(i).transpose();
            for (int t = fam->first_step; t <= fam->last_step; ++t) {
                if (options.deadline && clock::now() - start > *options.deadline) {
                    sched.complete = false;
                    sched.seconds = std::chrono::duration<double>(clock::now() - start).count();
                    return sched;
                }
                auto f = detail::row_functional(ssm, gain, fam->family, s, t);
                sched.rows_solved++;
                if (f.empty()) continue;
                SupportProblem sp = support_problem(f, gain.Phi, ssm.D, tube, mode);
                LpSolution sol = solve_lp(sp.lp, support_options);
                if (!sol.optimal())
                    throw Error("support LP for " + fam->family + " row " + fam->rows.labels[static_cast<std::size_t>(i)] +
                                " at step " + std::to_string(t) + " ended " + to_string(sol.status));
                fam->reduction(i, t) = -sol.objective + sp.constant;
            }
        }
    }
    sched.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return sched;
}

}  // namespace chpd
