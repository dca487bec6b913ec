#include "simplex.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseLU>

namespace chpd::detail {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTolerance = 1e-9;
constexpr double kHarrisTolerance = 1e-11;
constexpr int kDegenerateLimit = 50;

class Simplex {
public:
    Simplex(const StandardForm& form, const LpOptions& options) : f_(form), opt_(options) {
        m_ = static_cast<int>(form.M.rows());
        n_ = static_cast<int>(form.M.cols());
        max_iter_ = options.max_iterations > 0 ? options.max_iterations : 20 * (m_ + n_) + 10000;
    }

    SimplexResult solve() {
        SimplexResult res;
        setup();
        if (!refactor()) return fail(res, "singular initial basis");

        if (!art_row_.empty()) {
            for (int k = 0; k < static_cast<int>(art_row_.size()); ++k) cost_(n_ + m_ + k) = 1.0;
            const LpStatus s = iterate(/*phase_one=*/true);
            if (s != LpStatus::optimal) {
                res.status = s;
                res.message = "phase one stopped: " + to_string(s);
                return finish(res);
            }
            for (int k = 0; k < static_cast<int>(art_row_.size()); ++k) {
                const int j = n_ + m_ + k;
                if (x_(j) > opt_.feasibility_tolerance) res.infeasible_rows.push_back(art_row_[static_cast<std::size_t>(k)]);
            }
            if (!res.infeasible_rows.empty()) {
                res.status = LpStatus::infeasible;
                res.message = "no point satisfies every row";
                return finish(res);
            }
            for (int k = 0; k < static_cast<int>(art_row_.size()); ++k) {
                const int j = n_ + m_ + k;
                cost_(j) = 0.0;
                lo_(j) = up_(j) = 0.0;
                if (pos_[static_cast<std::size_t>(j)] < 0) x_(j) = 0.0;
            }
        }
        for (int j = 0; j < n_; ++j) cost_(j) = f_.c(j);

        LpStatus s = LpStatus::optimal;
        for (int round = 0; round < 5; ++round) {
            s = iterate(false);
            if (s != LpStatus::optimal) break;
            if (!refactor()) return fail(res, "singular basis during polish");
            if (primal_violation() > opt_.feasibility_tolerance) {
                s = LpStatus::numerical_failure;
                res.message = "basic solution drifted outside its bounds";
                continue;
            }
            if (!has_candidate()) {
                s = LpStatus::optimal;
                break;
            }
        }
        res.status = s;
        return finish(res);
    }

private:
    const StandardForm& f_;
    LpOptions opt_;
    int m_ = 0, n_ = 0, total_ = 0, max_iter_ = 0;
    std::vector<int> art_row_;
    std::vector<double> art_sign_;
    Eigen::VectorXd x_, lo_, up_, cost_;
    std::vector<int> head_, pos_;
    mutable Eigen::SparseLU<SparseMatrixD, Eigen::COLAMDOrdering<int>> lu_;
    std::vector<int> eta_row_;
    std::vector<Eigen::VectorXd> eta_col_;
    int iterations_ = 0, degenerate_run_ = 0;
    bool bland_ = false;

    template <class Fn>
    void for_column(int j, Fn&& fn) const {
        if (j < n_) {
            for (SparseMatrixD::InnerIterator it(f_.M, j); it; ++it) fn(static_cast<int>(it.row()), it.value());
        } else if (j < n_ + m_) {
            fn(j - n_, 1.0);
        } else {
            const auto k = static_cast<std::size_t>(j - n_ - m_);
            fn(art_row_[k], art_sign_[k]);
        }
    }

    double column_dot(int j, const Eigen::VectorXd& y) const {
        double s = 0.0;
        for_column(j, [&](int i, double v) { s += v * y(i); });
        return s;
    }

    void setup() {
        Eigen::VectorXd xs(n_);
        for (int j = 0; j < n_; ++j) {
            if (std::isfinite(f_.lo(j))) xs(j) = f_.lo(j);
            else if (std::isfinite(f_.up(j))) xs(j) = f_.up(j);
            else xs(j) = 0.0;
        }
        Eigen::VectorXd resid = f_.rhs - f_.M * xs;
        std::vector<double> slack_value(static_cast<std::size_t>(m_));
        for (int i = 0; i < m_; ++i) {
            const double v = resid(i);
            if (v < f_.slo(i) - opt_.feasibility_tolerance || v > f_.sup(i) + opt_.feasibility_tolerance) {
                const double bound = v > f_.sup(i) ? f_.sup(i) : f_.slo(i);
                slack_value[static_cast<std::size_t>(i)] = bound;
                art_row_.push_back(i);
                art_sign_.push_back(v - bound > 0 ? 1.0 : -1.0);
            } else {
                slack_value[static_cast<std::size_t>(i)] = std::clamp(v, f_.slo(i), f_.sup(i));
            }
        }
        const int na = static_cast<int>(art_row_.size());
        total_ = n_ + m_ + na;
        x_ = Eigen::VectorXd::Zero(total_);
        lo_.resize(total_);
        up_.resize(total_);
        cost_ = Eigen::VectorXd::Zero(total_);
        x_.head(n_) = xs;
        lo_.head(n_) = f_.lo;
        up_.head(n_) = f_.up;
        for (int i = 0; i < m_; ++i) x_(n_ + i) = slack_value[static_cast<std::size_t>(i)];
        lo_.segment(n_, m_) = f_.slo;
        up_.segment(n_, m_) = f_.sup;
        for (int k = 0; k < na; ++k) {
            lo_(n_ + m_ + k) = 0.0;
            up_(n_ + m_ + k) = kInf;
        }
        head_.assign(static_cast<std::size_t>(m_), -1);
        pos_.assign(static_cast<std::size_t>(total_), -1);
        for (int i = 0; i < m_; ++i) head_[static_cast<std::size_t>(i)] = n_ + i;
        for (int k = 0; k < na; ++k) head_[static_cast<std::size_t>(art_row_[static_cast<std::size_t>(k)])] = n_ + m_ + k;
        for (int i = 0; i < m_; ++i) pos_[static_cast<std::size_t>(head_[static_cast<std::size_t>(i)])] = i;
    }

    bool refactor() {
        eta_row_.clear();
        eta_col_.clear();
        if (m_ == 0) return true;
        std::vector<Eigen::Triplet<double>> trips;
        for (int i = 0; i < m_; ++i)
            for_column(head_[static_cast<std::size_t>(i)], [&](int r, double v) { trips.emplace_back(r, i, v); });
        SparseMatrixD B(m_, m_);
        B.setFromTriplets(trips.begin(), trips.end());
        B.makeCompressed();
        lu_.analyzePattern(B);
        lu_.factorize(B);
        if (lu_.info() != Eigen::Success) return false;
        Eigen::VectorXd v = f_.rhs;
        for (int j = 0; j < total_; ++j)
            if (pos_[static_cast<std::size_t>(j)] < 0 && x_(j) != 0.0) {
                const double xj = x_(j);
                for_column(j, [&](int r, double a) { v(r) -= a * xj; });
            }
        Eigen::VectorXd xb = ftran(v);
        for (int i = 0; i < m_; ++i) x_(head_[static_cast<std::size_t>(i)]) = xb(i);
        return true;
    }

    Eigen::VectorXd ftran(const Eigen::VectorXd& a) const {
        Eigen::VectorXd v = lu_.solve(a);
        for (std::size_t k = 0; k < eta_row_.size(); ++k) {
            const int r = eta_row_[k];
            const Eigen::VectorXd& alpha = eta_col_[k];
            const double vr = v(r) / alpha(r);
            v -= vr * alpha;
            v(r) = vr;
        }
        return v;
    }

    Eigen::VectorXd btran(Eigen::VectorXd c) const {
        for (std::size_t k = eta_row_.size(); k-- > 0;) {
            const int r = eta_row_[k];
            const Eigen::VectorXd& alpha = eta_col_[k];
            const double cr = c(r);
            c(r) = 0.0;
            c(r) = (cr - alpha.dot(c)) / alpha(r);
        }
        return lu_.transpose().solve(c);
    }

    Eigen::VectorXd duals() const {
        Eigen::VectorXd cb(m_);
        for (int i = 0; i < m_; ++i) cb(i) = cost_(head_[static_cast<std::size_t>(i)]);
        return m_ > 0 ? btran(cb) : Eigen::VectorXd();
    }

    // Direction in which nonbasic j improves the objective, or 0.
    int improving_direction(int j, double d) const {
        if (lo_(j) == up_(j)) return 0;
        const double tol = opt_.optimality_tolerance;
        const bool at_lo = std::isfinite(lo_(j)) && x_(j) <= lo_(j);
        const bool at_up = std::isfinite(up_(j)) && x_(j) >= up_(j);
        if (d < -tol && !at_up) return 1;
        if (d > tol && !at_lo) return -1;
        return 0;
    }

    bool has_candidate() const {
        Eigen::VectorXd y = duals();
        for (int j = 0; j < total_; ++j) {
            if (pos_[static_cast<std::size_t>(j)] >= 0) continue;
            const double d = cost_(j) - (m_ > 0 ? column_dot(j, y) : 0.0);
            if (improving_direction(j, d) != 0) return true;
        }
        return false;
    }

    double primal_violation() const {
        double worst = 0.0;
        for (int i = 0; i < m_; ++i) {
            const int j = head_[static_cast<std::size_t>(i)];
            worst = std::max({worst, lo_(j) - x_(j), x_(j) - up_(j)});
        }
        return worst;
    }

    LpStatus iterate(bool phase_one) {
        for (;;) {
            if (iterations_ >= max_iter_) return LpStatus::iteration_limit;
            Eigen::VectorXd y = duals();

            int q = -1, dir = 0;
            double best = 0.0;
            for (int j = 0; j < total_; ++j) {
                if (pos_[static_cast<std::size_t>(j)] >= 0) continue;
                const double d = cost_(j) - (m_ > 0 ? column_dot(j, y) : 0.0);
                const int s = improving_direction(j, d);
                if (s == 0) continue;
                if (bland_) {
                    q = j;
                    dir = s;
                    break;
                }
                if (std::abs(d) > best) {
                    best = std::abs(d);
                    q = j;
                    dir = s;
                }
            }
            if (q < 0) return LpStatus::optimal;
            ++iterations_;

            Eigen::VectorXd aq = Eigen::VectorXd::Zero(m_);
            for_column(q, [&](int r, double v) { aq(r) += v; });
            Eigen::VectorXd alpha = m_ > 0 ? ftran(aq) : Eigen::VectorXd();

            // Harris two-pass ratio test.
            double theta_max = kInf;
            for (int i = 0; i < m_; ++i) {
                const double delta = -dir * alpha(i);
                if (std::abs(alpha(i)) <= kPivotTolerance) continue;
                const int b = head_[static_cast<std::size_t>(i)];
                if (delta < 0 && std::isfinite(lo_(b)))
                    theta_max = std::min(theta_max, (x_(b) - lo_(b) + kHarrisTolerance) / -delta);
                else if (delta > 0 && std::isfinite(up_(b)))
                    theta_max = std::min(theta_max, (up_(b) - x_(b) + kHarrisTolerance) / delta);
            }
            const double range = up_(q) - lo_(q);
            if (std::isfinite(range) && range <= theta_max) {
                // Bound flip: no basis change.
                const double step = dir * range;
                x_(q) = dir > 0 ? up_(q) : lo_(q);
                for (int i = 0; i < m_; ++i) x_(head_[static_cast<std::size_t>(i)]) -= step * alpha(i);
                degenerate_run_ = 0;
                bland_ = false;
                continue;
            }
            if (!std::isfinite(theta_max)) return phase_one ? LpStatus::numerical_failure : LpStatus::unbounded;

            int leave = -1;
            double pivot = 0.0, theta = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double delta = -dir * alpha(i);
                if (std::abs(alpha(i)) <= kPivotTolerance) continue;
                const int b = head_[static_cast<std::size_t>(i)];
                double ratio;
                if (delta < 0 && std::isfinite(lo_(b)))
                    ratio = std::max(x_(b) - lo_(b), 0.0) / -delta;
                else if (delta > 0 && std::isfinite(up_(b)))
                    ratio = std::max(up_(b) - x_(b), 0.0) / delta;
                else
                    continue;
                if (ratio > theta_max) continue;
                const bool better = bland_ ? (leave < 0 || b < head_[static_cast<std::size_t>(leave)])
                                           : std::abs(alpha(i)) > pivot;
                if (better) {
                    leave = i;
                    pivot = std::abs(alpha(i));
                    theta = ratio;
                }
            }
            if (leave < 0) return LpStatus::numerical_failure;

            const int out = head_[static_cast<std::size_t>(leave)];
            const double out_delta = -dir * alpha(leave);
            x_(q) += dir * theta;
            for (int i = 0; i < m_; ++i) x_(head_[static_cast<std::size_t>(i)]) -= dir * theta * alpha(i);
            x_(out) = out_delta < 0 ? lo_(out) : up_(out);
            head_[static_cast<std::size_t>(leave)] = q;
            pos_[static_cast<std::size_t>(q)] = leave;
            pos_[static_cast<std::size_t>(out)] = -1;
            eta_row_.push_back(leave);
            eta_col_.push_back(std::move(alpha));

            if (theta <= 1e-12) {
                if (++degenerate_run_ > kDegenerateLimit) bland_ = true;
            } else {
                degenerate_run_ = 0;
                bland_ = false;
            }
            if (static_cast<int>(eta_row_.size()) >= opt_.refactor_interval && !refactor())
                return LpStatus::numerical_failure;
        }
    }

    SimplexResult& fail(SimplexResult& res, const std::string& why) {
        res.status = LpStatus::numerical_failure;
        res.message = why;
        res.iterations = iterations_;
        return res;
    }

    SimplexResult& finish(SimplexResult& res) {
        res.iterations = iterations_;
        res.z = x_.head(n_);
        res.y = m_ > 0 ? duals() : Eigen::VectorXd();
        res.r.resize(n_);
        for (int j = 0; j < n_; ++j) res.r(j) = f_.c(j) - (m_ > 0 ? column_dot(j, res.y) : 0.0);
        return res;
    }
};

}  // namespace

SimplexResult run_simplex(const StandardForm& form, const LpOptions& options) {
    Simplex s(form, options);
    return s.solve();
}

}  // namespace chpd::detail
