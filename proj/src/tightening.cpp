#include "chpd/tightening.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "chpd/errors.hpp"

namespace chpd {

// ---------------------------------------------------------------- gains

namespace {

double spectral_radius(const Eigen::MatrixXd& m) {
    if (m.rows() == 0) return 0.0;
    Eigen::EigenSolver<Eigen::MatrixXd> es(m, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

FeedbackGain make_gain(const StateSpaceModel& ssm, const Eigen::MatrixXd& K, double radius_cap) {
    const auto d = ssm.dims();
    if (K.rows() != d.n_u || K.cols() != d.n_x)
        throw ConfigError("policy.gain", "gain must be " + std::to_string(d.n_u) + "x" + std::to_string(d.n_x));
    if (!K.allFinite()) throw ConfigError("policy.gain", "gain has non-finite entries");
    FeedbackGain g;
    g.K = K;
    g.Phi = ssm.A + ssm.B * K;
    g.spectral_radius = spectral_radius(g.Phi);
    if (g.spectral_radius > radius_cap)
        throw StructuralError("closed-loop spectral radius " + std::to_string(g.spectral_radius) +
                              " exceeds the cap " + std::to_string(radius_cap));
    if (g.spectral_radius > 1.0 + 1e-9)
        g.warning = "closed-loop spectral radius " + std::to_string(g.spectral_radius) +
                    " exceeds one; deviations grow over the horizon";
    return g;
}

FeedbackGain zero_gain(const StateSpaceModel& ssm) {
    const auto d = ssm.dims();
    return make_gain(ssm, Eigen::MatrixXd::Zero(d.n_u, d.n_x), std::numeric_limits<double>::infinity());
}

// ---------------------------------------------------------------- reachable sets

ReachableSets reachable_sets(const StateSpaceModel& ssm, const UncertaintyTube& tube, const FeedbackGain& gain) {
    const int T = tube.horizon();
    if (tube.channels() != ssm.dims().n_w) throw Error("tube channel count does not match the model");
    ReachableSets rs;
    rs.horizon = T;
    rs.dev_lower = tube.lower - tube.center;
    rs.dev_upper = tube.upper - tube.center;
    rs.maps.reserve(static_cast<std::size_t>(T));
    Eigen::MatrixXd m = ssm.D;
    for (int k = 0; k < T; ++k) {
        if (!m.allFinite()) throw StructuralError("reachable set overflow at step " + std::to_string(k + 1));
        rs.maps.push_back(m);
        m = gain.Phi * m;
    }
    return rs;
}

double ReachableSets::support(int t, const Eigen::VectorXd& c) const {
    double total = 0.0;
    for (int i = 0; i < t; ++i) {
        Eigen::VectorXd g = maps[static_cast<std::size_t>(t - 1 - i)].transpose() * c;
        for (Eigen::Index j = 0; j < g.size(); ++j) total += std::max(g(j) * dev_lower(j, i), g(j) * dev_upper(j, i));
    }
    return total;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> ReachableSets::hull(int t) const {
    const auto n = maps.empty() ? Eigen::Index{0} : maps.front().rows();
    Eigen::VectorXd lo(n), hi(n);
    for (Eigen::Index k = 0; k < n; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Unit(n, k);
        hi(k) = support(t, e);
        lo(k) = -support(t, -e);
    }
    return {lo, hi};
}

// ---------------------------------------------------------------- supports

double support_box(const Eigen::VectorXd& v) { return v.lpNorm<1>(); }

double support_box(const Eigen::VectorXd& v, const Eigen::VectorXd& varpi, OffsetConvention convention) {
    const double offset = v.dot(varpi);
    return v.lpNorm<1>() + (convention == OffsetConvention::deviation ? offset : -offset);
}

double gamma(const Eigen::VectorXd& v, double budget) {
    if (!(budget >= 0.0)) throw Error("budget must be non-negative");
    // Every entry can be extreme: identical to the box support, bit for bit.
    if (budget >= static_cast<double>(v.size())) return support_box(v);
    std::vector<double> mags(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) mags[static_cast<std::size_t>(i)] = std::abs(v(i));
    std::stable_sort(mags.begin(), mags.end(), std::greater<>());
    const double whole = std::floor(budget);
    double total = 0.0;
    std::size_t k = 0;
    for (; k < mags.size() && static_cast<double>(k) < whole; ++k) total += mags[k];
    if (k < mags.size()) total += (budget - whole) * mags[k];
    return total;
}

std::string TightenMode::describe() const {
    switch (kind) {
        case TightenKind::none: return "none";
        case TightenKind::box: return "box";
        case TightenKind::budget: {
            std::ostringstream os;
            os << "budget:" << budget;
            return os.str();
        }
    }
    return "?";
}

// ---------------------------------------------------------------- functionals

namespace detail {

DeviationFunctional::DeviationFunctional(int nx, int nw, int sigma_hi, int tau_lo, int tau_hi)
    : n_x(nx), n_w(nw), a_hi(sigma_hi), b_lo(tau_lo), b_hi(tau_hi) {
    a = Eigen::MatrixXd::Zero(nx, std::max(sigma_hi + 1, 0));
    b = Eigen::MatrixXd::Zero(nw, std::max(tau_hi - tau_lo + 1, 0));
}

void DeviationFunctional::add_state(int sigma, const Eigen::RowVectorXd& row) {
    if (sigma <= 0) return;  // x_dot(0) = 0
    a.col(sigma) += row.transpose();
}

void DeviationFunctional::add_disturbance(int tau, const Eigen::RowVectorXd& row) {
    b.col(tau - b_lo) += row.transpose();
}

bool DeviationFunctional::empty() const { return a.isZero(0.0) && b.isZero(0.0); }

namespace {

void add_output_terms(DeviationFunctional& f, const StateSpaceModel& ssm, const FeedbackGain& gain,
                      const Eigen::VectorXd& s, int t, double sign) {
    const auto& out = ssm.outputs;
    const bool feedback = !gain.is_zero();
    if (feedback) {
        Eigen::RowVectorXd sck = s.transpose() * out.C * gain.K;
        if (!sck.isZero(0.0)) f.add_state(t, sign * sck);
    }
    f.add_disturbance(t, sign * (s.transpose() * out.E));
    if (!out.has_memory()) return;
    Eigen::VectorXd sm(static_cast<Eigen::Index>(out.memory_rows.size()));
    for (std::size_t i = 0; i < out.memory_rows.size(); ++i) sm(static_cast<Eigen::Index>(i)) = s(out.memory_rows[i]);
    if (sm.isZero(0.0)) return;
    const int nz = out.memory_inputs();
    const Eigen::RowVectorXd weights = sm.transpose() * out.kernel[static_cast<std::size_t>(t)];
    // Column sigma of `blocks` weighs z(sigma).
    Eigen::Map<const Eigen::MatrixXd> blocks(weights.data(), nz, t + 1);
    f.b.middleCols(-f.b_lo, t + 1) += sign * (out.input_w.transpose() * blocks);
    if (feedback && out.input_u.nonZeros() > 0)
        f.a.leftCols(t + 1) += sign * (gain.K.transpose() * (out.input_u.transpose() * blocks));
}

}  // namespace

DeviationFunctional row_functional(const StateSpaceModel& ssm, const FeedbackGain& gain, const std::string& family,
                                   const Eigen::VectorXd& s, int t) {
    const auto d = ssm.dims();
    bool memory = false;
    if (family == "Y" || family == "DY")
        for (int r : ssm.outputs.memory_rows) memory = memory || s(r) != 0.0;
    if (family == "X") {
        DeviationFunctional f(d.n_x, d.n_w, t, 0, -1);
        f.add_state(t, s.transpose());
        return f;
    }
    if (family == "U") {
        DeviationFunctional f(d.n_x, d.n_w, t, 0, -1);
        if (!gain.is_zero()) f.add_state(t, s.transpose() * gain.K);
        return f;
    }
    if (family == "DU") {
        DeviationFunctional f(d.n_x, d.n_w, t, 0, -1);
        if (!gain.is_zero()) {
            Eigen::RowVectorXd sk = s.transpose() * gain.K;
            f.add_state(t, sk);
            f.add_state(t - 1, -sk);
        }
        return f;
    }
    if (family == "Y") {
        DeviationFunctional f(d.n_x, d.n_w, t, memory ? 0 : t, t);
        add_output_terms(f, ssm, gain, s, t, 1.0);
        return f;
    }
    if (family == "DY") {
        DeviationFunctional f(d.n_x, d.n_w, t, memory ? 0 : t - 1, t);
        add_output_terms(f, ssm, gain, s, t, 1.0);
        add_output_terms(f, ssm, gain, s, t - 1, -1.0);
        return f;
    }
    throw Error("unknown constraint family " + family);
}

Eigen::MatrixXd resolve(const DeviationFunctional& f, const Eigen::MatrixXd& Phi, const Eigen::MatrixXd& D,
                        int& first) {
    int a_last = -1;
    for (int sigma = f.a_hi; sigma >= 1; --sigma)
        if (!f.a.col(sigma).isZero(0.0)) {
            a_last = sigma;
            break;
        }
    const bool has_b = f.b.cols() > 0;
    int lo = has_b ? f.b_lo : 0;
    int hi = has_b ? f.b_hi : -1;
    if (a_last >= 1) {
        lo = 0;
        hi = std::max(hi, a_last - 1);
    }
    first = lo;
    Eigen::MatrixXd v = Eigen::MatrixXd::Zero(f.n_w, std::max(hi - lo + 1, 0));
    if (has_b) v.middleCols(f.b_lo - lo, f.b.cols()) = f.b;
    if (a_last >= 1) {
        Eigen::RowVectorXd g = Eigen::RowVectorXd::Zero(f.n_x);
        for (int tau = a_last - 1; tau >= 0; --tau) {
            g = f.a.col(tau + 1).transpose() + g * Phi;
            v.col(tau - lo) += (g * D).transpose();
        }
    }
    return v;
}

}  // namespace detail

// ---------------------------------------------------------------- schedules

namespace {

struct FamilySpec {
    std::string name;
    const PolyhedronH* rows;
    int columns, first, last;
};

std::vector<FamilySpec> family_specs(const ConstraintFamily& c, int T) {
    return {{"X", &c.x, T + 1, 1, T},
            {"U", &c.u, T, 0, T - 1},
            {"Y", &c.y, T, 0, T - 1},
            {"DU", &c.du, T, 1, T - 1},
            {"DY", &c.dy, T, 1, T - 1}};
}

FamilySchedule blank(const FamilySpec& spec) {
    FamilySchedule f;
    f.family = spec.name;
    f.rows = *spec.rows;
    f.reduction = Eigen::MatrixXd::Zero(spec.rows->rows(), spec.columns);
    f.first_step = spec.first;
    f.last_step = spec.last;
    return f;
}

FamilySchedule& slot(TightenedSchedule& s, const std::string& name) {
    if (name == "X") return s.x;
    if (name == "U") return s.u;
    if (name == "Y") return s.y;
    if (name == "DU") return s.du;
    return s.dy;
}

// Norm and offset parts of the worst case of phi^T w_dot.
std::pair<double, double> worst_case(const Eigen::MatrixXd& phi, int first, const UncertaintyTube& tube,
                                     const TightenMode& mode) {
    double norm = 0.0, offset = 0.0;
    const auto cols = phi.cols();
    Eigen::VectorXd v(cols);
    for (Eigen::Index j = 0; j < phi.rows(); ++j) {
        bool any = false;
        for (Eigen::Index k = 0; k < cols; ++k) {
            v(k) = phi(j, k) * tube.half_width(j, first + k);
            any = any || v(k) != 0.0;
        }
        if (!any) continue;
        offset += v.dot(tube.offset.row(j).segment(first, cols));
        norm += mode.kind == TightenKind::budget ? gamma(v, mode.budget) : v.lpNorm<1>();
    }
    return {norm, offset};
}

std::vector<int> pair_rows(const PolyhedronH& p) {
    std::vector<int> partner(static_cast<std::size_t>(p.rows()), -1);
    for (int i = 0; i < p.rows(); ++i)
        if (partner[static_cast<std::size_t>(i)] < 0) {
            int j = p.opposite_of(i);
            if (j >= 0 && partner[static_cast<std::size_t>(j)] < 0) {
                partner[static_cast<std::size_t>(i)] = j;
                partner[static_cast<std::size_t>(j)] = i;
            }
        }
    return partner;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

TightenedSchedule untightened(const StateSpaceModel& ssm, const ConstraintFamily& constraints) {
    TightenedSchedule s;
    s.mode = TightenMode::none();
    for (const auto& spec : family_specs(constraints, ssm.horizon)) slot(s, spec.name) = blank(spec);
    return s;
}

TightenedSchedule tighten(const StateSpaceModel& ssm, const ConstraintFamily& constraints, const UncertaintyTube& tube,
                          const FeedbackGain& gain, const TightenMode& mode, const TightenOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    const int T = ssm.horizon;
    if (tube.horizon() != T || tube.channels() != ssm.dims().n_w)
        throw Error("tube shape does not match the state-space model");
    if (mode.kind == TightenKind::budget && !(mode.budget >= 0.0)) throw Error("budget must be non-negative");
    TightenedSchedule sched = untightened(ssm, constraints);
    sched.mode = mode;
    if (mode.kind == TightenKind::none) return sched;
    const double sign = tube.convention == OffsetConvention::deviation ? 1.0 : -1.0;

    for (const auto& spec : family_specs(constraints, T)) {
        FamilySchedule& fam = slot(sched, spec.name);
        const PolyhedronH& p = *spec.rows;
        const std::vector<int> partner = pair_rows(p);
        for (int i = 0; i < p.rows(); ++i) {
            const int j = partner[static_cast<std::size_t>(i)];
            if (j >= 0 && j < i) continue;
            const Eigen::VectorXd s = p.S.row(i).transpose();
            for (int t = spec.first; t <= spec.last; ++t) {
                auto f = detail::row_functional(ssm, gain, spec.name, s, t);
                int first = 0;
                Eigen::MatrixXd phi = detail::resolve(f, gain.Phi, ssm.D, first);
                auto [norm, offset] = worst_case(phi, first, tube, mode);
                fam.reduction(i, t) = norm + sign * offset;
                sched.rows_solved++;
                if (j < 0) continue;
                fam.reduction(j, t) = norm - sign * offset;
                sched.rows_solved++;
                const double room = fam.tightened_rhs(i, t) + fam.tightened_rhs(j, t);
                if (room < -options.empty_tolerance) {
                    sched.complete = sched.complete && !options.throw_on_empty;
                    if (options.throw_on_empty)
                        throw InfeasibleError("tightened " + spec.name + " set is empty at step " + std::to_string(t) +
                                              ": rows " + p.labels[static_cast<std::size_t>(i)] + " and " +
                                              p.labels[static_cast<std::size_t>(j)] + " overlap by " + fmt(-room));
                }
            }
        }
    }
    sched.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return sched;
}

double TightenedSchedule::max_difference(const TightenedSchedule& other) const {
    double worst = 0.0;
    auto mine = families();
    auto theirs = other.families();
    for (std::size_t k = 0; k < mine.size(); ++k) {
        const auto& a = *mine[k];
        const auto& b = *theirs[k];
        if (a.reduction.rows() != b.reduction.rows() || a.reduction.cols() != b.reduction.cols())
            return std::numeric_limits<double>::infinity();
        if (a.reduction.size() > 0) worst = std::max(worst, (a.reduction - b.reduction).cwiseAbs().maxCoeff());
    }
    return worst;
}

std::string unit_of_label(const std::string& label) {
    std::string name = label;
    if (!name.empty() && name[0] == 'd') name.erase(0, 1);
    const bool ramp = label.size() > 0 && label[0] == 'd';
    std::string unit = "pu";
    if (name.rfind("E_", 0) == 0) unit = "fraction";
    else if (name.rfind("H_", 0) == 0) unit = "MW";
    else if (name.rfind("T_s", 0) == 0 || name.rfind("T_r", 0) == 0) unit = "degC";
    return ramp ? unit + "/step" : unit;
}

std::string TightenedSchedule::to_csv() const {
    std::ostringstream os;
    os << "family,step,row,unit,original_rhs,reduction,tightened_rhs\n";
    for (const FamilySchedule* f : families())
        for (int t = f->first_step; t <= f->last_step; ++t)
            for (int i = 0; i < f->rows.rows(); ++i) {
                const auto& label = f->rows.labels[static_cast<std::size_t>(i)];
                os << f->family << ',' << t << ',' << label << ',' << unit_of_label(label) << ','
                   << fmt(f->rows.r(i)) << ',' << fmt(f->reduction(i, t)) << ',' << fmt(f->tightened_rhs(i, t))
                   << '\n';
            }
    return os.str();
}

}  // namespace chpd
