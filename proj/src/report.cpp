#include "chpd/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "chpd/errors.hpp"

namespace chpd {

namespace {

std::string fmt(double v) {
    if (!std::isfinite(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct Bounds {
    double lo = -INFINITY, hi = INFINITY;
    double tlo = -INFINITY, thi = INFINITY;
};

// Single-variable rows of a family become per-variable bounds at step t.
void collect_bounds(const FamilySchedule& f, int t, std::vector<Bounds>& out) {
    for (int i = 0; i < f.rows.rows(); ++i) {
        Eigen::Index k = -1;
        int nnz = 0;
        for (Eigen::Index j = 0; j < f.rows.S.cols(); ++j)
            if (f.rows.S(i, j) != 0.0) {
                k = j;
                ++nnz;
            }
        if (nnz != 1) continue;
        const double s = f.rows.S(i, k);
        const double r = f.rows.r(i) / s;
        const double tr = f.active(t) ? f.tightened_rhs(i, t) / s : r;
        auto& b = out[static_cast<std::size_t>(k)];
        if (s > 0) {
            b.hi = std::min(b.hi, r);
            b.thi = std::min(b.thi, tr);
        } else {
            b.lo = std::max(b.lo, r);
            b.tlo = std::max(b.tlo, tr);
        }
    }
}

}  // namespace

std::string envelope_csv(const StateSpaceModel& ssm, const DispatchSolution& nominal, const Metrics* metrics) {
    std::ostringstream os;
    os << "step,variable,unit,nominal,original_lower,original_upper,tightened_lower,tightened_upper,envelope_min,"
          "envelope_max\n";
    const auto& sched = nominal.schedule;
    const auto& man = ssm.manifest;
    auto emit = [&](int t, const std::string& name, double value, const Bounds& b, double emin, double emax) {
        os << t << ',' << name << ',' << unit_of_label(name) << ',' << fmt(value) << ',' << fmt(b.lo) << ','
           << fmt(b.hi) << ',' << fmt(b.tlo) << ',' << fmt(b.thi) << ',' << fmt(emin) << ',' << fmt(emax) << '\n';
    };
    const int T = ssm.horizon;
    for (int t = 0; t <= T; ++t) {
        std::vector<Bounds> xb(static_cast<std::size_t>(ssm.dims().n_x));
        collect_bounds(sched.x, t, xb);
        for (std::size_t k = 0; k < xb.size(); ++k) {
            if (!std::isfinite(xb[k].lo) && !std::isfinite(xb[k].hi)) continue;
            const auto i = static_cast<Eigen::Index>(k);
            emit(t, man.x[k], nominal.x(i, t), xb[k], metrics ? metrics->x_min(i, t) : NAN,
                 metrics ? metrics->x_max(i, t) : NAN);
        }
        if (t == T) break;
        std::vector<Bounds> yb(static_cast<std::size_t>(ssm.dims().n_y));
        collect_bounds(sched.y, t, yb);
        for (std::size_t k = 0; k < yb.size(); ++k) {
            if (!std::isfinite(yb[k].lo) && !std::isfinite(yb[k].hi)) continue;
            const auto i = static_cast<Eigen::Index>(k);
            emit(t, man.y[k], nominal.y(i, t), yb[k], metrics ? metrics->y_min(i, t) : NAN,
                 metrics ? metrics->y_max(i, t) : NAN);
        }
    }
    return os.str();
}

std::string trace_csv(const VariableManifest& man, const Trajectory& tr, const Eigen::MatrixXd& w) {
    std::ostringstream os;
    os << "step";
    for (const auto* names : {&man.x, &man.u, &man.y, &man.w})
        for (const auto& n : *names) os << ',' << n << " [" << unit_of_label(n) << ']';
    os << '\n';
    const auto T = tr.u.cols();
    for (Eigen::Index t = 0; t <= T; ++t) {
        os << t;
        for (Eigen::Index i = 0; i < tr.x.rows(); ++i) os << ',' << fmt(tr.x(i, t));
        for (const Eigen::MatrixXd* m : {&tr.u, &tr.y, &w})
            for (Eigen::Index i = 0; i < m->rows(); ++i) os << ',' << (t < T ? fmt((*m)(i, t)) : "");
        os << '\n';
    }
    return os.str();
}

std::string tradeoff_csv(const ComparisonReport& report) {
    std::ostringstream os;
    os << "method,budget [channels],J_nom [$],J_exp [$],J_min [$],J_max [$],violation_rate [fraction]\n";
    for (const auto& r : report.results) {
        std::string budget;
        if (r.method == "do") budget = "0";
        else if (r.method.rfind("erd-budget:", 0) == 0) budget = r.method.substr(11);
        else budget = "inf";
        os << r.method << ',' << budget << ',' << fmt(r.metrics.j_nom) << ',' << fmt(r.metrics.j_exp) << ','
           << fmt(r.metrics.j_min) << ',' << fmt(r.metrics.j_max) << ',' << fmt(r.metrics.violation_rate) << '\n';
    }
    return os.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw Error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open " + path.string() + " for writing");
    out << content;
    if (!out) throw Error("failed writing " + path.string());
}

}  // namespace chpd
