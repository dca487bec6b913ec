#include "chpd/validation.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <thread>

#include "chpd/errors.hpp"
#include "json.hpp"

namespace chpd {

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::string to_string(SamplingMode mode) {
    switch (mode) {
        case SamplingMode::uniform: return "uniform";
        case SamplingMode::budget: return "budget";
        case SamplingMode::vertex: return "vertex";
    }
    return "uniform";
}

SamplingMode parse_sampling_mode(const std::string& text) {
    if (text == "uniform") return SamplingMode::uniform;
    if (text == "budget") return SamplingMode::budget;
    if (text == "vertex") return SamplingMode::vertex;
    throw Error("unknown sampling mode '" + text + "' (expected uniform, budget or vertex)");
}

// ---------------------------------------------------------------- sampling

ScenarioBatch::ScenarioBatch(UncertaintyTube tube, int count, std::uint64_t seed, SamplingMode mode, double budget)
    : tube_(std::move(tube)), count_(count), seed_(seed), mode_(mode), budget_(budget) {
    if (count < 1) throw Error("sample count must be at least 1");
    if (mode == SamplingMode::budget && !(budget >= 0.0)) throw Error("budget must be non-negative");
}

Eigen::MatrixXd ScenarioBatch::normalized(int k) const {
    const int nw = tube_.channels(), T = tube_.horizon();
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(k)};
    std::mt19937_64 rng(seq);
    Eigen::MatrixXd z(nw, T);
    if (mode_ == SamplingMode::vertex && k < 2) {
        z.setConstant(k == 0 ? 1.0 : -1.0);
        return z;
    }
    for (int j = 0; j < nw; ++j)
        for (int t = 0; t < T; ++t) {
            const double r = unit_draw(rng);
            z(j, t) = mode_ == SamplingMode::vertex ? (r < 0.5 ? -1.0 : 1.0) : 2.0 * r - 1.0;
        }
    if (mode_ == SamplingMode::budget)
        for (int j = 0; j < nw; ++j) {
            const double norm = z.row(j).lpNorm<1>();
            if (norm > budget_) z.row(j) *= budget_ / norm;
        }
    return z;
}

Eigen::MatrixXd ScenarioBatch::sample(int k) const {
    Eigen::MatrixXd mid = 0.5 * (tube_.lower + tube_.upper);
    Eigen::MatrixXd w = mid + tube_.half_width.cwiseProduct(normalized(k));
    // Keep exact centers on zero-width channels and clip rounding noise.
    return w.cwiseMax(tube_.lower).cwiseMin(tube_.upper);
}

ScenarioBatch sample_disturbances(const UncertaintyTube& tube, int count, std::uint64_t seed, SamplingMode mode,
                                  double budget) {
    return ScenarioBatch(tube, count, seed, mode, budget);
}

// ---------------------------------------------------------------- simulation

Trajectory simulate(const Policy& policy, const StateSpaceModel& ssm, const Eigen::MatrixXd& w) {
    const int T = ssm.horizon;
    const auto d = ssm.dims();
    if (w.rows() != d.n_w || w.cols() != T) throw Error("disturbance sequence must be n_w x T");
    Trajectory tr;
    tr.x.resize(d.n_x, T + 1);
    tr.u.resize(d.n_u, T);
    tr.x.col(0) = ssm.x0;
    const bool feedback = !policy.gain.is_zero();
    for (int t = 0; t < T; ++t) {
        tr.u.col(t) = feedback ? policy.control(t, tr.x.col(t)) : Eigen::VectorXd(policy.nominal.u.col(t));
        tr.x.col(t + 1) = ssm.A * tr.x.col(t) + ssm.B * tr.u.col(t) + ssm.D * w.col(t);
    }
    tr.y = ssm.outputs.evaluate(tr.u, w);
    return tr;
}

std::vector<std::string> violated_rows(const ConstraintFamily& c, const Trajectory& tr, double slack) {
    std::vector<std::string> out;
    const auto T = tr.u.cols();
    auto scan = [&](const PolyhedronH& p, const std::string& fam, const Eigen::MatrixXd& z, Eigen::Index first,
                    Eigen::Index last) {
        if (p.rows() == 0 || last < first) return;
        Eigen::MatrixXd lhs = p.S * z.middleCols(first, last - first + 1);
        for (int i = 0; i < p.rows(); ++i)
            if ((lhs.row(i).array() - p.r(i)).maxCoeff() > slack) out.push_back(fam + ":" + p.labels[static_cast<std::size_t>(i)]);
    };
    scan(c.x, "X", tr.x, 1, T);
    scan(c.u, "U", tr.u, 0, T - 1);
    scan(c.y, "Y", tr.y, 0, T - 1);
    if (T >= 2) {
        Eigen::MatrixXd du = tr.u.rightCols(T - 1) - tr.u.leftCols(T - 1);
        Eigen::MatrixXd dy = tr.y.rightCols(T - 1) - tr.y.leftCols(T - 1);
        scan(c.du, "DU", du, 0, T - 2);
        scan(c.dy, "DY", dy, 0, T - 2);
    }
    return out;
}

Metrics evaluate(const Policy& policy, const StateSpaceModel& ssm, const ConstraintFamily& constraints,
                 const CostModel& costs, const ScenarioBatch& batch) {
    const int n = batch.count();
    std::vector<double> cost(static_cast<std::size_t>(n));
    std::vector<std::vector<std::string>> violated(static_cast<std::size_t>(n));
    struct Envelope {
        Eigen::MatrixXd x_min, x_max, y_min, y_max;
        void add(const Trajectory& tr) {
            if (x_min.size() == 0) {
                x_min = x_max = tr.x;
                y_min = y_max = tr.y;
                return;
            }
            x_min = x_min.cwiseMin(tr.x);
            x_max = x_max.cwiseMax(tr.x);
            y_min = y_min.cwiseMin(tr.y);
            y_max = y_max.cwiseMax(tr.y);
        }
    };

    // Samples are independent. Per-sample results are reduced in sample
    // order afterwards, so the outcome does not depend on the worker count.
    const int workers = std::max(1, std::min<int>(static_cast<int>(std::thread::hardware_concurrency()), n / 64));
    std::vector<Envelope> env(static_cast<std::size_t>(workers));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    auto work = [&](int id) {
        try {
            for (int k = id; k < n; k += workers) {
                Trajectory tr = simulate(policy, ssm, batch.sample(k));
                violated[static_cast<std::size_t>(k)] = violated_rows(constraints, tr);
                cost[static_cast<std::size_t>(k)] = trajectory_cost(costs, ssm.manifest, tr.u, tr.y);
                env[static_cast<std::size_t>(id)].add(tr);
            }
        } catch (...) {
            errors[static_cast<std::size_t>(id)] = std::current_exception();
        }
    };
    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::thread> pool;
        for (int id = 0; id < workers; ++id) pool.emplace_back(work, id);
        for (auto& th : pool) th.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    Metrics m;
    m.samples = n;
    m.j_nom = policy.nominal.objective;
    m.j_max = -std::numeric_limits<double>::infinity();
    m.j_min = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (int k = 0; k < n; ++k) {
        const auto& rows = violated[static_cast<std::size_t>(k)];
        if (!rows.empty()) ++m.violating_samples;
        for (const auto& r : rows) ++m.histogram[r];
        const double j = cost[static_cast<std::size_t>(k)];
        sum += j;
        m.j_max = std::max(m.j_max, j);
        m.j_min = std::min(m.j_min, j);
    }
    Envelope all;
    for (const auto& e : env) {
        if (e.x_min.size() == 0) continue;
        if (all.x_min.size() == 0) {
            all = e;
            continue;
        }
        all.x_min = all.x_min.cwiseMin(e.x_min);
        all.x_max = all.x_max.cwiseMax(e.x_max);
        all.y_min = all.y_min.cwiseMin(e.y_min);
        all.y_max = all.y_max.cwiseMax(e.y_max);
    }
    m.x_min = std::move(all.x_min);
    m.x_max = std::move(all.x_max);
    m.y_min = std::move(all.y_min);
    m.y_max = std::move(all.y_max);
    m.j_exp = sum / n;
    m.violation_rate = static_cast<double>(m.violating_samples) / n;
    return m;
}

std::string Metrics::to_json() const {
    nlohmann::ordered_json j;
    j["samples"] = samples;
    j["violating_samples"] = violating_samples;
    j["violation_rate"] = violation_rate;
    j["J_nom"] = j_nom;
    j["J_exp"] = j_exp;
    j["J_min"] = j_min;
    j["J_max"] = j_max;
    j["histogram"] = histogram;
    return j.dump(1);
}

std::string Metrics::to_csv() const {
    std::ostringstream os;
    os << "metric,value,unit\n";
    os << "samples," << samples << ",count\n";
    os << "violating_samples," << violating_samples << ",count\n";
    os << "violation_rate," << fmt(violation_rate) << ",fraction\n";
    os << "J_nom," << fmt(j_nom) << ",$\n";
    os << "J_exp," << fmt(j_exp) << ",$\n";
    os << "J_min," << fmt(j_min) << ",$\n";
    os << "J_max," << fmt(j_max) << ",$\n";
    for (const auto& [row, count] : histogram) os << "violations[" << row << "]," << count << ",samples\n";
    return os.str();
}

// ---------------------------------------------------------------- comparison

TightenedSchedule schedule_for_method(const std::string& method, const StateSpaceModel& ssm,
                                      const ConstraintFamily& constraints, const UncertaintyTube& tube,
                                      const FeedbackGain& gain, const CompareOptions& options) {
    if (method == "do") return tighten(ssm, constraints, tube, gain, TightenMode::none());
    if (method == "erd-box") return tighten(ssm, constraints, tube, gain, TightenMode::box());
    if (method.rfind("erd-budget:", 0) == 0) {
        const std::string arg = method.substr(11);
        double g = 0.0;
        if (arg == "inf" || arg == "box") return tighten(ssm, constraints, tube, gain, TightenMode::box());
        try {
            std::size_t used = 0;
            g = std::stod(arg, &used);
            if (used != arg.size()) throw std::invalid_argument(arg);
        } catch (const std::exception&) {
            throw Error("bad budget in method '" + method + "'");
        }
        return tighten(ssm, constraints, tube, gain, TightenMode::with_budget(g));
    }
    if (method == "erd-iterative-box") {
        IterativeOptions io;
        if (options.iterative_deadline_seconds)
            io.deadline = std::chrono::duration<double>(*options.iterative_deadline_seconds);
        return tighten_iterative_lp(ssm, constraints, tube, gain, TightenMode::box(), io);
    }
    throw Error("unknown method '" + method + "' (expected do, erd-box, erd-budget:<gamma>, erd-iterative-box)");
}

ComparisonReport compare_methods(const SystemModel& model, const std::vector<std::string>& methods,
                                 const BatchSpec& spec, const CompareOptions& options) {
    StateSpaceModel ssm = compile_state_space(model);
    ConstraintFamily constraints = compile_constraints(model, ssm);
    UncertaintyTube tube = compile_uncertainty_tube(model);
    FeedbackGain gain = choose_gain(ssm, model.feedback.gain.empty() ? GainMethod::zero : GainMethod::configured,
                                    model.feedback);
    CostModel costs = CostModel::from_system(model);
    ScenarioBatch batch = sample_disturbances(tube, spec.count, spec.seed, spec.mode, spec.budget);

    ComparisonReport report;
    report.batch = spec;
    std::optional<TightenedSchedule> direct_box;
    for (const auto& method : methods) {
        MethodResult r;
        r.method = method;
        TightenedSchedule sched = schedule_for_method(method, ssm, constraints, tube, gain, options);
        r.tighten_seconds = sched.seconds;
        r.schedule_complete = sched.complete;
        if (method == "erd-box") direct_box = sched;
        if (method == "erd-iterative-box") {
            if (!direct_box) direct_box = tighten(ssm, constraints, tube, gain, TightenMode::box());
            if (sched.complete) r.schedule_difference = sched.max_difference(*direct_box);
            else throw Error("iterative tightening did not finish before its deadline");
        }
        DispatchSolution sol = solve_dispatch(ssm, sched, costs, tube.center);
        r.solve_seconds = sol.build_seconds + sol.solve_seconds;
        r.lp_variables = sol.lp_variables;
        r.lp_constraints = sol.lp_inequalities + sol.lp_equalities;
        Policy policy{std::move(sol), gain};
        r.metrics = evaluate(policy, ssm, constraints, costs, batch);
        report.results.push_back(std::move(r));
    }
    return report;
}

const MethodResult* ComparisonReport::find(const std::string& method) const {
    for (const auto& r : results)
        if (r.method == method) return &r;
    return nullptr;
}

std::string ComparisonReport::to_json() const {
    nlohmann::ordered_json j;
    j["batch"] = {{"samples", batch.count}, {"seed", batch.seed}, {"sampling", to_string(batch.mode)}, {"budget", batch.budget}};
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& r : results) {
        nlohmann::ordered_json m;
        m["method"] = r.method;
        m["violation_rate"] = r.metrics.violation_rate;
        m["J_nom"] = r.metrics.j_nom;
        m["J_exp"] = r.metrics.j_exp;
        m["J_min"] = r.metrics.j_min;
        m["J_max"] = r.metrics.j_max;
        m["lp_variables"] = r.lp_variables;
        m["lp_constraints"] = r.lp_constraints;
        if (r.schedule_difference) m["schedule_difference"] = *r.schedule_difference;
        m["histogram"] = r.metrics.histogram;
        j["methods"].push_back(m);
    }
    return j.dump(1);
}

std::string ComparisonReport::timings_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& r : results) j[r.method] = {{"tighten_seconds", r.tighten_seconds}, {"solve_seconds", r.solve_seconds}};
    return j.dump(1);
}

std::string ComparisonReport::to_table() const {
    std::ostringstream os;
    char line[256];
    std::snprintf(line, sizeof line, "%-20s %12s %12s %12s %12s %10s %8s %8s %11s %9s\n", "method", "J_nom", "J_exp",
                  "J_min", "J_max", "viol(%)", "vars", "rows", "tighten(s)", "solve(s)");
    os << line;
    for (const auto& r : results) {
        std::snprintf(line, sizeof line, "%-20s %12.2f %12.2f %12.2f %12.2f %10.2f %8d %8d %11.4f %9.4f\n",
                      r.method.c_str(), r.metrics.j_nom, r.metrics.j_exp, r.metrics.j_min, r.metrics.j_max,
                      100.0 * r.metrics.violation_rate, r.lp_variables, r.lp_constraints, r.tighten_seconds,
                      r.solve_seconds);
        os << line;
    }
    return os.str();
}

}  // namespace chpd
