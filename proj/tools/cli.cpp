#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "chpd/dispatch.hpp"
#include "chpd/errors.hpp"
#include "chpd/report.hpp"
#include "chpd/validation.hpp"
#include "json.hpp"

namespace chpd::cli {

namespace fs = std::filesystem;

namespace {

struct RunConfig {
    std::string subcommand;
    std::string config;
    std::string mode = "box";
    std::optional<double> gamma;
    std::optional<int> horizon;
    std::optional<double> step;
    std::uint64_t seed = 1;
    int samples = 10000;
    std::string sampling = "uniform";
    std::string methods = "do,erd-box";
    std::optional<double> deadline;
    int traces = 0;
    std::string out;
};

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

SystemModel load_model(const RunConfig& rc) {
    if (rc.config.empty()) {
        ReferenceOptions opts;
        if (rc.horizon) opts.horizon = *rc.horizon;
        if (rc.step) opts.step_seconds = *rc.step;
        return build_reference_system(opts);
    }
    if (rc.horizon || rc.step) throw UsageError("--horizon and --step only apply to the built-in reference system");
    return load_system(rc.config);
}

std::string mode_method(const RunConfig& rc) {
    if (rc.mode == "do") return "do";
    if (rc.mode == "box") return "erd-box";
    std::ostringstream os;
    os << "erd-budget:" << *rc.gamma;
    return os.str();
}

void check_mode(const RunConfig& rc) {
    if (rc.mode == "budget" && !rc.gamma) throw UsageError("--mode budget requires --gamma");
    if (rc.mode != "budget" && rc.gamma && rc.sampling != "budget")
        throw UsageError("--gamma is only valid with --mode budget or --sampling budget");
    if (rc.gamma && *rc.gamma < 0) throw UsageError("--gamma must be non-negative");
}

void resolve_output(RunConfig& rc) {
    if (rc.out.empty()) {
        const char* env = std::getenv("CHPD_OUTPUT_DIR");
        rc.out = env && *env ? env : "chpd_out";
    }
}

struct Pipeline {
    SystemModel model;
    StateSpaceModel ssm;
    ConstraintFamily constraints;
    UncertaintyTube tube;
    FeedbackGain gain;
    CostModel costs;

    explicit Pipeline(const RunConfig& rc)
        : model(load_model(rc)),
          ssm(compile_state_space(model)),
          constraints(compile_constraints(model, ssm)),
          tube(compile_uncertainty_tube(model)),
          gain(choose_gain(ssm, model.feedback.gain.empty() ? GainMethod::zero : GainMethod::configured,
                           model.feedback)),
          costs(CostModel::from_system(model)) {}
};

void write(const fs::path& dir, const std::string& name, const std::string& content, std::ostream& out) {
    write_text_file(dir / name, content);
    out << "wrote " << (dir / name).string() << '\n';
}

int cmd_reference(const RunConfig& rc, std::ostream& out) {
    write(rc.out, "reference_system.json", to_document(load_model(rc)), out);
    return 0;
}

int cmd_tighten(const RunConfig& rc, std::ostream& out) {
    Pipeline p(rc);
    if (!p.gain.warning.empty()) out << "warning: " << p.gain.warning << '\n';
    TightenedSchedule s = schedule_for_method(mode_method(rc), p.ssm, p.constraints, p.tube, p.gain);
    out << "mode " << s.mode.describe() << ": " << s.rows_solved << " row reductions\n";
    write(rc.out, "schedule.csv", s.to_csv(), out);
    write(rc.out, "timings.json", nlohmann::ordered_json{{"tighten_seconds", s.seconds}}.dump(1), out);
    return 0;
}

DispatchSolution dispatch(const Pipeline& p, const RunConfig& rc) {
    TightenedSchedule s = schedule_for_method(mode_method(rc), p.ssm, p.constraints, p.tube, p.gain);
    return solve_dispatch(p.ssm, s, p.costs, p.tube.center);
}

int cmd_dispatch(const RunConfig& rc, std::ostream& out) {
    Pipeline p(rc);
    DispatchSolution sol = dispatch(p, rc);
    out << "status " << to_string(sol.status) << ", J = " << sol.objective << '\n';
    write(rc.out, "nominal.csv", sol.to_csv(p.ssm.manifest), out);
    write(rc.out, "summary.json", sol.summary_json(), out);
    write(rc.out, "bounds.csv", envelope_csv(p.ssm, sol), out);
    write(rc.out, "timings.json",
          nlohmann::ordered_json{{"tighten_seconds", sol.schedule.seconds},
                                 {"build_seconds", sol.build_seconds},
                                 {"solve_seconds", sol.solve_seconds}}
              .dump(1),
          out);
    return 0;
}

int cmd_validate(const RunConfig& rc, std::ostream& out) {
    Pipeline p(rc);
    DispatchSolution sol = dispatch(p, rc);
    ScenarioBatch batch = sample_disturbances(p.tube, rc.samples, rc.seed, parse_sampling_mode(rc.sampling),
                                              rc.gamma.value_or(0.0));
    Policy policy{sol, p.gain};
    Metrics m = evaluate(policy, p.ssm, p.constraints, p.costs, batch);
    out << "violation rate " << m.violation_rate << " over " << m.samples << " samples, J_nom = " << m.j_nom
        << ", J_exp = " << m.j_exp << '\n';
    write(rc.out, "metrics.csv", m.to_csv(), out);
    write(rc.out, "metrics.json", m.to_json(), out);
    write(rc.out, "envelope.csv", envelope_csv(p.ssm, sol, &m), out);
    for (int k = 0; k < std::min(rc.traces, batch.count()); ++k) {
        Eigen::MatrixXd w = batch.sample(k);
        write(rc.out, "traces/sample_" + std::to_string(k) + ".csv",
              trace_csv(p.ssm.manifest, simulate(policy, p.ssm, w), w), out);
    }
    return 0;
}

std::vector<std::string> split_methods(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    if (out.empty()) throw UsageError("--methods is empty");
    return out;
}

int cmd_compare(const RunConfig& rc, std::ostream& out) {
    BatchSpec spec;
    spec.count = rc.samples;
    spec.seed = rc.seed;
    spec.mode = parse_sampling_mode(rc.sampling);
    spec.budget = rc.gamma.value_or(0.0);
    CompareOptions opts;
    opts.iterative_deadline_seconds = rc.deadline;
    ComparisonReport report = compare_methods(load_model(rc), split_methods(rc.methods), spec, opts);
    out << report.to_table();
    write(rc.out, "comparison.json", report.to_json(), out);
    write(rc.out, "comparison.txt", report.to_table(), out);
    write(rc.out, "tradeoff.csv", tradeoff_csv(report), out);
    write(rc.out, "timings.json", report.timings_json(), out);
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Robust CHP dispatch: constraint tightening, nominal dispatch and Monte Carlo validation", "chpd"};
    app.require_subcommand(1, 1);
    RunConfig rc;

    auto common = [&](CLI::App* sub, bool with_mode) {
        sub->add_option("--config", rc.config, "System JSON file (default: built-in reference system)")
            ->check(CLI::ExistingFile);
        sub->add_option("--horizon", rc.horizon, "Reference-system horizon in steps")->check(CLI::PositiveNumber);
        sub->add_option("--step", rc.step, "Reference-system step length in seconds")->check(CLI::PositiveNumber);
        sub->add_option("--out", rc.out, "Output directory (default: $CHPD_OUTPUT_DIR or ./chpd_out)");
        if (with_mode) {
            sub->add_option("--mode", rc.mode, "do, box or budget")
                ->check(CLI::IsMember({"do", "box", "budget"}))
                ->capture_default_str();
            sub->add_option("--gamma", rc.gamma, "Uncertainty budget (with --mode budget)");
        }
    };
    auto sampling = [&](CLI::App* sub) {
        sub->add_option("--seed", rc.seed, "Random seed")->capture_default_str();
        sub->add_option("--samples", rc.samples, "Number of disturbance samples")
            ->check(CLI::PositiveNumber)
            ->capture_default_str();
        sub->add_option("--sampling", rc.sampling, "uniform, budget or vertex")
            ->check(CLI::IsMember({"uniform", "budget", "vertex"}))
            ->capture_default_str();
    };

    auto* ref = app.add_subcommand("reference", "Write the built-in reference system as JSON");
    common(ref, false);
    auto* tig = app.add_subcommand("tighten", "Compute the tightened constraint schedule");
    common(tig, true);
    auto* dis = app.add_subcommand("dispatch", "Solve the nominal dispatch under tightened constraints");
    common(dis, true);
    auto* val = app.add_subcommand("validate", "Monte Carlo validation of one dispatch policy");
    common(val, true);
    sampling(val);
    val->add_option("--traces", rc.traces, "Write closed-loop traces of the first N samples")
        ->check(CLI::NonNegativeNumber);
    auto* cmp = app.add_subcommand("compare", "Compare dispatch methods on one sample batch");
    common(cmp, false);
    sampling(cmp);
    cmp->add_option("--gamma", rc.gamma, "Budget used by --sampling budget");
    cmp->add_option("--methods", rc.methods, "Comma list of do, erd-box, erd-budget:<gamma>, erd-iterative-box")
        ->capture_default_str();
    cmp->add_option("--deadline", rc.deadline, "Wall-time limit for the iterative method in seconds")
        ->check(CLI::PositiveNumber);

    std::vector<std::string> args(argv.begin() + (argv.empty() ? 0 : 1), argv.end());
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        for (auto* sub : app.get_subcommands()) rc.subcommand = sub->get_name();
        if (rc.subcommand == "tighten" || rc.subcommand == "dispatch" || rc.subcommand == "validate")
            check_mode(rc);
        if (rc.sampling == "budget" && !rc.gamma) throw UsageError("--sampling budget requires --gamma");
        resolve_output(rc);
        if (rc.subcommand == "reference") return cmd_reference(rc, out);
        if (rc.subcommand == "tighten") return cmd_tighten(rc, out);
        if (rc.subcommand == "dispatch") return cmd_dispatch(rc, out);
        if (rc.subcommand == "validate") return cmd_validate(rc, out);
        return cmd_compare(rc, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << "\n" << app.help();
        return 2;
    } catch (const InfeasibleError& e) {
        err << "infeasible: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

int run(int argc, const char* const* argv) {
    return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace chpd::cli
