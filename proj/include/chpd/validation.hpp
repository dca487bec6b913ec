#pragma once

// Monte Carlo evaluation of dispatch policies and method comparison.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chpd/dispatch.hpp"

namespace chpd {

enum class SamplingMode { uniform, budget, vertex };

std::string to_string(SamplingMode mode);
SamplingMode parse_sampling_mode(const std::string& text);

/// Disturbance scenarios drawn from a tube. Samples are generated on
/// demand; sample k depends only on (seed, mode, k).
class ScenarioBatch {
public:
    ScenarioBatch(UncertaintyTube tube, int count, std::uint64_t seed, SamplingMode mode, double budget = 0.0);

    int count() const { return count_; }
    std::uint64_t seed() const { return seed_; }
    SamplingMode mode() const { return mode_; }
    double budget() const { return budget_; }
    const UncertaintyTube& tube() const { return tube_; }

    /// Normalized deviation in [-1, 1], n_w x T.
    Eigen::MatrixXd normalized(int k) const;
    /// Disturbance sequence w(0..T-1), n_w x T.
    Eigen::MatrixXd sample(int k) const;

private:
    UncertaintyTube tube_;
    int count_;
    std::uint64_t seed_;
    SamplingMode mode_;
    double budget_;
};

ScenarioBatch sample_disturbances(const UncertaintyTube& tube, int count, std::uint64_t seed, SamplingMode mode,
                                  double budget = 0.0);

struct Trajectory {
    Eigen::MatrixXd x;  // n_x x (T+1)
    Eigen::MatrixXd u;  // n_u x T
    Eigen::MatrixXd y;  // n_y x T
};

Trajectory simulate(const Policy& policy, const StateSpaceModel& ssm, const Eigen::MatrixXd& w);

/// Rows of the original constraints violated by more than `slack`, as
/// "family:label" strings (each row at most once).
std::vector<std::string> violated_rows(const ConstraintFamily& constraints, const Trajectory& traj,
                                       double slack = 1e-9);

struct Metrics {
    int samples = 0;
    int violating_samples = 0;
    double violation_rate = 0.0;
    double j_nom = 0.0, j_exp = 0.0, j_max = 0.0, j_min = 0.0;
    std::map<std::string, int> histogram;  // row -> samples violating it
    Eigen::MatrixXd y_min, y_max, x_min, x_max;  // envelopes over samples

    std::string to_json() const;
    /// Columns: metric, value, unit.
    std::string to_csv() const;
};

Metrics evaluate(const Policy& policy, const StateSpaceModel& ssm, const ConstraintFamily& constraints,
                 const CostModel& costs, const ScenarioBatch& batch);

struct BatchSpec {
    int count = 10000;
    std::uint64_t seed = 1;
    SamplingMode mode = SamplingMode::uniform;
    double budget = 0.0;  // used by budget sampling
};

struct CompareOptions {
    std::optional<double> iterative_deadline_seconds;
};

struct MethodResult {
    std::string method;
    Metrics metrics;
    double tighten_seconds = 0.0;
    double solve_seconds = 0.0;
    int lp_variables = 0, lp_constraints = 0;
    bool schedule_complete = true;
    std::optional<double> schedule_difference;  // vs direct box, iterative only
};

struct ComparisonReport {
    std::vector<MethodResult> results;
    BatchSpec batch;

    const MethodResult* find(const std::string& method) const;
    /// Deterministic part (no wall-clock timings).
    std::string to_json() const;
    std::string timings_json() const;
    std::string to_table() const;
};

/// Methods: "do", "erd-box", "erd-budget:<gamma>", "erd-iterative-box".
ComparisonReport compare_methods(const SystemModel& model, const std::vector<std::string>& methods,
                                 const BatchSpec& batch, const CompareOptions& options = {});

/// Builds the tightened schedule of a method name.
TightenedSchedule schedule_for_method(const std::string& method, const StateSpaceModel& ssm,
                                      const ConstraintFamily& constraints, const UncertaintyTube& tube,
                                      const FeedbackGain& gain, const CompareOptions& options = {});

}  // namespace chpd
