#pragma once

// Plot-ready CSV emission and file helpers.

#include <filesystem>
#include <string>

#include "chpd/validation.hpp"

namespace chpd {

/// One line per (step, bounded x or y variable): nominal value, original
/// and tightened bounds, and the sample envelope when `metrics` is given.
std::string envelope_csv(const StateSpaceModel& ssm, const DispatchSolution& nominal, const Metrics* metrics = nullptr);

/// Closed-loop trace of one sample: step, x, u, y and w columns with units.
std::string trace_csv(const VariableManifest& manifest, const Trajectory& trajectory, const Eigen::MatrixXd& w);

/// Budget / cost / violation table, one line per method.
std::string tradeoff_csv(const ComparisonReport& report);

/// Writes `content` to `path`, creating parent directories. Throws Error on I/O failure.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace chpd
