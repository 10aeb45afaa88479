#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "myolo/rng.hpp"
#include "myolo/tape.hpp"

namespace myolo::gradcheck {

inline constexpr double kDefaultStep = 1e-5;
inline constexpr double kDefaultTolerance = 1e-4;
/// Denominator floor of the relative error; below it the error is
/// effectively absolute.
inline constexpr double kDefaultFloor = 1e-6;

/// One differentiable computation: every input gets an analytic gradient
/// compared against central differences.
struct Problem {
  std::string description;
  std::vector<Tensor> inputs;
  std::function<Var(std::span<const Var>)> build;
};

struct Options {
  std::uint64_t seed = 42;
  std::size_t trials = 4;  // random configurations per case
  double step = kDefaultStep;
  double tolerance = kDefaultTolerance;
  double floor = kDefaultFloor;
  /// Only run cases whose name is listed; all when empty.
  std::vector<std::string> cases;
  /// Test hook: scale the analytic gradient of this case by (1 + 1e-2).
  std::string corrupt;
};

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Largest relative error over all inputs of `problem`. The scalar loss is
/// sum(output * weights) with weights drawn from `rng`.
double check(const Problem& problem, Rng& rng, double step, double floor,
             double corrupt_scale = 1.0);

struct CaseResult {
  std::string name;
  std::size_t configurations = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct Report {
  std::vector<CaseResult> cases;
  double tolerance = kDefaultTolerance;
  bool passed() const;
  std::size_t configurations() const;
};

/// Names of all registered cases, in run order.
std::vector<std::string> case_names();

/// Draws a random small configuration of the named case.
Problem make_problem(const std::string& name, Rng& rng);

Report run(const Options& options);

}  // namespace myolo::gradcheck
