#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fusenet/autograd.hpp"
#include "fusenet/rng.hpp"

namespace fusenet::verify {

/// One randomized instance: the leaves to differentiate and a closure that
/// rebuilds the output from their current values.
struct GradcheckInstance {
  std::vector<std::pair<std::string, nd::Var<double>>> inputs;
  std::function<nd::Var<double>()> forward;
};

struct GradcheckCase {
  std::string name;
  double threshold = 1e-4;
  std::function<GradcheckInstance(Rng&)> make;
};

struct GradcheckOptions {
  double step = 1e-6;
  /// Denominator floor in |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
  int seeds = 20;
  std::uint64_t base_seed = 1;
  /// Entries probed per input tensor; larger tensors are subsampled.
  std::size_t max_entries = 256;
};

struct GradcheckResult {
  std::string op;
  double max_rel_error = 0;
  double threshold = 0;
  int seeds = 0;
  std::size_t probes = 0;
  std::string worst_input;  // input name at the maximum
  double seconds = 0;

  bool passed() const { return max_rel_error < threshold; }
};

/// Scalar objective sum(w * y) with fixed random w, so no gradient is
/// identically zero after normalization layers.
GradcheckResult run_case(const GradcheckCase& c, const GradcheckOptions& opt = {});

/// Every differentiable op, the three losses, and one full fuse block.
std::vector<GradcheckCase> default_cases();

std::vector<GradcheckResult> run_cases(const std::vector<GradcheckCase>& cases, const GradcheckOptions& opt = {});

/// Fixed-width table with one line per op and a PASS/FAIL column.
std::string format_results(const std::vector<GradcheckResult>& results);

}  // namespace fusenet::verify
