#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace gal {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t elements = 0;
  std::size_t refined = 0;
  double seconds = 0.0;
};

/// Central-difference check (double, step 1e-5) of every differentiable op on
/// small random inputs, then of forward + training loss for all six models on
/// 16x16 miniatures. `on_entry` sees each result as soon as it is ready.
std::vector<GradCheckEntry> run_gradcheck_suite(std::uint64_t seed,
                                                const std::function<void(const GradCheckEntry&)>& on_entry = {});

inline constexpr double kGradCheckTolerance = 1e-4;

}  // namespace gal
