#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "acr/matrix.hpp"

namespace acr {

inline constexpr double kGradcheckTolerance = 1e-4;

struct GradcheckResult {
  std::string name;
  Index instances = 0;
  double max_error = 0;
};

/// Finite-difference checks of the registered compositions, each over
/// `instances` random shapes and values: gate pipeline, expert update,
/// classification, load balance, consistency, diversity, attribute head and
/// a full encoder layer.
std::vector<GradcheckResult> run_gradcheck_suite(Index instances = 20, std::uint64_t seed = 0);

}  // namespace acr
