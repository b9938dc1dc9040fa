#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rehabllm/gateway.hpp"
#include "rehabllm/geometry.hpp"
#include "rehabllm/random.hpp"
#include "rehabllm/skeleton.hpp"

namespace rehab {

// Synthetic skeletons for tests and demos. Body coordinates are built with
// x to the subject's left, y up and z forward, then rotated so y lands on
// the skeleton's up axis.

/// Neutral standing pose, one position per joint. Throws ConfigError when a
/// joint name is not one of the builtin layouts.
std::vector<Vec3> standing_pose(const SkeletonSpec& spec);

/// Standing pose with smooth independent wobble on every joint.
RepetitionSample random_motion_sample(const SkeletonSpec& spec, Rng& rng, std::size_t frames);

/// Exercises with a parametric generator: "m01" (deep squat) and "m07"
/// (shoulder abduction), both on the UI-PRMD layout.
std::vector<std::string> synthetic_exercise_ids();

/// Balanced correct/incorrect repetitions whose first feature separates the
/// classes with a wide margin around synthetic_oracle's threshold.
GenericDataset synthesize_exercise(std::string_view exercise_id, std::size_t repetitions, std::uint64_t seed,
                                   std::size_t subjects = 8);

/// Threshold rule on the mean of the first feature that reproduces the
/// generator's labels.
OracleConfig synthetic_oracle(std::string_view exercise_id);

}  // namespace rehab
