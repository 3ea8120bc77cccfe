#pragma once

#include <array>
#include <string>
#include <vector>

#include "swarmtax/sim.hpp"

namespace swarmtax {

inline constexpr std::size_t kBehaviorDims = 5;

struct BehaviorVector {
    std::array<double, kBehaviorDims> values{};
    std::string mapping_id;

    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }

    friend bool operator==(const BehaviorVector&, const BehaviorVector&) = default;
};

double euclidean(const BehaviorVector& a, const BehaviorVector& b);

/// Index of each hand-crafted metric inside a BehaviorVector.
enum HandMetric : std::size_t {
    kAverageSpeed = 0,
    kAngularMomentum = 1,
    kRadialVariance = 2,
    kScatter = 3,
    kGroupRotation = 4,
};

inline constexpr const char* kHandMappingId = "hand";

/// The five swarm statistics of a single frame given per-agent velocities.
/// `radius` is the normalization radius R.
std::array<double, kBehaviorDims> frame_metrics(const WorldState& frame, const WorldState& previous, double dt,
                                                double radius);

/// Window average of frame_metrics over frames [first, first + count).
/// Each frame needs a predecessor, so first >= 1.
BehaviorVector hand_crafted_range(const Trajectory& trajectory, std::size_t first, std::size_t count);

/// Window average over the last `window` frames. R is half the world width.
BehaviorVector hand_crafted_embed(const Trajectory& trajectory, std::size_t window = 160);

}  // namespace swarmtax
