#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "swarmtax/render.hpp"

namespace swarmtax {

struct LabeledImage {
    TrajectoryImage image;
    std::string label;
};

/// Procedural archetype images rendered through the trajectory renderer:
/// "disk" (stationary compact cluster), "ring" (agents circling a common
/// center) and "streak" (agents translating along parallel lines). Classes
/// cycle disk, ring, streak; sizes, positions and directions are random.
std::vector<LabeledImage> synthetic_shapes(std::size_t count, std::uint64_t seed);

/// One archetype trajectory of `frames` frames (for tests of the renderer).
Trajectory synthetic_trajectory(const std::string& archetype, Rng& rng, std::size_t frames = kRenderWindow);

}  // namespace swarmtax
