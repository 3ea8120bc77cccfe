#pragma once

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

#include "swarmtax/controller.hpp"

namespace swarmtax {

struct AgentState {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;  // radians, kept in [0, 2pi)

    friend bool operator==(const AgentState&, const AgentState&) = default;
};

/// Physical parameters shared by every agent. The second sensor's angle is
/// carried by the two-sensor Controller.
struct CapabilityModel {
    int sensor_count = 1;
    double wheel_radius = 2.0;
    double agent_radius = 5.0;
    double dt = 1.0;

    static CapabilityModel for_kind(CapabilityKind kind);
    void validate() const;
};

struct Environment {
    double width = 500.0;
    double height = 500.0;
    int agent_count = 24;
};

struct WorldState {
    std::vector<AgentState> agents;
    double width = 500.0;
    double height = 500.0;
    std::uint64_t tick = 0;

    friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Trajectory {
    std::vector<WorldState> frames;
    Controller controller;
    std::uint64_t seed = 0;
    double agent_radius = 5.0;
    double dt = 1.0;

    std::size_t horizon() const noexcept { return frames.empty() ? 0 : frames.size() - 1; }
};

double normalize_angle(double theta);

/// Differential-drive kinematics for one time step.
AgentState step_agent(const AgentState& state, double v_left, double v_right, const CapabilityModel& model);

/// Binary line-of-sight reading along heading + offset. Walls are invisible
/// and range is unbounded.
bool sense(const WorldState& world, std::size_t agent_index, double sensor_angle_offset, double agent_radius);

/// Wheel speeds for the branch selected by the readings. `readings` must
/// have one entry per sensor of the controller.
std::pair<double, double> select_velocities(const Controller& controller, std::span<const bool> readings);

/// Synchronous update: all agents sense the pre-step world, then all move.
/// Followed by one pairwise separation pass and wall clamping.
WorldState step_world(const WorldState& world, const Controller& controller, const CapabilityModel& model);

/// Non-overlapping uniform placement with uniform headings.
WorldState initial_world(const Environment& env, const CapabilityModel& model, Rng& rng);

Trajectory rollout(const Controller& controller, const CapabilityModel& model, const Environment& env,
                   std::uint64_t seed, std::size_t horizon);

/// Debug export: tick,agent,x,y,theta.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

}  // namespace swarmtax
