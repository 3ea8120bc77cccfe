#include "swarmtax/sim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <ostream>

#include "swarmtax/errors.hpp"

namespace swarmtax {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kPlacementAttempts = 10000;

}  // namespace

CapabilityModel CapabilityModel::for_kind(CapabilityKind kind) {
    CapabilityModel model;
    model.sensor_count = kind == CapabilityKind::single_sensor ? 1 : 2;
    return model;
}

void CapabilityModel::validate() const {
    if (sensor_count != 1 && sensor_count != 2) {
        throw ContractError("sensor_count must be 1 or 2");
    }
    if (!(wheel_radius > 0.0) || !(agent_radius > 0.0) || !(dt > 0.0)) {
        throw ContractError("wheel_radius, agent_radius and dt must be positive");
    }
}

double normalize_angle(double theta) {
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) {
        t += kTwoPi;
    }
    // fmod of a tiny negative value can round up to exactly 2pi.
    if (t >= kTwoPi) {
        t = 0.0;
    }
    return t;
}

AgentState step_agent(const AgentState& state, double v_left, double v_right, const CapabilityModel& model) {
    const double linear = model.wheel_radius / 2.0 * (v_left + v_right);
    AgentState next;
    next.x = state.x + linear * std::cos(state.theta) * model.dt;
    next.y = state.y + linear * std::sin(state.theta) * model.dt;
    next.theta = normalize_angle(state.theta + (v_left - v_right) / (2.0 * model.agent_radius) * model.dt);
    return next;
}

namespace {

bool ray_hits_any(const WorldState& world, std::size_t self, double ox, double oy, double dx, double dy,
                  double radius_sq) {
    for (std::size_t j = 0; j < world.agents.size(); ++j) {
        if (j == self) {
            continue;
        }
        const double wx = world.agents[j].x - ox;
        const double wy = world.agents[j].y - oy;
        const double b = wx * dx + wy * dy;
        const double c = wx * wx + wy * wy - radius_sq;
        const double disc = b * b - c;
        if (disc < 0.0) {
            continue;
        }
        // Far intersection strictly ahead of the origin.
        if (b + std::sqrt(disc) > 0.0) {
            return true;
        }
    }
    return false;
}

}  // namespace

bool sense(const WorldState& world, std::size_t agent_index, double sensor_angle_offset, double agent_radius) {
    if (agent_index >= world.agents.size()) {
        throw ContractError("sense: agent index out of range");
    }
    const auto& a = world.agents[agent_index];
    const double heading = a.theta + sensor_angle_offset;
    return ray_hits_any(world, agent_index, a.x, a.y, std::cos(heading), std::sin(heading),
                        agent_radius * agent_radius);
}

std::pair<double, double> select_velocities(const Controller& controller, std::span<const bool> readings) {
    if (static_cast<int>(readings.size()) != controller.sensor_count()) {
        throw ContractError("sensor reading arity does not match controller");
    }
    int branch = 0;
    for (std::size_t i = 0; i < readings.size(); ++i) {
        branch |= (readings[i] ? 1 : 0) << i;
    }
    return controller.branch(branch);
}

WorldState step_world(const WorldState& world, const Controller& controller, const CapabilityModel& model) {
    if (controller.sensor_count() != model.sensor_count) {
        throw ContractError("controller sensor count does not match capability model");
    }
    const double second_offset = controller.sensor_angle().value_or(0.0);
    const std::size_t n = world.agents.size();

    WorldState next;
    next.width = world.width;
    next.height = world.height;
    next.tick = world.tick + 1;
    next.agents.resize(n);

    std::array<bool, 2> readings{};
    const std::span<const bool> active(readings.data(), static_cast<std::size_t>(model.sensor_count));
    for (std::size_t i = 0; i < n; ++i) {
        readings[0] = sense(world, i, 0.0, model.agent_radius);
        if (model.sensor_count == 2) {
            readings[1] = sense(world, i, second_offset, model.agent_radius);
        }
        const auto [vl, vr] = select_velocities(controller, active);
        next.agents[i] = step_agent(world.agents[i], vl, vr, model);
    }

    const double r = model.agent_radius;
    const double min_dist = 2.0 * r;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            auto& a = next.agents[i];
            auto& b = next.agents[j];
            double nx = a.x - b.x;
            double ny = a.y - b.y;
            const double d = std::hypot(nx, ny);
            if (d >= min_dist) {
                continue;
            }
            if (d > 0.0) {
                nx /= d;
                ny /= d;
            } else {
                nx = 1.0;
                ny = 0.0;
            }
            const double push = (min_dist - d) / 2.0;
            a.x += nx * push;
            a.y += ny * push;
            b.x -= nx * push;
            b.y -= ny * push;
        }
    }
    for (auto& a : next.agents) {
        a.x = std::clamp(a.x, r, world.width - r);
        a.y = std::clamp(a.y, r, world.height - r);
    }
    return next;
}

WorldState initial_world(const Environment& env, const CapabilityModel& model, Rng& rng) {
    if (env.agent_count < 0) {
        throw ContractError("agent_count must be non-negative");
    }
    const double r = model.agent_radius;
    if (env.width < 2.0 * r || env.height < 2.0 * r) {
        throw ContractError("environment smaller than one agent");
    }
    WorldState world;
    world.width = env.width;
    world.height = env.height;
    world.agents.reserve(static_cast<std::size_t>(env.agent_count));
    const double min_sq = 4.0 * r * r;
    for (int i = 0; i < env.agent_count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const double x = rng.uniform(r, env.width - r);
            const double y = rng.uniform(r, env.height - r);
            const bool clear = std::none_of(world.agents.begin(), world.agents.end(), [&](const AgentState& o) {
                return (o.x - x) * (o.x - x) + (o.y - y) * (o.y - y) < min_sq;
            });
            if (clear) {
                world.agents.push_back({x, y, rng.uniform(0.0, kTwoPi)});
                placed = true;
            }
        }
        if (!placed) {
            throw ContractError("initial placement failed: environment too crowded for " +
                                std::to_string(env.agent_count) + " agents");
        }
    }
    return world;
}

Trajectory rollout(const Controller& controller, const CapabilityModel& model, const Environment& env,
                   std::uint64_t seed, std::size_t horizon) {
    model.validate();
    if (horizon < 1) {
        throw ContractError("rollout horizon must be >= 1");
    }
    Rng rng(seed);
    Trajectory traj;
    traj.controller = controller;
    traj.seed = seed;
    traj.agent_radius = model.agent_radius;
    traj.dt = model.dt;
    traj.frames.reserve(horizon + 1);
    traj.frames.push_back(initial_world(env, model, rng));
    for (std::size_t t = 0; t < horizon; ++t) {
        traj.frames.push_back(step_world(traj.frames.back(), controller, model));
    }
    return traj;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
    out << "tick,agent,x,y,theta\n";
    out.precision(17);
    for (const auto& frame : trajectory.frames) {
        for (std::size_t i = 0; i < frame.agents.size(); ++i) {
            const auto& a = frame.agents[i];
            out << frame.tick << ',' << i << ',' << a.x << ',' << a.y << ',' << a.theta << '\n';
        }
    }
}

}  // namespace swarmtax
