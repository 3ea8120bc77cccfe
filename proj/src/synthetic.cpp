#include "swarmtax/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "swarmtax/errors.hpp"

namespace swarmtax {

namespace {

constexpr double kWorld = 500.0;
constexpr int kAgents = 24;

WorldState empty_frame(std::uint64_t tick) {
    WorldState w;
    w.width = kWorld;
    w.height = kWorld;
    w.tick = tick;
    w.agents.resize(kAgents);
    return w;
}

}  // namespace

Trajectory synthetic_trajectory(const std::string& archetype, Rng& rng, std::size_t frames) {
    Trajectory traj;
    traj.frames.reserve(frames);
    const double two_pi = 2.0 * std::numbers::pi;

    if (archetype == "disk") {
        const double radius = rng.uniform(15.0, 70.0);
        const double cx = rng.uniform(radius + 10.0, kWorld - radius - 10.0);
        const double cy = rng.uniform(radius + 10.0, kWorld - radius - 10.0);
        auto frame = empty_frame(0);
        for (auto& a : frame.agents) {
            const double r = radius * std::sqrt(rng.uniform());
            const double phi = rng.uniform(0.0, two_pi);
            a = {cx + r * std::cos(phi), cy + r * std::sin(phi), phi};
        }
        for (std::size_t t = 0; t < frames; ++t) {
            frame.tick = t;
            traj.frames.push_back(frame);
        }
    } else if (archetype == "ring") {
        const double radius = rng.uniform(50.0, 180.0);
        const double cx = rng.uniform(radius + 10.0, kWorld - radius - 10.0);
        const double cy = rng.uniform(radius + 10.0, kWorld - radius - 10.0);
        const double omega = (rng.bernoulli(0.5) ? 1.0 : -1.0) * 2.0 / radius;
        std::vector<double> phase(kAgents);
        for (auto& p : phase) {
            p = rng.uniform(0.0, two_pi);
        }
        for (std::size_t t = 0; t < frames; ++t) {
            auto frame = empty_frame(t);
            for (int i = 0; i < kAgents; ++i) {
                const double phi = phase[i] + omega * static_cast<double>(t);
                frame.agents[i] = {cx + radius * std::cos(phi), cy + radius * std::sin(phi), 0.0};
            }
            traj.frames.push_back(std::move(frame));
        }
    } else if (archetype == "streak") {
        const double heading = rng.uniform(0.0, two_pi);
        const double dx = std::cos(heading);
        const double dy = std::sin(heading);
        const double length = rng.uniform(80.0, 300.0);
        const double speed = length / static_cast<double>(frames);
        std::vector<std::pair<double, double>> start(kAgents);
        for (auto& s : start) {
            s = {rng.uniform(60.0, kWorld - 60.0), rng.uniform(60.0, kWorld - 60.0)};
        }
        for (std::size_t t = 0; t < frames; ++t) {
            auto frame = empty_frame(t);
            for (int i = 0; i < kAgents; ++i) {
                const double d = speed * static_cast<double>(t) - length / 2.0;
                frame.agents[i] = {std::clamp(start[i].first + d * dx, 0.0, kWorld),
                                   std::clamp(start[i].second + d * dy, 0.0, kWorld), heading};
            }
            traj.frames.push_back(std::move(frame));
        }
    } else {
        throw ContractError("unknown synthetic archetype: " + archetype);
    }
    return traj;
}

std::vector<LabeledImage> synthetic_shapes(std::size_t count, std::uint64_t seed) {
    static const char* kClasses[] = {"disk", "ring", "streak"};
    Rng rng(seed);
    std::vector<LabeledImage> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::string label = kClasses[i % 3];
        auto traj = synthetic_trajectory(label, rng);
        auto img = render(traj);
        img.source_id = "synthetic-" + std::to_string(i);
        out.push_back({std::move(img), label});
    }
    return out;
}

}  // namespace swarmtax
