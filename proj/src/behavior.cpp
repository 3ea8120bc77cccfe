#include "swarmtax/behavior.hpp"

#include <cmath>

#include "swarmtax/errors.hpp"

namespace swarmtax {

double euclidean(const BehaviorVector& a, const BehaviorVector& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < kBehaviorDims; ++i) {
        const double d = a.values[i] - b.values[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::array<double, kBehaviorDims> frame_metrics(const WorldState& frame, const WorldState& previous, double dt,
                                                double radius) {
    std::array<double, kBehaviorDims> out{};
    const std::size_t n = frame.agents.size();
    if (n == 0) {
        return out;
    }
    if (previous.agents.size() != n) {
        throw ContractError("frame_metrics: agent count changed between frames");
    }
    const double inv_n = 1.0 / static_cast<double>(n);

    double mx = 0.0;
    double my = 0.0;
    for (const auto& a : frame.agents) {
        mx += a.x;
        my += a.y;
    }
    mx *= inv_n;
    my *= inv_n;

    double speed = 0.0;
    double momentum = 0.0;
    double scatter = 0.0;
    double rotation = 0.0;
    double mean_dist = 0.0;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double vx = (frame.agents[i].x - previous.agents[i].x) / dt;
        const double vy = (frame.agents[i].y - previous.agents[i].y) / dt;
        const double rx = frame.agents[i].x - mx;
        const double ry = frame.agents[i].y - my;
        const double r = std::hypot(rx, ry);
        dist[i] = r;
        mean_dist += r;
        speed += std::hypot(vx, vy);
        const double cross = vx * ry - vy * rx;
        momentum += cross;
        scatter += rx * rx + ry * ry;
        if (r > 0.0) {
            rotation += cross / r;
        }
    }
    mean_dist *= inv_n;
    double radial = 0.0;
    for (double r : dist) {
        radial += (r - mean_dist) * (r - mean_dist);
    }

    out[kAverageSpeed] = speed * inv_n;
    out[kAngularMomentum] = momentum * inv_n / radius;
    out[kRadialVariance] = radial * inv_n / (radius * radius);
    out[kScatter] = scatter * inv_n / (radius * radius);
    out[kGroupRotation] = rotation * inv_n / radius;
    return out;
}

BehaviorVector hand_crafted_range(const Trajectory& trajectory, std::size_t first, std::size_t count) {
    if (count == 0 || first == 0 || first + count > trajectory.frames.size()) {
        throw ContractError("hand-crafted metrics: window does not fit the trajectory");
    }
    BehaviorVector out;
    out.mapping_id = kHandMappingId;
    const double radius = trajectory.frames.front().width / 2.0;
    for (std::size_t t = first; t < first + count; ++t) {
        const auto m = frame_metrics(trajectory.frames[t], trajectory.frames[t - 1], trajectory.dt, radius);
        for (std::size_t i = 0; i < kBehaviorDims; ++i) {
            out.values[i] += m[i];
        }
    }
    for (auto& v : out.values) {
        v /= static_cast<double>(count);
    }
    return out;
}

BehaviorVector hand_crafted_embed(const Trajectory& trajectory, std::size_t window) {
    if (trajectory.frames.size() < window + 1) {
        throw ContractError("hand-crafted metrics: trajectory shorter than window + 1 frames");
    }
    return hand_crafted_range(trajectory, trajectory.frames.size() - window, window);
}

}  // namespace swarmtax
