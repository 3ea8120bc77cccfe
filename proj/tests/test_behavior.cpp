#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "swarmtax/behavior.hpp"
#include "swarmtax/errors.hpp"
#include "swarmtax/sim.hpp"

using namespace swarmtax;

namespace {

// Random walk of n agents over `frames` frames, positions kept loose (the
// metrics do not care about walls).
Trajectory random_walk(std::size_t n, std::size_t frames, std::uint64_t seed) {
    Rng rng(seed);
    Trajectory t;
    WorldState w;
    for (std::size_t i = 0; i < n; ++i) {
        w.agents.push_back({rng.uniform(100, 400), rng.uniform(100, 400), 0});
    }
    for (std::size_t f = 0; f < frames; ++f) {
        t.frames.push_back(w);
        for (auto& a : w.agents) {
            a.x += rng.uniform(-3, 3);
            a.y += rng.uniform(-3, 3);
        }
    }
    return t;
}

Trajectory transform(Trajectory t, double s, double phi, double dx, double dy) {
    const double c = std::cos(phi);
    const double sn = std::sin(phi);
    for (auto& f : t.frames) {
        for (auto& a : f.agents) {
            const double x = s * (c * a.x - sn * a.y) + dx;
            const double y = s * (sn * a.x + c * a.y) + dy;
            a.x = x;
            a.y = y;
        }
    }
    return t;
}

// Direct per-frame evaluation of the five metrics, used as the oracle.
std::array<double, 5> oracle_frame(const WorldState& f, const WorldState& p, double R) {
    const double n = static_cast<double>(f.agents.size());
    double mx = 0;
    double my = 0;
    for (const auto& a : f.agents) {
        mx += a.x / n;
        my += a.y / n;
    }
    std::array<double, 5> out{};
    std::vector<double> r(f.agents.size());
    double rbar = 0;
    for (std::size_t i = 0; i < f.agents.size(); ++i) {
        r[i] = std::sqrt((f.agents[i].x - mx) * (f.agents[i].x - mx) + (f.agents[i].y - my) * (f.agents[i].y - my));
        rbar += r[i] / n;
    }
    for (std::size_t i = 0; i < f.agents.size(); ++i) {
        const double vx = f.agents[i].x - p.agents[i].x;
        const double vy = f.agents[i].y - p.agents[i].y;
        const double rx = f.agents[i].x - mx;
        const double ry = f.agents[i].y - my;
        out[0] += std::sqrt(vx * vx + vy * vy) / n;
        out[1] += (vx * ry - vy * rx) / (R * n);
        out[2] += (r[i] - rbar) * (r[i] - rbar) / (R * R * n);
        out[3] += (rx * rx + ry * ry) / (R * R * n);
        if (r[i] > 0) {
            out[4] += (vx * ry - vy * rx) / r[i] / (R * n);
        }
    }
    return out;
}

}  // namespace

TEST(HandCrafted, MatchesDirectEvaluation) {
    const auto t = random_walk(12, 200, 1);
    const auto b = hand_crafted_embed(t);
    std::array<double, 5> acc{};
    for (std::size_t f = 40; f < 200; ++f) {
        const auto m = oracle_frame(t.frames[f], t.frames[f - 1], 250.0);
        for (int k = 0; k < 5; ++k) {
            acc[static_cast<std::size_t>(k)] += m[static_cast<std::size_t>(k)] / 160.0;
        }
    }
    for (std::size_t k = 0; k < 5; ++k) {
        EXPECT_NEAR(b[k], acc[k], 1e-12 * std::max(1.0, std::abs(acc[k])));
    }
    EXPECT_EQ(b.mapping_id, kHandMappingId);
}

TEST(HandCrafted, StationarySwarm) {
    auto t = random_walk(10, 1, 2);
    while (t.frames.size() < 161) {
        t.frames.push_back(t.frames.front());
    }
    const auto b = hand_crafted_embed(t);
    EXPECT_EQ(b[kAverageSpeed], 0.0);
    EXPECT_EQ(b[kAngularMomentum], 0.0);
    EXPECT_EQ(b[kGroupRotation], 0.0);
    EXPECT_GT(b[kScatter], 0.0);
    const auto single = frame_metrics(t.frames[0], t.frames[0], 1.0, 250.0);
    EXPECT_NEAR(b[kScatter], single[kScatter], 1e-15);
}

TEST(HandCrafted, CoincidentAgents) {
    Trajectory t;
    for (int f = 0; f < 161; ++f) {
        WorldState w;
        w.agents.assign(6, AgentState{200.0 + f, 250.0, 0});
        t.frames.push_back(w);
    }
    const auto b = hand_crafted_embed(t);
    EXPECT_EQ(b[kScatter], 0.0);
    EXPECT_EQ(b[kRadialVariance], 0.0);
    EXPECT_EQ(b[kGroupRotation], 0.0);
    EXPECT_DOUBLE_EQ(b[kAverageSpeed], 1.0);
}

TEST(HandCrafted, WindowTooLongThrows) {
    EXPECT_THROW(hand_crafted_embed(random_walk(3, 160, 3)), ContractError);
    EXPECT_NO_THROW(hand_crafted_embed(random_walk(3, 161, 3)));
    EXPECT_THROW(hand_crafted_range(random_walk(3, 10, 3), 0, 5), ContractError);
}

TEST(HandCrafted, TranslationInvariant) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = random_walk(15, 170, seed);
        const auto a = hand_crafted_embed(t);
        const auto b = hand_crafted_embed(transform(t, 1.0, 0.0, 37.5, -12.25));
        for (std::size_t k = 0; k < kBehaviorDims; ++k) {
            EXPECT_NEAR(a[k], b[k], 1e-9);
        }
    }
}

TEST(HandCrafted, RotationInvariant) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto t = random_walk(15, 170, seed);
        const auto a = hand_crafted_embed(t);
        const auto b = hand_crafted_embed(transform(t, 1.0, 0.7 + static_cast<double>(seed), 0, 0));
        for (std::size_t k = 0; k < kBehaviorDims; ++k) {
            EXPECT_NEAR(a[k], b[k], 1e-9);
        }
    }
}

TEST(HandCrafted, ScalingLaws) {
    const auto t = random_walk(15, 170, 7);
    const double s = 1.7;
    const auto a = hand_crafted_embed(t);
    const auto b = hand_crafted_embed(transform(t, s, 0, 0, 0));
    EXPECT_NEAR(b[kAverageSpeed], s * a[kAverageSpeed], 1e-9);
    EXPECT_NEAR(b[kScatter], s * s * a[kScatter], 1e-9);
    EXPECT_NEAR(b[kAngularMomentum], s * s * a[kAngularMomentum], 1e-9);
    EXPECT_NEAR(b[kGroupRotation], s * a[kGroupRotation], 1e-9);
    EXPECT_NEAR(b[kRadialVariance], s * s * a[kRadialVariance], 1e-9);
}

TEST(HandCrafted, RigidRotationSign) {
    // agents on a circle rotating counter-clockwise in x-y coordinates
    Trajectory t;
    for (int f = 0; f < 161; ++f) {
        WorldState w;
        for (int i = 0; i < 8; ++i) {
            const double ang = 2 * std::numbers::pi * i / 8 + 0.01 * f;
            w.agents.push_back({250 + 100 * std::cos(ang), 250 + 100 * std::sin(ang), 0});
        }
        t.frames.push_back(w);
    }
    const auto b = hand_crafted_embed(t);
    // v x r with v tangential and r radial: z = vx*ry - vy*rx = -|v||r| for counter-clockwise motion
    EXPECT_LT(b[kAngularMomentum], 0.0);
    EXPECT_LT(b[kGroupRotation], 0.0);
    EXPECT_NEAR(b[kRadialVariance], 0.0, 1e-12);
    EXPECT_NEAR(b[kScatter], 100.0 * 100.0 / (250.0 * 250.0), 1e-9);
}

TEST(Euclidean, Basic) {
    BehaviorVector a;
    BehaviorVector b;
    b.values = {3, 4, 0, 0, 0};
    EXPECT_EQ(euclidean(a, b), 5.0);
    EXPECT_EQ(euclidean(b, b), 0.0);
}

TEST(HandCrafted, DispersalSpreadsOut) {
    const auto c = Controller::single(0.2, 0.7, -0.5, -0.1);
    const auto t = rollout(c, CapabilityModel{}, Environment{}, 1000, 1200);
    const auto first = hand_crafted_range(t, 1, 160);
    const auto last = hand_crafted_embed(t);
    EXPECT_GT(last[kScatter], first[kScatter]);
}
