#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "swarmtax/errors.hpp"
#include "swarmtax/sim.hpp"

using namespace swarmtax;

namespace {

WorldState world_of(std::vector<AgentState> agents) {
    WorldState w;
    w.agents = std::move(agents);
    return w;
}

const CapabilityModel kModel{};

}  // namespace

TEST(StepAgent, StraightLine) {
    const auto s = step_agent({0, 0, 0}, 1.0, 1.0, kModel);
    EXPECT_EQ(s.x, 2.0);
    EXPECT_EQ(s.y, 0.0);
    EXPECT_EQ(s.theta, 0.0);
}

TEST(StepAgent, ZeroVelocityUnchanged) {
    const AgentState in{0, 0, 0};
    EXPECT_EQ(step_agent(in, 0.0, 0.0, kModel), in);
}

TEST(StepAgent, SpinInPlace) {
    const auto s = step_agent({0, 0, 0}, 1.0, -1.0, kModel);
    EXPECT_EQ(s.x, 0.0);
    EXPECT_EQ(s.y, 0.0);
    EXPECT_DOUBLE_EQ(s.theta, 0.2);
}

TEST(StepAgent, HeadingStaysNormalized) {
    const auto s = step_agent({0, 0, 0.1}, -1.0, 1.0, kModel);
    EXPECT_GE(s.theta, 0.0);
    EXPECT_LT(s.theta, 2 * std::numbers::pi);
    EXPECT_NEAR(s.theta, 2 * std::numbers::pi - 0.1, 1e-12);
}

TEST(StepAgent, RotationalStepProperty) {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double v = rng.uniform(-1, 1);
        const AgentState in{rng.uniform(0, 500), rng.uniform(0, 500), rng.uniform(0, 2 * std::numbers::pi)};
        const auto out = step_agent(in, v, -v, kModel);
        EXPECT_EQ(out.x, in.x);
        EXPECT_EQ(out.y, in.y);
        const double expected = normalize_angle(in.theta + (v - (-v)) * kModel.dt / (2 * kModel.agent_radius));
        EXPECT_EQ(out.theta, expected);
    }
}

TEST(Sense, HitAhead) {
    const auto w = world_of({{0, 0, 0}, {100, 0, 0}});
    EXPECT_TRUE(sense(w, 0, 0.0, 5.0));
}

TEST(Sense, RayPointsAway) {
    const auto w = world_of({{0, 0, std::numbers::pi}, {100, 0, 0}});
    EXPECT_FALSE(sense(w, 0, 0.0, 5.0));
}

TEST(Sense, AloneReadsZero) {
    const auto w = world_of({{250, 250, 0}});
    for (double off = -3.0; off <= 3.0; off += 0.25) {
        EXPECT_FALSE(sense(w, 0, off, 5.0));
    }
}

TEST(Sense, GrazingDiskAndOffset) {
    // disk at (100, 4.9) is touched by the x-axis ray, (100, 5.1) is not
    EXPECT_TRUE(sense(world_of({{0, 0, 0}, {100, 4.9, 0}}), 0, 0.0, 5.0));
    EXPECT_FALSE(sense(world_of({{0, 0, 0}, {100, 5.1, 0}}), 0, 0.0, 5.0));
    // second sensor rotated by +pi/2 looks along +y
    EXPECT_TRUE(sense(world_of({{0, 0, 0}, {0, 100, 0}}), 0, std::numbers::pi / 2, 5.0));
}

TEST(SelectVelocities, SingleSensorBranches) {
    const auto c = Controller::single(0.6, 1.0, 0.4, 0.5);
    const bool off[] = {false};
    const bool on[] = {true};
    EXPECT_EQ(select_velocities(c, off), std::make_pair(0.6, 1.0));
    EXPECT_EQ(select_velocities(c, on), std::make_pair(0.4, 0.5));
}

TEST(SelectVelocities, TwoSensorTable) {
    const auto c = Controller::two({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}, std::numbers::pi / 4);
    const bool r00[] = {false, false};
    const bool r10[] = {true, false};
    const bool r01[] = {false, true};
    const bool r11[] = {true, true};
    EXPECT_EQ(select_velocities(c, r00), std::make_pair(0.1, 0.2));
    EXPECT_EQ(select_velocities(c, r10), std::make_pair(0.3, 0.4));
    EXPECT_EQ(select_velocities(c, r01), std::make_pair(0.5, 0.6));
    EXPECT_EQ(select_velocities(c, r11), std::make_pair(0.7, 0.8));
}

TEST(SelectVelocities, ArityMismatchThrows) {
    const auto c = Controller::single(0.6, 1.0, 0.4, 0.5);
    const bool two[] = {false, true};
    EXPECT_THROW(select_velocities(c, two), ContractError);
}

TEST(StepWorld, SingleAgentFollowsKinematics) {
    const auto c = Controller::single(0.3, 0.7, -1.0, -1.0);
    const auto w = world_of({{100, 200, 1.0}});
    const auto next = step_world(w, c, kModel);
    EXPECT_EQ(next.agents[0], step_agent(w.agents[0], 0.3, 0.7, kModel));
    EXPECT_EQ(next.tick, w.tick + 1);
}

TEST(StepWorld, WallClampSlides) {
    const double theta = std::numbers::pi / 4;
    const auto w = world_of({{495, 100, theta}});
    const auto next = step_world(w, Controller::single(1, 1, 1, 1), kModel);
    EXPECT_EQ(next.agents[0].x, 495.0);
    EXPECT_DOUBLE_EQ(next.agents[0].y, 100.0 + 2.0 * std::sin(theta));
}

TEST(StepWorld, OverlapSeparated) {
    const auto w = world_of({{100, 100, 0}, {108, 100, 0}});
    const auto next = step_world(w, Controller::single(0, 0, 0, 0), kModel);
    const double d = std::hypot(next.agents[0].x - next.agents[1].x, next.agents[0].y - next.agents[1].y);
    EXPECT_GE(d, 2 * kModel.agent_radius - 1e-9);
    // symmetric: midpoint unchanged
    EXPECT_DOUBLE_EQ((next.agents[0].x + next.agents[1].x) / 2, 104.0);
}

TEST(StepWorld, CoincidentAgentsSeparated) {
    const auto w = world_of({{100, 100, 0}, {100, 100, 1}});
    const auto next = step_world(w, Controller::single(0, 0, 0, 0), kModel);
    const double d = std::hypot(next.agents[0].x - next.agents[1].x, next.agents[0].y - next.agents[1].y);
    EXPECT_GE(d, 2 * kModel.agent_radius - 1e-9);
}

TEST(Rollout, Deterministic) {
    const auto c = Controller::single(-0.7, 0.3, 1.0, 1.0);
    const auto a = rollout(c, kModel, Environment{}, 77, 300);
    const auto b = rollout(c, kModel, Environment{}, 77, 300);
    ASSERT_EQ(a.frames.size(), 301u);
    EXPECT_TRUE(a.frames == b.frames);
}

TEST(Rollout, SeedChangesPlacement) {
    const auto c = Controller::single(0, 0, 0, 0);
    EXPECT_FALSE(rollout(c, kModel, Environment{}, 1, 1).frames[0] == rollout(c, kModel, Environment{}, 2, 1).frames[0]);
}

TEST(Rollout, ZeroHorizonRejected) {
    EXPECT_THROW(rollout(Controller::single(0, 0, 0, 0), kModel, Environment{}, 1, 0), ContractError);
}

TEST(Rollout, OvercrowdedPlacementFails) {
    Environment env{30, 30, 24};
    EXPECT_THROW(rollout(Controller::single(0, 0, 0, 0), kModel, env, 1, 1), ContractError);
}

TEST(Rollout, ModelMismatchRejected) {
    const auto c = Controller::two({0, 0, 0, 0, 0, 0, 0, 0}, std::numbers::pi / 2);
    EXPECT_THROW(rollout(c, kModel, Environment{}, 1, 5), ContractError);
}

TEST(Rollout, ZeroControllerFixpoint) {
    const auto t = rollout(Controller::single(0, 0, 0, 0), kModel, Environment{}, 9, 50);
    for (std::size_t f = 1; f < t.frames.size(); ++f) {
        EXPECT_EQ(t.frames[f].agents, t.frames[0].agents);
        EXPECT_EQ(t.frames[f].tick, f);
    }
}

TEST(Rollout, InitialPlacementValid) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = rollout(Controller::single(0, 0, 0, 0), kModel, Environment{}, seed, 1);
        const auto& a = t.frames[0].agents;
        ASSERT_EQ(a.size(), 24u);
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_GE(a[i].x, 5.0);
            EXPECT_LE(a[i].x, 495.0);
            EXPECT_GE(a[i].theta, 0.0);
            EXPECT_LT(a[i].theta, 2 * std::numbers::pi);
            for (std::size_t j = i + 1; j < a.size(); ++j) {
                EXPECT_GE(std::hypot(a[i].x - a[j].x, a[i].y - a[j].y), 10.0);
            }
        }
    }
}

TEST(Rollout, ContainmentProperty) {
    Rng rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        const auto c = sample_uniform(CapabilityKind::single_sensor, rng);
        const auto t = rollout(c, kModel, Environment{}, rng.next_u64(), 400);
        for (const auto& f : t.frames) {
            for (const auto& a : f.agents) {
                ASSERT_GE(a.x, 0.0);
                ASSERT_LE(a.x, 500.0);
                ASSERT_GE(a.y, 0.0);
                ASSERT_LE(a.y, 500.0);
                ASSERT_GE(a.theta, 0.0);
                ASSERT_LT(a.theta, 2 * std::numbers::pi);
            }
        }
    }
}

TEST(Rollout, SingleSensorEmbedsInTwoSensorSpace) {
    const auto single = Controller::single(0.6, 1.0, 0.4, 0.5);
    for (double angle : kSensorAngles) {
        const auto two = Controller::two({0.6, 1.0, 0.4, 0.5, 0.6, 1.0, 0.4, 0.5}, angle);
        const auto a = rollout(single, CapabilityModel::for_kind(CapabilityKind::single_sensor), Environment{}, 4, 200);
        const auto b = rollout(two, CapabilityModel::for_kind(CapabilityKind::two_sensor), Environment{}, 4, 200);
        EXPECT_TRUE(a.frames == b.frames) << "angle " << angle;
    }
}

TEST(Rollout, CsvExport) {
    const auto t = rollout(Controller::single(1, 1, 1, 1), kModel, Environment{100, 100, 2}, 3, 2);
    std::ostringstream os;
    write_trajectory_csv(os, t);
    const auto text = os.str();
    EXPECT_EQ(text.rfind("tick,agent,x,y,theta\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 3 * 2);
}
