#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vlalab/core/rng.hpp"

namespace vlalab::sim {

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Suite { spatial, object, goal, long_horizon };

inline const char* suite_name(Suite s) {
    switch (s) {
        case Suite::spatial: return "spatial";
        case Suite::object: return "object";
        case Suite::goal: return "goal";
        case Suite::long_horizon: return "long";
    }
    return "?";
}

Suite suite_from_name(const std::string& name);

enum class ShapeKind { block, ball, triangle };
enum class ColorName { red, green, blue, yellow };
enum class FixtureKind { plate, box };

const char* shape_word(ShapeKind s);
const char* color_word(ColorName c);
const char* fixture_word(FixtureKind f);

// ---------------------------------------------------------------------------
// world geometry
// ---------------------------------------------------------------------------

// Table coordinates span [0,1] x [0,1]; y grows toward the top of the
// third-person image.
namespace geom {
constexpr double kMaxStepXY = 0.05;       // units per step at full command
constexpr double kMaxStepTheta = 0.2;     // radians per step at full command
constexpr double kGraspRadius = 0.08;
constexpr double kGripperMin = 0.02;
constexpr double kGripperMax = 0.98;
constexpr double kGoalRadius = 0.10;
constexpr double kBlockHalf = 0.05;
constexpr double kBallRadius = 0.045;
constexpr double kTriangleHalf = 0.055;
constexpr double kPlateRadius = 0.09;
constexpr double kBoxHalf = 0.085;
// drawer: housing on the right edge, front panel slides left when opening
constexpr double kDrawerX0 = 0.78, kDrawerX1 = 1.0;
constexpr double kDrawerY0 = 0.35, kDrawerY1 = 0.65;
constexpr double kDrawerTravel = 0.18;
constexpr double kDrawerOpenAt = 0.13;   // open predicate threshold
constexpr double kDrawerClosedAt = 0.04; // closed predicate threshold
constexpr double kHandleInset = 0.015;

inline double handle_x(double drawer_pos) { return kDrawerX0 - drawer_pos - kHandleInset; }
inline double handle_y() { return 0.5 * (kDrawerY0 + kDrawerY1); }
}  // namespace geom

constexpr int kHeldNone = -1;
constexpr int kHeldHandle = -2;

struct ObjectState {
    int id = 0;
    ShapeKind shape = ShapeKind::block;
    ColorName color = ColorName::red;
    double x = 0.5, y = 0.5;
};

struct GripperState {
    double x = 0.5, y = 0.5, theta = 0.0;
    bool open = true;
    int held = kHeldNone;
    double grab_dx = 0.0;  // handle-grab offset, unused for objects
};

struct Fixture {
    FixtureKind kind = FixtureKind::plate;
    double x = 0.5, y = 0.5;
};

struct WorldState {
    std::vector<GripperState> grippers;  // 1, or 2 in bimanual mode
    std::vector<ObjectState> objects;
    std::vector<Fixture> fixtures;
    bool has_drawer = false;
    double drawer_pos = 0.0;  // 0 closed .. kDrawerTravel fully open
    int64_t steps = 0;
};

// ---------------------------------------------------------------------------
// tasks
// ---------------------------------------------------------------------------

enum class GoalKind { object_to_point, drawer_open, drawer_closed };

struct GoalPredicate {
    GoalKind kind = GoalKind::object_to_point;
    int object_id = -1;
    double x = 0.0, y = 0.0;
    double radius = geom::kGoalRadius;
};

struct TaskSpec {
    Suite suite = Suite::spatial;
    std::vector<GoalPredicate> stages;  // one, or two for the long suite
    std::string instruction;
    int max_steps = 100;
};

bool goal_holds(const WorldState& state, const GoalPredicate& goal);
bool check_success(const WorldState& state, const TaskSpec& task);

// ---------------------------------------------------------------------------
// dynamics
// ---------------------------------------------------------------------------

// Action layout per gripper: (dx, dy, dtheta, grip); grip > 0 closes.
// Components are clamped to [-1, 1] and scaled by the actuator limits.
constexpr int kActionDimPerGripper = 4;

void step(WorldState& state, std::span<const double> action);

// Normalized proprioception for one gripper: (2x-1, 2y-1, theta/pi, open ? 1 : -1).
std::array<double, 4> proprio_of(const GripperState& g);

// ---------------------------------------------------------------------------
// scripted expert
// ---------------------------------------------------------------------------

// Proportional controller toward the current subgoal; stateless, so it
// recovers from any reachable intermediate state.
std::vector<double> scripted_expert(const WorldState& state, const TaskSpec& task);

// ---------------------------------------------------------------------------
// scenes
// ---------------------------------------------------------------------------

struct Scene {
    WorldState state;
    TaskSpec task;
};

// Samples a task and matching initial state for a suite; deterministic in rng.
Scene sample_scene(Suite suite, Rng& rng, bool bimanual = false);

}  // namespace vlalab::sim
