#include "vlalab/sim/world.hpp"

#include <algorithm>
#include <cmath>

namespace vlalab::sim {

Suite suite_from_name(const std::string& name) {
    if (name == "spatial") return Suite::spatial;
    if (name == "object") return Suite::object;
    if (name == "goal") return Suite::goal;
    if (name == "long") return Suite::long_horizon;
    throw SimError("unknown suite: " + name);
}

const char* shape_word(ShapeKind s) {
    switch (s) {
        case ShapeKind::block: return "block";
        case ShapeKind::ball: return "ball";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* color_word(ColorName c) {
    switch (c) {
        case ColorName::red: return "red";
        case ColorName::green: return "green";
        case ColorName::blue: return "blue";
        case ColorName::yellow: return "yellow";
    }
    return "?";
}

const char* fixture_word(FixtureKind f) {
    return f == FixtureKind::plate ? "plate" : "box";
}

bool goal_holds(const WorldState& state, const GoalPredicate& goal) {
    switch (goal.kind) {
        case GoalKind::object_to_point: {
            for (const auto& o : state.objects) {
                if (o.id != goal.object_id) continue;
                double dx = o.x - goal.x, dy = o.y - goal.y;
                return dx * dx + dy * dy <= goal.radius * goal.radius;
            }
            return false;
        }
        case GoalKind::drawer_open:
            return state.has_drawer && state.drawer_pos >= geom::kDrawerOpenAt;
        case GoalKind::drawer_closed:
            return state.has_drawer && state.drawer_pos <= geom::kDrawerClosedAt;
    }
    return false;
}

bool check_success(const WorldState& state, const TaskSpec& task) {
    for (const auto& g : task.stages)
        if (!goal_holds(state, g)) return false;
    return true;
}

std::array<double, 4> proprio_of(const GripperState& g) {
    return {2.0 * g.x - 1.0, 2.0 * g.y - 1.0, g.theta / 3.14159265358979323846,
            g.open ? 1.0 : -1.0};
}

namespace {

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

double wrap_angle(double a) {
    const double pi = 3.14159265358979323846;
    while (a > pi) a -= 2 * pi;
    while (a < -pi) a += 2 * pi;
    return a;
}

// nearest grabbable (object or drawer handle) within the grasp radius;
// returns kHeldNone if nothing is close enough
int nearest_grabbable(const WorldState& s, double gx, double gy, int skip_held_by_other) {
    double best_d2 = geom::kGraspRadius * geom::kGraspRadius;
    int best = kHeldNone;
    for (const auto& o : s.objects) {
        if (o.id == skip_held_by_other) continue;
        double dx = o.x - gx, dy = o.y - gy;
        double d2 = dx * dx + dy * dy;
        if (d2 <= best_d2) {
            best_d2 = d2;
            best = o.id;
        }
    }
    if (s.has_drawer) {
        double dx = geom::handle_x(s.drawer_pos) - gx, dy = geom::handle_y() - gy;
        double d2 = dx * dx + dy * dy;
        if (d2 <= best_d2) best = kHeldHandle;
    }
    return best;
}

}  // namespace

void step(WorldState& state, std::span<const double> action) {
    const size_t need = state.grippers.size() * kActionDimPerGripper;
    if (action.size() != need)
        throw SimError("step: action has " + std::to_string(action.size()) + " dims, expected " +
                       std::to_string(need));

    for (size_t gi = 0; gi < state.grippers.size(); ++gi) {
        GripperState& g = state.grippers[gi];
        const double* a = action.data() + gi * kActionDimPerGripper;
        double dx = clamp_unit(a[0]) * geom::kMaxStepXY;
        double dy = clamp_unit(a[1]) * geom::kMaxStepXY;
        double dth = clamp_unit(a[2]) * geom::kMaxStepTheta;
        bool want_open = clamp_unit(a[3]) <= 0.0;

        g.x = std::clamp(g.x + dx, geom::kGripperMin, geom::kGripperMax);
        g.y = std::clamp(g.y + dy, geom::kGripperMin, geom::kGripperMax);
        g.theta = wrap_angle(g.theta + dth);

        if (want_open) {
            g.open = true;
            g.held = kHeldNone;
        } else {
            g.open = false;
            if (g.held == kHeldNone) {
                int other_held = kHeldNone;
                for (size_t oj = 0; oj < state.grippers.size(); ++oj)
                    if (oj != gi && state.grippers[oj].held >= 0)
                        other_held = state.grippers[oj].held;
                int grab = nearest_grabbable(state, g.x, g.y, other_held);
                // the handle can only be held by one gripper
                if (grab == kHeldHandle) {
                    for (size_t oj = 0; oj < state.grippers.size(); ++oj)
                        if (oj != gi && state.grippers[oj].held == kHeldHandle) grab = kHeldNone;
                }
                if (grab != kHeldNone) {
                    g.held = grab;
                    if (grab == kHeldHandle)
                        g.grab_dx = geom::handle_x(state.drawer_pos) - g.x;
                }
            }
        }

        if (g.held >= 0) {
            for (auto& o : state.objects)
                if (o.id == g.held) {
                    o.x = g.x;
                    o.y = g.y;
                }
        } else if (g.held == kHeldHandle) {
            double target_handle_x = g.x + g.grab_dx;
            state.drawer_pos =
                std::clamp(geom::kDrawerX0 - geom::kHandleInset - target_handle_x, 0.0,
                           geom::kDrawerTravel);
        }
    }
    state.steps += 1;
}

// ---------------------------------------------------------------------------
// scripted expert
// ---------------------------------------------------------------------------

namespace {

struct Move {
    double tx, ty;
    bool close;
};

void emit(std::vector<double>& out, size_t gi, const GripperState& g, const Move& m) {
    double* a = out.data() + gi * kActionDimPerGripper;
    a[0] = clamp_unit((m.tx - g.x) / geom::kMaxStepXY);
    a[1] = clamp_unit((m.ty - g.y) / geom::kMaxStepXY);
    a[2] = 0.0;
    a[3] = m.close ? 1.0 : -1.0;
}

double dist(double ax, double ay, double bx, double by) {
    return std::hypot(ax - bx, ay - by);
}

}  // namespace

std::vector<double> scripted_expert(const WorldState& state, const TaskSpec& task) {
    std::vector<double> action(state.grippers.size() * kActionDimPerGripper, 0.0);
    for (size_t gi = 0; gi < state.grippers.size(); ++gi)
        action[gi * kActionDimPerGripper + 3] = -1.0;  // idle grippers stay open

    // first unmet stage is the active subgoal
    const GoalPredicate* goal = nullptr;
    for (const auto& g : task.stages)
        if (!goal_holds(state, g)) {
            goal = &g;
            break;
        }
    if (!goal) return action;  // all done; hold position

    const GripperState& g = state.grippers[0];

    if (goal->kind == GoalKind::object_to_point) {
        const ObjectState* obj = nullptr;
        for (const auto& o : state.objects)
            if (o.id == goal->object_id) obj = &o;
        if (!obj) throw SimError("scripted_expert: goal object missing");

        if (g.held == goal->object_id) {
            // transport; release just inside the goal radius
            if (dist(g.x, g.y, goal->x, goal->y) < 0.25 * goal->radius)
                emit(action, 0, g, {goal->x, goal->y, false});
            else
                emit(action, 0, g, {goal->x, goal->y, true});
        } else if (g.held != kHeldNone) {
            emit(action, 0, g, {g.x, g.y, false});  // wrong thing held: drop it
        } else {
            // approach; close once within half the grasp radius
            bool close = dist(g.x, g.y, obj->x, obj->y) < 0.5 * geom::kGraspRadius;
            emit(action, 0, g, {obj->x, obj->y, close});
        }
        return action;
    }

    // drawer goals
    double target_pos = goal->kind == GoalKind::drawer_open ? geom::kDrawerTravel - 0.02
                                                            : 0.01;
    if (g.held == kHeldHandle) {
        double target_x = geom::kDrawerX0 - geom::kHandleInset - target_pos - g.grab_dx;
        bool there = std::abs(state.drawer_pos - target_pos) < 0.015;
        emit(action, 0, g, {target_x, geom::handle_y(), !there});
    } else if (g.held != kHeldNone) {
        emit(action, 0, g, {g.x, g.y, false});
    } else {
        double hx = geom::handle_x(state.drawer_pos), hy = geom::handle_y();
        bool close = dist(g.x, g.y, hx, hy) < 0.5 * geom::kGraspRadius;
        emit(action, 0, g, {hx, hy, close});
    }
    return action;
}

// ---------------------------------------------------------------------------
// scene sampling
// ---------------------------------------------------------------------------

namespace {

constexpr double kPlateLeftX = 0.14, kPlateRightX = 0.86;
constexpr double kPlateTopY = 0.86, kPlateBottomY = 0.14;

double jit(Rng& rng, double amount) { return rng.uniform(-amount, amount); }

void place_gripper(WorldState& s, Rng& rng, bool bimanual) {
    GripperState g;
    g.x = rng.uniform(0.35, 0.65);
    g.y = rng.uniform(0.3, 0.55);
    s.grippers.push_back(g);
    if (bimanual) {
        GripperState g2;
        g2.x = std::clamp(g.x + rng.uniform(0.15, 0.25), geom::kGripperMin, geom::kGripperMax);
        g2.y = g.y;
        s.grippers.push_back(g2);
    }
}

// rejection-free scatter: candidate grid positions shuffled by rng
void scatter_objects(WorldState& s, Rng& rng, int count,
                     const std::vector<std::pair<ShapeKind, ColorName>>& kinds) {
    for (int i = 0; i < count; ++i) {
        ObjectState o;
        o.id = i;
        o.shape = kinds[i].first;
        o.color = kinds[i].second;
        for (int attempt = 0; attempt < 64; ++attempt) {
            o.x = rng.uniform(0.22, 0.7);
            o.y = rng.uniform(0.22, 0.78);
            bool ok = true;
            for (const auto& prev : s.objects)
                if (dist(o.x, o.y, prev.x, prev.y) < 0.16) ok = false;
            for (const auto& f : s.fixtures)
                if (dist(o.x, o.y, f.x, f.y) < 0.2) ok = false;
            if (ok) break;
        }
        s.objects.push_back(o);
    }
}

std::string join_words(const std::vector<std::string>& ws) {
    std::string out;
    for (size_t i = 0; i < ws.size(); ++i) {
        if (i) out += " ";
        out += ws[i];
    }
    return out;
}

}  // namespace

Scene sample_scene(Suite suite, Rng& rng, bool bimanual) {
    Scene sc;
    WorldState& s = sc.state;
    TaskSpec& t = sc.task;
    t.suite = suite;
    place_gripper(s, rng, bimanual);

    switch (suite) {
        case Suite::spatial: {
            // one red block, four plates; the instruction names the target side
            s.fixtures = {{FixtureKind::plate, kPlateLeftX + jit(rng, 0.04), 0.5 + jit(rng, 0.04)},
                          {FixtureKind::plate, kPlateRightX + jit(rng, 0.04), 0.5 + jit(rng, 0.04)},
                          {FixtureKind::plate, 0.5 + jit(rng, 0.04), kPlateTopY + jit(rng, 0.04)},
                          {FixtureKind::plate, 0.5 + jit(rng, 0.04), kPlateBottomY + jit(rng, 0.04)}};
            scatter_objects(s, rng, 1, {{ShapeKind::block, ColorName::red}});
            int side = rng.uniform_int(4);
            static const char* side_word[4] = {"left", "right", "top", "bottom"};
            t.stages = {{GoalKind::object_to_point, 0, s.fixtures[side].x, s.fixtures[side].y,
                         geom::kGoalRadius}};
            const char* verb = rng.coin() ? "move" : "push";
            t.instruction = join_words({verb, "the", "red", "block", "to", "the",
                                        side_word[side], "plate"});
            t.max_steps = 100;
            break;
        }
        case Suite::object: {
            // three distinct objects, two containers; fetch the named object
            s.fixtures = {{FixtureKind::box, 0.25 + jit(rng, 0.03), 0.84 + jit(rng, 0.03)},
                          {FixtureKind::plate, 0.75 + jit(rng, 0.03), 0.84 + jit(rng, 0.03)}};
            std::vector<std::pair<ShapeKind, ColorName>> pool = {
                {ShapeKind::block, ColorName::red},    {ShapeKind::ball, ColorName::green},
                {ShapeKind::triangle, ColorName::blue}, {ShapeKind::block, ColorName::yellow},
                {ShapeKind::ball, ColorName::blue},    {ShapeKind::triangle, ColorName::red}};
            for (int i = static_cast<int>(pool.size()) - 1; i > 0; --i)
                std::swap(pool[i], pool[rng.uniform_int(i + 1)]);
            scatter_objects(s, rng, 3, pool);
            int target = rng.uniform_int(3);
            int container = rng.uniform_int(2);
            t.stages = {{GoalKind::object_to_point, target, s.fixtures[container].x,
                         s.fixtures[container].y, geom::kGoalRadius}};
            t.instruction = join_words({"put", "the", color_word(s.objects[target].color),
                                        shape_word(s.objects[target].shape), "in", "the",
                                        fixture_word(s.fixtures[container].kind)});
            t.max_steps = 100;
            break;
        }
        case Suite::goal: {
            // same scene family, varying goals: move object or operate the drawer
            s.has_drawer = true;
            s.fixtures = {{FixtureKind::plate, kPlateLeftX + jit(rng, 0.04), 0.5 + jit(rng, 0.04)}};
            std::vector<std::pair<ShapeKind, ColorName>> pool = {
                {ShapeKind::block, ColorName::green}, {ShapeKind::ball, ColorName::yellow},
                {ShapeKind::triangle, ColorName::red}};
            scatter_objects(s, rng, 1, {pool[rng.uniform_int(3)]});
            int goal_pick = rng.uniform_int(3);
            if (goal_pick == 0) {
                s.drawer_pos = rng.uniform(0.0, 0.02);
                t.stages = {{GoalKind::drawer_open, -1, 0, 0, 0}};
                t.instruction = join_words({"open", "the", "drawer"});
            } else if (goal_pick == 1) {
                s.drawer_pos = geom::kDrawerTravel - rng.uniform(0.0, 0.02);
                t.stages = {{GoalKind::drawer_closed, -1, 0, 0, 0}};
                t.instruction = join_words({"close", "the", "drawer"});
            } else {
                s.drawer_pos = rng.uniform(0.0, 0.02);
                t.stages = {{GoalKind::object_to_point, 0, s.fixtures[0].x, s.fixtures[0].y,
                             geom::kGoalRadius}};
                t.instruction = join_words({rng.coin() ? "move" : "push", "the",
                                            color_word(s.objects[0].color),
                                            shape_word(s.objects[0].shape), "to", "the", "plate"});
            }
            t.max_steps = 100;
            break;
        }
        case Suite::long_horizon: {
            // two-stage: place an object, then operate the drawer
            s.has_drawer = true;
            s.fixtures = {{FixtureKind::box, 0.25 + jit(rng, 0.03), 0.84 + jit(rng, 0.03)}};
            std::vector<std::pair<ShapeKind, ColorName>> pool = {
                {ShapeKind::block, ColorName::blue}, {ShapeKind::ball, ColorName::red},
                {ShapeKind::triangle, ColorName::green}};
            scatter_objects(s, rng, 1, {pool[rng.uniform_int(3)]});
            bool open = rng.coin();
            s.drawer_pos = open ? rng.uniform(0.0, 0.02)
                                : geom::kDrawerTravel - rng.uniform(0.0, 0.02);
            t.stages = {{GoalKind::object_to_point, 0, s.fixtures[0].x, s.fixtures[0].y,
                         geom::kGoalRadius},
                        {open ? GoalKind::drawer_open : GoalKind::drawer_closed, -1, 0, 0, 0}};
            t.instruction = join_words({"put", "the", color_word(s.objects[0].color),
                                        shape_word(s.objects[0].shape), "in", "the", "box", "then",
                                        open ? "open" : "close", "the", "drawer"});
            t.max_steps = 160;
            break;
        }
    }
    return sc;
}

}  // namespace vlalab::sim
