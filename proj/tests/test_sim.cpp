#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "vlalab/core/io.hpp"
#include "vlalab/model/vocab.hpp"
#include "vlalab/sim/dataset.hpp"
#include "vlalab/sim/env.hpp"

using namespace vlalab;
using namespace vlalab::sim;

namespace {

WorldState simple_state() {
    WorldState s;
    s.grippers.push_back({0.5, 0.5, 0.0, true, kHeldNone, 0.0});
    s.objects.push_back({0, ShapeKind::block, ColorName::red, 0.3, 0.4});
    s.fixtures.push_back({FixtureKind::plate, 0.85, 0.5});
    return s;
}

bool states_equal(const WorldState& a, const WorldState& b) {
    if (a.grippers.size() != b.grippers.size() || a.objects.size() != b.objects.size())
        return false;
    for (size_t i = 0; i < a.grippers.size(); ++i) {
        const auto &x = a.grippers[i], &y = b.grippers[i];
        if (x.x != y.x || x.y != y.y || x.theta != y.theta || x.open != y.open ||
            x.held != y.held)
            return false;
    }
    for (size_t i = 0; i < a.objects.size(); ++i) {
        const auto &x = a.objects[i], &y = b.objects[i];
        if (x.x != y.x || x.y != y.y || x.id != y.id) return false;
    }
    return a.drawer_pos == b.drawer_pos;
}

}  // namespace

TEST_CASE("step: zero action leaves state unchanged except the counter") {
    WorldState s = simple_state();
    WorldState before = s;
    std::vector<double> zero(4, 0.0);
    step(s, zero);
    CHECK(states_equal(s, before));
    CHECK(s.steps == before.steps + 1);
}

TEST_CASE("step: closing adjacent to an object grabs it") {
    WorldState s = simple_state();
    s.grippers[0].x = 0.3 + 0.5 * geom::kGraspRadius;
    s.grippers[0].y = 0.4;
    std::vector<double> close = {0, 0, 0, 1.0};
    step(s, close);
    CHECK(s.grippers[0].held == 0);
    // held object tracks the gripper
    std::vector<double> move = {1.0, 0, 0, 1.0};
    step(s, move);
    CHECK(s.objects[0].x == doctest::Approx(s.grippers[0].x));
    CHECK(s.objects[0].y == doctest::Approx(s.grippers[0].y));
    // opening releases
    std::vector<double> open = {0, 0, 0, -1.0};
    step(s, open);
    CHECK(s.grippers[0].held == kHeldNone);
}

TEST_CASE("step: commands clamp to [-1, 1]") {
    WorldState a = simple_state(), b = simple_state();
    std::vector<double> big = {5.0, -7.0, 3.0, 0.0};
    std::vector<double> unit = {1.0, -1.0, 1.0, 0.0};
    step(a, big);
    step(b, unit);
    CHECK(states_equal(a, b));
}

TEST_CASE("step: wrong action dimensionality is rejected") {
    WorldState s = simple_state();
    std::vector<double> bad = {0, 0, 0};
    CHECK_THROWS_AS(step(s, bad), SimError);
}

TEST_CASE("render: deterministic pixels") {
    WorldState s = simple_state();
    Appearance ap;
    Image a = render(s, CameraKind::third_person, ap, 3);
    Image b = render(s, CameraKind::third_person, ap, 3);
    CHECK(a.px == b.px);
}

TEST_CASE("render: wrist view at scene center matches a centered crop") {
    WorldState s = simple_state();
    s.grippers[0].x = 0.5;
    s.grippers[0].y = 0.5;
    s.objects[0].x = 0.40;
    s.objects[0].y = 0.58;
    Appearance ap;
    Image third = render(s, CameraKind::third_person, ap);
    Image wrist = render(s, CameraKind::wrist, ap);

    // locate the red object centroid in both views
    auto centroid = [](const Image& img) {
        double sx = 0, sy = 0, n = 0;
        for (int r = 0; r < img.h; ++r)
            for (int c = 0; c < img.w; ++c) {
                const float* p = img.at(r, c);
                if (p[0] > 0.6f && p[1] < 0.4f && p[2] < 0.4f) {
                    sx += c;
                    sy += r;
                    n += 1;
                }
            }
        REQUIRE(n > 0);
        return std::pair<double, double>(sx / n, sy / n);
    };
    auto [tx, ty] = centroid(third);
    auto [wx, wy] = centroid(wrist);
    // wrist view covers 0.22 half-extent vs 0.55: same world point maps 2.5x
    // farther from the image center
    double scale = 0.55 / 0.22;
    CHECK(std::abs((wx - 23.5) - (tx - 23.5) * scale) < 1.2);
    CHECK(std::abs((wy - 23.5) - (ty - 23.5) * scale) < 1.2);
}

TEST_CASE("render: magnitude-zero light perturbation is the identity") {
    Env env = make_env(Suite::spatial, 11);
    Env same = apply_perturbation(env, {PerturbFamily::light, 0.0, 99});
    CHECK(env.observe(CameraKind::third_person).px == same.observe(CameraKind::third_person).px);
    CHECK(env.task.instruction == same.task.instruction);
}

TEST_CASE("check_success: place task start false, constructed goal true") {
    Env env = make_env(Suite::spatial, 5);
    CHECK_FALSE(check_success(env.state, env.task));
    WorldState at_goal = env.state;
    at_goal.objects[0].x = env.task.stages[0].x;
    at_goal.objects[0].y = env.task.stages[0].y;
    CHECK(check_success(at_goal, env.task));
}

TEST_CASE("check_success: long suite needs both stages") {
    Env env = make_env(Suite::long_horizon, 7);
    REQUIRE(env.task.stages.size() == 2);
    WorldState stage1_only = env.state;
    stage1_only.objects[0].x = env.task.stages[0].x;
    stage1_only.objects[0].y = env.task.stages[0].y;
    // force the drawer to violate stage 2
    stage1_only.drawer_pos = env.task.stages[1].kind == GoalKind::drawer_open
                                 ? 0.0
                                 : geom::kDrawerTravel;
    CHECK_FALSE(check_success(stage1_only, env.task));
    WorldState both = stage1_only;
    both.drawer_pos =
        env.task.stages[1].kind == GoalKind::drawer_open ? geom::kDrawerTravel : 0.0;
    CHECK(check_success(both, env.task));
}

TEST_CASE("scripted expert: release at the terminal phase") {
    Env env = make_env(Suite::spatial, 3);
    auto& s = env.state;
    auto& goal = env.task.stages[0];
    s.grippers[0].x = goal.x;
    s.grippers[0].y = goal.y;
    s.grippers[0].open = false;
    s.grippers[0].held = 0;
    s.objects[0].x = goal.x;
    s.objects[0].y = goal.y;
    auto a = scripted_expert(s, env.task);
    CHECK(a[3] < 0);  // open command
}

TEST_CASE("scripted expert: succeeds on >= 99% of 500 seeded episodes per suite") {
    for (Suite suite : {Suite::spatial, Suite::object, Suite::goal, Suite::long_horizon}) {
        int ok = 0;
        const int n = 500;
        for (int i = 0; i < n; ++i) {
            Env env = make_env(suite, derive_seed(1234, "expert_eval", i));
            bool done = false;
            for (int t = 0; t < env.task.max_steps && !done; ++t) {
                auto a = scripted_expert(env.state, env.task);
                for (double v : a) CHECK(std::abs(v) <= 1.0);  // controller clamps
                step(env.state, a);
                done = check_success(env.state, env.task);
            }
            ok += done ? 1 : 0;
        }
        CHECK_MESSAGE(ok >= 495, suite_name(suite), ": ", ok, "/500");
    }
}

TEST_CASE("simulator replay reproduces logged states bit-exactly") {
    Env env = make_env(Suite::object, 21);
    WorldState init = env.state;
    std::vector<std::vector<double>> actions;
    std::vector<WorldState> states;
    for (int t = 0; t < 40; ++t) {
        auto a = scripted_expert(env.state, env.task);
        // round-trip through float32 like the dataset does
        for (auto& v : a) v = static_cast<double>(static_cast<float>(v));
        actions.push_back(a);
        step(env.state, a);
        states.push_back(env.state);
    }
    WorldState replay = init;
    for (size_t t = 0; t < actions.size(); ++t) {
        step(replay, actions[t]);
        CHECK(states_equal(replay, states[t]));
    }
}

TEST_CASE("perturbations: magnitude zero is identity for every family") {
    Env env = make_env(Suite::goal, 31);
    for (int f = 0; f < kPerturbFamilyCount; ++f) {
        Env same = apply_perturbation(env, {static_cast<PerturbFamily>(f), 0.0, 77});
        CHECK(env.observe(CameraKind::third_person).px ==
              same.observe(CameraKind::third_person).px);
        CHECK(env.task.instruction == same.task.instruction);
        CHECK(states_equal(env.state, same.state));
    }
}

TEST_CASE("perturbations: noise std matches the configured level") {
    Env env = make_env(Suite::spatial, 41);
    PerturbationSpec spec{PerturbFamily::noise, 0.5, 1234};
    Env noisy = apply_perturbation(env, spec);
    double configured = 0.10 * spec.magnitude;

    double sq = 0.0;
    int n = 0;
    for (uint64_t frame = 0; frame < 4; ++frame) {
        Image clean = render(env.state, CameraKind::third_person, env.appearance, frame);
        Image with = render(noisy.state, CameraKind::third_person, noisy.appearance, frame);
        for (size_t i = 0; i < clean.px.size(); ++i) {
            // skip pixels where [0,1] clamping would bias the sample
            if (clean.px[i] < 3 * configured || clean.px[i] > 1.0f - 3 * configured) continue;
            double d = static_cast<double>(with.px[i]) - static_cast<double>(clean.px[i]);
            sq += d * d;
            n += 1;
        }
    }
    REQUIRE(n > 10000);
    double std = std::sqrt(sq / n);
    CHECK(std == doctest::Approx(configured).epsilon(0.10));
}

TEST_CASE("perturbations: language rewrite preserves the goal predicate") {
    Rng rng(5);
    for (uint64_t seed = 0; seed < 20; ++seed) {
        Env env = make_env(Suite::object, derive_seed(9, "lang", seed));
        Env p = apply_perturbation(env, {PerturbFamily::language, 0.9, seed});
        CHECK(p.task.instruction != env.task.instruction);
        REQUIRE(p.task.stages.size() == env.task.stages.size());
        for (size_t i = 0; i < p.task.stages.size(); ++i) {
            CHECK(p.task.stages[i].kind == env.task.stages[i].kind);
            CHECK(p.task.stages[i].object_id == env.task.stages[i].object_id);
            CHECK(p.task.stages[i].x == env.task.stages[i].x);
            CHECK(p.task.stages[i].y == env.task.stages[i].y);
        }
    }
}

TEST_CASE("expert success is invariant under visual perturbation families") {
    for (auto family : {PerturbFamily::camera, PerturbFamily::light, PerturbFamily::background,
                        PerturbFamily::noise}) {
        Env env = make_env(Suite::spatial, 55);
        Env p = apply_perturbation(env, {family, 1.0, 123});
        bool done = false;
        for (int t = 0; t < p.task.max_steps && !done; ++t) {
            step(p.state, scripted_expert(p.state, p.task));
            done = check_success(p.state, p.task);
        }
        CHECK(done);
    }
}

TEST_CASE("vocab: tokenization of known and unknown words") {
    auto vocab = model::Vocab::build_default();
    auto ids = vocab.tokenize("push the red block");
    REQUIRE(ids.size() == 4);
    for (int id : ids) CHECK(id != model::Vocab::kUnkId);

    CHECK(vocab.tokenize("").empty());

    auto oov = vocab.tokenize("push the vermilion block");
    REQUIRE(oov.size() == 4);
    int unk_count = 0;
    for (int id : oov) unk_count += (id == model::Vocab::kUnkId) ? 1 : 0;
    CHECK(unk_count == 1);
    CHECK(oov[2] == model::Vocab::kUnkId);
}

TEST_CASE("vocab: file round trip preserves ids and hash") {
    auto vocab = model::Vocab::build_default();
    std::string path = "/tmp/vlalab_vocab_test.txt";
    vocab.save(path);
    auto back = model::Vocab::load(path);
    CHECK(back.size() == vocab.size());
    CHECK(back.hash() == vocab.hash());
    CHECK(back.tokenize("move the red block") == vocab.tokenize("move the red block"));
    std::filesystem::remove(path);
}

TEST_CASE("paraphrase lexicon is held out of the vocabulary") {
    auto vocab = model::Vocab::build_default();
    Rng rng(8);
    Env env = make_env(Suite::spatial, 61);
    std::string rewritten = paraphrase(env.task.instruction, 3, rng);
    auto ids = vocab.tokenize(rewritten);
    int unk = 0;
    for (int id : ids) unk += (id == model::Vocab::kUnkId) ? 1 : 0;
    CHECK(unk > 0);
}

TEST_CASE("dataset: deterministic bytes, all-success episodes, tail padding") {
    auto vocab = model::Vocab::build_default();
    DatasetOptions opt;
    opt.episodes = 3;
    opt.seed = 77;

    Dataset a = generate_dataset(Suite::spatial, opt, vocab);
    Dataset b = generate_dataset(Suite::spatial, opt, vocab);
    auto bytes_a = a.serialize();
    CHECK(bytes_a == b.serialize());

    // byte-exact round trip through serialization
    Dataset back = Dataset::deserialize(bytes_a);
    CHECK(back.serialize() == bytes_a);

    CHECK(a.header.n_episodes == 3);
    for (auto s : a.success) CHECK(s == 1);

    // tail chunks repeat the final action
    for (uint32_t ep = 0; ep < a.header.n_episodes; ++ep) {
        size_t last = a.episode_start[ep] + a.episode_len[ep] - 1;
        const float* chunk = a.chunk_ptr(last);
        for (int h = 1; h < a.header.chunk_t; ++h)
            for (int j = 0; j < a.header.action_dim; ++j)
                CHECK(chunk[h * a.header.action_dim + j] == chunk[j]);
    }

    // future_record clamps at the episode end
    size_t end = a.episode_start[0] + a.episode_len[0] - 1;
    CHECK(a.future_record(end, 8) == end);
    CHECK(a.future_record(a.episode_start[0], 8) == a.episode_start[0] + 8);
}

TEST_CASE("dataset: episode count is honored and instructions tokenize") {
    auto vocab = model::Vocab::build_default();
    DatasetOptions opt;
    opt.episodes = 2;
    opt.seed = 5;
    Dataset d = generate_dataset(Suite::object, opt, vocab);
    CHECK(d.header.n_episodes == 2);
    CHECK(d.n_records() > 10);
    auto ids = d.instruction_ids(0);
    CHECK(!ids.empty());
    for (int id : ids) CHECK(id < vocab.size());
}
