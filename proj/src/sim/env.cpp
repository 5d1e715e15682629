#include "vlalab/sim/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace vlalab::sim {

Env make_env(Suite suite, uint64_t scene_seed, bool bimanual) {
    Rng rng(derive_seed(scene_seed, "scene"));
    Scene sc = sample_scene(suite, rng, bimanual);
    Env env;
    env.state = std::move(sc.state);
    env.task = std::move(sc.task);
    return env;
}

const char* perturb_family_name(PerturbFamily f) {
    switch (f) {
        case PerturbFamily::camera: return "camera";
        case PerturbFamily::robot: return "robot";
        case PerturbFamily::language: return "language";
        case PerturbFamily::light: return "light";
        case PerturbFamily::background: return "background";
        case PerturbFamily::noise: return "noise";
        case PerturbFamily::layout: return "layout";
    }
    return "?";
}

PerturbFamily perturb_family_from_name(const std::string& name) {
    for (int i = 0; i < kPerturbFamilyCount; ++i) {
        auto f = static_cast<PerturbFamily>(i);
        if (name == perturb_family_name(f)) return f;
    }
    throw SimError("unknown perturbation family: " + name);
}

namespace {

// held-out background palette, never used by the canonical appearance
const std::array<std::array<double, 3>, 5> kAltBackgrounds = {{{0.62, 0.28, 0.34},
                                                               {0.18, 0.45, 0.22},
                                                               {0.14, 0.18, 0.42},
                                                               {0.58, 0.56, 0.18},
                                                               {0.06, 0.06, 0.09}}};

double signed_unit(Rng& rng) { return rng.uniform(-1.0, 1.0); }

void jitter_layout(Env& env, double magnitude, Rng& rng) {
    for (auto& o : env.state.objects) {
        o.x += rng.normal(0.0, 0.08 * magnitude);
        o.y += rng.normal(0.0, 0.08 * magnitude);
        o.x = std::clamp(o.x, 0.08, 0.72);
        o.y = std::clamp(o.y, 0.08, 0.92);
        // keep start states outside every goal region so tasks stay non-trivial
        for (const auto& g : env.task.stages) {
            if (g.kind != GoalKind::object_to_point || g.object_id != o.id) continue;
            double dx = o.x - g.x, dy = o.y - g.y;
            double d = std::hypot(dx, dy);
            double min_d = g.radius + 0.05;
            if (d < min_d) {
                if (d < 1e-9) {
                    dx = 1.0;
                    dy = 0.0;
                    d = 1.0;
                }
                o.x = std::clamp(g.x + dx / d * min_d, 0.08, 0.72);
                o.y = std::clamp(g.y + dy / d * min_d, 0.08, 0.92);
            }
        }
    }
}

}  // namespace

Env apply_perturbation(const Env& env, const PerturbationSpec& spec) {
    if (spec.magnitude < 0.0 || spec.magnitude > 1.0)
        throw SimError("apply_perturbation: magnitude outside [0, 1]");
    if (spec.magnitude == 0.0) return env;

    Env out = env;
    Rng rng(derive_seed(spec.seed, "perturb", static_cast<uint64_t>(spec.family)));
    double m = spec.magnitude;

    switch (spec.family) {
        case PerturbFamily::camera:
            out.appearance.cam_dx += 0.12 * m * signed_unit(rng);
            out.appearance.cam_dy += 0.12 * m * signed_unit(rng);
            out.appearance.cam_zoom *= 1.0 + 0.22 * m * signed_unit(rng);
            break;
        case PerturbFamily::robot:
            for (auto& g : out.state.grippers) {
                g.x = std::clamp(g.x + 0.22 * m * signed_unit(rng), geom::kGripperMin,
                                 geom::kGripperMax);
                g.y = std::clamp(g.y + 0.22 * m * signed_unit(rng), geom::kGripperMin,
                                 geom::kGripperMax);
                g.theta += 0.5 * m * signed_unit(rng);
            }
            break;
        case PerturbFamily::language: {
            int tier = 1 + static_cast<int>(std::min(m, 0.999) * 3.0);
            out.task.instruction = paraphrase(env.task.instruction, tier, rng);
            break;
        }
        case PerturbFamily::light: {
            double delta = 0.45 * m * signed_unit(rng);
            out.appearance.brightness = std::max(0.25, out.appearance.brightness * (1.0 + delta));
            break;
        }
        case PerturbFamily::background: {
            const auto& alt = kAltBackgrounds[rng.uniform_int(kAltBackgrounds.size())];
            for (int k = 0; k < 3; ++k)
                out.appearance.background[k] =
                    (1.0 - m) * out.appearance.background[k] + m * alt[k];
            break;
        }
        case PerturbFamily::noise:
            out.appearance.noise_std = 0.10 * m;
            out.appearance.noise_seed = spec.seed;
            break;
        case PerturbFamily::layout:
            jitter_layout(out, m, rng);
            break;
    }
    return out;
}

// ---------------------------------------------------------------------------
// language
// ---------------------------------------------------------------------------

namespace {

enum class WordClass { verb, noun, adjective };

struct LexEntry {
    WordClass cls;
    std::vector<const char*> synonyms;  // held out of the vocabulary
};

const std::map<std::string, LexEntry>& lexicon() {
    static const std::map<std::string, LexEntry> lex = {
        {"move", {WordClass::verb, {"shift", "slide", "bring"}}},
        {"push", {WordClass::verb, {"shove", "nudge"}}},
        {"put", {WordClass::verb, {"place", "drop", "set"}}},
        {"open", {WordClass::verb, {"pull", "unlatch"}}},
        {"close", {WordClass::verb, {"shut", "press"}}},
        {"to", {WordClass::verb, {"toward", "onto"}}},
        {"in", {WordClass::verb, {"into", "inside"}}},
        {"block", {WordClass::noun, {"cube", "brick"}}},
        {"ball", {WordClass::noun, {"sphere", "orb"}}},
        {"triangle", {WordClass::noun, {"wedge", "prism"}}},
        {"plate", {WordClass::noun, {"dish", "saucer"}}},
        {"box", {WordClass::noun, {"bin", "crate"}}},
        {"drawer", {WordClass::noun, {"compartment", "slider"}}},
        {"red", {WordClass::adjective, {"crimson", "scarlet"}}},
        {"green", {WordClass::adjective, {"emerald", "lime"}}},
        {"blue", {WordClass::adjective, {"azure", "navy"}}},
        {"yellow", {WordClass::adjective, {"amber", "gold"}}},
        {"left", {WordClass::adjective, {"leftmost", "port"}}},
        {"right", {WordClass::adjective, {"rightmost", "starboard"}}},
        {"top", {WordClass::adjective, {"upper", "far"}}},
        {"bottom", {WordClass::adjective, {"lower", "near"}}},
    };
    return lex;
}

}  // namespace

std::vector<std::string> grammar_words() {
    std::set<std::string> words = {"the", "then"};
    for (const auto& [w, e] : lexicon()) words.insert(w);
    return {words.begin(), words.end()};
}

std::string paraphrase(const std::string& instruction, int tier, Rng& rng) {
    if (tier < 1) return instruction;
    std::istringstream in(instruction);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);

    const auto& lex = lexicon();
    for (auto& word : words) {
        auto it = lex.find(word);
        if (it == lex.end()) continue;
        bool swap = false;
        switch (it->second.cls) {
            case WordClass::verb: swap = tier >= 1; break;
            case WordClass::noun: swap = tier >= 2; break;
            case WordClass::adjective: swap = tier >= 3; break;
        }
        if (swap) {
            const auto& syn = it->second.synonyms;
            word = syn[rng.uniform_int(static_cast<int>(syn.size()))];
        }
    }

    std::string out;
    if (tier >= 3) out = "could you please ";
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += " ";
        out += words[i];
    }
    if (tier >= 3) out += " now";
    return out;
}

}  // namespace vlalab::sim
