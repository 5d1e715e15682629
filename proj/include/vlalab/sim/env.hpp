#pragma once

#include <string>
#include <vector>

#include "vlalab/sim/render.hpp"
#include "vlalab/sim/world.hpp"

namespace vlalab::sim {

// A runnable episode: world, goal, and how it is observed.
struct Env {
    WorldState state;
    TaskSpec task;
    Appearance appearance;

    Image observe(CameraKind cam) const {
        return render(state, cam, appearance, static_cast<uint64_t>(state.steps));
    }
};

Env make_env(Suite suite, uint64_t scene_seed, bool bimanual = false);

// ---------------------------------------------------------------------------
// perturbations
// ---------------------------------------------------------------------------

enum class PerturbFamily { camera, robot, language, light, background, noise, layout };

constexpr int kPerturbFamilyCount = 7;

const char* perturb_family_name(PerturbFamily f);
PerturbFamily perturb_family_from_name(const std::string& name);

struct PerturbationSpec {
    PerturbFamily family = PerturbFamily::camera;
    double magnitude = 0.5;  // in [0, 1]; 0 is the identity
    uint64_t seed = 0;
};

// Returns a perturbed copy. Goal predicates and object identities are never
// altered; magnitude 0 returns the environment bit-identically.
Env apply_perturbation(const Env& env, const PerturbationSpec& spec);

// ---------------------------------------------------------------------------
// language
// ---------------------------------------------------------------------------

// Every word the instruction templates can produce (sorted, unique).
std::vector<std::string> grammar_words();

// Rewrites an instruction using a held-out synonym lexicon. Tier 1 swaps
// verbs/prepositions, tier 2 also swaps nouns, tier 3 additionally swaps
// adjectives and wraps the sentence in filler. Goal semantics are preserved.
std::string paraphrase(const std::string& instruction, int tier, Rng& rng);

}  // namespace vlalab::sim
