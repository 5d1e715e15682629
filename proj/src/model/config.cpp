#include "vlalab/model/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "vlalab/core/io.hpp"
#include "vlalab/sim/world.hpp"

namespace vlalab::model {

const char* to_string(PolicyDesign v) {
    switch (v) {
        case PolicyDesign::token_reuse: return "token_reuse";
        case PolicyDesign::separate_head: return "separate_head";
        case PolicyDesign::large_module: return "large_module";
    }
    return "?";
}

const char* to_string(ConditionType v) {
    switch (v) {
        case ConditionType::loose: return "loose";
        case ConditionType::tight: return "tight";
        case ConditionType::soft: return "soft";
    }
    return "?";
}

const char* to_string(ActionLoss v) {
    switch (v) {
        case ActionLoss::bin_cls: return "bin_cls";
        case ActionLoss::vq_cls: return "vq_cls";
        case ActionLoss::regression: return "regression";
        case ActionLoss::ddim: return "ddim";
        case ActionLoss::flow: return "flow";
    }
    return "?";
}

const char* to_string(Precision v) { return v == Precision::f32 ? "f32" : "f64"; }

namespace {

template <typename E>
E enum_from(const std::string& key, const std::string& value,
            const std::vector<std::pair<const char*, E>>& table) {
    for (const auto& [name, v] : table)
        if (value == name) return v;
    std::string allowed;
    for (const auto& [name, v] : table) {
        if (!allowed.empty()) allowed += ", ";
        allowed += name;
    }
    throw ConfigError("field '" + key + "': invalid value '" + value + "' (allowed: " + allowed +
                      ")");
}

const std::vector<std::pair<const char*, PolicyDesign>> kPolicyDesigns = {
    {"token_reuse", PolicyDesign::token_reuse},
    {"separate_head", PolicyDesign::separate_head},
    {"large_module", PolicyDesign::large_module}};
const std::vector<std::pair<const char*, ConditionType>> kConditionTypes = {
    {"loose", ConditionType::loose}, {"tight", ConditionType::tight}, {"soft", ConditionType::soft}};
const std::vector<std::pair<const char*, ActionLoss>> kActionLosses = {
    {"bin_cls", ActionLoss::bin_cls},
    {"vq_cls", ActionLoss::vq_cls},
    {"regression", ActionLoss::regression},
    {"ddim", ActionLoss::ddim},
    {"flow", ActionLoss::flow}};
const std::vector<std::pair<const char*, Precision>> kPrecisions = {{"f32", Precision::f32},
                                                                    {"f64", Precision::f64}};

struct Field {
    const char* section;
    const char* key;
    std::function<void(DesignConfig&, const std::string&)> set;
    std::function<std::string(const DesignConfig&)> get;
};

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("field '" + key + "': expected true/false, got '" + v + "'");
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw ConfigError("field '" + key + "': expected integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        uint64_t out = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw ConfigError("field '" + key + "': expected unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw ConfigError("field '" + key + "': expected number, got '" + v + "'");
    }
}

#define FIELD_DOUBLE(sec, name)                                                       \
    {sec, #name, [](DesignConfig& c, const std::string& v) { c.name = parse_double(#name, v); }, \
     [](const DesignConfig& c) { return fmt_double(c.name); }}
#define FIELD_INT(sec, name)                                                          \
    {sec, #name, [](DesignConfig& c, const std::string& v) { c.name = parse_int(#name, v); },    \
     [](const DesignConfig& c) { return std::to_string(c.name); }}
#define FIELD_U64(sec, name)                                                          \
    {sec, #name, [](DesignConfig& c, const std::string& v) { c.name = parse_u64(#name, v); },    \
     [](const DesignConfig& c) { return std::to_string(c.name); }}
#define FIELD_BOOL(sec, name)                                                         \
    {sec, #name, [](DesignConfig& c, const std::string& v) { c.name = parse_bool(#name, v); },   \
     [](const DesignConfig& c) { return c.name ? "true" : "false"; }}
#define FIELD_ENUM(sec, name, table)                                                  \
    {sec, #name,                                                                      \
     [](DesignConfig& c, const std::string& v) { c.name = enum_from(#name, v, table); }, \
     [](const DesignConfig& c) { return std::string(to_string(c.name)); }}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        FIELD_DOUBLE("optimization", learning_rate),
        FIELD_INT("optimization", batch_size),
        FIELD_INT("optimization", training_steps),
        FIELD_INT("optimization", warmup_steps),
        FIELD_DOUBLE("optimization", weight_decay),
        FIELD_DOUBLE("optimization", max_grad_norm),
        FIELD_ENUM("optimization", precision, kPrecisions),
        FIELD_INT("optimization", grad_shards),

        {"data", "suite",
         [](DesignConfig& c, const std::string& v) {
             sim::suite_from_name(v);  // validates
             c.suite = v;
         },
         [](const DesignConfig& c) { return c.suite; }},
        FIELD_INT("data", episodes),
        FIELD_U64("data", dataset_seed),
        FIELD_INT("data", history_proprioception_size),
        FIELD_INT("data", action_chunk_size),
        FIELD_BOOL("data", augment),
        FIELD_DOUBLE("data", crop_scale_min),
        FIELD_DOUBLE("data", crop_scale_max),
        FIELD_DOUBLE("data", crop_ratio_min),
        FIELD_DOUBLE("data", crop_ratio_max),
        FIELD_DOUBLE("data", color_jitter_brightness),
        FIELD_DOUBLE("data", color_jitter_contrast),
        FIELD_DOUBLE("data", color_jitter_saturation),
        FIELD_DOUBLE("data", color_jitter_hue),
        FIELD_BOOL("data", bimanual),

        FIELD_ENUM("architecture", policy_design, kPolicyDesigns),
        FIELD_ENUM("architecture", condition_type, kConditionTypes),
        FIELD_INT("architecture", num_queries),
        FIELD_ENUM("architecture", action_loss, kActionLosses),
        FIELD_BOOL("architecture", multi_view),
        FIELD_INT("architecture", history_frames),
        FIELD_BOOL("architecture", proprioception_to_vlm),
        FIELD_BOOL("architecture", proprioception_to_policy),
        FIELD_BOOL("architecture", transformer_proprioception_projector),
        FIELD_BOOL("architecture", world_modelling),
        FIELD_DOUBLE("architecture", world_loss_weight),
        FIELD_INT("architecture", world_codebook_size),
        FIELD_INT("architecture", world_horizon),
        FIELD_DOUBLE("architecture", frequency_domain_loss_weight),
        FIELD_INT("architecture", trunk_depth),
        FIELD_INT("architecture", trunk_width),
        FIELD_INT("architecture", trunk_heads),
        FIELD_INT("architecture", patch_size),
        FIELD_INT("architecture", image_size),
        FIELD_INT("architecture", mlp_ratio),
        FIELD_INT("architecture", policy_depth),
        FIELD_INT("architecture", policy_width),
        FIELD_INT("architecture", policy_heads),
        FIELD_INT("architecture", max_sequence_length),
        FIELD_INT("architecture", bin_count),
        FIELD_INT("architecture", vq_codebook_size),
        FIELD_INT("architecture", vq_levels),
        FIELD_INT("architecture", diffusion_train_steps),
        FIELD_INT("architecture", ddim_sample_steps),
        FIELD_INT("architecture", flow_sample_steps),

        FIELD_INT("evaluation", trials),
        FIELD_DOUBLE("evaluation", perturb_magnitude),
        FIELD_INT("evaluation", eval_max_steps),

        FIELD_U64("seeds", train_seed),
        FIELD_U64("seeds", eval_seed),
    };
    return f;
}

const Field* find_field(const std::string& key) {
    for (const auto& f : fields())
        if (key == f.key) return &f;
    return nullptr;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

void apply_override(DesignConfig& cfg, const std::string& key, const std::string& value) {
    const Field* f = find_field(key);
    if (!f) throw ConfigError("unknown config key '" + key + "'");
    f->set(cfg, value);
}

void DesignConfig::validate() const {
    auto require = [](bool ok, const std::string& msg) {
        if (!ok) throw ConfigError(msg);
    };

    require(learning_rate > 0, "field 'learning_rate': must be positive");
    require(batch_size >= 1, "field 'batch_size': must be >= 1");
    require(training_steps >= 1, "field 'training_steps': must be >= 1");
    require(warmup_steps >= 0 && warmup_steps < training_steps,
            "field 'warmup_steps': must lie in [0, training_steps)");
    require(max_grad_norm > 0, "field 'max_grad_norm': must be positive");
    require(grad_shards >= 1, "field 'grad_shards': must be >= 1");
    require(episodes >= 1, "field 'episodes': must be >= 1");
    require(history_proprioception_size >= 1,
            "field 'history_proprioception_size': must be >= 1");
    require(action_chunk_size == 1 || action_chunk_size == 4 || action_chunk_size == 8,
            "field 'action_chunk_size': must be one of 1, 4, 8");
    require(crop_scale_min > 0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
            "fields 'crop_scale_min'/'crop_scale_max': need 0 < min <= max <= 1");
    require(crop_ratio_min > 0 && crop_ratio_min <= crop_ratio_max,
            "fields 'crop_ratio_min'/'crop_ratio_max': need 0 < min <= max");

    require(num_queries >= 1, "field 'num_queries': must be >= 1");
    require(history_frames >= 0 && history_frames <= 8,
            "field 'history_frames': must lie in [0, 8]");
    require(frequency_domain_loss_weight >= 0.0 && frequency_domain_loss_weight <= 0.2,
            "field 'frequency_domain_loss_weight': must lie in [0, 0.2]");
    require(world_loss_weight >= 0.0, "field 'world_loss_weight': must be >= 0");
    require(world_codebook_size >= 2, "field 'world_codebook_size': must be >= 2");
    require(trunk_depth >= 1 && policy_depth >= 1 && trunk_width >= 4 && policy_width >= 4,
            "fields 'trunk_depth'/'policy_depth'/'trunk_width'/'policy_width': too small");
    require(trunk_width % trunk_heads == 0,
            "fields 'trunk_width'/'trunk_heads': width must be divisible by heads");
    require(policy_width % policy_heads == 0,
            "fields 'policy_width'/'policy_heads': width must be divisible by heads");
    require(image_size % patch_size == 0,
            "fields 'image_size'/'patch_size': image extent must be divisible by patch size");
    require(bin_count >= 2, "field 'bin_count': must be >= 2");
    require(vq_levels >= 1, "field 'vq_levels': must be >= 1");
    require(vq_codebook_size >= 2, "field 'vq_codebook_size': must be >= 2");
    require(diffusion_train_steps >= 2, "field 'diffusion_train_steps': must be >= 2");
    require(ddim_sample_steps >= 1, "field 'ddim_sample_steps': must be >= 1");
    require(flow_sample_steps >= 1, "field 'flow_sample_steps': must be >= 1");
    require(trials >= 1, "field 'trials': must be >= 1");
    require(perturb_magnitude >= 0.0 && perturb_magnitude <= 1.0,
            "field 'perturb_magnitude': must lie in [0, 1]");

    sim::suite_from_name(suite);  // throws with the bad value

    if (policy_design == PolicyDesign::token_reuse && action_loss != ActionLoss::bin_cls)
        throw ConfigError(
            "fields 'policy_design'/'action_loss': token_reuse requires bin classification; got "
            "policy_design=token_reuse with action_loss=" +
            std::string(to_string(action_loss)));
    if (policy_design == PolicyDesign::separate_head && condition_type != ConditionType::loose)
        throw ConfigError(
            "fields 'policy_design'/'condition_type': separate_head is the loose class-token "
            "design; got condition_type=" +
            std::string(to_string(condition_type)));
    if (world_modelling && world_horizon != action_chunk_size)
        throw ConfigError(
            "fields 'world_horizon'/'action_chunk_size': the world-model horizon must equal the "
            "action chunk size; got " +
            std::to_string(world_horizon) + " vs " + std::to_string(action_chunk_size));
}

DesignConfig parse_config_text(const std::string& text) {
    DesignConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        line_no += 1;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') continue;  // sections are cosmetic
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        apply_override(cfg, key, value);
    }
    cfg.validate();
    return cfg;
}

DesignConfig load_config(const std::string& path) {
    auto bytes = read_file(path);
    return parse_config_text(std::string(bytes.begin(), bytes.end()));
}

std::string config_to_text(const DesignConfig& cfg) {
    std::ostringstream out;
    std::string current_section;
    for (const auto& f : fields()) {
        if (f.section != current_section) {
            if (!current_section.empty()) out << "\n";
            out << "[" << f.section << "]\n";
            current_section = f.section;
        }
        out << f.key << " = " << f.get(cfg) << "\n";
    }
    return out.str();
}

void save_config(const DesignConfig& cfg, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw ConfigError("cannot write config: " + path);
    f << config_to_text(cfg);
}

DesignConfig ExperimentGrid::resolve(size_t row) const {
    if (row >= rows.size()) throw ConfigError("grid row index out of range");
    DesignConfig cfg = base;
    for (const auto& [k, v] : rows[row].overrides) apply_override(cfg, k, v);
    cfg.validate();
    return cfg;
}

ExperimentGrid parse_grid_text(const std::string& text) {
    ExperimentGrid grid;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    GridRow* current = nullptr;
    bool in_base = false;
    while (std::getline(in, line)) {
        line_no += 1;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            std::string head = trim(s.substr(1, s.size() - 2));
            if (head == "base") {
                in_base = true;
                current = nullptr;
            } else if (head.rfind("row", 0) == 0) {
                std::string name = trim(head.substr(3));
                if (name.size() >= 2 && name.front() == '"' && name.back() == '"')
                    name = name.substr(1, name.size() - 2);
                if (name.empty())
                    throw ConfigError("line " + std::to_string(line_no) + ": row needs a name");
                for (const auto& r : grid.rows)
                    if (r.name == name)
                        throw ConfigError("duplicate grid row name '" + name + "'");
                grid.rows.push_back({name, {}});
                current = &grid.rows.back();
                in_base = false;
            } else {
                throw ConfigError("line " + std::to_string(line_no) + ": unknown section [" +
                                  head + "]");
            }
            continue;
        }
        size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        if (in_base) {
            apply_override(grid.base, key, value);
        } else if (current) {
            current->overrides[key] = value;
        } else {
            throw ConfigError("line " + std::to_string(line_no) +
                              ": assignment outside [base] or [row ...]");
        }
    }
    if (grid.rows.empty()) throw ConfigError("grid has no rows");
    grid.base.validate();
    for (size_t i = 0; i < grid.rows.size(); ++i) grid.resolve(i);  // validate all rows
    return grid;
}

ExperimentGrid load_grid(const std::string& path) {
    auto bytes = read_file(path);
    return parse_grid_text(std::string(bytes.begin(), bytes.end()));
}

}  // namespace vlalab::model
