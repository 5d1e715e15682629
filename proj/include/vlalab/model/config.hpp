#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlalab::model {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PolicyDesign { token_reuse, separate_head, large_module };
enum class ConditionType { loose, tight, soft };
enum class ActionLoss { bin_cls, vq_cls, regression, ddim, flow };
enum class Precision { f32, f64 };

const char* to_string(PolicyDesign v);
const char* to_string(ConditionType v);
const char* to_string(ActionLoss v);
const char* to_string(Precision v);

// One coordinate in the design space: a value for every ablation axis plus
// all training hyperparameters. Defaults are the final-recipe configuration.
struct DesignConfig {
    // optimization
    double learning_rate = 1e-4;
    int batch_size = 32;
    int training_steps = 2000;
    int warmup_steps = 500;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0;
    Precision precision = Precision::f32;
    int grad_shards = 8;

    // data
    std::string suite = "spatial";
    int episodes = 200;
    uint64_t dataset_seed = 1;
    int history_proprioception_size = 8;
    int action_chunk_size = 8;
    bool augment = true;
    double crop_scale_min = 0.8, crop_scale_max = 1.0;
    double crop_ratio_min = 0.9, crop_ratio_max = 1.1;
    double color_jitter_brightness = 0.2;
    double color_jitter_contrast = 0.2;
    double color_jitter_saturation = 0.2;
    double color_jitter_hue = 0.05;
    bool bimanual = false;

    // architecture
    PolicyDesign policy_design = PolicyDesign::large_module;
    ConditionType condition_type = ConditionType::soft;
    int num_queries = 16;
    ActionLoss action_loss = ActionLoss::flow;
    bool multi_view = true;
    int history_frames = 0;  // temporal observation history off by default
    bool proprioception_to_vlm = true;
    bool proprioception_to_policy = false;
    bool transformer_proprioception_projector = false;
    bool world_modelling = false;
    double world_loss_weight = 1.0;
    int world_codebook_size = 32;
    int world_horizon = 8;
    double frequency_domain_loss_weight = 0.1;
    int trunk_depth = 4;
    int trunk_width = 128;
    int trunk_heads = 4;
    int patch_size = 6;
    int image_size = 48;
    int mlp_ratio = 4;
    int policy_depth = 6;
    int policy_width = 128;
    int policy_heads = 4;
    int max_sequence_length = 768;
    int bin_count = 256;
    int vq_codebook_size = 64;
    int vq_levels = 3;
    int diffusion_train_steps = 100;
    int ddim_sample_steps = 10;
    int flow_sample_steps = 16;

    // evaluation
    int trials = 50;
    double perturb_magnitude = 0.5;
    int eval_max_steps = 100;

    // seeds
    uint64_t train_seed = 1;
    uint64_t eval_seed = 1;

    // derived views of the design axes
    int effective_num_queries() const {
        return policy_design == PolicyDesign::separate_head ? 1 : num_queries;
    }
    int effective_policy_depth() const {
        return policy_design == PolicyDesign::separate_head ? 2 : policy_depth;
    }
    int action_dim() const { return bimanual ? 8 : 4; }
    int proprio_dim() const { return bimanual ? 8 : 4; }
    bool uses_policy_module() const { return policy_design != PolicyDesign::token_reuse; }

    // throws ConfigError with a field-level message on any violation
    void validate() const;

    bool operator==(const DesignConfig&) const = default;
};

// Line-oriented `key = value` files with [section] headers; '#' comments.
DesignConfig parse_config_text(const std::string& text);
DesignConfig load_config(const std::string& path);
std::string config_to_text(const DesignConfig& cfg);
void save_config(const DesignConfig& cfg, const std::string& path);

// Experiment grid: a base config plus named single-axis override rows.
struct GridRow {
    std::string name;
    std::map<std::string, std::string> overrides;
};

struct ExperimentGrid {
    DesignConfig base;
    std::vector<GridRow> rows;

    // resolved config for a row (overrides applied, then validated)
    DesignConfig resolve(size_t row) const;
};

ExperimentGrid parse_grid_text(const std::string& text);
ExperimentGrid load_grid(const std::string& path);

// Applies one key=value assignment (same keys as config files).
void apply_override(DesignConfig& cfg, const std::string& key, const std::string& value);

}  // namespace vlalab::model
