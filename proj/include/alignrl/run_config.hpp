#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "alignrl/baselines.hpp"
#include "alignrl/color_maze.hpp"
#include "alignrl/point_gap.hpp"
#include "alignrl/trainer.hpp"

namespace alignrl {

// Flat sectioned key=value experiment description. Every field has a
// documented default (the desk-scale maze recipe); unknown keys are rejected
// with line diagnostics.
struct RunConfig {
    // [run]
    std::uint64_t seed = 42;
    std::string mode = "joint";  // joint | wo_alignment | plain | bc | dagger
    std::string output_dir = "runs/out";
    // [env]
    std::string env_kind = "maze";  // maze | pointgap
    int num_envs = 64;
    int grid_size = 11;
    int region_size = 7;
    int horizon = 150;
    int eval_layouts = 15;
    int eval_episodes = 1;
    // [phases]
    int iterations = 150;
    int rollout_steps = 128;
    int ppo_epochs = 1;
    int alignment_iters = 20;
    // [ppo]
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    double entropy_coef = 0.3;
    double value_coef = 0.5;
    double learning_rate = 3e-4;
    int minibatch_size = 0;
    double lambda1 = 1.9;
    double lambda2 = 0.001;
    bool normalize_advantages = true;
    bool kl_grad_through_decoder = false;
    // [alignment]
    double align_learning_rate = 3e-4;
    double align_env_fraction = 1.0;
    int align_buffer_capacity = 0;
    int align_batch = 4096;
    // [baseline]
    double dagger_beta0 = 0.98;
    int refit_passes = 20;
    int refit_batch = 256;
    double imitation_learning_rate = 3e-4;
    double teacher_fraction = 0.75;

    void validate() const;

    // mode adjustments (plain / wo_alignment) are applied by the experiment
    SittConfig to_sitt() const;
    ImitationConfig to_imitation(int collect_iterations) const;
    MazeConfig to_maze() const;
    PointGapConfig to_pointgap() const;
};

// throws ConfigError citing the offending line and key
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

// "--set section.key=value" style single override
void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value);

// Applies ALIGNRL_SECTION_KEY environment overrides; the getter is injected
// so tests can fake the environment. Returns how many fields changed.
int apply_env_overrides(RunConfig& config,
                        const std::function<const char*(const std::string&)>& get_env);
int apply_env_overrides(RunConfig& config);

// resolved config text: every key with its current value and doc comment;
// parses back to an identical config
std::string dump_run_config(const RunConfig& config);

// shortest exact decimal round-trip text for a double
std::string format_exact(double value);

std::string metrics_csv(const std::vector<IterationMetrics>& rows);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace alignrl
