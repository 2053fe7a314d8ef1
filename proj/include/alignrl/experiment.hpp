#pragma once

#include <memory>
#include <string>
#include <vector>

#include "alignrl/eval.hpp"
#include "alignrl/run_config.hpp"

namespace alignrl {

struct ExperimentPaths {
    std::string dir;
    std::string config;      // resolved key=value dump
    std::string metrics;     // per-iteration CSV
    std::string summary;     // JSON run summary
    std::string checkpoint;  // trainer state
};

ExperimentPaths experiment_paths(const std::string& output_dir);

struct ExperimentResult {
    ExperimentPaths paths;
    double teacher_success = 0.0;
    double student_success = 0.0;
    long long env_steps = 0;
    long long paired_obs = 0;
};

// Runs the configured mode end to end and writes the resolved config,
// metrics CSV, JSON summary and checkpoint into the output directory.
ExperimentResult run_experiment(const RunConfig& config);

// Rebuilds the trainer the config describes; used for checkpoint loading.
std::unique_ptr<SittTrainer> make_trainer(const RunConfig& config,
                                          bool with_evaluator);

// The fixed per-environment layouts a maze run trains on.
std::vector<MazeLayout> training_layouts(const RunConfig& config);

struct CheckpointEvaluation {
    SuccessReport teacher;
    SuccessReport student;
};

// Deterministic held-out evaluation of a saved run (maze only).
CheckpointEvaluation evaluate_checkpoint(const RunConfig& config,
                                         const std::string& checkpoint_path);

// Writes trajectory.{txt,ppm} and occupancy.{txt,ppm} for one held-out
// layout under out_dir, tracing the requested policy.
void render_checkpoint(const RunConfig& config, const std::string& checkpoint_path,
                       int layout_index, PolicyRole role,
                       const std::string& out_dir);

// Success-rate mean and std per mode over the runs' summary files.
std::string make_report(const std::vector<std::string>& run_dirs);

}  // namespace alignrl
