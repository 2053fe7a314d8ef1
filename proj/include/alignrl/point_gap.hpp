#pragma once

#include <cstdint>
#include <vector>

#include "alignrl/color_maze.hpp"  // Outcome enum
#include "alignrl/tensor.hpp"

namespace alignrl {

// One-dimensional corridor dash with a single obstacle.
//
// The agent advances a fixed 0.05 forward per step and steers laterally with
// a scalar action a: x <- clamp(x + 0.2 tanh(a), -1, 1). An obstacle of half
// width 0.25 sits at forward position 0.5 with a per-environment lateral
// offset drawn once from U(-0.5, 0.5). Crossing the obstacle plane closer
// than the half width fails the episode with reward -1; otherwise each step
// pays the forward progress 0.05 and reaching z >= 1 succeeds.
//
// The teacher always observes the obstacle's relative offset and distance;
// the student sees them only within a forward field of view of 0.2 and reads
// the sentinel 0 outside it.
struct PointGapConfig {
    int horizon = 25;
    double step_forward = 0.05;
    double steer_gain = 0.2;
    double obstacle_z = 0.5;
    double obstacle_half_width = 0.25;
    double offset_range = 0.5;
    double fov = 0.2;

    void validate() const;
};

inline constexpr int kPointGapActionDim = 1;
inline constexpr int kPointGapTeacherObsDim = 4;  // x, z, offset - x, obstacle_z - z
inline constexpr int kPointGapStudentObsDim = 4;  // same, obstacle channels gated

struct PointGapState {
    double x = 0.0;
    double z = 0.0;
    int step_count = 0;
    Outcome outcome = Outcome::Running;
    double episode_return = 0.0;
};

struct PointGapStepResult {
    std::vector<double> reward;
    std::vector<int> done;
    std::vector<Outcome> outcome;
    std::vector<double> finished_returns;
    std::vector<Outcome> finished_outcomes;
};

class BatchedPointGap {
   public:
    // per-environment obstacle offsets are drawn once from the seeds
    BatchedPointGap(int num_envs, std::uint64_t root_seed, const PointGapConfig& config);

    int num_envs() const { return static_cast<int>(offsets_.size()); }
    const PointGapConfig& config() const { return config_; }
    double offset(int i) const { return offsets_.at(static_cast<std::size_t>(i)); }
    const PointGapState& state(int i) const { return states_.at(static_cast<std::size_t>(i)); }
    PointGapState& mutable_state(int i) { return states_.at(static_cast<std::size_t>(i)); }

    void reset_all();
    void reset_env(int i);

    void observe_teacher(Tensor2D& out) const;
    void observe_student(Tensor2D& out) const;

    PointGapStepResult step(const Tensor2D& actions);  // (num_envs, 1)

   private:
    PointGapConfig config_;
    std::vector<double> offsets_;
    std::vector<PointGapState> states_;
};

}  // namespace alignrl
