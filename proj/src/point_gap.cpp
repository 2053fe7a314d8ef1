#include "alignrl/point_gap.hpp"

#include <algorithm>
#include <cmath>

#include "alignrl/errors.hpp"
#include "alignrl/rng.hpp"

namespace alignrl {

void PointGapConfig::validate() const {
    if (horizon < 1) throw ConfigError("pointgap horizon must be positive");
    if (step_forward <= 0.0) throw ConfigError("pointgap step_forward must be positive");
    if (obstacle_z <= 0.0 || obstacle_z >= 1.0)
        throw ConfigError("pointgap obstacle must sit inside the corridor");
    if (obstacle_half_width <= 0.0 || offset_range < 0.0 || fov <= 0.0)
        throw ConfigError("pointgap geometry values must be positive");
}

BatchedPointGap::BatchedPointGap(int num_envs, std::uint64_t root_seed,
                                 const PointGapConfig& config)
    : config_(config) {
    config_.validate();
    if (num_envs < 1) throw ArgumentError("need at least one environment");
    offsets_.resize(static_cast<std::size_t>(num_envs));
    for (int i = 0; i < num_envs; ++i) {
        Rng rng(derive_seed(root_seed, "pointgap_offset", i));
        offsets_[static_cast<std::size_t>(i)] =
            (2.0 * rng.uniform() - 1.0) * config_.offset_range;
    }
    states_.resize(static_cast<std::size_t>(num_envs));
    reset_all();
}

void BatchedPointGap::reset_all() {
    for (int i = 0; i < num_envs(); ++i) reset_env(i);
}

void BatchedPointGap::reset_env(int i) {
    PointGapState& s = states_.at(static_cast<std::size_t>(i));
    s = PointGapState{};
}

void BatchedPointGap::observe_teacher(Tensor2D& out) const {
    if (out.rows != num_envs() || out.cols != kPointGapTeacherObsDim)
        throw ShapeError("teacher observation tensor has wrong shape");
    for (int i = 0; i < num_envs(); ++i) {
        const PointGapState& s = states_[static_cast<std::size_t>(i)];
        double* row = &out.data[static_cast<std::size_t>(i) * out.cols];
        row[0] = s.x;
        row[1] = s.z;
        row[2] = offsets_[static_cast<std::size_t>(i)] - s.x;
        row[3] = config_.obstacle_z - s.z;
    }
}

void BatchedPointGap::observe_student(Tensor2D& out) const {
    if (out.rows != num_envs() || out.cols != kPointGapStudentObsDim)
        throw ShapeError("student observation tensor has wrong shape");
    for (int i = 0; i < num_envs(); ++i) {
        const PointGapState& s = states_[static_cast<std::size_t>(i)];
        double* row = &out.data[static_cast<std::size_t>(i) * out.cols];
        row[0] = s.x;
        row[1] = s.z;
        const double dist = config_.obstacle_z - s.z;
        const bool visible = std::fabs(dist) <= config_.fov;
        row[2] = visible ? offsets_[static_cast<std::size_t>(i)] - s.x : 0.0;
        row[3] = visible ? dist : 0.0;
    }
}

PointGapStepResult BatchedPointGap::step(const Tensor2D& actions) {
    if (actions.rows != num_envs() || actions.cols != kPointGapActionDim)
        throw ShapeError("pointgap actions tensor has wrong shape");
    PointGapStepResult result;
    result.reward.resize(static_cast<std::size_t>(num_envs()), 0.0);
    result.done.resize(static_cast<std::size_t>(num_envs()), 0);
    result.outcome.resize(static_cast<std::size_t>(num_envs()), Outcome::Running);

    for (int i = 0; i < num_envs(); ++i) {
        PointGapState& s = states_[static_cast<std::size_t>(i)];
        if (s.outcome != Outcome::Running)
            throw StateError("stepping a terminal environment without reset");
        const double prev_z = s.z;
        s.x = std::clamp(s.x + config_.steer_gain * std::tanh(actions.at(i, 0)),
                         -1.0, 1.0);
        s.z += config_.step_forward;
        double reward = config_.step_forward;

        const bool crossed = prev_z < config_.obstacle_z && s.z >= config_.obstacle_z;
        if (crossed && std::fabs(s.x - offsets_[static_cast<std::size_t>(i)]) <
                           config_.obstacle_half_width) {
            reward = -1.0;
            s.outcome = Outcome::Fail;
        } else if (s.z >= 1.0) {
            s.outcome = Outcome::Success;
        }
        ++s.step_count;
        s.episode_return += reward;
        if (s.outcome == Outcome::Running && s.step_count >= config_.horizon)
            s.outcome = Outcome::Truncated;

        result.reward[static_cast<std::size_t>(i)] = reward;
        result.outcome[static_cast<std::size_t>(i)] = s.outcome;
        if (s.outcome != Outcome::Running) {
            result.done[static_cast<std::size_t>(i)] = 1;
            result.finished_returns.push_back(s.episode_return);
            result.finished_outcomes.push_back(s.outcome);
            reset_env(i);
        }
    }
    return result;
}

}  // namespace alignrl
