#pragma once

#include <cstdint>
#include <vector>

#include "alignrl/adam.hpp"
#include "alignrl/eval.hpp"
#include "alignrl/mlp.hpp"
#include "alignrl/trainer.hpp"

namespace alignrl {

// Probability of executing the frozen expert during collection round i
// (1-based): beta_i = beta0^i, non-increasing. beta0 = 1 keeps every round on
// the expert (behavior cloning's state distribution); beta0 = 0 hands every
// round to the student.
struct DaggerSchedule {
    double beta0 = 0.98;

    double beta(int round) const;
    void validate() const;
};

// Imitation learner: its own encoder feeding a private decoder (initialized
// as a copy of the expert's, trained independently afterwards).
struct ImitationStudent {
    Mlp encoder;
    Mlp decoder;

    std::uint64_t parameter_hash() const;
    void validate() const;
};

ImitationStudent make_imitation_student(const PolicyBundle& expert,
                                        std::uint64_t seed);

// Deterministic (argmax) maze actor reading student observations.
MazeActor make_imitation_actor(const ImitationStudent& student);

// Growing table of (student observation, expert action probabilities).
struct ImitationDataset {
    int obs_dim = 0;
    int label_dim = 0;
    std::vector<double> obs;     // row-major rows x obs_dim
    std::vector<double> labels;  // row-major rows x label_dim

    ImitationDataset(int obs_dim, int label_dim);
    long long rows() const;
    void append(const double* obs_row, const double* label_row);
    // copies the given rows into freshly shaped tensors
    void gather(const std::vector<long long>& indices, Tensor2D& obs_out,
                Tensor2D& labels_out) const;
};

struct ImitationConfig {
    int iterations = 10;      // collection rounds
    int rollout_steps = 128;  // env steps per round
    int refit_passes = 20;    // dataset passes per refit
    int batch_size = 256;     // 0 = one full-dataset step per pass
    double learning_rate = 3e-4;
    DaggerSchedule schedule;  // dagger only; cloning pins beta to 1

    void validate() const;
};

struct BudgetLedger {
    long long env_steps = 0;
    long long paired_obs = 0;
};

// soft cross-entropy fitting run; losses are per-pass means
struct RefitStats {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    long long gradient_steps = 0;
};

RefitStats refit_imitation_student(ImitationStudent& student,
                                   AdamOptimizer& optimizer,
                                   const ImitationDataset& dataset, int passes,
                                   int batch_size, Rng& shuffle_rng);

struct ImitationResult {
    ImitationStudent student;
    ImitationDataset dataset;
    BudgetLedger budget;
    std::vector<double> beta;                   // per round
    std::vector<long long> expert_actions;      // executed expert count per round
    std::vector<long long> round_steps;         // coin flips per round
    std::vector<RefitStats> refits;
};

// Rolls out the frozen expert, labels every state with its action
// distribution, and fits the student once on the full dataset.
ImitationResult train_bc(const PolicyBundle& expert, VecEnv& env,
                         const ImitationConfig& config, std::uint64_t seed);

// Per step executes the expert with probability beta_i, the student
// otherwise; always labels with the expert distribution, aggregates the
// dataset and refits after every round.
ImitationResult train_dagger(const PolicyBundle& expert, VecEnv& env,
                             const ImitationConfig& config, std::uint64_t seed);

// Joint-training variant with the action-divergence terms removed from both
// the reward and the policy loss while the paired feature alignment stays on.
SittConfig without_alignment(SittConfig config);

}  // namespace alignrl
