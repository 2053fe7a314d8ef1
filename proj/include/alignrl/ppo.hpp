#pragma once

#include <vector>

#include "alignrl/adam.hpp"
#include "alignrl/mlp.hpp"
#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

namespace alignrl {

struct PpoConfig {
    double gamma = 0.99;
    double gae_lambda = 0.95;
    double clip = 0.2;
    double entropy_coef = 0.0;
    double value_coef = 0.5;
    double lr = 3e-4;
    int epochs = 1;
    int minibatch_size = 0;  // 0 = one full-batch pass per epoch
    double lambda1 = 0.0;    // reward-side KL weight
    double lambda2 = 0.0;    // loss-side KL weight
    bool normalize_advantages = true;
    // route the loss-side KL gradient into the shared decoder as well (the
    // default confines it to the acting encoder)
    bool kl_grad_through_decoder = false;

    void validate() const;
};

double shape_reward(double task_reward, double kl, double lambda1);

// Fixed-capacity on-policy store, row index = step * num_envs + env.
// `rewards` holds the shaped reward; the subtracted kl penalty (lambda1 * KL)
// is kept alongside so the raw task reward stays recoverable.
struct RolloutBuffer {
    int steps = 0, num_envs = 0, obs_dim = 0, action_dim = 0;  // 0 = discrete
    Tensor2D obs;                 // (steps*num_envs, obs_dim)
    std::vector<int> actions;     // discrete actions
    Tensor2D cont_actions;        // (steps*num_envs, action_dim) when continuous
    std::vector<double> log_probs;
    Tensor2D rewards;             // (steps, num_envs), shaped
    Tensor2D kl_penalty;          // (steps, num_envs)
    Tensor2D values;              // (steps, num_envs)
    Tensor2D dones;               // (steps, num_envs), 0/1
    Tensor2D advantages;          // (steps, num_envs)
    Tensor2D returns;             // (steps, num_envs)
    bool finalized = false;

    void reset(int steps, int num_envs, int obs_dim, int action_dim);
    int size() const { return steps * num_envs; }
    double task_reward_sum() const;

    // GAE over the stored rewards, then returns = advantages + values
    void finalize(const std::vector<double>& bootstrap_values, double gamma,
                  double gae_lambda);
    // per update batch, idempotent
    void normalize_advantages();
};

void compute_gae(const Tensor2D& rewards, const Tensor2D& values,
                 const Tensor2D& dones, const std::vector<double>& bootstrap_values,
                 double gamma, double gae_lambda, Tensor2D& advantages,
                 Tensor2D& returns);

// networks the teacher update touches; proxy stays frozen and only feeds the
// lambda2 KL term
struct TeacherUpdateNets {
    Mlp* encoder = nullptr;
    Mlp* decoder = nullptr;
    Mlp* critic = nullptr;
    Mlp* proxy_encoder = nullptr;   // may be null when lambda2 == 0
    Tensor2D* log_std = nullptr;    // continuous policies only
};

struct PpoStats {
    double loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
    double kl_term = 0.0;  // mean KL(teacher || proxy) over the batch
    double clip_fraction = 0.0;
};

// Runs epochs x minibatches of Adam steps on the combined loss
//   clipped surrogate + value_coef * value MSE - entropy_coef * entropy
//   + lambda2 * mean KL(teacher || proxy).
// Full-batch passes draw nothing from `shuffle_rng`; minibatched ones use it
// to shuffle row order once per epoch. Returns stats averaged over steps.
PpoStats ppo_teacher_update(const TeacherUpdateNets& nets, AdamOptimizer& optimizer,
                            RolloutBuffer& buffer, const PpoConfig& config,
                            Rng& shuffle_rng);

}  // namespace alignrl
