#pragma once

#include <vector>

#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

namespace alignrl {

// clamp applied to probabilities inside logarithms; multipliers stay exact
inline constexpr double kProbFloor = 1e-10;

// --- categorical over rows -------------------------------------------------

Tensor2D softmax_rows(const Tensor2D& logits);
Tensor2D log_softmax_rows(const Tensor2D& logits);

std::vector<double> categorical_log_prob(const Tensor2D& logits,
                                         const std::vector<int>& actions);
// d log pi(a_b | logits_b) / d logits: row b = onehot(a_b) - softmax(logits_b)
Tensor2D categorical_log_prob_grad(const Tensor2D& logits,
                                   const std::vector<int>& actions);

// rowwise H(p) = -sum p log p over probability rows
std::vector<double> categorical_entropy(const Tensor2D& probs);
std::vector<double> categorical_entropy_from_logits(const Tensor2D& logits);
// d H / d logits: row b, entry i = p_i (-log p_i - H_b)
Tensor2D categorical_entropy_grad(const Tensor2D& logits);

// rowwise KL(p || q) over probability rows
std::vector<double> categorical_kl(const Tensor2D& p, const Tensor2D& q);
// gradients of KL(softmax(u) || softmax(v)) wrt the logits
Tensor2D categorical_kl_grad_p_logits(const Tensor2D& logits_p,
                                      const Tensor2D& logits_q);
Tensor2D categorical_kl_grad_q_logits(const Tensor2D& logits_p,
                                      const Tensor2D& logits_q);

int sample_categorical_logits(Rng& rng, const Tensor2D& logits, int row);

// --- diagonal gaussian -----------------------------------------------------
// mean is (B, d); log_std is (1, d) and shared across the batch

std::vector<double> gaussian_log_prob(const Tensor2D& mean, const Tensor2D& log_std,
                                      const Tensor2D& actions);
Tensor2D gaussian_log_prob_grad_mean(const Tensor2D& mean, const Tensor2D& log_std,
                                     const Tensor2D& actions);
// per-sample, per-dim contribution; reduce over rows before applying
Tensor2D gaussian_log_prob_grad_log_std(const Tensor2D& mean, const Tensor2D& log_std,
                                        const Tensor2D& actions);

double gaussian_entropy(const Tensor2D& log_std);

// rowwise KL(N(mean1, S1) || N(mean2, S2)), diagonal covariances
std::vector<double> gaussian_kl(const Tensor2D& mean1, const Tensor2D& log_std1,
                                const Tensor2D& mean2, const Tensor2D& log_std2);
// reduction when both sides share one covariance: 1/2 (m1-m2)^T S^-1 (m1-m2)
std::vector<double> gaussian_kl_shared_cov(const Tensor2D& mean1,
                                           const Tensor2D& mean2,
                                           const Tensor2D& log_std);
Tensor2D gaussian_kl_shared_grad_mean1(const Tensor2D& mean1, const Tensor2D& mean2,
                                       const Tensor2D& log_std);
// per-sample, per-dim contribution to d KL / d log_std (negative: widening
// the shared covariance shrinks the mean-gap penalty)
Tensor2D gaussian_kl_shared_grad_log_std(const Tensor2D& mean1, const Tensor2D& mean2,
                                         const Tensor2D& log_std);

std::vector<double> sample_gaussian_row(Rng& rng, const Tensor2D& mean,
                                        const Tensor2D& log_std, int row);

}  // namespace alignrl
