#include "alignrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "alignrl/distributions.hpp"
#include "alignrl/errors.hpp"

namespace alignrl {

void PpoConfig::validate() const {
    if (gamma <= 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in (0, 1]");
    if (gae_lambda < 0.0 || gae_lambda > 1.0)
        throw ConfigError("gae_lambda must lie in [0, 1]");
    if (clip <= 0.0) throw ConfigError("clip range must be positive");
    if (entropy_coef < 0.0 || value_coef < 0.0)
        throw ConfigError("loss coefficients must be nonnegative");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (epochs < 1) throw ConfigError("epochs must be at least 1");
    if (minibatch_size < 0) throw ConfigError("minibatch_size must be nonnegative");
    if (lambda1 < 0.0 || lambda2 < 0.0)
        throw ConfigError("KL weights must be nonnegative");
}

double shape_reward(double task_reward, double kl, double lambda1) {
    if (kl < 0.0) throw ArgumentError("shape_reward: kl must be nonnegative");
    return task_reward - lambda1 * kl;
}

void RolloutBuffer::reset(int steps_, int num_envs_, int obs_dim_, int action_dim_) {
    if (steps_ < 1 || num_envs_ < 1 || obs_dim_ < 1)
        throw ArgumentError("rollout buffer dimensions must be positive");
    steps = steps_;
    num_envs = num_envs_;
    obs_dim = obs_dim_;
    action_dim = action_dim_;
    const int n = steps * num_envs;
    obs = Tensor2D(n, obs_dim);
    actions.assign(static_cast<std::size_t>(n), 0);
    cont_actions = action_dim > 0 ? Tensor2D(n, action_dim) : Tensor2D(1, 1);
    log_probs.assign(static_cast<std::size_t>(n), 0.0);
    rewards = Tensor2D(steps, num_envs);
    kl_penalty = Tensor2D(steps, num_envs);
    values = Tensor2D(steps, num_envs);
    dones = Tensor2D(steps, num_envs);
    advantages = Tensor2D(steps, num_envs);
    returns = Tensor2D(steps, num_envs);
    finalized = false;
}

double RolloutBuffer::task_reward_sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < rewards.data.size(); ++i)
        s += rewards.data[i] + kl_penalty.data[i];
    return s;
}

void compute_gae(const Tensor2D& rewards, const Tensor2D& values,
                 const Tensor2D& dones, const std::vector<double>& bootstrap_values,
                 double gamma, double gae_lambda, Tensor2D& advantages,
                 Tensor2D& returns) {
    if (!same_shape(rewards, values) || !same_shape(rewards, dones))
        throw ShapeError("compute_gae: input shapes differ");
    if (static_cast<int>(bootstrap_values.size()) != rewards.cols)
        throw ShapeError("compute_gae: one bootstrap value per environment required");
    advantages = Tensor2D(rewards.rows, rewards.cols);
    returns = Tensor2D(rewards.rows, rewards.cols);
    const int T = rewards.rows;
    for (int e = 0; e < rewards.cols; ++e) {
        double last_adv = 0.0;
        for (int t = T - 1; t >= 0; --t) {
            const double nonterminal = 1.0 - dones.at(t, e);
            const double next_value =
                t == T - 1 ? bootstrap_values[static_cast<std::size_t>(e)]
                           : values.at(t + 1, e);
            const double delta =
                rewards.at(t, e) + gamma * next_value * nonterminal - values.at(t, e);
            last_adv = delta + gamma * gae_lambda * nonterminal * last_adv;
            advantages.at(t, e) = last_adv;
            returns.at(t, e) = last_adv + values.at(t, e);
        }
    }
}

void RolloutBuffer::finalize(const std::vector<double>& bootstrap_values,
                             double gamma, double gae_lambda) {
    compute_gae(rewards, values, dones, bootstrap_values, gamma, gae_lambda,
                advantages, returns);
    advantages.check_finite("advantages");
    finalized = true;
}

void RolloutBuffer::normalize_advantages() {
    if (!finalized) throw StateError("normalize_advantages before finalize");
    const double n = static_cast<double>(advantages.data.size());
    double mean = 0.0;
    for (double v : advantages.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : advantages.data) var += (v - mean) * (v - mean);
    const double std = std::sqrt(var / n);
    for (double& v : advantages.data) v = (v - mean) / (std + 1e-8);
}

namespace {

Tensor2D gather_rows(const Tensor2D& src, const std::vector<int>& order, int lo,
                     int hi) {
    Tensor2D out(hi - lo, src.cols);
    for (int i = lo; i < hi; ++i) {
        const int r = order[static_cast<std::size_t>(i)];
        for (int c = 0; c < src.cols; ++c) out.at(i - lo, c) = src.at(r, c);
    }
    return out;
}

struct MinibatchView {
    Tensor2D obs;
    std::vector<int> actions;
    Tensor2D cont_actions;
    std::vector<double> old_log_probs, advantages, returns;
    int size() const { return obs.rows; }
};

MinibatchView gather_minibatch(const RolloutBuffer& buf,
                               const std::vector<int>& order, int lo, int hi) {
    MinibatchView mb;
    mb.obs = gather_rows(buf.obs, order, lo, hi);
    if (buf.action_dim > 0) mb.cont_actions = gather_rows(buf.cont_actions, order, lo, hi);
    mb.actions.reserve(static_cast<std::size_t>(hi - lo));
    mb.old_log_probs.reserve(static_cast<std::size_t>(hi - lo));
    mb.advantages.reserve(static_cast<std::size_t>(hi - lo));
    mb.returns.reserve(static_cast<std::size_t>(hi - lo));
    for (int i = lo; i < hi; ++i) {
        const std::size_t r = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
        mb.actions.push_back(buf.actions[r]);
        mb.old_log_probs.push_back(buf.log_probs[r]);
        // (steps, envs) tensors flatten to the same row index as obs rows
        mb.advantages.push_back(buf.advantages.data[r]);
        mb.returns.push_back(buf.returns.data[r]);
    }
    return mb;
}

void zero_update_grads(const TeacherUpdateNets& nets) {
    for (Mlp* net : {nets.encoder, nets.decoder, nets.critic}) {
        for (Tensor2D* p : net->parameters()) {
            p->ensure_grad();
            p->zero_grad();
        }
    }
    if (nets.log_std) {
        nets.log_std->ensure_grad();
        nets.log_std->zero_grad();
    }
}

PpoStats update_minibatch(const TeacherUpdateNets& nets, AdamOptimizer& optimizer,
                          const MinibatchView& mb, const PpoConfig& cfg,
                          bool continuous) {
    const int B = mb.size();
    const double invb = 1.0 / B;
    PpoStats stats;

    MlpCache enc_cache, dec_cache, critic_cache;
    Tensor2D feat = mlp_forward(*nets.encoder, mb.obs, &enc_cache);
    Tensor2D dec_out = mlp_forward(*nets.decoder, feat, &dec_cache);
    Tensor2D value = mlp_forward(*nets.critic, mb.obs, &critic_cache);

    std::vector<double> new_lp;
    if (continuous) {
        new_lp = gaussian_log_prob(dec_out, *nets.log_std, mb.cont_actions);
    } else {
        new_lp = categorical_log_prob(dec_out, mb.actions);
    }

    // clipped surrogate: per-sample upstream coefficient on the new log-prob
    std::vector<double> lp_coef(static_cast<std::size_t>(B), 0.0);
    int clipped = 0;
    for (int i = 0; i < B; ++i) {
        const double adv = mb.advantages[static_cast<std::size_t>(i)];
        const double ratio =
            std::exp(new_lp[static_cast<std::size_t>(i)] -
                     mb.old_log_probs[static_cast<std::size_t>(i)]);
        const double clamped = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
        const double u1 = ratio * adv;
        const double u2 = clamped * adv;
        stats.policy_loss += -std::min(u1, u2) * invb;
        if (u1 <= u2) lp_coef[static_cast<std::size_t>(i)] = -adv * ratio * invb;
        // the other branch is flat: the clamp is only preferred once saturated
        if (std::fabs(ratio - 1.0) > cfg.clip) ++clipped;
    }
    stats.clip_fraction = static_cast<double>(clipped) * invb;

    // value loss
    for (int i = 0; i < B; ++i) {
        const double err = value.at(i, 0) - mb.returns[static_cast<std::size_t>(i)];
        stats.value_loss += err * err * invb;
    }

    Tensor2D d_dec(dec_out.rows, dec_out.cols);
    if (continuous) {
        Tensor2D dlp_mean = gaussian_log_prob_grad_mean(dec_out, *nets.log_std,
                                                        mb.cont_actions);
        Tensor2D dlp_ls = gaussian_log_prob_grad_log_std(dec_out, *nets.log_std,
                                                         mb.cont_actions);
        nets.log_std->ensure_grad();
        for (int i = 0; i < B; ++i)
            for (int c = 0; c < dec_out.cols; ++c) {
                d_dec.at(i, c) = lp_coef[static_cast<std::size_t>(i)] * dlp_mean.at(i, c);
                nets.log_std->grad[static_cast<std::size_t>(c)] +=
                    lp_coef[static_cast<std::size_t>(i)] * dlp_ls.at(i, c);
            }
        stats.entropy = gaussian_entropy(*nets.log_std);
        // d(-coef * H)/d log_std = -coef per dimension
        for (int c = 0; c < nets.log_std->cols; ++c)
            nets.log_std->grad[static_cast<std::size_t>(c)] -= cfg.entropy_coef;
    } else {
        Tensor2D dlp = categorical_log_prob_grad(dec_out, mb.actions);
        Tensor2D dent = categorical_entropy_grad(dec_out);
        std::vector<double> ent = categorical_entropy_from_logits(dec_out);
        for (int i = 0; i < B; ++i) {
            stats.entropy += ent[static_cast<std::size_t>(i)] * invb;
            for (int c = 0; c < dec_out.cols; ++c)
                d_dec.at(i, c) = lp_coef[static_cast<std::size_t>(i)] * dlp.at(i, c) -
                                 cfg.entropy_coef * invb * dent.at(i, c);
        }
    }

    // lambda2 KL(teacher || proxy) on the same observations, proxy frozen.
    // With kl_grad_through_decoder the full derivative w.r.t. the shared
    // decoder is taken, which includes the proxy branch (the decoder produces
    // both sides of the KL); the proxy encoder itself never learns here.
    Tensor2D d_dec_kl(0, 0);
    Tensor2D d_proxy_out_kl(0, 0);
    MlpCache proxy_dec_cache;
    if (cfg.lambda2 != 0.0) {
        Tensor2D proxy_feat = mlp_forward(*nets.proxy_encoder, mb.obs);
        Tensor2D proxy_out = mlp_forward(
            *nets.decoder, proxy_feat,
            cfg.kl_grad_through_decoder ? &proxy_dec_cache : nullptr);
        if (continuous) {
            std::vector<double> kls =
                gaussian_kl_shared_cov(dec_out, proxy_out, *nets.log_std);
            for (double k : kls) stats.kl_term += k * invb;
            Tensor2D gm = gaussian_kl_shared_grad_mean1(dec_out, proxy_out,
                                                        *nets.log_std);
            Tensor2D gls = gaussian_kl_shared_grad_log_std(dec_out, proxy_out,
                                                           *nets.log_std);
            d_dec_kl = Tensor2D(B, dec_out.cols);
            if (cfg.kl_grad_through_decoder)
                d_proxy_out_kl = Tensor2D(B, dec_out.cols);
            for (int i = 0; i < B; ++i)
                for (int c = 0; c < dec_out.cols; ++c) {
                    d_dec_kl.at(i, c) = cfg.lambda2 * invb * gm.at(i, c);
                    if (cfg.kl_grad_through_decoder)
                        d_proxy_out_kl.at(i, c) = -d_dec_kl.at(i, c);
                    nets.log_std->grad[static_cast<std::size_t>(c)] +=
                        cfg.lambda2 * invb * gls.at(i, c);
                }
        } else {
            std::vector<double> kls =
                categorical_kl(softmax_rows(dec_out), softmax_rows(proxy_out));
            for (double k : kls) stats.kl_term += k * invb;
            d_dec_kl = categorical_kl_grad_p_logits(dec_out, proxy_out);
            for (double& v : d_dec_kl.data) v *= cfg.lambda2 * invb;
            if (cfg.kl_grad_through_decoder) {
                d_proxy_out_kl = categorical_kl_grad_q_logits(dec_out, proxy_out);
                for (double& v : d_proxy_out_kl.data) v *= cfg.lambda2 * invb;
            }
        }
    }

    stats.loss = stats.policy_loss + cfg.value_coef * stats.value_loss -
                 cfg.entropy_coef * stats.entropy + cfg.lambda2 * stats.kl_term;
    if (!std::isfinite(stats.loss)) {
        std::ostringstream dump;
        dump << "ppo update aborted: non-finite loss (policy=" << stats.policy_loss
             << " value=" << stats.value_loss << " entropy=" << stats.entropy
             << " kl=" << stats.kl_term << " batch=" << B << ")";
        throw NumericalError(dump.str());
    }

    Tensor2D d_value(B, 1);
    for (int i = 0; i < B; ++i)
        d_value.at(i, 0) = cfg.value_coef * 2.0 *
                           (value.at(i, 0) - mb.returns[static_cast<std::size_t>(i)]) *
                           invb;

    Tensor2D d_feat = mlp_backward(*nets.decoder, dec_cache, d_dec, true);
    if (cfg.lambda2 != 0.0) {
        Tensor2D d_feat_kl = mlp_backward(*nets.decoder, dec_cache, d_dec_kl,
                                          cfg.kl_grad_through_decoder);
        for (std::size_t i = 0; i < d_feat.data.size(); ++i)
            d_feat.data[i] += d_feat_kl.data[i];
        if (cfg.kl_grad_through_decoder)  // q branch; input grad discarded
            mlp_backward(*nets.decoder, proxy_dec_cache, d_proxy_out_kl, true);
    }
    mlp_backward(*nets.encoder, enc_cache, d_feat, true);
    mlp_backward(*nets.critic, critic_cache, d_value, true);

    optimizer.step();
    return stats;
}

}  // namespace

PpoStats ppo_teacher_update(const TeacherUpdateNets& nets, AdamOptimizer& optimizer,
                            RolloutBuffer& buffer, const PpoConfig& config,
                            Rng& shuffle_rng) {
    config.validate();
    if (!buffer.finalized)
        throw StateError("ppo_teacher_update: buffer must be finalized first");
    if (!nets.encoder || !nets.decoder || !nets.critic)
        throw ArgumentError("ppo_teacher_update: encoder, decoder, critic required");
    const bool continuous = buffer.action_dim > 0;
    if (continuous && !nets.log_std)
        throw ArgumentError("ppo_teacher_update: continuous policy needs log_std");
    if (config.lambda2 != 0.0 && !nets.proxy_encoder)
        throw ArgumentError("ppo_teacher_update: lambda2 > 0 needs a proxy encoder");

    if (config.normalize_advantages) buffer.normalize_advantages();

    const int n = buffer.size();
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    const int mb_size =
        config.minibatch_size <= 0 || config.minibatch_size >= n ? n
                                                                 : config.minibatch_size;

    PpoStats total;
    int batches = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        if (mb_size < n) {
            for (int i = n - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(shuffle_rng.uniform_int(0, i))]);
        }
        for (int lo = 0; lo < n; lo += mb_size) {
            const int hi = std::min(lo + mb_size, n);
            zero_update_grads(nets);
            MinibatchView mb = gather_minibatch(buffer, order, lo, hi);
            PpoStats s = update_minibatch(nets, optimizer, mb, config, continuous);
            total.loss += s.loss;
            total.policy_loss += s.policy_loss;
            total.value_loss += s.value_loss;
            total.entropy += s.entropy;
            total.kl_term += s.kl_term;
            total.clip_fraction += s.clip_fraction;
            ++batches;
        }
    }
    total.loss /= batches;
    total.policy_loss /= batches;
    total.value_loss /= batches;
    total.entropy /= batches;
    total.kl_term /= batches;
    total.clip_fraction /= batches;
    return total;
}

}  // namespace alignrl
