#include "alignrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <fstream>
#include <limits>
#include <sstream>

#include "alignrl/distributions.hpp"
#include "alignrl/errors.hpp"

namespace alignrl {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double l1_sign(double d) { return (d > 0.0) - (d < 0.0); }

void init_net(Mlp& net, double head_gain, Rng& rng) {
    for (DenseLayer& layer : net.layers) {
        const double gain =
            layer.activation == Activation::Elu ? std::sqrt(2.0) : head_gain;
        init_orthogonal(layer.weight, gain, rng);
    }
}

double mean_or_nan(const std::vector<double>& v) {
    if (v.empty()) return kNan;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

void write_row(std::ostream& out, const double* row, int n) {
    for (int i = 0; i < n; ++i) out << (i ? " " : "") << row[i];
    out << '\n';
}

void expect_tag(std::istream& in, const std::string& want, const char* where) {
    std::string got;
    in >> got;
    if (got != want)
        throw StateError(std::string(where) + ": expected '" + want + "', got '" +
                         got + "'");
}

}  // namespace

// ---------------------------------------------------------------- bundle

std::uint64_t PolicyBundle::parameter_hash() const {
    std::uint64_t h = teacher_encoder.parameter_hash();
    h = hash_combine(h, student_encoder.parameter_hash());
    h = hash_combine(h, proxy_encoder.parameter_hash());
    h = hash_combine(h, shared_decoder.parameter_hash());
    h = hash_combine(h, critic.parameter_hash());
    if (log_std.rows > 0) h = hash_combine(h, hash_tensor(log_std));
    return h;
}

void PolicyBundle::validate() const {
    teacher_encoder.validate();
    student_encoder.validate();
    proxy_encoder.validate();
    shared_decoder.validate();
    critic.validate();
    const int feat = shared_decoder.input_width();
    if (teacher_encoder.output_width() != feat ||
        student_encoder.output_width() != feat ||
        proxy_encoder.output_width() != feat)
        throw ShapeError("policy bundle: encoder feature widths must match the decoder");
    if (proxy_encoder.input_width() != teacher_encoder.input_width())
        throw ShapeError("policy bundle: proxy must read teacher observations");
    if (critic.input_width() != teacher_encoder.input_width())
        throw ShapeError("policy bundle: critic must read teacher observations");
    if (critic.output_width() != 1)
        throw ShapeError("policy bundle: critic must emit one value");
    if (continuous) {
        if (log_std.rows != 1 || log_std.cols != shared_decoder.output_width())
            throw ShapeError("policy bundle: log_std must be (1, action_dim)");
    } else if (log_std.rows != 0) {
        throw ShapeError("policy bundle: discrete policies carry no log_std");
    }
}

PolicyBundle make_policy_bundle(int teacher_obs_dim, int student_obs_dim,
                                int action_count, bool continuous,
                                std::uint64_t seed) {
    if (teacher_obs_dim < 1 || student_obs_dim < 1 || action_count < 1)
        throw ArgumentError("make_policy_bundle: dimensions must be positive");
    const int w = 64;
    PolicyBundle b;
    b.continuous = continuous;
    b.teacher_encoder = make_mlp({teacher_obs_dim, w, w, w});
    b.student_encoder = make_mlp({student_obs_dim, w, w, w});
    b.proxy_encoder = make_mlp({teacher_obs_dim, w, w, w});
    b.shared_decoder = make_mlp({w, action_count});
    b.critic = make_mlp({teacher_obs_dim, w, w, 1});

    Rng te(derive_seed(seed, "bundle.teacher_encoder", 0));
    Rng se(derive_seed(seed, "bundle.student_encoder", 0));
    Rng pe(derive_seed(seed, "bundle.proxy_encoder", 0));
    Rng de(derive_seed(seed, "bundle.decoder", 0));
    Rng cr(derive_seed(seed, "bundle.critic", 0));
    init_net(b.teacher_encoder, 1.0, te);
    init_net(b.student_encoder, 1.0, se);
    init_net(b.proxy_encoder, 1.0, pe);
    init_net(b.shared_decoder, 1.0, de);
    init_net(b.critic, 1.0, cr);
    if (continuous) b.log_std = Tensor2D(1, action_count, 0.0);
    b.validate();
    return b;
}

// ---------------------------------------------------------------- buffer

AlignmentBuffer::AlignmentBuffer(int capacity, int teacher_dim, int student_dim)
    : capacity_(capacity), teacher_dim_(teacher_dim), student_dim_(student_dim) {
    if (capacity < 1 || teacher_dim < 1 || student_dim < 1)
        throw ArgumentError("alignment buffer: capacity and dims must be positive");
    teacher_data_.assign(static_cast<std::size_t>(capacity) * teacher_dim, 0.0);
    student_data_.assign(static_cast<std::size_t>(capacity) * student_dim, 0.0);
}

std::size_t AlignmentBuffer::slot(int chrono) const {
    return static_cast<std::size_t>((head_ + capacity_ - count_ + chrono) % capacity_);
}

void AlignmentBuffer::push(const double* teacher_row, const double* student_row) {
    const std::size_t s = static_cast<std::size_t>(head_);
    std::copy(teacher_row, teacher_row + teacher_dim_,
              teacher_data_.begin() + s * teacher_dim_);
    std::copy(student_row, student_row + student_dim_,
              student_data_.begin() + s * student_dim_);
    head_ = (head_ + 1) % capacity_;
    count_ = std::min(count_ + 1, capacity_);
}

void AlignmentBuffer::gather(const std::vector<int>& rows, Tensor2D& teacher_out,
                             Tensor2D& student_out) const {
    teacher_out = Tensor2D(static_cast<int>(rows.size()), teacher_dim_);
    student_out = Tensor2D(static_cast<int>(rows.size()), student_dim_);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] < 0 || rows[i] >= count_)
            throw ArgumentError("alignment buffer: row index out of range");
        const std::size_t s = slot(rows[i]);
        std::copy_n(teacher_data_.begin() + s * teacher_dim_, teacher_dim_,
                    teacher_out.data.begin() + i * teacher_dim_);
        std::copy_n(student_data_.begin() + s * student_dim_, student_dim_,
                    student_out.data.begin() + i * student_dim_);
    }
}

void AlignmentBuffer::gather_all(Tensor2D& teacher_out, Tensor2D& student_out) const {
    std::vector<int> rows(static_cast<std::size_t>(count_));
    for (int i = 0; i < count_; ++i) rows[static_cast<std::size_t>(i)] = i;
    gather(rows, teacher_out, student_out);
}

void AlignmentBuffer::save(std::ostream& out) const {
    out << "alignment_buffer " << count_ << '\n';
    for (int i = 0; i < count_; ++i) {
        const std::size_t s = slot(i);
        for (int c = 0; c < teacher_dim_; ++c)
            out << (c ? " " : "") << teacher_data_[s * teacher_dim_ + c];
        for (int c = 0; c < student_dim_; ++c)
            out << ' ' << student_data_[s * student_dim_ + c];
        out << '\n';
    }
}

void AlignmentBuffer::load(std::istream& in) {
    expect_tag(in, "alignment_buffer", "alignment buffer load");
    int n = -1;
    in >> n;
    if (n < 0 || n > capacity_)
        throw StateError("alignment buffer load: bad count");
    // repack chronologically from slot zero; observable FIFO behavior matches
    head_ = n % capacity_;
    count_ = n;
    for (int i = 0; i < n; ++i) {
        const std::size_t s = static_cast<std::size_t>(i);
        for (int c = 0; c < teacher_dim_; ++c) in >> teacher_data_[s * teacher_dim_ + c];
        for (int c = 0; c < student_dim_; ++c) in >> student_data_[s * student_dim_ + c];
    }
    if (in.fail()) throw StateError("alignment buffer load: truncated data");
}

// ---------------------------------------------------------------- env adapters

EnvStepOutcome VecEnv::step_discrete(const std::vector<int>&) {
    throw StateError("this environment takes continuous actions");
}

EnvStepOutcome VecEnv::step_continuous(const Tensor2D&) {
    throw StateError("this environment takes discrete actions");
}

MazeVecEnv::MazeVecEnv(std::vector<MazeLayout> layouts, const MazeConfig& config)
    : maze_(std::move(layouts), config) {}

EnvStepOutcome MazeVecEnv::step_discrete(const std::vector<int>& actions) {
    MazeStepResult r = maze_.step(actions);
    return EnvStepOutcome{std::move(r.reward), std::move(r.done),
                          std::move(r.finished_returns),
                          std::move(r.finished_outcomes)};
}

void MazeVecEnv::save_state(std::ostream& out) const {
    out << "maze_env " << maze_.num_envs() << '\n';
    for (int i = 0; i < maze_.num_envs(); ++i) {
        const MazeState& s = maze_.state(i);
        out << s.pos_row << ' ' << s.pos_col << ' ' << s.prev_row << ' '
            << s.prev_col << ' ' << s.step_count << ' '
            << static_cast<int>(s.outcome) << ' ' << s.episode_return << ' ';
        for (std::uint8_t v : s.visited) out << (v ? '1' : '0');
        out << '\n';
    }
}

void MazeVecEnv::load_state(std::istream& in) {
    expect_tag(in, "maze_env", "maze state load");
    int n = -1;
    in >> n;
    if (n != maze_.num_envs()) throw StateError("maze state load: env count mismatch");
    for (int i = 0; i < n; ++i) {
        MazeState& s = maze_.mutable_state(i);
        int outcome = 0;
        std::string visited;
        in >> s.pos_row >> s.pos_col >> s.prev_row >> s.prev_col >> s.step_count >>
            outcome >> s.episode_return >> visited;
        s.outcome = static_cast<Outcome>(outcome);
        if (visited.size() != s.visited.size())
            throw StateError("maze state load: visited bitmap size mismatch");
        for (std::size_t k = 0; k < visited.size(); ++k)
            s.visited[k] = visited[k] == '1' ? 1 : 0;
    }
    if (in.fail()) throw StateError("maze state load: truncated data");
}

PointGapVecEnv::PointGapVecEnv(int num_envs, std::uint64_t root_seed,
                               const PointGapConfig& config)
    : gap_(num_envs, root_seed, config) {}

EnvStepOutcome PointGapVecEnv::step_continuous(const Tensor2D& actions) {
    PointGapStepResult r = gap_.step(actions);
    return EnvStepOutcome{std::move(r.reward), std::move(r.done),
                          std::move(r.finished_returns),
                          std::move(r.finished_outcomes)};
}

void PointGapVecEnv::save_state(std::ostream& out) const {
    out << "pointgap_env " << gap_.num_envs() << '\n';
    for (int i = 0; i < gap_.num_envs(); ++i) {
        const PointGapState& s = gap_.state(i);
        out << s.x << ' ' << s.z << ' ' << s.step_count << ' '
            << static_cast<int>(s.outcome) << ' ' << s.episode_return << '\n';
    }
}

void PointGapVecEnv::load_state(std::istream& in) {
    expect_tag(in, "pointgap_env", "pointgap state load");
    int n = -1;
    in >> n;
    if (n != gap_.num_envs())
        throw StateError("pointgap state load: env count mismatch");
    for (int i = 0; i < n; ++i) {
        PointGapState& s = gap_.mutable_state(i);
        int outcome = 0;
        in >> s.x >> s.z >> s.step_count >> outcome >> s.episode_return;
        s.outcome = static_cast<Outcome>(outcome);
    }
    if (in.fail()) throw StateError("pointgap state load: truncated data");
}

// ---------------------------------------------------------------- config

void SittConfig::validate() const {
    if (iterations < 1 || rollout_steps < 1 || alignment_iters < 1)
        throw ConfigError("sitt config: phase counters must be >= 1");
    if (!(align_lr > 0.0)) throw ConfigError("sitt config: align_lr must be positive");
    if (!(align_env_fraction > 0.0) || align_env_fraction > 1.0)
        throw ConfigError("sitt config: align_env_fraction must lie in (0, 1]");
    if (align_buffer_capacity < 0 || align_batch < 0)
        throw ConfigError("sitt config: buffer sizes cannot be negative");
    ppo.validate();
}

void EpisodeLedger::reset(int num_envs) {
    shaped_return.assign(static_cast<std::size_t>(num_envs), 0.0);
    kl_sum.assign(static_cast<std::size_t>(num_envs), 0.0);
}

// ---------------------------------------------------------------- phases

RolloutStats rollout_phase(PolicyBundle& bundle, VecEnv& env, RolloutBuffer& buffer,
                           AlignmentBuffer& align, EpisodeLedger& ledger,
                           const SittConfig& cfg, Rng& action_rng) {
    cfg.validate();
    bundle.validate();
    if (bundle.continuous != env.continuous())
        throw ArgumentError("roll-out: bundle and environment action types differ");
    if (bundle.teacher_encoder.input_width() != env.teacher_obs_dim())
        throw ShapeError("roll-out: teacher encoder width != teacher obs dim");
    if (bundle.student_encoder.input_width() != env.student_obs_dim())
        throw ShapeError("roll-out: student encoder width != student obs dim");
    const int E = env.num_envs();
    const int T = cfg.rollout_steps;
    const int obs_dim = env.teacher_obs_dim();
    const int sdim = env.student_obs_dim();
    if (static_cast<int>(ledger.shaped_return.size()) != E)
        throw StateError("roll-out: episode ledger not sized for this environment");
    const int pair_envs = std::min(
        E, std::max(1, static_cast<int>(std::llround(cfg.align_env_fraction * E))));
    const double lam1 = cfg.ppo.lambda1;
    const int action_dim = env.continuous() ? env.action_count() : 0;

    buffer.reset(T, E, obs_dim, action_dim);
    Tensor2D tobs(E, obs_dim), sobs(E, sdim);
    RolloutStats stats;

    for (int t = 0; t < T; ++t) {
        env.observe_teacher(tobs);
        std::copy(tobs.data.begin(), tobs.data.end(),
                  buffer.obs.data.begin() +
                      static_cast<std::size_t>(t) * E * obs_dim);

        Tensor2D feat = mlp_forward(bundle.teacher_encoder, tobs);
        Tensor2D out = mlp_forward(bundle.shared_decoder, feat);
        Tensor2D value = mlp_forward(bundle.critic, tobs);
        Tensor2D proxy_feat = mlp_forward(bundle.proxy_encoder, tobs);
        Tensor2D proxy_out = mlp_forward(bundle.shared_decoder, proxy_feat);
        std::vector<double> kl =
            bundle.continuous
                ? gaussian_kl_shared_cov(out, proxy_out, bundle.log_std)
                : categorical_kl(softmax_rows(out), softmax_rows(proxy_out));
        for (double k : kl)
            if (!std::isfinite(k))
                throw NumericalError("roll-out: non-finite teacher/proxy KL at step " +
                                     std::to_string(t));

        if (cfg.run_alignment) {
            env.observe_student(sobs);
            for (int e = 0; e < pair_envs; ++e) {
                align.push(&tobs.data[static_cast<std::size_t>(e) * obs_dim],
                           &sobs.data[static_cast<std::size_t>(e) * sdim]);
                ++stats.pairs_pushed;
            }
        }

        EnvStepOutcome step;
        if (bundle.continuous) {
            Tensor2D actions(E, action_dim);
            for (int e = 0; e < E; ++e) {
                std::vector<double> a =
                    sample_gaussian_row(action_rng, out, bundle.log_std, e);
                for (int c = 0; c < action_dim; ++c)
                    actions.at(e, c) = a[static_cast<std::size_t>(c)];
            }
            std::vector<double> lp = gaussian_log_prob(out, bundle.log_std, actions);
            for (int e = 0; e < E; ++e) {
                const std::size_t row = static_cast<std::size_t>(t) * E + e;
                for (int c = 0; c < action_dim; ++c)
                    buffer.cont_actions.at(static_cast<int>(row), c) = actions.at(e, c);
                buffer.log_probs[row] = lp[static_cast<std::size_t>(e)];
            }
            step = env.step_continuous(actions);
        } else {
            std::vector<int> actions(static_cast<std::size_t>(E));
            for (int e = 0; e < E; ++e)
                actions[static_cast<std::size_t>(e)] =
                    sample_categorical_logits(action_rng, out, e);
            std::vector<double> lp = categorical_log_prob(out, actions);
            for (int e = 0; e < E; ++e) {
                const std::size_t row = static_cast<std::size_t>(t) * E + e;
                buffer.actions[row] = actions[static_cast<std::size_t>(e)];
                buffer.log_probs[row] = lp[static_cast<std::size_t>(e)];
            }
            step = env.step_discrete(actions);
        }

        std::size_t fin = 0;
        for (int e = 0; e < E; ++e) {
            const std::size_t ei = static_cast<std::size_t>(e);
            const double r = step.reward[ei];
            const double shaped = shape_reward(r, kl[ei], lam1);
            buffer.rewards.at(t, e) = shaped;
            buffer.kl_penalty.at(t, e) = lam1 * kl[ei];
            buffer.values.at(t, e) = value.at(e, 0);
            buffer.dones.at(t, e) = step.done[ei] ? 1.0 : 0.0;
            stats.task_reward_sum += r;
            stats.shaped_reward_sum += shaped;
            stats.mean_kl += kl[ei];
            ledger.shaped_return[ei] += shaped;
            ledger.kl_sum[ei] += kl[ei];
            if (step.done[ei]) {
                stats.finished_task_returns.push_back(step.finished_returns.at(fin));
                stats.finished_outcomes.push_back(step.finished_outcomes.at(fin));
                ++fin;
                stats.finished_shaped_returns.push_back(ledger.shaped_return[ei]);
                stats.finished_kl_sums.push_back(ledger.kl_sum[ei]);
                ledger.shaped_return[ei] = 0.0;
                ledger.kl_sum[ei] = 0.0;
            }
        }
        if (fin != step.finished_returns.size())
            throw StateError("roll-out: finished-episode bookkeeping out of sync");
    }
    stats.mean_kl /= static_cast<double>(T) * E;

    env.observe_teacher(tobs);
    Tensor2D bootstrap = mlp_forward(bundle.critic, tobs);
    std::vector<double> bv(static_cast<std::size_t>(E));
    for (int e = 0; e < E; ++e) bv[static_cast<std::size_t>(e)] = bootstrap.at(e, 0);
    buffer.finalize(bv, cfg.ppo.gamma, cfg.ppo.gae_lambda);
    return stats;
}

PpoStats policy_update_phase(PolicyBundle& bundle, AdamOptimizer& teacher_opt,
                             RolloutBuffer& buffer, const SittConfig& cfg,
                             Rng& shuffle_rng) {
    TeacherUpdateNets nets;
    nets.encoder = &bundle.teacher_encoder;
    nets.decoder = &bundle.shared_decoder;
    nets.critic = &bundle.critic;
    nets.proxy_encoder = &bundle.proxy_encoder;
    nets.log_std = bundle.continuous ? &bundle.log_std : nullptr;
    return ppo_teacher_update(nets, teacher_opt, buffer, cfg.ppo, shuffle_rng);
}

AlignStats alignment_phase(PolicyBundle& bundle, const AlignmentBuffer& buffer,
                           AdamOptimizer& student_opt, AdamOptimizer& proxy_opt,
                           const SittConfig& cfg, Rng& batch_rng) {
    AlignStats stats;
    if (buffer.size() == 0) {
        stats.skipped = true;
        std::cerr << "alignment phase skipped: empty pair buffer\n";
        return stats;
    }
    const int n = buffer.size();
    const int batch = (cfg.align_batch <= 0 || cfg.align_batch >= n) ? n : cfg.align_batch;

    Tensor2D tobs, sobs;
    if (batch == n) buffer.gather_all(tobs, sobs);
    std::vector<int> pool(static_cast<std::size_t>(n));

    for (int it = 0; it < cfg.alignment_iters; ++it) {
        if (batch < n) {  // sample rows without replacement
            for (int i = 0; i < n; ++i) pool[static_cast<std::size_t>(i)] = i;
            for (int i = 0; i < batch; ++i) {
                const int j = batch_rng.uniform_int(i, n - 1);
                std::swap(pool[static_cast<std::size_t>(i)],
                          pool[static_cast<std::size_t>(j)]);
            }
            std::vector<int> rows(pool.begin(), pool.begin() + batch);
            buffer.gather(rows, tobs, sobs);
        }
        const int B = tobs.rows;

        // (a) student chases frozen teacher features and decoder activations
        Tensor2D t_feat = mlp_forward(bundle.teacher_encoder, tobs);
        Tensor2D t_dec = mlp_forward(bundle.shared_decoder, t_feat);
        MlpCache s_cache, sd_cache;
        Tensor2D s_feat = mlp_forward(bundle.student_encoder, sobs, &s_cache);
        Tensor2D s_dec = mlp_forward(bundle.shared_decoder, s_feat, &sd_cache);
        const double inv_feat = 1.0 / (static_cast<double>(B) * s_feat.cols);
        const double inv_dec = 1.0 / (static_cast<double>(B) * s_dec.cols);
        double loss_s = 0.0;
        Tensor2D d_sfeat(B, s_feat.cols);
        Tensor2D d_sdec(B, s_dec.cols);
        for (std::size_t i = 0; i < s_feat.data.size(); ++i) {
            const double diff = s_feat.data[i] - t_feat.data[i];
            loss_s += std::fabs(diff) * inv_feat;
            d_sfeat.data[i] = l1_sign(diff) * inv_feat;
        }
        for (std::size_t i = 0; i < s_dec.data.size(); ++i) {
            const double diff = s_dec.data[i] - t_dec.data[i];
            loss_s += std::fabs(diff) * inv_dec;
            d_sdec.data[i] = l1_sign(diff) * inv_dec;
        }
        // decoder frozen: gradient passes through, nothing accumulates on it
        Tensor2D d_through = mlp_backward(bundle.shared_decoder, sd_cache, d_sdec, false);
        for (std::size_t i = 0; i < d_sfeat.data.size(); ++i)
            d_sfeat.data[i] += d_through.data[i];
        bundle.student_encoder.zero_grad();
        mlp_backward(bundle.student_encoder, s_cache, d_sfeat, true);
        student_opt.step();
        stats.student_loss = loss_s;

        // (b) proxy chases the just-updated student's features
        Tensor2D s_feat_new = mlp_forward(bundle.student_encoder, sobs);
        MlpCache p_cache;
        Tensor2D p_feat = mlp_forward(bundle.proxy_encoder, tobs, &p_cache);
        double loss_p = 0.0;
        Tensor2D d_pfeat(B, p_feat.cols);
        for (std::size_t i = 0; i < p_feat.data.size(); ++i) {
            const double diff = p_feat.data[i] - s_feat_new.data[i];
            loss_p += std::fabs(diff) * inv_feat;
            d_pfeat.data[i] = l1_sign(diff) * inv_feat;
        }
        bundle.proxy_encoder.zero_grad();
        mlp_backward(bundle.proxy_encoder, p_cache, d_pfeat, true);
        proxy_opt.step();
        stats.proxy_loss = loss_p;
    }
    return stats;
}

// ---------------------------------------------------------------- diagnostics

double estimate_epsilon(const PolicyBundle& bundle, const Tensor2D& teacher_obs,
                        const Tensor2D& student_obs) {
    if (teacher_obs.rows < 1)
        throw ArgumentError("estimate_epsilon: need at least one state");
    if (teacher_obs.rows != student_obs.rows)
        throw ShapeError("estimate_epsilon: paired tensors must have equal rows");
    Tensor2D t_out = mlp_forward(bundle.shared_decoder,
                                 mlp_forward(bundle.teacher_encoder, teacher_obs));
    Tensor2D s_out = mlp_forward(bundle.shared_decoder,
                                 mlp_forward(bundle.student_encoder, student_obs));
    std::vector<double> kls =
        bundle.continuous
            ? gaussian_kl_shared_cov(t_out, s_out, bundle.log_std)
            : categorical_kl(softmax_rows(t_out), softmax_rows(s_out));
    double m = 0.0;
    for (double k : kls) m += k;
    return m / static_cast<double>(kls.size());
}

double performance_bound(double r_max, double gamma, double epsilon) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw ArgumentError("performance_bound: gamma must lie strictly in (0, 1)");
    if (r_max < 0.0)
        throw ArgumentError("performance_bound: r_max is a magnitude, must be >= 0");
    if (epsilon < 0.0)
        throw ArgumentError("performance_bound: epsilon must be >= 0");
    const double one_minus = 1.0 - gamma;
    return 2.0 * std::sqrt(2.0) * r_max / (one_minus * one_minus) * std::sqrt(epsilon);
}

// ---------------------------------------------------------------- trainer

namespace {

int alignment_capacity(const SittConfig& cfg, const std::unique_ptr<VecEnv>& env) {
    if (!env) throw ArgumentError("trainer: null environment");
    cfg.validate();
    return cfg.align_buffer_capacity > 0 ? cfg.align_buffer_capacity
                                         : cfg.rollout_steps * env->num_envs();
}

AdamOptimizer make_optimizer(double lr) {
    AdamConfig c;
    c.lr = lr;
    return AdamOptimizer(c);
}

void register_net(AdamOptimizer& opt, const std::string& prefix, Mlp& net) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        opt.register_parameter(prefix + ".l" + std::to_string(l) + ".weight",
                               &net.layers[l].weight);
        opt.register_parameter(prefix + ".l" + std::to_string(l) + ".bias",
                               &net.layers[l].bias);
    }
}

void save_tensor(std::ostream& out, const std::string& name, const Tensor2D& t) {
    out << "tensor " << name << ' ' << t.rows << ' ' << t.cols << '\n';
    for (int r = 0; r < t.rows; ++r)
        write_row(out, &t.data[static_cast<std::size_t>(r) * t.cols], t.cols);
}

void load_tensor(std::istream& in, const std::string& name, Tensor2D& t) {
    expect_tag(in, "tensor", "checkpoint");
    expect_tag(in, name, "checkpoint tensor name");
    int rows = -1, cols = -1;
    in >> rows >> cols;
    if (rows != t.rows || cols != t.cols)
        throw StateError("checkpoint: shape mismatch for " + name);
    for (double& v : t.data) in >> v;
    if (in.fail()) throw StateError("checkpoint: truncated tensor " + name);
}

void save_optimizer(std::ostream& out, const std::string& name,
                    const AdamOptimizer& opt) {
    out << "adam " << name << ' ' << opt.step_count() << ' ' << opt.parameter_count()
        << '\n';
    for (std::size_t i = 0; i < opt.parameter_count(); ++i) {
        const std::vector<double>& m = opt.moment1(i);
        const std::vector<double>& v = opt.moment2(i);
        out << opt.parameter_name(i) << ' ' << m.size() << '\n';
        write_row(out, m.data(), static_cast<int>(m.size()));
        write_row(out, v.data(), static_cast<int>(v.size()));
    }
}

void load_optimizer(std::istream& in, const std::string& name, AdamOptimizer& opt) {
    expect_tag(in, "adam", "checkpoint");
    expect_tag(in, name, "checkpoint optimizer name");
    std::int64_t steps = 0;
    std::size_t count = 0;
    in >> steps >> count;
    if (count != opt.parameter_count())
        throw StateError("checkpoint: optimizer " + name + " parameter count mismatch");
    opt.set_step_count(steps);
    for (std::size_t i = 0; i < count; ++i) {
        std::string pname;
        std::size_t size = 0;
        in >> pname >> size;
        if (pname != opt.parameter_name(i) || size != opt.moment1(i).size())
            throw StateError("checkpoint: optimizer " + name + " layout mismatch at " +
                             pname);
        for (double& x : opt.moment1(i)) in >> x;
        for (double& x : opt.moment2(i)) in >> x;
    }
    if (in.fail()) throw StateError("checkpoint: truncated optimizer " + name);
}

void save_rng(std::ostream& out, const std::string& name, const Rng& rng) {
    out << "rng " << name << ' ' << rng.serialize() << '\n';
}

void load_rng(std::istream& in, const std::string& name, Rng& rng) {
    expect_tag(in, "rng", "checkpoint");
    expect_tag(in, name, "checkpoint rng name");
    std::string line;
    std::getline(in, line);
    rng.deserialize(line);
}

}  // namespace

SittTrainer::SittTrainer(PolicyBundle bundle, std::unique_ptr<VecEnv> env,
                         SittConfig cfg, std::uint64_t root_seed, Evaluator evaluator)
    : bundle_(std::move(bundle)),
      env_(std::move(env)),
      cfg_(cfg),
      evaluator_(std::move(evaluator)),
      teacher_opt_(make_optimizer(cfg.ppo.lr)),
      student_opt_(make_optimizer(cfg.align_lr)),
      proxy_opt_(make_optimizer(cfg.align_lr)),
      align_(alignment_capacity(cfg, env_), env_->teacher_obs_dim(),
             env_->student_obs_dim()),
      action_rng_(derive_seed(root_seed, "trainer.action", 0)),
      shuffle_rng_(derive_seed(root_seed, "trainer.shuffle", 0)),
      batch_rng_(derive_seed(root_seed, "trainer.align_batch", 0)) {
    bundle_.validate();
    if (bundle_.continuous != env_->continuous())
        throw ArgumentError("trainer: bundle and environment action types differ");
    if (bundle_.teacher_encoder.input_width() != env_->teacher_obs_dim() ||
        bundle_.student_encoder.input_width() != env_->student_obs_dim() ||
        bundle_.action_width() != env_->action_count())
        throw ShapeError("trainer: bundle widths do not fit the environment");
    register_net(teacher_opt_, "teacher_encoder", bundle_.teacher_encoder);
    register_net(teacher_opt_, "shared_decoder", bundle_.shared_decoder);
    register_net(teacher_opt_, "critic", bundle_.critic);
    if (bundle_.continuous) teacher_opt_.register_parameter("log_std", &bundle_.log_std);
    register_net(student_opt_, "student_encoder", bundle_.student_encoder);
    register_net(proxy_opt_, "proxy_encoder", bundle_.proxy_encoder);
    ledger_.reset(env_->num_envs());
    env_->reset_all();
}

IterationMetrics SittTrainer::run_iteration() {
    const int iter = iterations_done_ + 1;
    IterationMetrics m;
    try {
        RolloutStats rs =
            rollout_phase(bundle_, *env_, rollout_, align_, ledger_, cfg_, action_rng_);
        PpoStats ps =
            policy_update_phase(bundle_, teacher_opt_, rollout_, cfg_, shuffle_rng_);
        AlignStats as;
        if (cfg_.run_alignment)
            as = alignment_phase(bundle_, align_, student_opt_, proxy_opt_, cfg_,
                                 batch_rng_);

        env_steps_ += static_cast<long long>(cfg_.rollout_steps) * env_->num_envs();
        paired_obs_ += rs.pairs_pushed;
        for (int i = 0; i < rollout_.size(); ++i) {
            const double task =
                rollout_.rewards.data[static_cast<std::size_t>(i)] +
                rollout_.kl_penalty.data[static_cast<std::size_t>(i)];
            r_max_seen_ = std::max(r_max_seen_, std::fabs(task));
        }

        m.iteration = iter;
        m.env_steps = env_steps_;
        m.paired_obs = paired_obs_;
        m.task_return_mean = mean_or_nan(rs.finished_task_returns);
        m.shaped_return_mean = mean_or_nan(rs.finished_shaped_returns);
        m.mean_kl = rs.mean_kl;
        if (align_.size() > 0) {
            Tensor2D tobs, sobs;
            align_.gather_all(tobs, sobs);
            m.epsilon = estimate_epsilon(bundle_, tobs, sobs);
            m.bound = performance_bound(r_max_seen_, cfg_.ppo.gamma, m.epsilon);
        } else {
            m.epsilon = kNan;
            m.bound = kNan;
        }
        m.r_max_seen = r_max_seen_;
        m.student_align_loss = as.student_loss;
        m.proxy_align_loss = as.proxy_loss;
        m.ppo_loss = ps.loss;
        m.clip_fraction = ps.clip_fraction;
        m.entropy = ps.entropy;
        if (evaluator_) {
            EvalNumbers ev = evaluator_(bundle_);
            m.teacher_success = ev.teacher_success;
            m.student_success = ev.student_success;
            m.teacher_eval_return = ev.teacher_return;
            m.student_eval_return = ev.student_return;
        }
    } catch (const std::exception& e) {
        throw StateError("training iteration " + std::to_string(iter) +
                         " failed: " + e.what());
    }
    metrics_.push_back(m);
    ++iterations_done_;
    return m;
}

void SittTrainer::train() {
    while (iterations_done_ < cfg_.iterations) run_iteration();
}

std::uint64_t SittTrainer::config_hash() const {
    std::ostringstream ss;
    ss << std::setprecision(17);
    ss << "sitt " << cfg_.iterations << ' ' << cfg_.rollout_steps << ' '
       << cfg_.alignment_iters << ' ' << cfg_.align_lr << ' '
       << cfg_.align_env_fraction << ' ' << cfg_.align_buffer_capacity << ' '
       << cfg_.align_batch << ' ' << cfg_.run_alignment << ' ';
    const PpoConfig& p = cfg_.ppo;
    ss << p.gamma << ' ' << p.gae_lambda << ' ' << p.clip << ' ' << p.entropy_coef
       << ' ' << p.value_coef << ' ' << p.lr << ' ' << p.epochs << ' '
       << p.minibatch_size << ' ' << p.lambda1 << ' ' << p.lambda2 << ' '
       << p.normalize_advantages << ' ' << p.kl_grad_through_decoder << ' ';
    ss << "env " << env_->num_envs() << ' ' << env_->teacher_obs_dim() << ' '
       << env_->student_obs_dim() << ' ' << env_->action_count() << ' '
       << env_->continuous() << ' ';
    ss << "nets";
    for (const Mlp* net :
         {&bundle_.teacher_encoder, &bundle_.student_encoder, &bundle_.proxy_encoder,
          &bundle_.shared_decoder, &bundle_.critic})
        for (const DenseLayer& l : net->layers)
            ss << ' ' << l.weight.rows << 'x' << l.weight.cols;
    return fnv1a64(ss.str());
}

void SittTrainer::save_checkpoint(std::ostream& out) const {
    out << std::setprecision(17);
    out << "alignrl-checkpoint v1\n";
    out << "config_hash " << config_hash() << '\n';
    out << "progress " << iterations_done_ << ' ' << env_steps_ << ' ' << paired_obs_
        << ' ' << r_max_seen_ << '\n';

    const PolicyBundle& b = bundle_;
    auto dump_net = [&out](const std::string& prefix, const Mlp& net) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            save_tensor(out, prefix + ".l" + std::to_string(l) + ".weight",
                        net.layers[l].weight);
            save_tensor(out, prefix + ".l" + std::to_string(l) + ".bias",
                        net.layers[l].bias);
        }
    };
    dump_net("teacher_encoder", b.teacher_encoder);
    dump_net("student_encoder", b.student_encoder);
    dump_net("proxy_encoder", b.proxy_encoder);
    dump_net("shared_decoder", b.shared_decoder);
    dump_net("critic", b.critic);
    if (b.continuous) save_tensor(out, "log_std", b.log_std);

    save_optimizer(out, "teacher", teacher_opt_);
    save_optimizer(out, "student", student_opt_);
    save_optimizer(out, "proxy", proxy_opt_);

    save_rng(out, "action", action_rng_);
    save_rng(out, "shuffle", shuffle_rng_);
    save_rng(out, "align_batch", batch_rng_);

    env_->save_state(out);
    align_.save(out);

    out << "ledger " << ledger_.shaped_return.size() << '\n';
    write_row(out, ledger_.shaped_return.data(),
              static_cast<int>(ledger_.shaped_return.size()));
    write_row(out, ledger_.kl_sum.data(), static_cast<int>(ledger_.kl_sum.size()));
    out << "end\n";
}

void SittTrainer::load_checkpoint(std::istream& in) {
    std::string magic, version;
    in >> magic >> version;
    if (magic != "alignrl-checkpoint" || version != "v1")
        throw StateError("checkpoint: unrecognized header");
    expect_tag(in, "config_hash", "checkpoint");
    std::uint64_t hash = 0;
    in >> hash;
    if (hash != config_hash())
        throw ConfigError("checkpoint: config hash mismatch — different run setup");
    expect_tag(in, "progress", "checkpoint");
    in >> iterations_done_ >> env_steps_ >> paired_obs_ >> r_max_seen_;

    PolicyBundle& b = bundle_;
    auto read_net = [&in](const std::string& prefix, Mlp& net) {
        for (std::size_t l = 0; l < net.layers.size(); ++l) {
            load_tensor(in, prefix + ".l" + std::to_string(l) + ".weight",
                        net.layers[l].weight);
            load_tensor(in, prefix + ".l" + std::to_string(l) + ".bias",
                        net.layers[l].bias);
        }
    };
    read_net("teacher_encoder", b.teacher_encoder);
    read_net("student_encoder", b.student_encoder);
    read_net("proxy_encoder", b.proxy_encoder);
    read_net("shared_decoder", b.shared_decoder);
    read_net("critic", b.critic);
    if (b.continuous) load_tensor(in, "log_std", b.log_std);

    load_optimizer(in, "teacher", teacher_opt_);
    load_optimizer(in, "student", student_opt_);
    load_optimizer(in, "proxy", proxy_opt_);

    load_rng(in, "action", action_rng_);
    load_rng(in, "shuffle", shuffle_rng_);
    load_rng(in, "align_batch", batch_rng_);

    env_->load_state(in);
    align_.load(in);

    expect_tag(in, "ledger", "checkpoint");
    std::size_t n = 0;
    in >> n;
    if (n != ledger_.shaped_return.size())
        throw StateError("checkpoint: ledger size mismatch");
    for (double& v : ledger_.shaped_return) in >> v;
    for (double& v : ledger_.kl_sum) in >> v;
    expect_tag(in, "end", "checkpoint");
    if (in.fail()) throw StateError("checkpoint: truncated file");
}

void SittTrainer::save_checkpoint(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw StateError("checkpoint: cannot open " + path + " for writing");
    save_checkpoint(out);
    if (!out) throw StateError("checkpoint: write to " + path + " failed");
}

void SittTrainer::load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StateError("checkpoint: cannot open " + path);
    load_checkpoint(in);
}

}  // namespace alignrl
