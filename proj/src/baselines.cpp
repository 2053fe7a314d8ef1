#include "alignrl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "alignrl/distributions.hpp"
#include "alignrl/errors.hpp"

namespace alignrl {

namespace {

void init_elu_net(Mlp& net, double head_gain, Rng& rng) {
    for (DenseLayer& layer : net.layers) {
        const double gain =
            layer.activation == Activation::Elu ? std::sqrt(2.0) : head_gain;
        init_orthogonal(layer.weight, gain, rng);
    }
}

void register_net(AdamOptimizer& opt, const std::string& prefix, Mlp& net) {
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        opt.register_parameter(prefix + ".l" + std::to_string(l) + ".weight",
                               &net.layers[l].weight);
        opt.register_parameter(prefix + ".l" + std::to_string(l) + ".bias",
                               &net.layers[l].bias);
    }
}

int argmax_row(const Tensor2D& t, int row) {
    int best = 0;
    for (int c = 1; c < t.cols; ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;
    return best;
}

// batch-mean soft cross-entropy against the stored expert probabilities;
// accumulates gradients through both nets
double imitation_step_loss(ImitationStudent& student, const Tensor2D& obs,
                           const Tensor2D& labels) {
    MlpCache enc_cache, dec_cache;
    Tensor2D feat = mlp_forward(student.encoder, obs, &enc_cache);
    Tensor2D logits = mlp_forward(student.decoder, feat, &dec_cache);
    Tensor2D logp = log_softmax_rows(logits);
    Tensor2D probs = softmax_rows(logits);

    const double invb = 1.0 / static_cast<double>(obs.rows);
    double loss = 0.0;
    Tensor2D d_logits(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r)
        for (int c = 0; c < logits.cols; ++c) {
            loss -= labels.at(r, c) * logp.at(r, c) * invb;
            d_logits.at(r, c) = (probs.at(r, c) - labels.at(r, c)) * invb;
        }
    Tensor2D d_feat = mlp_backward(student.decoder, dec_cache, d_logits);
    mlp_backward(student.encoder, enc_cache, d_feat);
    return loss;
}

ImitationResult run_imitation(const PolicyBundle& expert, VecEnv& env,
                              const ImitationConfig& cfg, std::uint64_t seed,
                              bool decay_beta, bool refit_each_round) {
    cfg.validate();
    expert.validate();
    if (env.continuous())
        throw ArgumentError("imitation: discrete action spaces only");
    if (env.teacher_obs_dim() != expert.teacher_encoder.input_width() ||
        env.student_obs_dim() != expert.student_encoder.input_width() ||
        env.action_count() != expert.action_width())
        throw ShapeError("imitation: expert does not match the environment");

    const int num_envs = env.num_envs();
    const int actions_n = env.action_count();
    ImitationResult result{make_imitation_student(expert, seed),
                           ImitationDataset(env.student_obs_dim(), actions_n)};

    AdamOptimizer optimizer(AdamConfig{cfg.learning_rate, 0.9, 0.999, 1e-8});
    register_net(optimizer, "encoder", result.student.encoder);
    register_net(optimizer, "decoder", result.student.decoder);

    Rng action_rng(derive_seed(seed, "imitation.action", 0));
    Rng shuffle_rng(derive_seed(seed, "imitation.shuffle", 0));

    env.reset_all();
    Tensor2D teacher_obs(num_envs, env.teacher_obs_dim());
    Tensor2D student_obs(num_envs, env.student_obs_dim());
    std::vector<int> actions(static_cast<std::size_t>(num_envs), 0);

    for (int round = 1; round <= cfg.iterations; ++round) {
        const double beta = decay_beta ? cfg.schedule.beta(round) : 1.0;
        long long expert_taken = 0;
        for (int t = 0; t < cfg.rollout_steps; ++t) {
            env.observe_teacher(teacher_obs);
            env.observe_student(student_obs);
            Tensor2D expert_logits = mlp_forward(
                expert.shared_decoder,
                mlp_forward(expert.teacher_encoder, teacher_obs));
            Tensor2D expert_probs = softmax_rows(expert_logits);
            Tensor2D student_logits;
            if (beta < 1.0)
                student_logits = mlp_forward(
                    result.student.decoder,
                    mlp_forward(result.student.encoder, student_obs));
            for (int e = 0; e < num_envs; ++e) {
                result.dataset.append(
                    student_obs.data.data() +
                        static_cast<std::size_t>(e) * student_obs.cols,
                    expert_probs.data.data() +
                        static_cast<std::size_t>(e) * expert_probs.cols);
                if (action_rng.uniform() < beta) {
                    ++expert_taken;
                    actions[static_cast<std::size_t>(e)] =
                        sample_categorical_logits(action_rng, expert_logits, e);
                } else {
                    actions[static_cast<std::size_t>(e)] =
                        sample_categorical_logits(action_rng, student_logits, e);
                }
            }
            env.step_discrete(actions);
        }
        result.beta.push_back(beta);
        result.expert_actions.push_back(expert_taken);
        result.round_steps.push_back(static_cast<long long>(cfg.rollout_steps) *
                                     num_envs);
        result.budget.env_steps +=
            static_cast<long long>(cfg.rollout_steps) * num_envs;
        if (refit_each_round || round == cfg.iterations)
            result.refits.push_back(refit_imitation_student(
                result.student, optimizer, result.dataset, cfg.refit_passes,
                cfg.batch_size, shuffle_rng));
    }
    result.budget.paired_obs = result.dataset.rows();
    return result;
}

}  // namespace

// ---------------------------------------------------------------- schedule

double DaggerSchedule::beta(int round) const {
    if (round < 1) throw ArgumentError("dagger schedule: rounds count from one");
    validate();
    return std::pow(beta0, round);
}

void DaggerSchedule::validate() const {
    if (!(beta0 >= 0.0 && beta0 <= 1.0))
        throw ConfigError("dagger schedule: beta0 must lie in [0, 1]");
}

// ----------------------------------------------------------------- student

std::uint64_t ImitationStudent::parameter_hash() const {
    return hash_combine(encoder.parameter_hash(), decoder.parameter_hash());
}

void ImitationStudent::validate() const {
    encoder.validate();
    decoder.validate();
    if (encoder.output_width() != decoder.input_width())
        throw ShapeError("imitation student: encoder features must feed the decoder");
}

ImitationStudent make_imitation_student(const PolicyBundle& expert,
                                        std::uint64_t seed) {
    std::vector<int> widths{expert.student_encoder.input_width()};
    for (const DenseLayer& layer : expert.student_encoder.layers)
        widths.push_back(layer.weight.cols);
    ImitationStudent student{make_mlp(widths), expert.shared_decoder};
    Rng rng(derive_seed(seed, "imitation.encoder", 0));
    init_elu_net(student.encoder, 1.0, rng);
    student.validate();
    return student;
}

MazeActor make_imitation_actor(const ImitationStudent& student) {
    ImitationStudent snapshot = student;
    return [snapshot = std::move(snapshot)](const MazeLayout& layout,
                                            const MazeState& state) {
        Tensor2D obs(1, snapshot.encoder.input_width());
        maze_student_observation(layout, state, obs.data.data());
        Tensor2D logits =
            mlp_forward(snapshot.decoder, mlp_forward(snapshot.encoder, obs));
        return argmax_row(logits, 0);
    };
}

// ----------------------------------------------------------------- dataset

ImitationDataset::ImitationDataset(int obs_dim, int label_dim)
    : obs_dim(obs_dim), label_dim(label_dim) {
    if (obs_dim < 1 || label_dim < 1)
        throw ArgumentError("imitation dataset: dimensions must be positive");
}

long long ImitationDataset::rows() const {
    return static_cast<long long>(obs.size()) / obs_dim;
}

void ImitationDataset::append(const double* obs_row, const double* label_row) {
    obs.insert(obs.end(), obs_row, obs_row + obs_dim);
    labels.insert(labels.end(), label_row, label_row + label_dim);
}

void ImitationDataset::gather(const std::vector<long long>& indices,
                              Tensor2D& obs_out, Tensor2D& labels_out) const {
    const int n = static_cast<int>(indices.size());
    obs_out = Tensor2D(n, obs_dim);
    labels_out = Tensor2D(n, label_dim);
    for (int r = 0; r < n; ++r) {
        const long long i = indices[static_cast<std::size_t>(r)];
        if (i < 0 || i >= rows())
            throw ArgumentError("imitation dataset: row index out of range");
        std::copy_n(obs.begin() + i * obs_dim, obs_dim,
                    obs_out.data.begin() + static_cast<std::size_t>(r) * obs_dim);
        std::copy_n(labels.begin() + i * label_dim, label_dim,
                    labels_out.data.begin() +
                        static_cast<std::size_t>(r) * label_dim);
    }
}

// ------------------------------------------------------------------ config

void ImitationConfig::validate() const {
    if (iterations < 1) throw ConfigError("imitation: iterations must be >= 1");
    if (rollout_steps < 1)
        throw ConfigError("imitation: rollout_steps must be >= 1");
    if (refit_passes < 1)
        throw ConfigError("imitation: refit_passes must be >= 1");
    if (batch_size < 0) throw ConfigError("imitation: batch_size must be >= 0");
    if (!(learning_rate > 0.0))
        throw ConfigError("imitation: learning_rate must be positive");
    schedule.validate();
}

// ------------------------------------------------------------------- refit

RefitStats refit_imitation_student(ImitationStudent& student,
                                   AdamOptimizer& optimizer,
                                   const ImitationDataset& dataset, int passes,
                                   int batch_size, Rng& shuffle_rng) {
    if (passes < 1) throw ArgumentError("refit: passes must be >= 1");
    const long long n = dataset.rows();
    if (n == 0) throw StateError("refit: empty dataset");

    std::vector<long long> order(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    const long long batch =
        batch_size == 0 ? n : std::min<long long>(batch_size, n);
    const bool full = batch == n;

    RefitStats stats;
    Tensor2D obs, labels;
    for (int pass = 0; pass < passes; ++pass) {
        // a full-dataset pass is order-independent, so it draws no shuffle
        if (!full)
            for (long long i = n - 1; i > 0; --i)
                std::swap(order[static_cast<std::size_t>(i)],
                          order[static_cast<std::size_t>(
                              shuffle_rng.uniform_int(0, static_cast<int>(i)))]);
        double pass_loss = 0.0;
        for (long long start = 0; start < n; start += batch) {
            const long long stop = std::min(n, start + batch);
            std::vector<long long> chunk(order.begin() + start,
                                         order.begin() + stop);
            dataset.gather(chunk, obs, labels);
            student.encoder.zero_grad();
            student.decoder.zero_grad();
            const double loss = imitation_step_loss(student, obs, labels);
            optimizer.step();
            ++stats.gradient_steps;
            pass_loss += loss * static_cast<double>(stop - start);
        }
        pass_loss /= static_cast<double>(n);
        if (pass == 0) stats.initial_loss = pass_loss;
        stats.final_loss = pass_loss;
    }
    return stats;
}

// ---------------------------------------------------------------- trainers

ImitationResult train_bc(const PolicyBundle& expert, VecEnv& env,
                         const ImitationConfig& config, std::uint64_t seed) {
    return run_imitation(expert, env, config, seed, false, false);
}

ImitationResult train_dagger(const PolicyBundle& expert, VecEnv& env,
                             const ImitationConfig& config, std::uint64_t seed) {
    return run_imitation(expert, env, config, seed, true, true);
}

SittConfig without_alignment(SittConfig config) {
    config.ppo.lambda1 = 0.0;
    config.ppo.lambda2 = 0.0;
    config.run_alignment = true;
    return config;
}

}  // namespace alignrl
