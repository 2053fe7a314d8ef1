#pragma once

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "alignrl/adam.hpp"
#include "alignrl/color_maze.hpp"
#include "alignrl/mlp.hpp"
#include "alignrl/point_gap.hpp"
#include "alignrl/ppo.hpp"
#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

namespace alignrl {

// The five networks of the teacher/student/proxy trio. The decoder is one
// parameter set shared by all three feature paths; it learns only from the
// policy gradient. The optional log-std is shared by teacher and proxy
// (state-independent covariance).
struct PolicyBundle {
    Mlp teacher_encoder;  // teacher obs -> feature
    Mlp student_encoder;  // student obs -> feature
    Mlp proxy_encoder;    // teacher obs -> feature, predicts the student
    Mlp shared_decoder;   // feature -> action logits (discrete) or mean
    Mlp critic;           // teacher obs -> value
    Tensor2D log_std;     // (1, action_dim) for continuous policies, else empty
    bool continuous = false;

    int feature_width() const { return shared_decoder.input_width(); }
    int action_width() const { return shared_decoder.output_width(); }
    std::uint64_t parameter_hash() const;
    void validate() const;
};

// Orthogonally-initialized bundle: encoders obs->64->64->64 (ELU hidden,
// identity feature head), one-layer decoder, critic obs->64->64->1.
// `action_count` is the number of discrete actions or the continuous
// action dimension.
PolicyBundle make_policy_bundle(int teacher_obs_dim, int student_obs_dim,
                                int action_count, bool continuous,
                                std::uint64_t seed);

// Fixed-capacity FIFO of paired (teacher obs, student obs) rows; the oldest
// pair is evicted first once full.
class AlignmentBuffer {
   public:
    AlignmentBuffer(int capacity, int teacher_dim, int student_dim);

    int capacity() const { return capacity_; }
    int size() const { return count_; }
    int teacher_dim() const { return teacher_dim_; }
    int student_dim() const { return student_dim_; }

    void push(const double* teacher_row, const double* student_row);
    void clear() { head_ = count_ = 0; }

    // copies rows out in chronological order; `rows` indexes 0 = oldest
    void gather(const std::vector<int>& rows, Tensor2D& teacher_out,
                Tensor2D& student_out) const;
    void gather_all(Tensor2D& teacher_out, Tensor2D& student_out) const;

    void save(std::ostream& out) const;
    void load(std::istream& in);

   private:
    std::size_t slot(int chrono) const;

    int capacity_ = 0, teacher_dim_ = 0, student_dim_ = 0;
    int head_ = 0, count_ = 0;  // head = next write position
    std::vector<double> teacher_data_, student_data_;
};

// Batched environment surface the trainer rolls against. Discrete
// environments implement step_discrete, continuous ones step_continuous.
struct EnvStepOutcome {
    std::vector<double> reward;
    std::vector<int> done;
    std::vector<double> finished_returns;
    std::vector<Outcome> finished_outcomes;
};

class VecEnv {
   public:
    virtual ~VecEnv() = default;
    virtual int num_envs() const = 0;
    virtual int teacher_obs_dim() const = 0;
    virtual int student_obs_dim() const = 0;
    virtual int action_count() const = 0;  // discrete actions or action dim
    virtual bool continuous() const = 0;
    virtual void observe_teacher(Tensor2D& out) const = 0;
    virtual void observe_student(Tensor2D& out) const = 0;
    virtual EnvStepOutcome step_discrete(const std::vector<int>& actions);
    virtual EnvStepOutcome step_continuous(const Tensor2D& actions);
    virtual void reset_all() = 0;
    virtual void save_state(std::ostream& out) const = 0;
    virtual void load_state(std::istream& in) = 0;
};

class MazeVecEnv : public VecEnv {
   public:
    MazeVecEnv(std::vector<MazeLayout> layouts, const MazeConfig& config);
    BatchedColorMaze& maze() { return maze_; }
    const BatchedColorMaze& maze() const { return maze_; }

    int num_envs() const override { return maze_.num_envs(); }
    int teacher_obs_dim() const override { return kMazeTeacherObsDim; }
    int student_obs_dim() const override { return kMazeStudentObsDim; }
    int action_count() const override { return kMazeActions; }
    bool continuous() const override { return false; }
    void observe_teacher(Tensor2D& out) const override { maze_.observe_teacher(out); }
    void observe_student(Tensor2D& out) const override { maze_.observe_student(out); }
    EnvStepOutcome step_discrete(const std::vector<int>& actions) override;
    void reset_all() override { maze_.reset_all(); }
    void save_state(std::ostream& out) const override;
    void load_state(std::istream& in) override;

   private:
    BatchedColorMaze maze_;
};

class PointGapVecEnv : public VecEnv {
   public:
    PointGapVecEnv(int num_envs, std::uint64_t root_seed,
                   const PointGapConfig& config);
    BatchedPointGap& gap() { return gap_; }

    int num_envs() const override { return gap_.num_envs(); }
    int teacher_obs_dim() const override { return kPointGapTeacherObsDim; }
    int student_obs_dim() const override { return kPointGapStudentObsDim; }
    int action_count() const override { return kPointGapActionDim; }
    bool continuous() const override { return true; }
    void observe_teacher(Tensor2D& out) const override { gap_.observe_teacher(out); }
    void observe_student(Tensor2D& out) const override { gap_.observe_student(out); }
    EnvStepOutcome step_continuous(const Tensor2D& actions) override;
    void reset_all() override { gap_.reset_all(); }
    void save_state(std::ostream& out) const override;
    void load_state(std::istream& in) override;

   private:
    BatchedPointGap gap_;
};

struct SittConfig {
    int iterations = 10;       // N: roll-out / policy-update / alignment cycles
    int rollout_steps = 128;   // T: environment steps per roll-out phase
    int alignment_iters = 20;  // L: alignment passes per phase
    double align_lr = 3e-4;
    double align_env_fraction = 1.0;  // leading share of envs contributing pairs
    int align_buffer_capacity = 0;    // 0 = exactly one roll-out (T * num_envs)
    int align_batch = 0;              // 0 = the whole buffer every iteration
    bool run_alignment = true;        // false = teacher-only training
    PpoConfig ppo;  // M = ppo.epochs; lambda1 / lambda2 live here too

    void validate() const;
};

// Per-environment running-episode tallies that survive roll-out boundaries,
// so finished-episode sums stay whole even when an episode spans phases.
struct EpisodeLedger {
    std::vector<double> shaped_return;
    std::vector<double> kl_sum;  // raw KL, not weighted by lambda1

    void reset(int num_envs);
};

struct RolloutStats {
    double mean_kl = 0.0;  // mean KL(teacher || proxy) per step
    double shaped_reward_sum = 0.0;
    double task_reward_sum = 0.0;
    long long pairs_pushed = 0;
    std::vector<double> finished_task_returns;
    std::vector<double> finished_shaped_returns;
    std::vector<double> finished_kl_sums;  // raw KL per finished episode
    std::vector<Outcome> finished_outcomes;
};

// Roll-out phase: sample from the teacher, shape rewards with the proxy KL,
// stash paired observations, and leave `buffer` finalized (advantages ready).
// Only `action_rng` is drawn from. The proxy stays frozen.
RolloutStats rollout_phase(PolicyBundle& bundle, VecEnv& env, RolloutBuffer& buffer,
                           AlignmentBuffer& align, EpisodeLedger& ledger,
                           const SittConfig& cfg, Rng& action_rng);

// Policy-update phase: the clipped-surrogate update over the finalized
// buffer. Touches teacher encoder, decoder, critic, and log-std only.
PpoStats policy_update_phase(PolicyBundle& bundle, AdamOptimizer& teacher_opt,
                             RolloutBuffer& buffer, const SittConfig& cfg,
                             Rng& shuffle_rng);

struct AlignStats {
    bool skipped = false;
    double student_loss = 0.0;  // final-iteration values
    double proxy_loss = 0.0;
};

// Alignment phase: L iterations of (a) student encoder L1-matched to frozen
// teacher features and frozen-decoder activations, (b) proxy encoder
// L1-matched to the just-updated student's features. Teacher and decoder
// parameters are untouched. `batch_rng` is drawn from only when
// cfg.align_batch caps the batch below the buffer size.
AlignStats alignment_phase(PolicyBundle& bundle, const AlignmentBuffer& buffer,
                           AdamOptimizer& student_opt, AdamOptimizer& proxy_opt,
                           const SittConfig& cfg, Rng& batch_rng);

// Mean KL(teacher || student) over paired observation rows: the empirical
// imitation gap, measured against the true student.
double estimate_epsilon(const PolicyBundle& bundle, const Tensor2D& teacher_obs,
                        const Tensor2D& student_obs);

// Worst-case return gap 2 sqrt(2) r_max / (1 - gamma)^2 * sqrt(epsilon).
double performance_bound(double r_max, double gamma, double epsilon);

struct EvalNumbers {
    double teacher_success = 0.0;
    double student_success = 0.0;
    double teacher_return = 0.0;
    double student_return = 0.0;
};
using Evaluator = std::function<EvalNumbers(const PolicyBundle&)>;

struct IterationMetrics {
    int iteration = 0;
    long long env_steps = 0;   // cumulative environment interactions
    long long paired_obs = 0;  // cumulative pairs pushed to the buffer
    double task_return_mean = 0.0;    // finished episodes this iteration
    double shaped_return_mean = 0.0;
    double mean_kl = 0.0;             // raw KL(teacher || proxy) per step
    double epsilon = 0.0;             // NaN when no pairs exist yet
    double bound = 0.0;
    double r_max_seen = 0.0;          // running max |task reward|
    double student_align_loss = 0.0;
    double proxy_align_loss = 0.0;
    double teacher_success = 0.0;
    double student_success = 0.0;
    double teacher_eval_return = 0.0;
    double student_eval_return = 0.0;
    double ppo_loss = 0.0;
    double clip_fraction = 0.0;
    double entropy = 0.0;
};

// Owns the bundle, environment, optimizers, buffers, and RNG streams, and
// runs the three-phase loop. Evaluation (if an evaluator is supplied) runs
// after the phases each iteration on the then-current bundle.
class SittTrainer {
   public:
    SittTrainer(PolicyBundle bundle, std::unique_ptr<VecEnv> env, SittConfig cfg,
                std::uint64_t root_seed, Evaluator evaluator = {});

    PolicyBundle& bundle() { return bundle_; }
    const PolicyBundle& bundle() const { return bundle_; }
    VecEnv& env() { return *env_; }
    const SittConfig& config() const { return cfg_; }
    const std::vector<IterationMetrics>& metrics() const { return metrics_; }
    const AlignmentBuffer& alignment_buffer() const { return align_; }
    int iterations_done() const { return iterations_done_; }

    IterationMetrics run_iteration();
    void train();  // cfg.iterations total, counting iterations already done

    // whole-run state: parameters, optimizer moments, RNG streams, env and
    // buffer contents. A trainer built with identical constructor arguments
    // resumes bit-exactly after load_checkpoint.
    void save_checkpoint(const std::string& path) const;
    void load_checkpoint(const std::string& path);

    std::uint64_t config_hash() const;

   private:
    void save_checkpoint(std::ostream& out) const;
    void load_checkpoint(std::istream& in);

    PolicyBundle bundle_;
    std::unique_ptr<VecEnv> env_;
    SittConfig cfg_;
    Evaluator evaluator_;
    AdamOptimizer teacher_opt_, student_opt_, proxy_opt_;
    AlignmentBuffer align_;
    EpisodeLedger ledger_;
    RolloutBuffer rollout_;
    Rng action_rng_, shuffle_rng_, batch_rng_;
    std::vector<IterationMetrics> metrics_;
    int iterations_done_ = 0;
    long long env_steps_ = 0;
    long long paired_obs_ = 0;
    double r_max_seen_ = 0.0;
};

}  // namespace alignrl
