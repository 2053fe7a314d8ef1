#include "alignrl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>

#include "json.hpp"

#include "alignrl/baselines.hpp"
#include "alignrl/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace alignrl {

namespace {

bool imitation_mode(const RunConfig& cfg) {
    return cfg.mode == "bc" || cfg.mode == "dagger";
}

// imitation runs split the iteration budget between expert training and
// collection; both phases spend rollout_steps * num_envs steps per iteration
int expert_iterations(const RunConfig& cfg) {
    const int t = static_cast<int>(
        std::llround(cfg.teacher_fraction * cfg.iterations));
    return std::clamp(t, 1, cfg.iterations - 1);
}

SittConfig sitt_for_mode(const RunConfig& cfg) {
    SittConfig s = cfg.to_sitt();
    if (cfg.mode == "wo_alignment") s = without_alignment(s);
    if (cfg.mode == "plain" || imitation_mode(cfg)) {
        s.ppo.lambda1 = 0.0;
        s.ppo.lambda2 = 0.0;
        s.run_alignment = false;
    }
    if (imitation_mode(cfg)) s.iterations = expert_iterations(cfg);
    return s;
}

void check_imitation_env(const RunConfig& cfg) {
    if (imitation_mode(cfg) && cfg.env_kind != "maze")
        throw ConfigError("run.mode: imitation baselines need the discrete maze");
    if (imitation_mode(cfg) && cfg.iterations < 2)
        throw ConfigError(
            "phases.iterations: imitation runs need at least two iterations to "
            "split between expert training and collection");
}

json summary_base(const RunConfig& cfg) {
    json j;
    j["mode"] = cfg.mode;
    j["seed"] = cfg.seed;
    j["env"] = cfg.env_kind;
    j["iterations"] = cfg.iterations;
    return j;
}

double finite_or(double v, double fallback) {
    return std::isfinite(v) ? v : fallback;
}

}  // namespace

std::vector<MazeLayout> training_layouts(const RunConfig& cfg) {
    std::vector<MazeLayout> layouts;
    for (int i = 0; i < cfg.num_envs; ++i)
        layouts.push_back(generate_maze_layout(
            derive_seed(cfg.seed, "layout", static_cast<std::uint64_t>(i)),
            cfg.to_maze()));
    return layouts;
}

ExperimentPaths experiment_paths(const std::string& output_dir) {
    ExperimentPaths p;
    p.dir = output_dir;
    p.config = (fs::path(output_dir) / "resolved.cfg").string();
    p.metrics = (fs::path(output_dir) / "metrics.csv").string();
    p.summary = (fs::path(output_dir) / "summary.json").string();
    p.checkpoint = (fs::path(output_dir) / "checkpoint.txt").string();
    return p;
}

std::unique_ptr<SittTrainer> make_trainer(const RunConfig& config,
                                          bool with_evaluator) {
    config.validate();
    check_imitation_env(config);
    if (config.env_kind == "maze") {
        const MazeConfig maze = config.to_maze();
        PolicyBundle bundle = make_policy_bundle(
            kMazeTeacherObsDim, kMazeStudentObsDim, kMazeActions, false,
            config.seed);
        Evaluator evaluator;
        if (with_evaluator)
            evaluator = make_maze_evaluator(
                make_eval_layouts(config.eval_layouts, config.seed, maze), maze);
        return std::make_unique<SittTrainer>(
            std::move(bundle),
            std::make_unique<MazeVecEnv>(training_layouts(config), maze),
            sitt_for_mode(config), config.seed, std::move(evaluator));
    }
    const PointGapConfig gap = config.to_pointgap();
    PolicyBundle bundle =
        make_policy_bundle(kPointGapTeacherObsDim, kPointGapStudentObsDim,
                           kPointGapActionDim, true, config.seed);
    Evaluator evaluator;
    if (with_evaluator)
        evaluator = make_pointgap_evaluator(
            config.eval_layouts, derive_seed(config.seed, "eval_layout", 0), gap);
    return std::make_unique<SittTrainer>(
        std::move(bundle),
        std::make_unique<PointGapVecEnv>(config.num_envs, config.seed, gap),
        sitt_for_mode(config), config.seed, std::move(evaluator));
}

ExperimentResult run_experiment(const RunConfig& config) {
    config.validate();
    check_imitation_env(config);
    ExperimentResult result;
    result.paths = experiment_paths(config.output_dir);
    fs::create_directories(result.paths.dir);
    write_text_file(result.paths.config, dump_run_config(config));

    std::unique_ptr<SittTrainer> trainer = make_trainer(config, true);
    trainer->train();
    write_text_file(result.paths.metrics, metrics_csv(trainer->metrics()));
    trainer->save_checkpoint(result.paths.checkpoint);

    const IterationMetrics& last = trainer->metrics().back();
    json summary = summary_base(config);
    summary["teacher_success"] = last.teacher_success;
    summary["teacher_return"] = last.teacher_eval_return;
    summary["epsilon"] = finite_or(last.epsilon, -1.0);
    summary["bound"] = finite_or(last.bound, -1.0);

    if (!imitation_mode(config)) {
        result.env_steps = last.env_steps;
        result.paired_obs = last.paired_obs;
        result.teacher_success = last.teacher_success;
        result.student_success = last.student_success;
        summary["student_success"] = last.student_success;
        summary["student_return"] = last.student_eval_return;
    } else {
        const int collect = config.iterations - expert_iterations(config);
        MazeVecEnv collection_env(training_layouts(config), config.to_maze());
        ImitationResult imitation =
            config.mode == "bc"
                ? train_bc(trainer->bundle(), collection_env,
                           config.to_imitation(collect), config.seed)
                : train_dagger(trainer->bundle(), collection_env,
                               config.to_imitation(collect), config.seed);
        const MazeConfig maze = config.to_maze();
        SuccessReport student_report = evaluate_maze(
            make_imitation_actor(imitation.student),
            make_eval_layouts(config.eval_layouts, config.seed, maze), maze,
            config.eval_episodes);
        result.env_steps = last.env_steps + imitation.budget.env_steps;
        result.paired_obs = imitation.budget.paired_obs;
        result.teacher_success = last.teacher_success;
        result.student_success = student_report.success_rate;
        summary["student_success"] = student_report.success_rate;
        summary["student_return"] = student_report.mean_return;
        summary["collection_rounds"] = collect;
        summary["refit_initial_loss"] = imitation.refits.front().initial_loss;
        summary["refit_final_loss"] = imitation.refits.back().final_loss;
    }
    summary["env_steps"] = result.env_steps;
    summary["paired_obs"] = result.paired_obs;
    write_text_file(result.paths.summary, summary.dump(2) + "\n");
    return result;
}

CheckpointEvaluation evaluate_checkpoint(const RunConfig& config,
                                         const std::string& checkpoint_path) {
    if (config.env_kind != "maze")
        throw ConfigError("evaluate: per-layout reports are maze-only");
    if (!fs::exists(checkpoint_path))
        throw ConfigError("checkpoint not found: " + checkpoint_path);
    std::unique_ptr<SittTrainer> trainer = make_trainer(config, false);
    trainer->load_checkpoint(checkpoint_path);
    const MazeConfig maze = config.to_maze();
    const std::vector<MazeLayout> layouts =
        make_eval_layouts(config.eval_layouts, config.seed, maze);
    CheckpointEvaluation out;
    out.teacher =
        evaluate_maze(make_bundle_actor(trainer->bundle(), PolicyRole::Teacher),
                      layouts, maze, config.eval_episodes);
    out.student =
        evaluate_maze(make_bundle_actor(trainer->bundle(), PolicyRole::Student),
                      layouts, maze, config.eval_episodes);
    return out;
}

void render_checkpoint(const RunConfig& config, const std::string& checkpoint_path,
                       int layout_index, PolicyRole role,
                       const std::string& out_dir) {
    if (config.env_kind != "maze")
        throw ConfigError("render: trajectory pictures are maze-only");
    if (!fs::exists(checkpoint_path))
        throw ConfigError("checkpoint not found: " + checkpoint_path);
    if (layout_index < 0 || layout_index >= config.eval_layouts)
        throw ArgumentError("render: layout index outside the evaluation set");
    std::unique_ptr<SittTrainer> trainer = make_trainer(config, false);
    trainer->load_checkpoint(checkpoint_path);
    const MazeConfig maze = config.to_maze();
    const MazeLayout layout =
        make_eval_layouts(config.eval_layouts, config.seed, maze)
            .at(static_cast<std::size_t>(layout_index));
    EpisodeTrace trace = run_maze_episode(
        make_bundle_actor(trainer->bundle(), role), layout, maze);
    OccupancyGrid occupancy = occupancy_from_traces({trace}, layout.grid_size);
    fs::create_directories(out_dir);
    const fs::path dir(out_dir);
    write_text_file((dir / "trajectory.txt").string(),
                    render_trajectory_text(layout, trace));
    write_text_file((dir / "trajectory.ppm").string(),
                    render_trajectory_ppm(layout, trace));
    write_text_file((dir / "occupancy.txt").string(),
                    render_occupancy_text(layout, occupancy));
    write_text_file((dir / "occupancy.ppm").string(),
                    render_occupancy_ppm(layout, occupancy));
}

std::string make_report(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw ArgumentError("report: no run directories");
    struct Numbers {
        std::vector<double> student, teacher;
    };
    std::map<std::string, Numbers> by_mode;
    for (const std::string& dir : run_dirs) {
        const std::string path = experiment_paths(dir).summary;
        json j;
        try {
            j = json::parse(read_text_file(path));
        } catch (const json::exception& e) {
            throw StateError(path + ": " + e.what());
        }
        if (!j.contains("mode") || !j.contains("student_success") ||
            !j.contains("teacher_success"))
            throw StateError(path + ": summary is missing success fields");
        Numbers& n = by_mode[j["mode"].get<std::string>()];
        n.student.push_back(j["student_success"].get<double>());
        n.teacher.push_back(j["teacher_success"].get<double>());
    }

    auto mean_std = [](const std::vector<double>& v) {
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        const double std_dev =
            v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
        return std::pair<double, double>(mean, std_dev);
    };

    char line[160];
    std::string out;
    std::snprintf(line, sizeof line, "%-14s %4s  %-18s %-18s\n", "mode", "runs",
                  "student success", "teacher success");
    out += line;
    for (const auto& [mode, numbers] : by_mode) {
        const auto [s_mean, s_std] = mean_std(numbers.student);
        const auto [t_mean, t_std] = mean_std(numbers.teacher);
        std::snprintf(line, sizeof line,
                      "%-14s %4zu  %.3f +/- %.3f    %.3f +/- %.3f\n",
                      mode.c_str(), numbers.student.size(), s_mean, s_std, t_mean,
                      t_std);
        out += line;
    }
    return out;
}

}  // namespace alignrl
