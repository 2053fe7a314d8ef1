#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "alignrl/errors.hpp"
#include "alignrl/experiment.hpp"
#include "alignrl/run_config.hpp"

using namespace alignrl;
namespace fs = std::filesystem;

namespace {

bool same_bits(double a, double b) {
    std::uint64_t ua, ub;
    std::memcpy(&ua, &a, sizeof a);
    std::memcpy(&ub, &b, sizeof b);
    return ua == ub;
}

// tiny but complete run: 2 cycles x 8 steps x 4 envs
RunConfig tiny_config(const std::string& out_dir) {
    RunConfig cfg;
    cfg.seed = 7;
    cfg.output_dir = out_dir;
    cfg.num_envs = 4;
    cfg.horizon = 30;
    cfg.eval_layouts = 2;
    cfg.iterations = 2;
    cfg.rollout_steps = 8;
    cfg.alignment_iters = 2;
    cfg.align_batch = 0;
    cfg.entropy_coef = 0.1;
    return cfg;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name)
        : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& sub = "") const {
        return sub.empty() ? path.string() : (path / sub).string();
    }
};

}  // namespace

TEST_CASE("the resolved dump round-trips through the parser byte for byte") {
    RunConfig defaults;
    std::string dump = dump_run_config(defaults);
    RunConfig parsed = parse_run_config(dump);
    CHECK(dump_run_config(parsed) == dump);

    parsed.lambda1 = 0.3333333333333333;
    parsed.seed = 18446744073709551615ull;
    parsed.mode = "dagger";
    std::string dump2 = dump_run_config(parsed);
    CHECK(dump_run_config(parse_run_config(dump2)) == dump2);
}

TEST_CASE("sectioned keys land in the right fields") {
    RunConfig cfg = parse_run_config(
        "# leading comment\n"
        "[run]\n"
        "seed = 9\n"
        "mode = plain   # trailing comment\n"
        "\n"
        "[ppo]\n"
        "lambda1 = 0.5\n"
        "normalize_advantages = false\n"
        "[env]\n"
        "num_envs = 3\n");
    CHECK(cfg.seed == 9);
    CHECK(cfg.mode == "plain");
    CHECK(cfg.lambda1 == 0.5);
    CHECK_FALSE(cfg.normalize_advantages);
    CHECK(cfg.num_envs == 3);
    // untouched keys keep their defaults
    CHECK(cfg.lambda2 == 0.001);
    CHECK(cfg.iterations == 150);
}

TEST_CASE("malformed configs are rejected with the line and key") {
    auto message = [](const std::string& text) {
        try {
            parse_run_config(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };

    CHECK(message("[run]\nbogus = 1\n").find("line 2") != std::string::npos);
    CHECK(message("[run]\nbogus = 1\n").find("run.bogus") != std::string::npos);
    CHECK(message("[nowhere]\n").find("unknown section") != std::string::npos);
    CHECK(message("seed = 1\n").find("before any [section]") !=
          std::string::npos);
    CHECK(message("[run]\nseed\n").find("expected key = value") !=
          std::string::npos);
    CHECK(message("[run]\nseed = abc\n").find("non-negative integer") !=
          std::string::npos);
    CHECK(message("[ppo]\ngamma = fast\n").find("ppo.gamma") !=
          std::string::npos);
    CHECK(message("[run\n").find("unterminated") != std::string::npos);
    CHECK(message("[ppo]\nnormalize_advantages = yes\n").find("true or false") !=
          std::string::npos);
}

TEST_CASE("explicit overrides and environment overrides reach the config") {
    RunConfig cfg;
    apply_override(cfg, "ppo.lambda1", "0");
    apply_override(cfg, "run.mode", "bc");
    CHECK(cfg.lambda1 == 0.0);
    CHECK(cfg.mode == "bc");
    CHECK_THROWS_AS(apply_override(cfg, "ppo.nope", "1"), ConfigError);
    CHECK_THROWS_AS(apply_override(cfg, "ppo.gamma", "brr"), ConfigError);

    std::map<std::string, std::string> fake_env = {
        {"ALIGNRL_PPO_LAMBDA2", "0.25"},
        {"ALIGNRL_ENV_NUM_ENVS", "12"},
    };
    int applied = apply_env_overrides(cfg, [&](const std::string& name) {
        auto it = fake_env.find(name);
        return it == fake_env.end() ? nullptr : it->second.c_str();
    });
    CHECK(applied == 2);
    CHECK(cfg.lambda2 == 0.25);
    CHECK(cfg.num_envs == 12);

    fake_env["ALIGNRL_PPO_GAMMA"] = "nah";
    CHECK_THROWS_AS(apply_env_overrides(cfg,
                                        [&](const std::string& name) {
                                            auto it = fake_env.find(name);
                                            return it == fake_env.end()
                                                       ? nullptr
                                                       : it->second.c_str();
                                        }),
                    ConfigError);
}

TEST_CASE("validation rejects impossible field combinations") {
    RunConfig cfg;
    cfg.mode = "sideways";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.env_kind = "chess";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.teacher_fraction = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = RunConfig{};
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK_NOTHROW(RunConfig{}.validate());
}

TEST_CASE("config fields map onto the trainer and baseline configs") {
    RunConfig cfg;
    cfg.iterations = 9;
    cfg.rollout_steps = 17;
    cfg.ppo_epochs = 3;
    cfg.lambda1 = 0.7;
    cfg.align_batch = 99;
    SittConfig s = cfg.to_sitt();
    CHECK(s.iterations == 9);
    CHECK(s.rollout_steps == 17);
    CHECK(s.ppo.epochs == 3);
    CHECK(s.ppo.lambda1 == 0.7);
    CHECK(s.align_batch == 99);
    CHECK(s.run_alignment);

    cfg.dagger_beta0 = 0.5;
    cfg.refit_passes = 4;
    ImitationConfig im = cfg.to_imitation(6);
    CHECK(im.iterations == 6);
    CHECK(im.rollout_steps == 17);
    CHECK(im.refit_passes == 4);
    CHECK(im.schedule.beta0 == 0.5);

    MazeConfig mz = cfg.to_maze();
    CHECK(mz.grid_size == 11);
    CHECK(mz.horizon == 150);
}

TEST_CASE("exact formatting survives a text round trip") {
    for (double v : {0.1, 1.0 / 3.0, 1e300, 2.2250738585072014e-308, -0.0, 42.0,
                     0.001}) {
        const double back = std::stod(format_exact(v));
        CHECK(same_bits(back, v));
    }
    CHECK(format_exact(std::nan("")) == "nan");
    CHECK(format_exact(1.0) == "1");
}

TEST_CASE("the metrics table prints every field in a fixed column order") {
    IterationMetrics m;
    m.iteration = 3;
    m.env_steps = 640;
    m.paired_obs = 320;
    m.task_return_mean = 1.5;
    m.epsilon = std::nan("");
    m.teacher_success = 0.25;
    std::string csv = metrics_csv({m});
    CHECK(csv.find("iteration,env_steps,paired_obs,task_return_mean") == 0);
    CHECK(csv.find("\n3,640,320,1.5,") != std::string::npos);
    CHECK(csv.find(",nan,") != std::string::npos);
    CHECK(csv.find(",0.25,") != std::string::npos);
    const std::string again = metrics_csv({m});
    CHECK(csv == again);
}

TEST_CASE("a joint run writes config, metrics, summary and checkpoint") {
    TempDir tmp("alignrl_cli_joint");
    RunConfig cfg = tiny_config(tmp.str("run"));
    ExperimentResult result = run_experiment(cfg);

    CHECK(fs::exists(result.paths.config));
    CHECK(fs::exists(result.paths.metrics));
    CHECK(fs::exists(result.paths.summary));
    CHECK(fs::exists(result.paths.checkpoint));

    // the resolved config reproduces the run configuration exactly
    RunConfig parsed = parse_run_config(read_text_file(result.paths.config));
    CHECK(dump_run_config(parsed) == dump_run_config(cfg));

    const std::string csv = read_text_file(result.paths.metrics);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);  // header + 2 rows

    nlohmann::json summary =
        nlohmann::json::parse(read_text_file(result.paths.summary));
    CHECK(summary["mode"] == "joint");
    CHECK(summary["env_steps"].get<long long>() == 2 * 8 * 4);
    CHECK(summary["paired_obs"].get<long long>() == 2 * 8 * 4);
    CHECK(summary.contains("student_success"));
    CHECK(result.env_steps == 64);
}

TEST_CASE("identical seeds produce byte-identical metrics files") {
    TempDir tmp("alignrl_cli_repro");
    RunConfig a = tiny_config(tmp.str("a"));
    RunConfig b = tiny_config(tmp.str("b"));
    ExperimentResult ra = run_experiment(a);
    ExperimentResult rb = run_experiment(b);
    CHECK(read_text_file(ra.paths.metrics) == read_text_file(rb.paths.metrics));

    RunConfig c = tiny_config(tmp.str("c"));
    c.seed = 8;
    ExperimentResult rc = run_experiment(c);
    CHECK(read_text_file(ra.paths.metrics) != read_text_file(rc.paths.metrics));
}

TEST_CASE("a saved checkpoint evaluates and renders from a fresh process state") {
    TempDir tmp("alignrl_cli_checkpoint");
    RunConfig cfg = tiny_config(tmp.str("run"));
    ExperimentResult result = run_experiment(cfg);

    CheckpointEvaluation eval = evaluate_checkpoint(cfg, result.paths.checkpoint);
    CHECK(eval.teacher.per_layout_success.size() == 2);
    CHECK(eval.student.per_layout_success.size() == 2);
    CHECK(eval.teacher.success_rate >= 0.0);
    CHECK(eval.teacher.success_rate <= 1.0);

    CHECK_THROWS_AS(evaluate_checkpoint(cfg, tmp.str("missing.txt")),
                    ConfigError);

    render_checkpoint(cfg, result.paths.checkpoint, 1, PolicyRole::Teacher,
                      tmp.str("pics"));
    const std::string traj = read_text_file(tmp.str("pics/trajectory.txt"));
    CHECK(traj.find('S') != std::string::npos);
    CHECK(traj.find('G') != std::string::npos);
    const std::string ppm = read_text_file(tmp.str("pics/trajectory.ppm"));
    CHECK(ppm.rfind("P6\n", 0) == 0);
    CHECK(fs::exists(tmp.str("pics/occupancy.txt")));
    CHECK(fs::exists(tmp.str("pics/occupancy.ppm")));
    CHECK_THROWS_AS(render_checkpoint(cfg, result.paths.checkpoint, 5,
                                      PolicyRole::Teacher, tmp.str("pics")),
                    ArgumentError);
}

TEST_CASE("imitation modes split the budget and record the collection") {
    TempDir tmp("alignrl_cli_bc");
    RunConfig cfg = tiny_config(tmp.str("bc"));
    cfg.mode = "bc";
    cfg.iterations = 4;
    cfg.refit_passes = 2;
    cfg.refit_batch = 16;
    ExperimentResult result = run_experiment(cfg);

    // 3 expert cycles + 1 collection round, all at 8 steps x 4 envs
    CHECK(result.env_steps == 4 * 8 * 4);
    CHECK(result.paired_obs == 1 * 8 * 4);

    nlohmann::json summary =
        nlohmann::json::parse(read_text_file(result.paths.summary));
    CHECK(summary["mode"] == "bc");
    CHECK(summary["collection_rounds"].get<int>() == 1);
    CHECK(summary.contains("refit_final_loss"));
    CHECK(summary["student_success"].is_number());

    // the joint run at the same counters spends the same environment budget
    RunConfig joint = tiny_config(tmp.str("joint"));
    joint.iterations = 4;
    ExperimentResult joint_result = run_experiment(joint);
    CHECK(joint_result.env_steps == result.env_steps);
}

TEST_CASE("the report averages success per mode across runs") {
    TempDir tmp("alignrl_cli_report");
    fs::create_directories(tmp.str("r1"));
    fs::create_directories(tmp.str("r2"));
    fs::create_directories(tmp.str("r3"));
    write_text_file(tmp.str("r1/summary.json"),
                    R"({"mode":"joint","student_success":0.8,"teacher_success":1.0})");
    write_text_file(tmp.str("r2/summary.json"),
                    R"({"mode":"joint","student_success":0.9,"teacher_success":1.0})");
    write_text_file(tmp.str("r3/summary.json"),
                    R"({"mode":"bc","student_success":0.1,"teacher_success":1.0})");

    std::string report =
        make_report({tmp.str("r1"), tmp.str("r2"), tmp.str("r3")});
    CHECK(report.find("joint") != std::string::npos);
    CHECK(report.find("0.850 +/- 0.071") != std::string::npos);
    CHECK(report.find("0.100 +/- 0.000") != std::string::npos);
    CHECK(std::count(report.begin(), report.end(), '\n') == 3);

    write_text_file(tmp.str("r3/summary.json"), "{not json");
    CHECK_THROWS_AS(make_report({tmp.str("r3")}), StateError);
    CHECK_THROWS_AS(make_report({tmp.str("nowhere")}), StateError);
    CHECK_THROWS_AS(make_report({}), ArgumentError);
}

TEST_CASE("imitation baselines refuse the continuous environment") {
    TempDir tmp("alignrl_cli_pg");
    RunConfig cfg = tiny_config(tmp.str("pg"));
    cfg.env_kind = "pointgap";
    cfg.horizon = 25;
    cfg.mode = "dagger";
    CHECK_THROWS_AS(run_experiment(cfg), ConfigError);
}
