#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "alignrl/errors.hpp"
#include "alignrl/experiment.hpp"
#include "alignrl/run_config.hpp"

namespace {

alignrl::RunConfig resolve_config(const std::string& config_path,
                                  const std::vector<std::string>& overrides) {
    alignrl::RunConfig cfg;
    if (!config_path.empty()) cfg = alignrl::load_run_config(config_path);
    alignrl::apply_env_overrides(cfg);
    // explicit flags outrank the environment
    for (const std::string& item : overrides) {
        const std::size_t eq = item.find('=');
        if (eq == std::string::npos)
            throw alignrl::ConfigError("--set expects key=value, got '" + item +
                                       "'");
        alignrl::apply_override(cfg, item.substr(0, eq), item.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

void print_success_report(const char* label, const alignrl::SuccessReport& r) {
    std::cout << label << " success " << r.success_rate << "  mean return "
              << r.mean_return << "\n";
    for (std::size_t i = 0; i < r.per_layout_success.size(); ++i)
        std::cout << "  layout " << i << ": success "
                  << r.per_layout_success[i] << "  return "
                  << r.per_layout_return[i] << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"student-aware teacher training on procedural mazes"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key=value config file")
        ->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "override a key, e.g. ppo.lambda1=0");
    app.fallthrough();

    CLI::App* train = app.add_subcommand("train", "run the configured mode");

    CLI::App* evaluate =
        app.add_subcommand("evaluate", "score a checkpoint on held-out layouts");
    std::string checkpoint;
    evaluate->add_option("--checkpoint", checkpoint, "trainer checkpoint file")
        ->required();

    CLI::App* render = app.add_subcommand(
        "render", "draw one held-out trajectory and its visit counts");
    std::string render_checkpoint_path, render_out = "render", role = "student";
    int layout_index = 0;
    render->add_option("--checkpoint", render_checkpoint_path, "trainer checkpoint")
        ->required();
    render->add_option("--layout", layout_index, "held-out layout index");
    render->add_option("--role", role, "teacher | student");
    render->add_option("--out", render_out, "output directory");

    CLI::App* report = app.add_subcommand(
        "report", "success mean +/- std per mode over finished runs");
    std::vector<std::string> run_dirs;
    report->add_option("dirs", run_dirs, "run output directories")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            alignrl::RunConfig cfg = resolve_config(config_path, overrides);
            alignrl::ExperimentResult result = alignrl::run_experiment(cfg);
            std::cout << "wrote " << result.paths.metrics << "\n"
                      << "env steps " << result.env_steps << "  paired obs "
                      << result.paired_obs << "\n"
                      << "teacher success " << result.teacher_success
                      << "  student success " << result.student_success << "\n";
        } else if (evaluate->parsed()) {
            alignrl::RunConfig cfg = resolve_config(config_path, overrides);
            alignrl::CheckpointEvaluation numbers =
                alignrl::evaluate_checkpoint(cfg, checkpoint);
            print_success_report("teacher", numbers.teacher);
            print_success_report("student", numbers.student);
        } else if (render->parsed()) {
            if (role != "teacher" && role != "student")
                throw alignrl::ConfigError("--role must be teacher or student");
            alignrl::RunConfig cfg = resolve_config(config_path, overrides);
            alignrl::render_checkpoint(cfg, render_checkpoint_path, layout_index,
                                       role == "teacher"
                                           ? alignrl::PolicyRole::Teacher
                                           : alignrl::PolicyRole::Student,
                                       render_out);
            std::cout << "wrote trajectory and occupancy renders to "
                      << render_out << "\n";
        } else if (report->parsed()) {
            std::cout << alignrl::make_report(run_dirs);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
