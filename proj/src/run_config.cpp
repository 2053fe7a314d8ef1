#include "alignrl/run_config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "alignrl/errors.hpp"

namespace alignrl {

std::string format_exact(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    if (ec != std::errc()) throw StateError("format_exact: conversion failed");
    return std::string(buf, end);
}

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string show(const std::string& v) { return v; }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(int v) { return std::to_string(v); }
std::string show(std::uint64_t v) { return std::to_string(v); }
std::string show(double v) { return format_exact(v); }

template <class T>
T parse_value(const std::string& text);

template <>
std::string parse_value<std::string>(const std::string& text) {
    if (text.empty()) throw ConfigError("expects a value, got nothing");
    return text;
}

template <>
bool parse_value<bool>(const std::string& text) {
    if (text == "true") return true;
    if (text == "false") return false;
    throw ConfigError("expects true or false, got '" + text + "'");
}

template <>
int parse_value<int>(const std::string& text) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("expects an integer, got '" + text + "'");
    return out;
}

template <>
std::uint64_t parse_value<std::uint64_t>(const std::string& text) {
    std::uint64_t out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw ConfigError("expects a non-negative integer, got '" + text + "'");
    return out;
}

template <>
double parse_value<double>(const std::string& text) {
    try {
        std::size_t used = 0;
        double out = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("expects a number, got '" + text + "'");
    }
}

struct Entry {
    std::string key;
    std::string doc;
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <class T>
Entry make_entry(const char* key, const char* doc, T RunConfig::*member) {
    return {key, doc,
            [member](const RunConfig& c) { return show(c.*member); },
            [member](RunConfig& c, const std::string& v) {
                c.*member = parse_value<T>(v);
            }};
}

const std::vector<Entry>& entries() {
    static const std::vector<Entry> table = {
        make_entry("run.seed", "root seed for every derived random stream",
                   &RunConfig::seed),
        make_entry("run.mode", "joint | wo_alignment | plain | bc | dagger",
                   &RunConfig::mode),
        make_entry("run.output_dir",
                   "directory receiving config, metrics and checkpoints",
                   &RunConfig::output_dir),
        make_entry("env.kind", "maze | pointgap", &RunConfig::env_kind),
        make_entry("env.num_envs", "parallel training environments",
                   &RunConfig::num_envs),
        make_entry("env.grid_size", "maze grid side length",
                   &RunConfig::grid_size),
        make_entry("env.region_size", "side of the centered lava/path region",
                   &RunConfig::region_size),
        make_entry("env.horizon", "episode step limit", &RunConfig::horizon),
        make_entry("env.eval_layouts", "held-out evaluation environments",
                   &RunConfig::eval_layouts),
        make_entry("env.eval_episodes", "episodes per evaluation environment",
                   &RunConfig::eval_episodes),
        make_entry("phases.iterations",
                   "roll-out / policy-update / alignment cycles",
                   &RunConfig::iterations),
        make_entry("phases.rollout_steps",
                   "env steps collected per cycle and environment",
                   &RunConfig::rollout_steps),
        make_entry("phases.ppo_epochs",
                   "policy-update passes over each roll-out buffer",
                   &RunConfig::ppo_epochs),
        make_entry("phases.alignment_iters",
                   "student/proxy alignment steps per cycle",
                   &RunConfig::alignment_iters),
        make_entry("ppo.gamma", "discount factor", &RunConfig::gamma),
        make_entry("ppo.gae_lambda", "advantage estimation decay",
                   &RunConfig::gae_lambda),
        make_entry("ppo.clip", "surrogate ratio clip radius", &RunConfig::clip),
        make_entry("ppo.entropy_coef", "entropy bonus weight",
                   &RunConfig::entropy_coef),
        make_entry("ppo.value_coef", "value loss weight", &RunConfig::value_coef),
        make_entry("ppo.learning_rate", "teacher Adam learning rate",
                   &RunConfig::learning_rate),
        make_entry("ppo.minibatch_size", "0 runs the whole buffer as one batch",
                   &RunConfig::minibatch_size),
        make_entry("ppo.lambda1",
                   "reward penalty weight on the teacher-proxy action divergence",
                   &RunConfig::lambda1),
        make_entry("ppo.lambda2",
                   "loss weight on the teacher-proxy action divergence",
                   &RunConfig::lambda2),
        make_entry("ppo.normalize_advantages", "standardize advantages per batch",
                   &RunConfig::normalize_advantages),
        make_entry("ppo.kl_grad_through_decoder",
                   "route the divergence gradient through the shared decoder",
                   &RunConfig::kl_grad_through_decoder),
        make_entry("alignment.learning_rate", "student and proxy Adam rate",
                   &RunConfig::align_learning_rate),
        make_entry("alignment.env_fraction",
                   "share of envs contributing paired observations",
                   &RunConfig::align_env_fraction),
        make_entry("alignment.buffer_capacity",
                   "paired-observation ring size, 0 holds one roll-out",
                   &RunConfig::align_buffer_capacity),
        make_entry("alignment.batch", "alignment batch size, 0 uses the buffer",
                   &RunConfig::align_batch),
        make_entry("baseline.dagger_beta0",
                   "initial expert-action probability, decays per round",
                   &RunConfig::dagger_beta0),
        make_entry("baseline.refit_passes", "dataset passes per student refit",
                   &RunConfig::refit_passes),
        make_entry("baseline.refit_batch", "refit batch size, 0 uses the dataset",
                   &RunConfig::refit_batch),
        make_entry("baseline.learning_rate", "imitation Adam learning rate",
                   &RunConfig::imitation_learning_rate),
        make_entry("baseline.teacher_fraction",
                   "share of iterations spent training the frozen expert",
                   &RunConfig::teacher_fraction),
    };
    return table;
}

const Entry* find_entry(const std::string& key) {
    for (const Entry& e : entries())
        if (e.key == key) return &e;
    return nullptr;
}

bool known_section(const std::string& name) {
    const std::string prefix = name + ".";
    for (const Entry& e : entries())
        if (e.key.compare(0, prefix.size(), prefix) == 0) return true;
    return false;
}

std::string env_name(const std::string& key) {
    std::string out = "ALIGNRL_";
    for (char c : key)
        out.push_back(c == '.' ? '_'
                               : static_cast<char>(std::toupper(
                                     static_cast<unsigned char>(c))));
    return out;
}

}  // namespace

// ----------------------------------------------------------------- parsing

RunConfig parse_run_config(const std::string& text) {
    RunConfig config;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const std::string where = "line " + std::to_string(line);
        std::string s = raw;
        if (std::size_t hash = s.find('#'); hash != std::string::npos)
            s.resize(hash);
        s = trim(s);
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw ConfigError(where + ": unterminated section header '" + s + "'");
            section = trim(s.substr(1, s.size() - 2));
            if (!known_section(section))
                throw ConfigError(where + ": unknown section '[" + section + "]'");
            continue;
        }
        const std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + ": expected key = value, got '" + s + "'");
        const std::string key = trim(s.substr(0, eq));
        const std::string value = trim(s.substr(eq + 1));
        if (key.empty()) throw ConfigError(where + ": missing key before '='");
        if (section.empty())
            throw ConfigError(where + ": key '" + key +
                              "' appears before any [section]");
        const std::string full = section + "." + key;
        const Entry* entry = find_entry(full);
        if (!entry) throw ConfigError(where + ": unknown key '" + full + "'");
        try {
            entry->set(config, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": key '" + full + "' " + e.what());
        }
    }
    return config;
}

RunConfig load_run_config(const std::string& path) {
    try {
        return parse_run_config(read_text_file(path));
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value) {
    const Entry* entry = find_entry(key);
    if (!entry) throw ConfigError("unknown key '" + key + "'");
    try {
        entry->set(config, value);
    } catch (const ConfigError& e) {
        throw ConfigError("key '" + key + "' " + e.what());
    }
}

int apply_env_overrides(RunConfig& config,
                        const std::function<const char*(const std::string&)>& get_env) {
    int applied = 0;
    for (const Entry& e : entries()) {
        const char* value = get_env(env_name(e.key));
        if (!value) continue;
        try {
            e.set(config, value);
        } catch (const ConfigError& err) {
            throw ConfigError(env_name(e.key) + ": " + err.what());
        }
        ++applied;
    }
    return applied;
}

int apply_env_overrides(RunConfig& config) {
    return apply_env_overrides(
        config, [](const std::string& name) { return std::getenv(name.c_str()); });
}

std::string dump_run_config(const RunConfig& config) {
    std::string out;
    std::string section;
    for (const Entry& e : entries()) {
        const std::size_t dot = e.key.find('.');
        const std::string sec = e.key.substr(0, dot);
        if (sec != section) {
            if (!out.empty()) out += "\n";
            out += "[" + sec + "]\n";
            section = sec;
        }
        out += "# " + e.doc + "\n";
        out += e.key.substr(dot + 1) + " = " + e.get(config) + "\n";
    }
    return out;
}

// -------------------------------------------------------------- conversion

void RunConfig::validate() const {
    if (mode != "joint" && mode != "wo_alignment" && mode != "plain" &&
        mode != "bc" && mode != "dagger")
        throw ConfigError("run.mode: unknown mode '" + mode + "'");
    if (env_kind != "maze" && env_kind != "pointgap")
        throw ConfigError("env.kind: unknown environment '" + env_kind + "'");
    if (output_dir.empty()) throw ConfigError("run.output_dir: must not be empty");
    if (num_envs < 1) throw ConfigError("env.num_envs: must be >= 1");
    if (eval_layouts < 1) throw ConfigError("env.eval_layouts: must be >= 1");
    if (eval_episodes < 1) throw ConfigError("env.eval_episodes: must be >= 1");
    if (!(teacher_fraction > 0.0 && teacher_fraction < 1.0))
        throw ConfigError("baseline.teacher_fraction: must lie inside (0, 1)");
    to_sitt().validate();
    to_imitation(1).validate();
    if (env_kind == "maze") to_maze().validate();
    if (env_kind == "pointgap") to_pointgap().validate();
}

SittConfig RunConfig::to_sitt() const {
    SittConfig cfg;
    cfg.iterations = iterations;
    cfg.rollout_steps = rollout_steps;
    cfg.alignment_iters = alignment_iters;
    cfg.align_lr = align_learning_rate;
    cfg.align_env_fraction = align_env_fraction;
    cfg.align_buffer_capacity = align_buffer_capacity;
    cfg.align_batch = align_batch;
    cfg.run_alignment = true;
    cfg.ppo.gamma = gamma;
    cfg.ppo.gae_lambda = gae_lambda;
    cfg.ppo.clip = clip;
    cfg.ppo.entropy_coef = entropy_coef;
    cfg.ppo.value_coef = value_coef;
    cfg.ppo.lr = learning_rate;
    cfg.ppo.epochs = ppo_epochs;
    cfg.ppo.minibatch_size = minibatch_size;
    cfg.ppo.lambda1 = lambda1;
    cfg.ppo.lambda2 = lambda2;
    cfg.ppo.normalize_advantages = normalize_advantages;
    cfg.ppo.kl_grad_through_decoder = kl_grad_through_decoder;
    return cfg;
}

ImitationConfig RunConfig::to_imitation(int collect_iterations) const {
    ImitationConfig cfg;
    cfg.iterations = collect_iterations;
    cfg.rollout_steps = rollout_steps;
    cfg.refit_passes = refit_passes;
    cfg.batch_size = refit_batch;
    cfg.learning_rate = imitation_learning_rate;
    cfg.schedule.beta0 = dagger_beta0;
    return cfg;
}

MazeConfig RunConfig::to_maze() const {
    MazeConfig cfg;
    cfg.grid_size = grid_size;
    cfg.region_size = region_size;
    cfg.horizon = horizon;
    return cfg;
}

PointGapConfig RunConfig::to_pointgap() const {
    PointGapConfig cfg;
    cfg.horizon = horizon;
    return cfg;
}

// ------------------------------------------------------------------- files

std::string metrics_csv(const std::vector<IterationMetrics>& rows) {
    std::string out =
        "iteration,env_steps,paired_obs,task_return_mean,shaped_return_mean,"
        "mean_kl,epsilon,bound,r_max_seen,student_align_loss,proxy_align_loss,"
        "teacher_success,student_success,teacher_eval_return,"
        "student_eval_return,ppo_loss,clip_fraction,entropy\n";
    for (const IterationMetrics& m : rows) {
        out += std::to_string(m.iteration) + ',';
        out += std::to_string(m.env_steps) + ',';
        out += std::to_string(m.paired_obs) + ',';
        out += format_exact(m.task_return_mean) + ',';
        out += format_exact(m.shaped_return_mean) + ',';
        out += format_exact(m.mean_kl) + ',';
        out += format_exact(m.epsilon) + ',';
        out += format_exact(m.bound) + ',';
        out += format_exact(m.r_max_seen) + ',';
        out += format_exact(m.student_align_loss) + ',';
        out += format_exact(m.proxy_align_loss) + ',';
        out += format_exact(m.teacher_success) + ',';
        out += format_exact(m.student_success) + ',';
        out += format_exact(m.teacher_eval_return) + ',';
        out += format_exact(m.student_eval_return) + ',';
        out += format_exact(m.ppo_loss) + ',';
        out += format_exact(m.clip_fraction) + ',';
        out += format_exact(m.entropy) + '\n';
    }
    return out;
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw StateError("cannot open for writing: " + path);
    out << text;
    if (!out) throw StateError("write failed: " + path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StateError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace alignrl
