#include "alignrl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>
#include <utility>

#include "alignrl/distributions.hpp"
#include "alignrl/errors.hpp"
#include "alignrl/mlp.hpp"

namespace alignrl {

namespace {

int argmax_row(const Tensor2D& t, int row) {
    int best = 0;
    for (int c = 1; c < t.cols; ++c)
        if (t.at(row, c) > t.at(row, best)) best = c;
    return best;
}

}  // namespace

MazeActor make_bundle_actor(const PolicyBundle& bundle, PolicyRole role) {
    // copy so the actor outlives the caller's bundle and evaluation cannot
    // race a training update
    PolicyBundle snapshot = bundle;
    return [snapshot = std::move(snapshot), role](const MazeLayout& layout,
                                                  const MazeState& state) {
        const bool student = role == PolicyRole::Student;
        const int dim = student ? kMazeStudentObsDim : kMazeTeacherObsDim;
        Tensor2D obs(1, dim);
        if (student)
            maze_student_observation(layout, state, obs.data.data());
        else
            maze_teacher_observation(layout, state, obs.data.data());
        const Mlp& enc = student ? snapshot.student_encoder : snapshot.teacher_encoder;
        Tensor2D logits = mlp_forward(snapshot.shared_decoder, mlp_forward(enc, obs));
        return argmax_row(logits, 0);
    };
}

EpisodeTrace run_maze_episode(const MazeActor& actor, const MazeLayout& layout,
                              const MazeConfig& config) {
    BatchedColorMaze env({layout}, config);
    EpisodeTrace trace;
    trace.rows.push_back(env.state(0).pos_row);
    trace.cols.push_back(env.state(0).pos_col);
    while (true) {
        const MazeState& s = env.state(0);
        const int a = actor(layout, s);
        // the env auto-resets on termination, so pin the landing cell now
        int dr = 0, dc = 0;
        maze_action_delta(a, dr, dc);
        int nr = s.pos_row + dr, nc = s.pos_col + dc;
        if (!layout.in_grid(nr, nc)) {
            nr = s.pos_row;
            nc = s.pos_col;
        }
        MazeStepResult r = env.step({a});
        trace.actions.push_back(a);
        trace.rows.push_back(nr);
        trace.cols.push_back(nc);
        trace.task_return += r.reward[0];
        ++trace.steps;
        if (r.done[0]) {
            trace.outcome = r.finished_outcomes.at(0);
            break;
        }
    }
    return trace;
}

SuccessReport evaluate_maze(const MazeActor& actor,
                            const std::vector<MazeLayout>& layouts,
                            const MazeConfig& config, int episodes) {
    if (layouts.empty()) throw ArgumentError("evaluate_maze: no layouts");
    if (episodes < 1) throw ArgumentError("evaluate_maze: episodes must be >= 1");
    SuccessReport report;
    for (std::size_t li = 0; li < layouts.size(); ++li) {
        double wins = 0.0, ret = 0.0;
        for (int e = 0; e < episodes; ++e) {
            EpisodeTrace t = run_maze_episode(actor, layouts[li], config);
            t.layout_index = static_cast<int>(li);
            wins += t.outcome == Outcome::Success ? 1.0 : 0.0;
            ret += t.task_return;
            report.traces.push_back(std::move(t));
        }
        report.per_layout_success.push_back(wins / episodes);
        report.per_layout_return.push_back(ret / episodes);
    }
    for (double s : report.per_layout_success) report.success_rate += s;
    for (double r : report.per_layout_return) report.mean_return += r;
    report.success_rate /= static_cast<double>(layouts.size());
    report.mean_return /= static_cast<double>(layouts.size());
    return report;
}

std::vector<MazeLayout> make_eval_layouts(int count, std::uint64_t root_seed,
                                          const MazeConfig& config) {
    std::vector<MazeLayout> layouts;
    for (int i = 0; i < count; ++i)
        layouts.push_back(
            generate_maze_layout(derive_seed(root_seed, "eval_layout", i), config));
    return layouts;
}

Evaluator make_maze_evaluator(std::vector<MazeLayout> layouts, MazeConfig config) {
    return [layouts = std::move(layouts), config](const PolicyBundle& bundle) {
        SuccessReport t =
            evaluate_maze(make_bundle_actor(bundle, PolicyRole::Teacher), layouts,
                          config);
        SuccessReport s =
            evaluate_maze(make_bundle_actor(bundle, PolicyRole::Student), layouts,
                          config);
        return EvalNumbers{t.success_rate, s.success_rate, t.mean_return,
                           s.mean_return};
    };
}

EvalNumbers evaluate_pointgap(const PolicyBundle& bundle, int num_envs,
                              std::uint64_t seed, const PointGapConfig& config) {
    EvalNumbers out;
    for (PolicyRole role : {PolicyRole::Teacher, PolicyRole::Student}) {
        BatchedPointGap env(num_envs, seed, config);
        const bool student = role == PolicyRole::Student;
        const Mlp& enc = student ? bundle.student_encoder : bundle.teacher_encoder;
        Tensor2D obs(num_envs, student ? kPointGapStudentObsDim
                                       : kPointGapTeacherObsDim);
        std::vector<int> finished(static_cast<std::size_t>(num_envs), 0);
        double wins = 0.0, returns = 0.0;
        int remaining = num_envs;
        while (remaining > 0) {
            if (student)
                env.observe_student(obs);
            else
                env.observe_teacher(obs);
            Tensor2D actions =
                mlp_forward(bundle.shared_decoder, mlp_forward(enc, obs));
            PointGapStepResult r = env.step(actions);
            std::size_t fin = 0;
            for (int e = 0; e < num_envs; ++e) {
                if (!r.done[static_cast<std::size_t>(e)]) continue;
                const double ep_return = r.finished_returns.at(fin);
                const Outcome oc = r.finished_outcomes.at(fin);
                ++fin;
                if (finished[static_cast<std::size_t>(e)]) continue;  // replays
                finished[static_cast<std::size_t>(e)] = 1;
                --remaining;
                wins += oc == Outcome::Success ? 1.0 : 0.0;
                returns += ep_return;
            }
        }
        if (student) {
            out.student_success = wins / num_envs;
            out.student_return = returns / num_envs;
        } else {
            out.teacher_success = wins / num_envs;
            out.teacher_return = returns / num_envs;
        }
    }
    return out;
}

Evaluator make_pointgap_evaluator(int num_envs, std::uint64_t seed,
                                  PointGapConfig config) {
    return [num_envs, seed, config](const PolicyBundle& bundle) {
        return evaluate_pointgap(bundle, num_envs, seed, config);
    };
}

// --------------------------------------------------------------- reports

OccupancyGrid::OccupancyGrid(int grid_size)
    : grid_size(grid_size),
      visits(static_cast<std::size_t>(grid_size) * grid_size, 0) {}

void OccupancyGrid::add(int row, int col) {
    if (row < 0 || row >= grid_size || col < 0 || col >= grid_size)
        throw ArgumentError("occupancy: cell outside the grid");
    ++visits[static_cast<std::size_t>(row) * grid_size + col];
    ++total;
}

long long OccupancyGrid::at(int row, int col) const {
    return visits[static_cast<std::size_t>(row) * grid_size + col];
}

OccupancyGrid occupancy_from_traces(const std::vector<EpisodeTrace>& traces,
                                    int grid_size) {
    OccupancyGrid grid(grid_size);
    for (const EpisodeTrace& t : traces)
        for (std::size_t i = 0; i < t.rows.size(); ++i)
            grid.add(t.rows[i], t.cols[i]);
    return grid;
}

double interior_cell_share(const std::vector<EpisodeTrace>& traces,
                           const std::vector<MazeLayout>& layouts) {
    std::set<std::tuple<int, int, int>> cells;  // (layout, row, col)
    long long interior = 0;
    for (const EpisodeTrace& t : traces) {
        const MazeLayout& layout = layouts.at(static_cast<std::size_t>(t.layout_index));
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            if (!cells.emplace(t.layout_index, t.rows[i], t.cols[i]).second) continue;
            const CellType c = layout.cell(t.rows[i], t.cols[i]);
            if (c == CellType::Lava || c == CellType::Path) ++interior;
        }
    }
    if (cells.empty()) return 0.0;
    return static_cast<double>(interior) / static_cast<double>(cells.size());
}

double region_step_share_successful(const std::vector<EpisodeTrace>& traces,
                                    const std::vector<MazeLayout>& layouts) {
    long long inside = 0, steps = 0;
    for (const EpisodeTrace& t : traces) {
        if (t.outcome != Outcome::Success) continue;
        const MazeLayout& layout = layouts.at(static_cast<std::size_t>(t.layout_index));
        const int lo = (layout.grid_size - layout.region_size) / 2;
        const int hi = lo + layout.region_size - 1;
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            ++steps;
            if (t.rows[i] >= lo && t.rows[i] <= hi && t.cols[i] >= lo &&
                t.cols[i] <= hi)
                ++inside;
        }
    }
    if (steps == 0) return 0.0;
    return static_cast<double>(inside) / static_cast<double>(steps);
}

// --------------------------------------------------------------- renders

namespace {

char layout_glyph(const MazeLayout& layout, int r, int c) {
    if (r == layout.start_row && c == layout.start_col) return 'S';
    switch (layout.cell(r, c)) {
        case CellType::Empty: return '.';
        case CellType::Lava: return '#';
        case CellType::Path: return 'o';
        case CellType::Goal: return 'G';
    }
    return '?';
}

struct Rgb {
    unsigned char r, g, b;
};

Rgb cell_color(const MazeLayout& layout, int r, int c) {
    if (r == layout.start_row && c == layout.start_col) return {50, 110, 220};
    switch (layout.cell(r, c)) {
        case CellType::Empty: return {245, 245, 245};
        case CellType::Lava: return {220, 60, 40};
        case CellType::Path: return {250, 210, 80};
        case CellType::Goal: return {60, 180, 75};
    }
    return {0, 0, 0};
}

Rgb blend(Rgb base, Rgb tint, double w) {
    auto mix = [w](unsigned char a, unsigned char b) {
        return static_cast<unsigned char>(std::lround((1.0 - w) * a + w * b));
    };
    return {mix(base.r, tint.r), mix(base.g, tint.g), mix(base.b, tint.b)};
}

std::string write_ppm(const MazeLayout& layout, int scale,
                      const std::function<Rgb(int, int)>& color_at) {
    if (scale < 1) throw ArgumentError("render: scale must be >= 1");
    const int side = layout.grid_size * scale;
    std::string out = "P6\n" + std::to_string(side) + " " + std::to_string(side) +
                      "\n255\n";
    out.reserve(out.size() + static_cast<std::size_t>(side) * side * 3);
    for (int py = 0; py < side; ++py)
        for (int px = 0; px < side; ++px) {
            const Rgb c = color_at(py / scale, px / scale);
            out.push_back(static_cast<char>(c.r));
            out.push_back(static_cast<char>(c.g));
            out.push_back(static_cast<char>(c.b));
        }
    return out;
}

std::vector<std::uint8_t> visited_mask(const MazeLayout& layout,
                                       const EpisodeTrace& trace) {
    std::vector<std::uint8_t> mask(
        static_cast<std::size_t>(layout.grid_size) * layout.grid_size, 0);
    for (std::size_t i = 0; i < trace.rows.size(); ++i)
        mask[static_cast<std::size_t>(trace.rows[i]) * layout.grid_size +
             trace.cols[i]] = 1;
    return mask;
}

}  // namespace

std::string render_trajectory_text(const MazeLayout& layout,
                                   const EpisodeTrace& trace) {
    std::vector<std::uint8_t> mask = visited_mask(layout, trace);
    std::string out;
    for (int r = 0; r < layout.grid_size; ++r) {
        for (int c = 0; c < layout.grid_size; ++c) {
            const char g = layout_glyph(layout, r, c);
            const bool seen =
                mask[static_cast<std::size_t>(r) * layout.grid_size + c] != 0;
            out.push_back(seen && g != 'S' && g != 'G' ? '*' : g);
        }
        out.push_back('\n');
    }
    return out;
}

std::string render_occupancy_text(const MazeLayout& layout,
                                  const OccupancyGrid& occupancy) {
    if (occupancy.grid_size != layout.grid_size)
        throw ShapeError("render: occupancy grid does not match the layout");
    std::string out;
    for (int r = 0; r < layout.grid_size; ++r) {
        for (int c = 0; c < layout.grid_size; ++c) {
            const long long n = occupancy.at(r, c);
            if (n == 0)
                out.push_back(layout_glyph(layout, r, c));
            else if (n <= 9)
                out.push_back(static_cast<char>('0' + n));
            else
                out.push_back('+');
        }
        out.push_back('\n');
    }
    return out;
}

std::string render_trajectory_ppm(const MazeLayout& layout,
                                  const EpisodeTrace& trace, int scale) {
    std::vector<std::uint8_t> mask = visited_mask(layout, trace);
    return write_ppm(layout, scale, [&](int r, int c) {
        Rgb base = cell_color(layout, r, c);
        if (mask[static_cast<std::size_t>(r) * layout.grid_size + c])
            base = blend(base, {120, 40, 160}, 0.5);
        return base;
    });
}

std::string render_occupancy_ppm(const MazeLayout& layout,
                                 const OccupancyGrid& occupancy, int scale) {
    if (occupancy.grid_size != layout.grid_size)
        throw ShapeError("render: occupancy grid does not match the layout");
    long long peak = 0;
    for (long long v : occupancy.visits) peak = std::max(peak, v);
    return write_ppm(layout, scale, [&](int r, int c) {
        Rgb base = cell_color(layout, r, c);
        const long long n = occupancy.at(r, c);
        if (peak > 0 && n > 0)
            base = blend(base, {120, 40, 160},
                         0.15 + 0.75 * static_cast<double>(n) / peak);
        return base;
    });
}

}  // namespace alignrl
