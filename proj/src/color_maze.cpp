#include "alignrl/color_maze.hpp"

#include <algorithm>
#include <sstream>

#include "alignrl/errors.hpp"

namespace alignrl {

namespace {

constexpr int kRowDelta[kMazeActions] = {-1, 0, 1, 0};  // up right down left
constexpr int kColDelta[kMazeActions] = {0, 1, 0, -1};

constexpr int kMinVertical = 3, kMaxVertical = 5;
constexpr int kMinHorizontal = 1, kMaxHorizontal = 4;

struct PathBuilder {
    int region_lo, region_hi;  // inclusive region bounds, rows and cols alike
    std::vector<std::pair<int, int>> cells;
    std::vector<std::uint8_t> used;  // grid-sized occupancy
    int grid_size;

    bool inside_region(int r, int c) const {
        return r >= region_lo && r <= region_hi && c >= region_lo && c <= region_hi;
    }
    bool is_used(int r, int c) const {
        return used[static_cast<std::size_t>(r) * grid_size + c] != 0;
    }
    void claim(int r, int c) {
        used[static_cast<std::size_t>(r) * grid_size + c] = 1;
        cells.emplace_back(r, c);
    }
};

// covers `len` cells starting at (r0, c) moving up; fails on region exit or
// collision with earlier segments
bool try_vertical(PathBuilder& b, int r0, int c, int len) {
    for (int k = 0; k < len; ++k) {
        const int r = r0 - k;
        if (!b.inside_region(r, c) || b.is_used(r, c)) return false;
    }
    for (int k = 0; k < len; ++k) b.claim(r0 - k, c);
    return true;
}

bool try_horizontal(PathBuilder& b, int r, int c0, int dir, int len) {
    for (int k = 1; k <= len; ++k) {
        const int c = c0 + dir * k;
        if (!b.inside_region(r, c) || b.is_used(r, c)) return false;
    }
    for (int k = 1; k <= len; ++k) b.claim(r, c0 + dir * k);
    return true;
}

}  // namespace

void MazeConfig::validate() const {
    if (grid_size < 5) throw ConfigError("maze grid_size too small");
    if (region_size < 3) throw ConfigError("maze region_size must be at least 3");
    if (region_size >= grid_size) throw ConfigError("maze region must fit in grid");
    if ((grid_size - region_size) % 2 != 0)
        throw ConfigError("maze region cannot be centered on this grid");
    if (border() < 2)
        throw ConfigError("maze border must be at least 2 cells for start and goal");
    if (horizon < 1) throw ConfigError("maze horizon must be positive");
}

MazeLayout generate_maze_layout(std::uint64_t seed, const MazeConfig& config) {
    config.validate();
    Rng rng(seed);
    const int region_lo = config.border();
    const int region_hi = region_lo + config.region_size - 1;

    for (int restart = 0; restart < config.max_generation_restarts; ++restart) {
        PathBuilder b;
        b.region_lo = region_lo;
        b.region_hi = region_hi;
        b.grid_size = config.grid_size;
        b.used.assign(static_cast<std::size_t>(config.grid_size) * config.grid_size, 0);

        const int entry_col = rng.uniform_int(region_lo, region_hi);
        int r = region_hi;  // bottom region row
        int c = entry_col;
        bool failed = false;

        // first vertical segment includes the entry cell itself
        {
            bool placed = false;
            for (int retry = 0; retry < config.max_segment_retries && !placed; ++retry) {
                const int len = rng.uniform_int(kMinVertical, kMaxVertical);
                if (try_vertical(b, r, c, len)) {
                    r -= len - 1;
                    placed = true;
                }
            }
            if (!placed) failed = true;
        }

        while (!failed && r != region_lo) {
            // horizontal leg, then the vertical continuing one row above it
            bool placed = false;
            for (int retry = 0; retry < config.max_segment_retries && !placed; ++retry) {
                const int dir = rng.uniform_int(0, 1) == 0 ? -1 : 1;
                const int hlen = rng.uniform_int(kMinHorizontal, kMaxHorizontal);
                const int vlen = rng.uniform_int(kMinVertical, kMaxVertical);
                const std::size_t mark = b.cells.size();
                if (try_horizontal(b, r, c, dir, hlen) &&
                    try_vertical(b, r - 1, c + dir * hlen, vlen)) {
                    c += dir * hlen;
                    r = r - 1 - (vlen - 1);
                    placed = true;
                } else {
                    // roll back a half-placed horizontal leg
                    for (std::size_t i = mark; i < b.cells.size(); ++i)
                        b.used[static_cast<std::size_t>(b.cells[i].first) *
                                   b.grid_size +
                               b.cells[i].second] = 0;
                    b.cells.resize(mark);
                }
            }
            if (!placed) failed = true;
        }
        if (failed) continue;

        MazeLayout layout;
        layout.grid_size = config.grid_size;
        layout.region_size = config.region_size;
        layout.cells.assign(
            static_cast<std::size_t>(config.grid_size) * config.grid_size,
            CellType::Empty);
        for (int rr = region_lo; rr <= region_hi; ++rr)
            for (int cc = region_lo; cc <= region_hi; ++cc)
                layout.cell(rr, cc) = CellType::Lava;
        for (const auto& [pr, pc] : b.cells) layout.cell(pr, pc) = CellType::Path;

        layout.entry_row = region_hi;
        layout.entry_col = entry_col;
        layout.start_row = region_hi + 1;
        layout.start_col = entry_col;
        const auto [last_r, last_c] = b.cells.back();
        layout.goal_row = last_r - 1;
        layout.goal_col = last_c;
        layout.cell(layout.goal_row, layout.goal_col) = CellType::Goal;
        layout.path_length = static_cast<int>(b.cells.size());
        validate_layout(layout);
        return layout;
    }
    throw StateError("maze generation failed after all restarts");
}

void validate_layout(const MazeLayout& layout) {
    if (layout.grid_size <= 0 || layout.region_size <= 0 ||
        layout.cells.size() != static_cast<std::size_t>(layout.grid_size) *
                                   layout.grid_size)
        throw StateError("layout: bad dimensions");
    const int lo = (layout.grid_size - layout.region_size) / 2;
    const int hi = lo + layout.region_size - 1;

    int path_count = 0;
    for (int r = 0; r < layout.grid_size; ++r)
        for (int c = 0; c < layout.grid_size; ++c) {
            const CellType t = layout.cell(r, c);
            const bool in_region = r >= lo && r <= hi && c >= lo && c <= hi;
            if (in_region) {
                if (t != CellType::Lava && t != CellType::Path)
                    throw StateError("layout: region cell neither lava nor path");
            } else {
                const bool is_goal = r == layout.goal_row && c == layout.goal_col;
                if (is_goal) {
                    if (t != CellType::Goal)
                        throw StateError("layout: goal cell mismatch");
                } else if (t != CellType::Empty) {
                    throw StateError("layout: border cell not empty");
                }
            }
            if (t == CellType::Path) ++path_count;
        }
    if (path_count != layout.path_length)
        throw StateError("layout: path_length does not match grid");

    // the path must be one connected walk from entry to the cell under the goal
    if (layout.cell(layout.entry_row, layout.entry_col) != CellType::Path)
        throw StateError("layout: entry is not a path cell");
    if (layout.entry_row != hi)
        throw StateError("layout: entry not on bottom region row");
    if (layout.goal_row != lo - 1)
        throw StateError("layout: goal not directly above top region row");
    if (layout.cell(layout.goal_row + 1, layout.goal_col) != CellType::Path)
        throw StateError("layout: no path cell under the goal");
    if (layout.start_row != hi + 1 || layout.start_col != layout.entry_col)
        throw StateError("layout: start not on border below entry");
    if (layout.cell(layout.start_row, layout.start_col) != CellType::Empty)
        throw StateError("layout: start cell not empty");

    // flood fill along 4-connected path cells
    std::vector<std::uint8_t> seen(layout.cells.size(), 0);
    std::vector<std::pair<int, int>> stack{{layout.entry_row, layout.entry_col}};
    seen[static_cast<std::size_t>(layout.entry_row) * layout.grid_size +
         layout.entry_col] = 1;
    int reached = 0;
    while (!stack.empty()) {
        const auto [r, c] = stack.back();
        stack.pop_back();
        ++reached;
        for (int a = 0; a < kMazeActions; ++a) {
            const int nr = r + kRowDelta[a];
            const int nc = c + kColDelta[a];
            if (!layout.in_grid(nr, nc)) continue;
            std::size_t idx = static_cast<std::size_t>(nr) * layout.grid_size + nc;
            if (!seen[idx] && layout.cell(nr, nc) == CellType::Path) {
                seen[idx] = 1;
                stack.push_back({nr, nc});
            }
        }
    }
    if (reached != path_count)
        throw StateError("layout: path cells are not connected");
}

std::string layout_to_text(const MazeLayout& layout) {
    std::ostringstream out;
    for (int r = 0; r < layout.grid_size; ++r) {
        for (int c = 0; c < layout.grid_size; ++c) {
            char ch = '.';
            if (r == layout.start_row && c == layout.start_col) {
                ch = 'S';
            } else {
                switch (layout.cell(r, c)) {
                    case CellType::Empty: ch = '.'; break;
                    case CellType::Lava: ch = '#'; break;
                    case CellType::Path: ch = 'o'; break;
                    case CellType::Goal: ch = 'G'; break;
                }
            }
            out << ch;
        }
        out << '\n';
    }
    return out.str();
}

MazeLayout layout_from_text(const std::string& text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) lines.push_back(line);
    if (lines.empty()) throw ArgumentError("layout text is empty");
    const int n = static_cast<int>(lines.size());
    for (const std::string& l : lines)
        if (static_cast<int>(l.size()) != n)
            throw ArgumentError("layout text is not a square grid");

    MazeLayout layout;
    layout.grid_size = n;
    layout.cells.assign(static_cast<std::size_t>(n) * n, CellType::Empty);
    int min_r = n, max_r = -1, min_c = n, max_c = -1;
    bool have_start = false, have_goal = false;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            switch (lines[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) {
                case '.': break;
                case '#': layout.cell(r, c) = CellType::Lava; break;
                case 'o':
                    layout.cell(r, c) = CellType::Path;
                    ++layout.path_length;
                    break;
                case 'G':
                    layout.cell(r, c) = CellType::Goal;
                    layout.goal_row = r;
                    layout.goal_col = c;
                    have_goal = true;
                    break;
                case 'S':
                    layout.start_row = r;
                    layout.start_col = c;
                    have_start = true;
                    break;
                default:
                    throw ArgumentError("layout text has an unknown cell character");
            }
            const CellType t = layout.cell(r, c);
            if (t == CellType::Lava || t == CellType::Path) {
                min_r = std::min(min_r, r);
                max_r = std::max(max_r, r);
                min_c = std::min(min_c, c);
                max_c = std::max(max_c, c);
            }
        }
    if (!have_start || !have_goal)
        throw ArgumentError("layout text must mark both S and G");
    if (max_r < min_r) throw ArgumentError("layout text has no maze region");
    if (max_r - min_r != max_c - min_c)
        throw ArgumentError("layout region is not square");
    layout.region_size = max_r - min_r + 1;
    layout.entry_row = max_r;
    layout.entry_col = layout.start_col;
    validate_layout(layout);
    return layout;
}

namespace {

int teacher_class(CellType t) { return static_cast<int>(t); }

int student_class(CellType t) {
    switch (t) {
        case CellType::Empty: return 0;
        case CellType::Lava: return 1;
        case CellType::Path: return 1;
        case CellType::Goal: return 2;
    }
    return 0;
}

CellType neighbor_type(const MazeLayout& layout, int r, int c) {
    if (!layout.in_grid(r, c)) return CellType::Empty;  // off-grid reads empty
    return layout.cell(r, c);
}

void write_observation(const MazeLayout& layout, const MazeState& state,
                       bool student, double* out) {
    const double gs = layout.grid_size;
    int k = 0;
    out[k++] = (layout.goal_col - state.pos_col) / gs;
    out[k++] = (layout.goal_row - state.pos_row) / gs;
    const int classes = student ? 3 : 4;
    for (int a = 0; a < kMazeActions; ++a) {
        const CellType t = neighbor_type(layout, state.pos_row + kRowDelta[a],
                                         state.pos_col + kColDelta[a]);
        const int cls = student ? student_class(t) : teacher_class(t);
        for (int j = 0; j < classes; ++j) out[k++] = j == cls ? 1.0 : 0.0;
    }
    out[k++] = static_cast<double>(state.pos_col - state.prev_col);
    out[k++] = static_cast<double>(state.pos_row - state.prev_row);
}

}  // namespace

void maze_teacher_observation(const MazeLayout& layout, const MazeState& state,
                              double* out) {
    write_observation(layout, state, false, out);
}

void maze_student_observation(const MazeLayout& layout, const MazeState& state,
                              double* out) {
    write_observation(layout, state, true, out);
}

BatchedColorMaze::BatchedColorMaze(std::vector<MazeLayout> layouts,
                                   const MazeConfig& config)
    : config_(config), layouts_(std::move(layouts)) {
    config_.validate();
    if (layouts_.empty()) throw ArgumentError("need at least one maze layout");
    for (const MazeLayout& l : layouts_) {
        if (l.grid_size != config_.grid_size || l.region_size != config_.region_size)
            throw ArgumentError("layout dimensions do not match maze config");
        validate_layout(l);
    }
    states_.resize(layouts_.size());
    reset_all();
}

void BatchedColorMaze::reset_all() {
    for (int i = 0; i < num_envs(); ++i) reset_env(i);
}

void BatchedColorMaze::reset_env(int i) {
    const MazeLayout& layout = layouts_[static_cast<std::size_t>(i)];
    MazeState& s = states_[static_cast<std::size_t>(i)];
    s.pos_row = layout.start_row;
    s.pos_col = layout.start_col;
    s.prev_row = s.pos_row;
    s.prev_col = s.pos_col;
    s.visited.assign(layout.cells.size(), 0);
    s.step_count = 0;
    s.outcome = Outcome::Running;
    s.episode_return = 0.0;
}

void BatchedColorMaze::observe_teacher(Tensor2D& out) const {
    if (out.rows != num_envs() || out.cols != kMazeTeacherObsDim)
        throw ShapeError("teacher observation tensor has wrong shape");
    for (int i = 0; i < num_envs(); ++i)
        maze_teacher_observation(layouts_[static_cast<std::size_t>(i)],
                                 states_[static_cast<std::size_t>(i)],
                                 &out.data[static_cast<std::size_t>(i) * out.cols]);
}

void BatchedColorMaze::observe_student(Tensor2D& out) const {
    if (out.rows != num_envs() || out.cols != kMazeStudentObsDim)
        throw ShapeError("student observation tensor has wrong shape");
    for (int i = 0; i < num_envs(); ++i)
        maze_student_observation(layouts_[static_cast<std::size_t>(i)],
                                 states_[static_cast<std::size_t>(i)],
                                 &out.data[static_cast<std::size_t>(i) * out.cols]);
}

void maze_action_delta(int action, int& drow, int& dcol) {
    if (action < 0 || action >= kMazeActions)
        throw ArgumentError("maze action index out of range");
    drow = kRowDelta[action];
    dcol = kColDelta[action];
}

MazeStepResult BatchedColorMaze::step(const std::vector<int>& actions) {
    if (static_cast<int>(actions.size()) != num_envs())
        throw ShapeError("actions count does not match environment count");
    MazeStepResult result;
    result.reward.resize(actions.size(), 0.0);
    result.done.resize(actions.size(), 0);
    result.outcome.resize(actions.size(), Outcome::Running);

    for (int i = 0; i < num_envs(); ++i) {
        const int a = actions[static_cast<std::size_t>(i)];
        if (a < 0 || a >= kMazeActions)
            throw ArgumentError("maze action index out of range");
        const MazeLayout& layout = layouts_[static_cast<std::size_t>(i)];
        MazeState& s = states_[static_cast<std::size_t>(i)];
        if (s.outcome != Outcome::Running)
            throw StateError("stepping a terminal environment without reset");

        const int nr = s.pos_row + kRowDelta[a];
        const int nc = s.pos_col + kColDelta[a];
        s.prev_row = s.pos_row;
        s.prev_col = s.pos_col;
        double reward = 0.0;
        if (layout.in_grid(nr, nc)) {
            s.pos_row = nr;
            s.pos_col = nc;
            switch (layout.cell(nr, nc)) {
                case CellType::Goal:
                    reward = 10.0;
                    s.outcome = Outcome::Success;
                    break;
                case CellType::Lava:
                    reward = -0.1;
                    s.outcome = Outcome::Fail;
                    break;
                case CellType::Path: {
                    std::uint8_t& v =
                        s.visited[static_cast<std::size_t>(nr) * layout.grid_size + nc];
                    reward = v ? -0.5 : 0.5;
                    v = 1;
                    break;
                }
                case CellType::Empty:
                    break;
            }
        }
        // blocked off-grid moves leave the position (and reward) unchanged
        ++s.step_count;
        s.episode_return += reward;
        if (s.outcome == Outcome::Running && s.step_count >= config_.horizon)
            s.outcome = Outcome::Truncated;

        result.reward[static_cast<std::size_t>(i)] = reward;
        result.outcome[static_cast<std::size_t>(i)] = s.outcome;
        if (s.outcome != Outcome::Running) {
            result.done[static_cast<std::size_t>(i)] = 1;
            result.finished_returns.push_back(s.episode_return);
            result.finished_outcomes.push_back(s.outcome);
            reset_env(i);
        }
    }
    return result;
}

const char* outcome_name(Outcome o) {
    switch (o) {
        case Outcome::Running: return "running";
        case Outcome::Success: return "success";
        case Outcome::Fail: return "fail";
        case Outcome::Truncated: return "truncated";
    }
    return "unknown";
}

}  // namespace alignrl
