#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "alignrl/rng.hpp"
#include "alignrl/tensor.hpp"

namespace alignrl {

enum class CellType : std::uint8_t { Empty = 0, Lava = 1, Path = 2, Goal = 3 };
enum class Outcome : std::uint8_t { Running = 0, Success = 1, Fail = 2, Truncated = 3 };

struct MazeConfig {
    int grid_size = 21;    // square grid
    int region_size = 15;  // centered lava/path region
    int horizon = 300;
    int max_segment_retries = 20;
    int max_generation_restarts = 200;

    int border() const { return (grid_size - region_size) / 2; }
    void validate() const;
};

// A generated maze: a lava-filled square region crossed by one safe path that
// runs bottom to top through alternating vertical (3-5 cell) and horizontal
// (1-4 cell) segments. Start sits on the border below the path entry, the
// goal on the border above the last path cell. The empty border ring always
// offers a path-free route around the region.
struct MazeLayout {
    int grid_size = 0;
    int region_size = 0;
    std::vector<CellType> cells;  // row-major grid_size x grid_size
    int start_row = 0, start_col = 0;
    int goal_row = 0, goal_col = 0;
    int entry_row = 0, entry_col = 0;  // first path cell
    int path_length = 0;

    CellType cell(int r, int c) const {
        return cells[static_cast<std::size_t>(r) * grid_size + c];
    }
    CellType& cell(int r, int c) {
        return cells[static_cast<std::size_t>(r) * grid_size + c];
    }
    bool in_grid(int r, int c) const {
        return r >= 0 && r < grid_size && c >= 0 && c < grid_size;
    }
};

MazeLayout generate_maze_layout(std::uint64_t seed, const MazeConfig& config);

// throws StateError when any layout invariant fails
void validate_layout(const MazeLayout& layout);

// plain-text grid: '.'=Empty '#'=Lava 'o'=Path 'G'=Goal 'S'=Start
std::string layout_to_text(const MazeLayout& layout);
MazeLayout layout_from_text(const std::string& text);

struct MazeState {
    int pos_row = 0, pos_col = 0;
    int prev_row = 0, prev_col = 0;
    std::vector<std::uint8_t> visited;  // path cells entered at least once
    int step_count = 0;
    Outcome outcome = Outcome::Running;
    double episode_return = 0.0;
};

// actions: 0=up 1=right 2=down 3=left
inline constexpr int kMazeActions = 4;
inline constexpr int kMazeTeacherObsDim = 20;  // goal delta 2 + 4 neighbors x 4 + move 2
inline constexpr int kMazeStudentObsDim = 16;  // goal delta 2 + 4 neighbors x 3 + move 2

void maze_teacher_observation(const MazeLayout& layout, const MazeState& state,
                              double* out);
void maze_student_observation(const MazeLayout& layout, const MazeState& state,
                              double* out);

// (drow, dcol) of an action index
void maze_action_delta(int action, int& drow, int& dcol);

struct MazeStepResult {
    std::vector<double> reward;
    std::vector<int> done;
    std::vector<Outcome> outcome;
    // undiscounted return of each episode that finished on this step
    std::vector<double> finished_returns;
    std::vector<Outcome> finished_outcomes;
};

// Fixed layouts, one per environment, reused across episodes. Terminal
// environments reset themselves inside step; the returned observation of a
// finished environment is the first one of its next episode.
class BatchedColorMaze {
   public:
    BatchedColorMaze(std::vector<MazeLayout> layouts, const MazeConfig& config);

    int num_envs() const { return static_cast<int>(layouts_.size()); }
    const MazeConfig& config() const { return config_; }
    const MazeLayout& layout(int i) const { return layouts_.at(static_cast<std::size_t>(i)); }
    const MazeState& state(int i) const { return states_.at(static_cast<std::size_t>(i)); }
    MazeState& mutable_state(int i) { return states_.at(static_cast<std::size_t>(i)); }

    void reset_all();
    void reset_env(int i);

    // fills (num_envs, obs_dim) tensors with current observations
    void observe_teacher(Tensor2D& out) const;
    void observe_student(Tensor2D& out) const;

    MazeStepResult step(const std::vector<int>& actions);

   private:
    MazeConfig config_;
    std::vector<MazeLayout> layouts_;
    std::vector<MazeState> states_;
};

const char* outcome_name(Outcome o);

}  // namespace alignrl
