#pragma once

#include <functional>
#include <string>
#include <vector>

#include "alignrl/color_maze.hpp"
#include "alignrl/point_gap.hpp"
#include "alignrl/trainer.hpp"

namespace alignrl {

enum class PolicyRole { Teacher, Student };

// Decides the next maze action from the full environment state; bundle-backed
// actors look only at the observation their role is entitled to.
using MazeActor = std::function<int(const MazeLayout&, const MazeState&)>;

// Deterministic (argmax) actor reading the role's observation channel.
MazeActor make_bundle_actor(const PolicyBundle& bundle, PolicyRole role);

// One episode from the layout's start cell. Positions include the start and
// the terminal cell (goal or lava) the move landed on.
struct EpisodeTrace {
    int layout_index = 0;
    std::vector<int> rows, cols;
    std::vector<int> actions;
    double task_return = 0.0;
    Outcome outcome = Outcome::Running;
    int steps = 0;
};

EpisodeTrace run_maze_episode(const MazeActor& actor, const MazeLayout& layout,
                              const MazeConfig& config);

struct SuccessReport {
    double success_rate = 0.0;
    double mean_return = 0.0;
    std::vector<double> per_layout_success;
    std::vector<double> per_layout_return;
    std::vector<EpisodeTrace> traces;  // layouts x episodes, layout-major
};

SuccessReport evaluate_maze(const MazeActor& actor,
                            const std::vector<MazeLayout>& layouts,
                            const MazeConfig& config, int episodes = 1);

// Held-out evaluation layouts, distinct stream from training layouts.
std::vector<MazeLayout> make_eval_layouts(int count, std::uint64_t root_seed,
                                          const MazeConfig& config);

// Trainer hook evaluating teacher and student each iteration.
Evaluator make_maze_evaluator(std::vector<MazeLayout> layouts, MazeConfig config);

// Deterministic (mean-action) pointgap evaluation: every environment runs
// one episode from reset.
EvalNumbers evaluate_pointgap(const PolicyBundle& bundle, int num_envs,
                              std::uint64_t seed, const PointGapConfig& config);
Evaluator make_pointgap_evaluator(int num_envs, std::uint64_t seed,
                                  PointGapConfig config);

// --- Figure-style reports -------------------------------------------------

struct OccupancyGrid {
    int grid_size = 0;
    std::vector<long long> visits;  // row-major counts
    long long total = 0;

    explicit OccupancyGrid(int grid_size = 0);
    void add(int row, int col);
    long long at(int row, int col) const;
};

OccupancyGrid occupancy_from_traces(const std::vector<EpisodeTrace>& traces,
                                    int grid_size);

// share of distinct visited cells sitting on Path or Lava, over all traces
double interior_cell_share(const std::vector<EpisodeTrace>& traces,
                           const std::vector<MazeLayout>& layouts);

// share of successful-episode steps inside the central region
double region_step_share_successful(const std::vector<EpisodeTrace>& traces,
                                    const std::vector<MazeLayout>& layouts);

// --- renders ----------------------------------------------------------------

// layout glyphs with '*' over visited cells (start/goal glyphs win)
std::string render_trajectory_text(const MazeLayout& layout,
                                   const EpisodeTrace& trace);

// layout glyphs with visit counts overlaid: '1'..'9', '+' past nine
std::string render_occupancy_text(const MazeLayout& layout,
                                  const OccupancyGrid& occupancy);

// binary portable pixmap (P6), cells scaled to scale x scale pixels
std::string render_trajectory_ppm(const MazeLayout& layout,
                                  const EpisodeTrace& trace, int scale = 16);
std::string render_occupancy_ppm(const MazeLayout& layout,
                                 const OccupancyGrid& occupancy, int scale = 16);

}  // namespace alignrl
