#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "json.hpp"
#include "msfm/array.hpp"
#include "msfm/rng.hpp"

namespace msfm {

/// Samples with optional per-sample conditioning and generator metadata.
struct Dataset {
    Array samples;     // N x D
    Array conditions;  // N x C, empty when unconditional
    nlohmann::json metadata;

    int count() const { return samples.rank() == 2 ? samples.rows() : 0; }
    int sample_dim() const { return samples.rank() == 2 ? samples.cols() : 0; }
    int condition_dim() const { return conditions.rank() == 2 ? conditions.cols() : 0; }
};

/// Seeded 2-D toy generators: "two-moons", "gauss-mixture-8", "swiss-roll".
Dataset make_dataset(const std::string& name, int n, std::uint64_t seed);

/// Planar goal-reaching with a blocking obstacle disk. Positions live in
/// [-1,1]^2; a step that would enter the disk is pushed back to its boundary.
struct ReachEnv {
    double obstacle_radius = 0.18;
    double max_step = 0.1;        // per-step speed limit on actions
    double success_radius = 0.05;
    int horizon = 50;

    struct State {
        double agent[2];
        double goal[2];
        double obstacle[2];
        int steps = 0;
        bool reached = false;
    };

    /// Start and goal at least 0.8 apart; the obstacle sits near the segment
    /// midpoint so every episode needs a detour, giving the demonstrations a
    /// genuinely bimodal structure.
    State reset(std::uint64_t episode_seed) const;

    /// Apply one velocity command (clipped to max_step), block on the obstacle
    /// disk, clamp to the arena, then check the goal.
    void step(State& state, const double action[2]) const;

    bool done(const State& state) const { return state.reached || state.steps >= horizon; }

    /// Observation (agent, goal, obstacle center), 6 values in [-1,1].
    Array observation(const State& state) const;
};

/// Proportional controller that detours around the obstacle on a per-episode
/// side (left or right), giving two action modes of roughly equal frequency.
struct ExpertPolicy {
    double gain = 3.0;
    double clearance = 0.06;  // straight-line path must clear the disk by this
    double detour_margin = 0.14;

    void action(const ReachEnv& env, const ReachEnv::State& state, int side,
                double out[2]) const;
};

inline constexpr int kChunkLength = 8;    // actions predicted jointly
inline constexpr int kExecuteSteps = 4;   // prefix executed before re-planning
inline constexpr double kActionScale = 0.1;  // physical command = scale * normalized
inline constexpr int kReachObsDim = 6;
inline constexpr int kReachChunkDim = kChunkLength * 2;

/// Roll the expert and keep only successful episodes. Each timestep yields one
/// (observation, action chunk) pair; chunks hold the next kChunkLength expert
/// velocity commands normalized by kActionScale (zero-padded past episode end).
Dataset collect_demos(const ReachEnv& env, const ExpertPolicy& expert, int episodes,
                      std::uint64_t seed);

/// A policy maps a raw observation to a normalized action chunk; noise draws
/// come from the provided per-episode stream so rollouts are pure functions of
/// (weights, seeds).
using ChunkPolicy = std::function<Array(const Array& obs, Rng& noise_rng)>;
using PolicyFactory = std::function<ChunkPolicy(std::uint64_t episode_seed)>;

/// Success rate over seeded episodes; executes kExecuteSteps of each predicted
/// chunk before re-planning.
double rollout_policy(const ReachEnv& env, const PolicyFactory& make_policy, int episodes,
                      std::uint64_t seed);

/// Expert wrapped as a chunk policy (detour side drawn per episode).
PolicyFactory expert_policy_factory(const ReachEnv& env, const ExpertPolicy& expert);

}  // namespace msfm
