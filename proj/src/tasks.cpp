#include "msfm/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "msfm/errors.hpp"

namespace msfm {

namespace {

constexpr double kPi = std::numbers::pi;

double clamp_sym(double v, double bound) { return std::clamp(v, -bound, bound); }

Dataset two_moons(int n, std::uint64_t seed) {
    // Two interleaved half circles, noise clamped at 4 sigma, centered and
    // scaled by 0.7 so every sample stays inside radius 1.5.
    Dataset ds;
    ds.samples = Array::zeros(n, 2);
    Rng rng(seed);
    const double noise_sd = 0.05;
    for (int i = 0; i < n; ++i) {
        const bool upper = rng.uniform_int(2) == 0;
        const double theta = rng.uniform(0.0, kPi);
        double x = upper ? std::cos(theta) : 1.0 - std::cos(theta);
        double y = upper ? std::sin(theta) : 0.5 - std::sin(theta);
        x += clamp_sym(noise_sd * rng.normal(), 4.0 * noise_sd);
        y += clamp_sym(noise_sd * rng.normal(), 4.0 * noise_sd);
        ds.samples.at(i, 0) = 0.7 * (x - 0.5);
        ds.samples.at(i, 1) = 0.7 * (y - 0.25);
    }
    ds.metadata = {{"name", "two-moons"},
                   {"seed", seed},
                   {"generator", {{"noise_sd", noise_sd}, {"scale", 0.7}}}};
    return ds;
}

Dataset gauss_mixture_8(int n, std::uint64_t seed) {
    // Eight equal-weight Gaussians on a circle of radius 0.8, sigma 0.05.
    Dataset ds;
    ds.samples = Array::zeros(n, 2);
    Rng rng(seed);
    const double ring = 0.8, sd = 0.05;
    for (int i = 0; i < n; ++i) {
        const int mode = rng.uniform_int(8);
        const double angle = 2.0 * kPi * mode / 8.0;
        ds.samples.at(i, 0) = ring * std::cos(angle) + sd * rng.normal();
        ds.samples.at(i, 1) = ring * std::sin(angle) + sd * rng.normal();
    }
    ds.metadata = {{"name", "gauss-mixture-8"},
                   {"seed", seed},
                   {"generator", {{"ring_radius", ring}, {"noise_sd", sd}, {"modes", 8}}}};
    return ds;
}

Dataset swiss_roll(int n, std::uint64_t seed) {
    // Planar spiral r(theta) = theta / (4.5 pi), theta in [1.5 pi, 4.5 pi].
    Dataset ds;
    ds.samples = Array::zeros(n, 2);
    Rng rng(seed);
    const double sd = 0.02;
    for (int i = 0; i < n; ++i) {
        const double theta = rng.uniform(1.5 * kPi, 4.5 * kPi);
        const double r = 0.85 * theta / (4.5 * kPi);
        ds.samples.at(i, 0) = r * std::cos(theta) + clamp_sym(sd * rng.normal(), 4.0 * sd);
        ds.samples.at(i, 1) = r * std::sin(theta) + clamp_sym(sd * rng.normal(), 4.0 * sd);
    }
    ds.metadata = {{"name", "swiss-roll"},
                   {"seed", seed},
                   {"generator", {{"noise_sd", sd}, {"scale", 0.85}}}};
    return ds;
}

double dist2d(const double a[2], const double b[2]) {
    return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// Distance from point p to the segment a-b.
double point_segment_distance(const double p[2], const double a[2], const double b[2]) {
    const double abx = b[0] - a[0], aby = b[1] - a[1];
    const double apx = p[0] - a[0], apy = p[1] - a[1];
    const double ab2 = abx * abx + aby * aby;
    double u = ab2 > 0.0 ? (apx * abx + apy * aby) / ab2 : 0.0;
    u = std::clamp(u, 0.0, 1.0);
    const double cx = a[0] + u * abx - p[0];
    const double cy = a[1] + u * aby - p[1];
    return std::hypot(cx, cy);
}

}  // namespace

Dataset make_dataset(const std::string& name, int n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("make_dataset: need n >= 1");
    if (name == "two-moons") return two_moons(n, seed);
    if (name == "gauss-mixture-8") return gauss_mixture_8(n, seed);
    if (name == "swiss-roll") return swiss_roll(n, seed);
    throw ConfigError("unknown dataset '" + name + "'");
}

ReachEnv::State ReachEnv::reset(std::uint64_t episode_seed) const {
    Rng rng(splitmix64(episode_seed));
    State s{};
    // resample until start and goal are well separated; the inner box keeps
    // detour arcs clear of the arena walls
    for (int attempt = 0; attempt < 1000; ++attempt) {
        for (double& v : s.agent) v = rng.uniform(-0.7, 0.7);
        for (double& v : s.goal) v = rng.uniform(-0.7, 0.7);
        if (dist2d(s.agent, s.goal) >= 0.8) break;
    }
    // obstacle near the segment midpoint with perpendicular jitter, so the
    // straight path is always blocked but start and goal stay outside
    const double mx = 0.5 * (s.agent[0] + s.goal[0]);
    const double my = 0.5 * (s.agent[1] + s.goal[1]);
    const double dx = s.goal[0] - s.agent[0], dy = s.goal[1] - s.agent[1];
    const double len = std::hypot(dx, dy);
    const double px = -dy / len, py = dx / len;
    const double jitter = rng.uniform(-0.05, 0.05);
    s.obstacle[0] = std::clamp(mx + jitter * px, -1.0, 1.0);
    s.obstacle[1] = std::clamp(my + jitter * py, -1.0, 1.0);
    s.steps = 0;
    s.reached = dist2d(s.agent, s.goal) <= success_radius;
    return s;
}

void ReachEnv::step(State& state, const double action[2]) const {
    if (done(state)) return;
    double ax = action[0], ay = action[1];
    const double speed = std::hypot(ax, ay);
    if (speed > max_step) {
        ax *= max_step / speed;
        ay *= max_step / speed;
    }
    double nx = state.agent[0] + ax;
    double ny = state.agent[1] + ay;
    // blocking disk: push back to the boundary along the radial direction
    const double ox = nx - state.obstacle[0], oy = ny - state.obstacle[1];
    const double od = std::hypot(ox, oy);
    if (od < obstacle_radius) {
        if (od > 1e-12) {
            nx = state.obstacle[0] + ox / od * obstacle_radius;
            ny = state.obstacle[1] + oy / od * obstacle_radius;
        } else {
            nx = state.agent[0];
            ny = state.agent[1];
        }
    }
    state.agent[0] = std::clamp(nx, -1.0, 1.0);
    state.agent[1] = std::clamp(ny, -1.0, 1.0);
    state.steps += 1;
    if (dist2d(state.agent, state.goal) <= success_radius) state.reached = true;
}

Array ReachEnv::observation(const State& state) const {
    return Array::from({state.agent[0], state.agent[1], state.goal[0], state.goal[1],
                        state.obstacle[0], state.obstacle[1]});
}

void ExpertPolicy::action(const ReachEnv& env, const ReachEnv::State& state, int side,
                          double out[2]) const {
    double target[2] = {state.goal[0], state.goal[1]};
    const double block = point_segment_distance(state.obstacle, state.agent, state.goal);
    if (block < env.obstacle_radius + clearance) {
        // steer to the tangent point of the inflated disk on the chosen side
        const double rho = env.obstacle_radius + detour_margin;
        const double wx = state.agent[0] - state.obstacle[0];
        const double wy = state.agent[1] - state.obstacle[1];
        const double dist = std::hypot(wx, wy);
        if (dist > rho) {
            const double theta = side * std::acos(std::clamp(rho / dist, -1.0, 1.0));
            const double cs = std::cos(theta), sn = std::sin(theta);
            target[0] = state.obstacle[0] + rho / dist * (wx * cs - wy * sn);
            target[1] = state.obstacle[1] + rho / dist * (wx * sn + wy * cs);
        } else if (dist > 1e-12) {
            // inside the inflated disk: head outward while circling
            const double ox = wx / dist, oy = wy / dist;
            target[0] = state.agent[0] + ox - side * oy;
            target[1] = state.agent[1] + oy + side * ox;
        }
    }
    out[0] = gain * (target[0] - state.agent[0]);
    out[1] = gain * (target[1] - state.agent[1]);
    const double speed = std::hypot(out[0], out[1]);
    if (speed > env.max_step) {
        out[0] *= env.max_step / speed;
        out[1] *= env.max_step / speed;
    }
}

Dataset collect_demos(const ReachEnv& env, const ExpertPolicy& expert, int episodes,
                      std::uint64_t seed) {
    if (episodes < 1) throw ConfigError("collect_demos: need episodes >= 1");

    std::vector<double> obs_rows;
    std::vector<double> chunk_rows;
    int pairs = 0;
    int kept_episodes = 0, left_detours = 0;

    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t ep_seed = seed * 0x100000001b3ULL + static_cast<std::uint64_t>(ep);
        Rng side_rng = Rng::stream(ep_seed, 1);
        const int side = side_rng.uniform_int(2) == 0 ? 1 : -1;

        ReachEnv::State state = env.reset(ep_seed);
        std::vector<Array> observations;
        std::vector<double> actions;  // flattened pairs
        while (!env.done(state)) {
            observations.push_back(env.observation(state));
            double a[2];
            expert.action(env, state, side, a);
            actions.push_back(a[0]);
            actions.push_back(a[1]);
            env.step(state, a);
        }
        if (!state.reached) continue;  // keep only successful episodes
        kept_episodes += 1;
        if (side > 0) left_detours += 1;

        const int steps = static_cast<int>(observations.size());
        for (int t = 0; t < steps; ++t) {
            for (double v : observations[static_cast<std::size_t>(t)].values()) {
                obs_rows.push_back(v);
            }
            for (int j = 0; j < kChunkLength; ++j) {
                const int idx = t + j;
                // the expert holds still at the goal, so padding with zeros
                // matches its behavior past episode end
                const double ax = idx < steps ? actions[static_cast<std::size_t>(2 * idx)] : 0.0;
                const double ay =
                    idx < steps ? actions[static_cast<std::size_t>(2 * idx + 1)] : 0.0;
                chunk_rows.push_back(ax / kActionScale);
                chunk_rows.push_back(ay / kActionScale);
            }
            pairs += 1;
        }
    }

    if (pairs == 0) throw NumericError("collect_demos: no successful episodes");

    Dataset ds;
    ds.samples = Array({pairs, kReachChunkDim}, std::move(chunk_rows));
    ds.conditions = Array({pairs, kReachObsDim}, std::move(obs_rows));
    ds.metadata = {{"name", "reach"},
                   {"seed", seed},
                   {"generator",
                    {{"episodes", episodes},
                     {"kept_episodes", kept_episodes},
                     {"left_detours", left_detours},
                     {"chunk_length", kChunkLength},
                     {"action_scale", kActionScale},
                     {"obstacle_radius", env.obstacle_radius}}}};
    return ds;
}

double rollout_policy(const ReachEnv& env, const PolicyFactory& make_policy, int episodes,
                      std::uint64_t seed) {
    if (episodes < 1) throw ConfigError("rollout_policy: need episodes >= 1");
    int successes = 0;
    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t ep_seed = seed * 0x100000001b3ULL + static_cast<std::uint64_t>(ep);
        ChunkPolicy policy = make_policy(ep_seed);
        Rng noise_rng = Rng::stream(ep_seed, 2);
        ReachEnv::State state = env.reset(ep_seed);
        while (!env.done(state)) {
            Array chunk = policy(env.observation(state), noise_rng);
            if (chunk.size() != kReachChunkDim) {
                throw ShapeError("rollout_policy: chunk size " + chunk.shape_str());
            }
            for (int j = 0; j < kExecuteSteps && !env.done(state); ++j) {
                const double a[2] = {chunk[2 * j] * kActionScale,
                                     chunk[2 * j + 1] * kActionScale};
                env.step(state, a);
            }
        }
        if (state.reached) successes += 1;
    }
    return static_cast<double>(successes) / episodes;
}

PolicyFactory expert_policy_factory(const ReachEnv& env, const ExpertPolicy& expert) {
    return [env, expert](std::uint64_t episode_seed) -> ChunkPolicy {
        Rng side_rng = Rng::stream(episode_seed, 1);
        const int side = side_rng.uniform_int(2) == 0 ? 1 : -1;
        return [env, expert, side](const Array& obs, Rng&) -> Array {
            // simulate the expert forward from the observed state
            ReachEnv::State state{};
            state.agent[0] = obs[0];
            state.agent[1] = obs[1];
            state.goal[0] = obs[2];
            state.goal[1] = obs[3];
            state.obstacle[0] = obs[4];
            state.obstacle[1] = obs[5];
            Array chunk({kReachChunkDim});
            for (int j = 0; j < kChunkLength; ++j) {
                double a[2];
                expert.action(env, state, side, a);
                chunk[2 * j] = a[0] / kActionScale;
                chunk[2 * j + 1] = a[1] / kActionScale;
                env.step(state, a);
            }
            return chunk;
        };
    };
}

}  // namespace msfm
