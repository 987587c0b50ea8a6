#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msfm/array.hpp"
#include "msfm/rng.hpp"
#include "msfm/tape.hpp"
#include "msfm/velocity_net.hpp"

namespace msfm {

/// A point on the straight noise-to-data path x_t = (1-t) x0 + t x1 with the
/// path velocity v = x1 - x0, which is independent of t.
struct InterpolationPoint {
    Array x0;
    Array x1;
    double t = 0.0;
    Array x_t;
    Array v_true;
};

InterpolationPoint interpolate(const Array& x0, const Array& x1, double t);

/// Fixed table of standard-normal noise vectors drawn once from a seed.
/// Immutable after construction; draws return elements of the table.
class Codebook {
public:
    Codebook(int entries, int dim, std::uint64_t seed);

    int size() const { return static_cast<int>(table_.size()); }
    int dim() const { return dim_; }
    const Array& entry(int i) const { return table_[static_cast<std::size_t>(i)]; }
    std::uint64_t seed() const { return seed_; }

private:
    std::vector<Array> table_;
    int dim_;
    std::uint64_t seed_;
};

/// Uniform draw from the codebook when one is given, fresh standard normal
/// otherwise.
Array draw_noise(const Codebook* codebook, int dim, Rng& rng);

/// One flow-matching sample: regression target is x1 - x0, conditioning d = 0.
struct FlowSample {
    Array x0;
    Array x1;
    Array obs;  // empty for unconditional tasks
    double t = 0.0;
};

/// One consistency sample: a rollout of n small steps of size d starts at
/// (x_t, t). The batch builder guarantees t + n d <= 1.
struct ConsistencySample {
    Array x_t;
    Array obs;  // empty for unconditional tasks
    double t = 0.0;
    double d = 0.0;
    int n = 2;
};

/// Row-batched velocity field: rows of x (and optional conditioning) with one
/// (t, d) pair per row. Lets tests drive the flow machinery with analytic
/// fields and keeps rollouts independent of the network type.
using BatchedField = std::function<Array(const Array& x_rows, const Array* obs_rows,
                                         std::span<const double> t, std::span<const double> d)>;

/// Field backed by a snapshot of the model's current parameters. Used for
/// rollout targets (gradients stopped) and for sampling.
BatchedField frozen_field(const VelocityModel& model);

/// Small-step velocities and their prefix means along one trajectory.
/// step_velocities[e][i] is the velocity of small step i = 0..n-1;
/// averaged[e][k-2] is the mean of the first k step velocities, k = 2..n.
/// Targets carry no gradient dependence on the model parameters.
struct RolloutTargets {
    std::vector<std::vector<Array>> step_velocities;
    std::vector<std::vector<Array>> averaged;
};

RolloutTargets rollout_targets(const BatchedField& field,
                               std::span<const ConsistencySample> batch);
RolloutTargets rollout_targets(const BatchedField& field, const Array& x_t, const Array* obs,
                               double t, double d, int n);

struct LossNode {
    NodeId node = -1;   // -1 when the partition is empty
    double value = 0.0;
};

/// Mean over the batch of || v(x_t, o, t, 0) - (x1 - x0) ||^2.
/// An empty partition yields loss 0 with an empty gradient.
LossNode flow_matching_loss(Tape& tape, const VelocityModel& model,
                            std::span<const FlowSample> batch);

/// Mean over entries and over k = 2..n of
/// || v(x_t, o, t, k d) - averaged_target_k ||^2. Targets are constants.
LossNode consistency_loss(Tape& tape, const VelocityModel& model,
                          std::span<const ConsistencySample> batch,
                          const RolloutTargets& targets);

/// Euler integration on the uniform grid d = 1/steps:
/// x <- x + v(x, o, t, d) d for t = 0, d, ..., 1-d.
Array euler_sample(const BatchedField& field, const Array& x0, const Array* obs, int steps);
Array euler_sample_batch(const BatchedField& field, const Array& x0_rows, const Array* obs_rows,
                         int steps);

}  // namespace msfm
