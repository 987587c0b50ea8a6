#include "msfm/flow.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace msfm {

InterpolationPoint interpolate(const Array& x0, const Array& x1, double t) {
    if (!x0.same_shape(x1)) {
        throw ShapeError("interpolate: shape mismatch " + x0.shape_str() + " vs " +
                         x1.shape_str());
    }
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("interpolate: t outside [0,1]");
    InterpolationPoint p;
    p.x0 = x0;
    p.x1 = x1;
    p.t = t;
    p.x_t = add(scale(x0, 1.0 - t), scale(x1, t));
    p.v_true = sub(x1, x0);
    return p;
}

Codebook::Codebook(int entries, int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
    if (entries < 1 || dim < 1) throw ConfigError("codebook needs entries >= 1 and dim >= 1");
    Rng rng(seed);
    table_.reserve(static_cast<std::size_t>(entries));
    for (int i = 0; i < entries; ++i) table_.push_back(Array::from(rng.normal_vec(dim)));
}

Array draw_noise(const Codebook* codebook, int dim, Rng& rng) {
    if (codebook != nullptr) {
        if (codebook->dim() != dim) throw ShapeError("draw_noise: codebook dim mismatch");
        return codebook->entry(rng.uniform_int(codebook->size()));
    }
    return Array::from(rng.normal_vec(dim));
}

BatchedField frozen_field(const VelocityModel& model) {
    // Copy so later optimizer updates cannot leak into targets or samplers.
    VelocityModel snapshot = model;
    return [snapshot = std::move(snapshot)](const Array& x_rows, const Array* obs_rows,
                                            std::span<const double> t,
                                            std::span<const double> d) {
        return snapshot.evaluate_batch(x_rows, obs_rows, t, d);
    };
}

namespace {

struct RowBatch {
    Array x;            // rows x dim
    Array obs;          // rows x obs_dim, empty when unconditional
    std::vector<double> t;
    std::vector<double> d;
    bool conditioned = false;
};

RowBatch stack_consistency(std::span<const ConsistencySample> batch) {
    RowBatch rb;
    const int rows = static_cast<int>(batch.size());
    const int dim = static_cast<int>(batch[0].x_t.size());
    rb.conditioned = batch[0].obs.size() > 0;
    rb.x = Array::zeros(rows, dim);
    if (rb.conditioned) rb.obs = Array::zeros(rows, static_cast<int>(batch[0].obs.size()));
    rb.t.resize(static_cast<std::size_t>(rows));
    rb.d.resize(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        const ConsistencySample& s = batch[static_cast<std::size_t>(r)];
        if (s.x_t.size() != dim) throw ShapeError("consistency batch: ragged sample dims");
        std::copy(s.x_t.values().begin(), s.x_t.values().end(), rb.x.row(r).begin());
        if (rb.conditioned) {
            std::copy(s.obs.values().begin(), s.obs.values().end(), rb.obs.row(r).begin());
        }
        rb.t[static_cast<std::size_t>(r)] = s.t;
        rb.d[static_cast<std::size_t>(r)] = s.d;
    }
    return rb;
}

void validate_rollout(const ConsistencySample& s) {
    if (s.n < 2) throw std::invalid_argument("rollout targets: need n >= 2");
    if (s.d <= 0.0) throw std::invalid_argument("rollout targets: need d > 0");
    if (s.t < 0.0 || s.t + s.n * s.d > 1.0 + 1e-12) {
        throw std::invalid_argument("rollout targets: t + n d exceeds 1");
    }
}

// All entries share the same step count n: roll the whole group as one matrix.
RolloutTargets rollout_uniform(const BatchedField& field,
                               std::span<const ConsistencySample> batch) {
    const int rows = static_cast<int>(batch.size());
    const int dim = static_cast<int>(batch[0].x_t.size());
    const int n = batch[0].n;

    RowBatch rb = stack_consistency(batch);
    const Array* obs_ptr = rb.conditioned ? &rb.obs : nullptr;

    RolloutTargets out;
    out.step_velocities.assign(static_cast<std::size_t>(rows), {});
    out.averaged.assign(static_cast<std::size_t>(rows), {});
    for (int r = 0; r < rows; ++r) {
        out.step_velocities[static_cast<std::size_t>(r)].reserve(static_cast<std::size_t>(n));
        out.averaged[static_cast<std::size_t>(r)].reserve(static_cast<std::size_t>(n - 1));
    }

    Array prefix = Array::zeros(rows, dim);  // running sum of step velocities
    std::vector<double> t_now(rb.t);
    for (int i = 0; i < n; ++i) {
        for (int r = 0; r < rows; ++r) {
            // exact on the dyadic grid: t + i*d
            t_now[static_cast<std::size_t>(r)] =
                batch[static_cast<std::size_t>(r)].t + i * batch[static_cast<std::size_t>(r)].d;
        }
        Array v = field(rb.x, obs_ptr, t_now, rb.d);
        if (v.rank() != 2 || v.rows() != rows || v.cols() != dim) {
            throw ShapeError("rollout targets: field output shape " + v.shape_str());
        }
        for (int r = 0; r < rows; ++r) {
            std::span<const double> vr = v.row(r);
            out.step_velocities[static_cast<std::size_t>(r)].push_back(
                Array::from({vr.begin(), vr.end()}));
        }
        // prefix sums, then the k-step averaged target for k = i+1 >= 2
        for (std::int64_t j = 0; j < prefix.size(); ++j) prefix[j] += v[j];
        if (i >= 1) {
            const double k = static_cast<double>(i + 1);
            for (int r = 0; r < rows; ++r) {
                std::span<const double> pr = prefix.row(r);
                std::vector<double> avg(pr.size());
                for (std::size_t j = 0; j < pr.size(); ++j) avg[j] = pr[j] / k;
                out.averaged[static_cast<std::size_t>(r)].push_back(Array::from(std::move(avg)));
            }
        }
        // advance the trajectory: x <- x + v * d (per-row step size)
        if (i + 1 < n) {
            for (int r = 0; r < rows; ++r) {
                const double dr = rb.d[static_cast<std::size_t>(r)];
                std::span<double> xr = rb.x.row(r);
                std::span<const double> vr = v.row(r);
                for (std::size_t j = 0; j < xr.size(); ++j) xr[j] += vr[j] * dr;
            }
        }
    }
    return out;
}

}  // namespace

RolloutTargets rollout_targets(const BatchedField& field,
                               std::span<const ConsistencySample> batch) {
    if (batch.empty()) return {};
    for (const ConsistencySample& s : batch) validate_rollout(s);

    bool uniform_n = true;
    for (const ConsistencySample& s : batch) uniform_n &= (s.n == batch[0].n);
    if (uniform_n) return rollout_uniform(field, batch);

    // Mixed step counts: roll entries one at a time.
    RolloutTargets out;
    out.step_velocities.reserve(batch.size());
    out.averaged.reserve(batch.size());
    for (const ConsistencySample& s : batch) {
        RolloutTargets one = rollout_uniform(field, {&s, 1});
        out.step_velocities.push_back(std::move(one.step_velocities[0]));
        out.averaged.push_back(std::move(one.averaged[0]));
    }
    return out;
}

RolloutTargets rollout_targets(const BatchedField& field, const Array& x_t, const Array* obs,
                               double t, double d, int n) {
    ConsistencySample s;
    s.x_t = x_t;
    if (obs != nullptr) s.obs = *obs;
    s.t = t;
    s.d = d;
    s.n = n;
    return rollout_targets(field, {&s, 1});
}

LossNode flow_matching_loss(Tape& tape, const VelocityModel& model,
                            std::span<const FlowSample> batch) {
    if (batch.empty()) return {};

    const int rows = static_cast<int>(batch.size());
    const int dim = model.config().data_dim;
    Array x_rows = Array::zeros(rows, dim);
    Array target = Array::zeros(rows, dim);
    Array obs_rows;
    const bool conditioned = model.config().obs_dim > 0;
    if (conditioned) obs_rows = Array::zeros(rows, model.config().obs_dim);
    std::vector<double> t(static_cast<std::size_t>(rows));
    std::vector<double> d(static_cast<std::size_t>(rows), 0.0);

    for (int r = 0; r < rows; ++r) {
        const FlowSample& s = batch[static_cast<std::size_t>(r)];
        InterpolationPoint p = interpolate(s.x0, s.x1, s.t);
        std::copy(p.x_t.values().begin(), p.x_t.values().end(), x_rows.row(r).begin());
        std::copy(p.v_true.values().begin(), p.v_true.values().end(), target.row(r).begin());
        if (conditioned) {
            std::copy(s.obs.values().begin(), s.obs.values().end(), obs_rows.row(r).begin());
        }
        t[static_cast<std::size_t>(r)] = s.t;
    }

    NodeId pred = model.evaluate_on_tape(tape, x_rows, conditioned ? &obs_rows : nullptr, t, d);
    NodeId resid = tape.sub(pred, tape.input(std::move(target)));
    NodeId loss = tape.scale(tape.sum(tape.square(resid)), 1.0 / rows);
    return {loss, tape.value(loss)[0]};
}

LossNode consistency_loss(Tape& tape, const VelocityModel& model,
                          std::span<const ConsistencySample> batch,
                          const RolloutTargets& targets) {
    if (batch.empty()) return {};
    if (targets.averaged.size() != batch.size()) {
        throw ShapeError("consistency loss: targets do not match batch");
    }

    int rows = 0;
    for (const ConsistencySample& s : batch) rows += s.n - 1;
    const int dim = model.config().data_dim;
    const bool conditioned = model.config().obs_dim > 0;

    Array x_rows = Array::zeros(rows, dim);
    Array target = Array::zeros(rows, dim);
    Array obs_rows;
    if (conditioned) obs_rows = Array::zeros(rows, model.config().obs_dim);
    std::vector<double> t(static_cast<std::size_t>(rows));
    std::vector<double> d(static_cast<std::size_t>(rows));

    int r = 0;
    for (std::size_t e = 0; e < batch.size(); ++e) {
        const ConsistencySample& s = batch[e];
        if (static_cast<int>(targets.averaged[e].size()) != s.n - 1) {
            throw ShapeError("consistency loss: wrong target count for entry");
        }
        for (int k = 2; k <= s.n; ++k, ++r) {
            std::copy(s.x_t.values().begin(), s.x_t.values().end(), x_rows.row(r).begin());
            const Array& avg = targets.averaged[e][static_cast<std::size_t>(k - 2)];
            std::copy(avg.values().begin(), avg.values().end(), target.row(r).begin());
            if (conditioned) {
                std::copy(s.obs.values().begin(), s.obs.values().end(), obs_rows.row(r).begin());
            }
            t[static_cast<std::size_t>(r)] = s.t;
            d[static_cast<std::size_t>(r)] = k * s.d;
        }
    }

    NodeId pred = model.evaluate_on_tape(tape, x_rows, conditioned ? &obs_rows : nullptr, t, d);
    NodeId resid = tape.sub(pred, tape.input(std::move(target)));
    NodeId loss = tape.scale(tape.sum(tape.square(resid)), 1.0 / rows);
    return {loss, tape.value(loss)[0]};
}

Array euler_sample_batch(const BatchedField& field, const Array& x0_rows, const Array* obs_rows,
                         int steps) {
    if (steps < 1) throw std::invalid_argument("euler sample: steps must be >= 1");
    if (x0_rows.rank() != 2) throw ShapeError("euler sample: x0 must be (rows, dim)");
    const int rows = x0_rows.rows();
    const double d = 1.0 / static_cast<double>(steps);
    std::vector<double> t_vec(static_cast<std::size_t>(rows));
    std::vector<double> d_vec(static_cast<std::size_t>(rows), d);

    Array x = x0_rows;
    for (int i = 0; i < steps; ++i) {
        const double t = i * d;
        std::fill(t_vec.begin(), t_vec.end(), t);
        Array v = field(x, obs_rows, t_vec, d_vec);
        if (!v.same_shape(x)) {
            throw ShapeError("euler sample: field output shape " + v.shape_str());
        }
        for (std::int64_t j = 0; j < x.size(); ++j) x[j] += v[j] * d;
    }
    return x;
}

Array euler_sample(const BatchedField& field, const Array& x0, const Array* obs, int steps) {
    if (x0.rank() != 1) throw ShapeError("euler sample: x0 must be rank 1");
    Array x_rows({1, static_cast<int>(x0.size())},
                 std::vector<double>(x0.values().begin(), x0.values().end()));
    Array obs_rows;
    const Array* obs_ptr = nullptr;
    if (obs != nullptr && obs->size() > 0) {
        obs_rows = Array({1, static_cast<int>(obs->size())},
                         std::vector<double>(obs->values().begin(), obs->values().end()));
        obs_ptr = &obs_rows;
    }
    Array out = euler_sample_batch(field, x_rows, obs_ptr, steps);
    return Array::from(std::vector<double>(out.values().begin(), out.values().end()));
}

}  // namespace msfm
