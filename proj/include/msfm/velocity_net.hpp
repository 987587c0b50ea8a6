#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msfm/array.hpp"
#include "msfm/tape.hpp"

namespace msfm {

/// Architecture of the step- and time-conditioned velocity network.
struct NetConfig {
    int data_dim = 2;      // flattened sample / action-chunk dimension
    int obs_dim = 0;       // conditioning dimension; 0 for unconditional tasks
    int hidden_layers = 3;
    int hidden_width = 64;
    int freq_pairs = 4;    // sin/cos pairs per conditioning scalar

    int embed_dim() const { return 2 * freq_pairs; }
    int input_dim() const { return data_dim + obs_dim + 2 * embed_dim(); }
    bool operator==(const NetConfig&) const = default;
};

/// Sinusoidal features of a scalar in [0,1]: [sin(pi 2^j s), cos(pi 2^j s)]
/// for j = 0..freq_pairs-1. The base frequency pi makes the feature map
/// injective on [0,1], so s = 0 and s = 1 stay distinct; s = 0 yields the
/// zero-frequency features (0, 1, ...).
void step_features(double s, int freq_pairs, std::span<double> out);

/// Multilayer tanh network predicting the (average) velocity at (x_t, o, t, d).
/// Hidden layers use fan-in scaled Gaussian init; the output layer starts at
/// zero so the initial velocity field is identically zero.
class VelocityModel {
public:
    static VelocityModel init(const NetConfig& config, std::uint64_t seed);

    const NetConfig& config() const { return config_; }
    int param_count() const { return static_cast<int>(params_.size()); }
    GradVector& params() { return params_; }
    const GradVector& params() const { return params_; }

    /// Single-point evaluation, no gradient recording.
    Array evaluate(const Array& x, const Array* obs, double t, double d) const;

    /// Row-batched evaluation, no gradient recording. x_rows is (rows, data_dim),
    /// obs_rows is (rows, obs_dim) or null, t and d hold one scalar per row.
    Array evaluate_batch(const Array& x_rows, const Array* obs_rows,
                         std::span<const double> t, std::span<const double> d) const;

    /// Row-batched evaluation recorded on a tape for differentiation.
    NodeId evaluate_on_tape(Tape& tape, const Array& x_rows, const Array* obs_rows,
                            std::span<const double> t, std::span<const double> d) const;

    /// Conditioning features for one row: [x | obs | feat(t) | feat(d)].
    Array build_input(const Array& x_rows, const Array* obs_rows, std::span<const double> t,
                      std::span<const double> d) const;

    struct Layer {
        int w_offset, b_offset, in_dim, out_dim;
    };
    const std::vector<Layer>& layers() const { return layers_; }

private:
    VelocityModel(NetConfig config, std::vector<Layer> layers, GradVector params);

    NetConfig config_;
    std::vector<Layer> layers_;
    GradVector params_;
};

}  // namespace msfm
