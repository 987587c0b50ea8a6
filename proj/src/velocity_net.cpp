#include "msfm/velocity_net.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "msfm/rng.hpp"

namespace msfm {

void step_features(double s, int freq_pairs, std::span<double> out) {
    double freq = std::numbers::pi;
    for (int j = 0; j < freq_pairs; ++j) {
        out[static_cast<std::size_t>(2 * j)] = std::sin(freq * s);
        out[static_cast<std::size_t>(2 * j + 1)] = std::cos(freq * s);
        freq *= 2.0;
    }
}

VelocityModel::VelocityModel(NetConfig config, std::vector<Layer> layers, GradVector params)
    : config_(config), layers_(std::move(layers)), params_(std::move(params)) {}

VelocityModel VelocityModel::init(const NetConfig& config, std::uint64_t seed) {
    if (config.data_dim < 1 || config.obs_dim < 0 || config.hidden_layers < 1 ||
        config.hidden_width < 1 || config.freq_pairs < 1) {
        throw ConfigError("invalid velocity net configuration");
    }

    std::vector<Layer> layers;
    std::vector<int> widths;
    widths.push_back(config.input_dim());
    for (int l = 0; l < config.hidden_layers; ++l) widths.push_back(config.hidden_width);
    widths.push_back(config.data_dim);

    int offset = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        Layer layer;
        layer.in_dim = widths[l];
        layer.out_dim = widths[l + 1];
        layer.w_offset = offset;
        offset += layer.in_dim * layer.out_dim;
        layer.b_offset = offset;
        offset += layer.out_dim;
        layers.push_back(layer);
    }

    GradVector params(static_cast<std::size_t>(offset));
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
        const Layer& layer = layers[l];
        const double std_dev = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
        for (int i = 0; i < layer.in_dim * layer.out_dim; ++i) {
            params[static_cast<std::size_t>(layer.w_offset + i)] = std_dev * rng.normal();
        }
        // biases stay zero
    }
    // output layer stays zero so the initial velocity field is zero

    return VelocityModel(config, std::move(layers), std::move(params));
}

Array VelocityModel::build_input(const Array& x_rows, const Array* obs_rows,
                                 std::span<const double> t, std::span<const double> d) const {
    if (x_rows.rank() != 2 || x_rows.cols() != config_.data_dim) {
        throw ShapeError("velocity net: x shape " + x_rows.shape_str() + " does not match model");
    }
    const int rows = x_rows.rows();
    if (static_cast<int>(t.size()) != rows || static_cast<int>(d.size()) != rows) {
        throw ShapeError("velocity net: t/d length does not match row count");
    }
    if (config_.obs_dim > 0) {
        if (obs_rows == nullptr || obs_rows->rank() != 2 || obs_rows->rows() != rows ||
            obs_rows->cols() != config_.obs_dim) {
            throw ShapeError("velocity net: conditioning shape mismatch");
        }
    } else if (obs_rows != nullptr && obs_rows->size() != 0) {
        throw ShapeError("velocity net: model is unconditional but conditioning given");
    }
    for (int r = 0; r < rows; ++r) {
        if (!(t[r] >= 0.0 && t[r] <= 1.0)) {
            throw std::invalid_argument("velocity net: t outside [0,1]");
        }
        if (!(d[r] >= 0.0 && d[r] <= 1.0)) {
            throw std::invalid_argument("velocity net: d outside [0,1]");
        }
    }

    const int emb = config_.embed_dim();
    Array in = Array::zeros(rows, config_.input_dim());
    for (int r = 0; r < rows; ++r) {
        std::span<double> row = in.row(r);
        std::size_t pos = 0;
        for (double v : x_rows.row(r)) row[pos++] = v;
        if (config_.obs_dim > 0) {
            for (double v : obs_rows->row(r)) row[pos++] = v;
        }
        step_features(t[r], config_.freq_pairs, row.subspan(pos, emb));
        pos += emb;
        step_features(d[r], config_.freq_pairs, row.subspan(pos, emb));
    }
    return in;
}

namespace {

// Same accumulation order as matmul_into + add_row_vector so the plain path
// stays bit-identical to the taped path.
Array affine(const Array& h, const double* w, const double* b, int in_dim, int out_dim) {
    const int rows = h.rows();
    Array out = Array::zeros(rows, out_dim);
    const double* ph = h.data();
    double* po = out.data();
    for (int i = 0; i < rows; ++i) {
        double* orow = po + static_cast<std::size_t>(i) * out_dim;
        for (int p = 0; p < in_dim; ++p) {
            const double hv = ph[static_cast<std::size_t>(i) * in_dim + p];
            const double* wrow = w + static_cast<std::size_t>(p) * out_dim;
            for (int j = 0; j < out_dim; ++j) orow[j] += hv * wrow[j];
        }
        for (int j = 0; j < out_dim; ++j) orow[j] += b[j];
    }
    return out;
}

}  // namespace

Array VelocityModel::evaluate_batch(const Array& x_rows, const Array* obs_rows,
                                    std::span<const double> t, std::span<const double> d) const {
    Array h = build_input(x_rows, obs_rows, t, d);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        h = affine(h, params_.values.data() + layer.w_offset,
                   params_.values.data() + layer.b_offset, layer.in_dim, layer.out_dim);
        if (l + 1 < layers_.size()) h = tanh_map(h);
    }
    return h;
}

Array VelocityModel::evaluate(const Array& x, const Array* obs, double t, double d) const {
    if (x.rank() != 1 || x.size() != config_.data_dim) {
        throw ShapeError("velocity net: x shape " + x.shape_str() + " does not match model");
    }
    Array x_rows({1, config_.data_dim},
                 std::vector<double>(x.values().begin(), x.values().end()));
    Array obs_rows;
    const Array* obs_ptr = nullptr;
    if (config_.obs_dim > 0) {
        if (obs == nullptr) throw ShapeError("velocity net: conditioning required");
        obs_rows = Array({1, config_.obs_dim},
                         std::vector<double>(obs->values().begin(), obs->values().end()));
        obs_ptr = &obs_rows;
    }
    const double ts[1] = {t};
    const double ds[1] = {d};
    Array out = evaluate_batch(x_rows, obs_ptr, ts, ds);
    return Array({config_.data_dim},
                 std::vector<double>(out.values().begin(), out.values().end()));
}

NodeId VelocityModel::evaluate_on_tape(Tape& tape, const Array& x_rows, const Array* obs_rows,
                                       std::span<const double> t,
                                       std::span<const double> d) const {
    NodeId h = tape.input(build_input(x_rows, obs_rows, t, d));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const Layer& layer = layers_[l];
        NodeId w = tape.param(params_, layer.w_offset, {layer.in_dim, layer.out_dim});
        NodeId b = tape.param(params_, layer.b_offset, {layer.out_dim});
        h = tape.add_row_vector(tape.matmul(h, w), b);
        if (l + 1 < layers_.size()) h = tape.tanh(h);
    }
    return h;
}

}  // namespace msfm
