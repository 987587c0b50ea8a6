#include "msfm/array.hpp"

#include <cmath>
#include <cstdint>
#include <sstream>

namespace msfm {

namespace {

std::int64_t shape_product(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= d;
    }
    return n;
}

}  // namespace

Array::Array(std::vector<int> shape) : shape_(std::move(shape)) {
    if (shape_.size() > 3) throw ShapeError("rank > 3 not supported");
    data_.assign(static_cast<std::size_t>(shape_product(shape_)), 0.0);
}

Array::Array(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_.size() > 3) throw ShapeError("rank > 3 not supported");
    if (shape_product(shape_) != static_cast<std::int64_t>(data_.size())) {
        throw ShapeError("data length does not match shape " + shape_str());
    }
}

Array Array::scalar(double value) { return Array({1}, {value}); }

Array Array::from(std::vector<double> values) {
    const int n = static_cast<int>(values.size());
    return Array({n}, std::move(values));
}

Array Array::zeros(int rows, int cols) { return Array({rows, cols}); }

int Array::rows() const {
    if (rank() != 2) throw ShapeError("rows() requires rank 2, got " + shape_str());
    return shape_[0];
}

int Array::cols() const {
    if (rank() != 2) throw ShapeError("cols() requires rank 2, got " + shape_str());
    return shape_[1];
}

std::span<double> Array::row(int r) {
    const int c = cols();
    return {data_.data() + static_cast<std::size_t>(r) * c, static_cast<std::size_t>(c)};
}

std::span<const double> Array::row(int r) const {
    const int c = cols();
    return {data_.data() + static_cast<std::size_t>(r) * c, static_cast<std::size_t>(c)};
}

double& Array::at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols() + c]; }

double Array::at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols() + c]; }

bool Array::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string Array::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ",";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void matmul_into(const Array& a, const Array& b, Array& out) {
    const int m = a.rows(), k = a.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dims differ " + a.shape_str() + " x " + b.shape_str());
    }
    const int n = b.cols();
    if (out.rank() != 2 || out.rows() != m || out.cols() != n) out = Array::zeros(m, n);
    double* o = out.data();
    const double* pa = a.data();
    const double* pb = b.data();
    for (int i = 0; i < m; ++i) {
        double* orow = o + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) orow[j] = 0.0;
        for (int p = 0; p < k; ++p) {
            const double av = pa[static_cast<std::size_t>(i) * k + p];
            const double* brow = pb + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

Array matmul(const Array& a, const Array& b) {
    Array out;
    matmul_into(a, b, out);
    return out;
}

// acc += g * b^T   with g: m x n, b: k x n, acc: m x k
void matmul_nt_acc(const Array& g, const Array& b, Array& acc) {
    const int m = g.rows(), n = g.cols(), k = b.rows();
    if (b.cols() != n || acc.rows() != m || acc.cols() != k) {
        throw ShapeError("matmul_nt_acc: shape mismatch");
    }
    const double* pg = g.data();
    const double* pb = b.data();
    double* pacc = acc.data();
    for (int i = 0; i < m; ++i) {
        const double* grow = pg + static_cast<std::size_t>(i) * n;
        double* arow = pacc + static_cast<std::size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            const double* brow = pb + static_cast<std::size_t>(p) * n;
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
            arow[p] += s;
        }
    }
}

// acc += a^T * g   with a: m x k, g: m x n, acc: k x n
void matmul_tn_acc(const Array& a, const Array& g, Array& acc) {
    const int m = a.rows(), k = a.cols(), n = g.cols();
    if (g.rows() != m || acc.rows() != k || acc.cols() != n) {
        throw ShapeError("matmul_tn_acc: shape mismatch");
    }
    const double* pa = a.data();
    const double* pg = g.data();
    double* pacc = acc.data();
    for (int i = 0; i < m; ++i) {
        const double* grow = pg + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = pa[static_cast<std::size_t>(i) * k + p];
            double* arow = pacc + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) arow[j] += av * grow[j];
        }
    }
}

Array add(const Array& a, const Array& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Array out = a;
    double* o = out.data();
    const double* pb = b.data();
    for (std::int64_t i = 0; i < out.size(); ++i) o[i] += pb[i];
    return out;
}

Array sub(const Array& a, const Array& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("sub: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Array out = a;
    double* o = out.data();
    const double* pb = b.data();
    for (std::int64_t i = 0; i < out.size(); ++i) o[i] -= pb[i];
    return out;
}

Array mul(const Array& a, const Array& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("mul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    }
    Array out = a;
    double* o = out.data();
    const double* pb = b.data();
    for (std::int64_t i = 0; i < out.size(); ++i) o[i] *= pb[i];
    return out;
}

Array scale(const Array& a, double factor) {
    Array out = a;
    for (double& v : out.values()) v *= factor;
    return out;
}

Array add_row_vector(const Array& m, const Array& v) {
    if (m.rank() != 2 || v.rank() != 1 || v.size() != m.cols()) {
        throw ShapeError("add_row_vector: need (r,c) + (c,), got " + m.shape_str() + " + " +
                         v.shape_str());
    }
    Array out = m;
    const int rows = m.rows(), cols = m.cols();
    const double* pv = v.data();
    for (int r = 0; r < rows; ++r) {
        double* orow = out.data() + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) orow[c] += pv[c];
    }
    return out;
}

Array tanh_map(const Array& a) {
    Array out = a;
    for (double& v : out.values()) v = std::tanh(v);
    return out;
}

Array square(const Array& a) {
    Array out = a;
    for (double& v : out.values()) v *= v;
    return out;
}

double sum(const Array& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double mean(const Array& a) {
    if (a.size() == 0) throw ShapeError("mean of empty array");
    return sum(a) / static_cast<double>(a.size());
}

Array concat_cols(const Array& a, const Array& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.rows() != b.rows()) {
        throw ShapeError("concat_cols: row counts differ " + a.shape_str() + " vs " +
                         b.shape_str());
    }
    const int rows = a.rows(), ca = a.cols(), cb = b.cols();
    Array out = Array::zeros(rows, ca + cb);
    for (int r = 0; r < rows; ++r) {
        double* orow = out.data() + static_cast<std::size_t>(r) * (ca + cb);
        const double* arow = a.data() + static_cast<std::size_t>(r) * ca;
        const double* brow = b.data() + static_cast<std::size_t>(r) * cb;
        for (int c = 0; c < ca; ++c) orow[c] = arow[c];
        for (int c = 0; c < cb; ++c) orow[ca + c] = brow[c];
    }
    return out;
}

Array slice_cols(const Array& a, int c0, int c1) {
    if (a.rank() != 2 || c0 < 0 || c1 > a.cols() || c0 >= c1) {
        throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") for " + a.shape_str());
    }
    const int rows = a.rows(), cols = a.cols(), w = c1 - c0;
    Array out = Array::zeros(rows, w);
    for (int r = 0; r < rows; ++r) {
        const double* arow = a.data() + static_cast<std::size_t>(r) * cols + c0;
        double* orow = out.data() + static_cast<std::size_t>(r) * w;
        for (int c = 0; c < w; ++c) orow[c] = arow[c];
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace msfm
