#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "msfm/errors.hpp"

namespace msfm {

/// Dense row-major container of 64-bit floats with shape metadata, rank <= 3.
/// The universal value type for states, actions, parameters and gradients.
class Array {
public:
    Array() = default;
    explicit Array(std::vector<int> shape);
    Array(std::vector<int> shape, std::vector<double> data);

    static Array scalar(double value);
    static Array from(std::vector<double> values);
    static Array zeros(int rows, int cols);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    int rows() const;
    int cols() const;

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return {data_.data(), data_.size()}; }
    std::span<const double> values() const { return {data_.data(), data_.size()}; }
    std::span<double> row(int r);
    std::span<const double> row(int r) const;

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }
    double& at(int r, int c);
    double at(int r, int c) const;

    bool same_shape(const Array& other) const { return shape_ == other.shape_; }
    bool all_finite() const;
    std::string shape_str() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Kernels shared by the tape and the plain (no-gradient) evaluation path.
// Keeping one implementation per primitive makes the two paths bit-identical.
Array matmul(const Array& a, const Array& b);
void matmul_into(const Array& a, const Array& b, Array& out);
void matmul_nt_acc(const Array& g, const Array& b, Array& acc);  // acc += g * b^T
void matmul_tn_acc(const Array& a, const Array& g, Array& acc);  // acc += a^T * g
Array add(const Array& a, const Array& b);
Array sub(const Array& a, const Array& b);
Array mul(const Array& a, const Array& b);
Array scale(const Array& a, double factor);
Array add_row_vector(const Array& m, const Array& v);
Array tanh_map(const Array& a);
Array square(const Array& a);
double sum(const Array& a);
double mean(const Array& a);
Array concat_cols(const Array& a, const Array& b);
Array slice_cols(const Array& a, int c0, int c1);

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace msfm
