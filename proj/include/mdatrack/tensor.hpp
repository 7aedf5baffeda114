#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace mdt {

using Shape = std::vector<std::size_t>;

/// Dense row-major tensor of doubles. Indices here are 0-based storage indices.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t order() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }

    double& operator[](std::size_t flat) { return data_[flat]; }
    double operator[](std::size_t flat) const { return data_[flat]; }

    double& at(std::span<const std::size_t> index);
    double at(std::span<const std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index) { return at(std::span(index.begin(), index.size())); }
    double at(std::initializer_list<std::size_t> index) const { return at(std::span(index.begin(), index.size())); }

    std::size_t flat_index(std::span<const std::size_t> index) const;
    /// Inverse of flat_index.
    void unravel(std::size_t flat, std::span<std::size_t> index) const;

    bool all_finite() const noexcept;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Shape header line then row-major values, 17 significant digits, one per line.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

/// Row-major matrix view helper used by the assignment layers.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

std::string shape_string(const Shape& shape);

}  // namespace mdt
