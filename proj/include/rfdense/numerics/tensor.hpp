#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace rfdense {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient buffer.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty until the first backward pass touches it

    Tensor() = default;
    Tensor(Shape s, std::vector<double> values, bool needs_grad = false);

    static Tensor zeros(Shape s, bool needs_grad = false);
    static Tensor filled(Shape s, double value, bool needs_grad = false);
    static Tensor scalar(double value, bool needs_grad = false);

    std::size_t size() const { return data.size(); }
    int dim(std::size_t axis) const { return shape.at(axis); }
    std::size_t rank() const { return shape.size(); }

    std::span<double> values() { return data; }
    std::span<const double> values() const { return data; }

    void zero_grad();
    /// Throws ShapeError when product(shape) != data.size() or grad length is wrong.
    void validate() const;
};

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

bool all_finite(std::span<const double> values);

}  // namespace rfdense
