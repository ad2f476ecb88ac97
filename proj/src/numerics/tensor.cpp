#include "rfdense/numerics/tensor.hpp"

#include <cmath>
#include <sstream>

#include "rfdense/error.hpp"

namespace rfdense {

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw ShapeError("non-positive dimension in shape " + shape_string(shape));
        }
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values, bool needs_grad)
    : shape(std::move(s)), data(std::move(values)), requires_grad(needs_grad) {
    validate();
}

Tensor Tensor::zeros(Shape s, bool needs_grad) { return filled(std::move(s), 0.0, needs_grad); }

Tensor Tensor::filled(Shape s, double value, bool needs_grad) {
    const std::size_t n = shape_size(s);
    return Tensor(std::move(s), std::vector<double>(n, value), needs_grad);
}

Tensor Tensor::scalar(double value, bool needs_grad) { return Tensor({1}, {value}, needs_grad); }

void Tensor::zero_grad() {
    grad.assign(data.size(), 0.0);
}

void Tensor::validate() const {
    if (shape_size(shape) != data.size()) {
        throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    if (!grad.empty() && grad.size() != data.size()) {
        throw ShapeError("gradient buffer length mismatch");
    }
}

bool all_finite(std::span<const double> values) {
    for (double v : values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace rfdense
