#include "kformer/tensor.hpp"

#include <cmath>
#include <sstream>

#include "kformer/errors.hpp"

namespace kformer {

static int64_t shape_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

Tensor::Tensor(std::vector<int64_t> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str());
}

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    const int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(std::vector<int64_t> shape, double v) {
    const int64_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::row(std::vector<double> v) {
    const int64_t n = static_cast<int64_t>(v.size());
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::vector<double>> rows) {
    const int64_t m = static_cast<int64_t>(rows.size());
    const int64_t n = m > 0 ? static_cast<int64_t>(rows.begin()->size()) : 0;
    std::vector<double> flat;
    flat.reserve(static_cast<size_t>(m * n));
    for (const auto& r : rows) {
        if (static_cast<int64_t>(r.size()) != n)
            throw DimensionError("tensor: ragged matrix initializer");
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor({m, n}, std::move(flat));
}

Tensor Tensor::identity(int64_t n) {
    Tensor t = zeros({n, n});
    for (int64_t i = 0; i < n; ++i) t.data[static_cast<size_t>(i * n + i)] = 1.0;
    return t;
}

int64_t Tensor::numel() const { return shape_numel(shape); }

int64_t Tensor::rows() const {
    if (rank() != 2) throw DimensionError("tensor: rows() on shape " + shape_str());
    return shape[0];
}

int64_t Tensor::cols() const {
    if (rank() != 2) throw DimensionError("tensor: cols() on shape " + shape_str());
    return shape[1];
}

double& Tensor::at(int64_t i, int64_t j) {
    return data[static_cast<size_t>(i * cols() + j)];
}

double Tensor::at(int64_t i, int64_t j) const {
    return data[static_cast<size_t>(i * cols() + j)];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.data) {
        if (!std::isfinite(v))
            throw NumericError(std::string(op) + ": non-finite value produced");
    }
}

}  // namespace kformer
