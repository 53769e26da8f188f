#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace kformer {

// Dense row-major array of doubles. Rank 0 (scalar), 1 and 2 are what the
// model math needs; zero-sized dimensions are allowed (an empty knowledge
// block is a 0 x d tensor).
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double v);
    static Tensor scalar(double v);
    static Tensor row(std::vector<double> v);                       // shape [n]
    static Tensor matrix(std::initializer_list<std::vector<double>> rows);
    static Tensor identity(int64_t n);

    int64_t numel() const;
    int rank() const { return static_cast<int>(shape.size()); }
    int64_t rows() const;  // rank-2 only
    int64_t cols() const;  // rank-2 only

    double& at(int64_t i, int64_t j);
    double at(int64_t i, int64_t j) const;

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    std::string shape_str() const;
};

// Throws NumericError naming `op` if any element is NaN or Inf.
void check_finite(const Tensor& t, const char* op);

}  // namespace kformer
