#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "kformer/tensor.hpp"

namespace kformer {

// Named trainable tensor with a gradient slot of identical shape.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(v), grad(Tensor::zeros(v.shape)) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

// Handle into a Tape.
struct Value {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Record of primitive-op applications, replayed in reverse to accumulate
// adjoints. Append order is a topological order by construction (ops only
// consume already-recorded values), so backward() is a single reverse scan
// that visits each op exactly once.
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaves. constant() values do not route gradients anywhere; leaf()
    // values deposit their adjoint into the bound Parameter. A Parameter is
    // leafed at most once per tape.
    Value constant(Tensor t);
    Value leaf(Parameter& p);

    const Tensor& value(Value v) const { return nodes_[v.id].value; }
    const Tensor& grad(Value v) const { return nodes_[v.id].grad; }
    size_t size() const { return nodes_.size(); }

    // Primitive ops. Every op checks shapes, records itself and verifies the
    // output is finite.
    Value matmul(Value a, Value b);     // [m,k]*[k,n]
    Value matmul_nt(Value a, Value b);  // [m,k]*[n,k]^T -> [m,n]
    Value add(Value a, Value b);        // same shape
    Value scale(Value a, double c);
    Value gelu(Value a);
    Value softmax(Value a, int axis);
    Value layer_norm(Value x, Value gamma, Value beta);  // x [n,d]; gamma,beta [d]
    Value gather_rows(Value table, std::vector<int64_t> ids);
    Value mean_rows(Value a);   // [n,d] -> [1,d]
    Value sum_all(Value a);     // -> scalar
    Value concat_rows(const std::vector<Value>& parts);
    Value slice_rows(Value a, int64_t r0, int64_t r1);
    Value concat_cols(const std::vector<Value>& parts);
    Value slice_cols(Value a, int64_t c0, int64_t c1);
    Value reshape(Value a, std::vector<int64_t> shape);
    Value stack_scalars(const std::vector<Value>& scalars);  // -> [n]
    Value cross_entropy(Value logits, int64_t target);       // -> scalar

    // Reverse sweep from a scalar loss. Gradients of the listed parameters
    // are overwritten: parameters on the tape receive d loss / d value,
    // parameters never touched by the record receive zeros.
    void backward(Value loss, const std::vector<Parameter*>& params);

  private:
    enum class Op : uint8_t {
        kConstant, kLeaf, kMatMul, kMatMulNT, kAdd, kScale, kGelu, kSoftmax,
        kLayerNorm, kGatherRows, kMeanRows, kSumAll, kConcatRows, kSliceRows,
        kConcatCols, kSliceCols, kReshape, kStackScalars, kCrossEntropy,
    };

    struct Node {
        Op op;
        Tensor value;
        Tensor grad;
        std::vector<int32_t> parents;
        Parameter* param = nullptr;
        std::vector<int64_t> aux;  // gather ids, slice bounds, axis, target
        std::vector<double> aux_f; // layer_norm per-row 1/sigma
        double factor = 0.0;       // scale constant
        Tensor saved;              // x-hat / probabilities for the backward pass
    };

    Value push(Node n, const char* opname);
    void backward_node(int32_t id);

    // deque keeps value() references stable while later ops are recorded
    std::deque<Node> nodes_;
    std::unordered_map<const Parameter*, int32_t> leaf_cache_;
};

// Central-difference gradient checker. `build` must record the loss for the
// current parameter values onto the given tape and return it; it is invoked
// many times and must be deterministic (this is verified by evaluating it
// twice). Checks a seeded random subsample of at least `min_coords`
// coordinates per parameter (all of them for small parameters) and returns
// the worst relative error.
double grad_check(const std::function<Value(Tape&)>& build,
                  const std::vector<Parameter*>& params, double eps,
                  uint64_t seed = 0, int64_t min_coords = 100);

}  // namespace kformer
