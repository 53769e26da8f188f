#include "kformer/graph.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "kformer/errors.hpp"
#include "kformer/kernels.hpp"
#include "kformer/rng.hpp"

namespace kformer {

namespace {

constexpr double kLayerNormEps = 1e-5;

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + t.shape_str());
}

}  // namespace

Value Tape::push(Node n, const char* opname) {
    check_finite(n.value, opname);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int32_t>(nodes_.size() - 1)};
}

Value Tape::constant(Tensor t) {
    Node n;
    n.op = Op::kConstant;
    n.value = std::move(t);
    return push(std::move(n), "constant");
}

Value Tape::leaf(Parameter& p) {
    auto it = leaf_cache_.find(&p);
    if (it != leaf_cache_.end()) return Value{it->second};
    Node n;
    n.op = Op::kLeaf;
    n.value = p.value;
    n.param = &p;
    Value v = push(std::move(n), "leaf");
    leaf_cache_.emplace(&p, v.id);
    return v;
}

Value Tape::matmul(Value a, Value b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    if (A.cols() != B.rows())
        throw DimensionError("matmul: inner dimensions disagree: " + A.shape_str() + " * " + B.shape_str());
    Node n;
    n.op = Op::kMatMul;
    n.parents = {a.id, b.id};
    n.value = Tensor::zeros({A.rows(), B.cols()});
    kernels::matmul_nn(A.data.data(), B.data.data(), n.value.data.data(), A.rows(), A.cols(), B.cols());
    return push(std::move(n), "matmul");
}

Value Tape::matmul_nt(Value a, Value b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    require_rank2(A, "matmul_nt");
    require_rank2(B, "matmul_nt");
    if (A.cols() != B.cols())
        throw DimensionError("matmul_nt: inner dimensions disagree: " + A.shape_str() + " * " + B.shape_str() + "^T");
    Node n;
    n.op = Op::kMatMulNT;
    n.parents = {a.id, b.id};
    n.value = Tensor::zeros({A.rows(), B.rows()});
    kernels::matmul_nt(A.data.data(), B.data.data(), n.value.data.data(), A.rows(), A.cols(), B.rows());
    return push(std::move(n), "matmul_nt");
}

Value Tape::add(Value a, Value b) {
    const Tensor& A = nodes_[a.id].value;
    const Tensor& B = nodes_[b.id].value;
    if (!A.same_shape(B))
        throw DimensionError("add: shape mismatch: " + A.shape_str() + " vs " + B.shape_str());
    Node n;
    n.op = Op::kAdd;
    n.parents = {a.id, b.id};
    n.value = A;
    for (size_t i = 0; i < n.value.data.size(); ++i) n.value.data[i] += B.data[i];
    return push(std::move(n), "add");
}

Value Tape::scale(Value a, double c) {
    Node n;
    n.op = Op::kScale;
    n.parents = {a.id};
    n.factor = c;
    n.value = nodes_[a.id].value;
    for (double& v : n.value.data) v *= c;
    return push(std::move(n), "scale");
}

Value Tape::gelu(Value a) {
    const Tensor& A = nodes_[a.id].value;
    Node n;
    n.op = Op::kGelu;
    n.parents = {a.id};
    n.value = Tensor::zeros(A.shape);
    kernels::gelu(A.data.data(), n.value.data.data(), A.numel());
    return push(std::move(n), "gelu");
}

Value Tape::softmax(Value a, int axis) {
    const Tensor& A = nodes_[a.id].value;
    if (A.rank() == 0 || A.rank() > 2)
        throw DimensionError("softmax: expected rank-1 or rank-2 tensor, got " + A.shape_str());
    if (axis < 0 || axis >= A.rank())
        throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + A.shape_str());
    Node n;
    n.op = Op::kSoftmax;
    n.parents = {a.id};
    n.aux = {axis};
    n.value = Tensor::zeros(A.shape);
    const int64_t rows = A.rank() == 2 ? A.shape[0] : 1;
    const int64_t cols = A.rank() == 2 ? A.shape[1] : A.shape[0];
    // axis==1 (or the only axis of a vector): softmax along each row;
    // axis==0 on rank 2: softmax along each column.
    const bool along_rows = (A.rank() == 1) || axis == 1;
    const int64_t groups = along_rows ? rows : cols;
    const int64_t span = along_rows ? cols : rows;
    const int64_t gstride = along_rows ? cols : 1;
    const int64_t sstride = along_rows ? 1 : cols;
    for (int64_t g = 0; g < groups; ++g) {
        const double* src = A.data.data() + g * gstride;
        double* dst = n.value.data.data() + g * gstride;
        double mx = src[0];
        for (int64_t i = 1; i < span; ++i) mx = std::max(mx, src[i * sstride]);
        double denom = 0.0;
        for (int64_t i = 0; i < span; ++i) {
            const double e = std::exp(src[i * sstride] - mx);
            dst[i * sstride] = e;
            denom += e;
        }
        for (int64_t i = 0; i < span; ++i) dst[i * sstride] /= denom;
    }
    return push(std::move(n), "softmax");
}

Value Tape::layer_norm(Value x, Value gamma, Value beta) {
    const Tensor& X = nodes_[x.id].value;
    const Tensor& G = nodes_[gamma.id].value;
    const Tensor& B = nodes_[beta.id].value;
    require_rank2(X, "layer_norm");
    const int64_t d = X.cols();
    if (G.numel() != d || B.numel() != d)
        throw DimensionError("layer_norm: gamma/beta length must equal last dim " + std::to_string(d));
    Node n;
    n.op = Op::kLayerNorm;
    n.parents = {x.id, gamma.id, beta.id};
    n.value = Tensor::zeros(X.shape);
    n.saved = Tensor::zeros(X.shape);           // x-hat
    n.aux_f.assign(static_cast<size_t>(X.rows()), 0.0);  // 1/sigma per row
    for (int64_t i = 0; i < X.rows(); ++i) {
        const double* row = X.data.data() + i * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        n.aux_f[static_cast<size_t>(i)] = inv;
        for (int64_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * inv;
            n.saved.data[static_cast<size_t>(i * d + j)] = xh;
            n.value.data[static_cast<size_t>(i * d + j)] = G.data[static_cast<size_t>(j)] * xh + B.data[static_cast<size_t>(j)];
        }
    }
    return push(std::move(n), "layer_norm");
}

Value Tape::gather_rows(Value table, std::vector<int64_t> ids) {
    const Tensor& T = nodes_[table.id].value;
    require_rank2(T, "gather_rows");
    for (int64_t id : ids)
        if (id < 0 || id >= T.rows())
            throw DataError("gather_rows: row index " + std::to_string(id) + " out of range for " + T.shape_str());
    Node n;
    n.op = Op::kGatherRows;
    n.parents = {table.id};
    n.value = Tensor::zeros({static_cast<int64_t>(ids.size()), T.cols()});
    const int64_t d = T.cols();
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy_n(T.data.data() + ids[i] * d, d, n.value.data.data() + static_cast<int64_t>(i) * d);
    n.aux = std::move(ids);
    return push(std::move(n), "gather_rows");
}

Value Tape::mean_rows(Value a) {
    const Tensor& A = nodes_[a.id].value;
    require_rank2(A, "mean_rows");
    if (A.rows() == 0) throw DataError("mean_rows: empty input");
    Node n;
    n.op = Op::kMeanRows;
    n.parents = {a.id};
    n.value = Tensor::zeros({1, A.cols()});
    for (int64_t i = 0; i < A.rows(); ++i)
        for (int64_t j = 0; j < A.cols(); ++j) n.value.data[static_cast<size_t>(j)] += A.at(i, j);
    for (double& v : n.value.data) v /= static_cast<double>(A.rows());
    return push(std::move(n), "mean_rows");
}

Value Tape::sum_all(Value a) {
    const Tensor& A = nodes_[a.id].value;
    Node n;
    n.op = Op::kSumAll;
    n.parents = {a.id};
    double s = 0.0;
    for (double v : A.data) s += v;
    n.value = Tensor::scalar(s);
    return push(std::move(n), "sum_all");
}

Value Tape::concat_rows(const std::vector<Value>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const int64_t cols = nodes_[parts[0].id].value.cols();
    int64_t rows = 0;
    for (Value p : parts) {
        const Tensor& t = nodes_[p.id].value;
        require_rank2(t, "concat_rows");
        if (t.cols() != cols)
            throw DimensionError("concat_rows: column mismatch: " + t.shape_str());
        rows += t.rows();
    }
    Node n;
    n.op = Op::kConcatRows;
    for (Value p : parts) n.parents.push_back(p.id);
    n.value = Tensor::zeros({rows, cols});
    int64_t at = 0;
    for (Value p : parts) {
        const Tensor& t = nodes_[p.id].value;
        std::copy(t.data.begin(), t.data.end(), n.value.data.begin() + at * cols);
        at += t.rows();
    }
    return push(std::move(n), "concat_rows");
}

Value Tape::slice_rows(Value a, int64_t r0, int64_t r1) {
    const Tensor& A = nodes_[a.id].value;
    require_rank2(A, "slice_rows");
    if (r0 < 0 || r1 < r0 || r1 > A.rows())
        throw DimensionError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                             ") invalid for " + A.shape_str());
    Node n;
    n.op = Op::kSliceRows;
    n.parents = {a.id};
    n.aux = {r0, r1};
    n.value = Tensor::zeros({r1 - r0, A.cols()});
    std::copy(A.data.begin() + r0 * A.cols(), A.data.begin() + r1 * A.cols(), n.value.data.begin());
    return push(std::move(n), "slice_rows");
}

Value Tape::concat_cols(const std::vector<Value>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const int64_t rows = nodes_[parts[0].id].value.rows();
    int64_t cols = 0;
    for (Value p : parts) {
        const Tensor& t = nodes_[p.id].value;
        require_rank2(t, "concat_cols");
        if (t.rows() != rows)
            throw DimensionError("concat_cols: row mismatch: " + t.shape_str());
        cols += t.cols();
    }
    Node n;
    n.op = Op::kConcatCols;
    for (Value p : parts) n.parents.push_back(p.id);
    n.value = Tensor::zeros({rows, cols});
    int64_t at = 0;
    for (Value p : parts) {
        const Tensor& t = nodes_[p.id].value;
        for (int64_t i = 0; i < rows; ++i)
            std::copy_n(t.data.data() + i * t.cols(), t.cols(), n.value.data.data() + i * cols + at);
        at += t.cols();
    }
    return push(std::move(n), "concat_cols");
}

Value Tape::slice_cols(Value a, int64_t c0, int64_t c1) {
    const Tensor& A = nodes_[a.id].value;
    require_rank2(A, "slice_cols");
    if (c0 < 0 || c1 < c0 || c1 > A.cols())
        throw DimensionError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") invalid for " + A.shape_str());
    Node n;
    n.op = Op::kSliceCols;
    n.parents = {a.id};
    n.aux = {c0, c1};
    n.value = Tensor::zeros({A.rows(), c1 - c0});
    for (int64_t i = 0; i < A.rows(); ++i)
        std::copy_n(A.data.data() + i * A.cols() + c0, c1 - c0, n.value.data.data() + i * (c1 - c0));
    return push(std::move(n), "slice_cols");
}

Value Tape::reshape(Value a, std::vector<int64_t> shape) {
    const Tensor& A = nodes_[a.id].value;
    Node n;
    n.op = Op::kReshape;
    n.parents = {a.id};
    n.value = Tensor(std::move(shape), A.data);  // validates numel
    return push(std::move(n), "reshape");
}

Value Tape::stack_scalars(const std::vector<Value>& scalars) {
    if (scalars.empty()) throw DimensionError("stack_scalars: no inputs");
    Node n;
    n.op = Op::kStackScalars;
    std::vector<double> v;
    for (Value s : scalars) {
        const Tensor& t = nodes_[s.id].value;
        if (t.numel() != 1)
            throw DimensionError("stack_scalars: input is not scalar: " + t.shape_str());
        n.parents.push_back(s.id);
        v.push_back(t.data[0]);
    }
    n.value = Tensor::row(std::move(v));
    return push(std::move(n), "stack_scalars");
}

Value Tape::cross_entropy(Value logits, int64_t target) {
    const Tensor& L = nodes_[logits.id].value;
    const int64_t k = L.numel();
    if (target < 0 || target >= k)
        throw DataError("cross_entropy: target " + std::to_string(target) + " out of range for " +
                        std::to_string(k) + " logits");
    Node n;
    n.op = Op::kCrossEntropy;
    n.parents = {logits.id};
    n.aux = {target};
    n.saved = Tensor::zeros({k});  // probabilities, for the backward pass
    double mx = L.data[0];
    for (double v : L.data) mx = std::max(mx, v);
    double denom = 0.0;
    for (int64_t i = 0; i < k; ++i) {
        const double e = std::exp(L.data[static_cast<size_t>(i)] - mx);
        n.saved.data[static_cast<size_t>(i)] = e;
        denom += e;
    }
    for (double& v : n.saved.data) v /= denom;
    n.value = Tensor::scalar(-std::log(n.saved.data[static_cast<size_t>(target)]));
    return push(std::move(n), "cross_entropy");
}

void Tape::backward_node(int32_t id) {
    Node& n = nodes_[id];
    const Tensor& g = n.grad;
    auto pgrad = [&](int i) -> Tensor& { return nodes_[n.parents[static_cast<size_t>(i)]].grad; };
    auto pval = [&](int i) -> const Tensor& { return nodes_[n.parents[static_cast<size_t>(i)]].value; };

    switch (n.op) {
        case Op::kConstant:
        case Op::kLeaf:
            break;
        case Op::kMatMul: {
            const Tensor& A = pval(0);
            const Tensor& B = pval(1);
            Tensor da = Tensor::zeros(A.shape);
            Tensor db = Tensor::zeros(B.shape);
            // dA = G * B^T ; dB = A^T * G
            kernels::matmul_nt(g.data.data(), B.data.data(), da.data.data(), A.rows(), B.cols(), A.cols());
            kernels::matmul_tn(A.data.data(), g.data.data(), db.data.data(), A.cols(), A.rows(), B.cols());
            for (size_t i = 0; i < da.data.size(); ++i) pgrad(0).data[i] += da.data[i];
            for (size_t i = 0; i < db.data.size(); ++i) pgrad(1).data[i] += db.data[i];
            break;
        }
        case Op::kMatMulNT: {
            const Tensor& A = pval(0);
            const Tensor& B = pval(1);
            Tensor da = Tensor::zeros(A.shape);
            Tensor db = Tensor::zeros(B.shape);
            // C = A*B^T: dA = G * B ; dB = G^T * A
            kernels::matmul_nn(g.data.data(), B.data.data(), da.data.data(), A.rows(), B.rows(), A.cols());
            kernels::matmul_tn(g.data.data(), A.data.data(), db.data.data(), B.rows(), A.rows(), A.cols());
            for (size_t i = 0; i < da.data.size(); ++i) pgrad(0).data[i] += da.data[i];
            for (size_t i = 0; i < db.data.size(); ++i) pgrad(1).data[i] += db.data[i];
            break;
        }
        case Op::kAdd:
            for (size_t i = 0; i < g.data.size(); ++i) pgrad(0).data[i] += g.data[i];
            for (size_t i = 0; i < g.data.size(); ++i) pgrad(1).data[i] += g.data[i];
            break;
        case Op::kScale:
            for (size_t i = 0; i < g.data.size(); ++i) pgrad(0).data[i] += n.factor * g.data[i];
            break;
        case Op::kGelu:
            kernels::gelu_backward(pval(0).data.data(), g.data.data(), pgrad(0).data.data(), g.numel());
            break;
        case Op::kSoftmax: {
            const Tensor& y = n.value;
            const int axis = static_cast<int>(n.aux[0]);
            const int64_t rows = y.rank() == 2 ? y.shape[0] : 1;
            const int64_t cols = y.rank() == 2 ? y.shape[1] : y.shape[0];
            const bool along_rows = (y.rank() == 1) || axis == 1;
            const int64_t groups = along_rows ? rows : cols;
            const int64_t span = along_rows ? cols : rows;
            const int64_t gstride = along_rows ? cols : 1;
            const int64_t sstride = along_rows ? 1 : cols;
            for (int64_t gi = 0; gi < groups; ++gi) {
                const double* yv = y.data.data() + gi * gstride;
                const double* gv = g.data.data() + gi * gstride;
                double* dv = pgrad(0).data.data() + gi * gstride;
                double dot = 0.0;
                for (int64_t i = 0; i < span; ++i) dot += gv[i * sstride] * yv[i * sstride];
                for (int64_t i = 0; i < span; ++i)
                    dv[i * sstride] += yv[i * sstride] * (gv[i * sstride] - dot);
            }
            break;
        }
        case Op::kLayerNorm: {
            const Tensor& X = pval(0);
            const Tensor& G = pval(1);
            const int64_t d = X.cols();
            for (int64_t i = 0; i < X.rows(); ++i) {
                const double inv = n.aux_f[static_cast<size_t>(i)];
                const double* xh = n.saved.data.data() + i * d;
                const double* gr = g.data.data() + i * d;
                double mean_h = 0.0, mean_hx = 0.0;
                for (int64_t j = 0; j < d; ++j) {
                    const double h = G.data[static_cast<size_t>(j)] * gr[j];
                    mean_h += h;
                    mean_hx += h * xh[j];
                }
                mean_h /= static_cast<double>(d);
                mean_hx /= static_cast<double>(d);
                for (int64_t j = 0; j < d; ++j) {
                    const double h = G.data[static_cast<size_t>(j)] * gr[j];
                    pgrad(0).data[static_cast<size_t>(i * d + j)] += inv * (h - mean_h - xh[j] * mean_hx);
                    pgrad(1).data[static_cast<size_t>(j)] += gr[j] * xh[j];
                    pgrad(2).data[static_cast<size_t>(j)] += gr[j];
                }
            }
            break;
        }
        case Op::kGatherRows: {
            const int64_t d = n.value.cols();
            for (size_t i = 0; i < n.aux.size(); ++i) {
                double* dst = pgrad(0).data.data() + n.aux[i] * d;
                const double* src = g.data.data() + static_cast<int64_t>(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
            break;
        }
        case Op::kMeanRows: {
            const Tensor& A = pval(0);
            const double scale = 1.0 / static_cast<double>(A.rows());
            for (int64_t i = 0; i < A.rows(); ++i)
                for (int64_t j = 0; j < A.cols(); ++j)
                    pgrad(0).data[static_cast<size_t>(i * A.cols() + j)] += scale * g.data[static_cast<size_t>(j)];
            break;
        }
        case Op::kSumAll: {
            const double gs = g.data[0];
            for (double& v : pgrad(0).data) v += gs;
            break;
        }
        case Op::kConcatRows: {
            const int64_t cols = n.value.cols();
            int64_t at = 0;
            for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                Tensor& pg = pgrad(static_cast<int>(pi));
                const int64_t r = pg.rows();
                for (int64_t i = 0; i < r * cols; ++i) pg.data[static_cast<size_t>(i)] += g.data[static_cast<size_t>(at * cols + i)];
                at += r;
            }
            break;
        }
        case Op::kSliceRows: {
            const int64_t cols = n.value.cols();
            const int64_t r0 = n.aux[0];
            for (int64_t i = 0; i < n.value.rows() * cols; ++i)
                pgrad(0).data[static_cast<size_t>(r0 * cols + i)] += g.data[static_cast<size_t>(i)];
            break;
        }
        case Op::kConcatCols: {
            const int64_t rows = n.value.rows();
            const int64_t cols = n.value.cols();
            int64_t at = 0;
            for (size_t pi = 0; pi < n.parents.size(); ++pi) {
                Tensor& pg = pgrad(static_cast<int>(pi));
                const int64_t c = pg.cols();
                for (int64_t i = 0; i < rows; ++i)
                    for (int64_t j = 0; j < c; ++j)
                        pg.data[static_cast<size_t>(i * c + j)] += g.data[static_cast<size_t>(i * cols + at + j)];
                at += c;
            }
            break;
        }
        case Op::kSliceCols: {
            const Tensor& A = pval(0);
            const int64_t c0 = n.aux[0];
            const int64_t w = n.value.cols();
            for (int64_t i = 0; i < n.value.rows(); ++i)
                for (int64_t j = 0; j < w; ++j)
                    pgrad(0).data[static_cast<size_t>(i * A.cols() + c0 + j)] += g.data[static_cast<size_t>(i * w + j)];
            break;
        }
        case Op::kReshape:
            for (size_t i = 0; i < g.data.size(); ++i) pgrad(0).data[i] += g.data[i];
            break;
        case Op::kStackScalars:
            for (size_t pi = 0; pi < n.parents.size(); ++pi)
                pgrad(static_cast<int>(pi)).data[0] += g.data[pi];
            break;
        case Op::kCrossEntropy: {
            const double gs = g.data[0];
            const int64_t target = n.aux[0];
            for (size_t i = 0; i < n.saved.data.size(); ++i) {
                const double onehot = (static_cast<int64_t>(i) == target) ? 1.0 : 0.0;
                pgrad(0).data[i] += gs * (n.saved.data[i] - onehot);
            }
            break;
        }
    }
}

void Tape::backward(Value loss, const std::vector<Parameter*>& params) {
    if (!loss.valid() || loss.id >= static_cast<int32_t>(nodes_.size()))
        throw ContractError("backward: invalid loss value");
    if (nodes_[loss.id].value.numel() != 1)
        throw ContractError("backward: loss must be scalar, got " + nodes_[loss.id].value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor::zeros(n.value.shape);
    nodes_[loss.id].grad.data[0] = 1.0;
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) backward_node(i);
    for (Parameter* p : params) p->zero_grad();
    for (const Node& n : nodes_) {
        if (n.op == Op::kLeaf && n.param != nullptr) {
            for (size_t i = 0; i < n.grad.data.size(); ++i) n.param->grad.data[i] += n.grad.data[i];
            check_finite(n.param->grad, ("backward gradient of " + n.param->name).c_str());
        }
    }
}

double grad_check(const std::function<Value(Tape&)>& build,
                  const std::vector<Parameter*>& params, double eps,
                  uint64_t seed, int64_t min_coords) {
    if (!(eps >= 1e-7 && eps <= 1e-3))
        throw ContractError("grad_check: eps must lie in [1e-7, 1e-3]");

    auto eval = [&]() {
        Tape t;
        Value v = build(t);
        if (t.value(v).numel() != 1) throw ContractError("grad_check: loss must be scalar");
        return t.value(v).data[0];
    };

    const double l0 = eval();
    const double l1 = eval();
    if (l0 != l1) throw ContractError("grad_check: forward pass is not deterministic");

    Tape tape;
    Value loss = build(tape);
    tape.backward(loss, params);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    SplitMix64 rng(seed ^ 0x5eedc0ffeeULL);
    double worst = 0.0;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Parameter& p = *params[pi];
        const int64_t n = p.value.numel();
        std::vector<int64_t> coords;
        if (n <= min_coords) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            std::unordered_set<int64_t> seen;
            while (static_cast<int64_t>(seen.size()) < min_coords)
                seen.insert(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
            coords.assign(seen.begin(), seen.end());
            std::sort(coords.begin(), coords.end());
        }
        for (int64_t c : coords) {
            double& slot = p.value.data[static_cast<size_t>(c)];
            const double old = slot;
            slot = old + eps;
            const double lp = eval();
            slot = old - eps;
            const double lm = eval();
            slot = old;
            const double fd = (lp - lm) / (2.0 * eps);
            const double an = analytic[pi].data[static_cast<size_t>(c)];
            const double rel = std::abs(an - fd) / std::max(std::abs(an) + std::abs(fd), 1e-6);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace kformer
