#include "kformer/encoder_ops.hpp"

#include <cmath>

#include "kformer/errors.hpp"

namespace kformer {

namespace detail {

// Shared core: when phi_k/phi_v are valid their head slices are appended to
// the key/value sides.
Value attention_core(Tape& t, Value h, EncoderLayerParams& layer, int num_heads,
                     const Value* phi_k, const Value* phi_v, AttentionProbe* probe) {
    const int64_t d = t.value(h).cols();
    if (d % num_heads != 0) throw DimensionError("attention: hidden not divisible by heads");
    const int64_t dh = d / num_heads;

    Value q = t.matmul(h, t.leaf(layer.wq));
    Value k = t.matmul(h, t.leaf(layer.wk));
    Value v = t.matmul(h, t.leaf(layer.wv));

    const double scaling = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Value> heads;
    heads.reserve(static_cast<size_t>(num_heads));
    for (int hd = 0; hd < num_heads; ++hd) {
        const int64_t c0 = hd * dh, c1 = (hd + 1) * dh;
        Value qh = t.slice_cols(q, c0, c1);
        Value kh = t.slice_cols(k, c0, c1);
        Value vh = t.slice_cols(v, c0, c1);
        if (phi_k != nullptr) {
            kh = t.concat_rows({kh, t.slice_cols(*phi_k, c0, c1)});
            vh = t.concat_rows({vh, t.slice_cols(*phi_v, c0, c1)});
        }
        Value attn = t.softmax(t.scale(t.matmul_nt(qh, kh), scaling), 1);
        if (probe != nullptr) probe->weights.push_back(t.value(attn));
        heads.push_back(t.matmul(attn, vh));
    }
    return t.matmul(t.concat_cols(heads), t.leaf(layer.wo));
}

}  // namespace detail

Value self_attention(Tape& t, Value h, EncoderLayerParams& layer, int num_heads,
                     AttentionProbe* probe) {
    return detail::attention_core(t, h, layer, num_heads, nullptr, nullptr, probe);
}

Value ffn_forward(Tape& t, Value h, EncoderLayerParams& layer) {
    Value act = t.gelu(t.matmul_nt(h, t.leaf(layer.ffn_key)));
    return t.matmul(act, t.leaf(layer.ffn_value));
}

}  // namespace kformer
