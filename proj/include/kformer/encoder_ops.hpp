#pragma once

#include <vector>

#include "kformer/graph.hpp"
#include "kformer/model_types.hpp"

namespace kformer {

// Attention weights per head, captured for tests and diagnostics.
struct AttentionProbe {
    std::vector<Tensor> weights;  // one [len x slots] matrix per head
};

// Scaled dot-product multi-head self-attention, 1/sqrt(d/h) scaling, output
// projection applied, residual added by the caller.
Value self_attention(Tape& t, Value h, EncoderLayerParams& layer, int num_heads,
                     AttentionProbe* probe = nullptr);

// f(H * K^T) * V with f = GeLU and no biases.
Value ffn_forward(Tape& t, Value h, EncoderLayerParams& layer);

}  // namespace kformer
