#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kformer/encoder_ops.hpp"
#include "kformer/graph.hpp"
#include "kformer/model_types.hpp"
#include "kformer/vocab.hpp"

namespace kformer {

// Embedding matrix for knowledge texts. A separate parameter, initialized as
// a copy of the encoder's token embedding and updated independently from
// then on.
struct KnowledgeEmbedder {
    Parameter embedding;  // [vocab x d]
};

// Per-layer knowledge projections, bias-free.
struct LayerProjection {
    Parameter w_k;  // [d x d]
    Parameter w_v;  // [d x d]
};

// Mean of the token embeddings, no position term. `ids` are rows of the
// embedding matrix.
Value embed_knowledge(Tape& t, Parameter& embedding, const std::vector<int>& ids,
                      int max_knowledge_len);  // -> [1 x d]

// Non-recording flavor for the retriever's dense scoring.
Tensor embed_knowledge_raw(const Tensor& embedding, const std::vector<int>& ids);

// phi_k = k * W_k^T, phi_v = k * W_v^T, row per knowledge vector.
std::pair<Value, Value> project_knowledge(Tape& t, Value k, LayerProjection& proj);

// Captured gelu outputs on the knowledge slots of injected FFN layers.
struct LayerActivation {
    int layer = 0;      // 1-based
    Tensor values;      // [seq_len x N]
};
using ActivationSink = std::vector<LayerActivation>;

// FFN expanded with knowledge slots: f(H * [K ; phi_k]^T) * [V ; phi_v].
// Knowledge rows are appended after the original memory slots.
Value injected_ffn(Tape& t, Value h, EncoderLayerParams& layer, Value phi_k, Value phi_v,
                   int layer_index = 0, ActivationSink* sink = nullptr);

// Knowledge appended to the key and value sides of self-attention; per head,
// keys/values are the head slices of the expanded matrices, so the softmax
// runs over len+N slots.
Value injected_attention(Tape& t, Value h, EncoderLayerParams& layer, Value phi_k, Value phi_v,
                         int num_heads, AttentionProbe* probe = nullptr);

// [CLS] K [SEP] Q [SEP] A per option, K being the knowledge texts joined in
// retrieval order. Over-long sequences lose knowledge tokens first, then the
// question tail, never the option.
std::vector<TokenSequence> build_concat_input(const Vocab& vocab, const TokenSequence& question,
                                              const std::vector<TokenSequence>& options,
                                              const std::vector<std::string>& knowledge_texts,
                                              int max_seq_len);

}  // namespace kformer
