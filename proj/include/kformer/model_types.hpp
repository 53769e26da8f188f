#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kformer/graph.hpp"

namespace kformer {

struct ModelConfig {
    int num_layers = 4;
    int hidden = 64;
    int intermediate = 256;
    int num_heads = 4;
    int vocab_size = 120;
    int max_seq_len = 64;
    uint64_t seed = 0;

    void validate() const;
};

// Token ids, [CLS]/[SEP] layout handled by the sequence builders.
struct TokenSequence {
    std::vector<int> ids;

    int64_t length() const { return static_cast<int64_t>(ids.size()); }
};

// Per-layer parameters. Attention projections are d x d, the FFN carries no
// biases: ffn_key rows are the memory keys, ffn_value rows the memory values.
struct EncoderLayerParams {
    Parameter wq, wk, wv, wo;
    Parameter ffn_key;    // [d_m x d]
    Parameter ffn_value;  // [d_m x d]
    Parameter norm1_gamma, norm1_beta;
    Parameter norm2_gamma, norm2_beta;
};

enum class FusionMode { kNone, kFfn, kAttention, kConcat };

std::string to_string(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

struct InjectionConfig {
    FusionMode mode = FusionMode::kNone;
    std::vector<int> layers;  // 1-based, ascending
    int top_n = 5;
    int sparse_m = 100;

    void validate(int num_layers) const;
    bool injects_at(int layer) const;  // layer is 1-based
};

// Default injected layers: the top three (or all, for models shallower than
// three layers).
std::vector<int> top_k_layers(int num_layers, int k);

}  // namespace kformer
