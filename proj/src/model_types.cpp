#include "kformer/model_types.hpp"

#include <algorithm>

#include "kformer/errors.hpp"

namespace kformer {

void ModelConfig::validate() const {
    if (num_layers <= 0 || hidden <= 0 || intermediate <= 0 || num_heads <= 0 ||
        vocab_size <= 0 || max_seq_len <= 0)
        throw ConfigError("model config: all dimensions must be positive");
    if (hidden % num_heads != 0)
        throw ConfigError("model config: hidden (" + std::to_string(hidden) +
                          ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
    if (intermediate < hidden)
        throw ConfigError("model config: intermediate must be >= hidden");
}

std::string to_string(FusionMode m) {
    switch (m) {
        case FusionMode::kNone: return "none";
        case FusionMode::kFfn: return "ffn";
        case FusionMode::kAttention: return "attention";
        case FusionMode::kConcat: return "concat";
    }
    return "none";
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "none") return FusionMode::kNone;
    if (s == "ffn") return FusionMode::kFfn;
    if (s == "attention") return FusionMode::kAttention;
    if (s == "concat") return FusionMode::kConcat;
    throw ConfigError("unknown fusion mode '" + s + "' (expected none|ffn|attention|concat)");
}

void InjectionConfig::validate(int num_layers) const {
    for (int l : layers) {
        if (l < 1 || l > num_layers)
            throw ConfigError("injection config: layer " + std::to_string(l) +
                              " outside [1," + std::to_string(num_layers) + "]");
    }
    for (size_t i = 1; i < layers.size(); ++i)
        if (layers[i] <= layers[i - 1])
            throw ConfigError("injection config: layers must be strictly ascending");
    if (top_n < 0 || sparse_m < 1)
        throw ConfigError("injection config: require top_n >= 0 and sparse_m >= 1");
    if (top_n > sparse_m)
        throw ConfigError("injection config: top_n (" + std::to_string(top_n) +
                          ") must not exceed sparse_m (" + std::to_string(sparse_m) + ")");
    if (mode == FusionMode::kConcat && !layers.empty())
        throw ConfigError("injection config: concat mode takes no injection layers");
}

bool InjectionConfig::injects_at(int layer) const {
    return std::find(layers.begin(), layers.end(), layer) != layers.end();
}

std::vector<int> top_k_layers(int num_layers, int k) {
    std::vector<int> out;
    for (int l = std::max(1, num_layers - k + 1); l <= num_layers; ++l) out.push_back(l);
    return out;
}

}  // namespace kformer
