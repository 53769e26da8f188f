#include "kformer/injection.hpp"

#include <algorithm>

#include "kformer/errors.hpp"

namespace kformer {

namespace detail {
Value attention_core(Tape& t, Value h, EncoderLayerParams& layer, int num_heads,
                     const Value* phi_k, const Value* phi_v, AttentionProbe* probe);
}

Value embed_knowledge(Tape& t, Parameter& embedding, const std::vector<int>& ids,
                      int max_knowledge_len) {
    if (ids.empty()) throw DataError("embed_knowledge: empty token list");
    if (static_cast<int>(ids.size()) > max_knowledge_len)
        throw DataError("embed_knowledge: knowledge length " + std::to_string(ids.size()) +
                        " exceeds limit " + std::to_string(max_knowledge_len));
    std::vector<int64_t> rows(ids.begin(), ids.end());
    return t.mean_rows(t.gather_rows(t.leaf(embedding), std::move(rows)));
}

Tensor embed_knowledge_raw(const Tensor& embedding, const std::vector<int>& ids) {
    if (ids.empty()) throw DataError("embed_knowledge: empty token list");
    const int64_t d = embedding.cols();
    Tensor out = Tensor::zeros({d});
    for (int id : ids) {
        if (id < 0 || id >= embedding.rows())
            throw DataError("embed_knowledge: token id " + std::to_string(id) + " out of range");
        for (int64_t j = 0; j < d; ++j)
            out.data[static_cast<size_t>(j)] += embedding.at(id, j);
    }
    for (double& v : out.data) v /= static_cast<double>(ids.size());
    return out;
}

std::pair<Value, Value> project_knowledge(Tape& t, Value k, LayerProjection& proj) {
    return {t.matmul_nt(k, t.leaf(proj.w_k)), t.matmul_nt(k, t.leaf(proj.w_v))};
}

Value injected_ffn(Tape& t, Value h, EncoderLayerParams& layer, Value phi_k, Value phi_v,
                   int layer_index, ActivationSink* sink) {
    const int64_t d_m = layer.ffn_key.value.rows();
    const int64_t n_slots = t.value(phi_k).rows();
    Value keys = t.concat_rows({t.leaf(layer.ffn_key), phi_k});
    Value values = t.concat_rows({t.leaf(layer.ffn_value), phi_v});
    Value act = t.gelu(t.matmul_nt(h, keys));
    if (sink != nullptr) {
        const Tensor& a = t.value(act);
        LayerActivation cap;
        cap.layer = layer_index;
        cap.values = Tensor::zeros({a.rows(), n_slots});
        for (int64_t i = 0; i < a.rows(); ++i)
            for (int64_t j = 0; j < n_slots; ++j) cap.values.at(i, j) = a.at(i, d_m + j);
        sink->push_back(std::move(cap));
    }
    return t.matmul(act, values);
}

Value injected_attention(Tape& t, Value h, EncoderLayerParams& layer, Value phi_k, Value phi_v,
                         int num_heads, AttentionProbe* probe) {
    return detail::attention_core(t, h, layer, num_heads, &phi_k, &phi_v, probe);
}

std::vector<TokenSequence> build_concat_input(const Vocab& vocab, const TokenSequence& question,
                                              const std::vector<TokenSequence>& options,
                                              const std::vector<std::string>& knowledge_texts,
                                              int max_seq_len) {
    std::string joined;
    for (const auto& s : knowledge_texts) {
        if (!joined.empty()) joined += ' ';
        joined += s;
    }
    const std::vector<int> k_ids = vocab.encode_text(joined);

    std::vector<TokenSequence> out;
    out.reserve(options.size());
    for (const auto& opt : options) {
        const int64_t fixed = 3 + opt.length();  // [CLS], two [SEP], option
        if (fixed > max_seq_len)
            throw DataError("concat input: option alone exceeds max_seq_len");
        int64_t budget = max_seq_len - fixed;
        const int64_t q_keep = std::min<int64_t>(question.length(), budget);
        budget -= q_keep;
        const int64_t k_keep = std::min<int64_t>(static_cast<int64_t>(k_ids.size()), budget);

        TokenSequence seq;
        seq.ids.push_back(Vocab::kCls);
        seq.ids.insert(seq.ids.end(), k_ids.begin(), k_ids.begin() + k_keep);
        seq.ids.push_back(Vocab::kSep);
        seq.ids.insert(seq.ids.end(), question.ids.begin(), question.ids.begin() + q_keep);
        seq.ids.push_back(Vocab::kSep);
        seq.ids.insert(seq.ids.end(), opt.ids.begin(), opt.ids.end());
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace kformer
