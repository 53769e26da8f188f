#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kformer/encoder_ops.hpp"
#include "kformer/graph.hpp"
#include "kformer/injection.hpp"
#include "kformer/model_types.hpp"
#include "kformer/retrieval.hpp"
#include "kformer/vocab.hpp"

namespace kformer {

// Transformer encoder with a multiple-choice scoring head and optional
// knowledge-injection machinery. Pre-norm residual blocks; at injected
// layers the FFN (or attention) is replaced by its expanded form.
//
// Inference may share a model read-only across threads; training mutates
// parameters and is single-threaded.
class Model {
  public:
    Model(ModelConfig cfg, Vocab vocab, InjectionConfig icfg);

    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    const ModelConfig& config() const { return cfg_; }
    const Vocab& vocab() const { return vocab_; }
    const InjectionConfig& injection_config() const { return icfg_; }

    // Deterministic order; the same order is used for initialization draws.
    std::vector<Parameter*> parameters();
    Parameter& param(const std::string& name);  // DataError if unknown

    EncoderLayerParams& layer(int l);  // 1-based
    bool has_knowledge_embedder() const { return knowledge_.has_value(); }
    KnowledgeEmbedder& knowledge_embedder();
    LayerProjection& projection(int layer);  // ConfigError if not an injected layer

    // Token + learned position embedding, one row per token.
    Value embed_tokens(Tape& t, const TokenSequence& seq);

    // Runs all layers; `knowledge_ids` supplies the token ids of the N
    // retrieved knowledge texts for the injection slots (ignored when the
    // fusion mode takes none). Passing nullptr or an empty list encodes
    // without injection.
    Value encode(Tape& t, const TokenSequence& seq,
                 const std::vector<std::vector<int>>* knowledge_ids = nullptr,
                 ActivationSink* sink = nullptr, AttentionProbe* probe = nullptr);

    // Per option: [CLS] Q [SEP] A (injection modes) or [CLS] K [SEP] Q
    // [SEP] A (concat); linear head on the [CLS] row gives the logit.
    Value mcq_logits(Tape& t, const TokenSequence& question,
                     const std::vector<TokenSequence>& options,
                     const std::vector<retrieval::KnowledgeCandidate>& knowledge,
                     ActivationSink* sink = nullptr);
    std::vector<double> mcq_score(const TokenSequence& question,
                                  const std::vector<TokenSequence>& options,
                                  const std::vector<retrieval::KnowledgeCandidate>& knowledge);
    Value mcq_loss(Tape& t, const TokenSequence& question,
                   const std::vector<TokenSequence>& options,
                   const std::vector<retrieval::KnowledgeCandidate>& knowledge, int answer_index);

  private:
    void init_params();
    TokenSequence build_qa_input(const TokenSequence& question, const TokenSequence& option) const;

    ModelConfig cfg_;
    Vocab vocab_;
    InjectionConfig icfg_;

    Parameter tok_emb_, pos_emb_, head_;
    std::vector<EncoderLayerParams> layers_;
    std::optional<KnowledgeEmbedder> knowledge_;
    std::map<int, LayerProjection> projections_;
};

}  // namespace kformer
