#include "kformer/model.hpp"

#include <algorithm>

#include "kformer/errors.hpp"
#include "kformer/rng.hpp"

namespace kformer {

namespace {
constexpr double kInitStd = 0.02;
// Offsetting the injection stream keeps encoder draws identical whether or
// not injection parameters exist.
constexpr uint64_t kInjectionStreamSalt = 0x6b666f726d657221ULL;

Tensor normal_tensor(SplitMix64& rng, std::vector<int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = kInitStd * rng.next_normal();
    return t;
}
}  // namespace

Model::Model(ModelConfig cfg, Vocab vocab, InjectionConfig icfg)
    : cfg_(cfg), vocab_(std::move(vocab)), icfg_(std::move(icfg)) {
    cfg_.validate();
    icfg_.validate(cfg_.num_layers);
    if (vocab_.size() > cfg_.vocab_size)
        throw ConfigError("model: vocabulary (" + std::to_string(vocab_.size()) +
                          " words) exceeds vocab_size " + std::to_string(cfg_.vocab_size));
    init_params();
}

void Model::init_params() {
    const int64_t d = cfg_.hidden;
    const int64_t dm = cfg_.intermediate;

    SplitMix64 rng(cfg_.seed);
    tok_emb_ = Parameter("embed.token", normal_tensor(rng, {cfg_.vocab_size, d}));
    pos_emb_ = Parameter("embed.pos", normal_tensor(rng, {cfg_.max_seq_len, d}));
    layers_.clear();
    layers_.reserve(static_cast<size_t>(cfg_.num_layers));
    for (int l = 1; l <= cfg_.num_layers; ++l) {
        const std::string p = "layer." + std::to_string(l) + ".";
        EncoderLayerParams lp;
        lp.wq = Parameter(p + "attn.wq", normal_tensor(rng, {d, d}));
        lp.wk = Parameter(p + "attn.wk", normal_tensor(rng, {d, d}));
        lp.wv = Parameter(p + "attn.wv", normal_tensor(rng, {d, d}));
        lp.wo = Parameter(p + "attn.wo", normal_tensor(rng, {d, d}));
        lp.ffn_key = Parameter(p + "ffn.key", normal_tensor(rng, {dm, d}));
        lp.ffn_value = Parameter(p + "ffn.value", normal_tensor(rng, {dm, d}));
        lp.norm1_gamma = Parameter(p + "norm1.gamma", Tensor::full({d}, 1.0));
        lp.norm1_beta = Parameter(p + "norm1.beta", Tensor::zeros({d}));
        lp.norm2_gamma = Parameter(p + "norm2.gamma", Tensor::full({d}, 1.0));
        lp.norm2_beta = Parameter(p + "norm2.beta", Tensor::zeros({d}));
        layers_.push_back(std::move(lp));
    }
    head_ = Parameter("head.weight", normal_tensor(rng, {d, 1}));

    knowledge_.reset();
    projections_.clear();
    if (icfg_.mode == FusionMode::kFfn || icfg_.mode == FusionMode::kAttention ||
        icfg_.mode == FusionMode::kConcat) {
        knowledge_ = KnowledgeEmbedder{Parameter("knowledge.embed", tok_emb_.value)};
        SplitMix64 irng(cfg_.seed ^ kInjectionStreamSalt);
        if (icfg_.mode != FusionMode::kConcat) {
            for (int l : icfg_.layers) {
                const std::string p = "inject." + std::to_string(l) + ".";
                LayerProjection proj;
                proj.w_k = Parameter(p + "wk", normal_tensor(irng, {d, d}));
                proj.w_v = Parameter(p + "wv", normal_tensor(irng, {d, d}));
                projections_.emplace(l, std::move(proj));
            }
        }
    }
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out{&tok_emb_, &pos_emb_};
    for (auto& lp : layers_) {
        out.push_back(&lp.wq);
        out.push_back(&lp.wk);
        out.push_back(&lp.wv);
        out.push_back(&lp.wo);
        out.push_back(&lp.ffn_key);
        out.push_back(&lp.ffn_value);
        out.push_back(&lp.norm1_gamma);
        out.push_back(&lp.norm1_beta);
        out.push_back(&lp.norm2_gamma);
        out.push_back(&lp.norm2_beta);
    }
    out.push_back(&head_);
    if (knowledge_.has_value()) out.push_back(&knowledge_->embedding);
    for (auto& [l, proj] : projections_) {
        out.push_back(&proj.w_k);
        out.push_back(&proj.w_v);
    }
    return out;
}

Parameter& Model::param(const std::string& name) {
    for (Parameter* p : parameters())
        if (p->name == name) return *p;
    throw DataError("model: unknown parameter '" + name + "'");
}

EncoderLayerParams& Model::layer(int l) {
    if (l < 1 || l > cfg_.num_layers)
        throw ConfigError("model: layer " + std::to_string(l) + " outside [1," +
                          std::to_string(cfg_.num_layers) + "]");
    return layers_[static_cast<size_t>(l - 1)];
}

KnowledgeEmbedder& Model::knowledge_embedder() {
    if (!knowledge_.has_value())
        throw ConfigError("model: no knowledge embedder in mode " + to_string(icfg_.mode));
    return *knowledge_;
}

LayerProjection& Model::projection(int layer) {
    auto it = projections_.find(layer);
    if (it == projections_.end())
        throw ConfigError("model: no knowledge projection for layer " + std::to_string(layer));
    return it->second;
}

Value Model::embed_tokens(Tape& t, const TokenSequence& seq) {
    if (seq.ids.empty()) throw DataError("embed_tokens: empty sequence");
    if (seq.length() > cfg_.max_seq_len)
        throw DataError("embed_tokens: sequence length " + std::to_string(seq.length()) +
                        " exceeds max_seq_len " + std::to_string(cfg_.max_seq_len));
    std::vector<int64_t> rows;
    rows.reserve(seq.ids.size());
    for (int id : seq.ids) {
        if (id < 0 || id >= cfg_.vocab_size)
            throw DataError("embed_tokens: token id " + std::to_string(id) +
                            " outside vocabulary of size " + std::to_string(cfg_.vocab_size));
        rows.push_back(id);
    }
    Value tok = t.gather_rows(t.leaf(tok_emb_), std::move(rows));
    Value pos = t.slice_rows(t.leaf(pos_emb_), 0, seq.length());
    return t.add(tok, pos);
}

Value Model::encode(Tape& t, const TokenSequence& seq,
                    const std::vector<std::vector<int>>* knowledge_ids, ActivationSink* sink,
                    AttentionProbe* probe) {
    const bool slots_wanted = (icfg_.mode == FusionMode::kFfn || icfg_.mode == FusionMode::kAttention) &&
                              !icfg_.layers.empty() && knowledge_ids != nullptr &&
                              !knowledge_ids->empty();
    Value kmat;
    if (slots_wanted) {
        std::vector<Value> rows;
        rows.reserve(knowledge_ids->size());
        for (const auto& ids : *knowledge_ids)
            rows.push_back(embed_knowledge(t, knowledge_embedder().embedding, ids, cfg_.max_seq_len));
        kmat = t.concat_rows(rows);
    }

    Value x = embed_tokens(t, seq);
    for (int l = 1; l <= cfg_.num_layers; ++l) {
        EncoderLayerParams& lp = layers_[static_cast<size_t>(l - 1)];
        Value xn = t.layer_norm(x, t.leaf(lp.norm1_gamma), t.leaf(lp.norm1_beta));
        Value att;
        if (slots_wanted && icfg_.mode == FusionMode::kAttention && icfg_.injects_at(l)) {
            auto [phi_k, phi_v] = project_knowledge(t, kmat, projection(l));
            att = injected_attention(t, xn, lp, phi_k, phi_v, cfg_.num_heads, probe);
        } else {
            att = self_attention(t, xn, lp, cfg_.num_heads, probe);
        }
        x = t.add(x, att);

        Value xn2 = t.layer_norm(x, t.leaf(lp.norm2_gamma), t.leaf(lp.norm2_beta));
        Value ff;
        if (slots_wanted && icfg_.mode == FusionMode::kFfn && icfg_.injects_at(l)) {
            auto [phi_k, phi_v] = project_knowledge(t, kmat, projection(l));
            ff = injected_ffn(t, xn2, lp, phi_k, phi_v, l, sink);
        } else {
            ff = ffn_forward(t, xn2, lp);
        }
        x = t.add(x, ff);
    }
    return x;
}

TokenSequence Model::build_qa_input(const TokenSequence& question, const TokenSequence& option) const {
    const int64_t fixed = 2 + option.length();  // [CLS], [SEP], option
    if (fixed > cfg_.max_seq_len) throw DataError("mcq: option alone exceeds max_seq_len");
    const int64_t q_keep = std::min<int64_t>(question.length(), cfg_.max_seq_len - fixed);
    TokenSequence seq;
    seq.ids.push_back(Vocab::kCls);
    seq.ids.insert(seq.ids.end(), question.ids.begin(), question.ids.begin() + q_keep);
    seq.ids.push_back(Vocab::kSep);
    seq.ids.insert(seq.ids.end(), option.ids.begin(), option.ids.end());
    return seq;
}

Value Model::mcq_logits(Tape& t, const TokenSequence& question,
                        const std::vector<TokenSequence>& options,
                        const std::vector<retrieval::KnowledgeCandidate>& knowledge,
                        ActivationSink* sink) {
    if (options.size() < 2) throw DataError("mcq: need at least 2 options");

    std::vector<TokenSequence> seqs;
    std::vector<std::vector<int>> knowledge_ids;
    const std::vector<std::vector<int>>* kids = nullptr;
    if (icfg_.mode == FusionMode::kConcat) {
        std::vector<std::string> texts;
        texts.reserve(knowledge.size());
        for (const auto& c : knowledge) texts.push_back(c.text);
        seqs = build_concat_input(vocab_, question, options, texts, cfg_.max_seq_len);
    } else {
        for (const auto& opt : options) seqs.push_back(build_qa_input(question, opt));
        if (icfg_.mode != FusionMode::kNone) {
            for (const auto& c : knowledge) knowledge_ids.push_back(vocab_.encode_text(c.text));
            if (!knowledge_ids.empty()) kids = &knowledge_ids;
        }
    }

    std::vector<Value> logits;
    logits.reserve(seqs.size());
    for (const auto& seq : seqs) {
        Value enc = encode(t, seq, kids, sink);
        Value cls = t.slice_rows(enc, 0, 1);
        logits.push_back(t.matmul(cls, t.leaf(head_)));
    }
    return t.stack_scalars(logits);
}

std::vector<double> Model::mcq_score(const TokenSequence& question,
                                     const std::vector<TokenSequence>& options,
                                     const std::vector<retrieval::KnowledgeCandidate>& knowledge) {
    Tape t;
    Value probs = t.softmax(mcq_logits(t, question, options, knowledge), 0);
    return t.value(probs).data;
}

Value Model::mcq_loss(Tape& t, const TokenSequence& question,
                      const std::vector<TokenSequence>& options,
                      const std::vector<retrieval::KnowledgeCandidate>& knowledge,
                      int answer_index) {
    if (answer_index < 0 || answer_index >= static_cast<int>(options.size()))
        throw DataError("mcq: answer index " + std::to_string(answer_index) + " out of range");
    return t.cross_entropy(mcq_logits(t, question, options, knowledge), answer_index);
}

}  // namespace kformer
