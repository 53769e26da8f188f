#include "kformer/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <json.hpp>

#include "kformer/errors.hpp"

namespace kformer::retrieval {

using nlohmann::json;

Corpus make_corpus(const std::vector<std::string>& texts) {
    Corpus c;
    c.documents.reserve(texts.size());
    for (size_t i = 0; i < texts.size(); ++i)
        c.documents.push_back({static_cast<int>(i), texts[i], tokenize(texts[i])});
    return c;
}

Corpus load_corpus_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("corpus: cannot open '" + path + "'");
    Corpus c;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j.contains("text") ||
            !j["id"].is_number_integer() || !j["text"].is_string())
            throw DataError("corpus: malformed JSONL at line " + std::to_string(line_no));
        const int id = j["id"].get<int>();
        const std::string text = j["text"].get<std::string>();
        if (id != static_cast<int>(c.documents.size()))
            throw DataError("corpus: doc ids must be dense from 0; got " + std::to_string(id) +
                            " at line " + std::to_string(line_no));
        c.documents.push_back({id, text, tokenize(text)});
    }
    if (c.documents.empty()) throw DataError("corpus: empty corpus in '" + path + "'");
    return c;
}

void save_corpus_jsonl(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("corpus: cannot write '" + path + "'");
    for (const auto& d : corpus.documents) {
        json j{{"id", d.doc_id}, {"text", d.text}};
        out << j.dump() << '\n';
    }
}

InvertedIndex build_index(const Corpus& corpus, double k1, double b) {
    if (corpus.documents.empty()) throw DataError("build_index: empty corpus");
    InvertedIndex idx;
    idx.k1 = k1;
    idx.b = b;
    idx.num_docs = static_cast<int>(corpus.documents.size());
    idx.doc_len.resize(corpus.documents.size());
    idx.doc_text.resize(corpus.documents.size());
    int64_t total_len = 0;
    for (const auto& doc : corpus.documents) {
        idx.doc_len[static_cast<size_t>(doc.doc_id)] = static_cast<int>(doc.tokens.size());
        idx.doc_text[static_cast<size_t>(doc.doc_id)] = doc.text;
        total_len += static_cast<int64_t>(doc.tokens.size());
        std::map<std::string, int> freq;
        for (const auto& t : doc.tokens) ++freq[t];
        for (const auto& [term, tf] : freq) idx.postings[term].push_back({doc.doc_id, tf});
    }
    // documents are visited in doc_id order, so postings arrive sorted
    idx.avg_doc_len = static_cast<double>(total_len) / static_cast<double>(idx.num_docs);
    return idx;
}

namespace {

double idf(const InvertedIndex& index, int df) {
    return std::log(1.0 + (static_cast<double>(index.num_docs) - df + 0.5) / (df + 0.5));
}

double tf_component(const InvertedIndex& index, int tf, int doc_len) {
    const double norm = index.k1 * (1.0 - index.b + index.b * doc_len / index.avg_doc_len);
    return tf * (index.k1 + 1.0) / (tf + norm);
}

}  // namespace

double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  int doc_id) {
    if (doc_id < 0 || doc_id >= index.num_docs)
        throw DataError("bm25_score: doc_id " + std::to_string(doc_id) + " not in index");
    double score = 0.0;
    for (const auto& term : query_tokens) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const auto& plist = it->second;
        auto pit = std::lower_bound(plist.begin(), plist.end(), doc_id,
                                    [](const Posting& p, int id) { return p.doc_id < id; });
        if (pit == plist.end() || pit->doc_id != doc_id) continue;
        score += idf(index, static_cast<int>(plist.size())) *
                 tf_component(index, pit->term_freq, index.doc_len[static_cast<size_t>(doc_id)]);
    }
    return score;
}

std::vector<KnowledgeCandidate> sparse_retrieve(const InvertedIndex& index,
                                                const std::vector<std::string>& query_tokens,
                                                int m) {
    if (m < 1) throw DataError("sparse_retrieve: M must be >= 1");
    std::unordered_map<int, double> acc;
    for (const auto& term : query_tokens) {
        auto it = index.postings.find(term);
        if (it == index.postings.end()) continue;
        const double w = idf(index, static_cast<int>(it->second.size()));
        for (const Posting& p : it->second)
            acc[p.doc_id] += w * tf_component(index, p.term_freq, index.doc_len[static_cast<size_t>(p.doc_id)]);
    }
    std::vector<KnowledgeCandidate> cands;
    cands.reserve(acc.size());
    for (const auto& [doc, score] : acc) {
        if (score > 0.0)
            cands.push_back({doc, index.doc_text[static_cast<size_t>(doc)], score, 0.0, false});
    }
    std::sort(cands.begin(), cands.end(), [](const KnowledgeCandidate& a, const KnowledgeCandidate& b) {
        if (a.sparse_score != b.sparse_score) return a.sparse_score > b.sparse_score;
        return a.doc_id < b.doc_id;
    });
    if (static_cast<int>(cands.size()) > m) cands.resize(static_cast<size_t>(m));
    return cands;
}

std::vector<KnowledgeCandidate> dense_rerank(const Tensor& query_emb,
                                             std::vector<KnowledgeCandidate> candidates,
                                             const KnowledgeEmbedder& embedder,
                                             const Vocab& vocab, int n) {
    for (auto& c : candidates) {
        const std::vector<int> ids = vocab.encode_text(c.text);
        const Tensor emb = embed_knowledge_raw(embedder.embedding.value, ids);
        double dot = 0.0;
        for (int64_t j = 0; j < emb.numel(); ++j)
            dot += query_emb.data[static_cast<size_t>(j)] * emb.data[static_cast<size_t>(j)];
        c.dense_score = dot;
        c.has_dense = true;
    }
    std::sort(candidates.begin(), candidates.end(),
              [](const KnowledgeCandidate& a, const KnowledgeCandidate& b) {
                  if (a.dense_score != b.dense_score) return a.dense_score > b.dense_score;
                  return a.doc_id < b.doc_id;
              });
    if (static_cast<int>(candidates.size()) > n) candidates.resize(static_cast<size_t>(n));
    return candidates;
}

std::vector<KnowledgeCandidate> retrieve(const InvertedIndex& index,
                                         const KnowledgeEmbedder& embedder, const Vocab& vocab,
                                         const std::string& query_text, int m, int n) {
    const std::vector<std::string> q_tokens = tokenize(query_text);
    std::vector<KnowledgeCandidate> cands = sparse_retrieve(index, q_tokens, m);
    if (cands.empty()) return cands;
    const Tensor q_emb = embed_knowledge_raw(embedder.embedding.value, vocab.encode_tokens(q_tokens));
    return dense_rerank(q_emb, std::move(cands), embedder, vocab, n);
}

void save_index(const InvertedIndex& index, const std::string& path) {
    json j;
    j["format"] = "kformer-index";
    j["version"] = 1;
    j["k1"] = index.k1;
    j["b"] = index.b;
    j["doc_len"] = index.doc_len;
    j["doc_text"] = index.doc_text;
    json posts = json::object();
    for (const auto& [term, plist] : index.postings) {
        json arr = json::array();
        for (const Posting& p : plist) arr.push_back({p.doc_id, p.term_freq});
        posts[term] = std::move(arr);
    }
    j["postings"] = std::move(posts);
    std::ofstream out(path);
    if (!out) throw DataError("index: cannot write '" + path + "'");
    out << j.dump() << '\n';
}

InvertedIndex load_index(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("index: cannot open '" + path + "'");
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw DataError("index: malformed JSON in '" + path + "'");
    if (j.value("format", "") != "kformer-index")
        throw DataError("index: '" + path + "' is not a kformer index");
    if (j.value("version", -1) != 1)
        throw DataError("index: unsupported version " + std::to_string(j.value("version", -1)));
    InvertedIndex idx;
    idx.k1 = j["k1"].get<double>();
    idx.b = j["b"].get<double>();
    idx.doc_len = j["doc_len"].get<std::vector<int>>();
    idx.doc_text = j["doc_text"].get<std::vector<std::string>>();
    idx.num_docs = static_cast<int>(idx.doc_len.size());
    int64_t total = 0;
    for (int l : idx.doc_len) total += l;
    idx.avg_doc_len = static_cast<double>(total) / static_cast<double>(idx.num_docs);
    for (const auto& [term, arr] : j["postings"].items()) {
        std::vector<Posting> plist;
        for (const auto& pair : arr) plist.push_back({pair[0].get<int>(), pair[1].get<int>()});
        idx.postings[term] = std::move(plist);
    }
    return idx;
}

}  // namespace kformer::retrieval
