#pragma once

#include <map>
#include <string>
#include <vector>

#include "kformer/injection.hpp"
#include "kformer/tensor.hpp"
#include "kformer/vocab.hpp"

namespace kformer::retrieval {

struct Document {
    int doc_id = 0;
    std::string text;
    std::vector<std::string> tokens;
};

// doc_ids unique and dense from 0.
struct Corpus {
    std::vector<Document> documents;
};

Corpus make_corpus(const std::vector<std::string>& texts);
// JSON-lines, one {"id": int, "text": string} per line.
Corpus load_corpus_jsonl(const std::string& path);
void save_corpus_jsonl(const Corpus& corpus, const std::string& path);

struct Posting {
    int doc_id = 0;
    int term_freq = 0;
};

struct InvertedIndex {
    std::map<std::string, std::vector<Posting>> postings;  // sorted term -> postings by doc_id
    std::vector<int> doc_len;
    std::vector<std::string> doc_text;
    double avg_doc_len = 0.0;
    int num_docs = 0;
    double k1 = 1.2;
    double b = 0.75;
};

struct KnowledgeCandidate {
    int doc_id = 0;
    std::string text;
    double sparse_score = 0.0;
    double dense_score = 0.0;
    bool has_dense = false;
};

InvertedIndex build_index(const Corpus& corpus, double k1 = 1.2, double b = 0.75);

// Okapi BM25 with IDF(t) = ln(1 + (N - df + 0.5)/(df + 0.5)); query terms
// absent from the document contribute 0, repeated query terms contribute per
// occurrence.
double bm25_score(const InvertedIndex& index, const std::vector<std::string>& query_tokens,
                  int doc_id);

// Top-M by BM25, descending score, ties broken by ascending doc_id. Only
// documents with positive score are returned.
std::vector<KnowledgeCandidate> sparse_retrieve(const InvertedIndex& index,
                                                const std::vector<std::string>& query_tokens,
                                                int m);

// Re-scores candidates by inner product between the query embedding and the
// knowledge embedding of the candidate's text; keeps the top N.
std::vector<KnowledgeCandidate> dense_rerank(const Tensor& query_emb,
                                             std::vector<KnowledgeCandidate> candidates,
                                             const KnowledgeEmbedder& embedder,
                                             const Vocab& vocab, int n);

// Both stages composed; the query embedding is the average knowledge
// embedding of the query tokens.
std::vector<KnowledgeCandidate> retrieve(const InvertedIndex& index,
                                         const KnowledgeEmbedder& embedder, const Vocab& vocab,
                                         const std::string& query_text, int m, int n);

// Versioned JSON container; reload reproduces scores exactly.
void save_index(const InvertedIndex& index, const std::string& path);
InvertedIndex load_index(const std::string& path);

}  // namespace kformer::retrieval
