#pragma once

// Test-only brute-force rankings, kept independent of the retrieval module's
// inverted-index code path: scores come straight from the formula over raw
// token lists, rankings from a full sort.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "kformer/retrieval.hpp"
#include "kformer/rng.hpp"

namespace kformer::test_oracles {

inline double bm25_oracle(const retrieval::Corpus& corpus, const std::vector<std::string>& query,
                          int doc, double k1, double b) {
    const int n_docs = static_cast<int>(corpus.documents.size());
    double total_len = 0.0;
    for (const auto& d : corpus.documents) total_len += static_cast<double>(d.tokens.size());
    const double avg = total_len / n_docs;
    const auto& tokens = corpus.documents[static_cast<size_t>(doc)].tokens;
    double score = 0.0;
    for (const auto& term : query) {
        int tf = 0;
        for (const auto& t : tokens)
            if (t == term) ++tf;
        if (tf == 0) continue;
        int df = 0;
        for (const auto& d : corpus.documents)
            if (std::find(d.tokens.begin(), d.tokens.end(), term) != d.tokens.end()) ++df;
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double dl = static_cast<double>(tokens.size());
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avg));
    }
    return score;
}

inline std::vector<retrieval::KnowledgeCandidate> sparse_oracle(
    const retrieval::Corpus& corpus, const std::vector<std::string>& query, int m, double k1,
    double b) {
    std::vector<retrieval::KnowledgeCandidate> all;
    for (const auto& d : corpus.documents) {
        const double s = bm25_oracle(corpus, query, d.doc_id, k1, b);
        if (s > 0.0) all.push_back({d.doc_id, d.text, s, 0.0, false});
    }
    std::sort(all.begin(), all.end(),
              [](const retrieval::KnowledgeCandidate& a, const retrieval::KnowledgeCandidate& b2) {
                  if (a.sparse_score != b2.sparse_score) return a.sparse_score > b2.sparse_score;
                  return a.doc_id < b2.doc_id;
              });
    if (static_cast<int>(all.size()) > m) all.resize(static_cast<size_t>(m));
    return all;
}

inline const std::vector<std::string>& oracle_lexicon() {
    static const std::vector<std::string> lexicon = {"apple", "banana", "cat",  "dog",  "east",
                                                     "fog",   "gate",   "hill", "iron", "jam",
                                                     "zebra"};
    return lexicon;
}

inline retrieval::Corpus random_corpus(SplitMix64& rng, int n_docs, int max_len = 12) {
    std::vector<std::string> texts;
    for (int i = 0; i < n_docs; ++i) {
        std::string text;
        const int len = 1 + static_cast<int>(rng.next_below(static_cast<uint64_t>(max_len)));
        for (int j = 0; j < len; ++j) {
            if (j) text += ' ';
            text += oracle_lexicon()[rng.next_below(oracle_lexicon().size() - 1)];
        }
        texts.push_back(text);
    }
    return retrieval::make_corpus(texts);
}

inline std::vector<std::string> random_query(SplitMix64& rng, int len) {
    std::vector<std::string> q;
    for (int i = 0; i < len; ++i) q.push_back(oracle_lexicon()[rng.next_below(oracle_lexicon().size())]);
    return q;
}

}  // namespace kformer::test_oracles
