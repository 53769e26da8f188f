#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace kformer {

// Lowercase, split on non-alphanumeric. No stemming, no stopwords. Shared by
// the retriever and the model so scores and inputs agree on token identity.
std::vector<std::string> tokenize(const std::string& text);

// Word-level vocabulary with fixed special tokens. Unknown words map to
// [UNK].
class Vocab {
  public:
    static constexpr int kCls = 0;
    static constexpr int kSep = 1;
    static constexpr int kUnk = 2;

    Vocab();
    // Specials followed by `words` in order; duplicates rejected.
    explicit Vocab(const std::vector<std::string>& words);

    int size() const { return static_cast<int>(words_.size()); }
    const std::string& word(int id) const { return words_[static_cast<size_t>(id)]; }
    const std::vector<std::string>& words() const { return words_; }

    int add(const std::string& w);  // existing id if already present
    int id(const std::string& w) const;  // kUnk if absent

    std::vector<int> encode_tokens(const std::vector<std::string>& tokens) const;
    std::vector<int> encode_text(const std::string& text) const;

  private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace kformer
