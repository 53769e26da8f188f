#include "kformer/vocab.hpp"

#include <cctype>

#include "kformer/errors.hpp"

namespace kformer {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

Vocab::Vocab() {
    words_ = {"[CLS]", "[SEP]", "[UNK]"};
    for (size_t i = 0; i < words_.size(); ++i) index_[words_[i]] = static_cast<int>(i);
}

Vocab::Vocab(const std::vector<std::string>& words) : Vocab() {
    for (const auto& w : words) {
        if (index_.count(w)) throw DataError("vocab: duplicate word '" + w + "'");
        index_[w] = static_cast<int>(words_.size());
        words_.push_back(w);
    }
}

int Vocab::add(const std::string& w) {
    auto it = index_.find(w);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(words_.size());
    index_[w] = id;
    words_.push_back(w);
    return id;
}

int Vocab::id(const std::string& w) const {
    auto it = index_.find(w);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocab::encode_tokens(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(id(t));
    return ids;
}

std::vector<int> Vocab::encode_text(const std::string& text) const {
    return encode_tokens(tokenize(text));
}

}  // namespace kformer
