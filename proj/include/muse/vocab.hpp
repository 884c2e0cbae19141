#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace muse {

// Word-level tokenization: lowercase, whitespace split, ASCII punctuation
// separated as standalone tokens. Non-ASCII bytes pass through as word chars.
std::vector<std::string> tokenize(const std::string& text);

// Inverse of tokenize up to normalization: tokens joined by single spaces.
std::string join_tokens(const std::vector<std::string>& tokens);

struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    std::vector<std::string> id_to_token;  // line number = id
    std::unordered_map<std::string, int> token_to_id;

    Vocabulary();

    int size() const { return static_cast<int>(id_to_token.size()); }
    int lookup(const std::string& token) const;         // UNK on miss
    const std::string& token(int id) const;             // throws on bad id

    void save(const std::string& path) const;
    static Vocabulary load(const std::string& path);
};

struct TokenSeq {
    std::vector<int> ids;
    int length_unpadded = 0;  // includes BOS/EOS
};

// Frequency-ordered vocabulary from raw texts (freq desc, then lexicographic).
Vocabulary build_vocabulary(const std::vector<std::string>& texts, int min_freq = 1);

TokenSeq encode(const std::string& text, const Vocabulary& vocab, int max_len);
std::string decode(const TokenSeq& seq, const Vocabulary& vocab);

}  // namespace muse
