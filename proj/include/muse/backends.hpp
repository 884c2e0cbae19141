#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace muse {

struct ImageFeatureConfig {
    int q = 49;       // region count
    int d_i = 512;    // region vector width
};

// q x d_i region features. Stub: values in [-1,1] seeded by a stable hash of
// the image bytes (or of the reference when the file is absent). Inline
// features pass through unchanged after a width check.
Eigen::MatrixXd extract_image_features(const std::string& image_ref,
                                       const std::optional<Eigen::MatrixXd>& inline_features,
                                       const ImageFeatureConfig& cfg);

// Platform-stable 64-bit FNV-1a.
std::uint64_t stable_hash(const std::string& bytes);

// Deterministic hashed token vector (bag-of-words basis for the sentence and
// token embedding stubs).
Eigen::VectorXd hashed_token_vector(const std::string& token, int dim = 64);

struct SentenceEmbedding {
    Eigen::VectorXd vec;     // L2 norm 1, or zero when degenerate
    bool degenerate = false; // empty text
};

SentenceEmbedding sentence_embedding(const std::string& text, int dim = 64);

enum class PosTag { Noun, Verb, Adj, Adv, Other };

std::string pos_tag_name(PosTag t);

class PosTagger {
public:
    PosTagger();  // built-in lexicon
    void load_lexicon(const std::string& path);              // "word<TAB>tag" lines
    void add(const std::string& word, PosTag tag);
    std::vector<std::pair<std::string, PosTag>> tag(const std::string& text) const;
    PosTag tag_word(const std::string& word) const;

private:
    std::map<std::string, PosTag> lexicon_;
};

class SynonymLexicon {
public:
    SynonymLexicon();  // built-in pairs
    void load(const std::string& path);  // "tag<TAB>word1<TAB>word2" lines
    void add_pair(const std::string& a, const std::string& b, PosTag tag);
    std::set<std::string> synonyms(const std::string& word, PosTag tag) const;
    bool are_synonyms(const std::string& a, const std::string& b, PosTag tag) const;

private:
    std::map<std::pair<std::string, PosTag>, std::set<std::string>> table_;
};

}  // namespace muse
