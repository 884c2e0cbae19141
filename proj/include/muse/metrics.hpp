#pragma once

#include <Eigen/Core>
#include <array>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "muse/data.hpp"

namespace muse::metrics {

struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Corpus-level BLEU with clipped modified n-gram precision, brevity penalty
// and add-epsilon smoothing of zero precision orders. Returns (B1..Bk).
std::array<double, 4> bleu(const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references, int max_n = 4);

PRF rouge_n(const std::string& cand, const std::string& ref, int n);
PRF rouge_l(const std::string& cand, const std::string& ref);

// Corpus ROUGE = mean of per-sample F1.
double corpus_rouge_n(const std::vector<std::string>& cands, const std::vector<std::string>& refs, int n);
double corpus_rouge_l(const std::vector<std::string>& cands, const std::vector<std::string>& refs);

// F_mean = 10PR/(R+9P), penalty = 0.5*(chunks/matches)^3. Exact unigram
// alignment maximizing matches then minimizing chunks; optional synonym stage.
using SynonymCheck = std::function<bool(const std::string&, const std::string&)>;
double meteor(const std::string& cand, const std::string& ref, const SynonymCheck& synonyms = nullptr);
double corpus_meteor(const std::vector<std::string>& cands, const std::vector<std::string>& refs,
                     const SynonymCheck& synonyms = nullptr);

// Greedy token-embedding matching: P = mean max cosine from candidate tokens,
// R symmetric, F1 harmonic mean. No idf weighting.
using TokenEmbedder = std::function<Eigen::VectorXd(const std::string& token)>;
struct EmbeddingScore {
    PRF score;
    long long skipped = 0;  // empty-sentence pairs
};
EmbeddingScore embedding_score(const std::vector<std::string>& cands,
                               const std::vector<std::string>& refs,
                               const TokenEmbedder& embedder);

struct SentenceSimilarity {
    double mean_cosine = 0.0;
    long long degenerate = 0;  // zero-vector pairs excluded
};
SentenceSimilarity sentence_similarity(const std::vector<std::string>& cands,
                                       const std::vector<std::string>& refs);

struct SliceScores {
    long long count = 0;
    double b1 = 0, b2 = 0, b3 = 0, b4 = 0;
    double r1 = 0, r2 = 0, rl = 0;
    double meteor = 0;
    double emb_p = 0, emb_r = 0, emb_f1 = 0;
    double sent_cosine = 0;
};

struct MetricReport {
    std::optional<SliceScores> overall, ocr, non_ocr;
    std::vector<std::string> notes;
};

struct Generation {
    std::string id;
    std::string text;
};

// One generation per test-split sample, matched by id.
MetricReport evaluate_corpus(const std::vector<Generation>& gens, const Dataset& ds,
                             Split split = Split::Test);

}  // namespace muse::metrics
