#include "muse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <unordered_map>

#include "muse/backends.hpp"
#include "muse/vocab.hpp"

namespace muse::metrics {

namespace {

using Tokens = std::vector<std::string>;

std::map<std::string, long long> ngram_counts(const Tokens& toks, int n) {
    std::map<std::string, long long> counts;
    if (static_cast<int>(toks.size()) < n) return counts;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string key;
        for (int j = 0; j < n; ++j) {
            if (j) key.push_back('\x1f');
            key += toks[i + j];
        }
        ++counts[key];
    }
    return counts;
}

long long lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::vector<long long>> dp(a.size() + 1, std::vector<long long>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

}  // namespace

std::array<double, 4> bleu(const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references, int max_n) {
    if (candidates.empty() || candidates.size() != references.size())
        throw std::invalid_argument("bleu: need a non-empty corpus with one reference per candidate");
    if (max_n < 1 || max_n > 4) throw std::invalid_argument("bleu: max_n must be in 1..4");
    constexpr double kEps = 1e-9;

    std::vector<long long> matched(max_n, 0), total(max_n, 0);
    long long cand_len = 0, ref_len = 0;
    for (size_t s = 0; s < candidates.size(); ++s) {
        Tokens c = tokenize(candidates[s]);
        Tokens r = tokenize(references[s]);
        cand_len += static_cast<long long>(c.size());
        ref_len += static_cast<long long>(r.size());
        for (int n = 1; n <= max_n; ++n) {
            auto cc = ngram_counts(c, n);
            auto rc = ngram_counts(r, n);
            for (const auto& [g, cnt] : cc) {
                total[n - 1] += cnt;
                auto it = rc.find(g);
                if (it != rc.end()) matched[n - 1] += std::min(cnt, it->second);  // clipping
            }
        }
    }

    const double bp = cand_len == 0 ? 0.0
                      : cand_len < ref_len
                          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len))
                          : 1.0;

    std::array<double, 4> out{0, 0, 0, 0};
    for (int k = 1; k <= max_n; ++k) {
        double log_sum = 0.0;
        for (int n = 1; n <= k; ++n) {
            const double p = total[n - 1] > 0
                                 ? static_cast<double>(matched[n - 1]) / static_cast<double>(total[n - 1])
                                 : 0.0;
            log_sum += std::log(std::max(p, kEps));
        }
        out[k - 1] = bp * std::exp(log_sum / k);
    }
    return out;
}

PRF rouge_n(const std::string& cand, const std::string& ref, int n) {
    Tokens c = tokenize(cand), r = tokenize(ref);
    auto cc = ngram_counts(c, n);
    auto rc = ngram_counts(r, n);
    long long overlap = 0, c_total = 0, r_total = 0;
    for (const auto& [g, cnt] : cc) {
        c_total += cnt;
        auto it = rc.find(g);
        if (it != rc.end()) overlap += std::min(cnt, it->second);
    }
    for (const auto& [g, cnt] : rc) r_total += cnt;
    PRF out;
    if (c_total == 0 || r_total == 0 || overlap == 0) return out;
    out.precision = static_cast<double>(overlap) / static_cast<double>(c_total);
    out.recall = static_cast<double>(overlap) / static_cast<double>(r_total);
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

PRF rouge_l(const std::string& cand, const std::string& ref) {
    Tokens c = tokenize(cand), r = tokenize(ref);
    PRF out;
    if (c.empty() || r.empty()) return out;
    const double lcs = static_cast<double>(lcs_length(c, r));
    if (lcs == 0.0) return out;
    out.precision = lcs / static_cast<double>(c.size());
    out.recall = lcs / static_cast<double>(r.size());
    out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

double corpus_rouge_n(const std::vector<std::string>& cands, const std::vector<std::string>& refs, int n) {
    if (cands.empty() || cands.size() != refs.size()) throw std::invalid_argument("rouge: corpus size mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < cands.size(); ++i) sum += rouge_n(cands[i], refs[i], n).f1;
    return sum / static_cast<double>(cands.size());
}

double corpus_rouge_l(const std::vector<std::string>& cands, const std::vector<std::string>& refs) {
    if (cands.empty() || cands.size() != refs.size()) throw std::invalid_argument("rouge: corpus size mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < cands.size(); ++i) sum += rouge_l(cands[i], refs[i]).f1;
    return sum / static_cast<double>(cands.size());
}

namespace {

struct Alignment {
    long long matches = 0;
    long long chunks = 0;
};

bool tokens_match(const std::string& a, const std::string& b, const SynonymCheck& syn) {
    return a == b || (syn && syn(a, b));
}

// Maximum bipartite matching size (Kuhn's augmenting paths).
long long max_match_count(const Tokens& c, const Tokens& r, const SynonymCheck& syn) {
    std::vector<int> match_r(r.size(), -1);
    std::function<bool(size_t, std::vector<bool>&)> try_kuhn = [&](size_t ci, std::vector<bool>& used) {
        for (size_t rj = 0; rj < r.size(); ++rj) {
            if (used[rj] || !tokens_match(c[ci], r[rj], syn)) continue;
            used[rj] = true;
            if (match_r[rj] < 0 || try_kuhn(static_cast<size_t>(match_r[rj]), used)) {
                match_r[rj] = static_cast<int>(ci);
                return true;
            }
        }
        return false;
    };
    long long total = 0;
    for (size_t ci = 0; ci < c.size(); ++ci) {
        std::vector<bool> used(r.size(), false);
        if (try_kuhn(ci, used)) ++total;
    }
    return total;
}

// Exact min-chunk search over maximum alignments (small sentences).
void min_chunk_search(const Tokens& c, const Tokens& r, const SynonymCheck& syn, size_t ci,
                      long long matched, long long target, std::vector<int>& assign,
                      long long& best_chunks) {
    const long long remaining = static_cast<long long>(c.size()) - static_cast<long long>(ci);
    if (matched + remaining < target) return;  // cannot reach the maximum any more
    if (ci == c.size()) {
        if (matched != target) return;
        long long chunks = 0;
        int prev_c = -2, prev_r = -2;
        for (size_t i = 0; i < assign.size(); ++i) {
            if (assign[i] < 0) continue;
            if (!(static_cast<int>(i) == prev_c + 1 && assign[i] == prev_r + 1)) ++chunks;
            prev_c = static_cast<int>(i);
            prev_r = assign[i];
        }
        best_chunks = std::min(best_chunks, chunks);
        return;
    }
    for (size_t rj = 0; rj < r.size(); ++rj) {
        if (!tokens_match(c[ci], r[rj], syn)) continue;
        bool taken = false;
        for (size_t k = 0; k < ci; ++k)
            if (assign[k] == static_cast<int>(rj)) taken = true;
        if (taken) continue;
        assign[ci] = static_cast<int>(rj);
        min_chunk_search(c, r, syn, ci + 1, matched + 1, target, assign, best_chunks);
    }
    assign[ci] = -1;
    min_chunk_search(c, r, syn, ci + 1, matched, target, assign, best_chunks);
}

// Greedy fallback: repeatedly consume the longest common contiguous run.
long long greedy_chunks(Tokens c, Tokens r, const SynonymCheck& syn) {
    std::vector<bool> cu(c.size(), false), ru(r.size(), false);
    long long chunks = 0;
    while (true) {
        size_t best_len = 0, best_i = 0, best_j = 0;
        for (size_t i = 0; i < c.size(); ++i) {
            for (size_t j = 0; j < r.size(); ++j) {
                size_t len = 0;
                while (i + len < c.size() && j + len < r.size() && !cu[i + len] && !ru[j + len] &&
                       tokens_match(c[i + len], r[j + len], syn))
                    ++len;
                if (len > best_len) {
                    best_len = len;
                    best_i = i;
                    best_j = j;
                }
            }
        }
        if (best_len == 0) break;
        for (size_t k = 0; k < best_len; ++k) {
            cu[best_i + k] = true;
            ru[best_j + k] = true;
        }
        ++chunks;
    }
    return chunks;
}

Alignment align(const Tokens& c, const Tokens& r, const SynonymCheck& syn) {
    Alignment a;
    a.matches = max_match_count(c, r, syn);
    if (a.matches == 0) return a;
    if (c.size() <= 8 && r.size() <= 8) {
        std::vector<int> assign(c.size(), -1);
        long long best = std::numeric_limits<long long>::max();
        min_chunk_search(c, r, syn, 0, 0, a.matches, assign, best);
        a.chunks = best;
    } else {
        a.chunks = greedy_chunks(c, r, syn);
    }
    return a;
}

}  // namespace

double meteor(const std::string& cand, const std::string& ref, const SynonymCheck& synonyms) {
    Tokens c = tokenize(cand), r = tokenize(ref);
    if (c.empty() || r.empty()) return 0.0;
    Alignment a = align(c, r, synonyms);
    if (a.matches == 0) return 0.0;
    const double p = static_cast<double>(a.matches) / static_cast<double>(c.size());
    const double rr = static_cast<double>(a.matches) / static_cast<double>(r.size());
    const double f_mean = 10.0 * p * rr / (rr + 9.0 * p);
    const double frag = static_cast<double>(a.chunks) / static_cast<double>(a.matches);
    return f_mean * (1.0 - 0.5 * frag * frag * frag);
}

double corpus_meteor(const std::vector<std::string>& cands, const std::vector<std::string>& refs,
                     const SynonymCheck& synonyms) {
    if (cands.empty() || cands.size() != refs.size())
        throw std::invalid_argument("meteor: corpus size mismatch");
    double sum = 0.0;
    for (size_t i = 0; i < cands.size(); ++i) sum += meteor(cands[i], refs[i], synonyms);
    return sum / static_cast<double>(cands.size());
}

namespace {

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double na = a.norm(), nb = b.norm();
    if (na < 1e-12 || nb < 1e-12) return 0.0;
    return a.dot(b) / (na * nb);
}

}  // namespace

EmbeddingScore embedding_score(const std::vector<std::string>& cands,
                               const std::vector<std::string>& refs, const TokenEmbedder& embedder) {
    if (cands.size() != refs.size()) throw std::invalid_argument("embedding_score: corpus size mismatch");
    EmbeddingScore out;
    double sp = 0, sr = 0, sf = 0;
    long long used = 0;
    for (size_t s = 0; s < cands.size(); ++s) {
        Tokens c = tokenize(cands[s]), r = tokenize(refs[s]);
        if (c.empty() || r.empty()) {
            ++out.skipped;
            continue;
        }
        std::vector<Eigen::VectorXd> ce, re;
        for (const auto& t : c) ce.push_back(embedder(t));
        for (const auto& t : r) re.push_back(embedder(t));
        double p = 0;
        for (const auto& cv : ce) {
            double best = 0;
            for (const auto& rv : re) best = std::max(best, cosine(cv, rv));
            p += best;
        }
        p /= static_cast<double>(ce.size());
        double rec = 0;
        for (const auto& rv : re) {
            double best = 0;
            for (const auto& cv : ce) best = std::max(best, cosine(cv, rv));
            rec += best;
        }
        rec /= static_cast<double>(re.size());
        const double f1 = (p + rec) > 0 ? 2.0 * p * rec / (p + rec) : 0.0;
        sp += p;
        sr += rec;
        sf += f1;
        ++used;
    }
    if (used > 0) {
        out.score.precision = sp / static_cast<double>(used);
        out.score.recall = sr / static_cast<double>(used);
        out.score.f1 = sf / static_cast<double>(used);
    }
    return out;
}

SentenceSimilarity sentence_similarity(const std::vector<std::string>& cands,
                                       const std::vector<std::string>& refs) {
    if (cands.size() != refs.size()) throw std::invalid_argument("sentence_similarity: corpus size mismatch");
    SentenceSimilarity out;
    double sum = 0;
    long long used = 0;
    for (size_t i = 0; i < cands.size(); ++i) {
        auto a = sentence_embedding(cands[i]);
        auto b = sentence_embedding(refs[i]);
        if (a.degenerate || b.degenerate) {
            ++out.degenerate;
            continue;
        }
        sum += cosine(a.vec, b.vec);
        ++used;
    }
    if (used > 0) out.mean_cosine = sum / static_cast<double>(used);
    return out;
}

namespace {

SliceScores score_slice(const std::vector<std::string>& cands, const std::vector<std::string>& refs) {
    SliceScores s;
    s.count = static_cast<long long>(cands.size());
    auto b = bleu(cands, refs);
    s.b1 = b[0];
    s.b2 = b[1];
    s.b3 = b[2];
    s.b4 = b[3];
    s.r1 = corpus_rouge_n(cands, refs, 1);
    s.r2 = corpus_rouge_n(cands, refs, 2);
    s.rl = corpus_rouge_l(cands, refs);
    s.meteor = corpus_meteor(cands, refs);
    auto emb = embedding_score(cands, refs, [](const std::string& t) { return hashed_token_vector(t); });
    s.emb_p = emb.score.precision;
    s.emb_r = emb.score.recall;
    s.emb_f1 = emb.score.f1;
    s.sent_cosine = sentence_similarity(cands, refs).mean_cosine;
    return s;
}

}  // namespace

MetricReport evaluate_corpus(const std::vector<Generation>& gens, const Dataset& ds, Split split) {
    std::unordered_map<std::string, const std::string*> gen_by_id;
    for (const auto& g : gens) {
        if (!gen_by_id.emplace(g.id, &g.text).second)
            throw std::invalid_argument("duplicate generation id \"" + g.id + "\"");
    }

    std::vector<std::string> all_c, all_r, ocr_c, ocr_r, non_c, non_r;
    for (const Sample* s : ds.in_split(split)) {
        auto it = gen_by_id.find(s->id);
        if (it == gen_by_id.end())
            throw std::invalid_argument("no generation for sample \"" + s->id + "\"");
        all_c.push_back(*it->second);
        all_r.push_back(s->explanation);
        if (s->is_ocr_sample) {
            ocr_c.push_back(*it->second);
            ocr_r.push_back(s->explanation);
        } else {
            non_c.push_back(*it->second);
            non_r.push_back(s->explanation);
        }
    }
    if (all_c.empty()) throw std::invalid_argument("evaluation split is empty");

    MetricReport rep;
    rep.overall = score_slice(all_c, all_r);
    if (!ocr_c.empty())
        rep.ocr = score_slice(ocr_c, ocr_r);
    else
        rep.notes.push_back("ocr slice empty; omitted");
    if (!non_c.empty())
        rep.non_ocr = score_slice(non_c, non_r);
    else
        rep.notes.push_back("non_ocr slice empty; omitted");
    return rep;
}

}  // namespace muse::metrics
