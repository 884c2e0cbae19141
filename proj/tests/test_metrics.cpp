#include <doctest.h>

#include <stdexcept>

#include <random>

#include "muse/metrics.hpp"
#include "muse/vocab.hpp"

using namespace muse;
using namespace muse::metrics;

namespace {

// reference LCS length by dynamic programming
int lcs_len(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::vector<std::vector<int>> dp(a.size() + 1, std::vector<int>(b.size() + 1, 0));
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = a[i - 1] == b[j - 1] ? dp[i - 1][j - 1] + 1 : std::max(dp[i - 1][j], dp[i][j - 1]);
    return dp[a.size()][b.size()];
}

std::string random_sentence(std::mt19937& rng, int max_len) {
    static const char* words[] = {"a", "b", "c", "d", "e"};
    std::uniform_int_distribution<int> len(1, max_len), pick(0, 4);
    std::string out;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
        if (i) out += ' ';
        out += words[pick(rng)];
    }
    return out;
}

}  // namespace

TEST_CASE("BLEU: clipped unigram precision oracle") {
    // candidate repeats 'the' four times; the reference licenses only one
    auto b = bleu({"the the the the"}, {"the cat"});
    CHECK(b[0] == doctest::Approx(0.25));
}

TEST_CASE("BLEU: perfect match and empty candidate") {
    auto perfect = bleu({"the quick brown fox jumps"}, {"the quick brown fox jumps"});
    for (double v : perfect) CHECK(v == doctest::Approx(1.0));

    auto empty = bleu({""}, {"a b"});
    for (double v : empty) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("BLEU: brevity penalty") {
    // candidate "a b" vs reference "a b c d": precisions are 1 but BP = e^(1-4/2)
    auto b = bleu({"a b"}, {"a b c d"});
    CHECK(b[0] == doctest::Approx(std::exp(1.0 - 2.0)));
}

TEST_CASE("BLEU: orders are monotonically non-increasing") {
    std::mt19937 rng(101);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::string> cands, refs;
        for (int s = 0; s < 3; ++s) {
            cands.push_back(random_sentence(rng, 8));
            refs.push_back(random_sentence(rng, 8));
        }
        auto b = bleu(cands, refs);
        CHECK(b[0] >= b[1]);
        CHECK(b[1] >= b[2]);
        CHECK(b[2] >= b[3]);
        for (double v : b) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("ROUGE-N oracles") {
    PRF r1 = rouge_n("a b c", "a b c", 1);
    CHECK(r1.f1 == doctest::Approx(1.0));

    PRF r2 = rouge_n("a b c", "a b d", 2);
    CHECK(r2.precision == doctest::Approx(0.5));
    CHECK(r2.recall == doctest::Approx(0.5));
    CHECK(r2.f1 == doctest::Approx(0.5));

    PRF none = rouge_n("a b", "c d", 1);
    CHECK(none.f1 == doctest::Approx(0.0));

    PRF empty = rouge_n("", "a b", 1);
    CHECK(empty.f1 == doctest::Approx(0.0));
}

TEST_CASE("ROUGE-L oracle: LCS 2 with 3- and 5-token sides") {
    PRF r = rouge_l("a b c", "a d e f c");
    CHECK(r.precision == doctest::Approx(2.0 / 3.0));
    CHECK(r.recall == doctest::Approx(2.0 / 5.0));
    CHECK(r.f1 == doctest::Approx(0.5));
}

TEST_CASE("ROUGE-L agrees with a DP reference on random pairs") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        std::string c = random_sentence(rng, 8), r = random_sentence(rng, 8);
        auto ct = tokenize(c), rt = tokenize(r);
        const int l = lcs_len(ct, rt);
        PRF got = rouge_l(c, r);
        CHECK(got.precision == doctest::Approx(double(l) / double(ct.size())));
        CHECK(got.recall == doctest::Approx(double(l) / double(rt.size())));
    }
}

TEST_CASE("corpus ROUGE averages per-sample F1") {
    std::vector<std::string> cands{"a b c", "x y"}, refs{"a b c", "a b"};
    const double expected = 0.5 * (1.0 + 0.0);
    CHECK(corpus_rouge_l(cands, refs) == doctest::Approx(expected));
    CHECK(corpus_rouge_n(cands, refs, 1) == doctest::Approx(expected));
}

TEST_CASE("METEOR: identity gives 1 - 0.5/k^3") {
    CHECK(meteor("a b c", "a b c") == doctest::Approx(1.0 - 0.5 / 27.0));
    CHECK(meteor("w", "w") == doctest::Approx(0.5));  // one chunk over one match
}

TEST_CASE("METEOR: full reorder halves the score") {
    CHECK(meteor("b a", "a b") == doctest::Approx(0.5));
}

TEST_CASE("METEOR: no overlap and empty inputs") {
    CHECK(meteor("a b", "c d") == doctest::Approx(0.0));
    CHECK(meteor("", "a") == doctest::Approx(0.0));
    CHECK(meteor("a", "") == doctest::Approx(0.0));
}

TEST_CASE("METEOR: alignment maximizes matches then minimizes chunks") {
    // "a a b" vs "a b a": all three candidate tokens can match
    const double m = meteor("a a b", "a b a");
    // matches=3, P=R=1 -> F_mean=1; best alignment has 2 chunks
    CHECK(m == doctest::Approx(1.0 - 0.5 * std::pow(2.0 / 3.0, 3)));
}

TEST_CASE("METEOR: synonym stage adds matches") {
    SynonymCheck syn = [](const std::string& a, const std::string& b) {
        return (a == "car" && b == "vehicle") || (a == "vehicle" && b == "car");
    };
    CHECK(meteor("car", "vehicle") == doctest::Approx(0.0));
    CHECK(meteor("car", "vehicle", syn) == doctest::Approx(0.5));
    CHECK(meteor("the car stopped", "the vehicle stopped", syn) ==
          doctest::Approx(1.0 - 0.5 / 27.0));
}

TEST_CASE("corpus METEOR averages per-sample scores") {
    const double expected = 0.5 * (meteor("a b", "a b") + meteor("c", "d"));
    CHECK(corpus_meteor({"a b", "c"}, {"a b", "d"}) == doctest::Approx(expected));
}

TEST_CASE("embedding_score: orthogonal basis reduces to token overlap") {
    TokenEmbedder embed = [](const std::string& tok) {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(4);
        if (tok == "a") v(0) = 1;
        else if (tok == "b") v(1) = 1;
        else if (tok == "c") v(2) = 1;
        else v(3) = 1;
        return v;
    };
    EmbeddingScore s = embedding_score({"a b"}, {"a c"}, embed);
    // greedy max cosine: 'a' matches (1), 'b' best 0 -> P = 0.5; symmetric R = 0.5
    CHECK(s.score.precision == doctest::Approx(0.5));
    CHECK(s.score.recall == doctest::Approx(0.5));
    CHECK(s.score.f1 == doctest::Approx(0.5));
    CHECK(s.skipped == 0);

    EmbeddingScore perfect = embedding_score({"a b c"}, {"c b a"}, embed);
    CHECK(perfect.score.f1 == doctest::Approx(1.0));

    EmbeddingScore skipping = embedding_score({"", "a"}, {"a", "a"}, embed);
    CHECK(skipping.skipped == 1);
    CHECK(skipping.score.f1 == doctest::Approx(1.0));
}

TEST_CASE("sentence_similarity: identity is 1, empties are degenerate") {
    SentenceSimilarity same = sentence_similarity({"a b c"}, {"a b c"});
    CHECK(same.mean_cosine == doctest::Approx(1.0));
    CHECK(same.degenerate == 0);

    SentenceSimilarity mixed = sentence_similarity({"", "x y"}, {"a", "x y"});
    CHECK(mixed.degenerate == 1);
    CHECK(mixed.mean_cosine == doctest::Approx(1.0));
}

namespace {

Dataset eval_dataset() {
    Dataset ds;
    auto add = [&](const std::string& id, const std::string& expl, bool ocr, Split split) {
        Sample s;
        s.id = id;
        s.caption = "cap";
        s.explanation = expl;
        s.is_ocr_sample = ocr;
        if (ocr) s.ocr_text = "sign";
        s.split = split;
        ds.samples.push_back(std::move(s));
    };
    add("e1", "the day is fine", true, Split::Test);
    add("e2", "rain never stops", false, Split::Test);
    add("tr", "ignored", false, Split::Train);
    return ds;
}

}  // namespace

TEST_CASE("evaluate_corpus: slices, id matching, errors") {
    Dataset ds = eval_dataset();
    std::vector<Generation> gens{{"e2", "rain never stops"}, {"e1", "the day is fine"}};
    MetricReport rep = evaluate_corpus(gens, ds);
    REQUIRE(rep.overall.has_value());
    CHECK(rep.overall->count == 2);
    CHECK(rep.overall->b1 == doctest::Approx(1.0));
    CHECK(rep.overall->rl == doctest::Approx(1.0));
    REQUIRE(rep.ocr.has_value());
    CHECK(rep.ocr->count == 1);
    REQUIRE(rep.non_ocr.has_value());
    CHECK(rep.non_ocr->count == 1);

    CHECK_THROWS_AS(evaluate_corpus({{"e1", "x"}}, ds), std::invalid_argument);  // e2 missing
    std::vector<Generation> dup{{"e1", "x"}, {"e1", "y"}, {"e2", "z"}};
    CHECK_THROWS_AS(evaluate_corpus(dup, ds), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_corpus(gens, ds, Split::Val), std::invalid_argument);  // empty split
}

TEST_CASE("evaluate_corpus: an all-OCR slice leaves a note for the empty side") {
    Dataset ds = eval_dataset();
    ds.samples[1].is_ocr_sample = true;
    ds.samples[1].ocr_text = "sign";
    std::vector<Generation> gens{{"e1", "a"}, {"e2", "b"}};
    MetricReport rep = evaluate_corpus(gens, ds);
    CHECK(rep.ocr.has_value());
    CHECK_FALSE(rep.non_ocr.has_value());
    CHECK_FALSE(rep.notes.empty());
}
