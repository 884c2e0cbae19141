#include <doctest.h>

#include <stdexcept>

#include <cstdio>
#include <random>

#include "muse/vocab.hpp"

using namespace muse;

TEST_CASE("tokenize lowercases, splits whitespace, separates punctuation") {
    CHECK(tokenize("Hello, World!") == std::vector<std::string>{"hello", ",", "world", "!"});
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("   \t ") == std::vector<std::string>{});
    CHECK(tokenize("a  b") == std::vector<std::string>{"a", "b"});
}

TEST_CASE("build_vocabulary on empty corpus yields the four specials") {
    Vocabulary v = build_vocabulary(std::vector<std::string>{}, 1);
    CHECK(v.size() == 4);
    CHECK(v.token(Vocabulary::kPad) == "<pad>");
    CHECK(v.token(Vocabulary::kBos) == "<bos>");
    CHECK(v.token(Vocabulary::kEos) == "<eos>");
    CHECK(v.token(Vocabulary::kUnk) == "<unk>");
}

TEST_CASE("vocabulary id order: frequency desc then lexicographic") {
    Vocabulary v = build_vocabulary({"a b", "a"}, 1);
    CHECK(v.lookup("a") == 4);
    CHECK(v.lookup("b") == 5);

    Vocabulary tied = build_vocabulary({"z q"}, 1);
    CHECK(tied.lookup("q") == 4);
    CHECK(tied.lookup("z") == 5);
}

TEST_CASE("min_freq filters rare tokens") {
    Vocabulary v = build_vocabulary({"a a b"}, 2);
    CHECK(v.lookup("a") == 4);
    CHECK(v.lookup("b") == Vocabulary::kUnk);
    CHECK(v.size() == 5);
}

TEST_CASE("encode pads, truncates and brackets with BOS/EOS") {
    Vocabulary v = build_vocabulary({"a b"}, 1);

    TokenSeq empty = encode("", v, 4);
    CHECK(empty.ids == std::vector<int>{1, 2, 0, 0});
    CHECK(empty.length_unpadded == 2);

    TokenSeq s = encode("a b", v, 6);
    CHECK(s.ids == std::vector<int>{1, 4, 5, 2, 0, 0});
    CHECK(s.length_unpadded == 4);

    TokenSeq trunc = encode("a b a b a b", v, 4);
    CHECK(trunc.ids == std::vector<int>{1, 4, 5, 2});
    CHECK(trunc.length_unpadded == 4);

    CHECK(encode("zz", v, 4).ids[1] == Vocabulary::kUnk);
    CHECK_THROWS_AS(encode("a", v, 1), std::invalid_argument);
}

TEST_CASE("decode strips specials and stops at first EOS") {
    Vocabulary v = build_vocabulary({"a b"}, 1);
    CHECK(decode({{1, 2}, 2}, v) == "");
    CHECK(decode({{1, 4, 5, 2, 0}, 4}, v) == "a b");
    CHECK(decode({{1, 4, 2, 5}, 4}, v) == "a");
    TokenSeq bad;
    bad.ids = {1, 99, 2};
    CHECK_THROWS_AS(decode(bad, v), std::out_of_range);
}

TEST_CASE("round trip decode(encode(s)) over random in-vocab sentences") {
    Vocabulary v = build_vocabulary({"red cat sat on mat dog ran far away quickly"}, 1);
    std::mt19937 rng(7);
    std::uniform_int_distribution<int> len(0, 8), pick(4, v.size() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> toks;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) toks.push_back(v.token(pick(rng)));
        const std::string s = join_tokens(toks);
        CHECK(decode(encode(s, v, n + 2), v) == s);
    }
}

TEST_CASE("vocabulary persists one token per line, deterministically") {
    Vocabulary v1 = build_vocabulary({"b a a"}, 1);
    const std::string path = "vocab_test.txt";
    v1.save(path);
    Vocabulary v2 = Vocabulary::load(path);
    CHECK(v1.id_to_token == v2.id_to_token);

    Vocabulary v3 = build_vocabulary({"b a a"}, 1);
    CHECK(v1.id_to_token == v3.id_to_token);
    std::remove(path.c_str());
}
