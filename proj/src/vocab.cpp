#include "muse/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace muse {

namespace {
bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c); }
bool is_space(unsigned char c) { return c < 128 && std::isspace(c); }
}  // namespace

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (unsigned char c : text) {
        if (is_space(c)) {
            flush();
        } else if (is_punct(c)) {
            flush();
            out.push_back(std::string(1, static_cast<char>(c)));
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (i) out.push_back(' ');
        out += tokens[i];
    }
    return out;
}

Vocabulary::Vocabulary() {
    id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
    for (int i = 0; i < 4; ++i) token_to_id[id_to_token[i]] = i;
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id.find(token);
    return it == token_to_id.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary id out of range: " + std::to_string(id));
    return id_to_token[id];
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write vocabulary: " + path);
    for (const auto& t : id_to_token) f << t << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read vocabulary: " + path);
    Vocabulary v;
    v.id_to_token.clear();
    v.token_to_id.clear();
    std::string line;
    while (std::getline(f, line)) {
        v.token_to_id[line] = v.size();
        v.id_to_token.push_back(line);
    }
    if (v.size() < 4) throw std::runtime_error("vocabulary file too small: " + path);
    return v;
}

Vocabulary build_vocabulary(const std::vector<std::string>& texts, int min_freq) {
    std::map<std::string, long long> freq;
    for (const auto& t : texts)
        for (const auto& tok : tokenize(t)) ++freq[tok];

    std::vector<std::pair<std::string, long long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary v;
    for (const auto& [tok, n] : items) {
        if (n < min_freq) continue;
        if (v.token_to_id.count(tok)) continue;  // a special token literal in the corpus
        v.token_to_id[tok] = v.size();
        v.id_to_token.push_back(tok);
    }
    return v;
}

TokenSeq encode(const std::string& text, const Vocabulary& vocab, int max_len) {
    if (max_len < 2) throw std::invalid_argument("max_len must be >= 2");
    auto toks = tokenize(text);
    TokenSeq seq;
    seq.ids.reserve(max_len);
    seq.ids.push_back(Vocabulary::kBos);
    for (const auto& t : toks) {
        if (static_cast<int>(seq.ids.size()) >= max_len - 1) break;
        seq.ids.push_back(vocab.lookup(t));
    }
    seq.ids.push_back(Vocabulary::kEos);
    seq.length_unpadded = static_cast<int>(seq.ids.size());
    seq.ids.resize(max_len, Vocabulary::kPad);
    return seq;
}

std::string decode(const TokenSeq& seq, const Vocabulary& vocab) {
    std::vector<std::string> toks;
    for (int id : seq.ids) {
        if (id == Vocabulary::kEos) break;
        if (id == Vocabulary::kBos || id == Vocabulary::kPad) continue;
        toks.push_back(vocab.token(id));
    }
    return join_tokens(toks);
}

}  // namespace muse
