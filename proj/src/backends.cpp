#include "muse/backends.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "muse/vocab.hpp"

namespace muse {

namespace {

// splitmix64: portable deterministic stream, independent of libstdc++
// distribution internals.
struct SplitMix64 {
    std::uint64_t state;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}
    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    // uniform in [-1, 1)
    double next_signed_unit() {
        return static_cast<double>(next() >> 11) * (2.0 / 9007199254740992.0) - 1.0;
    }
};

}  // namespace

std::uint64_t stable_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Eigen::MatrixXd extract_image_features(const std::string& image_ref,
                                       const std::optional<Eigen::MatrixXd>& inline_features,
                                       const ImageFeatureConfig& cfg) {
    if (inline_features) {
        if (inline_features->cols() != cfg.d_i)
            throw std::runtime_error("inline image features have width " +
                                     std::to_string(inline_features->cols()) + ", expected " +
                                     std::to_string(cfg.d_i));
        if (inline_features->rows() < 1) throw std::runtime_error("inline image features are empty");
        if (!inline_features->allFinite()) throw std::runtime_error("inline image features contain non-finite values");
        return *inline_features;
    }
    if (image_ref.empty()) throw std::runtime_error("sample has neither image reference nor inline features");

    std::uint64_t seed;
    std::ifstream f(image_ref, std::ios::binary);
    if (f) {
        std::ostringstream buf;
        buf << f.rdbuf();
        seed = stable_hash(buf.str());
    } else {
        seed = stable_hash(image_ref);  // reference-only handle
    }
    SplitMix64 rng(seed);
    Eigen::MatrixXd m(cfg.q, cfg.d_i);
    for (int i = 0; i < cfg.q; ++i)
        for (int j = 0; j < cfg.d_i; ++j) m(i, j) = rng.next_signed_unit();
    return m;
}

Eigen::VectorXd hashed_token_vector(const std::string& token, int dim) {
    SplitMix64 rng(stable_hash(token));
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.next_signed_unit();
    return v;
}

SentenceEmbedding sentence_embedding(const std::string& text, int dim) {
    auto toks = tokenize(text);
    SentenceEmbedding out;
    out.vec = Eigen::VectorXd::Zero(dim);
    if (toks.empty()) {
        out.degenerate = true;
        return out;
    }
    for (const auto& t : toks) out.vec += hashed_token_vector(t, dim);
    out.vec /= static_cast<double>(toks.size());
    const double norm = out.vec.norm();
    if (norm < 1e-12) {
        out.vec.setZero();
        out.degenerate = true;
        return out;
    }
    out.vec /= norm;
    return out;
}

std::string pos_tag_name(PosTag t) {
    switch (t) {
        case PosTag::Noun: return "NOUN";
        case PosTag::Verb: return "VERB";
        case PosTag::Adj: return "ADJ";
        case PosTag::Adv: return "ADV";
        default: return "OTHER";
    }
}

namespace {

PosTag parse_tag(const std::string& s) {
    if (s == "NOUN") return PosTag::Noun;
    if (s == "VERB") return PosTag::Verb;
    if (s == "ADJ") return PosTag::Adj;
    if (s == "ADV") return PosTag::Adv;
    if (s == "OTHER") return PosTag::Other;
    throw std::runtime_error("unknown POS tag: " + s);
}

bool is_all_punct(const std::string& w) {
    for (unsigned char c : w)
        if (c >= 128 || !std::ispunct(c)) return false;
    return !w.empty();
}

}  // namespace

PosTagger::PosTagger() {
    static const std::pair<const char*, PosTag> kBuiltin[] = {
        {"the", PosTag::Other},   {"a", PosTag::Other},     {"an", PosTag::Other},
        {"of", PosTag::Other},    {"in", PosTag::Other},    {"on", PosTag::Other},
        {"at", PosTag::Other},    {"to", PosTag::Other},    {"and", PosTag::Other},
        {"or", PosTag::Other},    {"but", PosTag::Other},   {"is", PosTag::Verb},
        {"are", PosTag::Verb},    {"was", PosTag::Verb},    {"were", PosTag::Verb},
        {"be", PosTag::Verb},     {"been", PosTag::Verb},   {"has", PosTag::Verb},
        {"have", PosTag::Verb},   {"had", PosTag::Verb},    {"do", PosTag::Verb},
        {"does", PosTag::Verb},   {"did", PosTag::Verb},    {"go", PosTag::Verb},
        {"went", PosTag::Verb},   {"say", PosTag::Verb},    {"said", PosTag::Verb},
        {"make", PosTag::Verb},   {"made", PosTag::Verb},   {"love", PosTag::Verb},
        {"hate", PosTag::Verb},   {"like", PosTag::Verb},   {"want", PosTag::Verb},
        {"see", PosTag::Verb},    {"know", PosTag::Verb},   {"think", PosTag::Verb},
        {"get", PosTag::Verb},    {"take", PosTag::Verb},   {"enjoy", PosTag::Verb},
        {"wait", PosTag::Verb},   {"looks", PosTag::Verb},  {"look", PosTag::Verb},
        {"good", PosTag::Adj},    {"bad", PosTag::Adj},     {"great", PosTag::Adj},
        {"nice", PosTag::Adj},    {"awful", PosTag::Adj},   {"terrible", PosTag::Adj},
        {"wonderful", PosTag::Adj}, {"amazing", PosTag::Adj}, {"best", PosTag::Adj},
        {"worst", PosTag::Adj},   {"happy", PosTag::Adj},   {"sad", PosTag::Adj},
        {"big", PosTag::Adj},     {"small", PosTag::Adj},   {"new", PosTag::Adj},
        {"old", PosTag::Adj},     {"lovely", PosTag::Adj},  {"sarcastic", PosTag::Adj},
        {"ironic", PosTag::Adj},  {"not", PosTag::Adv},     {"very", PosTag::Adv},
        {"really", PosTag::Adv},  {"so", PosTag::Adv},      {"too", PosTag::Adv},
        {"never", PosTag::Adv},   {"always", PosTag::Adv},  {"just", PosTag::Adv},
        {"here", PosTag::Adv},    {"there", PosTag::Adv},   {"car", PosTag::Noun},
        {"vehicle", PosTag::Noun}, {"weather", PosTag::Noun}, {"day", PosTag::Noun},
        {"man", PosTag::Noun},    {"woman", PosTag::Noun},  {"person", PosTag::Noun},
        {"author", PosTag::Noun}, {"post", PosTag::Noun},   {"image", PosTag::Noun},
        {"picture", PosTag::Noun}, {"photo", PosTag::Noun}, {"food", PosTag::Noun},
        {"time", PosTag::Noun},   {"morning", PosTag::Noun}, {"night", PosTag::Noun},
        {"rain", PosTag::Noun},   {"sun", PosTag::Noun},    {"work", PosTag::Noun},
        {"sarcasm", PosTag::Noun}, {"irony", PosTag::Noun},
    };
    for (const auto& [w, t] : kBuiltin) lexicon_[w] = t;
}

void PosTagger::load_lexicon(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read POS lexicon: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error("POS lexicon line " + std::to_string(line_no) + ": expected word<TAB>tag");
        lexicon_[line.substr(0, tab)] = parse_tag(line.substr(tab + 1));
    }
}

void PosTagger::add(const std::string& word, PosTag tag) { lexicon_[word] = tag; }

PosTag PosTagger::tag_word(const std::string& word) const {
    auto it = lexicon_.find(word);
    if (it != lexicon_.end()) return it->second;
    if (is_all_punct(word)) return PosTag::Other;
    const auto n = word.size();
    auto ends_with = [&](const char* suf) {
        const size_t m = std::string(suf).size();
        return n > m && word.compare(n - m, m, suf) == 0;
    };
    if (ends_with("ly")) return PosTag::Adv;
    if (ends_with("ing") || ends_with("ed")) return PosTag::Verb;
    return PosTag::Noun;
}

std::vector<std::pair<std::string, PosTag>> PosTagger::tag(const std::string& text) const {
    std::vector<std::pair<std::string, PosTag>> out;
    for (const auto& w : tokenize(text)) out.emplace_back(w, tag_word(w));
    return out;
}

SynonymLexicon::SynonymLexicon() {
    add_pair("car", "vehicle", PosTag::Noun);
    add_pair("car", "automobile", PosTag::Noun);
    add_pair("picture", "photo", PosTag::Noun);
    add_pair("picture", "image", PosTag::Noun);
    add_pair("man", "person", PosTag::Noun);
    add_pair("rain", "rainfall", PosTag::Noun);
    add_pair("irony", "sarcasm", PosTag::Noun);
    add_pair("good", "nice", PosTag::Adj);
    add_pair("great", "wonderful", PosTag::Adj);
    add_pair("bad", "awful", PosTag::Adj);
    add_pair("happy", "glad", PosTag::Adj);
    add_pair("big", "large", PosTag::Adj);
    add_pair("small", "little", PosTag::Adj);
    add_pair("love", "adore", PosTag::Verb);
    add_pair("hate", "despise", PosTag::Verb);
    add_pair("like", "enjoy", PosTag::Verb);
    add_pair("really", "truly", PosTag::Adv);
    add_pair("quickly", "rapidly", PosTag::Adv);
}

void SynonymLexicon::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read synonym lexicon: " + path);
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        auto t1 = line.find('\t');
        auto t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
        if (t2 == std::string::npos)
            throw std::runtime_error("synonym lexicon line " + std::to_string(line_no) +
                                     ": expected tag<TAB>word1<TAB>word2");
        add_pair(line.substr(t1 + 1, t2 - t1 - 1), line.substr(t2 + 1), parse_tag(line.substr(0, t1)));
    }
}

void SynonymLexicon::add_pair(const std::string& a, const std::string& b, PosTag tag) {
    if (a == b) return;  // a word is never its own synonym
    table_[{a, tag}].insert(b);
    table_[{b, tag}].insert(a);
}

std::set<std::string> SynonymLexicon::synonyms(const std::string& word, PosTag tag) const {
    auto it = table_.find({word, tag});
    return it == table_.end() ? std::set<std::string>{} : it->second;
}

bool SynonymLexicon::are_synonyms(const std::string& a, const std::string& b, PosTag tag) const {
    auto it = table_.find({a, tag});
    return it != table_.end() && it->second.count(b) > 0;
}

}  // namespace muse
