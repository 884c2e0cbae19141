#include "muse/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace muse::model {

using nn::Matrix;
using nn::Var;
using nn::Vector;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

void ModelConfig::validate() const {
    if (vocab_size < 4) throw std::invalid_argument("vocab_size must cover the special tokens");
    if (heads < 1 || d_t < 1 || d_i < 1 || q < 1 || max_len < 2)
        throw std::invalid_argument("model dimensions must be positive");
    if (d_t % heads != 0)
        throw std::invalid_argument("d_t (" + std::to_string(d_t) + ") must be divisible by heads (" +
                                    std::to_string(heads) + ")");
    if (dec_layers < 1 || text_layers < 0) throw std::invalid_argument("bad layer counts");
    if (max_decode_len < 2 || max_decode_len > 4096) throw std::invalid_argument("bad max_decode_len");
}

Matrix sinusoidal_positions(int len, int dim) {
    Matrix p(len, dim);
    for (int i = 0; i < len; ++i) {
        for (int j = 0; j < dim; ++j) {
            const double angle = i / std::pow(10000.0, 2.0 * (j / 2) / dim);
            p(i, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return p;
}

Model::Model(ModelConfig cfg, unsigned seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937 rng(seed);
    const int d = cfg_.d_t, dk = cfg_.d_k(), ff = cfg_.ffn_dim(), V = cfg_.vocab_size;

    auto weight = [&](const std::string& name, int rows, int cols) {
        params_.add(name, nn::uniform_init(rows, cols, rows, rng));
    };
    auto gain = [&](const std::string& name, int cols) { params_.add(name, Matrix::Ones(1, cols)); };
    auto bias = [&](const std::string& name, int cols) { params_.add(name, Matrix::Zero(1, cols)); };

    auto attn_block = [&](const std::string& prefix, int kv_width) {
        for (int m = 0; m < cfg_.heads; ++m) {
            weight(prefix + "/h" + std::to_string(m) + "/Wq", d, dk);
            weight(prefix + "/h" + std::to_string(m) + "/Wk", kv_width, dk);
            weight(prefix + "/h" + std::to_string(m) + "/Wv", kv_width, dk);
        }
        weight(prefix + "/Wo", cfg_.heads * dk, d);
    };
    auto norm_ffn_block = [&](const std::string& prefix) {
        gain(prefix + "/ln1_gain", d);
        bias(prefix + "/ln1_bias", d);
        weight(prefix + "/ffn/W1", d, ff);
        bias(prefix + "/ffn/b1", ff);
        weight(prefix + "/ffn/W2", ff, d);
        bias(prefix + "/ffn/b2", d);
        gain(prefix + "/ln2_gain", d);
        bias(prefix + "/ln2_bias", d);
    };

    // text backend stub
    weight("text_backend/embed", V, d);
    for (int l = 0; l < cfg_.text_layers; ++l) {
        const std::string p = "text_backend/l" + std::to_string(l);
        attn_block(p + "/attn", d);
        norm_ffn_block(p);
    }

    // image adapter: identity init, frozen by default at training time
    params_.add("image_backend/proj", Matrix::Identity(cfg_.d_i, cfg_.d_i));
    bias("image_backend/bias", cfg_.d_i);

    // cross-modal encoder(s)
    attn_block("encoder/img", cfg_.d_i);
    norm_ffn_block("encoder/img");
    if (cfg_.use_ocr_gate) {
        attn_block("encoder/ocr", d);
        norm_ffn_block("encoder/ocr");
        const int dg = cfg_.gate_dim();
        weight("gate/W1", 2 * d, dg);
        bias("gate/b1", dg);
        weight("gate/W2", dg, 1);
        bias("gate/b2", 1);
        params_.add("gate/null_ocr", nn::uniform_init(1, d, d, rng));
    }

    // decoder
    weight("decoder/embed", V, d);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
        const std::string p = "decoder/l" + std::to_string(l);
        attn_block(p + "/self", d);
        gain(p + "/self_ln_gain", d);
        bias(p + "/self_ln_bias", d);
        attn_block(p + "/cross", d);
        gain(p + "/cross_ln_gain", d);
        bias(p + "/cross_ln_bias", d);
        weight(p + "/ffn/W1", d, ff);
        bias(p + "/ffn/b1", ff);
        weight(p + "/ffn/W2", ff, d);
        bias(p + "/ffn/b2", d);
        gain(p + "/ffn_ln_gain", d);
        bias(p + "/ffn_ln_bias", d);
    }

    weight("lm_head/W", d, V);
    bias("lm_head/b", V);
    weight("cls_head/W", d, 1);
    bias("cls_head/b", 1);
}

Var Model::self_attention(const Var& x, const Var& kv, const std::string& prefix,
                          const Matrix& additive_mask, int kv_width) const {
    if (kv.cols() != kv_width) throw std::invalid_argument(prefix + ": key/value width mismatch");
    if (kv.rows() < 1) throw std::invalid_argument(prefix + ": no keys to attend over");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(cfg_.d_k()));
    Var out;
    for (int m = 0; m < cfg_.heads; ++m) {
        const std::string h = prefix + "/h" + std::to_string(m);
        Var q = nn::matmul(x, params_.at(h + "/Wq"));
        Var k = nn::matmul(kv, params_.at(h + "/Wk"));
        Var v = nn::matmul(kv, params_.at(h + "/Wv"));
        Var scores = nn::scale(nn::matmul(q, nn::transpose(k)), inv_sqrt_dk);
        Var attn = nn::softmax_rows(scores, additive_mask);
        Var head = nn::matmul(attn, v);
        out = m == 0 ? head : nn::hcat(out, head);
    }
    return nn::matmul(out, params_.at(prefix + "/Wo"));
}

TextFeatures Model::embed_text(const TokenSeq& seq) const {
    if (static_cast<int>(seq.ids.size()) != cfg_.max_len)
        throw std::invalid_argument("token sequence length does not match max_len");
    const int r = cfg_.max_len;
    Vector mask = Vector::Zero(r);
    for (int i = 0; i < seq.length_unpadded && i < r; ++i) mask(i) = 1.0;

    Var x = nn::gather_rows(params_.at("text_backend/embed"), seq.ids);
    x = nn::add(x, nn::constant(sinusoidal_positions(r, cfg_.d_t)));
    x = nn::mask_rows(x, mask);

    Matrix key_mask = Matrix::Zero(r, r);
    for (int j = 0; j < r; ++j)
        if (mask(j) == 0.0) key_mask.col(j).setConstant(kNegInf);

    for (int l = 0; l < cfg_.text_layers; ++l) {
        const std::string p = "text_backend/l" + std::to_string(l);
        Var attn = self_attention(x, x, p + "/attn", key_mask, cfg_.d_t);
        x = nn::layer_norm_rows(nn::add(x, attn), params_.at(p + "/ln1_gain"), params_.at(p + "/ln1_bias"));
        x = nn::mask_rows(x, mask);
        Var h = nn::relu(nn::add_rowvec(nn::matmul(x, params_.at(p + "/ffn/W1")), params_.at(p + "/ffn/b1")));
        Var f = nn::add_rowvec(nn::matmul(h, params_.at(p + "/ffn/W2")), params_.at(p + "/ffn/b2"));
        x = nn::layer_norm_rows(nn::add(x, f), params_.at(p + "/ln2_gain"), params_.at(p + "/ln2_bias"));
        x = nn::mask_rows(x, mask);
    }
    return {x, mask};
}

Var Model::project_image(const Matrix& features) const {
    if (features.cols() != cfg_.d_i)
        throw std::invalid_argument("image features width " + std::to_string(features.cols()) +
                                    " does not match d_i " + std::to_string(cfg_.d_i));
    return nn::add_rowvec(nn::matmul(nn::constant(features), params_.at("image_backend/proj")),
                          params_.at("image_backend/bias"));
}

Var Model::cross_modal_attention(const TextFeatures& x_t, const Var& x_i, const std::string& which) const {
    if (x_t.x.cols() != cfg_.d_t) throw std::invalid_argument("text features width mismatch");
    if (x_i.rows() < 1) throw std::invalid_argument("cross_modal_attention: no key/value regions");
    const int kv_width = which == "ocr" ? cfg_.d_t : cfg_.d_i;
    Matrix no_mask = Matrix::Zero(x_t.x.rows(), x_i.rows());
    Var z = self_attention(x_t.x, x_i, "encoder/" + which, no_mask, kv_width);
    return nn::mask_rows(z, x_t.mask);
}

Var Model::encoder_stream(const TextFeatures& x_t, const Var& x_i, const std::string& which,
                          const Vector* kv_mask) const {
    const std::string p = "encoder/" + which;
    Var z;
    if (kv_mask == nullptr) {
        z = cross_modal_attention(x_t, x_i, which);
    } else {
        const int kv_width = which == "ocr" ? cfg_.d_t : cfg_.d_i;
        Matrix key_mask = Matrix::Zero(x_t.x.rows(), x_i.rows());
        for (Eigen::Index j = 0; j < kv_mask->size(); ++j)
            if ((*kv_mask)(j) == 0.0) key_mask.col(j).setConstant(kNegInf);
        z = nn::mask_rows(self_attention(x_t.x, x_i, p, key_mask, kv_width), x_t.mask);
    }
    Var h1 = nn::layer_norm_rows(nn::add(x_t.x, z), params_.at(p + "/ln1_gain"), params_.at(p + "/ln1_bias"));
    h1 = nn::mask_rows(h1, x_t.mask);
    Var h = nn::relu(nn::add_rowvec(nn::matmul(h1, params_.at(p + "/ffn/W1")), params_.at(p + "/ffn/b1")));
    Var f = nn::add_rowvec(nn::matmul(h, params_.at(p + "/ffn/W2")), params_.at(p + "/ffn/b2"));
    Var h2 = nn::layer_norm_rows(nn::add(h1, f), params_.at(p + "/ln2_gain"), params_.at(p + "/ln2_bias"));
    return nn::mask_rows(h2, x_t.mask);
}

EncoderState Model::encoder_forward(const TextFeatures& x_t, const Var& x_i) const {
    Var stream = encoder_stream(x_t, x_i, "img");
    Var c_t = nn::vcat(x_t.x, stream);
    Vector mask(2 * x_t.mask.size());
    mask << x_t.mask, x_t.mask;
    return {c_t, mask};
}

Model::GateOutput Model::gate_forward(const Var& z_img, const Var& z_ocr, const Vector& mask,
                                      bool ocr_present) const {
    if (!cfg_.use_ocr_gate) throw std::logic_error("gate_forward requires use_ocr_gate");
    if (z_img.rows() != z_ocr.rows() || z_img.cols() != z_ocr.cols())
        throw std::invalid_argument("gate_forward: stream shape mismatch");
    Var m_img = nn::masked_mean_rows(z_img, mask);
    Var m_ocr = ocr_present ? nn::masked_mean_rows(z_ocr, mask) : params_.at("gate/null_ocr");
    Var u = nn::hcat(m_img, m_ocr);
    Var h = nn::tanh_(nn::add_rowvec(nn::matmul(u, params_.at("gate/W1")), params_.at("gate/b1")));
    Var lambda = nn::sigmoid_(nn::add_rowvec(nn::matmul(h, params_.at("gate/W2")), params_.at("gate/b2")));
    Var c_t = nn::add(nn::cmul(lambda, z_img), z_ocr);
    return {c_t, lambda};
}

EncoderState Model::encode_sample(const Sample& s, const Vocabulary& vocab) const {
    TokenSeq cap = encode(s.caption, vocab, cfg_.max_len);
    TextFeatures x_t = embed_text(cap);
    ImageFeatureConfig icfg{cfg_.q, cfg_.d_i};
    Var x_i = project_image(extract_image_features(s.image_path, s.image_features, icfg));

    if (!cfg_.use_ocr_gate) return encoder_forward(x_t, x_i);

    Var z_img = encoder_stream(x_t, x_i, "img");
    bool ocr_present = s.ocr_text.has_value() && !tokenize(*s.ocr_text).empty();
    Var z_ocr;
    if (ocr_present) {
        TokenSeq ocr = encode(*s.ocr_text, vocab, cfg_.max_len);
        TextFeatures x_ocr = embed_text(ocr);
        z_ocr = encoder_stream(x_t, x_ocr.x, "ocr", &x_ocr.mask);
    } else {
        z_ocr = nn::constant(Matrix::Zero(cfg_.max_len, cfg_.d_t));
    }
    GateOutput g = gate_forward(z_img, z_ocr, x_t.mask, ocr_present);
    return {g.c_t, x_t.mask};
}

Var Model::decoder_layer(const Var& x, const EncoderState& enc, int layer, const Matrix& causal_mask) const {
    const std::string p = "decoder/l" + std::to_string(layer);
    Var a = self_attention(x, x, p + "/self", causal_mask, cfg_.d_t);
    Var h = nn::layer_norm_rows(nn::add(x, a), params_.at(p + "/self_ln_gain"), params_.at(p + "/self_ln_bias"));

    Matrix key_mask = Matrix::Zero(h.rows(), enc.c_t.rows());
    for (Eigen::Index j = 0; j < enc.mask.size(); ++j)
        if (enc.mask(j) == 0.0) key_mask.col(j).setConstant(kNegInf);
    Var c = self_attention(h, enc.c_t, p + "/cross", key_mask, cfg_.d_t);
    h = nn::layer_norm_rows(nn::add(h, c), params_.at(p + "/cross_ln_gain"), params_.at(p + "/cross_ln_bias"));

    Var f1 = nn::relu(nn::add_rowvec(nn::matmul(h, params_.at(p + "/ffn/W1")), params_.at(p + "/ffn/b1")));
    Var f = nn::add_rowvec(nn::matmul(f1, params_.at(p + "/ffn/W2")), params_.at(p + "/ffn/b2"));
    return nn::layer_norm_rows(nn::add(h, f), params_.at(p + "/ffn_ln_gain"), params_.at(p + "/ffn_ln_bias"));
}

Var Model::decoder_forward(const std::vector<int>& input_ids, const EncoderState& enc) const {
    if (input_ids.empty()) throw std::invalid_argument("decoder_forward: empty input");
    const int n = static_cast<int>(input_ids.size());
    if (enc.mask.size() != enc.c_t.rows()) throw std::invalid_argument("encoder state mask inconsistent");

    Var x = nn::gather_rows(params_.at("decoder/embed"), input_ids);
    x = nn::add(x, nn::constant(sinusoidal_positions(n, cfg_.d_t)));

    Matrix causal = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) causal(i, j) = kNegInf;

    for (int l = 0; l < cfg_.dec_layers; ++l) x = decoder_layer(x, enc, l, causal);
    return nn::add_rowvec(nn::matmul(x, params_.at("lm_head/W")), params_.at("lm_head/b"));
}

Var Model::decode_step(const std::vector<int>& prefix, const EncoderState& enc) const {
    if (prefix.empty() || prefix.front() != Vocabulary::kBos)
        throw std::invalid_argument("decode_step: prefix must begin with BOS");
    if (static_cast<int>(prefix.size()) > cfg_.max_decode_len)
        throw std::invalid_argument("decode_step: prefix exceeds max_decode_len");
    Var logits = decoder_forward(prefix, enc);
    return nn::row(logits, logits.rows() - 1);
}

Var Model::classify_sarcasm_logit(const EncoderState& enc) const {
    Var pooled = nn::masked_mean_rows(enc.c_t, enc.mask);
    return nn::add_rowvec(nn::matmul(pooled, params_.at("cls_head/W")), params_.at("cls_head/b"));
}

double Model::classify_sarcasm(const EncoderState& enc) const {
    return 1.0 / (1.0 + std::exp(-classify_sarcasm_logit(enc).value()(0, 0)));
}

namespace {

Eigen::VectorXd log_softmax(const Eigen::VectorXd& logits) {
    const double m = logits.maxCoeff();
    const double lse = m + std::log((logits.array() - m).exp().sum());
    return logits.array() - lse;
}

struct Hypothesis {
    std::vector<int> tokens;  // includes leading BOS
    double logprob = 0.0;
};

std::vector<int> strip(const std::vector<int>& toks) {
    std::vector<int> out;
    for (size_t i = 1; i < toks.size(); ++i) {
        if (toks[i] == Vocabulary::kEos) break;
        out.push_back(toks[i]);
    }
    return out;
}

}  // namespace

std::vector<int> search_tokens(const StepScorer& scorer, int vocab_size, const GenerationConfig& cfg) {
    if (cfg.beam_width < 1) throw std::invalid_argument("beam_width must be >= 1");

    if (cfg.strategy == GenerationConfig::Strategy::Greedy) {
        std::vector<int> prefix{Vocabulary::kBos};
        while (static_cast<int>(prefix.size()) < cfg.max_decode_len) {
            Eigen::VectorXd logits = scorer(prefix);
            int best = -1;
            for (int t = 0; t < vocab_size; ++t) {
                if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
                if (best < 0 || logits(t) > logits(best)) best = t;  // ties keep lower id
            }
            prefix.push_back(best);
            if (best == Vocabulary::kEos) break;
        }
        return strip(prefix);
    }

    auto norm_score = [&](const Hypothesis& h) {
        const double len = static_cast<double>(h.tokens.size() - 1);
        return h.logprob / std::pow(std::max(len, 1.0), cfg.length_penalty);
    };

    std::vector<Hypothesis> active{{{Vocabulary::kBos}, 0.0}};
    std::vector<Hypothesis> finished;
    while (!active.empty()) {
        struct Cand {
            double score;
            int token;
            size_t parent;
        };
        std::vector<Cand> cands;
        for (size_t p = 0; p < active.size(); ++p) {
            Eigen::VectorXd lp = log_softmax(scorer(active[p].tokens));
            for (int t = 0; t < vocab_size; ++t) {
                if (t == Vocabulary::kPad || t == Vocabulary::kBos) continue;
                cands.push_back({active[p].logprob + lp(t), t, p});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.token != b.token) return a.token < b.token;
            return a.parent < b.parent;
        });

        std::vector<Hypothesis> next;
        for (const Cand& c : cands) {
            if (static_cast<int>(next.size()) >= cfg.beam_width) break;
            Hypothesis h = active[c.parent];
            h.tokens.push_back(c.token);
            h.logprob = c.score;
            if (c.token == Vocabulary::kEos || static_cast<int>(h.tokens.size()) >= cfg.max_decode_len) {
                finished.push_back(std::move(h));
            } else {
                next.push_back(std::move(h));
            }
        }
        active = std::move(next);
        if (static_cast<int>(finished.size()) >= cfg.beam_width) break;
    }
    if (finished.empty()) finished = std::move(active);
    if (finished.empty()) return {};

    auto best = std::min_element(finished.begin(), finished.end(), [&](const Hypothesis& a, const Hypothesis& b) {
        const double sa = norm_score(a), sb = norm_score(b);
        if (sa != sb) return sa > sb;
        return a.tokens < b.tokens;  // lower token ids win ties
    });
    return strip(best->tokens);
}

std::vector<int> generate(const Model& m, const EncoderState& enc, const GenerationConfig& cfg) {
    GenerationConfig c = cfg;
    c.max_decode_len = std::min(c.max_decode_len, m.config().max_decode_len);
    StepScorer scorer = [&](const std::vector<int>& prefix) -> Eigen::VectorXd {
        return m.decode_step(prefix, enc).value().row(0).transpose();
    };
    return search_tokens(scorer, m.config().vocab_size, c);
}

Var lm_loss(const Var& logits, const std::vector<int>& targets) {
    return nn::cross_entropy_rows(logits, targets, Vocabulary::kPad);
}

}  // namespace muse::model
