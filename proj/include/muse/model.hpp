#pragma once

#include <functional>
#include <string>
#include <vector>

#include "muse/autograd.hpp"
#include "muse/backends.hpp"
#include "muse/data.hpp"
#include "muse/vocab.hpp"

namespace muse::model {

struct ModelConfig {
    int vocab_size = 0;
    int max_len = 32;        // r: caption token budget (paper default 256)
    int d_t = 64;            // text width
    int d_i = 512;           // image region width
    int q = 49;              // image regions
    int heads = 4;           // M
    int d_ff = 0;            // 0 -> 4*d_t
    int text_layers = 1;     // self-attention layers in the text backend stub
    int dec_layers = 2;      // L
    int d_gate = 0;          // 0 -> d_t
    bool use_ocr_gate = false;
    int max_decode_len = 64;

    int d_k() const { return d_t / heads; }
    int ffn_dim() const { return d_ff > 0 ? d_ff : 4 * d_t; }
    int gate_dim() const { return d_gate > 0 ? d_gate : d_t; }
    void validate() const;
};

struct TextFeatures {
    nn::Var x;        // r x d_t, PAD rows zeroed
    nn::Vector mask;  // length r, 1 = real token
};

struct EncoderState {
    nn::Var c_t;      // 2r x d_t (base) or r x d_t (gated tri-modal)
    nn::Vector mask;  // matching length
};

struct GenerationConfig {
    enum class Strategy { Greedy, Beam };
    Strategy strategy = Strategy::Greedy;
    int beam_width = 4;
    int max_decode_len = 64;
    double length_penalty = 0.0;
};

class Model {
public:
    Model(ModelConfig cfg, unsigned seed);

    const ModelConfig& config() const { return cfg_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }

    // Text backend stub: embedding table + sinusoidal positions + self-attention.
    TextFeatures embed_text(const TokenSeq& seq) const;

    // Image adapter layer (identity-initialized, frozen by default).
    nn::Var project_image(const nn::Matrix& features) const;

    // Cross-modal multi-head attention; `which` selects the caption-x-image
    // ("img") or caption-x-ocr ("ocr") parameter set.
    nn::Var cross_modal_attention(const TextFeatures& x_t, const nn::Var& x_i,
                                  const std::string& which = "img") const;

    // Attention + post-norm residual blocks, before any concatenation: r x d_t.
    // kv_mask, when given, removes padded key/value rows from the key set.
    nn::Var encoder_stream(const TextFeatures& x_t, const nn::Var& x_i,
                           const std::string& which = "img",
                           const nn::Vector* kv_mask = nullptr) const;

    // Base model: C_T = [x_T ; stream], 2r x d_t.
    EncoderState encoder_forward(const TextFeatures& x_t, const nn::Var& x_i) const;

    struct GateOutput {
        nn::Var c_t;       // r x d_t
        nn::Var lambda;    // 1x1, in (0,1)
    };
    // Tri-modal fusion: C_T = lambda * z_img + z_ocr. When the post has no OCR
    // text, pass ocr_present=false with a zero z_ocr; pooling then uses the
    // learned null vector.
    GateOutput gate_forward(const nn::Var& z_img, const nn::Var& z_ocr,
                            const nn::Vector& mask, bool ocr_present = true) const;

    // Full encode path for one sample (caption + image, plus OCR when gated).
    EncoderState encode_sample(const Sample& s, const Vocabulary& vocab) const;

    // Teacher-forced decoder: logits for every prefix position (n x vocab).
    nn::Var decoder_forward(const std::vector<int>& input_ids, const EncoderState& enc) const;

    // Next-token logits after the given prefix (prefix[0] must be BOS): 1 x vocab.
    nn::Var decode_step(const std::vector<int>& prefix, const EncoderState& enc) const;

    nn::Var classify_sarcasm_logit(const EncoderState& enc) const;
    double classify_sarcasm(const EncoderState& enc) const;  // sigmoid(logit)

private:
    nn::Var self_attention(const nn::Var& x, const nn::Var& kv, const std::string& prefix,
                           const nn::Matrix& additive_mask, int kv_width) const;
    nn::Var decoder_layer(const nn::Var& x, const EncoderState& enc, int layer,
                          const nn::Matrix& causal_mask) const;

    ModelConfig cfg_;
    nn::ParamStore params_;
};

// Content token ids (BOS/EOS stripped). Generic over the scorer so search can
// be exercised against hand-built probability tables.
using StepScorer = std::function<Eigen::VectorXd(const std::vector<int>& prefix)>;
std::vector<int> search_tokens(const StepScorer& scorer, int vocab_size, const GenerationConfig& cfg);

std::vector<int> generate(const Model& m, const EncoderState& enc, const GenerationConfig& cfg);

// Mean token-level cross-entropy over non-PAD targets.
nn::Var lm_loss(const nn::Var& logits, const std::vector<int>& targets);

// Sinusoidal position table (constant).
nn::Matrix sinusoidal_positions(int len, int dim);

}  // namespace muse::model
