#include "muse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <random>
#include <sstream>
#include <stdexcept>

namespace muse::train {

using nlohmann::json;
using nn::Matrix;
using nn::Var;

namespace {

constexpr char kMagic[8] = {'M', 'U', 'S', 'E', 'C', 'K', 'P', 'T'};
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;

json model_cfg_to_json(const model::ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"max_len", c.max_len},   {"d_t", c.d_t},
                {"d_i", c.d_i},               {"q", c.q},               {"heads", c.heads},
                {"d_ff", c.d_ff},             {"text_layers", c.text_layers},
                {"dec_layers", c.dec_layers}, {"d_gate", c.d_gate},
                {"use_ocr_gate", c.use_ocr_gate}, {"max_decode_len", c.max_decode_len}};
}

model::ModelConfig model_cfg_from_json(const json& j) {
    model::ModelConfig c;
    c.vocab_size = j.at("vocab_size");
    c.max_len = j.at("max_len");
    c.d_t = j.at("d_t");
    c.d_i = j.at("d_i");
    c.q = j.at("q");
    c.heads = j.at("heads");
    c.d_ff = j.at("d_ff");
    c.text_layers = j.at("text_layers");
    c.dec_layers = j.at("dec_layers");
    c.d_gate = j.at("d_gate");
    c.use_ocr_gate = j.at("use_ocr_gate");
    c.max_decode_len = j.at("max_decode_len");
    return c;
}

json train_cfg_to_json(const TrainConfig& c) {
    return json{{"phase", c.phase == Phase::Pretrain ? "pretrain" : "finetune"},
                {"epochs", c.epochs},
                {"batch_size", c.batch_size},
                {"lr_encoder", c.lr_encoder},
                {"lr_lm_head", c.lr_lm_head},
                {"lr_other", c.lr_other},
                {"weight_decay", c.weight_decay},
                {"grad_clip", c.grad_clip},
                {"seed", c.seed},
                {"freeze", std::vector<std::string>(c.freeze.begin(), c.freeze.end())},
                {"early_stop", c.early_stop},
                {"patience", c.patience},
                {"min_freq", c.min_freq}};
}

TrainConfig train_cfg_from_json(const json& j) {
    TrainConfig c;
    c.phase = j.at("phase") == "pretrain" ? Phase::Pretrain : Phase::Finetune;
    c.epochs = j.at("epochs");
    c.batch_size = j.at("batch_size");
    c.lr_encoder = j.at("lr_encoder");
    c.lr_lm_head = j.at("lr_lm_head");
    c.lr_other = j.at("lr_other");
    c.weight_decay = j.at("weight_decay");
    c.grad_clip = j.at("grad_clip");
    c.seed = j.at("seed");
    for (const auto& g : j.at("freeze")) c.freeze.insert(g.get<std::string>());
    c.early_stop = j.at("early_stop");
    c.patience = j.at("patience");
    c.min_freq = j.at("min_freq");
    return c;
}

template <typename T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
    T v;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw std::runtime_error("checkpoint truncated");
    return v;
}

void write_array(std::ostream& os, const std::string& name, const Matrix& m) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(os, 0);  // dtype: f64
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.rows()));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) write_pod<double>(os, m(i, j));
}

std::pair<std::string, Matrix> read_array(std::istream& is) {
    const auto name_len = read_pod<std::uint32_t>(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint truncated");
    const auto dtype = read_pod<std::uint8_t>(is);
    if (dtype != 0) throw std::runtime_error("unsupported checkpoint array dtype");
    const auto rows = read_pod<std::uint32_t>(is);
    const auto cols = read_pod<std::uint32_t>(is);
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i)
        for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = read_pod<double>(is);
    return {std::move(name), std::move(m)};
}

// Per-sample loss graph.
Var sample_loss(const model::Model& m, const Sample& s, const Vocabulary& vocab, Phase phase) {
    model::EncoderState enc = m.encode_sample(s, vocab);
    if (phase == Phase::Pretrain) {
        if (!s.label) throw std::runtime_error("pretraining sample \"" + s.id + "\" has no label");
        return nn::bce_with_logit(m.classify_sarcasm_logit(enc), static_cast<double>(*s.label));
    }
    TokenSeq expl = encode(s.explanation, vocab, m.config().max_decode_len + 1);
    std::vector<int> input(expl.ids.begin(), expl.ids.begin() + expl.length_unpadded - 1);
    std::vector<int> target(expl.ids.begin() + 1, expl.ids.begin() + expl.length_unpadded);
    return model::lm_loss(m.decoder_forward(input, enc), target);
}

struct AdamW {
    std::map<std::string, Matrix> m, v;
    long long step = 0;

    void apply(nn::ParamStore& params, const TrainConfig& cfg, double batch_n) {
        ++step;
        // global gradient norm over trainable groups
        double sq = 0.0;
        for (auto& [name, p] : params.params) {
            if (cfg.freeze.count(nn::ParamStore::group_of(name))) continue;
            sq += (p.grad() / batch_n).squaredNorm();
        }
        const double norm = std::sqrt(sq);
        const double clip = cfg.grad_clip > 0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;
        const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));

        for (auto& [name, p] : params.params) {
            if (cfg.freeze.count(nn::ParamStore::group_of(name))) continue;
            const double lr = group_learning_rate(name, cfg);
            Matrix g = (p.grad() / batch_n) * clip;
            auto& mm = m.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
            auto& vv = v.try_emplace(name, Matrix::Zero(g.rows(), g.cols())).first->second;
            mm = kBeta1 * mm + (1.0 - kBeta1) * g;
            vv = kBeta2 * vv + (1.0 - kBeta2) * g.cwiseProduct(g);
            Matrix update = (mm / bc1).array() / ((vv / bc2).array().sqrt() + kEps);
            // decoupled decay on weight matrices only (gains/biases are 1 x d)
            if (p.rows() > 1 && p.cols() > 1) p.value() -= lr * cfg.weight_decay * p.value();
            p.value() -= lr * update.matrix();
        }
    }
};

std::map<std::string, Matrix> snapshot(const nn::ParamStore& params) {
    std::map<std::string, Matrix> out;
    for (const auto& [name, p] : params.params) out.emplace(name, p.value());
    return out;
}

void install(model::Model& m, const std::map<std::string, Matrix>& values, bool partial_ok) {
    for (auto& [name, p] : m.params().params) {
        auto it = values.find(name);
        if (it == values.end()) {
            if (partial_ok) continue;
            throw std::runtime_error("checkpoint missing parameter " + name);
        }
        if (it->second.rows() != p.rows() || it->second.cols() != p.cols())
            throw std::runtime_error("checkpoint parameter shape mismatch for " + name);
        p.value() = it->second;
    }
}

double eval_loss(const model::Model& m, const std::vector<const Sample*>& samples,
                 const Vocabulary& vocab, Phase phase) {
    if (samples.empty()) return 0.0;
    double total = 0.0;
    for (const Sample* s : samples) total += sample_loss(m, *s, vocab, phase).value()(0, 0);
    return total / static_cast<double>(samples.size());
}

Checkpoint run_training(const Dataset& ds, const TrainConfig& cfg, const model::ModelConfig& mcfg_in,
                        const Checkpoint* init) {
    cfg.validate();

    Vocabulary vocab;
    model::ModelConfig mcfg = mcfg_in;
    const bool resume = init != nullptr && init->train_cfg.phase == cfg.phase;
    if (init != nullptr) {
        vocab = init->vocab;
        if (init->model_cfg.d_t != mcfg.d_t || init->model_cfg.heads != mcfg.heads ||
            init->model_cfg.d_i != mcfg.d_i || init->model_cfg.q != mcfg.q ||
            init->model_cfg.max_len != mcfg.max_len || init->model_cfg.text_layers != mcfg.text_layers)
            throw std::runtime_error("init checkpoint architecture does not match the requested model");
        if (mcfg.vocab_size != 0 && mcfg.vocab_size != vocab.size())
            throw std::runtime_error("vocabulary mismatch with init checkpoint");
        mcfg.vocab_size = vocab.size();
    } else {
        vocab = build_vocabulary(ds, cfg.min_freq);
        mcfg.vocab_size = vocab.size();
    }

    model::Model mdl(mcfg, cfg.seed);
    std::mt19937 rng(cfg.seed + 1);
    AdamW opt;
    int start_epoch = 0;
    if (resume) {
        install(mdl, init->params, false);
        opt.m = init->adam_m;
        opt.v = init->adam_v;
        opt.step = init->adam_step;
        std::istringstream ss(init->rng_state);
        ss >> rng;
        start_epoch = init->epoch;
    } else if (init != nullptr) {
        install(mdl, init->params, true);  // warm start shared groups from pretraining
    }

    auto train_split = ds.in_split(Split::Train);
    if (train_split.empty()) throw std::runtime_error("training split is empty");
    auto val_split = ds.in_split(Split::Val);
    const auto& monitor = val_split.empty() ? train_split : val_split;

    Checkpoint ckpt;
    ckpt.model_cfg = mcfg;
    ckpt.train_cfg = cfg;
    ckpt.vocab = vocab;
    ckpt.best_val_loss = std::numeric_limits<double>::infinity();
    if (resume) {
        ckpt.best_val_loss = init->best_val_loss;
        ckpt.best_params = init->best_params;
        ckpt.history = init->history;
    }

    int since_best = 0;
    std::vector<size_t> order(train_split.size());

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        // reset before shuffling so the epoch's order depends only on the rng
        // stream, which survives checkpoint round-trips
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        size_t done = 0;
        while (done < order.size()) {
            const size_t batch_n = std::min<size_t>(cfg.batch_size, order.size() - done);
            mdl.params().zero_grads();
            for (size_t b = 0; b < batch_n; ++b) {
                Var loss = sample_loss(mdl, *train_split[order[done + b]], vocab, cfg.phase);
                epoch_loss += loss.value()(0, 0);
                nn::backward(loss);
            }
            opt.apply(mdl.params(), cfg, static_cast<double>(batch_n));
            done += batch_n;
        }
        const double train_loss = epoch_loss / static_cast<double>(order.size());
        const double val_loss = eval_loss(mdl, monitor, vocab, cfg.phase);
        ckpt.history.push_back({epoch + 1, train_loss, val_loss});

        if (val_loss < ckpt.best_val_loss) {
            ckpt.best_val_loss = val_loss;
            ckpt.best_params = snapshot(mdl.params());
            since_best = 0;
        } else {
            ++since_best;
        }
        if (cfg.early_stop && since_best >= cfg.patience) break;
    }

    ckpt.params = snapshot(mdl.params());
    if (ckpt.best_params.empty()) {
        ckpt.best_params = ckpt.params;
        ckpt.best_val_loss = eval_loss(mdl, monitor, vocab, cfg.phase);
    }
    ckpt.adam_m = std::move(opt.m);
    ckpt.adam_v = std::move(opt.v);
    ckpt.adam_step = opt.step;
    ckpt.epoch = static_cast<int>(ckpt.history.size());
    std::ostringstream ss;
    ss << rng;
    ckpt.rng_state = ss.str();
    return ckpt;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (lr_encoder <= 0 || lr_lm_head <= 0 || lr_other <= 0)
        throw std::invalid_argument("learning rates must be positive");
}

double group_learning_rate(const std::string& param_name, const TrainConfig& cfg) {
    const std::string group = nn::ParamStore::group_of(param_name);
    if (group == "encoder") return cfg.lr_encoder;
    if (group == "lm_head") return cfg.lr_lm_head;
    return cfg.lr_other;
}

Checkpoint pretrain(const Dataset& ds, const TrainConfig& cfg, const model::ModelConfig& mcfg) {
    TrainConfig c = cfg;
    c.phase = Phase::Pretrain;
    // only the encoder path and the classification head learn
    c.freeze.insert({"image_backend", "decoder", "lm_head"});
    if (mcfg.use_ocr_gate) c.freeze.insert("gate");
    for (const Sample* s : ds.in_split(Split::Train))
        if (!s->label) throw std::runtime_error("pretraining sample \"" + s->id + "\" has no label");
    return run_training(ds, c, mcfg, nullptr);
}

Checkpoint finetune(const Dataset& ds, const TrainConfig& cfg, const model::ModelConfig& mcfg,
                    const Checkpoint* init) {
    TrainConfig c = cfg;
    c.phase = Phase::Finetune;
    return run_training(ds, c, mcfg, init);
}

model::Model restore_model(const Checkpoint& ckpt, bool use_best) {
    model::Model m(ckpt.model_cfg, 0);
    install(m, use_best ? ckpt.best_params : ckpt.params, false);
    return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_pod<std::uint32_t>(os, Checkpoint::kSchemaVersion);

    json header;
    header["model_cfg"] = model_cfg_to_json(ckpt.model_cfg);
    header["train_cfg"] = train_cfg_to_json(ckpt.train_cfg);
    header["vocab"] = ckpt.vocab.id_to_token;
    header["adam_step"] = ckpt.adam_step;
    header["epoch"] = ckpt.epoch;
    header["best_val_loss"] = ckpt.best_val_loss;
    header["rng_state"] = ckpt.rng_state;
    json hist = json::array();
    for (const auto& r : ckpt.history)
        hist.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"val_loss", r.val_loss}});
    header["history"] = hist;
    const std::string blob = header.dump();
    write_pod<std::uint64_t>(os, blob.size());
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));

    const std::uint64_t count = ckpt.params.size() + ckpt.best_params.size() + ckpt.adam_m.size() +
                                ckpt.adam_v.size();
    write_pod<std::uint64_t>(os, count);
    for (const auto& [n, m] : ckpt.params) write_array(os, "param/" + n, m);
    for (const auto& [n, m] : ckpt.best_params) write_array(os, "best/" + n, m);
    for (const auto& [n, m] : ckpt.adam_m) write_array(os, "adam_m/" + n, m);
    for (const auto& [n, m] : ckpt.adam_v) write_array(os, "adam_v/" + n, m);
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != Checkpoint::kSchemaVersion)
        throw std::runtime_error("unsupported checkpoint schema version " + std::to_string(version));
    const auto blob_len = read_pod<std::uint64_t>(is);
    std::string blob(blob_len, '\0');
    if (!is.read(blob.data(), static_cast<std::streamsize>(blob_len)))
        throw std::runtime_error("checkpoint truncated");
    json header = json::parse(blob);

    Checkpoint ckpt;
    ckpt.model_cfg = model_cfg_from_json(header.at("model_cfg"));
    ckpt.train_cfg = train_cfg_from_json(header.at("train_cfg"));
    ckpt.vocab.id_to_token = header.at("vocab").get<std::vector<std::string>>();
    ckpt.vocab.token_to_id.clear();
    for (int i = 0; i < ckpt.vocab.size(); ++i) ckpt.vocab.token_to_id[ckpt.vocab.id_to_token[i]] = i;
    ckpt.adam_step = header.at("adam_step");
    ckpt.epoch = header.at("epoch");
    ckpt.best_val_loss = header.at("best_val_loss").is_null()
                             ? std::numeric_limits<double>::infinity()
                             : header.at("best_val_loss").get<double>();
    ckpt.rng_state = header.at("rng_state");
    for (const auto& r : header.at("history"))
        ckpt.history.push_back({r.at("epoch"), r.at("train_loss"), r.at("val_loss")});

    const auto count = read_pod<std::uint64_t>(is);
    for (std::uint64_t i = 0; i < count; ++i) {
        auto [name, m] = read_array(is);
        if (name.rfind("param/", 0) == 0)
            ckpt.params.emplace(name.substr(6), std::move(m));
        else if (name.rfind("best/", 0) == 0)
            ckpt.best_params.emplace(name.substr(5), std::move(m));
        else if (name.rfind("adam_m/", 0) == 0)
            ckpt.adam_m.emplace(name.substr(7), std::move(m));
        else if (name.rfind("adam_v/", 0) == 0)
            ckpt.adam_v.emplace(name.substr(7), std::move(m));
        else
            throw std::runtime_error("unknown checkpoint array " + name);
    }
    return ckpt;
}

}  // namespace muse::train
