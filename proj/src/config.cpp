#include "muse/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

extern char** environ;

namespace muse::cli {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

// Values normalized to a plain string; arrays to comma-joined entries.
std::string parse_value(const std::string& raw, const std::string& key) {
    std::string v = trim(raw);
    if (v.empty()) throw std::invalid_argument("config key \"" + key + "\" has an empty value");
    if (v.front() == '"') {
        if (v.size() < 2 || v.back() != '"')
            throw std::invalid_argument("config key \"" + key + "\": unterminated string");
        return v.substr(1, v.size() - 2);
    }
    if (v.front() == '[') {
        if (v.back() != ']') throw std::invalid_argument("config key \"" + key + "\": unterminated array");
        std::string inner = v.substr(1, v.size() - 2);
        std::string out;
        std::stringstream ss(inner);
        std::string item;
        while (std::getline(ss, item, ',')) {
            item = trim(item);
            if (item.empty()) continue;
            if (item.front() == '"' && item.back() == '"' && item.size() >= 2)
                item = item.substr(1, item.size() - 2);
            if (!out.empty()) out.push_back(',');
            out += item;
        }
        return out;
    }
    return v;
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos;
        int out = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw std::invalid_argument("config key \"" + key + "\": expected integer, got \"" + v + "\"");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos;
        double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return out;
    } catch (...) {
        throw std::invalid_argument("config key \"" + key + "\": expected number, got \"" + v + "\"");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "true") return true;
    if (v == "false") return false;
    throw std::invalid_argument("config key \"" + key + "\": expected true/false, got \"" + v + "\"");
}

}  // namespace

std::map<std::string, std::string> parse_toml(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open config file: " + path);
    std::map<std::string, std::string> out;
    std::string line, section;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) {
            // keep '#' inside quoted strings
            bool in_str = false;
            size_t cut = std::string::npos;
            for (size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '"') in_str = !in_str;
                if (line[i] == '#' && !in_str) {
                    cut = i;
                    break;
                }
            }
            if (cut != std::string::npos) line = line.substr(0, cut);
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw std::invalid_argument("config line " + std::to_string(line_no) + ": bad section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
        std::string full = section.empty() ? key : section + "." + key;
        out[full] = parse_value(line.substr(eq + 1), full);
    }
    return out;
}

std::map<std::string, std::string> env_overrides() {
    std::map<std::string, std::string> out;
    for (char** e = environ; e && *e; ++e) {
        std::string entry(*e);
        if (entry.rfind("MUSE_", 0) != 0) continue;
        auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string name = entry.substr(5, eq - 5);
        auto sep = name.find("__");
        if (sep == std::string::npos) continue;
        std::string key = name.substr(0, sep) + "." + name.substr(sep + 2);
        std::transform(key.begin(), key.end(), key.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        out[key] = entry.substr(eq + 1);
    }
    return out;
}

void apply_entries(RunConfig& cfg, const std::map<std::string, std::string>& entries) {
    for (const auto& [key, v] : entries) {
        if (key == "model.d_t") cfg.model.d_t = to_int(v, key);
        else if (key == "model.d_i") cfg.model.d_i = to_int(v, key);
        else if (key == "model.q") cfg.model.q = to_int(v, key);
        else if (key == "model.heads") cfg.model.heads = to_int(v, key);
        else if (key == "model.d_ff") cfg.model.d_ff = to_int(v, key);
        else if (key == "model.d_gate") cfg.model.d_gate = to_int(v, key);
        else if (key == "model.text_layers") cfg.model.text_layers = to_int(v, key);
        else if (key == "model.dec_layers") cfg.model.dec_layers = to_int(v, key);
        else if (key == "model.max_len") cfg.model.max_len = to_int(v, key);
        else if (key == "model.max_decode_len") cfg.model.max_decode_len = to_int(v, key);
        else if (key == "model.use_ocr_gate") cfg.model.use_ocr_gate = to_bool(v, key);
        else if (key == "train.epochs") cfg.train.epochs = to_int(v, key);
        else if (key == "train.batch_size") cfg.train.batch_size = to_int(v, key);
        else if (key == "train.lr_encoder") cfg.train.lr_encoder = to_double(v, key);
        else if (key == "train.lr_lm_head") cfg.train.lr_lm_head = to_double(v, key);
        else if (key == "train.lr_other") cfg.train.lr_other = to_double(v, key);
        else if (key == "train.weight_decay") cfg.train.weight_decay = to_double(v, key);
        else if (key == "train.grad_clip") cfg.train.grad_clip = to_double(v, key);
        else if (key == "train.seed") cfg.train.seed = static_cast<unsigned>(to_int(v, key));
        else if (key == "train.early_stop") cfg.train.early_stop = to_bool(v, key);
        else if (key == "train.patience") cfg.train.patience = to_int(v, key);
        else if (key == "train.min_freq") cfg.train.min_freq = to_int(v, key);
        else if (key == "train.freeze") {
            cfg.train.freeze.clear();
            std::stringstream ss(v);
            std::string item;
            while (std::getline(ss, item, ','))
                if (!item.empty()) cfg.train.freeze.insert(item);
        } else if (key == "generate.strategy") {
            if (v == "greedy") cfg.generation.strategy = model::GenerationConfig::Strategy::Greedy;
            else if (v == "beam") cfg.generation.strategy = model::GenerationConfig::Strategy::Beam;
            else throw std::invalid_argument("config key \"generate.strategy\": expected greedy|beam");
        } else if (key == "generate.beam_width") cfg.generation.beam_width = to_int(v, key);
        else if (key == "generate.length_penalty") cfg.generation.length_penalty = to_double(v, key);
        else if (key == "generate.max_decode_len") cfg.generation.max_decode_len = to_int(v, key);
        else throw std::invalid_argument("unknown config key \"" + key + "\"");
    }
}

RunConfig resolve_config(const std::string& toml_path,
                         const std::map<std::string, std::string>& flag_overrides) {
    RunConfig cfg;
    if (!toml_path.empty()) apply_entries(cfg, parse_toml(toml_path));
    apply_entries(cfg, env_overrides());
    apply_entries(cfg, flag_overrides);
    return cfg;
}

json RunConfig::to_json() const {
    json j;
    j["model"] = {{"d_t", model.d_t},
                  {"d_i", model.d_i},
                  {"q", model.q},
                  {"heads", model.heads},
                  {"d_ff", model.d_ff},
                  {"d_gate", model.d_gate},
                  {"text_layers", model.text_layers},
                  {"dec_layers", model.dec_layers},
                  {"max_len", model.max_len},
                  {"max_decode_len", model.max_decode_len},
                  {"use_ocr_gate", model.use_ocr_gate},
                  {"vocab_size", model.vocab_size}};
    j["train"] = {{"phase", train.phase == train::Phase::Pretrain ? "pretrain" : "finetune"},
                  {"epochs", train.epochs},
                  {"batch_size", train.batch_size},
                  {"lr_encoder", train.lr_encoder},
                  {"lr_lm_head", train.lr_lm_head},
                  {"lr_other", train.lr_other},
                  {"weight_decay", train.weight_decay},
                  {"grad_clip", train.grad_clip},
                  {"seed", train.seed},
                  {"freeze", std::vector<std::string>(train.freeze.begin(), train.freeze.end())},
                  {"early_stop", train.early_stop},
                  {"patience", train.patience},
                  {"min_freq", train.min_freq}};
    j["generate"] = {
        {"strategy", generation.strategy == model::GenerationConfig::Strategy::Beam ? "beam" : "greedy"},
        {"beam_width", generation.beam_width},
        {"length_penalty", generation.length_penalty},
        {"max_decode_len", generation.max_decode_len}};
    return j;
}

void archive_config(const RunConfig& cfg, const std::string& output_path) {
    std::string path = output_path + ".config.json";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write resolved config: " + path);
    f << cfg.to_json().dump(2) << '\n';
}

}  // namespace muse::cli
