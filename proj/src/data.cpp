#include "muse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <unordered_set>

namespace muse {

using nlohmann::json;

std::string split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
        default: return "unassigned";
    }
}

std::vector<const Sample*> Dataset::in_split(Split s) const {
    std::vector<const Sample*> out;
    for (const auto& smp : samples)
        if (smp.split == s) out.push_back(&smp);
    return out;
}

namespace {

[[noreturn]] void line_error(size_t line_no, const std::string& msg) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": " + msg);
}

Split parse_split(const json& j, size_t line_no) {
    if (j.is_null()) return Split::Unassigned;
    if (!j.is_string()) line_error(line_no, "field \"split\" must be a string or null");
    const std::string s = j.get<std::string>();
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    line_error(line_no, "unknown split value \"" + s + "\"");
}

}  // namespace

Dataset load_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open dataset: " + path);

    Dataset ds;
    ds.source_path = path;
    std::unordered_set<std::string> seen_ids;

    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            line_error(line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!j.is_object()) line_error(line_no, "record is not a JSON object");

        Sample s;
        if (!j.contains("id") || !j["id"].is_string()) line_error(line_no, "missing or non-string field \"id\"");
        s.id = j["id"].get<std::string>();
        if (!seen_ids.insert(s.id).second) line_error(line_no, "duplicate id \"" + s.id + "\"");

        if (!j.contains("caption") || !j["caption"].is_string())
            line_error(line_no, "missing or non-string field \"caption\"");
        s.caption = j["caption"].get<std::string>();
        if (s.caption.empty()) line_error(line_no, "field \"caption\" is empty");

        if (!j.contains("explanation") || !j["explanation"].is_string())
            line_error(line_no, "missing or non-string field \"explanation\"");
        s.explanation = j["explanation"].get<std::string>();

        if (j.contains("image") && !j["image"].is_null()) {
            if (!j["image"].is_string()) line_error(line_no, "field \"image\" must be a string path or null");
            s.image_path = j["image"].get<std::string>();
        }
        if (j.contains("image_features") && !j["image_features"].is_null()) {
            const auto& feats = j["image_features"];
            if (!feats.is_array() || feats.empty()) line_error(line_no, "field \"image_features\" must be a non-empty 2D array");
            const size_t cols = feats[0].size();
            if (cols == 0) line_error(line_no, "field \"image_features\" rows must be non-empty");
            Eigen::MatrixXd m(feats.size(), cols);
            for (size_t r = 0; r < feats.size(); ++r) {
                if (!feats[r].is_array() || feats[r].size() != cols)
                    line_error(line_no, "field \"image_features\" is ragged");
                for (size_t c = 0; c < cols; ++c) m(r, c) = feats[r][c].get<double>();
            }
            s.image_features = std::move(m);
        }
        if (j.contains("ocr_text") && !j["ocr_text"].is_null()) {
            if (!j["ocr_text"].is_string()) line_error(line_no, "field \"ocr_text\" must be a string or null");
            std::string ocr = j["ocr_text"].get<std::string>();
            if (!ocr.empty()) s.ocr_text = std::move(ocr);
        }
        s.is_ocr_sample = s.ocr_text.has_value();
        s.split = j.contains("split") ? parse_split(j["split"], line_no) : Split::Unassigned;
        if (s.split != Split::Unassigned && s.explanation.empty())
            line_error(line_no, "field \"explanation\" is empty for split sample \"" + s.id + "\"");
        if (j.contains("label") && !j["label"].is_null()) {
            const auto& lbl = j["label"];
            if (lbl.is_number_integer()) {
                int v = lbl.get<int>();
                if (v != 0 && v != 1) line_error(line_no, "field \"label\" must be 0 or 1");
                s.label = v;
            } else if (lbl.is_boolean()) {
                s.label = lbl.get<bool>() ? 1 : 0;
            } else {
                line_error(line_no, "field \"label\" must be 0/1 or boolean");
            }
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

void split_dataset(Dataset& ds, SplitRatios ratios, unsigned seed, bool resplit) {
    if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0))
        throw std::invalid_argument("split ratios must be positive");
    if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must sum to 1");

    std::vector<size_t> pool;
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        if (resplit || ds.samples[i].split == Split::Unassigned) pool.push_back(i);
    }
    if (pool.empty()) return;
    if (ds.samples.size() < 3) throw std::runtime_error("need at least 3 samples to populate all splits");

    std::mt19937 rng(seed);
    std::shuffle(pool.begin(), pool.end(), rng);

    const auto n = static_cast<long long>(pool.size());
    long long n_val = std::llround(ratios.val * static_cast<double>(n));
    long long n_test = std::llround(ratios.test * static_cast<double>(n));
    long long n_train = n - n_val - n_test;  // remainder to train
    if (n_train < 1 || n_val < 1 || n_test < 1)
        throw std::runtime_error("too few samples to populate all splits");

    size_t k = 0;
    for (long long i = 0; i < n_train; ++i) ds.samples[pool[k++]].split = Split::Train;
    for (long long i = 0; i < n_val; ++i) ds.samples[pool[k++]].split = Split::Val;
    for (long long i = 0; i < n_test; ++i) ds.samples[pool[k++]].split = Split::Test;
}

namespace {

SplitStats stats_for(const std::vector<const Sample*>& samples) {
    SplitStats st;
    st.count = static_cast<long long>(samples.size());
    if (samples.empty()) return st;
    long long cap_tokens = 0, exp_tokens = 0;
    std::set<std::string> cap_vocab, exp_vocab;
    for (const Sample* s : samples) {
        auto ct = tokenize(s->caption);
        auto et = tokenize(s->explanation);
        cap_tokens += static_cast<long long>(ct.size());
        exp_tokens += static_cast<long long>(et.size());
        cap_vocab.insert(ct.begin(), ct.end());
        exp_vocab.insert(et.begin(), et.end());
    }
    st.avg_caption_len = static_cast<double>(cap_tokens) / static_cast<double>(st.count);
    st.avg_explanation_len = static_cast<double>(exp_tokens) / static_cast<double>(st.count);
    st.caption_vocab = static_cast<long long>(cap_vocab.size());
    st.explanation_vocab = static_cast<long long>(exp_vocab.size());
    return st;
}

}  // namespace

StatsTable compute_stats(const Dataset& ds) {
    StatsTable t;
    t.train = stats_for(ds.in_split(Split::Train));
    t.val = stats_for(ds.in_split(Split::Val));
    t.test = stats_for(ds.in_split(Split::Test));
    std::vector<const Sample*> all;
    for (const auto& s : ds.samples) all.push_back(&s);
    t.total = stats_for(all);
    return t;
}

ExclusionReport validate_exclusions(const Dataset& ds) {
    ExclusionReport rep;
    for (const auto& s : ds.samples) {
        if (s.caption.empty()) {
            rep.empty_caption_ids.push_back(s.id);
            continue;
        }
        std::string lower = s.caption;
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (lower.find("#sarcasm") != std::string::npos || lower.find("#sarcastic") != std::string::npos)
            rep.explicit_marker_ids.push_back(s.id);
    }
    return rep;
}

Vocabulary build_vocabulary(const Dataset& ds, int min_freq) {
    std::vector<std::string> texts;
    for (const auto& s : ds.samples) {
        if (s.split != Split::Train) continue;
        texts.push_back(s.caption);
        texts.push_back(s.explanation);
        if (s.ocr_text) texts.push_back(*s.ocr_text);
    }
    return build_vocabulary(texts, min_freq);
}

}  // namespace muse
