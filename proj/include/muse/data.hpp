#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "muse/vocab.hpp"

namespace muse {

enum class Split { Train, Val, Test, Unassigned };

std::string split_name(Split s);

struct Sample {
    std::string id;
    std::string image_path;                        // may be empty
    std::optional<Eigen::MatrixXd> image_features; // inline features, q x d_i
    std::string caption;
    std::string explanation;
    std::optional<std::string> ocr_text;
    bool is_ocr_sample = false;
    Split split = Split::Unassigned;
    std::optional<int> label;  // sarcastic(1)/non-sarcastic(0), pretraining only
};

struct Dataset {
    std::vector<Sample> samples;
    std::string source_path;
    int schema_version = 1;

    std::vector<const Sample*> in_split(Split s) const;
};

struct SplitStats {
    long long count = 0;
    double avg_caption_len = 0.0;
    long long caption_vocab = 0;
    double avg_explanation_len = 0.0;
    long long explanation_vocab = 0;
};

struct StatsTable {
    SplitStats train, val, test, total;
};

struct ExclusionReport {
    std::vector<std::string> explicit_marker_ids;  // #sarcasm / #sarcastic in caption
    std::vector<std::string> empty_caption_ids;
};

Dataset load_dataset(const std::string& path);

struct SplitRatios {
    double train = 0.85, val = 0.05, test = 0.10;
};

// Deterministic shuffle under seed; pre-assigned splits win unless resplit.
void split_dataset(Dataset& ds, SplitRatios ratios, unsigned seed, bool resplit = false);

StatsTable compute_stats(const Dataset& ds);

ExclusionReport validate_exclusions(const Dataset& ds);

// Vocabulary over captions, explanations and ocr_text of train-split samples.
Vocabulary build_vocabulary(const Dataset& ds, int min_freq = 1);

}  // namespace muse
