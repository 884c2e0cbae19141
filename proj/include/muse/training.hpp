#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "muse/data.hpp"
#include "muse/model.hpp"
#include "muse/vocab.hpp"

namespace muse::train {

enum class Phase { Pretrain, Finetune };

struct TrainConfig {
    Phase phase = Phase::Finetune;
    int epochs = 125;
    int batch_size = 16;
    double lr_encoder = 1e-5;
    double lr_lm_head = 3e-4;
    double lr_other = 1e-5;
    double weight_decay = 0.01;
    double grad_clip = 1.0;
    unsigned seed = 13;
    std::set<std::string> freeze = {"image_backend"};
    bool early_stop = false;
    int patience = 10;
    int min_freq = 1;

    void validate() const;
};

struct EpochRecord {
    int epoch;
    double train_loss;
    double val_loss;
};

struct Checkpoint {
    static constexpr int kSchemaVersion = 1;

    model::ModelConfig model_cfg;
    TrainConfig train_cfg;
    Vocabulary vocab;
    std::map<std::string, nn::Matrix> params;       // live state, resumable
    std::map<std::string, nn::Matrix> best_params;  // lowest validation loss
    std::map<std::string, nn::Matrix> adam_m;
    std::map<std::string, nn::Matrix> adam_v;
    long long adam_step = 0;
    int epoch = 0;
    double best_val_loss = 0.0;
    std::string rng_state;  // mt19937 stream
    std::vector<EpochRecord> history;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Sarcasm-classification pretraining; samples must carry 0/1 labels.
Checkpoint pretrain(const Dataset& ds, const TrainConfig& cfg, const model::ModelConfig& mcfg);

// Explanation-generation fine-tuning, optionally warm-started (or resumed)
// from a previous checkpoint.
Checkpoint finetune(const Dataset& ds, const TrainConfig& cfg, const model::ModelConfig& mcfg,
                    const Checkpoint* init = nullptr);

// Model with a checkpoint's best parameters installed.
model::Model restore_model(const Checkpoint& ckpt, bool use_best = true);

// Learning rate assignment, exposed for tests.
double group_learning_rate(const std::string& param_name, const TrainConfig& cfg);

}  // namespace muse::train
