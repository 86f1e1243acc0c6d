#pragma once

#include "promptcount/dataset.hpp"
#include "promptcount/losses.hpp"
#include "promptcount/model.hpp"
#include "promptcount/scene.hpp"

#include <string>
#include <vector>

namespace pc {

struct TrainConfig {
    int epochs = 12;
    int batch_size = 8;
    double learning_rate = 1e-3;
    double momentum = 0.9;
    double clip_norm = 1.0;  // global gradient-norm clip; 0 disables
    uint64_t seed = 1;
    std::string optimizer = "sgd";  // sgd with momentum
    bool contrastive = false;
    LossConfig loss;
    MaskStrategy text_strategy;  // strategy used to build text prompt masks

    void validate() const;
};

// Key-value config file ("key = value" lines, '#' comments). Unknown keys are
// rejected. PROMPTCOUNT_SEED in the environment overrides the seed.
TrainConfig load_train_config(const std::string& path);
void apply_seed_override(TrainConfig& cfg);
void apply_seed_override(uint64_t& seed);

// Materialize training samples from a dataset. Prompt types cycle
// box/point/text by sample index; text masks use the given strategy.
std::vector<TrainingSample> build_samples(const Dataset& ds, const EmbeddingBackend& backend,
                                          const ModelConfig& cfg, const MaskStrategy& strategy,
                                          uint64_t seed);

struct EpochLog {
    int epoch = 0;
    double loss = 0;
    double val_mae = 0;
    double val_mse = 0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochLog> log;
    int skipped_empty_gt = 0;
    int skipped_vanished = 0;
};

std::string format_log(const std::vector<EpochLog>& log);  // "epoch\tloss\tval_mae\tval_mse"

// SGD with momentum over the fixed-point (or configured) loss. Batch
// gradients are evaluated per sample and reduced in index order, so results
// are reproducible at any thread count. Aborts with a diagnostic on
// non-finite loss.
TrainResult train(const std::vector<TrainingSample>& train_samples,
                  const std::vector<TrainingSample>& val_samples, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, ModelParams init);

// Inference helper: predicted count for one sample at the configured T.
double predict_count(const TrainingSample& sample, const ModelParams& params,
                     const ModelConfig& cfg, int iterations);

}  // namespace pc
