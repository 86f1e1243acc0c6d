#pragma once

#include "promptcount/model.hpp"
#include "promptcount/scene.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pc {

// Counting metrics. Per the standard convention, "MSE" is the root mean
// squared error (the name is kept for table compatibility).
struct Metrics {
    double mae = 0;
    double mse = 0;
    int n = 0;
};

Metrics compute_metrics(const std::vector<double>& pred_counts,
                        const std::vector<double>& gt_counts);

struct EvalReport {
    std::vector<std::pair<std::string, Metrics>> rows;  // box/point/text + average
    std::optional<Metrics> negatives;                   // N-MAE/N-MSE
    std::vector<Metrics> sweep;                         // per-T table, index 0 is T=1

    std::string to_table() const;  // stable column order, 2 decimals
};

// Per-prompt-type metrics over identical scenes, plus the across-type
// average row. Missing prompt types are reported as absent.
EvalReport cross_prompt_eval(const std::vector<TrainingSample>& samples,
                             const ModelParams& params, const ModelConfig& cfg, int iterations);

// Negative protocol: prompt token from sample A applied to sample B's image
// (classes must differ), scored against a zero ground truth. Pairing is a
// seeded shuffle with class-inequality rejection.
Metrics negative_eval(const std::vector<TrainingSample>& samples, const ModelParams& params,
                      const ModelConfig& cfg, int iterations, uint64_t seed);

// Negative count for one directed pair (exposed for the protocol tests).
double negative_count(const TrainingSample& prompt_sample, const TrainingSample& scene_sample,
                      const ModelParams& params, const ModelConfig& cfg, int iterations);

// MAE/MSE for T = 1..t_max on a fixed sample set.
std::vector<Metrics> iteration_sweep(const std::vector<TrainingSample>& samples,
                                     const ModelParams& params, const ModelConfig& cfg, int t_max);

// 8-bit grayscale visualization (P5), min-max normalized; an all-equal map
// renders black. A sidecar "<path>.txt" records the true count.
void render_density_image(const Tensor& density, const std::string& path);

}  // namespace pc
