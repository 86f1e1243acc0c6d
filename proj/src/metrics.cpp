#include "promptcount/metrics.hpp"

#include "promptcount/io.hpp"
#include "promptcount/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>

namespace pc {

Metrics compute_metrics(const std::vector<double>& pred_counts,
                        const std::vector<double>& gt_counts) {
    if (pred_counts.empty() || pred_counts.size() != gt_counts.size())
        throw Error("compute_metrics: need equal non-empty count lists");
    double abs_sum = 0, sq_sum = 0;
    for (size_t i = 0; i < pred_counts.size(); ++i) {
        const double d = pred_counts[i] - gt_counts[i];
        abs_sum += std::abs(d);
        sq_sum += d * d;
    }
    Metrics m;
    m.n = static_cast<int>(pred_counts.size());
    m.mae = abs_sum / static_cast<double>(m.n);
    m.mse = std::sqrt(sq_sum / static_cast<double>(m.n));
    return m;
}

std::string EvalReport::to_table() const {
    std::string out;
    char buf[160];
    out += "prompt      MAE      MSE        n\n";
    for (const auto& [name, m] : rows) {
        if (m.n == 0) {
            std::snprintf(buf, sizeof(buf), "%-8s  absent   absent      0\n", name.c_str());
        } else {
            std::snprintf(buf, sizeof(buf), "%-8s %7.2f  %7.2f  %5d\n", name.c_str(), m.mae, m.mse,
                          m.n);
        }
        out += buf;
    }
    if (negatives) {
        std::snprintf(buf, sizeof(buf), "negative %7.2f  %7.2f  %5d\n", negatives->mae,
                      negatives->mse, negatives->n);
        out += buf;
    }
    if (!sweep.empty()) {
        out += "T        MAE      MSE\n";
        for (size_t t = 0; t < sweep.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "%-6zu %7.2f  %7.2f\n", t + 1, sweep[t].mae,
                          sweep[t].mse);
            out += buf;
        }
    }
    return out;
}

EvalReport cross_prompt_eval(const std::vector<TrainingSample>& samples,
                             const ModelParams& params, const ModelConfig& cfg, int iterations) {
    EvalReport report;
    const std::pair<PromptType, const char*> kinds[] = {{PromptType::Box, "box"},
                                                        {PromptType::Point, "point"},
                                                        {PromptType::Text, "text"}};
    std::vector<Metrics> present;
    for (const auto& [type, name] : kinds) {
        std::vector<double> preds, gts;
        for (const auto& s : samples) {
            if (s.type != type) continue;
            preds.push_back(predict_count(s, params, cfg, iterations));
            gts.push_back(s.gt_count);
        }
        Metrics m;
        if (!preds.empty()) {
            m = compute_metrics(preds, gts);
            present.push_back(m);
        }
        report.rows.emplace_back(name, m);
    }
    Metrics avg;
    if (!present.empty()) {
        for (const auto& m : present) {
            avg.mae += m.mae;
            avg.mse += m.mse;
            avg.n += m.n;
        }
        avg.mae /= static_cast<double>(present.size());
        avg.mse /= static_cast<double>(present.size());
    }
    report.rows.emplace_back("average", avg);
    return report;
}

double negative_count(const TrainingSample& prompt_sample, const TrainingSample& scene_sample,
                      const ModelParams& params, const ModelConfig& cfg, int iterations) {
    const Tensor fa = encode_image(prompt_sample.image, params, cfg);
    const Tensor token = aggregate_token(fa, prompt_sample.mask);
    const Tensor fb = encode_image(scene_sample.image, params, cfg);
    Tensor d = predict_density(fb, token, params, cfg);
    for (int t = 1; t < iterations; ++t) {
        if (!(d.sum() > kEmptyMassEps)) break;  // vanished: the desired outcome here
        d = fixed_point_step(d, fb, params, cfg);
    }
    return count(d);
}

Metrics negative_eval(const std::vector<TrainingSample>& samples, const ModelParams& params,
                      const ModelConfig& cfg, int iterations, uint64_t seed) {
    if (samples.size() < 2) throw Error("negative_eval needs at least 2 samples");
    std::mt19937_64 rng(seed);
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    std::vector<double> preds;
    for (size_t i = 0; i < samples.size(); ++i) {
        // Partner: next shuffled index with a different class.
        size_t partner = samples.size();
        for (size_t k = 0; k < order.size(); ++k) {
            const size_t cand = order[(i + k) % order.size()];
            if (cand != i && samples[cand].class_id != samples[i].class_id) {
                partner = cand;
                break;
            }
        }
        if (partner == samples.size()) continue;  // no differing class available
        preds.push_back(
            negative_count(samples[i], samples[partner], params, cfg, iterations));
    }
    if (preds.empty()) throw Error("negative_eval: no cross-class pairs found");
    std::vector<double> zeros(preds.size(), 0.0);
    return compute_metrics(preds, zeros);
}

std::vector<Metrics> iteration_sweep(const std::vector<TrainingSample>& samples,
                                     const ModelParams& params, const ModelConfig& cfg,
                                     int t_max) {
    if (t_max < 1) throw Error("iteration_sweep: t_max must be >= 1");
    std::vector<std::vector<double>> preds(static_cast<size_t>(t_max));
    std::vector<double> gts;
    for (const auto& s : samples) {
        gts.push_back(s.gt_count);
        const Tensor features = encode_image(s.image, params, cfg);
        RefineResult r = refine(s.mask, features, params, cfg, t_max);
        for (int t = 0; t < t_max; ++t) {
            const size_t idx = std::min(r.iterates.size() - 1, static_cast<size_t>(t));
            preds[static_cast<size_t>(t)].push_back(
                r.iterates.empty() ? 0.0 : count(r.iterates[idx]));
        }
    }
    std::vector<Metrics> out;
    for (int t = 0; t < t_max; ++t) out.push_back(compute_metrics(preds[static_cast<size_t>(t)], gts));
    return out;
}

void render_density_image(const Tensor& density, const std::string& path) {
    if (density.rank() != 2) throw Error("render_density_image: density must be 2-D");
    const int h = density.dim(0), w = density.dim(1);
    double lo = density.v[0], hi = density.v[0];
    for (double x : density.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<uint8_t> gray(static_cast<size_t>(h) * w, 0);
    const double range = hi - lo;
    if (range > 0) {
        for (size_t i = 0; i < gray.size(); ++i)
            gray[i] = static_cast<uint8_t>(std::lround((density.v[i] - lo) / range * 255.0));
    }
    save_pgm(path, gray, h, w);
    std::ofstream side(path + ".txt");
    if (!side) throw Error("cannot write sidecar for " + path);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "count %.6f\n", density.sum());
    side << buf;
}

}  // namespace pc
