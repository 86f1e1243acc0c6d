#include "promptcount/train.hpp"

#include "promptcount/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>

namespace pc {

void TrainConfig::validate() const {
    if (epochs < 0) throw Error("epochs must be >= 0");
    if (batch_size < 1) throw Error("batch size must be >= 1");
    if (contrastive && batch_size < 2) throw Error("contrastive training needs batch size >= 2");
    if (!(learning_rate > 0)) throw Error("learning rate must be positive");
    if (momentum < 0 || momentum >= 1) throw Error("momentum must be in [0,1)");
    if (clip_norm < 0) throw Error("clip_norm must be >= 0");
    if (optimizer != "sgd" && optimizer != "adam") throw Error("unknown optimizer: " + optimizer);
    if (loss.iterations < 1) throw Error("loss iterations must be >= 1");
    if (!(text_strategy.tau > 0)) throw Error("tau must be positive");
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open train config: " + path);
    TrainConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream in(line);
        std::string key, eq, value;
        if (!(in >> key)) continue;
        if (!(in >> eq >> value) || eq != "=")
            throw Error("bad config line " + std::to_string(lineno) + " in " + path);
        try {
            if (key == "epochs") cfg.epochs = std::stoi(value);
            else if (key == "batch_size") cfg.batch_size = std::stoi(value);
            else if (key == "learning_rate") cfg.learning_rate = std::stod(value);
            else if (key == "momentum") cfg.momentum = std::stod(value);
            else if (key == "clip_norm") cfg.clip_norm = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "optimizer") cfg.optimizer = value;
            else if (key == "contrastive") cfg.contrastive = value == "1" || value == "true";
            else if (key == "loss") cfg.loss.variant = loss_variant_from_string(value);
            else if (key == "iterations") cfg.loss.iterations = std::stoi(value);
            else if (key == "reduction")
                cfg.loss.reduction = value == "mean" ? Reduction::Mean : Reduction::Sum;
            else if (key == "text_strategy")
                cfg.text_strategy.kind =
                    value == "cosine" ? MaskStrategy::Cosine : MaskStrategy::Softmax;
            else if (key == "tau") cfg.text_strategy.tau = std::stod(value);
            else throw Error("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw Error("bad value for " + key + " on line " + std::to_string(lineno));
        }
    }
    apply_seed_override(cfg);
    cfg.validate();
    return cfg;
}

void apply_seed_override(uint64_t& seed) {
    if (const char* env = std::getenv("PROMPTCOUNT_SEED")) seed = std::stoull(env);
}

void apply_seed_override(TrainConfig& cfg) { apply_seed_override(cfg.seed); }

std::vector<TrainingSample> build_samples(const Dataset& ds, const EmbeddingBackend& backend,
                                          const ModelConfig& cfg, const MaskStrategy& strategy,
                                          uint64_t seed) {
    std::vector<TrainingSample> samples;
    samples.reserve(ds.size());
    const PromptType cycle[] = {PromptType::Box, PromptType::Point, PromptType::Text};
    for (size_t i = 0; i < ds.size(); ++i) {
        std::mt19937_64 rng(seed ^ (0x517cc1b727220a95ull * (i + 1)));
        TrainingSample s = make_sample(ds.scenes[i], ds.primary_class[i], cycle[i % 3], rng,
                                       backend, strategy, cfg.feature_size());
        // Class identity for evaluation protocols is the library class, not
        // the within-scene slot.
        const std::string& name =
            ds.scenes[i].annotation.classes[static_cast<size_t>(ds.primary_class[i])].name;
        for (size_t k = 0; k < ds.library.size(); ++k)
            if (ds.library[k].name == name) s.class_id = static_cast<int>(k);
        samples.push_back(std::move(s));
    }
    return samples;
}

std::string format_log(const std::vector<EpochLog>& log) {
    std::string out;
    char buf[128];
    for (const auto& e : log) {
        std::snprintf(buf, sizeof(buf), "%d\t%.6f\t%.4f\t%.4f\n", e.epoch, e.loss, e.val_mae,
                      e.val_mse);
        out += buf;
    }
    return out;
}

double predict_count(const TrainingSample& sample, const ModelParams& params,
                     const ModelConfig& cfg, int iterations) {
    const Tensor features = encode_image(sample.image, params, cfg);
    RefineResult r = refine(sample.mask, features, params, cfg, iterations);
    if (r.iterates.empty()) return 0.0;
    return count(r.iterates.back());
}

namespace {

struct FlatGrad {
    std::vector<Tensor> slots;
    double loss = 0.0;
    bool skipped_infinity = false;
    bool vanished = false;
};

// Gradient of the configured loss for one (possibly contrastive) item.
FlatGrad sample_gradient(const Tensor& image_a, const Tensor* image_b, const Tensor& mask,
                         const Tensor& target, const ModelParams& params,
                         const ModelConfig& model_cfg, const LossConfig& loss_cfg) {
    FlatGrad out;
    Tape tape(true);
    ParamVars pv = register_params(tape, params, true);
    Var fa = encode_on(tape, tape.leaf(image_a), pv, model_cfg);
    Var features = fa;
    if (image_b != nullptr) {
        Var fb = encode_on(tape, tape.leaf(*image_b), pv, model_cfg);
        features = tape.concat_width(fa, fb);
    }
    SampleLossBuild built;
    try {
        built = build_sample_loss(tape, pv, features, mask, target, model_cfg, loss_cfg);
    } catch (const Error&) {
        out.vanished = true;  // density died mid-refinement; skip the sample
        return out;
    }
    out.skipped_infinity = built.skipped_infinity;
    out.loss = tape.val(built.loss).v[0];
    tape.backward(built.loss);
    auto named = pv.named();
    out.slots.reserve(named.size());
    for (auto& [name, var] : named) {
        const Tensor& g = tape.grad(var);
        out.slots.push_back(g.v.empty() ? Tensor(tape.val(var).shape) : g);
    }
    return out;
}

}  // namespace

TrainResult train(const std::vector<TrainingSample>& train_samples,
                  const std::vector<TrainingSample>& val_samples, const ModelConfig& model_cfg,
                  const TrainConfig& cfg, ModelParams init) {
    cfg.validate();
    model_cfg.validate();
    if (train_samples.empty()) throw Error("empty training set");

    TrainResult result;
    result.params = std::move(init);

    auto named = result.params.named();
    std::vector<Tensor> velocity, adam_m, adam_v;
    velocity.reserve(named.size());
    for (auto& [name, t] : named) velocity.emplace_back(t->shape);
    const bool adam = cfg.optimizer == "adam";
    if (adam) {
        for (auto& [name, t] : named) {
            adam_m.emplace_back(t->shape);
            adam_v.emplace_back(t->shape);
        }
    }
    int64_t step_count = 0;

    std::mt19937_64 rng(cfg.seed);
    std::vector<size_t> order(train_samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        int64_t items_seen = 0;

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
            const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
            std::vector<const TrainingSample*> batch;
            for (size_t k = start; k < end; ++k) batch.push_back(&train_samples[order[k]]);

            struct Item {
                const Tensor* image_a;
                const Tensor* image_b;  // null when not contrastive
                const Tensor* mask;
                const Tensor* target;
            };
            std::vector<Item> items;
            std::vector<ContrastiveItem> citems;
            if (cfg.contrastive && batch.size() >= 2) {
                citems = make_contrastive_batch(batch, rng);
                for (const auto& c : citems)
                    items.push_back({c.image_a, c.image_b, &c.mask, &c.target});
            } else {
                for (const auto* s : batch)
                    items.push_back({&s->image, nullptr, &s->mask, &s->gt_density});
            }

            std::vector<FlatGrad> grads(items.size());
#pragma omp parallel for schedule(dynamic)
            for (size_t i = 0; i < items.size(); ++i)
                grads[i] = sample_gradient(*items[i].image_a, items[i].image_b, *items[i].mask,
                                           *items[i].target, result.params, model_cfg, cfg.loss);

            // Reduce in index order (thread-count independent).
            std::vector<Tensor> total;
            int used = 0;
            double batch_loss = 0.0;
            for (auto& g : grads) {
                if (g.vanished) {
                    ++result.skipped_vanished;
                    continue;
                }
                if (g.skipped_infinity) ++result.skipped_empty_gt;
                if (total.empty()) {
                    total = g.slots;
                } else {
                    for (size_t s = 0; s < total.size(); ++s)
                        for (int64_t k = 0; k < total[s].numel(); ++k) total[s][k] += g.slots[s][k];
                }
                batch_loss += g.loss;
                ++used;
            }
            if (used == 0) continue;
            if (!std::isfinite(batch_loss))
                throw Error("training diverged: non-finite loss at epoch " +
                            std::to_string(epoch));
            epoch_loss += batch_loss;
            items_seen += used;

            double scale = 1.0 / used;
            if (cfg.clip_norm > 0) {
                double norm_sq = 0;
                for (const auto& t : total)
                    for (double g : t.v) norm_sq += g * scale * g * scale;
                const double norm = std::sqrt(norm_sq);
                if (norm > cfg.clip_norm) scale *= cfg.clip_norm / norm;
            }
            ++step_count;
            if (adam) {
                const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count));
                const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count));
                for (size_t s = 0; s < total.size(); ++s) {
                    Tensor& p = *named[s].second;
                    for (int64_t k = 0; k < p.numel(); ++k) {
                        const double g = total[s][k] * scale;
                        adam_m[s][k] = b1 * adam_m[s][k] + (1 - b1) * g;
                        adam_v[s][k] = b2 * adam_v[s][k] + (1 - b2) * g * g;
                        p[k] -= cfg.learning_rate * (adam_m[s][k] / bc1) /
                                (std::sqrt(adam_v[s][k] / bc2) + eps);
                    }
                }
            } else {
                for (size_t s = 0; s < total.size(); ++s) {
                    Tensor& p = *named[s].second;
                    Tensor& v = velocity[s];
                    for (int64_t k = 0; k < p.numel(); ++k) {
                        v[k] = cfg.momentum * v[k] - cfg.learning_rate * total[s][k] * scale;
                        p[k] += v[k];
                    }
                }
            }
        }

        EpochLog log;
        log.epoch = epoch;
        log.loss = items_seen > 0 ? epoch_loss / static_cast<double>(items_seen) : 0.0;
        if (!val_samples.empty()) {
            double abs_sum = 0, sq_sum = 0;
            for (const auto& s : val_samples) {
                const double pred = predict_count(s, result.params, model_cfg,
                                                  cfg.loss.iterations);
                const double diff = pred - s.gt_count;
                abs_sum += std::abs(diff);
                sq_sum += diff * diff;
            }
            log.val_mae = abs_sum / static_cast<double>(val_samples.size());
            log.val_mse = std::sqrt(sq_sum / static_cast<double>(val_samples.size()));
        }
        result.log.push_back(log);
    }
    return result;
}

}  // namespace pc
