#pragma once

#include "promptcount/model.hpp"

#include <optional>

namespace pc {

enum class LossVariant { L2, FixedPoint, InfinityOnly, FiniteTPrime, InfinityPlusTPrime };

LossVariant loss_variant_from_string(const std::string& s);
std::string to_string(LossVariant v);

struct LossConfig {
    LossVariant variant = LossVariant::FixedPoint;
    int iterations = 2;  // T
    Reduction reduction = Reduction::Sum;
};

// Value-level losses over precomputed features.
double l2_loss(const Tensor& d, const Tensor& d_gt, Reduction r);

// L(F(d', Theta), d'): one fixed-point step applied to the ground truth,
// scored against the ground truth.
double loss_infinity(const Tensor& d_gt, const Tensor& features, const ModelParams& p,
                     const ModelConfig& cfg, Reduction r);

// L(d^(T), g) with g standing in for d^(inf).
double loss_T(const Tensor& d_T, const Tensor& g, Reduction r);

double fixed_point_loss(const Tensor& mask, const Tensor& features, const Tensor& d_gt,
                        const ModelParams& p, const ModelConfig& cfg, int iterations, Reduction r);

double loss_T_prime(const Tensor& mask, const Tensor& features, const Tensor& d_gt,
                    const ModelParams& p, const ModelConfig& cfg, int iterations, Reduction r);

// Training-path loss graph. Earlier iterates run untracked (the first-order
// rule: gradients flow through the final step only); F(d', Theta) is built
// once and shared by both loss terms. Samples with an empty ground truth
// skip the infinity term and fall back to L(d^(T), 0).
struct SampleLossBuild {
    Var loss;
    bool skipped_infinity = false;
};

SampleLossBuild build_sample_loss(Tape& tape, const ParamVars& pv, Var features,
                                  const Tensor& mask, const Tensor& d_gt, const ModelConfig& cfg,
                                  const LossConfig& loss_cfg);

}  // namespace pc
