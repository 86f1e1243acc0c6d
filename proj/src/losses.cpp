#include "promptcount/losses.hpp"

namespace pc {

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "l2") return LossVariant::L2;
    if (s == "fixed_point") return LossVariant::FixedPoint;
    if (s == "infinity_only") return LossVariant::InfinityOnly;
    if (s == "finite_tprime") return LossVariant::FiniteTPrime;
    if (s == "infinity_tprime") return LossVariant::InfinityPlusTPrime;
    throw Error("unknown loss variant: " + s);
}

std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::L2: return "l2";
        case LossVariant::FixedPoint: return "fixed_point";
        case LossVariant::InfinityOnly: return "infinity_only";
        case LossVariant::FiniteTPrime: return "finite_tprime";
        case LossVariant::InfinityPlusTPrime: return "infinity_tprime";
    }
    return "?";
}

double l2_loss(const Tensor& d, const Tensor& d_gt, Reduction r) {
    if (!d.same_shape(d_gt)) throw Error("l2_loss: shape mismatch");
    double raw = 0.0;
    kern::sse_fwd(d, d_gt, raw);
    return r == Reduction::Mean ? raw / static_cast<double>(d.numel()) : raw;
}

double loss_infinity(const Tensor& d_gt, const Tensor& features, const ModelParams& p,
                     const ModelConfig& cfg, Reduction r) {
    if (!(d_gt.sum() > kEmptyMassEps)) throw Error("empty ground truth");
    return l2_loss(fixed_point_step(d_gt, features, p, cfg), d_gt, r);
}

double loss_T(const Tensor& d_T, const Tensor& g, Reduction r) { return l2_loss(d_T, g, r); }

double fixed_point_loss(const Tensor& mask, const Tensor& features, const Tensor& d_gt,
                        const ModelParams& p, const ModelConfig& cfg, int iterations,
                        Reduction r) {
    RefineResult rr = refine(mask, features, p, cfg, iterations);
    if (rr.truncated || rr.iterates.empty()) throw Error("vanished density");
    const Tensor g = fixed_point_step(d_gt, features, p, cfg);  // shared d^(inf) stand-in
    return loss_T(rr.iterates.back(), g, r) + l2_loss(g, d_gt, r);
}

double loss_T_prime(const Tensor& mask, const Tensor& features, const Tensor& d_gt,
                    const ModelParams& p, const ModelConfig& cfg, int iterations, Reduction r) {
    RefineResult rr = refine(mask, features, p, cfg, iterations);
    if (rr.truncated || rr.iterates.empty()) throw Error("vanished density");
    return l2_loss(rr.iterates.back(), d_gt, r);
}

namespace {

// Run T-1 untracked refinement steps from the mask; returns the detached
// input of the final tracked step (d^(T-1), which is the mask when T = 1).
// If an intermediate density loses all mass, stop early and hand back the
// last live iterate: the tracked step then re-runs the dead transition, so
// the gradient can pull the model away from the collapse.
Tensor untracked_prefix(Tape& tape, Var features, const Tensor& mask, const ModelParams& p,
                        const ModelConfig& cfg, int iterations) {
    Tensor d = mask;
    if (!(d.sum() > kEmptyMassEps)) throw Error("empty mask");
    for (int t = 0; t + 1 < iterations; ++t) {
        double mass = d.sum();
        Tensor token;
        kern::masked_mean_fwd(tape.val(features), d, token, mass);
        Tape inner(false);
        ParamVars ipv = register_params(inner, p, false);
        Tensor next =
            inner.val(predict_on(inner, inner.leaf(tape.val(features)), inner.leaf(token), ipv, cfg));
        if (!(next.sum() > kEmptyMassEps)) break;
        d = std::move(next);
    }
    return d;
}

}  // namespace

SampleLossBuild build_sample_loss(Tape& tape, const ParamVars& pv, Var features,
                                  const Tensor& mask, const Tensor& d_gt, const ModelConfig& cfg,
                                  const LossConfig& loss_cfg) {
    // The untracked prefix needs parameter values; rebuild them from the tape
    // leaves so callers only hand over ParamVars.
    ModelParams p;
    {
        auto dst = p.named();
        auto src = pv.named();
        for (size_t i = 0; i < dst.size(); ++i) *dst[i].second = tape.val(src[i].second);
    }
    const Reduction red = loss_cfg.reduction;
    const int T = loss_cfg.iterations;
    Var gt = tape.leaf(d_gt);
    const bool empty_gt = !(d_gt.sum() > kEmptyMassEps);

    SampleLossBuild out;
    switch (loss_cfg.variant) {
        case LossVariant::L2: {
            Var mask_var = tape.leaf(mask);
            Var d1 = step_on(tape, mask_var, features, pv, cfg);
            out.loss = tape.sse(d1, gt, red);
            break;
        }
        case LossVariant::FixedPoint: {
            Tensor z = untracked_prefix(tape, features, mask, p, cfg, T);
            Var dT = step_on(tape, tape.leaf(z), features, pv, cfg);
            if (empty_gt) {
                out.loss = tape.sse(dT, gt, red);
                out.skipped_infinity = true;
                break;
            }
            Var dinf = step_on(tape, gt, features, pv, cfg);
            out.loss = tape.add(tape.sse(dT, dinf, red), tape.sse(dinf, gt, red));
            break;
        }
        case LossVariant::InfinityOnly: {
            if (empty_gt) throw Error("empty ground truth");
            Var dinf = step_on(tape, gt, features, pv, cfg);
            out.loss = tape.sse(dinf, gt, red);
            break;
        }
        case LossVariant::FiniteTPrime: {
            Tensor z = untracked_prefix(tape, features, mask, p, cfg, T);
            Var dT = step_on(tape, tape.leaf(z), features, pv, cfg);
            out.loss = tape.sse(dT, gt, red);
            break;
        }
        case LossVariant::InfinityPlusTPrime: {
            Tensor z = untracked_prefix(tape, features, mask, p, cfg, T);
            Var dT = step_on(tape, tape.leaf(z), features, pv, cfg);
            if (empty_gt) {
                out.loss = tape.sse(dT, gt, red);
                out.skipped_infinity = true;
                break;
            }
            Var dinf = step_on(tape, gt, features, pv, cfg);
            out.loss = tape.add(tape.sse(dT, gt, red), tape.sse(dinf, gt, red));
            break;
        }
    }
    return out;
}

}  // namespace pc
