#include "promptcount/autodiff.hpp"

namespace pc {

Var Tape::leaf(Tensor value, bool requires_grad) {
    return push(std::move(value), track_ && requires_grad, nullptr);
}

const Tensor& Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<size_t>(v.id)];
    if (!n.requires_grad) throw Error("grad requested for a non-tracked variable");
    return n.grad;
}

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Tensor& Tape::grad_slot(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.v.empty()) n.grad = Tensor(n.value.shape);
    return n.grad;
}

void Tape::backward(Var scalar_loss) {
    if (nodes_[static_cast<size_t>(scalar_loss.id)].value.numel() != 1)
        throw Error("backward expects a scalar loss");
    backward_with(scalar_loss, Tensor::scalar(1.0));
}

void Tape::backward_with(Var output, const Tensor& cotangent) {
    Node& out = nodes_[static_cast<size_t>(output.id)];
    if (!out.requires_grad) throw Error("backward on a non-tracked output");
    if (out.value.shape != cotangent.shape) throw Error("cotangent shape mismatch");
    Tensor& g = grad_slot(output.id);
    for (int64_t i = 0; i < cotangent.numel(); ++i) g[i] += cotangent[i];
    for (int i = output.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<size_t>(i)];
        if (n.requires_grad && n.back && !n.grad.v.empty()) n.back(*this);
    }
}

Var Tape::conv2d(Var xv, Var wv, Var bv, int stride, int pad) {
    Tensor y;
    kern::conv2d_fwd(val(xv), val(wv), val(bv), stride, pad, y);
    const bool needs = rg(xv) || rg(wv) || rg(bv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.rg(xv)) kern::conv2d_bwd_input(gy, t.val(wv), stride, pad, t.grad_slot(xv.id));
        if (t.rg(wv)) {
            Tensor& gw = t.grad_slot(wv.id);
            Tensor& gb = t.grad_slot(bv.id);
            kern::conv2d_bwd_params(gy, t.val(xv), stride, pad, gw, gb);
        }
    });
}

Var Tape::activation(Var xv, Activation a) {
    Tensor y;
    kern::act_fwd(val(xv), a, y);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), rg(xv), [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        kern::act_bwd(t.val(xv), t.val(Var{self}), gy, a, t.grad_slot(xv.id));
    });
}

Var Tape::matvec(Var wv, Var bv, Var xv) {
    Tensor y;
    kern::matvec_fwd(val(wv), val(bv), val(xv), y);
    const bool needs = rg(xv) || rg(wv) || rg(bv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gw_dummy, gb_dummy, gx_dummy;
        Tensor& gw = t.rg(wv) ? t.grad_slot(wv.id) : (gw_dummy = Tensor(t.val(wv).shape), gw_dummy);
        Tensor& gb = t.rg(bv) ? t.grad_slot(bv.id) : (gb_dummy = Tensor(t.val(bv).shape), gb_dummy);
        Tensor& gx = t.rg(xv) ? t.grad_slot(xv.id) : (gx_dummy = Tensor(t.val(xv).shape), gx_dummy);
        kern::matvec_bwd(t.val(wv), t.val(xv), gy, gw, gb, gx);
    });
}

Var Tape::masked_mean(Var fv, Var mv) {
    Tensor token;
    double mass = 0.0;
    kern::masked_mean_fwd(val(fv), val(mv), token, mass);
    const bool needs = rg(fv) || rg(mv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(token), needs, [=](Tape& t) {
        const Tensor& gt = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gf_dummy, gm_dummy;
        Tensor& gf = t.rg(fv) ? t.grad_slot(fv.id) : (gf_dummy = Tensor(t.val(fv).shape), gf_dummy);
        Tensor& gm = t.rg(mv) ? t.grad_slot(mv.id) : (gm_dummy = Tensor(t.val(mv).shape), gm_dummy);
        kern::masked_mean_bwd(t.val(fv), t.val(mv), t.val(Var{self}), mass, gt, gf, gm);
    });
}

Var Tape::attn_scores(Var kv, Var qv, int heads) {
    Tensor s;
    kern::attn_scores_fwd(val(kv), val(qv), heads, s);
    const bool needs = rg(kv) || rg(qv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(s), needs, [=](Tape& t) {
        const Tensor& gs = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gk_dummy, gq_dummy;
        Tensor& gk = t.rg(kv) ? t.grad_slot(kv.id) : (gk_dummy = Tensor(t.val(kv).shape), gk_dummy);
        Tensor& gq = t.rg(qv) ? t.grad_slot(qv.id) : (gq_dummy = Tensor(t.val(qv).shape), gq_dummy);
        kern::attn_scores_bwd(t.val(kv), t.val(qv), heads, gs, gk, gq);
    });
}

Var Tape::attn_normalize(Var sv) {
    Tensor y;
    kern::attn_norm_fwd(val(sv), y);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), rg(sv), [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        kern::attn_norm_bwd(t.val(Var{self}), gy, t.grad_slot(sv.id));
    });
}

Var Tape::attn_cosine(Var kv, Var qv, int heads) {
    Tensor y;
    kern::attn_cosine_fwd(val(kv), val(qv), heads, y);
    const bool needs = rg(kv) || rg(qv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gk_dummy, gq_dummy;
        Tensor& gk = t.rg(kv) ? t.grad_slot(kv.id) : (gk_dummy = Tensor(t.val(kv).shape), gk_dummy);
        Tensor& gq = t.rg(qv) ? t.grad_slot(qv.id) : (gq_dummy = Tensor(t.val(qv).shape), gq_dummy);
        kern::attn_cosine_bwd(t.val(kv), t.val(qv), heads, t.val(Var{self}), gy, gk, gq);
    });
}

Var Tape::center_spatial(Var xv) {
    Tensor y;
    kern::center_spatial_fwd(val(xv), y);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), rg(xv), [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        kern::center_spatial_bwd(gy, t.grad_slot(xv.id));
    });
}

Var Tape::sub_rowmean(Var tv, Var fv) {
    Tensor y;
    kern::sub_rowmean_fwd(val(tv), val(fv), y);
    const bool needs = rg(tv) || rg(fv);
    const int64_t cells = static_cast<int64_t>(val(fv).dim(1)) * val(fv).dim(2);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gt_dummy, gf_dummy;
        Tensor& gt = t.rg(tv) ? t.grad_slot(tv.id) : (gt_dummy = Tensor(t.val(tv).shape), gt_dummy);
        Tensor& gf = t.rg(fv) ? t.grad_slot(fv.id) : (gf_dummy = Tensor(t.val(fv).shape), gf_dummy);
        kern::sub_rowmean_bwd(gy, cells, gt, gf);
    });
}

Var Tape::gate(Var vv, Var sv) {
    Tensor y;
    kern::gate_fwd(val(vv), val(sv), y);
    const bool needs = rg(vv) || rg(sv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor gv_dummy, gs_dummy;
        Tensor& gv = t.rg(vv) ? t.grad_slot(vv.id) : (gv_dummy = Tensor(t.val(vv).shape), gv_dummy);
        Tensor& gs = t.rg(sv) ? t.grad_slot(sv.id) : (gs_dummy = Tensor(t.val(sv).shape), gs_dummy);
        kern::gate_bwd(t.val(vv), t.val(sv), gy, gv, gs);
    });
}

Var Tape::concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw Error("concat_channels: empty input");
    const int h = val(xs[0]).dim(1), w = val(xs[0]).dim(2);
    int ctot = 0;
    bool needs = false;
    for (Var x : xs) {
        ctot += val(x).dim(0);
        needs = needs || rg(x);
        if (val(x).dim(1) != h || val(x).dim(2) != w)
            throw Error("concat_channels: spatial shape mismatch");
    }
    Tensor y({ctot, h, w});
    const int64_t plane = static_cast<int64_t>(h) * w;
    int64_t off = 0;
    for (Var x : xs) {
        const Tensor& t = val(x);
        std::copy(t.v.begin(), t.v.end(), y.v.begin() + off);
        off += t.numel();
    }
    (void)plane;
    int self = static_cast<int>(nodes_.size());
    auto parts = xs;
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        int64_t o = 0;
        for (Var x : parts) {
            const int64_t n = t.val(x).numel();
            if (t.rg(x)) {
                Tensor& gx = t.grad_slot(x.id);
                for (int64_t i = 0; i < n; ++i) gx[i] += gy[o + i];
            }
            o += n;
        }
    });
}

Var Tape::concat_width(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1))
        throw Error("concat_width: incompatible shapes");
    const int c = a.dim(0), h = a.dim(1), wa = a.dim(2), wb = b.dim(2);
    Tensor y({c, h, wa + wb});
    for (int ch = 0; ch < c; ++ch)
        for (int row = 0; row < h; ++row) {
            for (int x = 0; x < wa; ++x) y.at3(ch, row, x) = a.at3(ch, row, x);
            for (int x = 0; x < wb; ++x) y.at3(ch, row, wa + x) = b.at3(ch, row, x);
        }
    const bool needs = rg(av) || rg(bv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.rg(av)) {
            Tensor& ga = t.grad_slot(av.id);
            for (int ch = 0; ch < c; ++ch)
                for (int row = 0; row < h; ++row)
                    for (int x = 0; x < wa; ++x) ga.at3(ch, row, x) += gy.at3(ch, row, x);
        }
        if (t.rg(bv)) {
            Tensor& gb = t.grad_slot(bv.id);
            for (int ch = 0; ch < c; ++ch)
                for (int row = 0; row < h; ++row)
                    for (int x = 0; x < wb; ++x) gb.at3(ch, row, x) += gy.at3(ch, row, wa + x);
        }
    });
}

Var Tape::reshape(Var xv, std::vector<int> shape) {
    const Tensor& x = val(xv);
    if (Tensor::count(shape) != x.numel()) throw Error("reshape: element count mismatch");
    Tensor y = x;
    y.shape = shape;
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), rg(xv), [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gx = t.grad_slot(xv.id);
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += gy[i];
    });
}

Var Tape::scale(Var xv, double factor) {
    Tensor y = val(xv);
    for (auto& v : y.v) v *= factor;
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), rg(xv), [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        Tensor& gx = t.grad_slot(xv.id);
        for (int64_t i = 0; i < gy.numel(); ++i) gx[i] += factor * gy[i];
    });
}

Var Tape::sse(Var av, Var bv, Reduction reduction) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    if (!a.same_shape(b)) throw Error("sse: shape mismatch");
    double raw = 0.0;
    kern::sse_fwd(a, b, raw);
    const double coeff = reduction == Reduction::Mean ? 1.0 / static_cast<double>(a.numel()) : 1.0;
    const bool needs = rg(av) || rg(bv);
    int self = static_cast<int>(nodes_.size());
    return push(Tensor::scalar(raw * coeff), needs, [=](Tape& t) {
        const double g = t.nodes_[static_cast<size_t>(self)].grad.v[0];
        Tensor ga_dummy, gb_dummy;
        Tensor& ga = t.rg(av) ? t.grad_slot(av.id) : (ga_dummy = Tensor(t.val(av).shape), ga_dummy);
        Tensor& gb = t.rg(bv) ? t.grad_slot(bv.id) : (gb_dummy = Tensor(t.val(bv).shape), gb_dummy);
        kern::sse_bwd(t.val(av), t.val(bv), g, coeff, ga, gb);
    });
}

Var Tape::add(Var av, Var bv) {
    const Tensor& a = val(av);
    const Tensor& b = val(bv);
    if (!a.same_shape(b)) throw Error("add: shape mismatch");
    Tensor y = a;
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += b[i];
    const bool needs = rg(av) || rg(bv);
    int self = static_cast<int>(nodes_.size());
    return push(std::move(y), needs, [=](Tape& t) {
        const Tensor& gy = t.nodes_[static_cast<size_t>(self)].grad;
        if (t.rg(av)) {
            Tensor& ga = t.grad_slot(av.id);
            for (int64_t i = 0; i < gy.numel(); ++i) ga[i] += gy[i];
        }
        if (t.rg(bv)) {
            Tensor& gb = t.grad_slot(bv.id);
            for (int64_t i = 0; i < gy.numel(); ++i) gb[i] += gy[i];
        }
    });
}

}  // namespace pc
