#include "promptcount/gradcheck.hpp"

#include <cmath>
#include <sstream>

namespace pc {

// ---------------------------------------------------------------------------
// NeuralStepOp

NeuralStepOp::NeuralStepOp(Tensor features, ModelParams params, ModelConfig cfg)
    : features_(std::move(features)), params_(std::move(params)), cfg_(std::move(cfg)) {}

std::vector<Tensor*> NeuralStepOp::trainable() {
    return {&params_.attn_q_w, &params_.attn_q_b, &params_.attn_k_w, &params_.attn_k_b,
            &params_.attn_v_w, &params_.attn_v_b, &params_.attn_o_w, &params_.attn_o_b,
            &params_.dec_w1,   &params_.dec_b1,   &params_.dec_w2,   &params_.dec_b2,
            &params_.dec_w3,   &params_.dec_b3};
}

std::vector<const Tensor*> NeuralStepOp::trainable() const {
    auto mut = const_cast<NeuralStepOp*>(this)->trainable();
    return {mut.begin(), mut.end()};
}

Tensor NeuralStepOp::apply(const Tensor& d) const {
    return fixed_point_step(d, features_, params_, cfg_);
}

std::pair<Tensor, std::vector<double>> NeuralStepOp::vjp(const Tensor& d, const Tensor& u) const {
    Tape tape(true);
    ParamVars pv = register_params(tape, params_, true);
    Var dv = tape.leaf(d, true);
    Var out = step_on(tape, dv, tape.leaf(features_), pv, cfg_);
    tape.backward_with(out, u);

    std::vector<double> gtheta;
    auto named_src = pv.named();
    // Order must match parameters(): attention + decoder tensors only.
    const char* wanted[] = {"attn_q_w", "attn_q_b", "attn_k_w", "attn_k_b", "attn_v_w",
                            "attn_v_b", "attn_o_w", "attn_o_b", "dec_w1",   "dec_b1",
                            "dec_w2",   "dec_b2",   "dec_w3",   "dec_b3"};
    for (const char* name : wanted) {
        for (auto& [n, var] : named_src) {
            if (n == name) {
                const Tensor& g = tape.grad(var);
                if (g.v.empty()) {
                    const Tensor& val = tape.val(var);
                    gtheta.insert(gtheta.end(), static_cast<size_t>(val.numel()), 0.0);
                } else {
                    gtheta.insert(gtheta.end(), g.v.begin(), g.v.end());
                }
                break;
            }
        }
    }
    Tensor gd = tape.grad(dv);
    if (gd.v.empty()) gd = Tensor(d.shape);
    return {std::move(gd), std::move(gtheta)};
}

std::vector<double> NeuralStepOp::parameters() const {
    std::vector<double> out;
    for (const Tensor* t : trainable()) out.insert(out.end(), t->v.begin(), t->v.end());
    return out;
}

void NeuralStepOp::set_parameters(const std::vector<double>& theta) {
    size_t off = 0;
    for (Tensor* t : trainable()) {
        if (off + t->v.size() > theta.size()) throw Error("parameter vector too short");
        std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
                  theta.begin() + static_cast<std::ptrdiff_t>(off + t->v.size()), t->v.begin());
        off += t->v.size();
    }
    if (off != theta.size()) throw Error("parameter vector size mismatch");
}

// ---------------------------------------------------------------------------
// LinearContractionOp

LinearContractionOp::LinearContractionOp(double rho, double theta, std::vector<int> shape)
    : rho_(rho), theta_(theta), shape_(std::move(shape)) {}

Tensor LinearContractionOp::apply(const Tensor& d) const {
    Tensor out = d;
    for (auto& x : out.v) x = rho_ * x + theta_;
    return out;
}

std::pair<Tensor, std::vector<double>> LinearContractionOp::vjp(const Tensor& d,
                                                                const Tensor& u) const {
    (void)d;
    Tensor gd = u;
    for (auto& x : gd.v) x *= rho_;
    double gtheta = 0.0;
    for (double x : u.v) gtheta += x;
    return {std::move(gd), {gtheta}};
}

Tensor LinearContractionOp::fixed_point() const {
    Tensor out(shape_);
    out.fill(theta_ / (1.0 - rho_));
    return out;
}

// ---------------------------------------------------------------------------
// ScalarLogisticOp

Tensor ScalarLogisticOp::apply(const Tensor& d) const {
    Tensor out = d;
    out.v[0] = 1.0 / (1.0 + std::exp(-theta_ * d.v[0]));
    return out;
}

std::pair<Tensor, std::vector<double>> ScalarLogisticOp::vjp(const Tensor& d,
                                                             const Tensor& u) const {
    const double y = 1.0 / (1.0 + std::exp(-theta_ * d.v[0]));
    const double dy = y * (1.0 - y);
    Tensor gd = d;
    gd.v[0] = u.v[0] * dy * theta_;
    return {std::move(gd), {u.v[0] * dy * d.v[0]}};
}

double ScalarLogisticOp::solve_fixed_point(double d0, int max_iters, double tol) const {
    double d = d0;
    for (int i = 0; i < max_iters; ++i) {
        const double next = 1.0 / (1.0 + std::exp(-theta_ * d));
        if (std::abs(next - d) < tol) return next;
        d = next;
    }
    return d;
}

double ScalarLogisticOp::analytic_implicit_gradient(double d_gt) const {
    const double dstar = solve_fixed_point(0.5);
    const double y = dstar;  // F(d*) = d* at the fixed point
    const double sp = y * (1.0 - y);
    const double dF_dtheta = sp * dstar;
    const double dF_dd = sp * theta_;
    const double dd_dtheta = dF_dtheta / (1.0 - dF_dd);
    return 2.0 * (dstar - d_gt) * dd_dtheta;
}

// ---------------------------------------------------------------------------
// Gradient routes

namespace {

std::vector<Tensor> iterate_all(const FixedPointOp& op, const Tensor& d0, int iterations) {
    std::vector<Tensor> ds;
    ds.reserve(static_cast<size_t>(iterations) + 1);
    ds.push_back(d0);
    for (int t = 0; t < iterations; ++t) ds.push_back(op.apply(ds.back()));
    return ds;
}

Tensor loss_grad(const Tensor& d, const Tensor& d_gt, Reduction red) {
    Tensor u = d;
    const double coeff =
        red == Reduction::Mean ? 1.0 / static_cast<double>(d.numel()) : 1.0;
    for (int64_t i = 0; i < d.numel(); ++i) u[i] = 2.0 * coeff * (d[i] - d_gt[i]);
    return u;
}

void add_into(std::vector<double>& acc, const std::vector<double>& inc) {
    if (acc.empty()) acc.assign(inc.size(), 0.0);
    for (size_t i = 0; i < inc.size(); ++i) acc[i] += inc[i];
}

}  // namespace

std::vector<double> first_order_gradient(const FixedPointOp& op, const Tensor& d0,
                                         const Tensor& d_gt, int iterations, Reduction red) {
    return neumann_gradient(op, d0, d_gt, iterations, 0, red);
}

std::vector<double> unrolled_gradient(const FixedPointOp& op, const Tensor& d0,
                                      const Tensor& d_gt, int iterations, Reduction red) {
    auto ds = iterate_all(op, d0, iterations);
    Tensor u = loss_grad(ds.back(), d_gt, red);
    std::vector<double> gtheta;
    for (int t = iterations - 1; t >= 0; --t) {
        auto [gd, gt] = op.vjp(ds[static_cast<size_t>(t)], u);
        add_into(gtheta, gt);
        u = std::move(gd);
    }
    return gtheta;
}

std::vector<double> neumann_gradient(const FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                     int iterations, int terms_k, Reduction red) {
    auto ds = iterate_all(op, d0, iterations);
    const Tensor& z = ds[static_cast<size_t>(iterations) - 1];  // input of the last step
    Tensor u = loss_grad(ds.back(), d_gt, red);
    std::vector<double> gtheta;
    for (int k = 0; k <= terms_k; ++k) {
        auto [gd, gt] = op.vjp(z, u);
        add_into(gtheta, gt);
        u = std::move(gd);
    }
    return gtheta;
}

namespace {

double eval_unrolled(FixedPointOp& op, const Tensor& d0, const Tensor& d_gt, int iterations,
                     Reduction red) {
    Tensor d = d0;
    for (int t = 0; t < iterations; ++t) d = op.apply(d);
    double raw = 0.0;
    kern::sse_fwd(d, d_gt, raw);
    return red == Reduction::Mean ? raw / static_cast<double>(d.numel()) : raw;
}

}  // namespace

std::vector<double> fd_gradient_unrolled(FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                         int iterations, Reduction red, double step) {
    const std::vector<double> base = op.parameters();
    std::vector<double> grad(base.size(), 0.0);
    std::vector<double> theta = base;
    for (size_t i = 0; i < base.size(); ++i) {
        theta[i] = base[i] + step;
        op.set_parameters(theta);
        const double hi = eval_unrolled(op, d0, d_gt, iterations, red);
        theta[i] = base[i] - step;
        op.set_parameters(theta);
        const double lo = eval_unrolled(op, d0, d_gt, iterations, red);
        grad[i] = (hi - lo) / (2.0 * step);
        theta[i] = base[i];
    }
    op.set_parameters(base);
    return grad;
}

std::vector<double> fd_gradient_first_order(FixedPointOp& op, const Tensor& d0,
                                            const Tensor& d_gt, int iterations, Reduction red,
                                            double step) {
    // Freeze z = d^(T-1) at the base parameters; differentiate theta ->
    // L(F(z, theta), d_gt) only.
    const std::vector<double> base = op.parameters();
    Tensor z = d0;
    for (int t = 0; t + 1 < iterations; ++t) z = op.apply(z);
    std::vector<double> grad(base.size(), 0.0);
    std::vector<double> theta = base;
    auto eval = [&]() {
        Tensor d = op.apply(z);
        double raw = 0.0;
        kern::sse_fwd(d, d_gt, raw);
        return red == Reduction::Mean ? raw / static_cast<double>(d.numel()) : raw;
    };
    for (size_t i = 0; i < base.size(); ++i) {
        theta[i] = base[i] + step;
        op.set_parameters(theta);
        const double hi = eval();
        theta[i] = base[i] - step;
        op.set_parameters(theta);
        const double lo = eval();
        grad[i] = (hi - lo) / (2.0 * step);
        theta[i] = base[i];
    }
    op.set_parameters(base);
    return grad;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

double relative_l2(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0, ref = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        ref += b[i] * b[i];
    }
    if (ref == 0.0) return diff == 0.0 ? 0.0 : 1e300;
    return std::sqrt(diff / ref);
}

std::string GradCheckReport::summary() const {
    std::ostringstream os;
    os << "first-order vs unrolled: cos=" << cos_first_vs_unrolled
       << " rel=" << rel_first_vs_unrolled << "\n"
       << "neumann(K=" << neumann_terms << ") vs unrolled: cos=" << cos_neumann_vs_unrolled
       << " rel=" << rel_neumann_vs_unrolled << "\n"
       << "finite differences: first-order rel=" << fd_rel_first
       << ", unrolled rel=" << fd_rel_unrolled << "\n";
    return os.str();
}

GradCheckReport implicit_gradient_check(FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                        int iterations, int neumann_terms, Reduction red,
                                        double fd_step) {
    GradCheckReport r;
    r.first_order = first_order_gradient(op, d0, d_gt, iterations, red);
    r.unrolled = unrolled_gradient(op, d0, d_gt, iterations, red);
    r.neumann = neumann_gradient(op, d0, d_gt, iterations, neumann_terms, red);
    r.neumann_terms = neumann_terms;
    for (const auto* g : {&r.first_order, &r.unrolled, &r.neumann})
        for (double x : *g)
            if (!std::isfinite(x)) throw Error("non-finite gradient");
    r.cos_first_vs_unrolled = cosine_similarity(r.first_order, r.unrolled);
    r.rel_first_vs_unrolled = relative_l2(r.first_order, r.unrolled);
    r.cos_neumann_vs_unrolled = cosine_similarity(r.neumann, r.unrolled);
    r.rel_neumann_vs_unrolled = relative_l2(r.neumann, r.unrolled);
    const auto fd_first = fd_gradient_first_order(op, d0, d_gt, iterations, red, fd_step);
    const auto fd_unrolled = fd_gradient_unrolled(op, d0, d_gt, iterations, red, fd_step);
    r.fd_rel_first = relative_l2(r.first_order, fd_first);
    r.fd_rel_unrolled = relative_l2(r.unrolled, fd_unrolled);
    return r;
}

}  // namespace pc
