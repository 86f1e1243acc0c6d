#pragma once

#include "promptcount/losses.hpp"
#include "promptcount/model.hpp"

#include <memory>
#include <vector>

namespace pc {

// A differentiable fixed-point map d -> F(d, theta) with a flat parameter
// vector. The gradient-approximation routines below only need pointwise
// application and vector-Jacobian products, so analytic stubs and the neural
// step share one interface.
class FixedPointOp {
public:
    virtual ~FixedPointOp() = default;

    virtual Tensor apply(const Tensor& d) const = 0;

    // Given cotangent u at the output of F evaluated at input d, returns
    // (u^T dF/dd, u^T dF/dtheta).
    virtual std::pair<Tensor, std::vector<double>> vjp(const Tensor& d,
                                                       const Tensor& u) const = 0;

    virtual std::vector<double> parameters() const = 0;
    virtual void set_parameters(const std::vector<double>& theta) = 0;
};

// The counting model's step with frozen features; parameters are the
// cross-attention and decoder weights.
class NeuralStepOp : public FixedPointOp {
public:
    NeuralStepOp(Tensor features, ModelParams params, ModelConfig cfg);

    Tensor apply(const Tensor& d) const override;
    std::pair<Tensor, std::vector<double>> vjp(const Tensor& d, const Tensor& u) const override;
    std::vector<double> parameters() const override;
    void set_parameters(const std::vector<double>& theta) override;

    const ModelParams& params() const { return params_; }

private:
    std::vector<Tensor*> trainable();
    std::vector<const Tensor*> trainable() const;

    Tensor features_;
    ModelParams params_;
    ModelConfig cfg_;
};

// F(d) = rho * d + theta * 1 with scalar theta; Jacobian is rho * I
// everywhere, fixed point (theta / (1 - rho)) * 1.
class LinearContractionOp : public FixedPointOp {
public:
    LinearContractionOp(double rho, double theta, std::vector<int> shape);

    Tensor apply(const Tensor& d) const override;
    std::pair<Tensor, std::vector<double>> vjp(const Tensor& d, const Tensor& u) const override;
    std::vector<double> parameters() const override { return {theta_}; }
    void set_parameters(const std::vector<double>& t) override { theta_ = t.at(0); }

    double rho() const { return rho_; }
    Tensor fixed_point() const;

private:
    double rho_, theta_;
    std::vector<int> shape_;
};

// Scalar toy operator d -> sigmoid(theta * d). Its implicit gradient has a
// closed form, used to validate the first-order rule near convergence.
class ScalarLogisticOp : public FixedPointOp {
public:
    explicit ScalarLogisticOp(double theta) : theta_(theta) {}

    Tensor apply(const Tensor& d) const override;
    std::pair<Tensor, std::vector<double>> vjp(const Tensor& d, const Tensor& u) const override;
    std::vector<double> parameters() const override { return {theta_}; }
    void set_parameters(const std::vector<double>& t) override { theta_ = t.at(0); }

    // Iterate to the fixed point from d0.
    double solve_fixed_point(double d0, int max_iters = 200, double tol = 1e-14) const;

    // d L(d*(theta), d_gt) / d theta through the implicit function theorem,
    // with L the sum-of-squares loss.
    double analytic_implicit_gradient(double d_gt) const;

private:
    double theta_;
};

// Loss used throughout the checks: L(d, d_gt) = sum (d - d_gt)^2 (or mean).

// Gradient of L(F(z, theta), d_gt) with z = d^(T-1) detached: the Eq.-level
// first-order rule used in training.
std::vector<double> first_order_gradient(const FixedPointOp& op, const Tensor& d0,
                                         const Tensor& d_gt, int iterations, Reduction red);

// Full backpropagation through all T iterations, assembled from per-step
// VJPs.
std::vector<double> unrolled_gradient(const FixedPointOp& op, const Tensor& d0,
                                      const Tensor& d_gt, int iterations, Reduction red);

// Truncated Neumann-series gradient with K + 1 terms (K = 0 is the
// first-order gradient).
std::vector<double> neumann_gradient(const FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                     int iterations, int terms_k, Reduction red);

// Central differences of the corresponding scalar functions.
std::vector<double> fd_gradient_unrolled(FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                         int iterations, Reduction red, double step);
std::vector<double> fd_gradient_first_order(FixedPointOp& op, const Tensor& d0,
                                            const Tensor& d_gt, int iterations, Reduction red,
                                            double step);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);
double relative_l2(const std::vector<double>& a, const std::vector<double>& b);

struct GradCheckReport {
    std::vector<double> first_order;
    std::vector<double> unrolled;
    std::vector<double> neumann;
    int neumann_terms = 0;

    double cos_first_vs_unrolled = 0;
    double rel_first_vs_unrolled = 0;
    double cos_neumann_vs_unrolled = 0;
    double rel_neumann_vs_unrolled = 0;
    double fd_rel_first = 0;
    double fd_rel_unrolled = 0;

    std::string summary() const;
};

// Full report; throws on non-finite gradients.
GradCheckReport implicit_gradient_check(FixedPointOp& op, const Tensor& d0, const Tensor& d_gt,
                                        int iterations, int neumann_terms,
                                        Reduction red = Reduction::Sum, double fd_step = 1e-5);

}  // namespace pc
