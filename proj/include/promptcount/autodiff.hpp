#pragma once

#include "promptcount/kernels.hpp"
#include "promptcount/tensor.hpp"

#include <functional>
#include <vector>

namespace pc {

enum class Reduction { Sum, Mean };

// Reverse-mode tape. Each op records its backward closure; backward() walks
// the tape in reverse and accumulates gradients into node slots. A tape built
// with track=false computes values only (inference path), so the same graph
// builders serve both inference and training.
class Tape {
public:
    struct Var {
        int id = -1;
        bool valid() const { return id >= 0; }
    };

    explicit Tape(bool track = true) : track_(track) {}

    bool tracking() const { return track_; }

    Var leaf(Tensor value, bool requires_grad = false);

    const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
    const Tensor& grad(Var v) const;

    // Ops. Shapes follow the kernel contracts in kernels.hpp.
    Var conv2d(Var x, Var w, Var b, int stride, int pad);
    Var activation(Var x, Activation a);
    Var matvec(Var w, Var b, Var x);
    Var masked_mean(Var features, Var mask);
    Var attn_scores(Var keys, Var query, int heads);
    Var center_spatial(Var x);            // x - per-channel spatial mean
    Var attn_normalize(Var scores);       // per-head softmax over cells, scaled by N
    Var attn_cosine(Var keys, Var query, int heads);  // per-head cosine matching scores
    Var sub_rowmean(Var t, Var features); // t - per-channel spatial mean of features
    Var gate(Var values, Var scores);
    Var concat_channels(const std::vector<Var>& xs);
    Var concat_width(Var a, Var b);
    Var reshape(Var x, std::vector<int> shape);
    Var scale(Var x, double factor);
    Var sse(Var a, Var b, Reduction reduction);  // scalar
    Var add(Var a, Var b);                       // elementwise (used for scalar losses)

    void backward(Var scalar_loss);

    // Reverse pass from an arbitrary output with the given cotangent.
    void backward_with(Var output, const Tensor& cotangent);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        std::function<void(Tape&)> back;
    };

    Var push(Tensor value, bool requires_grad, std::function<void(Tape&)> back);
    Tensor& grad_slot(int id);
    bool rg(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

    std::vector<Node> nodes_;
    bool track_;
};

using Var = Tape::Var;

}  // namespace pc
