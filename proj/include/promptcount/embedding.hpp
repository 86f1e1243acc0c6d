#pragma once

#include "promptcount/tensor.hpp"

#include <string>
#include <vector>

namespace pc {

// Frozen embedding provider used for text prompt masks. Implementations must
// be deterministic (identical inputs give identical outputs) and are treated
// as read-only after construction, so const methods may be called from
// multiple threads concurrently.
class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    virtual int embed_dim() const = 0;

    // Embedding of a text concept; never zero-norm.
    virtual std::vector<double> text_embed(const std::string& text) const = 0;

    // Per-cell local visual embeddings of an image (3,H,W) as (C_e, gh, gw).
    virtual Tensor local_visual_embed(const Tensor& image) const = 0;

    virtual int grid_h() const = 0;
    virtual int grid_w() const = 0;
};

}  // namespace pc
