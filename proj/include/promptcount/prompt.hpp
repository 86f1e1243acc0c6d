#pragma once

#include "promptcount/embedding.hpp"
#include "promptcount/tensor.hpp"

#include <string>
#include <variant>
#include <vector>

namespace pc {

// Prompts are given in image pixel coordinates.
struct BoxPrompt {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};
struct PointPrompt {
    double x = 0, y = 0;
};
struct TextPrompt {
    std::string query;
};

using Prompt = std::variant<BoxPrompt, PointPrompt, TextPrompt>;

enum class PromptType { Box, Point, Text };

// Parse "box:x0,y0,x1,y1" | "point:x,y" | "text:query".
Prompt parse_prompt(const std::string& spec);
PromptType prompt_type(const Prompt& p);

struct ConceptDictionary {
    std::vector<std::string> concepts;
    int target_index = 0;

    void validate() const;
};

struct MaskStrategy {
    enum Kind { Cosine, Softmax } kind = Softmax;
    double tau = 100.0;  // softmax temperature
};

// Box -> fractional area coverage of each feature cell, in [0,1].
Tensor box_to_mask(const BoxPrompt& box, int image_w, int image_h, int feat_w, int feat_h);

// Point -> one-hot at the containing feature cell (floor mapping).
Tensor point_to_mask(const PointPrompt& pt, int image_w, int image_h, int feat_w, int feat_h);

// Raw per-cell cosine scores against the query embedding, at backend grid
// resolution. May be negative.
Tensor cosine_scores(const std::string& query, const Tensor& image, const EmbeddingBackend& be);

// Cosine-strategy mask: scores clamped at zero, resampled to (feat_h, feat_w).
Tensor text_to_mask_cosine(const std::string& query, const Tensor& image,
                           const EmbeddingBackend& be, int feat_w, int feat_h);

// Per-cell softmax over the concept dictionary, all L components, at backend
// grid resolution with shape (L, gh, gw).
Tensor softmax_scores(const ConceptDictionary& dict, const Tensor& image,
                      const EmbeddingBackend& be, double tau);

// Softmax-strategy mask: the target concept's component, resampled.
Tensor text_to_mask_softmax(const ConceptDictionary& dict, const Tensor& image,
                            const EmbeddingBackend& be, double tau, int feat_w, int feat_h);

Tensor text_to_mask(const TextPrompt& prompt, const Tensor& image, const EmbeddingBackend& be,
                    const MaskStrategy& strategy, const ConceptDictionary& dict, int feat_w,
                    int feat_h);

// Heuristic dictionary construction from a free-form caption: lowercase,
// strip punctuation, drop bundled stop/function words, keep remaining words
// as noun candidates. The target is inserted if absent.
ConceptDictionary build_concept_dictionary(const std::string& caption, const std::string& target);

// Textual mask file: "PMASK h w" then h rows of w floats.
void save_pmask(const std::string& path, const Tensor& mask);
Tensor load_pmask(const std::string& path);

}  // namespace pc
