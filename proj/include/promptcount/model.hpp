#pragma once

#include "promptcount/autodiff.hpp"
#include "promptcount/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace pc {

// Mask or density mass below this is treated as empty (guards the token
// aggregation divide).
inline constexpr double kEmptyMassEps = 1e-8;

struct ModelConfig {
    int image_size = 64;   // square input, stride-8 encoder
    int channels = 32;     // feature channels C
    int heads = 1;
    std::array<int, 2> encoder_widths{12, 20};
    std::array<int, 2> decoder_widths{32, 16};
    double attention_gain = 5.0;  // softmax sharpness over cosine matching scores
    Activation hidden_activation = Activation::ReLU;
    Activation output_activation = Activation::ReLU;
    int iterations = 2;  // refinement steps T

    int feature_size() const { return image_size / 8; }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

// All trainable weights. The encoder downsamples 8x over three stride-2
// convolutions; the density head is a single cross-attention block whose
// per-position similarity map and gated values feed a small conv decoder.
struct ModelParams {
    Tensor enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3;
    Tensor attn_q_w, attn_q_b, attn_k_w, attn_k_b, attn_v_w, attn_v_b, attn_o_w, attn_o_b;
    Tensor dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;

    std::vector<std::pair<std::string, Tensor*>> named();
    std::vector<std::pair<std::string, const Tensor*>> named() const;

    static ModelParams initialized(const ModelConfig& cfg, uint64_t seed);
};

bool same_values(const ModelParams& a, const ModelParams& b);

// Tape-side handles for one registration of the parameters.
struct ParamVars {
    Var enc_w1, enc_b1, enc_w2, enc_b2, enc_w3, enc_b3;
    Var attn_q_w, attn_q_b, attn_k_w, attn_k_b, attn_v_w, attn_v_b, attn_o_w, attn_o_b;
    Var dec_w1, dec_b1, dec_w2, dec_b2, dec_w3, dec_b3;

    std::vector<std::pair<std::string, Var>> named() const;
};

ParamVars register_params(Tape& tape, const ModelParams& p, bool trainable = true);

// Graph builders (shared by inference and training).
Var encode_on(Tape& tape, Var image, const ParamVars& pv, const ModelConfig& cfg);
Var predict_on(Tape& tape, Var features, Var token, const ParamVars& pv, const ModelConfig& cfg);
Var step_on(Tape& tape, Var density, Var features, const ParamVars& pv, const ModelConfig& cfg);

// Value-level API.
Tensor encode_image(const Tensor& image, const ModelParams& p, const ModelConfig& cfg);
Tensor aggregate_token(const Tensor& features, const Tensor& mask);
Tensor predict_density(const Tensor& features, const Tensor& token, const ModelParams& p,
                       const ModelConfig& cfg);
Tensor fixed_point_step(const Tensor& density, const Tensor& features, const ModelParams& p,
                        const ModelConfig& cfg);

struct RefineResult {
    std::vector<Tensor> iterates;  // d^(1) .. d^(T), possibly fewer if truncated
    bool truncated = false;        // density mass vanished before step T
};

RefineResult refine(const Tensor& mask, const Tensor& features, const ModelParams& p,
                    const ModelConfig& cfg, int iterations);

double count(const Tensor& density);

// Checkpoint container: textual header with the config and the array table,
// then raw little-endian float64 data.
void save_checkpoint(const std::string& path, const ModelParams& p, const ModelConfig& cfg);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path);

}  // namespace pc
