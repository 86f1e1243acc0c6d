#pragma once

#include "promptcount/embedding.hpp"
#include "promptcount/prompt.hpp"
#include "promptcount/tensor.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pc {

// Appearance of one object class: a Gaussian intensity bump modulated by a
// sinusoidal texture of class-specific frequency/orientation, with a color
// tint. Classes are separable by a linear probe on local spectra, which is
// what the synthetic embedding backend measures.
struct ClassDef {
    std::string name;
    double radius = 3.0;          // bump scale in pixels
    double intensity = 0.65;      // peak intensity added over background
    double texture_freq = 0.22;   // cycles per pixel
    double texture_angle = 0.0;   // radians
    std::array<double, 3> color{1.0, 1.0, 1.0};
};

enum class Placement { Uniform, Clustered };

struct SceneObjectSpec {
    ClassDef appearance;
    int count_min = 5;
    int count_max = 40;
    Placement placement = Placement::Uniform;
};

struct SceneSpec {
    int image_size = 64;
    std::vector<SceneObjectSpec> objects;
    double noise = 0.05;  // background noise amplitude
    uint64_t seed = 0;

    void validate() const;
};

struct ClassAnnotation {
    std::string name;
    std::vector<std::array<double, 2>> points;    // instance centers (x, y)
    std::array<double, 4> exemplar_box{0, 0, 0, 0};  // x0,y0,x1,y1 around one instance
};

struct SceneAnnotation {
    std::vector<ClassAnnotation> classes;
    int total_points() const;
};

struct Scene {
    Tensor image;  // (3,S,S) in [0,1], quantized through u8 at generation
    SceneAnnotation annotation;
};

// Deterministic in spec.seed. Each placed instance is recorded as a point;
// min-separation placement fails with "scene too dense" after bounded
// retries.
Scene generate_scene(const SceneSpec& spec);

// Sum of normalized Gaussians at the given points, sampled at pixel centers.
Tensor render_gt_density(const std::vector<std::array<double, 2>>& points, double sigma,
                         int height, int width);

struct TrainingSample {
    Tensor image;       // (3,S,S)
    Tensor mask;        // prompt mask at feature resolution
    Tensor gt_density;  // ground truth at feature resolution (f32-snapped)
    int class_id = 0;
    PromptType type = PromptType::Point;
    int gt_count = 0;  // number of annotated instances of the prompted class
};

// Default Gaussian width for ground-truth rendering.
inline constexpr double kGtSigma = 2.0;

// Build a training sample for one class of a scene: exemplar box, one
// instance point, or the class name as text, converted through the prompt
// mask module. The ground truth is rendered at image resolution and sum-
// pooled to the feature grid.
TrainingSample make_sample(const Scene& scene, int class_id, PromptType type,
                           std::mt19937_64& rng, const EmbeddingBackend& backend,
                           const MaskStrategy& strategy, int feat_size);

// Dictionary used for a scene's text prompts: all class names present plus
// "background", target first-matched by name.
ConceptDictionary scene_dictionary(const Scene& scene, int target_class);

// Indicator grid at feature resolution: 1 for cells whose pixel block
// intersects the visual extent (2.5 * radius) of any instance of the class.
Tensor target_region_mask(const Scene& scene, int class_id, int feat_size);

// Frozen desk-scale embedding backend: per-cell quadrature energies against
// each library class's texture, plus mean/chroma statistics, pushed through a
// fixed seeded orthonormal projection. Deterministic; thread-safe for const
// use.
class SyntheticBackend : public EmbeddingBackend {
public:
    SyntheticBackend(std::vector<ClassDef> library, int image_size, int grid, uint64_t seed,
                     int embed_dim = 32);

    int embed_dim() const override { return embed_dim_; }
    int grid_h() const override { return grid_; }
    int grid_w() const override { return grid_; }

    std::vector<double> text_embed(const std::string& text) const override;
    Tensor local_visual_embed(const Tensor& image) const override;

    const std::vector<ClassDef>& library() const { return library_; }

private:
    std::vector<double> stats_to_embedding(const std::vector<double>& stats) const;
    std::vector<double> patch_stats(const Tensor& image, int y0, int x0, int ph, int pw) const;
    Tensor render_prototype(const ClassDef& cls) const;

    std::vector<ClassDef> library_;
    int image_size_;
    int grid_;
    int embed_dim_;
    std::vector<double> projection_;  // embed_dim x stat_dim, orthonormal rows
    uint64_t seed_;
};

// The four-class library used by the bundled benchmark.
std::vector<ClassDef> default_class_library();

}  // namespace pc
