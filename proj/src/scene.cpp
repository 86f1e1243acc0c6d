#include "promptcount/scene.hpp"

#include "promptcount/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace pc {

namespace {
constexpr double kPi = 3.14159265358979323846;
constexpr double kBackgroundLevel = 0.30;
constexpr double kPlacementMargin = 6.0;  // keeps 3*sigma of GT mass inside the frame
}  // namespace

void SceneSpec::validate() const {
    if (image_size < 16) throw Error("scene image size too small");
    if (objects.empty()) throw Error("scene spec needs at least one class");
    for (const auto& o : objects) {
        if (o.count_min < 0 || o.count_max < o.count_min) throw Error("bad instance count range");
        if (o.appearance.radius <= 0 || o.appearance.radius >= image_size)
            throw Error("blob radius must be in (0, image_size)");
        if (o.appearance.name.empty()) throw Error("class name must be non-empty");
    }
}

int SceneAnnotation::total_points() const {
    int n = 0;
    for (const auto& c : classes) n += static_cast<int>(c.points.size());
    return n;
}

Scene generate_scene(const SceneSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    const int s = spec.image_size;
    const double margin = kPlacementMargin;

    Scene out;
    out.annotation.classes.reserve(spec.objects.size());

    // Choose instance counts and centers first, then rasterize.
    struct Placed {
        int cls;
        double x, y, phase;
    };
    std::vector<Placed> placed;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (size_t ci = 0; ci < spec.objects.size(); ++ci) {
        const auto& obj = spec.objects[ci];
        std::uniform_int_distribution<int> count_dist(obj.count_min, obj.count_max);
        const int want = count_dist(rng);
        ClassAnnotation ann;
        ann.name = obj.appearance.name;

        double cx = 0, cy = 0;  // cluster center, drawn lazily
        bool cluster_ready = false;
        const double min_sep = std::max(3.0, obj.appearance.radius * 1.4);
        for (int i = 0; i < want; ++i) {
            bool ok = false;
            for (int attempt = 0; attempt < 200 && !ok; ++attempt) {
                double x, y;
                if (obj.placement == Placement::Clustered) {
                    if (!cluster_ready) {
                        cx = margin + unit(rng) * (s - 2 * margin);
                        cy = margin + unit(rng) * (s - 2 * margin);
                        cluster_ready = true;
                    }
                    std::normal_distribution<double> spread(0.0, s / 8.0);
                    x = std::clamp(cx + spread(rng), margin, s - margin);
                    y = std::clamp(cy + spread(rng), margin, s - margin);
                } else {
                    x = margin + unit(rng) * (s - 2 * margin);
                    y = margin + unit(rng) * (s - 2 * margin);
                }
                ok = true;
                for (const auto& p : placed) {
                    const double dx = p.x - x, dy = p.y - y;
                    if (dx * dx + dy * dy < min_sep * min_sep) {
                        ok = false;
                        break;
                    }
                }
                if (ok) {
                    placed.push_back({static_cast<int>(ci), x, y, unit(rng) * 2.0 * kPi});
                    ann.points.push_back({x, y});
                }
            }
            if (!ok) throw Error("scene too dense");
        }
        if (!ann.points.empty()) {
            // Exemplar box around the first instance.
            const double r = obj.appearance.radius + 1.0;
            const auto& p0 = ann.points.front();
            ann.exemplar_box = {std::max(0.0, p0[0] - r), std::max(0.0, p0[1] - r),
                                std::min<double>(s, p0[0] + r), std::min<double>(s, p0[1] + r)};
        }
        out.annotation.classes.push_back(std::move(ann));
    }

    // Rasterize: background plus textured bumps.
    Tensor img({3, s, s}, 0.0);
    std::uniform_real_distribution<double> noise(-spec.noise, spec.noise);
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double n = noise(rng);
            for (int c = 0; c < 3; ++c) img.at3(c, y, x) = kBackgroundLevel + n;
        }
    for (const auto& inst : placed) {
        const ClassDef& cls = spec.objects[static_cast<size_t>(inst.cls)].appearance;
        const double r = cls.radius;
        const int reach = static_cast<int>(std::ceil(3.0 * r));
        const double ca = std::cos(cls.texture_angle), sa = std::sin(cls.texture_angle);
        const int x0 = std::max(0, static_cast<int>(inst.x) - reach);
        const int x1 = std::min(s - 1, static_cast<int>(inst.x) + reach);
        const int y0 = std::max(0, static_cast<int>(inst.y) - reach);
        const int y1 = std::min(s - 1, static_cast<int>(inst.y) + reach);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - inst.x, dy = y - inst.y;
                const double bump = std::exp(-(dx * dx + dy * dy) / (2.0 * r * r));
                if (bump < 1e-3) continue;
                const double stripe =
                    1.0 + 0.8 * std::sin(2.0 * kPi * cls.texture_freq * (dx * ca + dy * sa) +
                                         inst.phase);
                const double add = cls.intensity * bump * stripe;
                for (int c = 0; c < 3; ++c) img.at3(c, y, x) += add * cls.color[static_cast<size_t>(c)];
            }
    }
    // Quantize through u8 so in-memory pixels equal what a PPM round trip
    // yields.
    for (auto& v : img.v) {
        const double clamped = std::clamp(v, 0.0, 1.0);
        v = std::lround(clamped * 255.0) / 255.0;
    }
    out.image = std::move(img);
    return out;
}

Tensor render_gt_density(const std::vector<std::array<double, 2>>& points, double sigma,
                         int height, int width) {
    if (!(sigma > 0.0)) throw Error("render_gt_density: sigma must be positive");
    Tensor d;
    kern::gaussian_density(points, sigma, height, width, d);
    return d;
}

ConceptDictionary scene_dictionary(const Scene& scene, int target_class) {
    ConceptDictionary dict;
    for (const auto& c : scene.annotation.classes) dict.concepts.push_back(c.name);
    dict.concepts.push_back("background");
    dict.target_index = target_class;
    dict.validate();
    return dict;
}

Tensor target_region_mask(const Scene& scene, int class_id, int feat_size) {
    if (class_id < 0 || class_id >= static_cast<int>(scene.annotation.classes.size()))
        throw Error("target_region_mask: missing class");
    const int s = scene.image.dim(1);
    const double cell = static_cast<double>(s) / feat_size;
    // Visual reach of one instance; radius comes from the exemplar box size
    // so annotations loaded from disk work too.
    const auto& ann = scene.annotation.classes[static_cast<size_t>(class_id)];
    const double half_box = 0.5 * std::max(ann.exemplar_box[2] - ann.exemplar_box[0],
                                           ann.exemplar_box[3] - ann.exemplar_box[1]);
    const double reach = 2.5 * std::max(1.0, half_box - 1.0);
    Tensor region({feat_size, feat_size});
    for (const auto& p : ann.points)
        for (int cy = 0; cy < feat_size; ++cy)
            for (int cx = 0; cx < feat_size; ++cx) {
                const double bx = std::clamp(p[0], cx * cell, (cx + 1) * cell);
                const double by = std::clamp(p[1], cy * cell, (cy + 1) * cell);
                const double dx = bx - p[0], dy = by - p[1];
                if (dx * dx + dy * dy <= reach * reach) region.at2(cy, cx) = 1.0;
            }
    return region;
}

TrainingSample make_sample(const Scene& scene, int class_id, PromptType type,
                           std::mt19937_64& rng, const EmbeddingBackend& backend,
                           const MaskStrategy& strategy, int feat_size) {
    if (class_id < 0 || class_id >= static_cast<int>(scene.annotation.classes.size()))
        throw Error("make_sample: missing class");
    const auto& ann = scene.annotation.classes[static_cast<size_t>(class_id)];
    const int s = scene.image.dim(1);

    TrainingSample sample;
    sample.image = scene.image;
    sample.class_id = class_id;
    sample.type = type;
    sample.gt_count = static_cast<int>(ann.points.size());

    switch (type) {
        case PromptType::Box: {
            if (ann.points.empty()) throw Error("make_sample: class has no instances for box prompt");
            const auto& b = ann.exemplar_box;
            sample.mask = box_to_mask(BoxPrompt{b[0], b[1], b[2], b[3]}, s, s, feat_size, feat_size);
            break;
        }
        case PromptType::Point: {
            if (ann.points.empty())
                throw Error("make_sample: class has no instances for point prompt");
            std::uniform_int_distribution<size_t> pick(0, ann.points.size() - 1);
            const auto& p = ann.points[pick(rng)];
            sample.mask = point_to_mask(PointPrompt{p[0], p[1]}, s, s, feat_size, feat_size);
            break;
        }
        case PromptType::Text: {
            ConceptDictionary dict = scene_dictionary(scene, class_id);
            sample.mask = text_to_mask(TextPrompt{ann.name}, scene.image, backend, strategy, dict,
                                       feat_size, feat_size);
            break;
        }
    }

    Tensor full = render_gt_density(ann.points, kGtSigma, s, s);
    sample.gt_density = kernel_util::sum_pool(full, s / feat_size);
    // Snap through f32 so saved datasets round-trip exactly.
    for (auto& x : sample.gt_density.v) x = static_cast<double>(static_cast<float>(x));
    return sample;
}

// ---------------------------------------------------------------------------
// SyntheticBackend

std::vector<ClassDef> default_class_library() {
    // Frequencies sit on the 8-px patch DFT grid (bins (2,0), (0,2), (2,2),
    // (-2,2)), so the four stripe patterns are orthogonal over an embedding
    // patch and the quadrature energies separate cleanly.
    const double diag = std::sqrt(2.0) / 4.0;
    return {
        {"dotgrid", 3.0, 0.65, 0.25, 0.0, {1.00, 0.30, 0.30}},
        {"vstripe", 3.0, 0.65, 0.25, kPi / 2.0, {0.30, 1.00, 0.30}},
        {"diagfine", 2.8, 0.70, diag, kPi / 4.0, {0.30, 0.55, 1.00}},
        {"crossfine", 2.8, 0.70, diag, 3.0 * kPi / 4.0, {0.95, 0.95, 0.20}},
    };
}

namespace {

// Stat channel weights; chosen so that class prototypes stay nearly
// orthogonal while plain background cells keep a visible positive cosine
// against every class (the regime where the softmax dictionary wins).
constexpr double kWeightEnergy = 4.0;
constexpr double kWeightMean = 0.25;
constexpr double kWeightChroma = 0.5;
constexpr double kWeightConst = 0.10;

}  // namespace

SyntheticBackend::SyntheticBackend(std::vector<ClassDef> library, int image_size, int grid,
                                   uint64_t seed, int embed_dim)
    : library_(std::move(library)), image_size_(image_size), grid_(grid), embed_dim_(embed_dim),
      seed_(seed) {
    if (library_.empty()) throw Error("backend needs a non-empty class library");
    if (image_size_ % grid_ != 0) throw Error("backend grid must divide the image size");
    const int stat_dim = static_cast<int>(library_.size()) + 5;  // energies + mean + rgb + const
    if (embed_dim_ < stat_dim) throw Error("embed dim smaller than stat dim");

    // Seeded Gaussian matrix, rows orthonormalized (Gram-Schmidt), so inner
    // products in stats space survive the projection exactly.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::vector<double>> rows(static_cast<size_t>(stat_dim),
                                          std::vector<double>(static_cast<size_t>(embed_dim_)));
    for (auto& row : rows) {
        for (auto& x : row) x = g(rng);
    }
    for (size_t i = 0; i < rows.size(); ++i) {
        for (size_t j = 0; j < i; ++j) {
            double dot = 0;
            for (int k = 0; k < embed_dim_; ++k) dot += rows[i][static_cast<size_t>(k)] * rows[j][static_cast<size_t>(k)];
            for (int k = 0; k < embed_dim_; ++k) rows[i][static_cast<size_t>(k)] -= dot * rows[j][static_cast<size_t>(k)];
        }
        double norm = 0;
        for (double x : rows[i]) norm += x * x;
        norm = std::sqrt(norm);
        if (norm < 1e-9) throw Error("degenerate projection row");
        for (auto& x : rows[i]) x /= norm;
    }
    projection_.assign(static_cast<size_t>(stat_dim) * embed_dim_, 0.0);
    for (int i = 0; i < stat_dim; ++i)
        for (int k = 0; k < embed_dim_; ++k)
            projection_[static_cast<size_t>(i) * embed_dim_ + k] = rows[static_cast<size_t>(i)][static_cast<size_t>(k)];
}

std::vector<double> SyntheticBackend::patch_stats(const Tensor& image, int y0, int x0, int ph,
                                                  int pw) const {
    const int nclasses = static_cast<int>(library_.size());
    std::vector<double> stats(static_cast<size_t>(nclasses) + 5, 0.0);

    // Gray patch and channel means.
    double mean_r = 0, mean_g = 0, mean_b = 0;
    std::vector<double> gray(static_cast<size_t>(ph) * pw);
    for (int y = 0; y < ph; ++y)
        for (int x = 0; x < pw; ++x) {
            const double r = image.at3(0, y0 + y, x0 + x);
            const double g = image.at3(1, y0 + y, x0 + x);
            const double b = image.at3(2, y0 + y, x0 + x);
            mean_r += r;
            mean_g += g;
            mean_b += b;
            gray[static_cast<size_t>(y) * pw + x] = (r + g + b) / 3.0;
        }
    const double npix = static_cast<double>(ph) * pw;
    mean_r /= npix;
    mean_g /= npix;
    mean_b /= npix;
    const double mean_gray = (mean_r + mean_g + mean_b) / 3.0;

    // Quadrature (phase-invariant) energy against every library texture.
    for (int c = 0; c < nclasses; ++c) {
        const ClassDef& cls = library_[static_cast<size_t>(c)];
        const double ca = std::cos(cls.texture_angle), sa = std::sin(cls.texture_angle);
        double re = 0, im = 0;
        for (int y = 0; y < ph; ++y)
            for (int x = 0; x < pw; ++x) {
                const double p = gray[static_cast<size_t>(y) * pw + x] - mean_gray;
                const double phase = 2.0 * kPi * cls.texture_freq * (x * ca + y * sa);
                re += p * std::cos(phase);
                im += p * std::sin(phase);
            }
        stats[static_cast<size_t>(c)] = kWeightEnergy * 2.0 * std::sqrt(re * re + im * im) / npix;
    }
    stats[static_cast<size_t>(nclasses)] = kWeightMean * mean_gray;
    stats[static_cast<size_t>(nclasses) + 1] = kWeightChroma * (mean_r - mean_gray);
    stats[static_cast<size_t>(nclasses) + 2] = kWeightChroma * (mean_g - mean_gray);
    stats[static_cast<size_t>(nclasses) + 3] = kWeightChroma * (mean_b - mean_gray);
    stats[static_cast<size_t>(nclasses) + 4] = kWeightConst;
    return stats;
}

std::vector<double> SyntheticBackend::stats_to_embedding(const std::vector<double>& stats) const {
    std::vector<double> emb(static_cast<size_t>(embed_dim_), 0.0);
    for (size_t i = 0; i < stats.size(); ++i)
        for (int k = 0; k < embed_dim_; ++k)
            emb[static_cast<size_t>(k)] += stats[i] * projection_[i * static_cast<size_t>(embed_dim_) + static_cast<size_t>(k)];
    return emb;
}

Tensor SyntheticBackend::render_prototype(const ClassDef& cls) const {
    const int ps = image_size_ / grid_;
    Tensor patch({3, ps, ps}, 0.0);
    const double cx = (ps - 1) / 2.0, cy = (ps - 1) / 2.0;
    const double ca = std::cos(cls.texture_angle), sa = std::sin(cls.texture_angle);
    for (int y = 0; y < ps; ++y)
        for (int x = 0; x < ps; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double bump = std::exp(-(dx * dx + dy * dy) / (2.0 * cls.radius * cls.radius));
            const double stripe =
                1.0 + 0.8 * std::sin(2.0 * kPi * cls.texture_freq * (dx * ca + dy * sa));
            const double add = cls.intensity * bump * stripe;
            for (int c = 0; c < 3; ++c)
                patch.at3(c, y, x) =
                    std::clamp(kBackgroundLevel + add * cls.color[static_cast<size_t>(c)], 0.0, 1.0);
        }
    return patch;
}

std::vector<double> SyntheticBackend::text_embed(const std::string& text) const {
    for (const auto& cls : library_)
        if (cls.name == text) {
            Tensor proto = render_prototype(cls);
            const int ps = image_size_ / grid_;
            return stats_to_embedding(patch_stats(proto, 0, 0, ps, ps));
        }
    if (text == "background") {
        const int ps = image_size_ / grid_;
        Tensor flat({3, ps, ps}, kBackgroundLevel);
        return stats_to_embedding(patch_stats(flat, 0, 0, ps, ps));
    }
    // Unknown concept: a deterministic pseudo-random unit vector. Keeps the
    // backend total (never zero-norm) for user-provided dictionaries.
    uint64_t h = seed_ ^ 0xcbf29ce484222325ull;
    for (char c : text) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    std::mt19937_64 rng(h);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> emb(static_cast<size_t>(embed_dim_));
    double norm = 0;
    for (auto& x : emb) {
        x = g(rng);
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : emb) x /= norm;
    return emb;
}

Tensor SyntheticBackend::local_visual_embed(const Tensor& image) const {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != image_size_ ||
        image.dim(2) != image_size_)
        throw Error("backend: image size mismatch");
    const int ps = image_size_ / grid_;
    Tensor out({embed_dim_, grid_, grid_});
    const int64_t n = static_cast<int64_t>(grid_) * grid_;
#pragma omp parallel for collapse(2) schedule(static)
    for (int gy = 0; gy < grid_; ++gy)
        for (int gx = 0; gx < grid_; ++gx) {
            const auto emb = stats_to_embedding(patch_stats(image, gy * ps, gx * ps, ps, ps));
            for (int c = 0; c < embed_dim_; ++c)
                out.data()[c * n + gy * grid_ + gx] = emb[static_cast<size_t>(c)];
        }
    return out;
}

}  // namespace pc
