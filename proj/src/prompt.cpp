#include "promptcount/prompt.hpp"

#include "promptcount/kernels.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace pc {

Prompt parse_prompt(const std::string& spec) {
    const size_t colon = spec.find(':');
    if (colon == std::string::npos) throw Error("bad prompt spec (want kind:payload): " + spec);
    const std::string kind = spec.substr(0, colon);
    const std::string payload = spec.substr(colon + 1);
    auto nums = [&payload](size_t n) {
        std::vector<double> out;
        std::string item;
        std::istringstream in(payload);
        while (std::getline(in, item, ',')) {
            size_t used = 0;
            out.push_back(std::stod(item, &used));
        }
        if (out.size() != n) throw Error("bad prompt payload: " + payload);
        return out;
    };
    if (kind == "box") {
        auto v = nums(4);
        return BoxPrompt{v[0], v[1], v[2], v[3]};
    }
    if (kind == "point") {
        auto v = nums(2);
        return PointPrompt{v[0], v[1]};
    }
    if (kind == "text") {
        if (payload.empty()) throw Error("empty text prompt");
        return TextPrompt{payload};
    }
    throw Error("unknown prompt kind: " + kind);
}

PromptType prompt_type(const Prompt& p) {
    if (std::holds_alternative<BoxPrompt>(p)) return PromptType::Box;
    if (std::holds_alternative<PointPrompt>(p)) return PromptType::Point;
    return PromptType::Text;
}

void ConceptDictionary::validate() const {
    if (concepts.empty()) throw Error("empty dictionary");
    if (target_index < 0 || target_index >= static_cast<int>(concepts.size()))
        throw Error("dictionary target index out of range");
    std::set<std::string> seen;
    for (const auto& c : concepts) {
        if (c.empty()) throw Error("empty concept string");
        if (!seen.insert(c).second) throw Error("duplicate concept: " + c);
    }
}

Tensor box_to_mask(const BoxPrompt& box, int image_w, int image_h, int feat_w, int feat_h) {
    if (!(box.x1 > box.x0) || !(box.y1 > box.y0)) throw Error("empty box");
    if (box.x0 < 0 || box.y0 < 0 || box.x1 > image_w || box.y1 > image_h)
        throw Error("box outside image bounds");
    const double sx = static_cast<double>(image_w) / feat_w;
    const double sy = static_cast<double>(image_h) / feat_h;
    Tensor mask({feat_h, feat_w});
    for (int cy = 0; cy < feat_h; ++cy) {
        const double y0 = cy * sy, y1 = (cy + 1) * sy;
        const double oy = std::min(y1, box.y1) - std::max(y0, box.y0);
        if (oy <= 0) continue;
        for (int cx = 0; cx < feat_w; ++cx) {
            const double x0 = cx * sx, x1 = (cx + 1) * sx;
            const double ox = std::min(x1, box.x1) - std::max(x0, box.x0);
            if (ox <= 0) continue;
            mask.at2(cy, cx) = (ox * oy) / (sx * sy);
        }
    }
    return mask;
}

Tensor point_to_mask(const PointPrompt& pt, int image_w, int image_h, int feat_w, int feat_h) {
    if (pt.x < 0 || pt.y < 0 || pt.x >= image_w || pt.y >= image_h)
        throw Error("point outside image bounds");
    const int cx = static_cast<int>(pt.x * feat_w / image_w);
    const int cy = static_cast<int>(pt.y * feat_h / image_h);
    Tensor mask({feat_h, feat_w});
    mask.at2(std::min(cy, feat_h - 1), std::min(cx, feat_w - 1)) = 1.0;
    return mask;
}

namespace {

double cosine(const std::vector<double>& a, const double* b, int n) {
    double dot = 0, na = 0, nb = 0;
    for (int i = 0; i < n; ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) throw Error("degenerate embedding");
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

Tensor cosine_scores(const std::string& query, const Tensor& image, const EmbeddingBackend& be) {
    if (query.empty()) throw Error("empty text prompt");
    const std::vector<double> ft = be.text_embed(query);
    const Tensor emb = be.local_visual_embed(image);
    const int ce = emb.dim(0), gh = emb.dim(1), gw = emb.dim(2);
    const int64_t n = static_cast<int64_t>(gh) * gw;
    Tensor scores({gh, gw});
    std::vector<double> cell(static_cast<size_t>(ce));
    for (int64_t i = 0; i < n; ++i) {
        for (int c = 0; c < ce; ++c) cell[static_cast<size_t>(c)] = emb.data()[c * n + i];
        scores[i] = cosine(ft, cell.data(), ce);
    }
    return scores;
}

Tensor text_to_mask_cosine(const std::string& query, const Tensor& image,
                           const EmbeddingBackend& be, int feat_w, int feat_h) {
    Tensor scores = cosine_scores(query, image, be);
    for (auto& x : scores.v) x = std::max(0.0, x);  // keep m in R+^N
    if (scores.dim(0) == feat_h && scores.dim(1) == feat_w) return scores;
    return kernel_util::resample_area(scores, feat_h, feat_w);
}

Tensor softmax_scores(const ConceptDictionary& dict, const Tensor& image,
                      const EmbeddingBackend& be, double tau) {
    dict.validate();
    if (!(tau > 0.0)) throw Error("softmax temperature must be positive");
    const int L = static_cast<int>(dict.concepts.size());
    std::vector<Tensor> per_concept;
    per_concept.reserve(static_cast<size_t>(L));
    for (const auto& c : dict.concepts) per_concept.push_back(cosine_scores(c, image, be));
    const int gh = per_concept[0].dim(0), gw = per_concept[0].dim(1);
    const int64_t n = static_cast<int64_t>(gh) * gw;
    Tensor out({L, gh, gw});
    for (int64_t i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < L; ++j) mx = std::max(mx, tau * per_concept[static_cast<size_t>(j)][i]);
        double denom = 0.0;
        for (int j = 0; j < L; ++j)
            denom += std::exp(tau * per_concept[static_cast<size_t>(j)][i] - mx);
        for (int j = 0; j < L; ++j)
            out.data()[j * n + i] = std::exp(tau * per_concept[static_cast<size_t>(j)][i] - mx) / denom;
    }
    return out;
}

Tensor text_to_mask_softmax(const ConceptDictionary& dict, const Tensor& image,
                            const EmbeddingBackend& be, double tau, int feat_w, int feat_h) {
    Tensor all = softmax_scores(dict, image, be, tau);
    const int gh = all.dim(1), gw = all.dim(2);
    const int64_t n = static_cast<int64_t>(gh) * gw;
    Tensor mask({gh, gw});
    for (int64_t i = 0; i < n; ++i) mask[i] = all.data()[dict.target_index * n + i];
    if (gh == feat_h && gw == feat_w) return mask;
    return kernel_util::resample_area(mask, feat_h, feat_w);
}

Tensor text_to_mask(const TextPrompt& prompt, const Tensor& image, const EmbeddingBackend& be,
                    const MaskStrategy& strategy, const ConceptDictionary& dict, int feat_w,
                    int feat_h) {
    if (strategy.kind == MaskStrategy::Cosine)
        return text_to_mask_cosine(prompt.query, image, be, feat_w, feat_h);
    return text_to_mask_softmax(dict, image, be, strategy.tau, feat_w, feat_h);
}

namespace {

// Function-word list for the caption heuristic; everything else is treated as
// a noun candidate.
const std::set<std::string>& stop_words() {
    static const std::set<std::string> words = {
        "a",     "an",    "the",   "in",    "on",    "at",    "of",
        "and",   "or",    "with",  "without", "to",  "from",  "by",
        "for",   "is",    "are",   "was",   "were",  "be",    "being",
        "been",  "has",   "have",  "had",   "it",    "its",   "this",
        "that",  "these", "those", "there", "here",  "near",  "over",
        "under", "above", "below", "into",  "onto",  "as",    "some",
        "many",  "few",   "several", "two", "three", "four",  "five",
        "one",   "lots",  "lot",   "very",  "large", "small", "big",
        "little", "red",  "green", "blue",  "yellow", "white", "black",
        "brown", "gray",  "grey",  "bright", "dark", "full",  "empty",
        "sitting", "standing", "lying", "placed", "arranged", "scattered",
        "stacked", "filled", "containing", "holding", "next", "beside",
        "image", "picture", "photo", "photograph", "view", "scene", "close",
        "up",    "shot",  "background", "foreground",
    };
    return words;
}

}  // namespace

ConceptDictionary build_concept_dictionary(const std::string& caption, const std::string& target) {
    if (caption.empty()) throw Error("empty caption");
    if (target.empty()) throw Error("empty target");
    ConceptDictionary dict;
    std::string word;
    auto flush = [&] {
        if (!word.empty() && stop_words().count(word) == 0 &&
            std::find(dict.concepts.begin(), dict.concepts.end(), word) == dict.concepts.end())
            dict.concepts.push_back(word);
        word.clear();
    };
    for (char ch : caption) {
        if (std::isalpha(static_cast<unsigned char>(ch)))
            word += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        else
            flush();
    }
    flush();
    std::string tgt = target;
    std::transform(tgt.begin(), tgt.end(), tgt.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    auto it = std::find(dict.concepts.begin(), dict.concepts.end(), tgt);
    if (it == dict.concepts.end()) {
        dict.concepts.push_back(tgt);
        dict.target_index = static_cast<int>(dict.concepts.size()) - 1;
    } else {
        dict.target_index = static_cast<int>(it - dict.concepts.begin());
    }
    dict.validate();
    return dict;
}

void save_pmask(const std::string& path, const Tensor& mask) {
    if (mask.rank() != 2) throw Error("save_pmask: mask must be 2-D");
    std::ofstream f(path);
    if (!f) throw Error("cannot open mask file for writing: " + path);
    f << "PMASK " << mask.dim(0) << " " << mask.dim(1) << "\n";
    char buf[64];
    for (int y = 0; y < mask.dim(0); ++y) {
        for (int x = 0; x < mask.dim(1); ++x) {
            std::snprintf(buf, sizeof(buf), "%.17g", mask.at2(y, x));
            f << (x ? " " : "") << buf;
        }
        f << "\n";
    }
    if (!f) throw Error("mask write failed: " + path);
}

Tensor load_pmask(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open mask file: " + path);
    std::string magic;
    int h = 0, w = 0;
    if (!(f >> magic >> h >> w) || magic != "PMASK" || h <= 0 || w <= 0)
        throw Error("bad PMASK header in " + path);
    Tensor mask({h, w});
    for (auto& x : mask.v)
        if (!(f >> x)) throw Error("truncated PMASK payload in " + path);
    return mask;
}

}  // namespace pc
