#include "promptcount/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace pc {

void ModelConfig::validate() const {
    if (image_size <= 0 || image_size % 8 != 0) throw Error("image_size must be a positive multiple of 8");
    if (channels <= 0 || heads <= 0) throw Error("channels/heads must be positive");
    if (channels % heads != 0) throw Error("channels must be divisible by heads");
    if (iterations < 1) throw Error("iterations must be >= 1");
    for (int w : encoder_widths)
        if (w <= 0) throw Error("encoder widths must be positive");
    for (int w : decoder_widths)
        if (w <= 0) throw Error("decoder widths must be positive");
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named() {
    return {
        {"enc_w1", &enc_w1},     {"enc_b1", &enc_b1},     {"enc_w2", &enc_w2},
        {"enc_b2", &enc_b2},     {"enc_w3", &enc_w3},     {"enc_b3", &enc_b3},
        {"attn_q_w", &attn_q_w}, {"attn_q_b", &attn_q_b}, {"attn_k_w", &attn_k_w},
        {"attn_k_b", &attn_k_b}, {"attn_v_w", &attn_v_w}, {"attn_v_b", &attn_v_b},
        {"attn_o_w", &attn_o_w}, {"attn_o_b", &attn_o_b}, {"dec_w1", &dec_w1},
        {"dec_b1", &dec_b1},     {"dec_w2", &dec_w2},     {"dec_b2", &dec_b2},
        {"dec_w3", &dec_w3},     {"dec_b3", &dec_b3},
    };
}

std::vector<std::pair<std::string, const Tensor*>> ModelParams::named() const {
    auto mut = const_cast<ModelParams*>(this)->named();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [name, t] : mut) out.emplace_back(name, t);
    return out;
}

namespace {

Tensor he_normal(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& x : t.v) x = dist(rng);
    return t;
}

}  // namespace

ModelParams ModelParams::initialized(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    const int c = cfg.channels;
    const int e1 = cfg.encoder_widths[0], e2 = cfg.encoder_widths[1];
    const int d1 = cfg.decoder_widths[0], d2 = cfg.decoder_widths[1];
    const int dec_in = c + cfg.heads;

    ModelParams p;
    p.enc_w1 = he_normal({e1, 3, 3, 3}, 3 * 9, rng);
    p.enc_b1 = Tensor({e1});
    p.enc_w2 = he_normal({e2, e1, 3, 3}, e1 * 9, rng);
    p.enc_b2 = Tensor({e2});
    p.enc_w3 = he_normal({c, e2, 3, 3}, e2 * 9, rng);
    p.enc_b3 = Tensor({c});
    p.attn_q_w = he_normal({c, c}, c, rng);
    p.attn_q_b = Tensor({c});
    p.attn_k_w = he_normal({c, c, 1, 1}, c, rng);
    p.attn_k_b = Tensor({c});
    p.attn_v_w = he_normal({c, c, 1, 1}, c, rng);
    p.attn_v_b = Tensor({c});
    p.attn_o_w = he_normal({c, c, 1, 1}, c, rng);
    p.attn_o_b = Tensor({c});
    p.dec_w1 = he_normal({d1, dec_in, 3, 3}, dec_in * 9, rng);
    p.dec_b1 = Tensor({d1});
    p.dec_w2 = he_normal({d2, d1, 3, 3}, d1 * 9, rng);
    p.dec_b2 = Tensor({d2});
    p.dec_w3 = he_normal({1, d2, 1, 1}, d2, rng);
    p.dec_b3 = Tensor({1});
    // Start with a positive output bias so the initial density has mass and
    // the refinement loop never begins from a dead map.
    p.dec_b3[0] = 0.1;
    return p;
}

bool same_values(const ModelParams& a, const ModelParams& b) {
    auto na = a.named();
    auto nb = b.named();
    for (size_t i = 0; i < na.size(); ++i) {
        if (na[i].second->shape != nb[i].second->shape) return false;
        if (na[i].second->v != nb[i].second->v) return false;
    }
    return true;
}

std::vector<std::pair<std::string, Var>> ParamVars::named() const {
    return {
        {"enc_w1", enc_w1},     {"enc_b1", enc_b1},     {"enc_w2", enc_w2},
        {"enc_b2", enc_b2},     {"enc_w3", enc_w3},     {"enc_b3", enc_b3},
        {"attn_q_w", attn_q_w}, {"attn_q_b", attn_q_b}, {"attn_k_w", attn_k_w},
        {"attn_k_b", attn_k_b}, {"attn_v_w", attn_v_w}, {"attn_v_b", attn_v_b},
        {"attn_o_w", attn_o_w}, {"attn_o_b", attn_o_b}, {"dec_w1", dec_w1},
        {"dec_b1", dec_b1},     {"dec_w2", dec_w2},     {"dec_b2", dec_b2},
        {"dec_w3", dec_w3},     {"dec_b3", dec_b3},
    };
}

ParamVars register_params(Tape& tape, const ModelParams& p, bool trainable) {
    ParamVars v;
    auto src = p.named();
    Var* dst[] = {&v.enc_w1,   &v.enc_b1,   &v.enc_w2,   &v.enc_b2,   &v.enc_w3,
                  &v.enc_b3,   &v.attn_q_w, &v.attn_q_b, &v.attn_k_w, &v.attn_k_b,
                  &v.attn_v_w, &v.attn_v_b, &v.attn_o_w, &v.attn_o_b, &v.dec_w1,
                  &v.dec_b1,   &v.dec_w2,   &v.dec_b2,   &v.dec_w3,   &v.dec_b3};
    for (size_t i = 0; i < src.size(); ++i) *dst[i] = tape.leaf(*src[i].second, trainable);
    return v;
}

Var encode_on(Tape& tape, Var image, const ParamVars& pv, const ModelConfig& cfg) {
    Var h1 = tape.activation(tape.conv2d(image, pv.enc_w1, pv.enc_b1, 2, 1), cfg.hidden_activation);
    Var h2 = tape.activation(tape.conv2d(h1, pv.enc_w2, pv.enc_b2, 2, 1), cfg.hidden_activation);
    return tape.conv2d(h2, pv.enc_w3, pv.enc_b3, 2, 1);
}

Var predict_on(Tape& tape, Var features, Var token, const ParamVars& pv, const ModelConfig& cfg) {
    // Pre-attention centering: queries and keys see features with the
    // per-channel spatial mean removed, so the matching scores compare
    // cell-specific content rather than the shared background component.
    Var centered = tape.center_spatial(features);
    Var token_centered = tape.sub_rowmean(token, features);
    Var keys = tape.conv2d(centered, pv.attn_k_w, pv.attn_k_b, 1, 0);
    Var values = tape.conv2d(centered, pv.attn_v_w, pv.attn_v_b, 1, 0);
    Var query = tape.matvec(pv.attn_q_w, pv.attn_q_b, token_centered);
    Var raw = tape.attn_cosine(keys, query, cfg.heads);
    Var scaled = tape.scale(raw, cfg.attention_gain);
    Var scores = tape.attn_normalize(scaled);
    Var gated = tape.gate(values, scores);
    Var attended = tape.conv2d(gated, pv.attn_o_w, pv.attn_o_b, 1, 0);
    Var dec_in = tape.concat_channels({attended, scores});
    Var h1 = tape.activation(tape.conv2d(dec_in, pv.dec_w1, pv.dec_b1, 1, 1), cfg.hidden_activation);
    Var h2 = tape.activation(tape.conv2d(h1, pv.dec_w2, pv.dec_b2, 1, 1), cfg.hidden_activation);
    Var out = tape.activation(tape.conv2d(h2, pv.dec_w3, pv.dec_b3, 1, 0), cfg.output_activation);
    const Tensor& o = tape.val(out);
    return tape.reshape(out, {o.dim(1), o.dim(2)});
}

Var step_on(Tape& tape, Var density, Var features, const ParamVars& pv, const ModelConfig& cfg) {
    const double mass = tape.val(density).sum();
    if (!(mass > kEmptyMassEps)) throw Error("vanished density");
    Var token = tape.masked_mean(features, density);
    return predict_on(tape, features, token, pv, cfg);
}

Tensor encode_image(const Tensor& image, const ModelParams& p, const ModelConfig& cfg) {
    if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.image_size ||
        image.dim(2) != cfg.image_size)
        throw Error("encode_image: image does not match configured size " +
                    std::to_string(cfg.image_size));
    Tape tape(false);
    ParamVars pv = register_params(tape, p, false);
    return tape.val(encode_on(tape, tape.leaf(image), pv, cfg));
}

Tensor aggregate_token(const Tensor& features, const Tensor& mask) {
    if (features.rank() != 3) throw Error("aggregate_token: features must be (C,h,w)");
    if (static_cast<int64_t>(features.dim(1)) * features.dim(2) != mask.numel())
        throw Error("aggregate_token: mask/feature shape mismatch");
    for (double x : mask.v)
        if (x < 0.0) throw Error("aggregate_token: negative mask entry");
    double mass = mask.sum();
    if (!(mass > kEmptyMassEps)) throw Error("empty mask");
    Tensor token;
    kern::masked_mean_fwd(features, mask, token, mass);
    return token;
}

Tensor predict_density(const Tensor& features, const Tensor& token, const ModelParams& p,
                       const ModelConfig& cfg) {
    Tape tape(false);
    ParamVars pv = register_params(tape, p, false);
    return tape.val(predict_on(tape, tape.leaf(features), tape.leaf(token), pv, cfg));
}

Tensor fixed_point_step(const Tensor& density, const Tensor& features, const ModelParams& p,
                        const ModelConfig& cfg) {
    double mass = density.sum();
    if (!(mass > kEmptyMassEps)) throw Error("vanished density");
    Tensor token;
    kern::masked_mean_fwd(features, density, token, mass);
    return predict_density(features, token, p, cfg);
}

RefineResult refine(const Tensor& mask, const Tensor& features, const ModelParams& p,
                    const ModelConfig& cfg, int iterations) {
    if (iterations < 1) throw Error("refine: iterations must be >= 1");
    if (!(mask.sum() > kEmptyMassEps)) throw Error("empty mask");
    RefineResult r;
    Tensor d = mask;
    for (int t = 0; t < iterations; ++t) {
        if (!(d.sum() > kEmptyMassEps)) {
            r.truncated = true;
            break;
        }
        d = fixed_point_step(d, features, p, cfg);
        r.iterates.push_back(d);
    }
    return r;
}

double count(const Tensor& density) { return density.sum(); }

// ---------------------------------------------------------------------------
// Checkpoint format (text header + raw f8 little-endian payload):
//   PCKPT1
//   config image_size=64 channels=32 heads=1 enc=12,20 dec=32,16
//          hidden=relu output=relu iterations=2   (single line in the file)
//   tensor enc_w1 f8 4 12 3 3 3
//   ...
//   data
//   <binary>

void save_checkpoint(const std::string& path, const ModelParams& p, const ModelConfig& cfg) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint for writing: " + path);
    f << "PCKPT1\n";
    f << "config image_size=" << cfg.image_size << " channels=" << cfg.channels
      << " heads=" << cfg.heads << " enc=" << cfg.encoder_widths[0] << ","
      << cfg.encoder_widths[1] << " dec=" << cfg.decoder_widths[0] << "," << cfg.decoder_widths[1]
      << " gain=" << cfg.attention_gain << " hidden=" << to_string(cfg.hidden_activation)
      << " output=" << to_string(cfg.output_activation) << " iterations=" << cfg.iterations
      << "\n";
    auto named = p.named();
    for (auto& [name, t] : named) {
        f << "tensor " << name << " f8 " << t->rank();
        for (int d : t->shape) f << " " << d;
        f << "\n";
    }
    f << "data\n";
    for (auto& [name, t] : named)
        f.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->numel() * sizeof(double)));
    if (!f) throw Error("checkpoint write failed: " + path);
}

namespace {

std::string expect_kv(std::istringstream& in, const std::string& key) {
    std::string tok;
    if (!(in >> tok) || tok.rfind(key + "=", 0) != 0)
        throw Error("checkpoint config: expected " + key);
    return tok.substr(key.size() + 1);
}

}  // namespace

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(f, line) || line != "PCKPT1") throw Error("bad checkpoint magic");
    if (!std::getline(f, line) || line.rfind("config ", 0) != 0)
        throw Error("checkpoint missing config line");

    ModelConfig cfg;
    {
        std::istringstream in(line.substr(7));
        cfg.image_size = std::stoi(expect_kv(in, "image_size"));
        cfg.channels = std::stoi(expect_kv(in, "channels"));
        cfg.heads = std::stoi(expect_kv(in, "heads"));
        std::string enc = expect_kv(in, "enc");
        std::string dec = expect_kv(in, "dec");
        auto parse2 = [](const std::string& s, std::array<int, 2>& out) {
            size_t comma = s.find(',');
            if (comma == std::string::npos) throw Error("checkpoint config: bad width pair");
            out[0] = std::stoi(s.substr(0, comma));
            out[1] = std::stoi(s.substr(comma + 1));
        };
        parse2(enc, cfg.encoder_widths);
        parse2(dec, cfg.decoder_widths);
        cfg.attention_gain = std::stod(expect_kv(in, "gain"));
        cfg.hidden_activation = activation_from_string(expect_kv(in, "hidden"));
        cfg.output_activation = activation_from_string(expect_kv(in, "output"));
        cfg.iterations = std::stoi(expect_kv(in, "iterations"));
        cfg.validate();
    }

    ModelParams p = ModelParams::initialized(cfg, 0);
    auto named = p.named();
    std::vector<Tensor*> order;
    for (size_t i = 0; i < named.size(); ++i) {
        if (!std::getline(f, line)) throw Error("checkpoint truncated in tensor table");
        std::istringstream in(line);
        std::string tag, name, dtype;
        int rank = 0;
        if (!(in >> tag >> name >> dtype >> rank) || tag != "tensor" || dtype != "f8")
            throw Error("bad tensor line: " + line);
        if (name != named[i].first)
            throw Error("unexpected tensor name: " + name + " (want " + named[i].first + ")");
        std::vector<int> shape(static_cast<size_t>(rank));
        for (int& d : shape)
            if (!(in >> d)) throw Error("bad tensor shape in: " + line);
        if (shape != named[i].second->shape)
            throw Error("tensor shape mismatch for " + name + " against config");
        order.push_back(named[i].second);
    }
    if (!std::getline(f, line) || line != "data") throw Error("checkpoint missing data marker");
    for (Tensor* t : order) {
        f.read(reinterpret_cast<char*>(t->data()),
               static_cast<std::streamsize>(t->numel() * sizeof(double)));
        if (!f) throw Error("checkpoint payload truncated");
    }
    return {std::move(p), cfg};
}

}  // namespace pc
