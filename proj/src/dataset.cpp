#include "promptcount/dataset.hpp"

#include "promptcount/io.hpp"
#include "promptcount/kernels.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace pc {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json class_to_json(const ClassDef& c) {
    return json{{"name", c.name},
                {"radius", c.radius},
                {"intensity", c.intensity},
                {"freq", c.texture_freq},
                {"angle", c.texture_angle},
                {"color", {c.color[0], c.color[1], c.color[2]}}};
}

ClassDef class_from_json(const json& j) {
    ClassDef c;
    c.name = j.at("name").get<std::string>();
    c.radius = j.at("radius").get<double>();
    c.intensity = j.at("intensity").get<double>();
    c.texture_freq = j.at("freq").get<double>();
    c.texture_angle = j.at("angle").get<double>();
    auto col = j.at("color");
    for (int i = 0; i < 3; ++i) c.color[static_cast<size_t>(i)] = col.at(i).get<double>();
    return c;
}

std::string scene_file(const char* stem, size_t i, const char* ext) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04zu.%s", stem, i, ext);
    return buf;
}

void save_annotation(const std::string& path, const SceneAnnotation& ann) {
    std::ofstream f(path);
    if (!f) throw Error("cannot open annotation for writing: " + path);
    char buf[512];
    f << "ANN1\n";
    f << "classes " << ann.classes.size() << "\n";
    for (const auto& c : ann.classes) {
        f << "class " << c.name << "\n";
        f << "points " << c.points.size() << "\n";
        for (const auto& p : c.points) {
            std::snprintf(buf, sizeof(buf), "%.17g %.17g\n", p[0], p[1]);
            f << buf;
        }
        std::snprintf(buf, sizeof(buf), "box %.17g %.17g %.17g %.17g\n", c.exemplar_box[0],
                      c.exemplar_box[1], c.exemplar_box[2], c.exemplar_box[3]);
        f << buf;
    }
    if (!f) throw Error("annotation write failed: " + path);
}

SceneAnnotation load_annotation(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open annotation: " + path);
    std::string tok;
    size_t nclasses = 0;
    if (!(f >> tok) || tok != "ANN1") throw Error("bad annotation magic in " + path);
    if (!(f >> tok >> nclasses) || tok != "classes") throw Error("bad annotation header in " + path);
    SceneAnnotation ann;
    for (size_t i = 0; i < nclasses; ++i) {
        ClassAnnotation c;
        size_t npoints = 0;
        if (!(f >> tok >> c.name) || tok != "class") throw Error("bad class record in " + path);
        if (!(f >> tok >> npoints) || tok != "points") throw Error("bad points record in " + path);
        c.points.resize(npoints);
        for (auto& p : c.points)
            if (!(f >> p[0] >> p[1])) throw Error("truncated points in " + path);
        if (!(f >> tok) || tok != "box") throw Error("bad box record in " + path);
        for (auto& v : c.exemplar_box)
            if (!(f >> v)) throw Error("truncated box in " + path);
        ann.classes.push_back(std::move(c));
    }
    return ann;
}

}  // namespace

DatasetSpec load_dataset_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open dataset spec: " + path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw Error("bad dataset spec JSON in " + path + ": " + e.what());
    }
    DatasetSpec spec;
    spec.image_size = j.value("image_size", spec.image_size);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.noise = j.value("noise", spec.noise);
    spec.classes_per_scene = j.value("classes_per_scene", spec.classes_per_scene);
    spec.two_class_fraction = j.value("two_class_fraction", spec.two_class_fraction);
    spec.count_min = j.value("count_min", spec.count_min);
    spec.count_max = j.value("count_max", spec.count_max);
    spec.distractor_count_min = j.value("distractor_count_min", spec.distractor_count_min);
    spec.distractor_count_max = j.value("distractor_count_max", spec.distractor_count_max);
    spec.backend_seed = j.value("backend_seed", spec.backend_seed);
    if (j.value("placement", "uniform") == std::string("clustered"))
        spec.placement = Placement::Clustered;
    if (j.contains("classes")) {
        for (const auto& cj : j.at("classes")) spec.classes.push_back(class_from_json(cj));
    } else {
        spec.classes = default_class_library();
    }
    if (spec.classes.empty()) throw Error("dataset spec has no classes");
    return spec;
}

void save_dataset_spec(const std::string& path, const DatasetSpec& spec) {
    json j;
    j["image_size"] = spec.image_size;
    j["sigma"] = spec.sigma;
    j["noise"] = spec.noise;
    j["classes_per_scene"] = spec.classes_per_scene;
    j["two_class_fraction"] = spec.two_class_fraction;
    j["count_min"] = spec.count_min;
    j["count_max"] = spec.count_max;
    j["distractor_count_min"] = spec.distractor_count_min;
    j["distractor_count_max"] = spec.distractor_count_max;
    j["backend_seed"] = spec.backend_seed;
    j["placement"] = spec.placement == Placement::Clustered ? "clustered" : "uniform";
    j["classes"] = json::array();
    for (const auto& c : spec.classes) j["classes"].push_back(class_to_json(c));
    std::ofstream f(path);
    if (!f) throw Error("cannot open dataset spec for writing: " + path);
    f << j.dump(2) << "\n";
}

Dataset synthesize_dataset(const DatasetSpec& spec, int n, uint64_t seed) {
    if (n < 0) throw Error("negative dataset size");
    Dataset ds;
    ds.library = spec.classes;
    ds.image_size = spec.image_size;
    ds.sigma = spec.sigma;
    ds.backend_seed = spec.backend_seed;
    const int nlib = static_cast<int>(spec.classes.size());
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 pick(seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(i));
        const int primary = static_cast<int>(pick() % static_cast<uint64_t>(nlib));
        SceneSpec sspec;
        sspec.image_size = spec.image_size;
        sspec.noise = spec.noise;
        sspec.seed = pick();
        SceneObjectSpec target;
        target.appearance = spec.classes[static_cast<size_t>(primary)];
        target.count_min = spec.count_min;
        target.count_max = spec.count_max;
        target.placement = spec.placement;
        sspec.objects.push_back(target);
        int classes_here = spec.classes_per_scene;
        if (spec.two_class_fraction > 0.0 && classes_here == 1) {
            const double roll = static_cast<double>(pick() >> 11) * 0x1.0p-53;
            if (roll < spec.two_class_fraction) classes_here = 2;
        }
        for (int extra = 1; extra < classes_here; ++extra) {
            const int other =
                (primary + 1 + static_cast<int>(pick() % static_cast<uint64_t>(nlib - 1))) % nlib;
            SceneObjectSpec dis;
            dis.appearance = spec.classes[static_cast<size_t>(other)];
            dis.count_min = spec.distractor_count_min;
            dis.count_max = spec.distractor_count_max;
            dis.placement = spec.placement;
            sspec.objects.push_back(dis);
        }
        Scene scene = generate_scene(sspec);
        Tensor dens = render_gt_density(scene.annotation.classes[0].points, spec.sigma,
                                        spec.image_size, spec.image_size);
        ds.scenes.push_back(std::move(scene));
        ds.primary_class.push_back(0);  // primary class is listed first in its scene
        ds.density.push_back(snap_f32(dens));
    }
    return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
    fs::create_directories(dir);
    json manifest;
    manifest["version"] = 1;
    manifest["image_size"] = ds.image_size;
    manifest["sigma"] = ds.sigma;
    manifest["backend_seed"] = ds.backend_seed;
    manifest["classes"] = json::array();
    for (const auto& c : ds.library) manifest["classes"].push_back(class_to_json(c));
    manifest["scenes"] = json::array();
    for (size_t i = 0; i < ds.scenes.size(); ++i) {
        const std::string img = scene_file("scene", i, "ppm");
        const std::string ann = scene_file("scene", i, "ann");
        const std::string pdm = scene_file("scene", i, "pdm");
        save_ppm(dir + "/" + img, ds.scenes[i].image);
        save_annotation(dir + "/" + ann, ds.scenes[i].annotation);
        save_pdm(dir + "/" + pdm, ds.density[i]);
        json rec;
        rec["image"] = img;
        rec["annotation"] = ann;
        rec["density"] = pdm;
        rec["primary_class"] = ds.primary_class[i];
        rec["checksums"] = {{img, file_checksum(dir + "/" + img)},
                            {ann, file_checksum(dir + "/" + ann)},
                            {pdm, file_checksum(dir + "/" + pdm)}};
        manifest["scenes"].push_back(std::move(rec));
    }
    std::ofstream f(dir + "/manifest.json");
    if (!f) throw Error("cannot write manifest in " + dir);
    f << manifest.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw Error("missing manifest.json in " + dir);
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw Error(std::string("bad manifest JSON: ") + e.what());
    }
    if (manifest.value("version", -1) != 1)
        throw Error("unsupported dataset version in " + dir);
    Dataset ds;
    ds.image_size = manifest.at("image_size").get<int>();
    ds.sigma = manifest.at("sigma").get<double>();
    ds.backend_seed = manifest.at("backend_seed").get<uint64_t>();
    for (const auto& cj : manifest.at("classes")) ds.library.push_back(class_from_json(cj));
    for (const auto& rec : manifest.at("scenes")) {
        const std::string img = rec.at("image").get<std::string>();
        const std::string ann = rec.at("annotation").get<std::string>();
        const std::string pdm = rec.at("density").get<std::string>();
        for (const auto& [name, sum] : rec.at("checksums").items()) {
            const std::string actual = file_checksum(dir + "/" + name);
            if (actual != sum.get<std::string>())
                throw Error("checksum mismatch for " + name + " in " + dir);
        }
        Scene scene;
        scene.image = load_ppm(dir + "/" + img);
        scene.annotation = load_annotation(dir + "/" + ann);
        ds.scenes.push_back(std::move(scene));
        ds.primary_class.push_back(rec.at("primary_class").get<int>());
        ds.density.push_back(load_pdm(dir + "/" + pdm));
    }
    return ds;
}

bool dataset_equal(const Dataset& a, const Dataset& b) {
    if (a.size() != b.size() || a.image_size != b.image_size || a.sigma != b.sigma ||
        a.backend_seed != b.backend_seed || a.library.size() != b.library.size())
        return false;
    for (size_t i = 0; i < a.library.size(); ++i) {
        const auto& x = a.library[i];
        const auto& y = b.library[i];
        if (x.name != y.name || x.radius != y.radius || x.intensity != y.intensity ||
            x.texture_freq != y.texture_freq || x.texture_angle != y.texture_angle ||
            x.color != y.color)
            return false;
    }
    for (size_t i = 0; i < a.size(); ++i) {
        if (a.primary_class[i] != b.primary_class[i]) return false;
        if (a.scenes[i].image.shape != b.scenes[i].image.shape ||
            a.scenes[i].image.v != b.scenes[i].image.v)
            return false;
        if (a.density[i].shape != b.density[i].shape || a.density[i].v != b.density[i].v)
            return false;
        const auto& ca = a.scenes[i].annotation.classes;
        const auto& cb = b.scenes[i].annotation.classes;
        if (ca.size() != cb.size()) return false;
        for (size_t j = 0; j < ca.size(); ++j) {
            if (ca[j].name != cb[j].name || ca[j].points != cb[j].points ||
                ca[j].exemplar_box != cb[j].exemplar_box)
                return false;
        }
    }
    return true;
}

std::unique_ptr<SyntheticBackend> make_backend(const Dataset& ds, int grid) {
    return std::make_unique<SyntheticBackend>(ds.library, ds.image_size, grid, ds.backend_seed);
}

std::vector<FscRecord> load_fsc_annotations(const std::string& manifest_path) {
    std::ifstream f(manifest_path);
    if (!f) throw Error("cannot open FSC manifest: " + manifest_path);
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw Error(std::string("bad FSC manifest JSON: ") + e.what());
    }
    if (!j.is_array()) throw Error("FSC manifest must be a JSON array of records");
    std::vector<FscRecord> out;
    int idx = 0;
    for (const auto& rec : j) {
        const std::string where = "record " + std::to_string(idx);
        FscRecord r;
        if (!rec.contains("image") || !rec.at("image").is_string() ||
            rec.at("image").get<std::string>().empty())
            throw Error(where + ": missing or empty 'image' field");
        r.image_path = rec.at("image").get<std::string>();
        if (!rec.contains("image_size") || !rec.at("image_size").is_array() ||
            rec.at("image_size").size() != 2)
            throw Error(where + ": 'image_size' must be [w,h]");
        r.image_w = rec.at("image_size").at(0).get<int>();
        r.image_h = rec.at("image_size").at(1).get<int>();
        if (r.image_w <= 0 || r.image_h <= 0) throw Error(where + ": non-positive image size");
        ClassAnnotation ann;
        if (!rec.contains("class_name") || rec.at("class_name").get<std::string>().empty())
            throw Error(where + ": missing 'class_name'");
        ann.name = rec.at("class_name").get<std::string>();
        int pi = 0;
        for (const auto& p : rec.value("points", json::array())) {
            if (!p.is_array() || p.size() != 2)
                throw Error(where + ": point " + std::to_string(pi) + " must be [x,y]");
            const double x = p.at(0).get<double>();
            const double y = p.at(1).get<double>();
            if (x < 0 || y < 0 || x >= r.image_w || y >= r.image_h)
                throw Error(where + ": point " + std::to_string(pi) + " out of bounds");
            ann.points.push_back({x, y});
            ++pi;
        }
        const auto boxes = rec.value("boxes", json::array());
        if (!boxes.empty()) {
            if (boxes.size() != 3) throw Error(where + ": expected exactly 3 exemplar boxes");
            const auto& b = boxes.at(0);  // first box is the default exemplar
            if (!b.is_array() || b.size() != 4) throw Error(where + ": box 0 must be [x0,y0,x1,y1]");
            for (int i = 0; i < 4; ++i) ann.exemplar_box[static_cast<size_t>(i)] = b.at(i).get<double>();
            if (!(ann.exemplar_box[2] > ann.exemplar_box[0]) ||
                !(ann.exemplar_box[3] > ann.exemplar_box[1]))
                throw Error(where + ": degenerate exemplar box");
        }
        r.annotation.classes.push_back(std::move(ann));
        out.push_back(std::move(r));
        ++idx;
    }
    return out;
}

}  // namespace pc
