#pragma once

#include "promptcount/scene.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace pc {

// A generated dataset: shared class library plus scenes, each with one
// primary (prompted) class. Persisted as a manifest.json index, P6 images,
// PDM1 reference densities for the primary class, and textual annotations.
struct Dataset {
    std::vector<ClassDef> library;
    std::vector<Scene> scenes;
    std::vector<int> primary_class;  // index into scene.annotation.classes
    std::vector<Tensor> density;     // primary-class density at image resolution, f32-snapped
    int image_size = 64;
    double sigma = kGtSigma;
    uint64_t backend_seed = 0;

    size_t size() const { return scenes.size(); }
};

// Sampling rule for generating scenes from a library.
struct DatasetSpec {
    int image_size = 64;
    double sigma = kGtSigma;
    double noise = 0.05;
    std::vector<ClassDef> classes;
    int classes_per_scene = 1;
    double two_class_fraction = 0.0;  // fraction of scenes that add a distractor class
    int count_min = 5;
    int count_max = 40;
    int distractor_count_min = 3;  // used when classes_per_scene > 1
    int distractor_count_max = 10;
    Placement placement = Placement::Uniform;
    uint64_t backend_seed = 7;
};

DatasetSpec load_dataset_spec(const std::string& path);
void save_dataset_spec(const std::string& path, const DatasetSpec& spec);

// Generate n scenes; scene i is deterministic in (seed, i). The primary class
// rotates through the library.
Dataset synthesize_dataset(const DatasetSpec& spec, int n, uint64_t seed);

void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

bool dataset_equal(const Dataset& a, const Dataset& b);

std::unique_ptr<SyntheticBackend> make_backend(const Dataset& ds, int grid);

// FSC-147-style annotation adapter. The manifest is a JSON array of records:
//   { "image": path, "image_size": [w,h], "class_name": str,
//     "points": [[x,y],...], "boxes": [[x0,y0,x1,y1] x3] }
// Three exemplar boxes are accepted; the first is the default exemplar.
struct FscRecord {
    std::string image_path;
    int image_w = 0, image_h = 0;
    SceneAnnotation annotation;  // single class entry
};

std::vector<FscRecord> load_fsc_annotations(const std::string& manifest_path);

}  // namespace pc
