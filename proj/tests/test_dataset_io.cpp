#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptcount/dataset.hpp"
#include "promptcount/io.hpp"
#include "test_helpers.hpp"

#include <filesystem>
#include <fstream>
#include <random>

using namespace pc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DatasetSpec small_spec() {
    DatasetSpec spec;
    spec.classes = default_class_library();
    spec.count_min = 3;
    spec.count_max = 8;
    return spec;
}

}  // namespace

TEST_CASE("PDM round trip and corruption detection") {
    std::mt19937_64 rng(3);
    Tensor d = pctest::random_tensor({9, 13}, rng, 0.0, 4.0);
    d = snap_f32(d);
    TempDir tmp("pc_pdm_test");
    const std::string path = (tmp.path / "d.pdm").string();
    save_pdm(path, d);
    Tensor back = load_pdm(path);
    CHECK(pctest::bit_equal(d, back));
    CHECK_THROWS_AS(load_pdm((tmp.path / "missing.pdm").string()), Error);
}

TEST_CASE("PPM round trip is exact for u8-quantized images") {
    std::mt19937_64 rng(5);
    Tensor img = pctest::random_tensor({3, 12, 10}, rng, 0.0, 1.0);
    for (auto& v : img.v) v = std::lround(v * 255.0) / 255.0;
    TempDir tmp("pc_ppm_test");
    const std::string path = (tmp.path / "img.ppm").string();
    save_ppm(path, img);
    Tensor back = load_ppm(path);
    CHECK(pctest::bit_equal(img, back));
}

TEST_CASE("dataset round trip: load(save(D)) equals D") {
    Dataset ds = synthesize_dataset(small_spec(), 10, 99);
    TempDir tmp("pc_ds_roundtrip");
    save_dataset(tmp.path.string(), ds);
    Dataset back = load_dataset(tmp.path.string());
    CHECK(dataset_equal(ds, back));

    // Save the loaded copy again: still identical (stable fixed point).
    TempDir tmp2("pc_ds_roundtrip2");
    save_dataset(tmp2.path.string(), back);
    Dataset back2 = load_dataset(tmp2.path.string());
    CHECK(dataset_equal(ds, back2));
}

TEST_CASE("dataset load failures: missing file, checksum, version") {
    Dataset ds = synthesize_dataset(small_spec(), 3, 7);
    TempDir tmp("pc_ds_fail");
    save_dataset(tmp.path.string(), ds);

    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(load_dataset((tmp.path / "nope").string()), Error);
    }
    SUBCASE("corrupted scene file fails the checksum") {
        std::ofstream f(tmp.path / "scene_0001.pdm", std::ios::binary | std::ios::app);
        f << "junk";
        f.close();
        CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
    }
    SUBCASE("version mismatch") {
        auto manifest_path = tmp.path / "manifest.json";
        std::ifstream in(manifest_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        in.close();
        const auto pos = text.find("\"version\": 1");
        REQUIRE(pos != std::string::npos);
        text.replace(pos, 12, "\"version\": 9");
        std::ofstream out(manifest_path);
        out << text;
        out.close();
        CHECK_THROWS_AS(load_dataset(tmp.path.string()), Error);
    }
}

TEST_CASE("dataset determinism in (spec, seed)") {
    Dataset a = synthesize_dataset(small_spec(), 6, 1234);
    Dataset b = synthesize_dataset(small_spec(), 6, 1234);
    CHECK(dataset_equal(a, b));
    Dataset c = synthesize_dataset(small_spec(), 6, 1235);
    CHECK(!dataset_equal(a, c));
}

TEST_CASE("FSC adapter: empty, full record, validation diagnostics") {
    TempDir tmp("pc_fsc_test");
    const std::string path = (tmp.path / "manifest.json").string();

    SUBCASE("empty manifest") {
        std::ofstream(path) << "[]";
        CHECK(load_fsc_annotations(path).empty());
    }

    SUBCASE("record with 3 boxes and 25 points") {
        std::ofstream f(path);
        f << "[{\"image\": \"img.ppm\", \"image_size\": [200, 100], \"class_name\": \"apples\", "
             "\"points\": [";
        for (int i = 0; i < 25; ++i) f << (i ? "," : "") << "[" << (i * 7 % 190) << "," << (i * 3 % 90) << "]";
        f << "], \"boxes\": [[1,2,20,22],[30,30,50,50],[60,60,80,80]]}]";
        f.close();
        auto records = load_fsc_annotations(path);
        REQUIRE(records.size() == 1);
        CHECK(records[0].annotation.classes[0].points.size() == 25);
        CHECK(records[0].annotation.classes[0].exemplar_box[0] == 1.0);  // first box is default
        CHECK(records[0].annotation.classes[0].exemplar_box[3] == 22.0);
        CHECK(records[0].annotation.classes[0].name == "apples");
    }

    SUBCASE("out-of-bounds point rejected with a record diagnostic") {
        std::ofstream(path) << "[{\"image\": \"img.ppm\", \"image_size\": [100, 100], "
                               "\"class_name\": \"apples\", \"points\": [[5,5],[150,5]]}]";
        CHECK_THROWS_WITH_AS(load_fsc_annotations(path), "record 0: point 1 out of bounds", Error);
    }

    SUBCASE("malformed JSON carries a diagnostic") {
        std::ofstream(path) << "[{\"image\": ";
        CHECK_THROWS_AS(load_fsc_annotations(path), Error);
    }
}
