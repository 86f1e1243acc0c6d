#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "promptcount/io.hpp"
#include "promptcount/metrics.hpp"
#include "promptcount/train.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

using namespace pc;

TEST_CASE("compute_metrics: hand values, n=1 collapse, permutation invariance") {
    CHECK(compute_metrics({1, 2, 3}, {1, 2, 3}).mae == 0.0);
    CHECK(compute_metrics({1, 2, 3}, {1, 2, 3}).mse == 0.0);

    Metrics m = compute_metrics({2, 4}, {1, 2});
    CHECK(m.mae == doctest::Approx(1.5));
    CHECK(m.mse == doctest::Approx(std::sqrt(2.5)));  // 1.5811388300841898
    CHECK(m.n == 2);

    Metrics single = compute_metrics({7.5}, {3.0});
    CHECK(single.mae == doctest::Approx(4.5));
    CHECK(single.mse == doctest::Approx(4.5));

    std::mt19937_64 rng(3);
    std::vector<double> preds, gts;
    for (int i = 0; i < 20; ++i) {
        preds.push_back(std::uniform_real_distribution<double>(0, 40)(rng));
        gts.push_back(std::uniform_real_distribution<double>(0, 40)(rng));
    }
    Metrics base = compute_metrics(preds, gts);
    std::vector<size_t> order(preds.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> preds2, gts2;
    for (size_t i : order) {
        preds2.push_back(preds[i]);
        gts2.push_back(gts[i]);
    }
    Metrics shuffled = compute_metrics(preds2, gts2);
    CHECK(base.mae == doctest::Approx(shuffled.mae).epsilon(1e-12));
    CHECK(base.mse == doctest::Approx(shuffled.mse).epsilon(1e-12));

    CHECK_THROWS_AS(compute_metrics({}, {}), Error);
    CHECK_THROWS_AS(compute_metrics({1.0}, {1.0, 2.0}), Error);
}

TEST_CASE("report serialization: fixed columns, 2 decimals, absent rows") {
    EvalReport report;
    report.rows = {{"box", {1.2345, 2.3456, 10}},
                   {"point", {0, 0, 0}},
                   {"text", {3.5, 4.25, 10}},
                   {"average", {2.37, 3.30, 20}}};
    const std::string table = report.to_table();
    CHECK(table.find("box         1.23     2.35     10") != std::string::npos);
    CHECK(table.find("point     absent   absent      0") != std::string::npos);
    // Repeated serialization is identical.
    CHECK(table == report.to_table());
}

TEST_CASE("render_density_image: black for zero maps, peak at 255, sidecar count") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "pc_viz_test";
    fs::create_directories(dir);

    Tensor zero({4, 4}, 0.0);
    const std::string zpath = (dir / "zero.pgm").string();
    render_density_image(zero, zpath);
    {
        std::ifstream f(zpath, std::ios::binary);
        std::string magic;
        int w, h, maxv;
        f >> magic >> w >> h >> maxv;
        f.get();
        std::vector<char> data(16);
        f.read(data.data(), 16);
        CHECK(magic == "P5");
        for (char c : data) CHECK(c == 0);
    }

    Tensor ramp({2, 2}, 0.0);
    ramp.v = {0.0, 1.0, 2.0, 4.0};
    const std::string rpath = (dir / "ramp.pgm").string();
    render_density_image(ramp, rpath);
    {
        std::ifstream f(rpath, std::ios::binary);
        std::string magic;
        int w, h, maxv;
        f >> magic >> w >> h >> maxv;
        f.get();
        std::vector<unsigned char> data(4);
        f.read(reinterpret_cast<char*>(data.data()), 4);
        CHECK(data[0] == 0);
        CHECK(data[3] == 255);
        std::ifstream side(rpath + ".txt");
        std::string key;
        double val;
        side >> key >> val;
        CHECK(key == "count");
        CHECK(val == doctest::Approx(7.0));
    }
    fs::remove_all(dir);
}

namespace {

// Stub-friendly negative protocol checks using tiny real models.
ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.image_size = 24;
    cfg.channels = 8;
    cfg.encoder_widths = {4, 6};
    cfg.decoder_widths = {8, 4};
    return cfg;
}

std::vector<TrainingSample> tiny_samples(int n, std::mt19937_64& rng) {
    std::vector<TrainingSample> out;
    for (int i = 0; i < n; ++i) {
        TrainingSample s;
        s.image = pctest::random_tensor({3, 24, 24}, rng, 0.0, 1.0);
        s.mask = Tensor({3, 3}, 0.0);
        s.mask.at2(i % 3, (i / 3) % 3) = 1.0;
        s.gt_density = pctest::random_tensor({3, 3}, rng, 0.0, 1.0);
        s.class_id = i % 2;
        s.gt_count = 3 + i;
        s.type = static_cast<PromptType>(i % 3);
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("negative_eval: seeded, reproducible, rejects same-class pairs") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 3);
    std::mt19937_64 rng(9);
    auto samples = tiny_samples(8, rng);

    Metrics a = negative_eval(samples, p, cfg, 2, 42);
    Metrics b = negative_eval(samples, p, cfg, 2, 42);
    CHECK(a.mae == b.mae);
    CHECK(a.mse == b.mse);
    CHECK(a.n == 8);

    // All samples share one class: no legal pairs.
    for (auto& s : samples) s.class_id = 0;
    CHECK_THROWS_AS(negative_eval(samples, p, cfg, 2, 42), Error);
}

TEST_CASE("negative_eval degenerate models: zeros and gt-echo bounds") {
    // A model that always outputs zeros gives N-MAE = N-MSE = 0; one that
    // echoes the scene's own ground truth gives N-MAE = mean gt count.
    // Exercised through compute_metrics against zero targets (the protocol's
    // scoring step) to stay model-agnostic.
    std::vector<double> zero_preds(5, 0.0);
    Metrics zero = compute_metrics(zero_preds, std::vector<double>(5, 0.0));
    CHECK(zero.mae == 0.0);
    CHECK(zero.mse == 0.0);

    std::vector<double> echo = {3, 7, 11, 19};
    Metrics worst = compute_metrics(echo, std::vector<double>(4, 0.0));
    CHECK(worst.mae == doctest::Approx(10.0));  // mean of B counts
}

TEST_CASE("iteration_sweep shapes and cross_prompt_eval determinism") {
    ModelConfig cfg = tiny_config();
    ModelParams p = ModelParams::initialized(cfg, 5);
    std::mt19937_64 rng(11);
    auto samples = tiny_samples(9, rng);

    auto sweep = iteration_sweep(samples, p, cfg, 4);
    CHECK(sweep.size() == 4);

    EvalReport r1 = cross_prompt_eval(samples, p, cfg, 2);
    EvalReport r2 = cross_prompt_eval(samples, p, cfg, 2);
    CHECK(r1.to_table() == r2.to_table());
    REQUIRE(r1.rows.size() == 4);
    CHECK(r1.rows[3].first == "average");
    // Average row is the arithmetic mean of the three type rows.
    const double want_mae = (r1.rows[0].second.mae + r1.rows[1].second.mae +
                             r1.rows[2].second.mae) / 3.0;
    CHECK(r1.rows[3].second.mae == doctest::Approx(want_mae));

    // Box and point rows differ when their masks differ.
    CHECK(r1.rows[0].second.mae != r1.rows[1].second.mae);
}

TEST_CASE("train config io and seed override") {
    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path() / "pc_cfg_test";
    fs::create_directories(dir);
    const std::string path = (dir / "train.cfg").string();
    std::ofstream(path) << "epochs = 3\nbatch_size = 4\nlearning_rate = 0.002\n"
                        << "seed = 9\nloss = fixed_point\niterations = 2\n"
                        << "contrastive = 1\ntext_strategy = softmax\n# comment\n";
    TrainConfig cfg = load_train_config(path);
    CHECK(cfg.epochs == 3);
    CHECK(cfg.batch_size == 4);
    CHECK(cfg.learning_rate == doctest::Approx(0.002));
    CHECK(cfg.seed == 9);
    CHECK(cfg.contrastive);

    setenv("PROMPTCOUNT_SEED", "777", 1);
    TrainConfig cfg2 = load_train_config(path);
    CHECK(cfg2.seed == 777);
    unsetenv("PROMPTCOUNT_SEED");

    std::ofstream(path) << "bogus_key = 1\n";
    CHECK_THROWS_AS(load_train_config(path), Error);
    fs::remove_all(dir);
}

TEST_CASE("format_log is tab separated") {
    std::vector<EpochLog> log = {{1, 0.5, 10.0, 12.0}, {2, 0.25, 8.0, 9.0}};
    const std::string s = format_log(log);
    CHECK(s.find("1\t0.500000\t10.0000\t12.0000\n") != std::string::npos);
    CHECK(s.find("2\t0.250000\t8.0000\t9.0000\n") != std::string::npos);
}
