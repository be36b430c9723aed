#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <set>

#include "bivad/data.hpp"

using namespace bivad;
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

Frame gray(std::size_t h, std::size_t w, float v) { return {Tensor<float>({1, h, w}, v), 0.0f, 255.0f}; }

SynthSpec small_spec(std::uint64_t seed) {
    SynthSpec s;
    s.height = 32;
    s.width = 32;
    s.length = 120;
    s.sprites = 2;
    s.sprite_size = 6;
    s.seed = seed;
    return s;
}

bool same_pixels(const Frame& a, const Frame& b) {
    const auto x = a.pixels.data(), y = b.pixels.data();
    return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

} // namespace

TEST_CASE("image directory loads in file-name order") {
    TempDir dir("bivad_png_video");
    for (int i = 99; i >= 0; --i) {
        char name[32];
        std::snprintf(name, sizeof name, "%03d.png", i);
        write_png(dir.path / name, Tensor<float>({1, 8, 8}, static_cast<float>(i)), 0.0f, 255.0f);
    }
    const auto v = load_video(dir.path);
    REQUIRE(v.frames.size() == 100);
    for (std::size_t i = 0; i < 100; ++i) CHECK(v.frames[i].pixels[0] == static_cast<float>(i));
    CHECK(v.frames[0].pixels.shape() == Shape{1, 8, 8});
}

TEST_CASE("tensor file video") {
    TempDir dir("bivad_bvt_video");
    Tensor<float> t({30, 1, 64, 64}, 0.25f);
    save_bvt(dir.path / "clip.bvt", t);
    const auto v = load_video(dir.path / "clip.bvt");
    CHECK(v.id == "clip");
    REQUIRE(v.frames.size() == 30);
    CHECK(v.frames[0].pixels.shape() == Shape{1, 64, 64});
    CHECK(v.frames[0].lo == -1.0f);
    save_bvt(dir.path / "flat.bvt", Tensor<float>({4, 4}));
    CHECK_THROWS_AS(load_video(dir.path / "flat.bvt"), Error);
}

TEST_CASE("missing or empty videos") {
    TempDir dir("bivad_empty_video");
    try {
        load_video(dir.path);
        FAIL("empty directory accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::io_error);
    }
    CHECK_THROWS_AS(load_video(dir.path / "nope"), Error);
    CHECK_THROWS_AS(load_split(dir.path, "train"), Error);
}

TEST_CASE("image formats") {
    TempDir dir("bivad_formats");
    Tensor<float> rgb({3, 4, 5});
    for (std::size_t i = 0; i < rgb.numel(); ++i) rgb[i] = static_cast<float>(i * 4 % 256);
    write_png(dir.path / "c.png", rgb, 0.0f, 255.0f);
    const auto back = read_image(dir.path / "c.png");
    CHECK(back.pixels.shape() == Shape{3, 4, 5});
    for (std::size_t i = 0; i < rgb.numel(); ++i) CHECK(back.pixels[i] == rgb[i]);
    write_pgm(dir.path / "g.pgm", Tensor<float>({1, 3, 3}, 0.5f), 0.0f, 1.0f);
    const auto g = read_image(dir.path / "g.pgm");
    CHECK(g.pixels.shape() == Shape{1, 3, 3});
    CHECK(g.pixels[0] == 128.0f);
}

TEST_CASE("preprocessing range and size") {
    const auto black = preprocess(gray(64, 64, 0.0f), 32, 32, 1);
    const auto white = preprocess(gray(64, 64, 255.0f), 32, 32, 1);
    const auto mid = preprocess(gray(64, 64, 127.5f), 32, 32, 1);
    CHECK(black.shape() == Shape{1, 32, 32});
    for (std::size_t i = 0; i < black.numel(); ++i) {
        CHECK(black[i] == -1.0f);
        CHECK(white[i] == 1.0f);
        CHECK(std::abs(mid[i]) < 1e-6f);
    }
    // Already at size and in [-1,1]: preprocessing is the identity.
    Frame f{Tensor<float>({1, 8, 8}), -1.0f, 1.0f};
    for (std::size_t i = 0; i < 64; ++i) f.pixels[i] = static_cast<float>(i) / 32.0f - 1.0f;
    const auto same = preprocess(f, 8, 8, 1);
    for (std::size_t i = 0; i < 64; ++i) CHECK(same[i] == doctest::Approx(f.pixels[i]).epsilon(1e-6));
    const auto twice = preprocess(Frame{same, -1.0f, 1.0f}, 8, 8, 1);
    for (std::size_t i = 0; i < 64; ++i) CHECK(twice[i] == same[i]);

    Frame color{Tensor<float>({3, 4, 4}, 255.0f), 0.0f, 255.0f};
    const auto g = preprocess(color, 4, 4, 1);
    CHECK(g.shape() == Shape{1, 4, 4});
    CHECK(g[0] == doctest::Approx(1.0f));
    CHECK_THROWS_AS(preprocess(gray(4, 4, 0.0f), 4, 4, 3), Error);
}

TEST_CASE("train/validation split") {
    std::vector<int> items(100);
    std::iota(items.begin(), items.end(), 0);
    const auto [train, val] = split_train_val(items, 0.1, 42);
    CHECK(train.size() == 90);
    CHECK(val.size() == 10);
    std::set<int> all(train.begin(), train.end());
    all.insert(val.begin(), val.end());
    CHECK(all.size() == 100);
    const auto again = split_train_val(items, 0.1, 42);
    CHECK(again.first == train);
    CHECK(again.second == val);
    CHECK(split_train_val(items, 0.1, 43).second != val);
    CHECK_THROWS_AS(split_train_val(items, 0.0, 1), Error);
}

TEST_CASE("synthetic videos without anomalies") {
    const auto v = synth_generate(small_spec(3));
    REQUIRE(v.frames.size() == 120);
    for (int l : *v.labels) CHECK(l == 0);
    CHECK(v.frames[0].pixels.shape() == Shape{1, 32, 32});
    // Sprites move: consecutive frames differ.
    std::size_t changed = 0;
    for (std::size_t i = 0; i < v.frames[0].pixels.numel(); ++i)
        changed += v.frames[0].pixels[i] != v.frames[1].pixels[i];
    CHECK(changed > 0);
}

TEST_CASE("synthetic anomaly labels") {
    for (int k = 0; k < 4; ++k) {
        auto spec = small_spec(5);
        spec.anomalies = {{static_cast<AnomalyKind>(k), 50, 70, 1}};
        const auto v = synth_generate(spec);
        for (std::size_t t = 0; t < v.frames.size(); ++t) {
            CHECK((*v.labels)[t] == (t >= 50 && t <= 70 ? 1 : 0));
            float peak = 0.0f;
            for (float m : (*v.masks)[t].data()) peak = std::max(peak, m);
            CHECK(((*v.labels)[t] == 1) == (peak > 0.0f));
        }
        const auto gt = v.ground_truth();
        CHECK(gt.track_count == 1);
        CHECK(gt.regions.size() == 21);
    }
    CHECK(parse_anomaly_kind(to_string(AnomalyKind::off_path)) == AnomalyKind::off_path);
    CHECK_THROWS_AS(parse_anomaly_kind("teleport"), Error);
}

TEST_CASE("synthesis is deterministic") {
    auto spec = small_spec(9);
    spec.anomalies = plan_anomalies(spec.length, 2, 15, 12, spec.sprites, 4);
    const auto a = synth_generate(spec), b = synth_generate(spec);
    for (std::size_t t = 0; t < a.frames.size(); ++t)
        CHECK(same_pixels(a.frames[t], b.frames[t]));
    CHECK(*a.labels == *b.labels);
    spec.seed = 10;
    const auto c = synth_generate(spec);
    CHECK_FALSE(same_pixels(c.frames[0], a.frames[0]));
}

TEST_CASE("anomaly planning") {
    const auto plan = plan_anomalies(400, 3, 40, 16, 3, 1);
    REQUIRE(plan.size() == 3);
    for (std::size_t i = 0; i < plan.size(); ++i) {
        CHECK(plan[i].end - plan[i].begin + 1 == 40);
        CHECK(plan[i].begin >= 16);
        CHECK(plan[i].end < 400 - 16);
        if (i) CHECK(plan[i].begin > plan[i - 1].end);
    }
    CHECK_THROWS_AS(plan_anomalies(50, 3, 40, 16, 3, 1), Error);
}

TEST_CASE("dataset round trip") {
    TempDir dir("bivad_split");
    auto spec = small_spec(2);
    spec.length = 30;
    spec.anomalies = {{AnomalyKind::novel_shape, 10, 14, 0}};
    for (const char* id : {"b_video", "a_video"}) write_video(dir.path, "test", synth_generate(spec, id));
    const auto videos = load_split(dir.path, "test");
    REQUIRE(videos.size() == 2);
    CHECK(videos[0].id == "a_video");
    CHECK(videos[1].id == "b_video");
    REQUIRE(videos[0].labels.has_value());
    REQUIRE(videos[0].masks.has_value());
    CHECK(videos[0].labels->at(12) == 1);
    CHECK(videos[0].labels->at(20) == 0);
    CHECK(videos[0].ground_truth().regions.size() == 5);
    const auto original = synth_generate(spec);
    const auto pixels = preprocess(videos[0].frames[3], 32, 32, 1);
    const auto expected = preprocess(original.frames[3], 32, 32, 1);
    for (std::size_t i = 0; i < pixels.numel(); ++i) CHECK(pixels[i] == doctest::Approx(expected[i]).epsilon(1e-2));
}
