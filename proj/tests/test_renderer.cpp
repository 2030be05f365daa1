#include <catch2/catch_amalgamated.hpp>

#include "auregress/dataset.hpp"
#include "auregress/renderer.hpp"
#include "oracles.hpp"

using namespace auregress;
using oracles::mask_stats;

namespace {
const ParamSpaceConfig cfg = ParamSpaceConfig::desk();

FacialParams with_au(int channel, double value) {
    auto p = base_params(cfg);
    p.au[static_cast<std::size_t>(channel)] = value;
    return p;
}
} // namespace

TEST_CASE("base face is deterministic, symmetric, and has a mouth", "[renderer]") {
    auto a = base_face(cfg);
    auto b = render(base_params(cfg), 0, cfg);
    CHECK(a.image.rgb == b.image.rgb);
    CHECK(a.mask == b.mask);

    // mirror symmetry within the face bounding box
    auto face = mask_stats(a.mask, cfg.image_size, cfg.image_size, kMaskFace);
    REQUIRE(face.count > 0);
    int x0 = cfg.image_size, x1 = 0, y0 = cfg.image_size, y1 = 0;
    for (int y = 0; y < cfg.image_size; ++y)
        for (int x = 0; x < cfg.image_size; ++x)
            if (a.mask[static_cast<std::size_t>(y) * cfg.image_size + x] != kMaskBackground) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x)
            for (int c = 0; c < 3; ++c)
                CHECK(a.image.at(y, x, c) == a.image.at(y, cfg.image_size - 1 - x, c));

    CHECK(mask_stats(a.mask, cfg.image_size, cfg.image_size, kMaskMouth).count > 0);
}

TEST_CASE("jaw-left displaces the mouth centroid monotonically", "[renderer]") {
    const auto base = mask_stats(base_face(cfg).mask, cfg.image_size, cfg.image_size, kMaskMouth);
    double prev_disp = -1.0;
    for (double v : {0.02, 0.5, 0.9}) {
        auto out = render(with_au(kAuJawLeft, v), 0, cfg);
        auto m = mask_stats(out.mask, cfg.image_size, cfg.image_size, kMaskMouth);
        const double disp = base.cx - m.cx; // positive = left of base
        if (v > 0.02) CHECK(disp > 0.0);
        CHECK(disp > prev_disp);
        prev_disp = disp;
    }
}

TEST_CASE("eye-close collapses the eye mask", "[renderer]") {
    const auto base = mask_stats(base_face(cfg).mask, cfg.image_size, cfg.image_size, kMaskEyes);
    REQUIRE(base.count > 0);
    auto closed = render(with_au(kAuEyeClose, 1.0), 0, cfg);
    const auto m = mask_stats(closed.mask, cfg.image_size, cfg.image_size, kMaskEyes);
    CHECK(m.count < base.count / 4);
}

TEST_CASE("every AU channel drives its declared statistic strictly monotonically", "[renderer]") {
    const double values[] = {0.05, 0.275, 0.5, 0.725, 0.95};
    for (int ch = 0; ch < cfg.au_dim; ++ch) {
        double prev = 0.0;
        bool first = true;
        for (double v : values) {
            auto m = [&](std::uint8_t cls) {
                return mask_stats(render(with_au(ch, v), 0, cfg).mask, cfg.image_size, cfg.image_size, cls);
            };
            double stat = 0.0;
            switch (ch) {
                case kAuSmile: stat = -m(kMaskMouth).cy; break;      // corners up -> centroid up
                case kAuJawDrop: stat = static_cast<double>(m(kMaskMouth).count); break;
                case kAuBrowRaise: stat = -m(kMaskBrows).cy; break;
                case kAuEyeClose: stat = -static_cast<double>(m(kMaskEyes).count); break;
                case kAuJawLeft: stat = -m(kMaskMouth).cx; break;
                case kAuJawRight: stat = m(kMaskMouth).cx; break;
            }
            INFO("au channel " << ch << " at value " << v);
            if (!first) CHECK(stat > prev);
            prev = stat;
            first = false;
        }
    }
}

TEST_CASE("jaw-left and jaw-right displace the mouth in opposite directions", "[renderer]") {
    const auto base = mask_stats(base_face(cfg).mask, cfg.image_size, cfg.image_size, kMaskMouth);
    auto left = mask_stats(render(with_au(kAuJawLeft, 0.9), 0, cfg).mask, cfg.image_size, cfg.image_size,
                           kMaskMouth);
    auto right = mask_stats(render(with_au(kAuJawRight, 0.9), 0, cfg).mask, cfg.image_size, cfg.image_size,
                            kMaskMouth);
    CHECK(left.cx < base.cx);
    CHECK(right.cx > base.cx);
}

TEST_CASE("sample_params is seeded, in range, and uniform in the mean", "[renderer]") {
    auto a = sample_params(99, cfg);
    auto b = sample_params(99, cfg);
    CHECK(a.pose == b.pose);
    CHECK(a.au == b.au);
    CHECK(a.id == b.id);
    CHECK(a.brow_style == b.brow_style);

    const int n = 10000;
    std::vector<double> mean(static_cast<std::size_t>(2 + cfg.au_dim + cfg.id_cont_dim), 0.0);
    for (int i = 0; i < n; ++i) {
        auto p = sample_params(static_cast<std::uint64_t>(i) * 7919u + 13u, cfg);
        std::size_t k = 0;
        for (double v : {p.pose[0], p.pose[1]}) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            mean[k++] += v;
        }
        for (double v : p.au) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            mean[k++] += v;
        }
        for (double v : p.id) {
            REQUIRE(v >= 0.0);
            REQUIRE(v <= 1.0);
            mean[k++] += v;
        }
        REQUIRE(p.brow_style >= 0);
        REQUIRE(p.brow_style < cfg.brow_styles);
    }
    for (double m : mean) {
        CHECK(m / n >= 0.48);
        CHECK(m / n <= 0.52);
    }
}

TEST_CASE("retargeting carries pose and AU, never identity", "[renderer]") {
    // base AU + frontal pose -> the style's neutral face
    auto neutral = retarget(base_params(cfg), 1, cfg);
    auto canon = base_params(cfg);
    CHECK(neutral.image.rgb == render(canon, 1, cfg).image.rgb);

    // jaw-left on style 1 moves the style-1 mouth centroid left of neutral
    auto jl = retarget(with_au(kAuJawLeft, 0.9), 1, cfg);
    auto mn = mask_stats(neutral.mask, cfg.image_size, cfg.image_size, kMaskMouth);
    auto mj = mask_stats(jl.mask, cfg.image_size, cfg.image_size, kMaskMouth);
    CHECK(mj.cx < mn.cx);

    // bit-invariant to the source identity channels
    auto p1 = sample_params(4, cfg);
    auto p2 = p1;
    for (auto& v : p2.id) v = 1.0 - v;
    p2.brow_style = (p1.brow_style + 1) % cfg.brow_styles;
    auto r1 = retarget(p1, 2, cfg);
    auto r2 = retarget(p2, 2, cfg);
    CHECK(r1.image.rgb == r2.image.rgb);
    CHECK(r1.mask == r2.mask);
}

TEST_CASE("render is a pure function under arbitrary params", "[renderer]") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        auto p = sample_params(seed, cfg);
        auto a = render(p, 0, cfg);
        auto b = render(p, 0, cfg);
        CHECK(a.image.rgb == b.image.rgb);
        CHECK(a.mask == b.mask);
        for (std::size_t i = 0; i < a.landmarks.size(); ++i) {
            CHECK(a.landmarks[i].x == b.landmarks[i].x);
            // landmarks stay inside the raster
            CHECK(a.landmarks[i].x >= 0.0);
            CHECK(a.landmarks[i].x <= cfg.image_size - 1.0);
            CHECK(a.landmarks[i].y >= 0.0);
            CHECK(a.landmarks[i].y <= cfg.image_size - 1.0);
        }
    }
}

TEST_CASE("masks one-hot partition the pixel grid", "[renderer]") {
    auto p = sample_params(17, cfg);
    p.pose = {0.9, 0.1};
    auto out = render(p, 0, cfg);
    for (auto c : out.mask) CHECK(c < kNumMaskClasses);
    // prob maps are the one-hot expansion, so they sum to 1 per pixel
    std::vector<double> total(out.mask.size(), 0.0);
    for (int cls = 0; cls < kNumMaskClasses; ++cls) {
        auto pm = out.prob_map(static_cast<std::uint8_t>(cls));
        for (std::size_t i = 0; i < pm.size(); ++i) total[i] += pm[i];
    }
    for (double t : total) CHECK(t == 1.0);
}

TEST_CASE("out-of-range parameters name the channel", "[renderer]") {
    auto p = base_params(cfg);
    p.au[3] = 1.5;
    try {
        render(p, 0, cfg);
        FAIL("expected range error");
    } catch (const std::out_of_range& e) {
        CHECK(std::string(e.what()).find("au channel 3") != std::string::npos);
    }
    CHECK_THROWS_AS(render(base_params(cfg), 42, cfg), std::out_of_range);

    auto q = base_params(cfg);
    q.brow_style = cfg.brow_styles; // one past the end
    CHECK_THROWS_AS(encode_params(q, cfg), std::out_of_range);
}

TEST_CASE("encode_params lays out [h|au|id|brow] with soft-brow support", "[renderer]") {
    auto p = base_params(cfg);
    auto v = encode_params(p, cfg);
    REQUIRE(static_cast<int>(v.size()) == 2 + cfg.au_dim + cfg.id_cont_dim + cfg.brow_styles);
    CHECK(v[0] == 0.5);
    CHECK(v[2] == 0.02);
    CHECK(v[2 + cfg.au_dim] == 0.5);
    double brow_sum = 0.0;
    for (int i = 0; i < cfg.brow_styles; ++i) brow_sum += v[v.size() - cfg.brow_styles + i];
    CHECK(brow_sum == 1.0);
    CHECK(v[v.size() - cfg.brow_styles] == 1.0); // one-hot at style 0

    p.brow_soft = {0.25, 0.25, 0.25, 0.25};
    auto vs = encode_params(p, cfg);
    double soft_sum = 0.0;
    for (int i = 0; i < cfg.brow_styles; ++i) soft_sum += vs[vs.size() - cfg.brow_styles + i];
    CHECK(soft_sum == Catch::Approx(1.0).margin(1e-12));

    // reference config keeps the 269-channel encoding
    auto ref = ParamSpaceConfig::reference();
    CHECK(ref.encoded_dim() == 269);
    CHECK(encode_params(base_params(ref), ref).size() == 269);
}

TEST_CASE("gen-dataset writes a reloadable directory layout", "[renderer][dataset]") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "auregress_ds_test";
    fs::remove_all(dir);
    auto rows = gen_dataset(dir, 6, 31337, cfg, false, 2);
    REQUIRE(rows.size() == 6);
    CHECK(dataset_size(dir) == 6);

    auto readback = read_params_csv(dir / "params.csv", cfg);
    REQUIRE(readback.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(readback[i].pose == rows[i].pose);
        CHECK(readback[i].au == rows[i].au);
        CHECK(readback[i].id == rows[i].id);
        CHECK(readback[i].brow_style == rows[i].brow_style);
    }

    int h = 0, w = 0;
    auto mask = load_dataset_mask(dir, 0, h, w);
    CHECK(h == cfg.image_size);
    CHECK(w == cfg.image_size);
    auto direct = render(rows[0], 0, cfg);
    CHECK(mask == direct.mask);

    // 8-bit quantization is the only difference between disk and render
    auto img = load_dataset_image(dir, 0);
    double max_diff = 0.0;
    for (std::size_t i = 0; i < img.rgb.size(); ++i)
        max_diff = std::max(max_diff, std::abs(img.rgb[i] - direct.image.rgb[i]));
    CHECK(max_diff <= 0.5 / 255.0 + 1e-12);
    fs::remove_all(dir);
}

TEST_CASE("photometric perturbation is seeded and bounded", "[renderer]") {
    auto out = base_face(cfg);
    Rng r1(5), r2(5);
    auto a = perturb_photometric(out.image, out.mask, r1);
    auto b = perturb_photometric(out.image, out.mask, r2);
    CHECK(a.rgb == b.rgb);
    for (double v : a.rgb) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    // it must actually change the image
    CHECK(a.rgb != out.image.rgb);
}
