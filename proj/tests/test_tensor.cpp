#include <catch2/catch_amalgamated.hpp>

#include "auregress/adam.hpp"
#include "auregress/checkpoint.hpp"
#include "auregress/gradcheck.hpp"
#include "auregress/ops.hpp"
#include "oracles.hpp"

using namespace auregress;

TEST_CASE("forward rules match their definitions", "[tensor]") {
    auto x = make_tensor({3}, {-1.0, 0.0, 2.0});
    auto y = relu(reshape(x, {1, 3}));
    CHECK(y->value == std::vector<double>{0.0, 0.0, 2.0});

    auto z = sigmoid(make_tensor({1}, {0.0}));
    CHECK(z->value[0] == 0.5);

    auto m = make_tensor({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
    CHECK(global_avg_pool(m)->value[0] == 2.5);
}

TEST_CASE("backward matches analytic derivatives", "[tensor]") {
    auto x = make_tensor({1}, {0.0}, true);
    auto s = sigmoid(x);
    backward(s);
    CHECK(x->grad[0] == Catch::Approx(0.25).margin(1e-15));

    auto a = make_tensor({1}, {3.0}, true);
    auto sq = mul(a, a);
    backward(sq);
    CHECK(a->grad[0] == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("conv2d gradient agrees with finite differences on a random 8x8 input", "[tensor]") {
    Rng rng(42);
    auto mk = [&](Shape s) {
        std::vector<double> v(static_cast<std::size_t>(numel(s)));
        for (auto& e : v) e = rng.uniform(-1.0, 1.0);
        return make_tensor(s, std::move(v), true);
    };
    auto x = mk({1, 2, 8, 8});
    auto w = mk({3, 2, 3, 3});
    auto b = mk({3});
    auto err = oracles::fd_max_rel_err({x, w, b}, [&]() { return mean(conv2d(x, w, b, 1, 1)); });
    CHECK(err < 1e-4);
}

TEST_CASE("grad_check spec instances stay under 1e-4", "[tensor]") {
    CHECK(grad_check(OpKind::fully_connected, 0) < 1e-4);
    CHECK(grad_check(OpKind::instance_norm, 0) < 1e-4);
    CHECK(grad_check(OpKind::cosine_similarity, 0) < 1e-4);
}

TEST_CASE("grad_check passes for every op kind on 10 seeded instances", "[tensor][slow]") {
    for (auto row : grad_check_all(10, 1e-3)) {
        INFO(op_name(row.kind));
        CHECK(row.max_rel_err < 1e-4);
    }
}

TEST_CASE("grad_check rejects an out-of-range step", "[tensor]") {
    CHECK_THROWS_AS(grad_check(OpKind::relu, 0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(grad_check(OpKind::relu, 0, 0.0), std::invalid_argument);
}

TEST_CASE("backward is linear in the loss", "[tensor]") {
    Rng rng(7);
    std::vector<double> vals(12);
    for (auto& v : vals) v = rng.uniform(-1.0, 1.0);

    auto grad_of = [&](double a, double b) {
        auto x = make_tensor({3, 4}, vals, true);
        auto l1 = mean(mul(x, x));
        auto l2 = l1_distance(sigmoid(x), make_zeros({3, 4}));
        auto total = add(affine(l1, a, 0.0), affine(l2, b, 0.0));
        backward(total);
        return x->grad;
    };
    auto g1 = grad_of(1.0, 0.0);
    auto g2 = grad_of(0.0, 1.0);
    auto gc = grad_of(2.0, 3.0);
    for (std::size_t i = 0; i < gc.size(); ++i)
        CHECK(gc[i] == Catch::Approx(2.0 * g1[i] + 3.0 * g2[i]).margin(1e-10));
}

TEST_CASE("forward+backward replay is bit-identical", "[tensor]") {
    auto run = []() {
        Rng rng(123);
        std::vector<double> v(32);
        for (auto& e : v) e = rng.uniform(-1.0, 1.0);
        auto x = make_tensor({2, 4, 2, 2}, v, true);
        auto g = make_full({4}, 1.0, true);
        auto b = make_zeros({4}, true);
        auto loss = mean(instance_norm(relu(x), g, b));
        backward(loss);
        return std::make_pair(loss->value[0], x->grad);
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("shape errors name the offending op and shapes", "[tensor]") {
    auto x = make_zeros({1, 3, 8, 8});
    auto w = make_zeros({4, 2, 3, 3});
    try {
        conv2d(x, w, nullptr, 1, 1);
        FAIL("expected shape mismatch");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find("conv2d") != std::string::npos);
        CHECK(msg.find("[1x3x8x8]") != std::string::npos);
        CHECK(msg.find("[4x2x3x3]") != std::string::npos);
    }

    auto fc_w = make_zeros({3, 5});
    CHECK_THROWS_AS(fully_connected(make_zeros({2, 4}), fc_w, nullptr), std::invalid_argument);
}

TEST_CASE("backward rejects non-scalar outputs", "[tensor]") {
    auto x = make_tensor({2}, {1.0, 2.0}, true);
    CHECK_THROWS_AS(backward(relu(x)), std::invalid_argument);
}

TEST_CASE("broadcast add/mul reduce gradients over the broadcast dims", "[tensor]") {
    auto a = make_tensor({1, 2, 1, 1}, {2.0, 3.0}, true);
    auto b = make_tensor({1, 2, 2, 1}, {1.0, 2.0, 3.0, 4.0}, true);
    auto out = mul(a, b);
    REQUIRE(out->shape == Shape{1, 2, 2, 1});
    CHECK(out->value == std::vector<double>{2.0, 4.0, 9.0, 12.0});
    backward(sum(out));
    CHECK(a->grad == std::vector<double>{3.0, 7.0});
    CHECK(b->grad == std::vector<double>{2.0, 2.0, 3.0, 3.0});
}

TEST_CASE("softmax is stable for large logits and sums to one", "[tensor]") {
    auto x = make_tensor({1, 3}, {1000.0, 1001.0, 999.0});
    auto p = softmax(x, 1);
    double total = 0.0;
    for (double v : p->value) {
        CHECK(std::isfinite(v));
        total += v;
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("concat splits gradients back to its parts", "[tensor]") {
    auto a = make_tensor({2, 1}, {1.0, 2.0}, true);
    auto b = make_tensor({2, 2}, {3.0, 4.0, 5.0, 6.0}, true);
    auto c = concat({a, b}, 1);
    REQUIRE(c->shape == Shape{2, 3});
    CHECK(c->value == std::vector<double>{1.0, 3.0, 4.0, 2.0, 5.0, 6.0});
    backward(sum(mul(c, c)));
    CHECK(a->grad == std::vector<double>{2.0, 4.0});
    CHECK(b->grad == std::vector<double>{6.0, 8.0, 10.0, 12.0});
}

TEST_CASE("checkpoint round-trips tensors and fingerprint through disk", "[checkpoint]") {
    namespace fs = std::filesystem;
    auto dir = fs::temp_directory_path() / "auregress_ckpt_test";
    fs::create_directories(dir);
    auto path = dir / "t.ckpt";

    Checkpoint ck;
    ck.set("m/w", {2, 3}, {1, 2, 3, 4, 5, 6});
    ck.set("m/b", {3}, {0.5, -0.5, 0.25});
    ck.set_fingerprint(0xDEADBEEFCAFEF00Dull);
    ck.save(path);

    auto rd = Checkpoint::load(path);
    CHECK(rd.get("m/w").first == Shape{2, 3});
    CHECK(rd.get("m/w").second == std::vector<double>{1, 2, 3, 4, 5, 6});
    CHECK(rd.get("m/b").second == std::vector<double>{0.5, -0.5, 0.25});
    CHECK(rd.fingerprint() == 0xDEADBEEFCAFEF00Dull);

    // magic is the first thing in the file
    std::ifstream f(path, std::ios::binary);
    char magic[8];
    f.read(magic, 8);
    CHECK(std::string(magic, 8) == "AUREGV01");
    fs::remove_all(dir);
}

TEST_CASE("adam minimizes a quadratic", "[tensor]") {
    auto x = make_tensor({4}, {3.0, -2.0, 1.5, 4.0}, true);
    Adam opt(0.1);
    for (int i = 0; i < 300; ++i) {
        x->zero_grad();
        auto loss = mean(mul(x, x));
        backward(loss);
        opt.step({x});
    }
    for (double v : x->value) CHECK(std::abs(v) < 1e-3);
}
