#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "vitfreeze/tensor_ops.hpp"

using namespace vitfreeze;

TEST_CASE("matmul identity leaves the matrix unchanged") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor m({2, 2}, {1, 2, 3, 4});
    Tensor r = ops::matmul(eye, m);
    CHECK(r.shape == Shape{2, 2});
    for (int i = 0; i < 4; ++i) CHECK(r.data[i] == m.data[i]);
}

TEST_CASE("matmul projector selects rows") {
    Tensor p({2, 2}, {1, 0, 0, 0});
    Tensor m({2, 2}, {5, 6, 7, 8});
    Tensor r = ops::matmul(p, m);
    CHECK(r.data == std::vector<double>{5, 6, 0, 0});
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3});
    Tensor b({4, 2});
    bool threw = false;
    try {
        ops::matmul(a, b);
    } catch (const ShapeError& e) {
        threw = true;
        const std::string msg = e.what();
        CHECK(msg.find("2") != std::string::npos);
        CHECK(msg.find("3") != std::string::npos);
        CHECK(msg.find("4") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("batched matmul against a shared rank-2 weight equals per-slice products") {
    Tensor a({2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    Tensor w({3, 2}, {1, 0, 0, 1, 1, 1});
    Tensor r = ops::matmul(a, w);
    CHECK(r.shape == Shape{2, 2, 2});
    for (int64_t s = 0; s < 2; ++s) {
        Tensor slice({2, 3});
        std::copy_n(a.data.begin() + s * 6, 6, slice.data.begin());
        Tensor expect = ops::matmul(slice, w);
        for (int i = 0; i < 4; ++i) {
            CHECK(r.data[static_cast<size_t>(s * 4 + i)] == doctest::Approx(expect.data[i]));
        }
    }
}

TEST_CASE("layer_norm of a constant vector is exactly the bias") {
    Tensor x({1, 4}, {3, 3, 3, 3});
    Tensor gamma = Tensor::full({4}, 1.0);
    Tensor beta = Tensor::zeros({4});
    Tensor r = ops::layer_norm(x, gamma, beta, 1e-6, nullptr, nullptr);
    for (double v : r.data) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("layer_norm of [1,-1] with tiny eps is the identity") {
    Tensor x({1, 2}, {1, -1});
    Tensor gamma = Tensor::full({2}, 1.0);
    Tensor beta = Tensor::zeros({2});
    Tensor r = ops::layer_norm(x, gamma, beta, 1e-14, nullptr, nullptr);
    CHECK(r.data[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(r.data[1] == doctest::Approx(-1.0).epsilon(1e-6));
}

TEST_CASE("layer_norm rows come out zero-mean when eps is negligible") {
    Tensor x({2, 8});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = std::sin(static_cast<double>(i) * 1.7) * 3.0;
    Tensor gamma = Tensor::full({8}, 1.0);
    Tensor beta = Tensor::zeros({8});
    Tensor r = ops::layer_norm(x, gamma, beta, 1e-12, nullptr, nullptr);
    for (int64_t row = 0; row < 2; ++row) {
        double mu = 0.0;
        for (int64_t i = 0; i < 8; ++i) mu += r.data[static_cast<size_t>(row * 8 + i)];
        CHECK(std::abs(mu / 8.0) < 1e-10);
    }
}

TEST_CASE("layer_norm rejects mismatched affine parameters") {
    Tensor x({2, 4});
    Tensor gamma = Tensor::full({3}, 1.0);
    Tensor beta = Tensor::zeros({4});
    CHECK_THROWS_AS(ops::layer_norm(x, gamma, beta, 1e-6, nullptr, nullptr), ShapeError);
}

TEST_CASE("softmax of a constant row is uniform") {
    Tensor x({3}, {0, 0, 0});
    Tensor r = ops::softmax_last(x);
    for (double v : r.data) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax saturates without overflow thanks to max subtraction") {
    Tensor x({3}, {1000, 0, 0});
    Tensor r = ops::softmax_last(x);
    CHECK(std::abs(r.data[0] - 1.0) < 1e-12);
    CHECK(r.data[1] < 1e-12);
    CHECK(r.data[2] < 1e-12);
}

TEST_CASE("softmax rows sum to one on random input") {
    Tensor x({4, 6});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = std::cos(static_cast<double>(i) * 2.3) * 5.0;
    Tensor r = ops::softmax_last(x);
    for (int64_t row = 0; row < 4; ++row) {
        double s = 0.0;
        for (int64_t i = 0; i < 6; ++i) s += r.data[static_cast<size_t>(row * 6 + i)];
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("gelu fixes zero and has the right asymptotes") {
    for (auto mode : {ops::GeluMode::kTanh, ops::GeluMode::kErf}) {
        CHECK(ops::gelu_scalar(0.0, mode) == 0.0);
        CHECK(ops::gelu_scalar(20.0, mode) == doctest::Approx(20.0).epsilon(1e-12));
        CHECK(std::abs(ops::gelu_scalar(-20.0, mode)) < 1e-12);
    }
}

TEST_CASE("tanh and erf gelu agree loosely but not exactly") {
    const double x = 1.3;
    const double a = ops::gelu_scalar(x, ops::GeluMode::kTanh);
    const double b = ops::gelu_scalar(x, ops::GeluMode::kErf);
    CHECK(std::abs(a - b) < 1e-2);
    CHECK(a != b);
}

TEST_CASE("avgpool2x of a constant map is the same constant") {
    Tensor x = Tensor::full({1, 4, 4}, 2.5);
    Tensor r = ops::avgpool2x(x);
    CHECK(r.shape == Shape{1, 2, 2});
    for (double v : r.data) CHECK(v == 2.5);
}

TEST_CASE("avgpool2x rejects odd spatial dims") {
    Tensor x({1, 3, 4});
    CHECK_THROWS_AS(ops::avgpool2x(x), ShapeError);
}

TEST_CASE("upsample2x with an all-ones kernel replicates the value") {
    Tensor x({1, 1, 1}, {7.0});
    Tensor k = Tensor::full({1, 2, 2}, 1.0);
    Tensor r = ops::upsample2x(x, k);
    CHECK(r.shape == Shape{1, 2, 2});
    for (double v : r.data) CHECK(v == 7.0);
}

TEST_CASE("upsample2x then avgpool2x recovers kernel-mean-scaled input") {
    Tensor x({2, 3, 3});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(i) * 0.5 - 2.0;
    Tensor k({2, 2, 2}, {1, 2, 3, 4, 0.5, 0.5, 0.5, 0.5});
    Tensor up = ops::upsample2x(x, k);
    Tensor down = ops::avgpool2x(up);
    for (int64_t c = 0; c < 2; ++c) {
        const double mean_k = c == 0 ? (1 + 2 + 3 + 4) / 4.0 : 0.5;
        for (int64_t i = 0; i < 9; ++i) {
            CHECK(down.data[static_cast<size_t>(c * 9 + i)] ==
                  doctest::Approx(x.data[static_cast<size_t>(c * 9 + i)] * mean_k).epsilon(1e-12));
        }
    }
}

TEST_CASE("add broadcasts a trailing suffix") {
    Tensor a({2, 2, 3});
    for (size_t i = 0; i < a.data.size(); ++i) a.data[i] = static_cast<double>(i);
    Tensor b({3}, {10, 20, 30});
    Tensor r = ops::add(a, b);
    CHECK(r.data[0] == 10.0);
    CHECK(r.data[4] == 24.0);
    CHECK(r.data[11] == 41.0);
}

TEST_CASE("mul rejects a non-suffix shape") {
    Tensor a({2, 3});
    Tensor b({2});
    CHECK_THROWS_AS(ops::mul(a, b), ShapeError);
}

TEST_CASE("reshape preserves data and rejects wrong element counts") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = ops::reshape(a, {3, 2});
    CHECK(r.data == a.data);
    CHECK_THROWS_AS(ops::reshape(a, {4, 2}), ShapeError);
}

TEST_CASE("transpose applies the permutation and validates it") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor r = ops::transpose(a, {1, 0});
    CHECK(r.shape == Shape{3, 2});
    CHECK(r.data == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK_THROWS_AS(ops::transpose(a, {0, 0}), ShapeError);
    CHECK_THROWS_AS(ops::transpose(a, {0}), ShapeError);
}

TEST_CASE("gather_rows picks rows per batch and validates indices") {
    Tensor x({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    Tensor r = ops::gather_rows(x, {2, 0, 1, 1}, 2);
    CHECK(r.shape == Shape{2, 2, 2});
    CHECK(r.data == std::vector<double>{4, 5, 0, 1, 8, 9, 8, 9});
    CHECK_THROWS_AS(ops::gather_rows(x, {3, 0, 0, 0}, 2), ShapeError);
}

TEST_CASE("scatter_rows places rows and zero-fills the rest") {
    Tensor x({1, 2, 2}, {1, 2, 3, 4});
    Tensor r = ops::scatter_rows(x, {2, 0}, 3);
    CHECK(r.shape == Shape{1, 3, 2});
    CHECK(r.data == std::vector<double>{3, 4, 0, 0, 1, 2});
}

TEST_CASE("scatter then gather is the identity on the scattered rows") {
    Tensor x({2, 2, 3});
    for (size_t i = 0; i < x.data.size(); ++i) x.data[i] = static_cast<double>(i) + 1.0;
    std::vector<int64_t> idx{1, 3, 0, 2};
    Tensor placed = ops::scatter_rows(x, idx, 4);
    Tensor back = ops::gather_rows(placed, idx, 2);
    CHECK(back.data == x.data);
}
