#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>

#include "covec/common.hpp"
#include "covec/tape.hpp"

using covec::NumericError;
using covec::OpKind;
using covec::Rng;
using covec::ShapeError;
using covec::Tape;
using covec::Tensor;

namespace {

Tensor<double> random_tensor(Rng& rng, std::vector<std::size_t> shape, double scale = 1.0) {
    Tensor<double> t = Tensor<double>::zeros(std::move(shape));
    for (auto& v : t.data) v = rng.normal() * scale;
    return t;
}

// Reduces a matrix to its sum via ones-vector matmuls, keeping the whole
// chain differentiable.
Tensor<double> sum_all(Tape<double>& tape, const Tensor<double>& x) {
    const auto ones_row = Tensor<double>::full({1, x.rows()}, 1.0);
    const auto ones_col = Tensor<double>::full({x.cols(), 1}, 1.0);
    return tape.matmul(tape.matmul(ones_row, x), ones_col);
}

}  // namespace

TEST_CASE("matmul shape contract and hand-checked value") {
    Tape<double> tape;
    auto a = Tensor<double>::zeros({2, 3});
    auto b = Tensor<double>::zeros({3, 2});
    auto c = tape.matmul(a, b);
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 2);

    auto m1 = Tensor<double>::matrix({{1, 2}, {3, 4}});
    auto m2 = Tensor<double>::matrix({{5, 6}, {7, 8}});
    auto prod = tape.matmul(m1, m2);
    CHECK(prod.at(0, 0) == 19.0);
    CHECK(prod.at(0, 1) == 22.0);
    CHECK(prod.at(1, 0) == 43.0);
    CHECK(prod.at(1, 1) == 50.0);

    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
}

TEST_CASE("matmul transpose flags") {
    Tape<double> tape;
    auto a = Tensor<double>::matrix({{1, 2}, {3, 4}, {5, 6}});  // 3x2
    auto b = Tensor<double>::matrix({{1, 0, 2}, {0, 1, 1}});    // 2x3
    auto c = tape.matmul(a, b, true, true);                     // (2x3)*(3x2)
    CHECK(c.rows() == 2);
    CHECK(c.cols() == 2);
    // a^T = [[1,3,5],[2,4,6]], b^T = [[1,0],[0,1],[2,1]]
    CHECK(c.at(0, 0) == 11.0);
    CHECK(c.at(0, 1) == 8.0);
    CHECK(c.at(1, 0) == 14.0);
    CHECK(c.at(1, 1) == 10.0);
}

TEST_CASE("add identity is exact") {
    Rng rng(3);
    Tape<double> tape;
    auto x = random_tensor(rng, {4, 5});
    auto zero = Tensor<double>::zeros({4, 5});
    auto y = tape.add(x, zero);
    CHECK(y.data == x.data);
}

TEST_CASE("pointwise shape mismatch rejected") {
    Tape<double> tape;
    auto a = Tensor<double>::zeros({2, 2});
    auto b = Tensor<double>::zeros({2, 3});
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.mul(a, b), ShapeError);
    CHECK_THROWS_AS(tape.mse(a, b), ShapeError);
}

TEST_CASE("non-finite output raises") {
    Tape<double> tape;
    auto big = Tensor<double>::full({2, 2}, 1e308);
    CHECK_THROWS_AS(tape.add(big, big), NumericError);
    CHECK_THROWS_AS(tape.mul(big, big), NumericError);
}

TEST_CASE("backward of a plain sum gives all-ones gradient") {
    Tape<double> tape;
    Rng rng(11);
    auto w = tape.param(random_tensor(rng, {3, 4}));
    auto loss = sum_all(tape, w);
    tape.backward(loss);
    auto g = tape.grad(w);
    REQUIRE(g.shape == w.shape);
    for (double v : g.data) CHECK(v == 1.0);
}

TEST_CASE("mse at its minimum has zero gradient") {
    Tape<double> tape;
    Rng rng(12);
    auto x = tape.param(random_tensor(rng, {2, 3}));
    auto loss = tape.mse(x, x);
    tape.backward(loss);
    CHECK(loss.data[0] == 0.0);
    for (double v : tape.grad(x).data) CHECK(v == 0.0);
}

TEST_CASE("analytic derivative of w^2 at w=3") {
    Tape<double> tape;
    auto w = tape.param(Tensor<double>::scalar(3.0));
    auto loss = tape.mul(w, w);
    tape.backward(loss);
    CHECK(tape.grad(w).data[0] == 6.0);
}

TEST_CASE("backward argument validation") {
    Tape<double> tape;
    auto w = tape.param(Tensor<double>::zeros({2, 2}));
    auto y = tape.add(w, w);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);  // non-scalar

    Tensor<double> detached = Tensor<double>::scalar(1.0);
    CHECK_THROWS_AS(tape.backward(detached), covec::Error);
    CHECK_THROWS_AS(tape.grad(detached), covec::Error);

    Tape<double> empty;
    auto leaf = empty.param(Tensor<double>::scalar(1.0));
    CHECK_THROWS_AS(empty.backward(leaf), covec::Error);
}

TEST_CASE("repeated backward calls give identical gradients") {
    Tape<double> tape;
    Rng rng(5);
    auto w = tape.param(random_tensor(rng, {3, 3}));
    auto loss = tape.mse(tape.gelu(w), Tensor<double>::zeros({3, 3}));
    tape.backward(loss);
    auto g1 = tape.grad(w);
    tape.backward(loss);
    auto g2 = tape.grad(w);
    CHECK(g1.data == g2.data);
}

TEST_CASE("backward is linear in the loss") {
    Rng rng(7);
    const auto w0 = random_tensor(rng, {4, 4});
    const auto target_a = random_tensor(rng, {4, 4});
    const auto target_b = random_tensor(rng, {4, 4});

    Tape<double> joint;
    auto wj = joint.param(w0);
    auto combined = joint.add(joint.mse(wj, target_a), joint.mse(wj, target_b));
    joint.backward(combined);
    auto gj = joint.grad(wj);

    Tape<double> ta;
    auto wa = ta.param(w0);
    ta.backward(ta.mse(wa, target_a));
    auto ga = ta.grad(wa);
    Tape<double> tb;
    auto wb = tb.param(w0);
    tb.backward(tb.mse(wb, target_b));
    auto gb = tb.grad(wb);

    for (std::size_t i = 0; i < gj.data.size(); ++i)
        CHECK(std::abs(gj.data[i] - (ga.data[i] + gb.data[i])) < 1e-12);
}

TEST_CASE("forward_op dispatch matches direct calls and is deterministic") {
    Rng rng(9);
    const auto a = random_tensor(rng, {3, 3});
    const auto b = random_tensor(rng, {3, 3});
    Tape<double> tape;
    const std::array<Tensor<double>, 2> inputs = {a, b};
    auto via_dispatch = tape.forward_op(OpKind::add, std::span<const Tensor<double>>(inputs));
    auto direct = tape.add(a, b);
    CHECK(via_dispatch.data == direct.data);

    auto again = tape.forward_op(OpKind::add, std::span<const Tensor<double>>(inputs));
    CHECK(again.data == via_dispatch.data);

    const std::array<Tensor<double>, 1> unary = {a};
    CHECK_THROWS_AS(tape.forward_op(OpKind::mse, std::span<const Tensor<double>>(unary)), ShapeError);
}

TEST_CASE("finite difference check on w^2") {
    auto sq = [](Tape<double>& tape, const Tensor<double>& w) { return tape.mul(w, w); };
    const double err = covec::finite_diff_check<double>(sq, Tensor<double>::scalar(3.0), 1e-5);
    CHECK(err <= 1e-6);
}

TEST_CASE("finite difference check on a constant function is exactly zero") {
    auto constant = [](Tape<double>& tape, const Tensor<double>& w) {
        return tape.mse(tape.mul(w, Tensor<double>::scalar(0.0)), Tensor<double>::zeros(w.shape));
    };
    Rng rng(13);
    const double err = covec::finite_diff_check<double>(constant, random_tensor(rng, {2, 2}), 1e-4);
    CHECK(err == 0.0);
}

TEST_CASE("finite difference check validates eps") {
    auto sq = [](Tape<double>& tape, const Tensor<double>& w) { return tape.mul(w, w); };
    CHECK_THROWS_AS(covec::finite_diff_check<double>(sq, Tensor<double>::scalar(1.0), 0.0),
                    covec::ConfigError);
    CHECK_THROWS_AS(covec::finite_diff_check<double>(sq, Tensor<double>::scalar(1.0), 0.5),
                    covec::ConfigError);
}

// Every differentiable op, composed into a scalar through mse against a
// fixed target, must match central differences at 64-bit precision.
TEST_CASE("gradient check across all ops") {
    Rng rng(42);
    const double tol = 1e-3;

    SECTION("add and mul, including scalar broadcast") {
        const auto other = random_tensor(rng, {3, 4});
        const auto target = random_tensor(rng, {3, 4});
        auto f_add = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.add(w, other), target); };
        auto f_mul = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.mul(w, other), target); };
        CHECK(covec::finite_diff_check<double>(f_add, random_tensor(rng, {3, 4}), 1e-6) < tol);
        CHECK(covec::finite_diff_check<double>(f_mul, random_tensor(rng, {3, 4}), 1e-6) < tol);

        auto f_scalar = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.mul(other, w), target);  // w is the scalar
        };
        CHECK(covec::finite_diff_check<double>(f_scalar, Tensor<double>::scalar(0.7), 1e-6) < tol);
    }

    SECTION("matmul, both operands and transpose variants") {
        const auto rhs = random_tensor(rng, {4, 2});
        const auto target = random_tensor(rng, {3, 2});
        auto f_lhs = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.matmul(w, rhs), target); };
        CHECK(covec::finite_diff_check<double>(f_lhs, random_tensor(rng, {3, 4}), 1e-6) < tol);

        const auto lhs = random_tensor(rng, {3, 4});
        auto f_rhs = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.matmul(lhs, w), target); };
        CHECK(covec::finite_diff_check<double>(f_rhs, random_tensor(rng, {4, 2}), 1e-6) < tol);

        auto f_ta = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.matmul(w, rhs, true, false), target);  // w is 4x3, used transposed
        };
        CHECK(covec::finite_diff_check<double>(f_ta, random_tensor(rng, {4, 3}), 1e-6) < tol);

        auto f_tb = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.matmul(lhs, w, false, true), target);  // w is 2x4, used transposed
        };
        CHECK(covec::finite_diff_check<double>(f_tb, random_tensor(rng, {2, 4}), 1e-6) < tol);
    }

    SECTION("rotate_pairs, both data and angles") {
        const auto angles = random_tensor(rng, {3, 2});
        const auto target = random_tensor(rng, {3, 4});
        auto f_x = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.rotate_pairs(w, angles), target);
        };
        CHECK(covec::finite_diff_check<double>(f_x, random_tensor(rng, {3, 4}), 1e-6) < tol);

        const auto x = random_tensor(rng, {3, 4});
        auto f_a = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.rotate_pairs(x, w), target);
        };
        CHECK(covec::finite_diff_check<double>(f_a, random_tensor(rng, {3, 2}), 1e-6) < tol);
    }

    SECTION("layernorm, all three inputs") {
        const auto gain = random_tensor(rng, {1, 6}, 0.5);
        const auto bias = random_tensor(rng, {1, 6}, 0.5);
        const auto target = random_tensor(rng, {4, 6});
        auto f_x = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.layernorm(w, gain, bias), target);
        };
        CHECK(covec::finite_diff_check<double>(f_x, random_tensor(rng, {4, 6}), 1e-6) < tol);

        const auto x = random_tensor(rng, {4, 6});
        auto f_g = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.layernorm(x, w, bias), target);
        };
        CHECK(covec::finite_diff_check<double>(f_g, random_tensor(rng, {1, 6}), 1e-6) < tol);
        auto f_b = [&](Tape<double>& t, const Tensor<double>& w) {
            return t.mse(t.layernorm(x, gain, w), target);
        };
        CHECK(covec::finite_diff_check<double>(f_b, random_tensor(rng, {1, 6}), 1e-6) < tol);
    }

    SECTION("softmax and gelu") {
        const auto target = random_tensor(rng, {3, 5});
        auto f_sm = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.softmax(w), target); };
        CHECK(covec::finite_diff_check<double>(f_sm, random_tensor(rng, {3, 5}), 1e-6) < tol);
        auto f_gelu = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(t.gelu(w), target); };
        CHECK(covec::finite_diff_check<double>(f_gelu, random_tensor(rng, {3, 5}), 1e-6) < tol);
    }

    SECTION("mse, both operands") {
        const auto other = random_tensor(rng, {3, 3});
        auto f_a = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(w, other); };
        CHECK(covec::finite_diff_check<double>(f_a, random_tensor(rng, {3, 3}), 1e-6) < tol);
        auto f_b = [&](Tape<double>& t, const Tensor<double>& w) { return t.mse(other, w); };
        CHECK(covec::finite_diff_check<double>(f_b, random_tensor(rng, {3, 3}), 1e-6) < tol);
    }
}
