#include <catch2/catch_amalgamated.hpp>

#include "covec/tensor.hpp"

using covec::ShapeError;
using covec::Tensor;

TEST_CASE("tensor construction and indexing") {
    auto t = Tensor<double>::from({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.numel() == 6);
    CHECK(t.rows() == 2);
    CHECK(t.cols() == 3);
    CHECK(t.at(1, 2) == 6.0);

    auto m = Tensor<double>::matrix({{1, 2}, {3, 4}});
    CHECK(m.at(0, 1) == 2.0);
    CHECK(m.at(1, 0) == 3.0);
}

TEST_CASE("tensor shape validation") {
    CHECK_THROWS_AS(Tensor<double>::from({2, 3}, {1, 2}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>::zeros({0, 3}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>::zeros({}), ShapeError);
    CHECK_THROWS_AS(Tensor<double>::matrix({{1, 2}, {3}}), ShapeError);
}

TEST_CASE("scalar helpers") {
    auto s = Tensor<float>::scalar(2.5f);
    CHECK(s.is_scalar());
    CHECK(s.data[0] == 2.5f);
    CHECK(Tensor<float>::full({4}, 1.0f).numel() == 4);
}
