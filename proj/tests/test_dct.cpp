#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <set>

#include "covec/common.hpp"
#include "covec/dct.hpp"

using covec::Rng;

TEST_CASE("constant block transforms to a lone DC of 8c") {
    const double c = 37.25;
    std::array<double, 64> block, coeffs;
    block.fill(c);
    covec::dct8_forward(block, coeffs);
    CHECK(std::abs(coeffs[0] - 8.0 * c) < 1e-10);
    for (int i = 1; i < 64; ++i) CHECK(std::abs(coeffs[static_cast<std::size_t>(i)]) < 1e-10);
}

TEST_CASE("zero block transforms to zero") {
    std::array<double, 64> block{}, coeffs;
    covec::dct8_forward(block, coeffs);
    for (double v : coeffs) CHECK(v == 0.0);
}

TEST_CASE("forward then inverse round-trips within 1e-10") {
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        std::array<double, 64> block, coeffs, back;
        for (auto& v : block) v = rng.uniform(-128.0, 127.0);
        covec::dct8_forward(block, coeffs);
        covec::dct8_inverse(coeffs, back);
        for (int i = 0; i < 64; ++i)
            CHECK(std::abs(back[static_cast<std::size_t>(i)] - block[static_cast<std::size_t>(i)]) <= 1e-10);
    }
}

TEST_CASE("wrong block size rejected") {
    std::array<double, 63> small{};
    std::array<double, 64> out;
    CHECK_THROWS_AS(covec::dct8_forward(std::span<const double>(small), out), covec::ShapeError);
    CHECK_THROWS_AS(covec::dct8_inverse(std::span<const double>(small), out), covec::ShapeError);
}

TEST_CASE("zigzag order is a permutation starting 0,1,8,16,9,2") {
    const auto& z = covec::zigzag_order();
    std::set<int> seen(z.begin(), z.end());
    CHECK(seen.size() == 64);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 63);
    CHECK(z[0] == 0);
    CHECK(z[1] == 1);
    CHECK(z[2] == 8);
    CHECK(z[3] == 16);
    CHECK(z[4] == 9);
    CHECK(z[5] == 2);
    CHECK(z[63] == 63);
}
