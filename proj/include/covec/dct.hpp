#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>

#include "covec/common.hpp"

namespace covec {

namespace detail {

// Orthonormal 1-D DCT-II basis: C[u][x] = c(u) * cos((2x+1) u pi / 16),
// c(0) = sqrt(1/8), c(u>0) = 1/2. Rows are orthonormal, so the transform
// is inverted by the transpose.
inline const std::array<std::array<double, 8>, 8>& dct8_basis() {
    static const std::array<std::array<double, 8>, 8> basis = [] {
        std::array<std::array<double, 8>, 8> b{};
        const double pi = 3.14159265358979323846264338327950288;
        for (int u = 0; u < 8; ++u) {
            const double scale = (u == 0) ? std::sqrt(1.0 / 8.0) : 0.5;
            for (int x = 0; x < 8; ++x)
                b[static_cast<std::size_t>(u)][static_cast<std::size_t>(x)] =
                    scale * std::cos((2 * x + 1) * u * pi / 16.0);
        }
        return b;
    }();
    return basis;
}

}  // namespace detail

// 2-D orthonormal DCT-II of an 8x8 block (row-major, 64 values).
// With this scaling a constant block of value c transforms to DC = 8c.
inline void dct8_forward(std::span<const double> block, std::span<double> coeffs) {
    if (block.size() != 64 || coeffs.size() != 64) throw ShapeError("dct8: block must be 8x8");
    const auto& basis = detail::dct8_basis();
    double tmp[64];
    // rows
    for (int y = 0; y < 8; ++y)
        for (int u = 0; u < 8; ++u) {
            double acc = 0;
            for (int x = 0; x < 8; ++x) acc += basis[u][x] * block[static_cast<std::size_t>(y * 8 + x)];
            tmp[y * 8 + u] = acc;
        }
    // columns
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double acc = 0;
            for (int y = 0; y < 8; ++y) acc += basis[v][y] * tmp[y * 8 + u];
            coeffs[static_cast<std::size_t>(v * 8 + u)] = acc;
        }
}

inline void dct8_inverse(std::span<const double> coeffs, std::span<double> block) {
    if (block.size() != 64 || coeffs.size() != 64) throw ShapeError("dct8: block must be 8x8");
    const auto& basis = detail::dct8_basis();
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int y = 0; y < 8; ++y) {
            double acc = 0;
            for (int v = 0; v < 8; ++v) acc += basis[v][y] * coeffs[static_cast<std::size_t>(v * 8 + u)];
            tmp[y * 8 + u] = acc;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double acc = 0;
            for (int u = 0; u < 8; ++u) acc += basis[u][x] * tmp[y * 8 + u];
            block[static_cast<std::size_t>(y * 8 + x)] = acc;
        }
}

// Zigzag scan order for an 8x8 block, index -> (row-major position).
inline const std::array<int, 64>& zigzag_order() {
    static const std::array<int, 64> order = [] {
        std::array<int, 64> o{};
        int idx = 0;
        for (int s = 0; s < 15; ++s) {
            if (s % 2 == 0) {
                for (int y = std::min(s, 7); y >= 0 && s - y <= 7; --y) o[static_cast<std::size_t>(idx++)] = y * 8 + (s - y);
            } else {
                for (int x = std::min(s, 7); x >= 0 && s - x <= 7; --x) o[static_cast<std::size_t>(idx++)] = (s - x) * 8 + x;
            }
        }
        return o;
    }();
    return order;
}

}  // namespace covec
