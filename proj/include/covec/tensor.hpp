#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "covec/common.hpp"

namespace covec {

// Dense row-major tensor of real values. Immutable by convention once it has
// entered a computation; ops return fresh tensors. `node` links the tensor to
// a record on a Tape (-1 when detached).
template <typename T>
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<T> data;
    bool requires_grad = false;
    int node = -1;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape) {
        Tensor t;
        t.shape = std::move(shape);
        t.data.assign(checked_numel(t.shape), T(0));
        return t;
    }

    static Tensor full(std::vector<std::size_t> shape, T value) {
        Tensor t = zeros(std::move(shape));
        for (auto& v : t.data) v = value;
        return t;
    }

    static Tensor scalar(T value) { return full({1}, value); }

    static Tensor from(std::vector<std::size_t> shape, std::vector<T> values) {
        if (checked_numel(shape) != values.size())
            throw ShapeError("Tensor::from: shape/data length mismatch");
        Tensor t;
        t.shape = std::move(shape);
        t.data = std::move(values);
        return t;
    }

    // Row-major 2-D literal, e.g. Tensor<double>::matrix({{1,2},{3,4}}).
    static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
        Tensor t;
        t.shape = {rows.size(), rows.size() ? rows.begin()->size() : 0};
        for (const auto& row : rows) {
            if (row.size() != t.shape[1]) throw ShapeError("Tensor::matrix: ragged rows");
            t.data.insert(t.data.end(), row.begin(), row.end());
        }
        checked_numel(t.shape);
        return t;
    }

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    std::size_t rows() const {
        require_2d();
        return shape[0];
    }
    std::size_t cols() const {
        require_2d();
        return shape[1];
    }

    T& at(std::size_t r, std::size_t c) {
        require_2d();
        return data[r * shape[1] + c];
    }
    const T& at(std::size_t r, std::size_t c) const {
        require_2d();
        return data[r * shape[1] + c];
    }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '(';
        for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ')';
        return os.str();
    }

private:
    void require_2d() const {
        if (shape.size() != 2) throw ShapeError("tensor is not 2-D: " + shape_str());
    }

    static std::size_t checked_numel(const std::vector<std::size_t>& shape) {
        if (shape.empty()) throw ShapeError("tensor shape must have at least one extent");
        std::size_t n = 1;
        for (std::size_t e : shape) {
            if (e == 0) throw ShapeError("tensor extents must be positive");
            n *= e;
        }
        return n;
    }
};

template <typename T>
inline void ensure_all_finite(const Tensor<T>& t, const char* where) {
    for (const T& v : t.data)
        if (!is_finite_value(v)) throw NumericError(std::string(where) + ": non-finite value produced");
}

}  // namespace covec
