#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hutk/common.hpp"
#include "hutk/rng.hpp"

namespace hutk {

// Dense row-major tensor. f32 for training and persistence, f64 for the
// gradient-check paths.
template <typename T>
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        require(numel_of(shape) == static_cast<int64_t>(data.size()), ErrorCode::ShapeMismatch,
                "tensor data length does not match shape");
    }

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int64_t> s) {
        const int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<size_t>(n), T(0)));
    }

    static Tensor full(std::vector<int64_t> s, T v) {
        const int64_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<T>(static_cast<size_t>(n), v));
    }

    static Tensor gaussian(std::vector<int64_t> s, Rng& rng, double stddev) {
        Tensor t = zeros(std::move(s));
        for (auto& v : t.data) {
            v = static_cast<T>(rng.gaussian(0.0, stddev));
        }
        return t;
    }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
    T at(int64_t i) const { return data[static_cast<size_t>(i)]; }
    T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    T at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T v : data) {
            if (!std::isfinite(static_cast<double>(v))) {
                return false;
            }
        }
        return true;
    }
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
    Tensor<To> out;
    out.shape = t.shape;
    out.data.resize(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) {
        out.data[i] = static_cast<To>(t.data[i]);
    }
    return out;
}

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) {
            out += "x";
        }
    }
    out += "]";
    return out;
}

}  // namespace hutk
