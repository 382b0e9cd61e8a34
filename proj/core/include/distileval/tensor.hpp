#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "distileval/errors.hpp"

namespace distileval {

/// Dense row-major tensor over an arbitrary scalar type. double is the
/// working type for training; a dual-number scalar reuses the same layer
/// code to get exact Hessian-vector products.
template <class S>
struct TensorT {
    std::vector<int> shape;
    std::vector<S> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> shp) : shape(std::move(shp)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), S{});
    }
    TensorT(std::vector<int> shp, std::vector<S> values)
        : shape(std::move(shp)), data(std::move(values)) {
        if (static_cast<long long>(data.size()) != numel_of(shape))
            throw ShapeError("tensor: data length does not match shape");
    }

    static long long numel_of(const std::vector<int>& shp) {
        long long n = 1;
        for (int d : shp) {
            if (d < 0) throw ShapeError("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    long long numel() const { return static_cast<long long>(data.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }

    S* ptr() { return data.data(); }
    const S* ptr() const { return data.data(); }

    S& operator[](std::size_t i) { return data[i]; }
    const S& operator[](std::size_t i) const { return data[i]; }

    void fill(S v) { std::fill(data.begin(), data.end(), v); }
    void zero() { fill(S{}); }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }
};

using Tensor = TensorT<double>;

inline std::string shape_str(const std::vector<int>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

template <class S>
void require_shape(const TensorT<S>& t, const std::vector<int>& want,
                   const std::string& site) {
    if (t.shape != want)
        throw ShapeError(site + ": expected shape " + shape_str(want) +
                         ", got " + shape_str(t.shape));
}

} // namespace distileval
