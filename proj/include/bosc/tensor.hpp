#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bosc/common.hpp"

namespace bosc {

// Dense row-major tensor. Image tensors are stored channel-first {C,H,W},
// batches {B,C,H,W}, dense weights {out,in}.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int d : s) {
            if (d < 0) fail(Errc::invalid_shape, "negative tensor dimension");
            n *= d;
        }
        return n;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    T& at3(int a, int b, int c) {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }
    const T& at3(int a, int b, int c) const {
        return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
    }

    std::string shape_str() const {
        std::string s = "[";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename TO, typename TI>
Tensor<TO> tensor_cast(const Tensor<TI>& t) {
    Tensor<TO> out;
    out.shape = t.shape;
    out.data.reserve(t.data.size());
    for (TI v : t.data) out.data.push_back(static_cast<TO>(v));
    return out;
}

}  // namespace bosc
