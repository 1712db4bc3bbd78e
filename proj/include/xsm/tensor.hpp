#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "xsm/errors.hpp"

namespace xsm {

// Dense row-major tensor. Rank 1 tensors behave as row vectors [1 x n] in
// matrix ops; rank 2 is the workhorse.
template <typename T>
struct TensorT {
    std::vector<int64_t> shape;
    std::vector<T> data;

    TensorT() = default;
    TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        XSM_CHECK(numel() == static_cast<int64_t>(data.size()), dim_error,
                  "tensor data length does not match shape");
    }

    static TensorT zeros(std::vector<int64_t> s) {
        TensorT t;
        t.shape = std::move(s);
        t.data.assign(static_cast<size_t>(t.numel()), T(0));
        return t;
    }

    static TensorT full(std::vector<int64_t> s, T v) {
        TensorT t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        return shape.empty() ? 0 : n;
    }

    int64_t rows() const { return shape.size() == 1 ? 1 : shape.at(0); }
    int64_t cols() const { return shape.size() == 1 ? shape.at(0) : shape.at(1); }

    T& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
    T at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const TensorT& o) const { return shape == o.shape; }
};

using Tensor = TensorT<float>;

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Eigen::Map<EMat<T>> emap(TensorT<T>& t) {
    return Eigen::Map<EMat<T>>(t.data.data(), t.rows(), t.cols());
}

template <typename T>
Eigen::Map<const EMat<T>> emap(const TensorT<T>& t) {
    return Eigen::Map<const EMat<T>>(t.data.data(), t.rows(), t.cols());
}

template <typename T>
bool all_finite(const TensorT<T>& t) {
    for (T v : t.data) {
        if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
}

inline std::string shape_str(const std::vector<int64_t>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); i++) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace xsm
