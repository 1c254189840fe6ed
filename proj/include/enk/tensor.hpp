#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "enk/error.hpp"

namespace enk {

// Dense n-dimensional array, row-major, flat storage. The universal value
// type for signals, kernels, and gradients.
//
// Conventions:
//  - extents are strictly positive; a zero extent is rejected at construction
//  - element type is double everywhere except the explicitly float-typed
//    benchmark path
//  - library operations never mutate their arguments and always return fresh
//    tensors; mutable element access exists only so an owner can fill a
//    tensor it has not yet shared. Once shared, treat a tensor as immutable;
//    that convention is what makes concurrent reads safe.
template <class T = double>
class TensorT {
public:
    using value_type = T;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> shape, T fill = T{}) : shape_(std::move(shape)) {
        std::size_t n = 1;
        for (std::size_t e : shape_) {
            if (e == 0) throw ShapeError("tensor extent must be >= 1");
            n *= e;
        }
        if (shape_.empty()) throw ShapeError("tensor rank must be >= 1");
        data_.assign(n, fill);
        rebuild_strides();
    }

    static TensorT from_values(std::vector<std::size_t> shape, std::vector<T> values) {
        TensorT t(std::move(shape));
        if (values.size() != t.size()) throw ShapeError("value count does not match shape");
        t.data_ = std::move(values);
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t extent(std::size_t axis) const { return shape_[axis]; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::span<T> values() { return data_; }
    std::span<const T> values() const { return data_; }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    template <class... Ix>
    T& operator()(Ix... ix) {
        return data_[offset(ix...)];
    }
    template <class... Ix>
    const T& operator()(Ix... ix) const {
        return data_[offset(ix...)];
    }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

private:
    template <class... Ix>
    std::size_t offset(Ix... ix) const {
        static_assert(sizeof...(Ix) >= 1);
        const std::size_t idx[] = {static_cast<std::size_t>(ix)...};
        std::size_t off = 0;
        for (std::size_t a = 0; a < sizeof...(Ix); ++a) off += idx[a] * strides_[a];
        return off;
    }

    void rebuild_strides() {
        strides_.assign(shape_.size(), 1);
        for (std::size_t a = shape_.size(); a-- > 1;) {
            strides_[a - 1] = strides_[a] * shape_[a];
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<std::size_t> strides_;
    std::vector<T> data_;
};

using Tensor = TensorT<double>;

// Validated constructor taking signed extents, so degenerate requests
// (zero or negative) surface as shape errors rather than wrapping.
inline Tensor tensor_new(const std::vector<std::int64_t>& extents, double fill = 0.0) {
    std::vector<std::size_t> shape;
    shape.reserve(extents.size());
    for (std::int64_t e : extents) {
        if (e < 1) throw ShapeError("tensor extent must be >= 1, got " + std::to_string(e));
        shape.push_back(static_cast<std::size_t>(e));
    }
    return Tensor(std::move(shape), fill);
}

template <class T>
TensorT<T> tensor_add(const TensorT<T>& a, const TensorT<T>& b) {
    if (!a.same_shape(b)) throw ShapeError("tensor_add: shape mismatch");
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

template <class T>
TensorT<T> tensor_scale(const TensorT<T>& a, T s) {
    TensorT<T> out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * s;
    return out;
}

// Sum of all elements, accumulated at 64-bit precision regardless of the
// element type.
template <class T>
double tensor_reduce_sum(const TensorT<T>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]);
    return acc;
}

inline void ensure_finite(const Tensor& t, const std::string& context) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + context);
}

}  // namespace enk
