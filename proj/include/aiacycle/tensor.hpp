#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace aiacycle {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) {
        if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

/// Opt-in accounting of tensor allocations, used by tests to verify that
/// factorized attention never materializes a full (T*F')^2 score matrix.
struct AllocStats {
    bool enabled = false;
    std::int64_t alloc_count = 0;
    std::int64_t max_single_elems = 0;

    void reset() { alloc_count = 0; max_single_elems = 0; }
};

inline AllocStats& alloc_stats() {
    thread_local AllocStats stats;
    return stats;
}

/// Dense multi-dimensional array of 32-bit floats, row-major, last axis fastest.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t = uninit(std::move(shape));
        std::memset(t.data_.get(), 0, sizeof(float) * static_cast<std::size_t>(t.numel_));
        return t;
    }

    static Tensor full(Shape shape, float v) {
        Tensor t = uninit(std::move(shape));
        std::fill(t.data_.get(), t.data_.get() + t.numel_, v);
        return t;
    }

    static Tensor scalar(float v) { return full({1}, v); }

    static Tensor from(Shape shape, std::vector<float> values) {
        Tensor t = uninit(std::move(shape));
        if (static_cast<std::int64_t>(values.size()) != t.numel_)
            throw std::invalid_argument("tensor: value count " + std::to_string(values.size()) +
                                        " does not match shape " + shape_str(t.shape_));
        std::copy(values.begin(), values.end(), t.data_.get());
        return t;
    }

    /// Allocates without clearing; every element must be written before use.
    static Tensor uninit(Shape shape) {
        Tensor t;
        t.shape_ = std::move(shape);
        t.numel_ = shape_numel(t.shape_);
        t.data_ = std::make_unique_for_overwrite<float[]>(static_cast<std::size_t>(t.numel_));
        auto& stats = alloc_stats();
        if (stats.enabled) {
            ++stats.alloc_count;
            stats.max_single_elems = std::max(stats.max_single_elems, t.numel_);
        }
        return t;
    }

    Tensor(const Tensor& o) : shape_(o.shape_), numel_(o.numel_) {
        if (o.data_) {
            data_ = std::make_unique_for_overwrite<float[]>(static_cast<std::size_t>(numel_));
            std::memcpy(data_.get(), o.data_.get(), sizeof(float) * static_cast<std::size_t>(numel_));
        }
    }
    Tensor& operator=(const Tensor& o) {
        if (this != &o) *this = Tensor(o);
        return *this;
    }
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return numel_; }
    int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape_.size()); }

    float* data() { return data_.get(); }
    const float* data() const { return data_.get(); }

    float& operator[](std::int64_t i) { return data_[i]; }
    float operator[](std::int64_t i) const { return data_[i]; }

    /// 4-D NHWC-style accessor (b, t, f, c).
    float& at4(int b, int t, int f, int c) {
        return data_[((static_cast<std::int64_t>(b) * shape_[1] + t) * shape_[2] + f) * shape_[3] + c];
    }
    float at4(int b, int t, int f, int c) const {
        return data_[((static_cast<std::int64_t>(b) * shape_[1] + t) * shape_[2] + f) * shape_[3] + c];
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (std::int64_t i = 0; i < numel_; ++i)
            if (!std::isfinite(data_[i])) return false;
        return true;
    }

    void fill(float v) { std::fill(data_.get(), data_.get() + numel_, v); }

    /// Reinterprets the buffer under a new shape with identical element count.
    Tensor reshaped(Shape s) const {
        if (shape_numel(s) != numel_)
            throw std::invalid_argument("tensor: reshape " + shape_str(shape_) + " -> " + shape_str(s) +
                                        " changes element count");
        Tensor t(*this);
        t.shape_ = std::move(s);
        return t;
    }

private:
    Shape shape_;
    std::int64_t numel_ = 0;
    std::unique_ptr<float[]> data_;
};

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace aiacycle
