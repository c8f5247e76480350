#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace smogcast {

using Shape = std::vector<int>;

inline std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor extent must be positive");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

/// Dense row-major N-d array. Storage scalar is the template parameter:
/// float for the production path, double for oracle tests.
template <typename S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape shape)
        : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {}

    TensorT(Shape shape, std::vector<S> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != shape_numel(shape_))
            throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
    }

    static TensorT full(Shape shape, S value) {
        TensorT t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    const Shape& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& vec() { return data_; }
    const std::vector<S>& vec() const { return data_; }

    S& operator[](std::size_t i) { return data_[i]; }
    const S& operator[](std::size_t i) const { return data_[i]; }

    /// Checked multi-index access; convenience for tests and small code paths.
    S& at(std::initializer_list<int> idx) { return data_[flat_index(idx)]; }
    const S& at(std::initializer_list<int> idx) const { return data_[flat_index(idx)]; }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

    template <typename T2>
    TensorT<T2> cast() const {
        TensorT<T2> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T2>(data_[i]);
        return out;
    }

    bool all_finite() const {
        for (S v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    void require_finite(const char* what) const {
        if (!all_finite())
            throw std::runtime_error(std::string("non-finite value in ") + what);
    }

private:
    std::size_t flat_index(std::initializer_list<int> idx) const {
        if (idx.size() != shape_.size())
            throw std::out_of_range("index rank mismatch for shape " + shape_str(shape_));
        std::size_t flat = 0;
        std::size_t k = 0;
        for (int i : idx) {
            int extent = shape_[k];
            if (i < 0 || i >= extent) throw std::out_of_range("tensor index out of range");
            flat = flat * static_cast<std::size_t>(extent) + static_cast<std::size_t>(i);
            ++k;
        }
        return flat;
    }

    Shape shape_;
    std::vector<S> data_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename S>
void require_same_shape(const TensorT<S>& a, const TensorT<S>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace smogcast
