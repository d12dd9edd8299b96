#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "modrec/errors.hpp"

namespace modrec {

// Dimensions as plain ints: padding/stride arithmetic wants signed math.
using Shape = std::vector<int>;

inline std::size_t numel_of(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

// Dense row-major n-d array. float for training, double for gradient checks.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_dims();
        data_.assign(numel_of(shape_), T(0));
    }

    Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_dims();
        if (data_.size() != numel_of(shape_))
            throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, T value) {
        Tensor t(std::move(shape));
        t.fill(value);
        return t;
    }

    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // row-major accessors for the ranks the ops use
    T& at(int i, int j) { return data_[idx2(i, j)]; }
    const T& at(int i, int j) const { return data_[idx2(i, j)]; }
    T& at(int i, int j, int k) { return data_[idx3(i, j, k)]; }
    const T& at(int i, int j, int k) const { return data_[idx3(i, j, k)]; }
    T& at(int i, int j, int k, int l) { return data_[idx4(i, j, k, l)]; }
    const T& at(int i, int j, int k, int l) const { return data_[idx4(i, j, k, l)]; }

    std::size_t idx2(int i, int j) const {
        return static_cast<std::size_t>(i) * su(shape_[1]) + su(j);
    }
    std::size_t idx3(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * su(shape_[1]) + su(j)) * su(shape_[2]) + su(k);
    }
    std::size_t idx4(int i, int j, int k, int l) const {
        return ((static_cast<std::size_t>(i) * su(shape_[1]) + su(j)) * su(shape_[2]) + su(k)) *
                   su(shape_[3]) +
               su(l);
    }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // same storage, new dims; numel must match
    Tensor reshaped(Shape shape) const {
        if (numel_of(shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
        return Tensor(std::move(shape), data_);
    }

    bool all_finite() const {
        for (const T& v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

    void add_scaled(const Tensor& other, T scale) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
    }

    void accumulate(const Tensor& other) {
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    }

  private:
    static std::size_t su(int v) { return static_cast<std::size_t>(v); }

    void check_dims() const {
        for (int d : shape_)
            if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
};

// Trainable tensor: value plus same-shape gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    int index = -1;  // position in the owning model's parameter list

    Parameter() = default;
    Parameter(std::string name_, Tensor<T> value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
};

}  // namespace modrec
