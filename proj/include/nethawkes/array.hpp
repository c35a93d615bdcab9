#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace nethawkes {

// Dense row-major 2-D array.
template <typename T>
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T value = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    [[nodiscard]] std::size_t rows() const noexcept { return rows_; }
    [[nodiscard]] std::size_t cols() const noexcept { return cols_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const noexcept {
        return data_[r * cols_ + c];
    }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Matrix&) const = default;

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

// Dense row-major 3-D array; the last index is contiguous.
template <typename T>
class Tensor3 {
  public:
    Tensor3() = default;
    Tensor3(std::size_t n0, std::size_t n1, std::size_t n2, T value = T{})
        : n0_(n0), n1_(n1), n2_(n2), data_(n0 * n1 * n2, value) {}

    [[nodiscard]] std::size_t dim0() const noexcept { return n0_; }
    [[nodiscard]] std::size_t dim1() const noexcept { return n1_; }
    [[nodiscard]] std::size_t dim2() const noexcept { return n2_; }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }

    T& operator()(std::size_t i, std::size_t j, std::size_t k) noexcept {
        return data_[(i * n1_ + j) * n2_ + k];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return data_[(i * n1_ + j) * n2_ + k];
    }

    // Contiguous fiber along the last index.
    std::span<T> fiber(std::size_t i, std::size_t j) noexcept {
        return {data_.data() + (i * n1_ + j) * n2_, n2_};
    }
    std::span<const T> fiber(std::size_t i, std::size_t j) const noexcept {
        return {data_.data() + (i * n1_ + j) * n2_, n2_};
    }

    std::vector<T>& data() noexcept { return data_; }
    const std::vector<T>& data() const noexcept { return data_; }

    void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

    bool operator==(const Tensor3&) const = default;

  private:
    std::size_t n0_ = 0;
    std::size_t n1_ = 0;
    std::size_t n2_ = 0;
    std::vector<T> data_;
};

} // namespace nethawkes
