#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace emohead::numerics {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned raw blocks. Large blocks are recycled through a per-thread
/// cache so tape-heavy loops do not fault in fresh pages on every operation.
void* aligned_block_alloc(std::size_t bytes);
void aligned_block_free(void* p, std::size_t bytes) noexcept;

/// 64-byte aligned storage. Vectorized kernels peel a scalar head off
/// unaligned buffers, which makes the last bit of a result depend on the heap
/// address; fixed alignment keeps every run bit-identical.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(aligned_block_alloc(n * sizeof(T))); }
  void deallocate(T* p, std::size_t n) noexcept { aligned_block_free(p, n * sizeof(T)); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

/// Dense row-major array of doubles.
///
/// Rank-2 is the working rank of every operation in this library; vectors
/// are represented as 1×n rows. Higher ranks are only carried through
/// persistence.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double value);
  static Tensor identity(std::size_t n);
  static Tensor scalar(double value);
  static Tensor row(std::span<const double> values);
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);

  /// Same as the (shape, data) constructor but also rejects NaN/Inf. Use for
  /// anything read from outside the process.
  static Tensor from_external(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Extents of the rank-2 view. A rank-1 tensor is read as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() & { return data_; }
  std::span<const double> values() const& { return data_; }
  // Spans into temporaries dangle; bind the tensor first.
  std::span<const double> values() && = delete;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Scalar value of a single-element tensor.
  double item() const;

  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double, AlignedAllocator<double>> data_;
};

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Throws DimensionError unless `t` is rank 2 with the given extents.
void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what);

}  // namespace emohead::numerics
