#include "emohead/numerics/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <new>
#include <sstream>
#include <unordered_map>

#include "emohead/numerics/errors.hpp"

namespace emohead::numerics {

namespace {

constexpr std::align_val_t kAlign{64};
constexpr std::size_t kPoolMinBytes = std::size_t{1} << 16;
constexpr std::size_t kPoolMaxCached = std::size_t{1} << 30;

// Cleared when the cache is destroyed; blocks released later (static tensors
// at exit) go straight back to the allocator.
thread_local bool cache_alive = false;

struct BlockCache {
  std::unordered_map<std::size_t, std::vector<void*>> free;
  std::size_t cached = 0;

  BlockCache() { cache_alive = true; }
  ~BlockCache() {
    cache_alive = false;
    for (auto& [bytes, blocks] : free) {
      for (void* p : blocks) ::operator delete(p, kAlign);
    }
  }
};

BlockCache& cache() {
  thread_local BlockCache c;
  return c;
}

}  // namespace

void* aligned_block_alloc(std::size_t bytes) {
  if (bytes >= kPoolMinBytes) {
    BlockCache& c = cache();
    auto it = c.free.find(bytes);
    if (it != c.free.end() && !it->second.empty()) {
      void* p = it->second.back();
      it->second.pop_back();
      c.cached -= bytes;
      return p;
    }
  }
  return ::operator new(bytes, kAlign);
}

void aligned_block_free(void* p, std::size_t bytes) noexcept {
  if (p == nullptr) return;
  if (bytes >= kPoolMinBytes && cache_alive) {
    BlockCache& c = cache();
    if (c.cached + bytes <= kPoolMaxCached) {
      try {
        c.free[bytes].push_back(p);
        c.cached += bytes;
        return;
      } catch (...) {
      }
    }
  }
  ::operator delete(p, kAlign);
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_product(shape_), 0.0) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape_));
  }
  if (shape_product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                         " values");
  }
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double value) {
  Tensor t({rows, cols});
  t.fill(value);
  return t;
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor Tensor::scalar(double value) { return Tensor({1, 1}, {value}); }

Tensor Tensor::row(std::span<const double> values) {
  return Tensor({1, values.size()}, std::vector<double>(values.begin(), values.end()));
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::from_external(Shape shape, std::vector<double> data) {
  Tensor t(std::move(shape), std::move(data));
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NonFiniteError("non-finite value at flat index " + std::to_string(i));
    }
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() == 1) return 1;
  if (shape_.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() == 1) return shape_[0];
  if (shape_.size() != 2) throw DimensionError("expected rank-2 tensor, got " + shape_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* what) {
  if (t.rank() != 2 || t.rows() != rows || t.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected [" + std::to_string(rows) + "x" + std::to_string(cols) +
                         "], got " + shape_string(t.shape()));
  }
}

}  // namespace emohead::numerics
