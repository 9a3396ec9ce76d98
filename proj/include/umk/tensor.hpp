#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "umk/errors.hpp"

namespace umk {

// Dense row-major tensor with an optional gradient buffer of the same shape.
// Handle semantics: copies share the underlying storage, which is what the
// autodiff graph needs to make leaf gradients visible to the caller.
template <typename Scalar>
class TensorT {
 public:
  using Shape = std::vector<std::size_t>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using ArrayMap = Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, 1>>;
  using ConstArrayMap = Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, 1>>;

  TensorT() : s_(std::make_shared<Storage>()) {}

  static TensorT zeros(Shape shape) {
    TensorT t;
    t.s_->shape = std::move(shape);
    t.s_->data.assign(count(t.s_->shape), Scalar(0));
    return t;
  }

  static TensorT full(Shape shape, Scalar value) {
    TensorT t = zeros(std::move(shape));
    t.s_->data.assign(t.s_->data.size(), value);
    return t;
  }

  static TensorT scalar(Scalar value) { return full({1}, value); }

  static TensorT from_data(Shape shape, std::vector<Scalar> data) {
    if (count(shape) != data.size()) {
      throw shape_error("tensor: shape " + shape_string(shape) + " does not match buffer of " +
                        std::to_string(data.size()) + " elements");
    }
    TensorT t;
    t.s_->shape = std::move(shape);
    t.s_->data = std::move(data);
    return t;
  }

  const Shape& shape() const { return s_->shape; }
  std::size_t rank() const { return s_->shape.size(); }
  std::size_t extent(std::size_t axis) const { return s_->shape.at(axis); }
  std::size_t size() const { return s_->data.size(); }

  Scalar* data() { return s_->data.data(); }
  const Scalar* data() const { return s_->data.data(); }
  std::vector<Scalar>& buffer() { return s_->data; }
  const std::vector<Scalar>& buffer() const { return s_->data; }

  Scalar value() const {
    if (size() != 1) throw shape_error("tensor: value() on non-scalar of shape " + shape_string(shape()));
    return s_->data[0];
  }

  Scalar& operator[](std::size_t i) { return s_->data[i]; }
  Scalar operator[](std::size_t i) const { return s_->data[i]; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool on) {
    s_->requires_grad = on;
    if (on) ensure_grad();
  }

  bool has_grad() const { return !s_->grad.empty(); }
  void ensure_grad() {
    if (s_->grad.size() != s_->data.size()) s_->grad.assign(s_->data.size(), Scalar(0));
  }
  void zero_grad() { s_->grad.assign(s_->data.size(), Scalar(0)); }
  Scalar* grad() {
    ensure_grad();
    return s_->grad.data();
  }
  const std::vector<Scalar>& grad_buffer() const { return s_->grad; }

  // Deep copy of values only (fresh storage, no grad, no flags).
  TensorT clone() const { return from_data(s_->shape, s_->data); }

  bool same_storage(const TensorT& other) const { return s_ == other.s_; }
  const void* storage_id() const { return s_.get(); }

  // 2-D Eigen views. Rank-1 tensors are viewed as a single row.
  MatrixMap matrix() {
    auto [r, c] = rows_cols();
    return MatrixMap(data(), r, c);
  }
  ConstMatrixMap matrix() const {
    auto [r, c] = rows_cols();
    return ConstMatrixMap(data(), r, c);
  }
  MatrixMap grad_matrix() {
    auto [r, c] = rows_cols();
    return MatrixMap(grad(), r, c);
  }
  ArrayMap array() { return ArrayMap(data(), static_cast<Eigen::Index>(size())); }
  ConstArrayMap array() const { return ConstArrayMap(data(), static_cast<Eigen::Index>(size())); }
  ArrayMap grad_array() { return ArrayMap(grad(), static_cast<Eigen::Index>(size())); }

  static std::size_t count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  static std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }

 private:
  struct Storage {
    Shape shape;
    std::vector<Scalar> data;
    std::vector<Scalar> grad;
    bool requires_grad = false;
  };

  std::pair<Eigen::Index, Eigen::Index> rows_cols() const {
    if (rank() == 1) return {1, static_cast<Eigen::Index>(s_->shape[0])};
    if (rank() == 2)
      return {static_cast<Eigen::Index>(s_->shape[0]), static_cast<Eigen::Index>(s_->shape[1])};
    throw shape_error("tensor: matrix view of rank-" + std::to_string(rank()) + " tensor " +
                      shape_string(shape()));
  }

  std::shared_ptr<Storage> s_;
};

using Tensor = TensorT<double>;

// --- checkpoint format -----------------------------------------------------
// magic "UMKT", version byte, u32 rank, u64 extents, raw little-endian
// 64-bit floats. Round-trips bit-exactly.

inline constexpr char kTensorMagic[4] = {'U', 'M', 'K', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

template <typename Scalar>
void save_tensor(const std::filesystem::path& path, const TensorT<Scalar>& t) {
  static_assert(sizeof(Scalar) == 8, "checkpoint format stores 64-bit floats");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw config_error("cannot open tensor file for writing: " + path.string());
  out.write(kTensorMagic, 4);
  out.put(static_cast<char>(kTensorVersion));
  const std::uint32_t rank = static_cast<std::uint32_t>(t.rank());
  out.write(reinterpret_cast<const char*>(&rank), sizeof rank);
  for (std::size_t axis = 0; axis < t.rank(); ++axis) {
    const std::uint64_t extent = t.extent(axis);
    out.write(reinterpret_cast<const char*>(&extent), sizeof extent);
  }
  out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 8));
  if (!out) throw config_error("short write on tensor file: " + path.string());
}

template <typename Scalar = double>
TensorT<Scalar> load_tensor(const std::filesystem::path& path) {
  static_assert(sizeof(Scalar) == 8, "checkpoint format stores 64-bit floats");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open tensor file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kTensorMagic, 4) != 0)
    throw config_error("bad magic in tensor file: " + path.string());
  const int version = in.get();
  if (version != kTensorVersion)
    throw config_error("unsupported tensor format version " + std::to_string(version) + " in " +
                       path.string());
  std::uint32_t rank = 0;
  in.read(reinterpret_cast<char*>(&rank), sizeof rank);
  if (!in || rank > 8) throw config_error("implausible tensor rank in " + path.string());
  typename TensorT<Scalar>::Shape shape(rank);
  for (auto& extent : shape) {
    std::uint64_t e = 0;
    in.read(reinterpret_cast<char*>(&e), sizeof e);
    extent = static_cast<std::size_t>(e);
  }
  if (!in) throw config_error("truncated tensor header in " + path.string());
  std::vector<Scalar> data(TensorT<Scalar>::count(shape));
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * 8));
  if (!in) throw config_error("truncated tensor payload in " + path.string());
  char extra;
  if (in.read(&extra, 1))
    throw config_error("trailing bytes after tensor payload in " + path.string());
  return TensorT<Scalar>::from_data(std::move(shape), std::move(data));
}

}  // namespace umk
