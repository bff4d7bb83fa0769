#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "dlio/error.hpp"

namespace dlio {

enum class DType : std::uint8_t { f32, f64 };

inline const char* to_string(DType t) { return t == DType::f32 ? "f32" : "f64"; }

inline DType parse_dtype(std::string_view s) {
  if (s == "f32") return DType::f32;
  if (s == "f64") return DType::f64;
  throw InvalidArgument("unknown dtype '" + std::string(s) + "'");
}

inline std::size_t dtype_size(DType t) { return t == DType::f32 ? 4 : 8; }

inline std::size_t element_count(std::span<const std::size_t> dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor of f32 or f64 values.
class Tensor {
 public:
  Tensor() : Tensor(std::vector<std::size_t>{0}, std::vector<float>{}) {}

  Tensor(std::vector<std::size_t> dims, std::vector<float> values) : dims_(std::move(dims)), data_(std::move(values)) {
    check();
  }
  Tensor(std::vector<std::size_t> dims, std::vector<double> values) : dims_(std::move(dims)), data_(std::move(values)) {
    check();
  }

  static Tensor zeros(std::vector<std::size_t> dims, DType dtype = DType::f32) {
    const auto n = element_count(dims);
    if (dtype == DType::f32) return Tensor(std::move(dims), std::vector<float>(n));
    return Tensor(std::move(dims), std::vector<double>(n));
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  DType dtype() const { return std::holds_alternative<std::vector<float>>(data_) ? DType::f32 : DType::f64; }
  std::size_t size() const {
    return std::visit([](const auto& v) { return v.size(); }, data_);
  }
  std::size_t byte_size() const { return size() * dtype_size(dtype()); }

  std::span<const float> f32() const { return std::get<std::vector<float>>(data_); }
  std::span<float> f32() { return std::get<std::vector<float>>(data_); }
  std::span<const double> f64() const { return std::get<std::vector<double>>(data_); }
  std::span<double> f64() { return std::get<std::vector<double>>(data_); }

  std::span<const std::byte> bytes() const {
    return std::visit([](const auto& v) { return std::as_bytes(std::span(v)); }, data_);
  }
  std::span<std::byte> writable_bytes() {
    return std::visit([](auto& v) { return std::as_writable_bytes(std::span(v)); }, data_);
  }

  double at(std::size_t i) const {
    return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, data_);
  }

  bool all_finite() const {
    return std::visit(
        [](const auto& v) {
          for (auto x : v)
            if (!std::isfinite(x)) return false;
          return true;
        },
        data_);
  }

  // Bitwise equality: same dims, dtype and value bits.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    if (a.dims_ != b.dims_ || a.dtype() != b.dtype()) return false;
    const auto x = a.bytes();
    const auto y = b.bytes();
    return std::equal(x.begin(), x.end(), y.begin(), y.end());
  }

 private:
  void check() const {
    if (element_count(dims_) != size())
      throw InvalidArgument("tensor data length " + std::to_string(size()) + " does not match dims product " +
                            std::to_string(element_count(dims_)));
  }

  std::vector<std::size_t> dims_;
  std::variant<std::vector<float>, std::vector<double>> data_;
};

}  // namespace dlio
