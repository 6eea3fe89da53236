#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dil {

/// Error categories raised across the engine. The CLI maps these onto exit codes.
enum class Errc {
  MalformedFile,
  IllegalBinValue,
  DuplicateRowId,
  EmptyEraAfterSampling,
  UnknownGroup,
  InvalidConfig,
  InvalidArgument,
  DegenerateInput,
  DegenerateTarget,
  DegenerateImportance,
  TooFewEras,
  InsufficientRows,
  InsufficientHistory,
  FeatureMismatch,
  DimensionMismatch,
  OutOfRange,
  InvalidAlpha,
  PathTooShort,
  SingularSystem,
  WindowNotCovered,
  TooFewMembers,
  BudgetExceeded,
};

const char* to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Dense row-major matrix with value semantics.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<T> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const T> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const T> data() const noexcept { return data_; }
  std::span<T> data() noexcept { return data_; }

  /// Appends a row; the first append on an empty 0x0 matrix fixes the width.
  void append_row(std::span<const T> values) {
    if (rows_ == 0 && cols_ == 0) cols_ = values.size();
    if (values.size() != cols_) throw Error(Errc::DimensionMismatch, "row width mismatch");
    data_.insert(data_.end(), values.begin(), values.end());
    ++rows_;
  }

  void reserve_rows(std::size_t n) { data_.reserve(n * cols_); }

  /// Keeps only the listed rows, in the given order.
  Matrix select_rows(std::span<const std::size_t> indices) const {
    Matrix out(indices.size(), cols_);
    for (std::size_t k = 0; k < indices.size(); ++k) {
      auto src = row(indices[k]);
      std::copy(src.begin(), src.end(), out.row(k).begin());
    }
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Fixed 17-significant-digit rendering; parses back to the identical double.
std::string format_double(double value);

}  // namespace dil
