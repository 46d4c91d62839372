#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace sptok::logreg {

// Compressed sparse row matrix with double values.
class SparseMatrix {
 public:
  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };

  SparseMatrix() = default;
  SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

  // Duplicate (row, col) entries are summed; explicit zeros are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);
  static SparseMatrix from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::uint32_t> row_indices(std::size_t r) const {
    return {col_idx_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }
  std::span<const double> row_values(std::size_t r) const {
    return {values_.data() + row_ptr_[r], row_ptr_[r + 1] - row_ptr_[r]};
  }

  double at(std::size_t r, std::size_t c) const;
  std::vector<double> column_sums() const;
  std::vector<double> column_sq_sums() const;
  // Copy with column j multiplied by factors[j].
  SparseMatrix scale_columns(std::span<const double> factors) const;
  // New matrix whose row i is row order[i] of this one.
  SparseMatrix permute_rows(std::span<const std::size_t> order) const;
  SparseMatrix select_rows(std::span<const std::size_t> rows) const { return permute_rows(rows); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_{0};
  std::vector<std::uint32_t> col_idx_;
  std::vector<double> values_;
};

}  // namespace sptok::logreg
