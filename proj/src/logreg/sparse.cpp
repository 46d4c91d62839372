#include "sptok/logreg/sparse.hpp"

#include <algorithm>

#include "sptok/error.hpp"

namespace sptok::logreg {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  for (const auto& t : triplets) {
    require(t.row < rows && t.col < cols, ErrorCode::kIndexOutOfRange, "triplet outside matrix bounds");
  }
  std::stable_sort(triplets.begin(), triplets.end(),
                   [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  SparseMatrix m(rows, cols);
  std::size_t i = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    while (i < triplets.size() && triplets[i].row == r) {
      const std::size_t c = triplets[i].col;
      double v = 0;
      while (i < triplets.size() && triplets[i].row == r && triplets[i].col == c) v += triplets[i++].value;
      if (v != 0.0) {
        m.col_idx_.push_back(static_cast<std::uint32_t>(c));
        m.values_.push_back(v);
      }
    }
    m.row_ptr_[r + 1] = m.values_.size();
  }
  return m;
}

SparseMatrix SparseMatrix::from_dense(std::size_t rows, std::size_t cols, std::span<const double> dense) {
  require(dense.size() == rows * cols, ErrorCode::kShapeMismatch, "dense buffer size");
  SparseMatrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = dense[r * cols + c];
      if (v != 0.0) {
        m.col_idx_.push_back(static_cast<std::uint32_t>(c));
        m.values_.push_back(v);
      }
    }
    m.row_ptr_[r + 1] = m.values_.size();
  }
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto idx = row_indices(r);
  const auto it = std::lower_bound(idx.begin(), idx.end(), static_cast<std::uint32_t>(c));
  if (it == idx.end() || *it != c) return 0.0;
  return row_values(r)[static_cast<std::size_t>(it - idx.begin())];
}

std::vector<double> SparseMatrix::column_sums() const {
  std::vector<double> out(cols_, 0.0);
  for (std::size_t k = 0; k < values_.size(); ++k) out[col_idx_[k]] += values_[k];
  return out;
}

std::vector<double> SparseMatrix::column_sq_sums() const {
  std::vector<double> out(cols_, 0.0);
  for (std::size_t k = 0; k < values_.size(); ++k) out[col_idx_[k]] += values_[k] * values_[k];
  return out;
}

SparseMatrix SparseMatrix::scale_columns(std::span<const double> factors) const {
  require(factors.size() == cols_, ErrorCode::kLengthMismatch, "one factor per column");
  SparseMatrix m = *this;
  for (std::size_t k = 0; k < m.values_.size(); ++k) m.values_[k] *= factors[col_idx_[k]];
  return m;
}

SparseMatrix SparseMatrix::permute_rows(std::span<const std::size_t> order) const {
  SparseMatrix m(order.size(), cols_);
  for (std::size_t i = 0; i < order.size(); ++i) {
    require(order[i] < rows_, ErrorCode::kIndexOutOfRange, "row index out of range");
    const auto idx = row_indices(order[i]);
    const auto val = row_values(order[i]);
    m.col_idx_.insert(m.col_idx_.end(), idx.begin(), idx.end());
    m.values_.insert(m.values_.end(), val.begin(), val.end());
    m.row_ptr_[i + 1] = m.values_.size();
  }
  return m;
}

}  // namespace sptok::logreg
