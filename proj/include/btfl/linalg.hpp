#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "btfl/error.hpp"

namespace btfl {

// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  // this * x
  std::vector<double> apply(std::span<const double> x) const {
    if (x.size() != cols) throw DimensionMismatch("matrix-vector size mismatch");
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* w = data.data() + r * cols;
      double acc = 0.0;
      for (std::size_t c = 0; c < cols; ++c) acc += w[c] * x[c];
      out[r] = acc;
    }
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace btfl
