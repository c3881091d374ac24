#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace defex {

using Vec = std::vector<double>;

// Dense row-major matrix of doubles. Small enough on purpose: the whole
// toolkit runs in 64-bit precision and desk-scale shapes.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {
    assert(r >= 0 && c >= 0);
  }

  double& operator()(int r, int c) {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    assert(r >= 0 && r < rows && c >= 0 && c < cols);
    return data[static_cast<size_t>(r) * cols + c];
  }

  size_t size() const { return data.size(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  // Pointer to the start of row r.
  double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const {
    return data.data() + static_cast<size_t>(r) * cols;
  }

  bool same_shape(const Mat& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace defex
