#pragma once

#include <cstddef>
#include <vector>

#include "polyroom/error.hpp"

namespace polyroom {

// Dense row-major H x W raster.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(std::size_t height, std::size_t width, T fill = T{})
      : height_(height), width_(width), cells_(height * width, fill) {}

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return cells_.size(); }
  bool empty() const { return cells_.empty(); }

  T& operator()(std::size_t row, std::size_t col) { return cells_[row * width_ + col]; }
  const T& operator()(std::size_t row, std::size_t col) const { return cells_[row * width_ + col]; }

  bool in_bounds(long row, long col) const {
    return row >= 0 && col >= 0 && row < static_cast<long>(height_) && col < static_cast<long>(width_);
  }
  // Out-of-range reads return the fill value T{}.
  T at_or(long row, long col, T fallback = T{}) const {
    return in_bounds(row, col) ? (*this)(row, col) : fallback;
  }

  std::vector<T>& cells() { return cells_; }
  const std::vector<T>& cells() const { return cells_; }

  bool operator==(const Grid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<T> cells_;
};

using Mask = Grid<unsigned char>;

}  // namespace polyroom
