#pragma once

namespace hsar {

/// Shape of a regular lattice; unit (i, j) has linear index i * cols + j.
struct GridShape {
  int rows = 0;
  int cols = 0;

  int size() const noexcept { return rows * cols; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

}  // namespace hsar
