#pragma once

#include <cstdint>
#include <vector>

#include "avoinv/common.hpp"

namespace avoinv {

// Row-major 2D grid; cell (i,j) lives at index i*ny + j.
struct grid_spec {
  std::uint32_t nx = 0;
  std::uint32_t ny = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }
  std::size_t index(std::uint32_t i, std::uint32_t j) const {
    return static_cast<std::size_t>(i) * ny + j;
  }
  bool valid() const { return nx >= 1 && ny >= 1; }
  bool operator==(const grid_spec&) const = default;
};

inline void check_grid(const grid_spec& g) {
  require(g.valid(), "grid: nx and ny must be >= 1");
}

// A field is one scalar value per grid cell, row-major.
using field = std::vector<double>;

inline void check_field(const grid_spec& g, const field& f, const char* name) {
  require(f.size() == g.size(), std::string(name) + ": length must equal nx*ny");
}

inline field constant_field(const grid_spec& g, double value) {
  return field(g.size(), value);
}

}  // namespace avoinv
