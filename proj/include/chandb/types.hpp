// SPDX-License-Identifier: Apache-2.0
//
// chandb: channel database construction and interpolation
// Copyright (C) 2026 The chandb authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#pragma once

#include <Eigen/Core>

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace chandb {

using Index = Eigen::Index;

/// Row-major dense matrix of doubles; one entry per grid cell.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Buffer of doubles aligned like Eigen's own heap storage, so vectorized
/// kernels see the same alignment on every allocation.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

/// Row-major 0/1 matrix marking valid grid cells.
using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Zero-based (row, col) address of a grid cell.
struct Cell {
    Index row = 0;
    Index col = 0;

    auto operator<=>(const Cell&) const = default;
};

/// Base station location in (fractional) cell-index units.
struct BsPosition {
    double row = 0.0;
    double col = 0.0;
};

/// Raised when a factorization or solve cannot be completed.
class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

/// Number of set entries in a mask.
inline Index count_valid(const Mask& mask) {
    return mask.cast<Index>().sum();
}

} // namespace chandb
