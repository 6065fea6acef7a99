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

#include "chandb/types.hpp"

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace chandb {

/// One user record: planar position in meters and the measured gain in dB.
struct Sample {
    double x1 = 0.0;
    double x2 = 0.0;
    double gain_db = 0.0;
};

/// Bounding box and resolution of the quantized database.
///
/// The grid has rows() = round((x1_max - x1_min) / q) + 1 rows along x1 and
/// cols() = round((x2_max - x2_min) / q) + 1 columns along x2. Cell (i, j)
/// is centred at (x1_min + i q, x2_min + j q).
class GridSpec {
public:
    GridSpec(double x1_min, double x1_max, double x2_min, double x2_max, double q);

    /// Grid of the given shape anchored at the origin.
    static GridSpec from_shape(Index rows, Index cols, double q);

    double x1_min() const { return x1_min_; }
    double x1_max() const { return x1_max_; }
    double x2_min() const { return x2_min_; }
    double x2_max() const { return x2_max_; }
    double q() const { return q_; }

    Index rows() const { return rows_; }
    Index cols() const { return cols_; }
    Index cells() const { return rows_ * cols_; }

    /// Cell holding the coordinate. Ties round half away from zero.
    /// Throws std::out_of_range when the coordinate falls outside the grid.
    Cell map_coordinate(double x1, double x2) const;

    /// Metric coordinate of a cell centre.
    std::pair<double, double> cell_center(Cell cell) const;

    bool operator==(const GridSpec&) const = default;

private:
    double x1_min_;
    double x1_max_;
    double x2_min_;
    double x2_max_;
    double q_;
    Index rows_;
    Index cols_;
};

/// The database matrix D and its validity mask M.
///
/// Invariant: values(i, j) == 0 wherever mask(i, j) == 0. A valid cell may
/// legitimately hold 0 dB; only the mask decides validity.
struct ChannelGrid {
    GridSpec spec;
    Matrix values;
    Mask mask;

    explicit ChannelGrid(const GridSpec& s);
    ChannelGrid(const GridSpec& s, Matrix v, Mask m);

    Index rows() const { return spec.rows(); }
    Index cols() const { return spec.cols(); }
    Index valid_count() const { return count_valid(mask); }
    bool is_valid(Cell c) const { return mask(c.row, c.col) != 0; }
};

/// A completed database together with the mask of cells that were observed.
struct FilledGrid {
    GridSpec spec;
    Matrix values;
    Mask source_mask;
};

/// Averages samples (in dB) per cell. Cells without samples stay invalid.
ChannelGrid build_grid(const GridSpec& spec, std::span<const Sample> samples);

/// Restricts a full field to the cells set in `mask`.
ChannelGrid masked_grid(const GridSpec& spec, const Matrix& field, const Mask& mask);

/// Valid cells in row-major order.
std::vector<Cell> valid_cells(const Mask& mask);

/// Result of dividing the valid set into a training subset and a label subset.
struct ValidSplit {
    ChannelGrid train;
    Mask label_mask;
};

/// Randomly keeps round(fraction * V) valid cells for training; the rest form
/// the label set. Deterministic under `seed`.
ValidSplit split_valid(const ChannelGrid& grid, double fraction, std::uint64_t seed);

/// Random subset of `count` cells out of the whole grid, deterministic under `seed`.
Mask random_cells(Index rows, Index cols, Index count, std::uint64_t seed);

} // namespace chandb
