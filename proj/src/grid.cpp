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

#include "chandb/grid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace chandb {

namespace {

Index axis_length(double lo, double hi, double q) {
    return static_cast<Index>(std::round((hi - lo) / q)) + 1;
}

Index axis_index(double x, double lo, double q, Index n, const char* axis) {
    const double half = 0.5 * q;
    const double hi = lo + static_cast<double>(n - 1) * q;
    if (!std::isfinite(x) || x < lo - half || x > hi + half) {
        std::ostringstream msg;
        msg << "coordinate " << axis << "=" << x << " outside grid range [" << lo - half << ", "
            << hi + half << "]";
        throw std::out_of_range(msg.str());
    }
    const auto idx = static_cast<Index>(std::round((x - lo) / q));
    if (idx < 0 || idx >= n) {
        std::ostringstream msg;
        msg << "coordinate " << axis << "=" << x << " rounds to index " << idx
            << " outside [0, " << n << ")";
        throw std::out_of_range(msg.str());
    }
    return idx;
}

} // namespace

GridSpec::GridSpec(double x1_min, double x1_max, double x2_min, double x2_max, double q)
    : x1_min_(x1_min), x1_max_(x1_max), x2_min_(x2_min), x2_max_(x2_max), q_(q) {
    if (!(std::isfinite(x1_min) && std::isfinite(x1_max) && std::isfinite(x2_min) &&
          std::isfinite(x2_max) && std::isfinite(q))) {
        throw std::invalid_argument("GridSpec: bounds and resolution must be finite");
    }
    if (!(q > 0.0)) {
        throw std::invalid_argument("GridSpec: resolution q must be positive");
    }
    if (x1_max < x1_min || x2_max < x2_min) {
        throw std::invalid_argument("GridSpec: upper bound below lower bound");
    }
    rows_ = axis_length(x1_min, x1_max, q);
    cols_ = axis_length(x2_min, x2_max, q);
}

GridSpec GridSpec::from_shape(Index rows, Index cols, double q) {
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("GridSpec::from_shape: shape must be at least 1x1");
    }
    return GridSpec(0.0, static_cast<double>(rows - 1) * q, 0.0, static_cast<double>(cols - 1) * q, q);
}

Cell GridSpec::map_coordinate(double x1, double x2) const {
    return Cell{axis_index(x1, x1_min_, q_, rows_, "x1"), axis_index(x2, x2_min_, q_, cols_, "x2")};
}

std::pair<double, double> GridSpec::cell_center(Cell cell) const {
    return {x1_min_ + static_cast<double>(cell.row) * q_, x2_min_ + static_cast<double>(cell.col) * q_};
}

ChannelGrid::ChannelGrid(const GridSpec& s)
    : spec(s), values(Matrix::Zero(s.rows(), s.cols())), mask(Mask::Zero(s.rows(), s.cols())) {}

ChannelGrid::ChannelGrid(const GridSpec& s, Matrix v, Mask m)
    : spec(s), values(std::move(v)), mask(std::move(m)) {
    if (values.rows() != s.rows() || values.cols() != s.cols() || mask.rows() != s.rows() ||
        mask.cols() != s.cols()) {
        throw std::invalid_argument("ChannelGrid: matrix shape does not match grid spec");
    }
    for (Index i = 0; i < mask.size(); ++i) {
        const auto m_i = mask.data()[i];
        if (m_i > 1) {
            throw std::invalid_argument("ChannelGrid: mask entries must be 0 or 1");
        }
        if (m_i == 0 && values.data()[i] != 0.0) {
            throw std::invalid_argument("ChannelGrid: invalid cells must hold 0");
        }
        if (m_i == 1 && !std::isfinite(values.data()[i])) {
            throw std::invalid_argument("ChannelGrid: valid cells must hold finite gains");
        }
    }
}

ChannelGrid build_grid(const GridSpec& spec, std::span<const Sample> samples) {
    // (linear cell index, gain) sorted so that each cell's mean is computed in
    // an order independent of the input permutation.
    std::vector<std::pair<Index, double>> keyed;
    keyed.reserve(samples.size());
    for (const auto& s : samples) {
        if (!std::isfinite(s.gain_db)) {
            throw std::invalid_argument("build_grid: sample gain must be finite");
        }
        const Cell c = spec.map_coordinate(s.x1, s.x2);
        keyed.emplace_back(c.row * spec.cols() + c.col, s.gain_db);
    }
    std::sort(keyed.begin(), keyed.end());

    ChannelGrid grid(spec);
    for (std::size_t i = 0; i < keyed.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < keyed.size() && keyed[j].first == keyed[i].first) {
            sum += keyed[j].second;
            ++j;
        }
        const Index lin = keyed[i].first;
        grid.values.data()[lin] = sum / static_cast<double>(j - i);
        grid.mask.data()[lin] = 1;
        i = j;
    }
    return grid;
}

ChannelGrid masked_grid(const GridSpec& spec, const Matrix& field, const Mask& mask) {
    if (field.rows() != spec.rows() || field.cols() != spec.cols()) {
        throw std::invalid_argument("masked_grid: field shape does not match grid spec");
    }
    Matrix values = (mask.array() != 0).select(field, 0.0);
    return ChannelGrid(spec, std::move(values), mask);
}

std::vector<Cell> valid_cells(const Mask& mask) {
    std::vector<Cell> cells;
    for (Index i = 0; i < mask.rows(); ++i) {
        for (Index j = 0; j < mask.cols(); ++j) {
            if (mask(i, j) != 0) {
                cells.push_back({i, j});
            }
        }
    }
    return cells;
}

ValidSplit split_valid(const ChannelGrid& grid, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw std::invalid_argument("split_valid: fraction must lie in (0, 1)");
    }
    auto cells = valid_cells(grid.mask);
    const auto v = static_cast<Index>(cells.size());
    if (v < 2) {
        throw std::invalid_argument("split_valid: need at least two valid entries");
    }
    const auto n_train = static_cast<Index>(std::round(fraction * static_cast<double>(v)));
    if (n_train < 1 || n_train >= v) {
        std::ostringstream msg;
        msg << "split_valid: fraction " << fraction << " of " << v
            << " valid entries leaves an empty training or label set";
        throw std::invalid_argument(msg.str());
    }

    std::mt19937_64 rng(seed);
    std::shuffle(cells.begin(), cells.end(), rng);

    ValidSplit split{ChannelGrid(grid.spec), Mask::Zero(grid.rows(), grid.cols())};
    for (Index n = 0; n < v; ++n) {
        const Cell c = cells[static_cast<std::size_t>(n)];
        if (n < n_train) {
            split.train.values(c.row, c.col) = grid.values(c.row, c.col);
            split.train.mask(c.row, c.col) = 1;
        } else {
            split.label_mask(c.row, c.col) = 1;
        }
    }
    return split;
}

Mask random_cells(Index rows, Index cols, Index count, std::uint64_t seed) {
    const Index total = rows * cols;
    if (count < 0 || count > total) {
        throw std::invalid_argument("random_cells: count outside [0, rows*cols]");
    }
    std::vector<Index> order(static_cast<std::size_t>(total));
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    Mask mask = Mask::Zero(rows, cols);
    for (Index n = 0; n < count; ++n) {
        mask.data()[order[static_cast<std::size_t>(n)]] = 1;
    }
    return mask;
}

} // namespace chandb
