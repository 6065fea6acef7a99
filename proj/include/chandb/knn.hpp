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

#include "chandb/grid.hpp"

#include <cstdint>
#include <string_view>
#include <vector>

namespace chandb {

enum class Weighting { uniform, inverse_distance };

Weighting parse_weighting(std::string_view name);
std::string_view to_string(Weighting w);

struct KnnConfig {
    int k = 5;
    Weighting weighting = Weighting::inverse_distance;
};

struct Neighbor {
    Cell cell;
    std::int64_t distance_sq = 0; ///< squared cell-index distance
    double distance = 0.0;
};

struct NeighborQuery {
    std::vector<Neighbor> neighbors; ///< ascending by (distance, row, col)
    bool truncated = false;          ///< fewer than k valid cells exist
};

/// The k valid cells nearest to `target`, found by an expanding square-ring
/// search. Ties are broken by (row, col) ascending.
NeighborQuery nearest_valid(const Mask& mask, Cell target, int k);

/// Fills every invalid cell with the weighted mean of its min(k, V) nearest
/// valid cells; valid cells are copied through.
FilledGrid knn_fill(const ChannelGrid& grid, const KnnConfig& cfg);

} // namespace chandb
