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

#include "chandb/knn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>

namespace chandb {

Weighting parse_weighting(std::string_view name) {
    if (name == "uniform") {
        return Weighting::uniform;
    }
    if (name == "distance" || name == "inverse-distance") {
        return Weighting::inverse_distance;
    }
    throw std::invalid_argument("unknown KNN weighting '" + std::string(name) + "'");
}

std::string_view to_string(Weighting w) {
    return w == Weighting::uniform ? "uniform" : "distance";
}

NeighborQuery nearest_valid(const Mask& mask, Cell target, int k) {
    if (k < 1) {
        throw std::invalid_argument("nearest_valid: k must be at least 1");
    }
    const Index rows = mask.rows();
    const Index cols = mask.cols();
    if (target.row < 0 || target.col < 0 || target.row >= rows || target.col >= cols) {
        throw std::out_of_range("nearest_valid: target outside the grid");
    }
    const auto closer = [](const Neighbor& a, const Neighbor& b) {
        if (a.distance_sq != b.distance_sq) {
            return a.distance_sq < b.distance_sq;
        }
        return a.cell < b.cell;
    };
    const auto consider = [&](std::vector<Neighbor>& found, Index i, Index j) {
        if (i < 0 || j < 0 || i >= rows || j >= cols || mask(i, j) == 0) {
            return;
        }
        const std::int64_t dr = i - target.row;
        const std::int64_t dc = j - target.col;
        found.push_back({{i, j}, dr * dr + dc * dc, 0.0});
    };

    std::vector<Neighbor> found;
    const auto ku = static_cast<std::size_t>(k);
    const Index max_ring = std::max({target.row, rows - 1 - target.row, target.col, cols - 1 - target.col});
    for (Index ring = 0; ring <= max_ring; ++ring) {
        if (ring == 0) {
            consider(found, target.row, target.col);
        } else {
            for (Index j = target.col - ring; j <= target.col + ring; ++j) {
                consider(found, target.row - ring, j);
                consider(found, target.row + ring, j);
            }
            for (Index i = target.row - ring + 1; i <= target.row + ring - 1; ++i) {
                consider(found, i, target.col - ring);
                consider(found, i, target.col + ring);
            }
        }
        if (found.size() >= ku) {
            std::nth_element(found.begin(), found.begin() + static_cast<std::ptrdiff_t>(ku - 1), found.end(), closer);
            // Every cell beyond this ring is at distance >= ring + 1; a strict
            // bound keeps equal-distance tie candidates in play.
            const std::int64_t kth = found[ku - 1].distance_sq;
            if (kth < (ring + 1) * (ring + 1)) {
                break;
            }
        }
    }

    std::sort(found.begin(), found.end(), closer);
    NeighborQuery q;
    q.truncated = found.size() < ku;
    if (found.size() > ku) {
        found.resize(ku);
    }
    for (auto& n : found) {
        n.distance = std::sqrt(static_cast<double>(n.distance_sq));
    }
    q.neighbors = std::move(found);
    return q;
}

FilledGrid knn_fill(const ChannelGrid& grid, const KnnConfig& cfg) {
    if (cfg.k < 1) {
        throw std::invalid_argument("knn_fill: k must be at least 1");
    }
    if (grid.valid_count() == 0) {
        throw std::invalid_argument("knn_fill: grid has no valid cells");
    }
    FilledGrid out{grid.spec, grid.values, grid.mask};
    for (Index i = 0; i < grid.rows(); ++i) {
        for (Index j = 0; j < grid.cols(); ++j) {
            if (grid.mask(i, j) != 0) {
                continue;
            }
            const auto q = nearest_valid(grid.mask, {i, j}, cfg.k);
            double num = 0.0;
            double den = 0.0;
            for (const auto& n : q.neighbors) {
                assert(n.distance_sq > 0);
                const double w = cfg.weighting == Weighting::uniform ? 1.0 : 1.0 / n.distance;
                num += w * grid.values(n.cell.row, n.cell.col);
                den += w;
            }
            out.values(i, j) = num / den;
        }
    }
    return out;
}

} // namespace chandb
