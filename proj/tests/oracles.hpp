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

// Straightforward reference implementations used to check the library.

#include "chandb/convnet.hpp"
#include "chandb/grid.hpp"
#include "chandb/knn.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <tuple>
#include <vector>

namespace oracle {

using chandb::Cell;
using chandb::Index;
using chandb::Mask;
using chandb::Matrix;

struct DenseMmse {
    double residual = 0.0; // predicted residual (subtract the mean field beforehand)
    double mse = 0.0;
};

// Kriging over every listed observation with a general LU solve.
inline DenseMmse dense_mmse(const std::vector<std::pair<double, double>>& points, const std::vector<double>& residuals,
                            std::pair<double, double> target, double shadow_var, double total_var, double d0) {
    const auto n = static_cast<Index>(points.size());
    Eigen::MatrixXd c(n, n);
    Eigen::VectorXd a(n);
    Eigen::VectorXd r(n);
    for (Index i = 0; i < n; ++i) {
        for (Index j = 0; j < n; ++j) {
            const double d = std::hypot(points[i].first - points[j].first, points[i].second - points[j].second);
            c(i, j) = i == j ? total_var : shadow_var * std::exp(-d / d0);
        }
        const double dt = std::hypot(points[i].first - target.first, points[i].second - target.second);
        a(i) = shadow_var * std::exp(-dt / d0);
        r(i) = residuals[i];
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(c);
    const Eigen::VectorXd w = lu.solve(a);
    return {w.dot(r), total_var - w.dot(a)};
}

struct ScanNeighbor {
    Cell cell;
    std::int64_t d2;
};

// Every valid cell sorted by (squared distance, row, col), truncated to k.
inline std::vector<ScanNeighbor> scan_nearest(const Mask& mask, Cell target, int k) {
    std::vector<ScanNeighbor> all;
    for (Index i = 0; i < mask.rows(); ++i) {
        for (Index j = 0; j < mask.cols(); ++j) {
            if (mask(i, j) != 0) {
                const std::int64_t dr = i - target.row;
                const std::int64_t dc = j - target.col;
                all.push_back({{i, j}, dr * dr + dc * dc});
            }
        }
    }
    const auto keep = std::min(all.size(), static_cast<std::size_t>(k));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      [](const ScanNeighbor& a, const ScanNeighbor& b) {
                          return std::tie(a.d2, a.cell.row, a.cell.col) < std::tie(b.d2, b.cell.row, b.cell.col);
                      });
    all.resize(keep);
    return all;
}

inline Matrix scan_knn_fill(const chandb::ChannelGrid& grid, int k, chandb::Weighting weighting) {
    Matrix out = grid.values;
    for (Index i = 0; i < grid.rows(); ++i) {
        for (Index j = 0; j < grid.cols(); ++j) {
            if (grid.mask(i, j) != 0) {
                continue;
            }
            double num = 0.0;
            double den = 0.0;
            for (const auto& nb : scan_nearest(grid.mask, {i, j}, k)) {
                const double w = weighting == chandb::Weighting::uniform ? 1.0 : 1.0 / std::sqrt(static_cast<double>(nb.d2));
                num += w * grid.values(nb.cell.row, nb.cell.col);
                den += w;
            }
            out(i, j) = num / den;
        }
    }
    return out;
}

// Direct nested-loop valid convolution stack.
inline Matrix naive_forward(const chandb::ConvNet& net, const chandb::Tensor3& input) {
    std::vector<double> x(input.data().begin(), input.data().end());
    Index tiers = input.tiers();
    Index rows = input.rows();
    Index cols = input.cols();
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto& spec = net.structure().layers[l];
        const int f = spec.filter_size;
        const int s = spec.stride;
        const Index out_rows = (rows - f) / s + 1;
        const Index out_cols = (cols - f) / s + 1;
        const Index t_out = spec.tiers_out;
        const auto w = net.weights(l);
        const auto b = net.biases(l);
        std::vector<double> y(static_cast<std::size_t>(t_out * out_rows * out_cols));
        for (Index to = 0; to < t_out; ++to) {
            for (Index r = 0; r < out_rows; ++r) {
                for (Index c = 0; c < out_cols; ++c) {
                    double acc = b[to];
                    for (Index ti = 0; ti < tiers; ++ti) {
                        for (int dy = 0; dy < f; ++dy) {
                            for (int dx = 0; dx < f; ++dx) {
                                acc += w[((to * tiers + ti) * f + dy) * f + dx] *
                                       x[(ti * rows + r * s + dy) * cols + c * s + dx];
                            }
                        }
                    }
                    const bool relu = l + 1 < net.layer_count() || net.final_relu();
                    y[(to * out_rows + r) * out_cols + c] = relu ? std::max(acc, 0.0) : acc;
                }
            }
        }
        x = std::move(y);
        tiers = t_out;
        rows = out_rows;
        cols = out_cols;
    }
    return Eigen::Map<const Matrix>(x.data(), rows, cols);
}

inline double loop_masked_loss(const Matrix& out, const Matrix& truth, const Mask& label) {
    double s = 0.0;
    for (Index i = 0; i < out.rows(); ++i) {
        for (Index j = 0; j < out.cols(); ++j) {
            if (label(i, j) != 0) {
                s += (out(i, j) - truth(i, j)) * (out(i, j) - truth(i, j));
            }
        }
    }
    return s;
}

inline double loop_rmse(const Matrix& pred, const Matrix& truth, const Mask& eval) {
    double s = 0.0;
    int n = 0;
    for (Index i = 0; i < pred.rows(); ++i) {
        for (Index j = 0; j < pred.cols(); ++j) {
            if (eval(i, j) != 0) {
                s += (pred(i, j) - truth(i, j)) * (pred(i, j) - truth(i, j));
                ++n;
            }
        }
    }
    return std::sqrt(s / n);
}

// Central differences of the masked loss for every parameter.
inline std::vector<double> numeric_gradient(chandb::ConvNet net, const chandb::Tensor3& input, const Matrix& truth,
                                            const Mask& label, double h) {
    std::vector<double> g(net.parameters().size());
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double keep = net.parameters()[p];
        net.parameters()[p] = keep + h;
        const double up = loop_masked_loss(net.forward(input), truth, label);
        net.parameters()[p] = keep - h;
        const double down = loop_masked_loss(net.forward(input), truth, label);
        net.parameters()[p] = keep;
        g[p] = (up - down) / (2.0 * h);
    }
    return g;
}

inline double relative_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

inline Mask random_mask(Index rows, Index cols, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(p);
    Mask m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = keep(rng) ? 1 : 0;
        }
    }
    return m;
}

inline Matrix random_matrix(Index rows, Index cols, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = u(rng);
        }
    }
    return m;
}

} // namespace oracle
