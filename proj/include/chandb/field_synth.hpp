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

namespace chandb {

/// Statistical channel model: log-distance path loss, exponentially
/// correlated log-normal shadowing and white non-shadowing fading.
struct FieldParams {
    double g0 = 0.0;         ///< antenna-gain constant [dB]
    double eta = 3.5;        ///< path-loss exponent
    double d0 = 6.0;         ///< shadowing correlation distance [cells]
    double sigma_psi = 8.0;  ///< shadowing std [dB]
    double sigma_zeta = 2.0; ///< non-shadowing fading std [dB]
    BsPosition bs;           ///< base station [cells]

    void validate() const;
};

/// How shadowing draws are generated.
///
/// Grids up to `max_dense_cells` use one exact Cholesky factor of the full
/// covariance. Larger grids require `tiled`: tiles are drawn in raster order,
/// each conditioned on the already drawn cells within `halo_factor * d0`.
struct ShadowingOptions {
    Index max_dense_cells = 10000;
    bool tiled = false;
    Index tile_size = 32;
    double halo_factor = 3.0;
};

/// g0 - 10 eta log10(L) per cell, L = metric distance from cell centre to BS.
Matrix mean_field(const FieldParams& params, const GridSpec& spec);

/// sigma_psi_sq * exp(-d / d0) between all cells of a rows x cols grid in
/// row-major order; d in cell units.
Eigen::MatrixXd exponential_covariance(Index rows, Index cols, double sigma_psi_sq, double d0);

/// Draws psi + zeta fields for one parameter set; the covariance factor is
/// computed once and reused across seeds.
class ShadowingSampler {
public:
    ShadowingSampler(const FieldParams& params, Index rows, Index cols, const ShadowingOptions& options = {});

    Matrix draw(std::uint64_t seed) const;

    bool tiled() const { return tiled_; }

private:
    Matrix draw_tiled(std::uint64_t seed) const;

    FieldParams params_;
    Index rows_;
    Index cols_;
    ShadowingOptions options_;
    bool tiled_ = false;
    Eigen::MatrixXd factor_; // lower Cholesky factor (dense mode)
};

Matrix sample_shadowing(const FieldParams& params, const GridSpec& spec, std::uint64_t seed,
                        const ShadowingOptions& options = {});

/// mean_field + sample_shadowing.
Matrix synth_field(const FieldParams& params, const GridSpec& spec, std::uint64_t seed,
                   const ShadowingOptions& options = {});

} // namespace chandb
