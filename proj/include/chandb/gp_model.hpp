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

#include <optional>
#include <span>
#include <vector>

namespace chandb {

/// Gaussian-process channel model.
///
/// Only the total fading variance is estimated from data. The shadowing share
/// of it defaults to all of it (no white fading) unless `sigma_psi_sq` is set.
struct GpParams {
    double g0 = 0.0;
    double eta = 0.0;
    double d0 = 1.0;        ///< correlation distance [cells]
    double total_var = 0.0; ///< sigma_psi^2 + sigma_zeta^2 [dB^2]
    std::optional<double> sigma_psi_sq;

    double shadow_var() const { return sigma_psi_sq.value_or(total_var); }
    double fading_var() const { return total_var - shadow_var(); }
    void validate() const;
};

/// Predictions use valid cells with |row - i| <= n_range and |col - j| <= n_range.
struct Neighborhood {
    Index n_range = 4;
};

struct PathLossFit {
    double g0 = 0.0;
    double eta = 0.0;
};

/// Mean gain g0 - 10 eta log10(L) of one cell, L in meters.
double path_loss_mean(double g0, double eta, const GridSpec& spec, BsPosition bs, Cell cell);

/// Least-squares fit of g0 and eta over the valid cells.
PathLossFit fit_pathloss(const ChannelGrid& grid, BsPosition bs);

struct ResidualFading {
    std::vector<Cell> cells;
    std::vector<double> residuals;
    double total_var = 0.0; ///< population variance of the residuals
};

ResidualFading residual_fading(const ChannelGrid& grid, double g0, double eta, BsPosition bs);

/// Location in fractional cell units.
struct Point {
    double row = 0.0;
    double col = 0.0;
};

struct MmseEstimate {
    double value = 0.0; ///< prediction (residual space for mmse_estimate, dB for mmse_predict)
    double mse = 0.0;   ///< predicted mean squared error [dB^2]
    Index neighbors = 0;
    bool fallback = false; ///< no neighbors: the prior mean was returned
};

/// Linear MMSE estimate of a zero-mean residual at `target` from residuals
/// observed at `points`. Point coincidences are allowed.
MmseEstimate mmse_estimate(const GpParams& params, std::span<const Point> points,
                           std::span<const double> residuals, Point target);

/// MMSE prediction of one cell from the valid cells of its window. With
/// `leave_one_out` the target's own entry is excluded from the valid set.
MmseEstimate mmse_predict(const ChannelGrid& grid, const GpParams& params, BsPosition bs, Neighborhood nbhd,
                          Cell target, bool leave_one_out = false);

double predict_mse(const ChannelGrid& grid, const GpParams& params, BsPosition bs, Neighborhood nbhd,
                   Cell target);

struct D0Search {
    double d_min = 1.0;
    double d_max = 50.0;
    double step = 1.0;

    std::vector<double> lattice() const;
};

struct D0Fit {
    double d0 = 0.0;
    std::vector<double> candidates;
    std::vector<double> total_mse; ///< leave-one-out mean squared residual error per candidate
};

/// One-dimensional search for the correlation distance minimizing the
/// leave-one-out prediction error of the residuals. Ties go to the smaller d0.
/// `shadow_fraction` is sigma_psi^2 / total_var (defaults to 1).
D0Fit fit_d0(const ChannelGrid& grid, double g0, double eta, double total_var, BsPosition bs,
             Neighborhood nbhd, const D0Search& search, std::optional<double> shadow_fraction = {});

/// Runs fit_pathloss, residual_fading and fit_d0 in sequence.
GpParams fit_gp(const ChannelGrid& grid, BsPosition bs, Neighborhood nbhd, const D0Search& search,
                std::optional<double> shadow_fraction = {});

struct GpInterpolation {
    FilledGrid grid;
    Matrix mse;    ///< predicted MSE per cell (0 on valid cells)
    Mask fallback; ///< cells predicted from the path-loss mean alone
};

GpInterpolation gp_interpolate(const ChannelGrid& grid, const GpParams& params, BsPosition bs,
                               Neighborhood nbhd);

} // namespace chandb
