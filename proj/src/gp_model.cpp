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

#include "chandb/gp_model.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace chandb {

namespace {

struct KrigingSolution {
    double estimate = 0.0;  // a^T C^{-1} r
    double explained = 0.0; // a^T C^{-1} a
};

// Solves C w = a by Cholesky; on failure adds `jitter` to the diagonal once.
KrigingSolution solve_kriging(Eigen::MatrixXd& cov, const Eigen::VectorXd& a, const Eigen::VectorXd& r,
                              double jitter) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) {
        cov.diagonal().array() += jitter;
        llt.compute(cov);
        if (llt.info() != Eigen::Success) {
            throw NumericalError("MMSE: neighbor covariance is singular even after jitter");
        }
    }
    const Eigen::VectorXd w = llt.solve(a);
    return {w.dot(r), w.dot(a)};
}

double clamp_mse(double total, double explained) {
    return std::min(total, std::max(0.0, total - explained));
}

// exp(-sqrt(dr^2 + dc^2) / d0) for integer offsets |dr|, |dc| <= reach.
class OffsetCorrelation {
public:
    OffsetCorrelation(Index reach, double d0) : reach_(reach), table_(reach + 1, reach + 1) {
        for (Index dr = 0; dr <= reach; ++dr) {
            for (Index dc = 0; dc <= reach; ++dc) {
                table_(dr, dc) = std::exp(-std::sqrt(static_cast<double>(dr * dr + dc * dc)) / d0);
            }
        }
    }

    double operator()(Index dr, Index dc) const { return table_(std::abs(dr), std::abs(dc)); }

private:
    Index reach_;
    Matrix table_;
};

void check_cell(const ChannelGrid& grid, Cell c) {
    if (c.row < 0 || c.col < 0 || c.row >= grid.rows() || c.col >= grid.cols()) {
        throw std::out_of_range("MMSE: target cell outside the grid");
    }
}

} // namespace

void GpParams::validate() const {
    if (!(total_var >= 0.0)) {
        throw std::invalid_argument("GpParams: total_var must be non-negative");
    }
    if (!(d0 > 0.0)) {
        throw std::invalid_argument("GpParams: d0 must be positive");
    }
    if (sigma_psi_sq && (!(*sigma_psi_sq >= 0.0) || *sigma_psi_sq > total_var)) {
        throw std::invalid_argument("GpParams: sigma_psi_sq must lie in [0, total_var]");
    }
    if (!std::isfinite(g0) || !std::isfinite(eta)) {
        throw std::invalid_argument("GpParams: non-finite path-loss parameters");
    }
}

double path_loss_mean(double g0, double eta, const GridSpec& spec, BsPosition bs, Cell cell) {
    const double dr = static_cast<double>(cell.row) - bs.row;
    const double dc = static_cast<double>(cell.col) - bs.col;
    const double dist = spec.q() * std::sqrt(dr * dr + dc * dc);
    if (!(dist > 0.0)) {
        std::ostringstream msg;
        msg << "path loss undefined at cell (" << cell.row << ", " << cell.col
            << "): it coincides with the base station";
        throw std::invalid_argument(msg.str());
    }
    return g0 - 10.0 * eta * std::log10(dist);
}

PathLossFit fit_pathloss(const ChannelGrid& grid, BsPosition bs) {
    const auto cells = valid_cells(grid.mask);
    if (cells.size() < 2) {
        throw std::invalid_argument("fit_pathloss: need at least two valid entries");
    }
    // Regressor x = -10 log10(L); model y = g0 + eta x.
    Eigen::VectorXd x(static_cast<Index>(cells.size()));
    Eigen::VectorXd y(x.size());
    for (Index k = 0; k < x.size(); ++k) {
        const Cell c = cells[static_cast<std::size_t>(k)];
        x(k) = path_loss_mean(0.0, 1.0, grid.spec, bs, c);
        y(k) = grid.values(c.row, c.col);
    }
    // Closed-form solution of the 2x2 normal equations (L^T L) p = L^T y,
    // written in centred form.
    const double x_mean = x.mean();
    const double y_mean = y.mean();
    const Eigen::ArrayXd xc = x.array() - x_mean;
    const double sxx = xc.square().sum();
    if (!(sxx > 1e-12 * static_cast<double>(x.size()) * std::max(1.0, x_mean * x_mean))) {
        throw std::invalid_argument("fit_pathloss: regressor matrix is rank deficient "
                                    "(all valid entries equidistant from the base station)");
    }
    const double eta = (xc * (y.array() - y_mean)).sum() / sxx;
    return {y_mean - eta * x_mean, eta};
}

ResidualFading residual_fading(const ChannelGrid& grid, double g0, double eta, BsPosition bs) {
    ResidualFading out;
    out.cells = valid_cells(grid.mask);
    out.residuals.reserve(out.cells.size());
    for (const Cell c : out.cells) {
        out.residuals.push_back(grid.values(c.row, c.col) - path_loss_mean(g0, eta, grid.spec, bs, c));
    }
    if (!out.residuals.empty()) {
        const Eigen::Map<const Eigen::ArrayXd> r(out.residuals.data(), static_cast<Index>(out.residuals.size()));
        out.total_var = (r - r.mean()).square().mean();
    }
    return out;
}

MmseEstimate mmse_estimate(const GpParams& params, std::span<const Point> points,
                           std::span<const double> residuals, Point target) {
    params.validate();
    if (points.size() != residuals.size()) {
        throw std::invalid_argument("mmse_estimate: points and residuals differ in length");
    }
    MmseEstimate est;
    est.neighbors = static_cast<Index>(points.size());
    est.mse = params.total_var;
    if (points.empty()) {
        est.fallback = true;
        return est;
    }
    const double shadow = params.shadow_var();
    if (shadow == 0.0) {
        return est;
    }
    const auto n = static_cast<Index>(points.size());
    const auto corr = [&](Point p, Point q) {
        return std::exp(-std::hypot(p.row - q.row, p.col - q.col) / params.d0);
    };
    Eigen::MatrixXd cov(n, n);
    Eigen::VectorXd a(n);
    Eigen::VectorXd r(n);
    for (Index i = 0; i < n; ++i) {
        const Point pi = points[static_cast<std::size_t>(i)];
        cov(i, i) = params.total_var;
        for (Index j = 0; j < i; ++j) {
            const double v = shadow * corr(pi, points[static_cast<std::size_t>(j)]);
            cov(i, j) = v;
            cov(j, i) = v;
        }
        a(i) = shadow * corr(pi, target);
        r(i) = residuals[static_cast<std::size_t>(i)];
    }
    const auto sol = solve_kriging(cov, a, r, 1e-8 * params.total_var);
    est.value = sol.estimate;
    est.mse = clamp_mse(params.total_var, sol.explained);
    return est;
}

MmseEstimate mmse_predict(const ChannelGrid& grid, const GpParams& params, BsPosition bs, Neighborhood nbhd,
                          Cell target, bool leave_one_out) {
    check_cell(grid, target);
    if (nbhd.n_range < 1) {
        throw std::invalid_argument("Neighborhood: n_range must be at least 1");
    }
    std::vector<Point> points;
    std::vector<double> residuals;
    const Index r0 = std::max<Index>(0, target.row - nbhd.n_range);
    const Index r1 = std::min(grid.rows() - 1, target.row + nbhd.n_range);
    const Index c0 = std::max<Index>(0, target.col - nbhd.n_range);
    const Index c1 = std::min(grid.cols() - 1, target.col + nbhd.n_range);
    for (Index i = r0; i <= r1; ++i) {
        for (Index j = c0; j <= c1; ++j) {
            if (grid.mask(i, j) == 0 || (leave_one_out && i == target.row && j == target.col)) {
                continue;
            }
            points.push_back({static_cast<double>(i), static_cast<double>(j)});
            residuals.push_back(grid.values(i, j) - path_loss_mean(params.g0, params.eta, grid.spec, bs, {i, j}));
        }
    }
    auto est = mmse_estimate(params, points, residuals,
                             {static_cast<double>(target.row), static_cast<double>(target.col)});
    est.value += path_loss_mean(params.g0, params.eta, grid.spec, bs, target);
    return est;
}

double predict_mse(const ChannelGrid& grid, const GpParams& params, BsPosition bs, Neighborhood nbhd,
                   Cell target) {
    return mmse_predict(grid, params, bs, nbhd, target).mse;
}

std::vector<double> D0Search::lattice() const {
    std::vector<double> out;
    if (!(step > 0.0) || !(d_min > 0.0) || !(d_max >= d_min) || !std::isfinite(d_max)) {
        return out;
    }
    for (Index k = 0;; ++k) {
        const double d = d_min + static_cast<double>(k) * step;
        if (d > d_max + 1e-9 * step) {
            break;
        }
        out.push_back(d);
    }
    return out;
}

D0Fit fit_d0(const ChannelGrid& grid, double g0, double eta, double total_var, BsPosition bs,
             Neighborhood nbhd, const D0Search& search, std::optional<double> shadow_fraction) {
    D0Fit fit;
    fit.candidates = search.lattice();
    if (fit.candidates.empty()) {
        throw std::invalid_argument("fit_d0: empty d0 search lattice");
    }
    if (nbhd.n_range < 1) {
        throw std::invalid_argument("Neighborhood: n_range must be at least 1");
    }
    const double fraction = shadow_fraction.value_or(1.0);
    if (!(fraction >= 0.0 && fraction <= 1.0)) {
        throw std::invalid_argument("fit_d0: shadow fraction must lie in [0, 1]");
    }
    const auto fading = residual_fading(grid, g0, eta, bs);
    const auto v = static_cast<Index>(fading.cells.size());
    if (v == 0) {
        throw std::invalid_argument("fit_d0: grid has no valid entries");
    }
    const double shadow = fraction * total_var;

    Matrix resid = Matrix::Zero(grid.rows(), grid.cols());
    for (Index k = 0; k < v; ++k) {
        const Cell c = fading.cells[static_cast<std::size_t>(k)];
        resid(c.row, c.col) = fading.residuals[static_cast<std::size_t>(k)];
    }

    // Leave-one-out neighbor sets, stored as offsets from the target.
    struct Offset {
        Index dr;
        Index dc;
        double residual;
    };
    std::vector<std::vector<Offset>> neighbors(static_cast<std::size_t>(v));
    for (Index k = 0; k < v; ++k) {
        const Cell t = fading.cells[static_cast<std::size_t>(k)];
        for (Index i = std::max<Index>(0, t.row - nbhd.n_range); i <= std::min(grid.rows() - 1, t.row + nbhd.n_range); ++i) {
            for (Index j = std::max<Index>(0, t.col - nbhd.n_range); j <= std::min(grid.cols() - 1, t.col + nbhd.n_range); ++j) {
                if (grid.mask(i, j) != 0 && !(i == t.row && j == t.col)) {
                    neighbors[static_cast<std::size_t>(k)].push_back({i - t.row, j - t.col, resid(i, j)});
                }
            }
        }
    }

    Eigen::MatrixXd cov;
    Eigen::VectorXd a;
    Eigen::VectorXd r;
    double best = INFINITY;
    for (const double d0 : fit.candidates) {
        const OffsetCorrelation corr(2 * nbhd.n_range, d0);
        double sum_sq = 0.0;
        for (Index k = 0; k < v; ++k) {
            const auto& nb = neighbors[static_cast<std::size_t>(k)];
            const double truth = fading.residuals[static_cast<std::size_t>(k)];
            double pred = 0.0;
            if (!nb.empty() && shadow > 0.0) {
                const auto n = static_cast<Index>(nb.size());
                cov.resize(n, n);
                a.resize(n);
                r.resize(n);
                for (Index i = 0; i < n; ++i) {
                    const auto& p = nb[static_cast<std::size_t>(i)];
                    cov(i, i) = total_var;
                    for (Index j = 0; j < i; ++j) {
                        const auto& q = nb[static_cast<std::size_t>(j)];
                        const double c = shadow * corr(p.dr - q.dr, p.dc - q.dc);
                        cov(i, j) = c;
                        cov(j, i) = c;
                    }
                    a(i) = shadow * corr(p.dr, p.dc);
                    r(i) = p.residual;
                }
                pred = solve_kriging(cov, a, r, 1e-8 * total_var).estimate;
            }
            sum_sq += (pred - truth) * (pred - truth);
        }
        const double mse = sum_sq / static_cast<double>(v);
        fit.total_mse.push_back(mse);
        if (mse < best) {
            best = mse;
            fit.d0 = d0;
        }
    }
    return fit;
}

GpParams fit_gp(const ChannelGrid& grid, BsPosition bs, Neighborhood nbhd, const D0Search& search,
                std::optional<double> shadow_fraction) {
    const auto pl = fit_pathloss(grid, bs);
    const auto fading = residual_fading(grid, pl.g0, pl.eta, bs);
    const auto d0 = fit_d0(grid, pl.g0, pl.eta, fading.total_var, bs, nbhd, search, shadow_fraction);
    GpParams params{pl.g0, pl.eta, d0.d0, fading.total_var, std::nullopt};
    if (shadow_fraction) {
        params.sigma_psi_sq = *shadow_fraction * fading.total_var;
    }
    return params;
}

GpInterpolation gp_interpolate(const ChannelGrid& grid, const GpParams& params, BsPosition bs,
                               Neighborhood nbhd) {
    params.validate();
    GpInterpolation out{FilledGrid{grid.spec, grid.values, grid.mask}, Matrix::Zero(grid.rows(), grid.cols()),
                        Mask::Zero(grid.rows(), grid.cols())};
    for (Index i = 0; i < grid.rows(); ++i) {
        for (Index j = 0; j < grid.cols(); ++j) {
            if (grid.mask(i, j) != 0) {
                continue;
            }
            const auto est = mmse_predict(grid, params, bs, nbhd, {i, j});
            out.grid.values(i, j) = est.value;
            out.mse(i, j) = est.mse;
            out.fallback(i, j) = est.fallback ? 1 : 0;
        }
    }
    return out;
}

} // namespace chandb
