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

#include "chandb/field_synth.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace chandb {

namespace {

double cell_distance(Index r1, Index c1, Index r2, Index c2) {
    const auto dr = static_cast<double>(r1 - r2);
    const auto dc = static_cast<double>(c1 - c2);
    return std::sqrt(dr * dr + dc * dc);
}

Eigen::MatrixXd covariance_between(const std::vector<Cell>& a, const std::vector<Cell>& b, double var,
                                   double d0) {
    Eigen::MatrixXd c(static_cast<Index>(a.size()), static_cast<Index>(b.size()));
    for (Index i = 0; i < c.rows(); ++i) {
        const Cell ca = a[static_cast<std::size_t>(i)];
        for (Index j = 0; j < c.cols(); ++j) {
            const Cell cb = b[static_cast<std::size_t>(j)];
            c(i, j) = var * std::exp(-cell_distance(ca.row, ca.col, cb.row, cb.col) / d0);
        }
    }
    return c;
}

// Lower Cholesky factor of `cov`, retrying once with 1e-8 * var added to the
// diagonal. `cov` is consumed.
Eigen::MatrixXd cholesky_with_jitter(Eigen::MatrixXd cov, double var, const char* what) {
    const Eigen::VectorXd original_diag = cov.diagonal();
    {
        Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(cov);
        if (llt.info() == Eigen::Success) {
            cov.triangularView<Eigen::StrictlyUpper>().setZero();
            return cov;
        }
    }
    // The in-place factorization clobbered the lower triangle; the strict
    // upper triangle still holds the original symmetric entries.
    cov.triangularView<Eigen::StrictlyLower>() = cov.transpose().triangularView<Eigen::StrictlyLower>();
    cov.diagonal() = original_diag.array() + 1e-8 * var;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(std::string(what) + ": covariance factorization failed after jitter");
    }
    cov.triangularView<Eigen::StrictlyUpper>().setZero();
    return cov;
}

} // namespace

void FieldParams::validate() const {
    if (!(sigma_psi >= 0.0) || !(sigma_zeta >= 0.0)) {
        throw std::invalid_argument("FieldParams: standard deviations must be non-negative");
    }
    if (!(d0 > 0.0)) {
        throw std::invalid_argument("FieldParams: correlation distance d0 must be positive");
    }
    if (!std::isfinite(g0) || !std::isfinite(eta) || !std::isfinite(bs.row) || !std::isfinite(bs.col)) {
        throw std::invalid_argument("FieldParams: non-finite parameter");
    }
}

Matrix mean_field(const FieldParams& params, const GridSpec& spec) {
    params.validate();
    Matrix out(spec.rows(), spec.cols());
    for (Index i = 0; i < spec.rows(); ++i) {
        for (Index j = 0; j < spec.cols(); ++j) {
            const double dr = static_cast<double>(i) - params.bs.row;
            const double dc = static_cast<double>(j) - params.bs.col;
            const double dist = spec.q() * std::sqrt(dr * dr + dc * dc);
            if (!(dist > 0.0)) {
                std::ostringstream msg;
                msg << "mean_field: cell (" << i << ", " << j << ") coincides with the base station";
                throw std::invalid_argument(msg.str());
            }
            out(i, j) = params.g0 - 10.0 * params.eta * std::log10(dist);
        }
    }
    return out;
}

Eigen::MatrixXd exponential_covariance(Index rows, Index cols, double sigma_psi_sq, double d0) {
    const Index n = rows * cols;
    Eigen::MatrixXd cov(n, n);
    for (Index a = 0; a < n; ++a) {
        const Index ra = a / cols;
        const Index ca = a % cols;
        for (Index b = a; b < n; ++b) {
            const double v = sigma_psi_sq * std::exp(-cell_distance(ra, ca, b / cols, b % cols) / d0);
            cov(a, b) = v;
            cov(b, a) = v;
        }
    }
    return cov;
}

ShadowingSampler::ShadowingSampler(const FieldParams& params, Index rows, Index cols,
                                   const ShadowingOptions& options)
    : params_(params), rows_(rows), cols_(cols), options_(options) {
    params_.validate();
    if (rows < 1 || cols < 1) {
        throw std::invalid_argument("ShadowingSampler: empty grid");
    }
    const Index n = rows * cols;
    if (n > options.max_dense_cells) {
        if (!options.tiled) {
            std::ostringstream msg;
            msg << "sample_shadowing: " << n << " cells exceed the dense limit of "
                << options.max_dense_cells << "; enable tiled generation";
            throw std::invalid_argument(msg.str());
        }
        if (options.tile_size < 1 || !(options.halo_factor >= 0.0)) {
            throw std::invalid_argument("ShadowingSampler: invalid tile configuration");
        }
        tiled_ = true;
        return;
    }
    const double var = params.sigma_psi * params.sigma_psi;
    if (var > 0.0) {
        factor_ = cholesky_with_jitter(exponential_covariance(rows, cols, var, params.d0), var, "sample_shadowing");
    }
}

Matrix ShadowingSampler::draw(std::uint64_t seed) const {
    if (tiled_) {
        return draw_tiled(seed);
    }
    const Index n = rows_ * cols_;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    Eigen::VectorXd z(n);
    for (Index i = 0; i < n; ++i) {
        z(i) = normal(rng);
    }
    Eigen::VectorXd field = Eigen::VectorXd::Zero(n);
    if (factor_.size() > 0) {
        field = factor_.triangularView<Eigen::Lower>() * z;
    }
    for (Index i = 0; i < n; ++i) {
        field(i) += params_.sigma_zeta * normal(rng);
    }
    return Eigen::Map<const Matrix>(field.data(), rows_, cols_);
}

Matrix ShadowingSampler::draw_tiled(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double var = params_.sigma_psi * params_.sigma_psi;
    const Index ts = options_.tile_size;
    const auto halo = static_cast<Index>(std::ceil(options_.halo_factor * params_.d0));
    const Index tiles_r = (rows_ + ts - 1) / ts;
    const Index tiles_c = (cols_ + ts - 1) / ts;
    const auto tile_order = [&](Index r, Index c) { return (r / ts) * tiles_c + c / ts; };

    Matrix psi = Matrix::Zero(rows_, cols_);
    for (Index tr = 0; tr < tiles_r; ++tr) {
        for (Index tc = 0; tc < tiles_c; ++tc) {
            const Index r0 = tr * ts;
            const Index c0 = tc * ts;
            const Index r1 = std::min(rows_, r0 + ts);
            const Index c1 = std::min(cols_, c0 + ts);
            std::vector<Cell> block;
            for (Index r = r0; r < r1; ++r) {
                for (Index c = c0; c < c1; ++c) {
                    block.push_back({r, c});
                }
            }
            Eigen::VectorXd z(static_cast<Index>(block.size()));
            for (Index i = 0; i < z.size(); ++i) {
                z(i) = normal(rng);
            }
            if (var == 0.0) {
                continue;
            }

            const Index current = tr * tiles_c + tc;
            std::vector<Cell> cond;
            for (Index r = std::max<Index>(0, r0 - halo); r < std::min(rows_, r1 + halo); ++r) {
                for (Index c = std::max<Index>(0, c0 - halo); c < std::min(cols_, c1 + halo); ++c) {
                    if (tile_order(r, c) < current) {
                        cond.push_back({r, c});
                    }
                }
            }

            Eigen::MatrixXd c_bb = covariance_between(block, block, var, params_.d0);
            Eigen::VectorXd mean = Eigen::VectorXd::Zero(z.size());
            if (!cond.empty()) {
                const Eigen::MatrixXd c_aa = covariance_between(cond, cond, var, params_.d0);
                const Eigen::MatrixXd c_ab = covariance_between(cond, block, var, params_.d0);
                const Eigen::MatrixXd l_aa = cholesky_with_jitter(c_aa, var, "tiled shadowing");
                const auto l_view = l_aa.triangularView<Eigen::Lower>();
                // W = L_aa^{-1} C_ab, so C_ba C_aa^{-1} C_ab = W^T W.
                const Eigen::MatrixXd w = l_view.solve(c_ab);
                Eigen::VectorXd psi_a(static_cast<Index>(cond.size()));
                for (Index i = 0; i < psi_a.size(); ++i) {
                    psi_a(i) = psi(cond[static_cast<std::size_t>(i)].row, cond[static_cast<std::size_t>(i)].col);
                }
                mean = w.transpose() * l_view.solve(psi_a);
                c_bb.noalias() -= w.transpose() * w;
            }
            const Eigen::MatrixXd l_bb = cholesky_with_jitter(std::move(c_bb), var, "tiled shadowing");
            const Eigen::VectorXd draw = mean + l_bb.triangularView<Eigen::Lower>() * z;
            for (Index i = 0; i < draw.size(); ++i) {
                psi(block[static_cast<std::size_t>(i)].row, block[static_cast<std::size_t>(i)].col) = draw(i);
            }
        }
    }
    for (Index i = 0; i < psi.size(); ++i) {
        psi.data()[i] += params_.sigma_zeta * normal(rng);
    }
    return psi;
}

Matrix sample_shadowing(const FieldParams& params, const GridSpec& spec, std::uint64_t seed,
                        const ShadowingOptions& options) {
    return ShadowingSampler(params, spec.rows(), spec.cols(), options).draw(seed);
}

Matrix synth_field(const FieldParams& params, const GridSpec& spec, std::uint64_t seed,
                   const ShadowingOptions& options) {
    return mean_field(params, spec) + sample_shadowing(params, spec, seed, options);
}

} // namespace chandb
