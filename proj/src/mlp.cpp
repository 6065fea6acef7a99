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

#include "chandb/mlp.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace chandb {

namespace {

using ConstMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

} // namespace

Mlp::Mlp(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) {
        throw std::invalid_argument("Mlp: need at least input and output widths");
    }
    std::size_t offset = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        if (widths_[l] < 1 || widths_[l + 1] < 1) {
            throw std::invalid_argument("Mlp: layer widths must be positive");
        }
        offsets_.push_back(offset);
        offset += static_cast<std::size_t>(widths_[l + 1]) * static_cast<std::size_t>(widths_[l] + 1);
    }
    params_.assign(offset, 0.0);
}

void Mlp::init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(in + out)));
        double* p = params_.data() + offsets_[l];
        for (int i = 0; i < in * out; ++i) {
            p[i] = normal(rng);
        }
        for (int i = 0; i < out; ++i) {
            p[in * out + i] = 0.0;
        }
    }
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
    if (x.rows() != widths_.front()) {
        throw std::invalid_argument("Mlp::forward: input has the wrong width");
    }
    Eigen::MatrixXd a = x;
    const std::size_t n_layers = widths_.size() - 1;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        const ConstMap w(params_.data() + offsets_[l], out, in);
        const Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + in * out, out);
        Eigen::MatrixXd z = w * a;
        z.colwise() += b;
        a = l + 1 < n_layers ? Eigen::MatrixXd(z.array().tanh()) : z;
    }
    return a;
}

double Mlp::loss_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw std::invalid_argument("Mlp::loss_gradient: gradient buffer has the wrong size");
    }
    const std::size_t n_layers = widths_.size() - 1;
    std::vector<Eigen::MatrixXd> acts{x};
    for (std::size_t l = 0; l < n_layers; ++l) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        const ConstMap w(params_.data() + offsets_[l], out, in);
        const Eigen::Map<const Eigen::VectorXd> b(params_.data() + offsets_[l] + in * out, out);
        Eigen::MatrixXd z = w * acts.back();
        z.colwise() += b;
        acts.push_back(l + 1 < n_layers ? Eigen::MatrixXd(z.array().tanh()) : z);
    }
    if (y.rows() != acts.back().rows() || y.cols() != acts.back().cols()) {
        throw std::invalid_argument("Mlp::loss_gradient: target has the wrong shape");
    }
    const Eigen::MatrixXd diff = acts.back() - y;
    const double loss = diff.squaredNorm();
    Eigen::MatrixXd delta = 2.0 * diff; // d loss / d z of the current layer
    for (std::size_t l = n_layers; l-- > 0;) {
        const int in = widths_[l];
        const int out = widths_[l + 1];
        MutMap dw(grad.data() + offsets_[l], out, in);
        Eigen::Map<Eigen::VectorXd> db(grad.data() + offsets_[l] + in * out, out);
        dw.noalias() = delta * acts[l].transpose();
        db = delta.rowwise().sum();
        if (l == 0) {
            break;
        }
        const ConstMap w(params_.data() + offsets_[l], out, in);
        const Eigen::MatrixXd d_prev = w.transpose() * delta;
        delta = d_prev.array() * (1.0 - acts[l].array().square());
    }
    return loss;
}

} // namespace chandb
