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
#include <vector>

namespace chandb {

/// Fully connected regression network: tanh hidden layers, linear output.
/// Parameters per layer: weights [out][in] followed by biases [out].
class Mlp {
public:
    /// `widths` lists every layer width including input and output, e.g. {2, 10, 10, 1}.
    explicit Mlp(std::vector<int> widths);

    const std::vector<int>& widths() const { return widths_; }
    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }

    /// Glorot-normal weights, zero biases.
    void init(std::uint64_t seed);

    /// Inputs are columns of `x` (widths.front() x N); returns widths.back() x N.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

    /// Sum of squared errors against `y` and its gradient.
    double loss_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::span<double> grad) const;

private:
    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    AlignedVector params_;
};

} // namespace chandb
