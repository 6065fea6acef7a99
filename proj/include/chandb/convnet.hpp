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
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chandb {

struct LayerSpec {
    int filter_size = 1;
    int stride = 1;
    int tiers_out = 1;

    bool operator==(const LayerSpec&) const = default;
};

/// Layer stack written as "f1-f2-...(T1-T2-...)", e.g. "9-1-5(64-32-1)":
/// filter sizes followed by the number of filters of each layer.
struct NetStructure {
    std::vector<LayerSpec> layers;

    static NetStructure parse(std::string_view text);
    std::string to_string() const;

    /// Total per-axis shrink of a stride-1 stack: sum of (f - 1).
    int total_shrink() const;

    bool operator==(const NetStructure&) const = default;
};

/// floor((c_in - f) / s) + 1; throws if the filter does not fit.
int conv_output_size(int c_in, int f, int s);

/// Stack of equally sized planes ("tiers"), tier-major then row-major.
class Tensor3 {
public:
    Tensor3() = default;
    Tensor3(Index tiers, Index rows, Index cols, double fill = 0.0);

    Index tiers() const { return tiers_; }
    Index rows() const { return rows_; }
    Index cols() const { return cols_; }

    double& operator()(Index t, Index r, Index c) { return data_[static_cast<std::size_t>((t * rows_ + r) * cols_ + c)]; }
    double operator()(Index t, Index r, Index c) const {
        return data_[static_cast<std::size_t>((t * rows_ + r) * cols_ + c)];
    }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    Eigen::Map<Matrix> plane(Index t) { return {data_.data() + t * rows_ * cols_, rows_, cols_}; }
    Eigen::Map<const Matrix> plane(Index t) const { return {data_.data() + t * rows_ * cols_, rows_, cols_}; }

private:
    Index tiers_ = 0;
    Index rows_ = 0;
    Index cols_ = 0;
    AlignedVector data_;
};

/// Affine map between network space and dB: dB = offset + scale * z.
struct Affine {
    double offset = 0.0;
    double scale = 1.0;

    double to_db(double z) const { return offset + scale * z; }
    double from_db(double db) const { return (db - offset) / scale; }
};

/// Intermediate values of one forward pass, reused between passes.
struct ForwardTrace {
    std::vector<Matrix> patches; ///< im2col input per layer, (T_in f f) x (H_out W_out)
    std::vector<Matrix> pre;     ///< pre-activation per layer, T_out x (H_out W_out)
    std::vector<Matrix> act;     ///< activation per layer
    std::vector<std::pair<Index, Index>> in_shape;
    std::vector<std::pair<Index, Index>> out_shape;

    /// Keep the first layer's patches from the previous pass (same input).
    bool reuse_input_patches = false;

    /// Per-layer scratch of the backward pass, kept to avoid reallocation.
    mutable std::vector<Matrix> d_act;
    mutable std::vector<Matrix> d_pre;
    mutable std::vector<Matrix> d_patches;

    /// Final single-tier output as a matrix.
    Matrix output() const;
};

/// Valid-convolution network with ReLU after every layer (optionally not the last).
///
/// Parameters live in one flat vector. Per layer: weights indexed
/// [t_out][t_in][dy][dx], followed by biases [t_out].
class ConvNet {
public:
    explicit ConvNet(NetStructure structure, int input_tiers = 2, bool final_relu = true);

    const NetStructure& structure() const { return structure_; }
    int input_tiers() const { return input_tiers_; }
    bool final_relu() const { return final_relu_; }
    std::size_t layer_count() const { return structure_.layers.size(); }
    int tiers_in(std::size_t layer) const;

    std::span<double> parameters() { return params_; }
    std::span<const double> parameters() const { return params_; }
    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> biases(std::size_t layer);
    std::span<const double> biases(std::size_t layer) const;

    /// Zero-mean Gaussian weights with std sqrt(2 / (f^2 T_in)); zero biases.
    void init_he(std::uint64_t seed);

    std::pair<Index, Index> output_shape(Index rows, Index cols) const;

    Matrix forward(const Tensor3& input) const;
    void forward(const Tensor3& input, ForwardTrace& trace) const;

    /// Writes d(loss)/d(params) into `grad` given d(loss)/d(output) for the
    /// pass recorded in `trace`. ReLU has zero slope at 0.
    void backward(const ForwardTrace& trace, const Matrix& d_output, std::span<double> grad) const;

    /// Normalization map and grid shape recorded at training time.
    Affine normalization;
    Index grid_rows = 0;
    Index grid_cols = 0;

private:
    NetStructure structure_;
    int input_tiers_;
    bool final_relu_;
    std::vector<std::size_t> weight_offset_;
    std::vector<std::size_t> bias_offset_;
    AlignedVector params_;
};

/// Sum over label cells of (output - truth)^2.
double masked_loss(const Matrix& output, const Matrix& truth, const Mask& label);

/// masked_loss divided by the number of label cells.
double masked_mean_loss(const Matrix& output, const Matrix& truth, const Mask& label);

struct LossGradient {
    double loss = 0.0;
    AlignedVector grad;
};

/// masked_loss of the network output and its gradient w.r.t. every parameter.
LossGradient loss_gradient(const ConvNet& net, const Tensor3& input, const Matrix& truth, const Mask& label);

AlignedVector backward(const ConvNet& net, const Tensor3& input, const Matrix& truth, const Mask& label);

struct AdamConfig {
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Bias-corrected Adam moments for a flat parameter vector.
class Adam {
public:
    Adam(std::size_t parameter_count, const AdamConfig& config);

    void step(std::span<double> params, std::span<const double> grads);

    std::int64_t steps() const { return steps_; }
    const AdamConfig& config() const { return config_; }
    const AlignedVector& first_moment() const { return m_; }
    const AlignedVector& second_moment() const { return v_; }

private:
    AdamConfig config_;
    std::int64_t steps_ = 0;
    AlignedVector m_;
    AlignedVector v_;
};

/// Two-tier network input [value; mask], padded by `shrink` cells per axis
/// (floor(shrink/2) before, the rest after). Values replicate the edge; the
/// mask pads with zeros.
Tensor3 make_network_input(const Matrix& values, const Mask& mask, int shrink);

void save_model(std::ostream& out, const ConvNet& net);
void save_model(const std::filesystem::path& path, const ConvNet& net);
ConvNet load_model(std::istream& in);
ConvNet load_model(const std::filesystem::path& path);

} // namespace chandb
