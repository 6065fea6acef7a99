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

#include "chandb/convnet.hpp"
#include "chandb/field_synth.hpp"
#include "chandb/gp_model.hpp"
#include "chandb/grid.hpp"
#include "chandb/knn.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace chandb {

enum class Method { gp, knn_uniform, knn_distance, two_step, fullnn_baseline };

Method parse_method(std::string_view name);
std::string_view to_string(Method m);

struct TrainConfig {
    int iterations = 200000;
    AdamConfig adam;
    double split_fraction = 0.8;
    int log_every = 100;
    bool final_relu = true;
};

struct LossLogEntry {
    int iteration = 0;
    double label_rmse_db = 0.0; ///< masked RMSE over the label set

    bool operator==(const LossLogEntry&) const = default;
};

struct TrainedModel {
    ConvNet net;
    std::vector<LossLogEntry> log;
    double train_seconds = 0.0; ///< wall clock of the optimization loop only
};

/// Splits the valid set, coarse-fills the training subset with KNN and trains
/// the network to predict the held-out label cells.
TrainedModel two_step_train(const ChannelGrid& grid, const KnnConfig& knn, const NetStructure& structure,
                            const TrainConfig& cfg, std::uint64_t seed);

/// Network output on every invalid cell; valid cells keep their data exactly.
FilledGrid two_step_interpolate(const ChannelGrid& grid, const ConvNet& net, const KnnConfig& knn);

struct EvalReport {
    std::string method;
    std::string structure;
    int k = 0;
    double rmse_db = 0.0;
    std::vector<Cell> cells;         ///< evaluated cells, row-major
    std::vector<double> abs_errors;  ///< |predicted - truth| per evaluated cell
    double runtime_s = 0.0;
    double runtime_normalized = std::numeric_limits<double>::quiet_NaN();
    std::vector<LossLogEntry> loss_log;
    std::optional<GpParams> gp;
};

/// RMSE over the cells set in `eval_mask`.
EvalReport evaluate(const Matrix& predicted, const Matrix& truth, const Mask& eval_mask);

struct MlpConfig {
    std::vector<int> hidden = {10, 10};
    int iterations = 20000;
    AdamConfig adam{1e-3, 0.9, 0.999, 1e-8};
};

/// Coordinate-in, gain-out network trained on the valid cells of `samples`,
/// evaluated on `eval_mask`.
EvalReport fullnn_baseline(const ChannelGrid& samples, const Matrix& truth, const Mask& eval_mask,
                           const MlpConfig& cfg, std::uint64_t seed);

/// Observed database, ground truth and the testing cells to score.
struct ExperimentData {
    ChannelGrid observed;
    Matrix truth;
    Mask eval_mask;
    BsPosition bs;
};

struct ExperimentConfig {
    Method method = Method::two_step;
    KnnConfig knn;
    NetStructure structure = NetStructure::parse("9-1-5(64-32-1)");
    TrainConfig train;
    MlpConfig mlp;
    Neighborhood nbhd;
    D0Search d0_search;
    std::optional<double> shadow_fraction;
    std::optional<GpParams> gp_params; ///< skip fitting when set
    std::uint64_t seed = 1;
};

EvalReport run_experiment(const ExperimentConfig& cfg, const ExperimentData& data);

/// Runs every config on the same data. Runtimes are normalized by the
/// two-step run whose structure equals `reference_structure`, if present.
std::vector<EvalReport> sweep(const std::vector<ExperimentConfig>& configs, const ExperimentData& data,
                              std::string_view reference_structure = "9-1-5(64-32-1)");

/// {9-1-5, 9-3-5, 9-5-5, 9-3-3-5, 9-3-3-3-5} x first-layer filters {32, 64, 128, 256};
/// deeper layers use 32 then 16 filters.
std::vector<NetStructure> default_sweep_structures();

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports);
void write_summary(std::ostream& out, const std::vector<EvalReport>& reports);

/// Synthetic stand-in for a measured cell: field model, grid and sampling rate.
struct BenchmarkSpec {
    Index rows = 80;
    Index cols = 80;
    double q = 0.5;
    FieldParams field{0.0, 3.5, 6.0, 8.0, 2.0, {39.5, 39.5}};
    double valid_fraction = 0.5;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

/// 80x80 cells at 0.5 m, BS in the centre, g0 = 0, eta = 3.5, d0 = 6 cells,
/// sigma_psi = 8 dB, sigma_zeta = 2 dB, half of the cells observed.
BenchmarkSpec reference_benchmark();

/// Generates benchmark instances; the shadowing factor is computed once.
class BenchmarkFactory {
public:
    explicit BenchmarkFactory(const BenchmarkSpec& spec, const ShadowingOptions& options = {});

    const BenchmarkSpec& spec() const { return spec_; }
    GridSpec grid_spec() const;

    /// floor(valid_fraction * cells) random cells observed; the rest are scored.
    ExperimentData instance(std::uint64_t seed) const;

private:
    BenchmarkSpec spec_;
    std::shared_ptr<const ShadowingSampler> sampler_;
};

/// Independent stream seed derived from a base seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

} // namespace chandb
