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

#include "chandb/pipeline.hpp"

#include "chandb/mlp.hpp"

#include <chrono>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <stdexcept>
#include <string>

namespace chandb {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string shortest(double v) {
    if (std::isnan(v)) {
        return {};
    }
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// Offset at the minimum of the training values, scale at their population std.
Affine training_normalization(const ChannelGrid& train) {
    const auto cells = valid_cells(train.mask);
    Eigen::ArrayXd v(static_cast<Index>(cells.size()));
    for (Index i = 0; i < v.size(); ++i) {
        v(i) = train.values(cells[static_cast<std::size_t>(i)].row, cells[static_cast<std::size_t>(i)].col);
    }
    const double sd = std::sqrt((v - v.mean()).square().mean());
    return {v.minCoeff(), sd > 0.0 ? sd : 1.0};
}

void require_unit_strides(const NetStructure& s) {
    for (const auto& l : s.layers) {
        if (l.stride != 1) {
            throw std::invalid_argument("two-step network: output alignment requires stride 1 in every layer");
        }
    }
}

Tensor3 normalized_input(const FilledGrid& coarse, const Mask& mask, const ConvNet& net) {
    const Affine& a = net.normalization;
    const Matrix z = (coarse.values.array() - a.offset) / a.scale;
    return make_network_input(z, mask, net.structure().total_shrink());
}

} // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

Method parse_method(std::string_view name) {
    if (name == "gp") {
        return Method::gp;
    }
    if (name == "knn-uniform") {
        return Method::knn_uniform;
    }
    if (name == "knn-distance" || name == "knn") {
        return Method::knn_distance;
    }
    if (name == "two-step") {
        return Method::two_step;
    }
    if (name == "fullnn-baseline" || name == "fullnn") {
        return Method::fullnn_baseline;
    }
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

std::string_view to_string(Method m) {
    switch (m) {
    case Method::gp:
        return "gp";
    case Method::knn_uniform:
        return "knn-uniform";
    case Method::knn_distance:
        return "knn-distance";
    case Method::two_step:
        return "two-step";
    case Method::fullnn_baseline:
        return "fullnn-baseline";
    }
    return "unknown";
}

TrainedModel two_step_train(const ChannelGrid& grid, const KnnConfig& knn, const NetStructure& structure,
                            const TrainConfig& cfg, std::uint64_t seed) {
    require_unit_strides(structure);
    if (cfg.iterations < 0 || cfg.log_every < 1) {
        throw std::invalid_argument("two_step_train: iterations must be >= 0 and log_every >= 1");
    }
    const auto split = split_valid(grid, cfg.split_fraction, seed);
    const auto coarse = knn_fill(split.train, knn);

    TrainedModel model{ConvNet(structure, 2, cfg.final_relu), {}, 0.0};
    ConvNet& net = model.net;
    net.init_he(derive_seed(seed, 1));
    net.normalization = training_normalization(split.train);
    net.grid_rows = grid.rows();
    net.grid_cols = grid.cols();

    const Tensor3 input = normalized_input(coarse, split.train.mask, net);
    const Matrix target = (grid.values.array() - net.normalization.offset) / net.normalization.scale;
    const auto& label = split.label_mask;
    const auto n_label = static_cast<double>(count_valid(label));
    const double scale = net.normalization.scale;

    Adam adam(net.parameters().size(), cfg.adam);
    ForwardTrace trace;
    AlignedVector grad(net.parameters().size());
    Matrix d_out;

    const auto start = Clock::now();
    for (int it = 0;; ++it) {
        net.forward(input, trace);
        trace.reuse_input_patches = true;
        const Matrix diff = (label.array() != 0).select(trace.output() - target, 0.0);
        if (it % cfg.log_every == 0 || it == cfg.iterations) {
            model.log.push_back({it, scale * std::sqrt(diff.squaredNorm() / n_label)});
        }
        if (it == cfg.iterations) {
            break;
        }
        // Loss is measured in dB: scale^2 times the loss in network space.
        d_out = (2.0 * scale * scale) * diff;
        net.backward(trace, d_out, grad);
        adam.step(net.parameters(), grad);
    }
    model.train_seconds = seconds_since(start);
    return model;
}

FilledGrid two_step_interpolate(const ChannelGrid& grid, const ConvNet& net, const KnnConfig& knn) {
    require_unit_strides(net.structure());
    if (net.input_tiers() != 2) {
        throw std::invalid_argument("two_step_interpolate: network must take [values; mask] input");
    }
    if (net.grid_rows != 0 && (net.grid_rows != grid.rows() || net.grid_cols != grid.cols())) {
        throw std::invalid_argument("two_step_interpolate: network was trained on a " + std::to_string(net.grid_rows) +
                                    "x" + std::to_string(net.grid_cols) + " grid, got " +
                                    std::to_string(grid.rows()) + "x" + std::to_string(grid.cols()));
    }
    const auto coarse = knn_fill(grid, knn);
    const Matrix out = net.forward(normalized_input(coarse, grid.mask, net));
    const Matrix refined = net.normalization.offset + net.normalization.scale * out.array();
    FilledGrid g{grid.spec, Matrix(), grid.mask};
    g.values = (grid.mask.array() != 0).select(grid.values, refined);
    return g;
}

EvalReport evaluate(const Matrix& predicted, const Matrix& truth, const Mask& eval_mask) {
    if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() || eval_mask.rows() != truth.rows() ||
        eval_mask.cols() != truth.cols()) {
        throw std::invalid_argument("evaluate: prediction, truth and evaluation mask differ in shape");
    }
    EvalReport report;
    double sum_sq = 0.0;
    for (Index i = 0; i < truth.rows(); ++i) {
        for (Index j = 0; j < truth.cols(); ++j) {
            if (eval_mask(i, j) == 0) {
                continue;
            }
            const double e = predicted(i, j) - truth(i, j);
            sum_sq += e * e;
            report.cells.push_back({i, j});
            report.abs_errors.push_back(std::abs(e));
        }
    }
    if (report.cells.empty()) {
        throw std::invalid_argument("evaluate: evaluation mask is empty");
    }
    report.rmse_db = std::sqrt(sum_sq / static_cast<double>(report.cells.size()));
    return report;
}

EvalReport fullnn_baseline(const ChannelGrid& samples, const Matrix& truth, const Mask& eval_mask,
                           const MlpConfig& cfg, std::uint64_t seed) {
    const auto cells = valid_cells(samples.mask);
    if (cells.empty()) {
        throw std::invalid_argument("fullnn_baseline: no valid samples");
    }
    if (cfg.iterations < 0) {
        throw std::invalid_argument("fullnn_baseline: iterations must be non-negative");
    }
    const auto coord = [&](Index v, Index n) { return n > 1 ? 2.0 * static_cast<double>(v) / static_cast<double>(n - 1) - 1.0 : 0.0; };
    const auto n = static_cast<Index>(cells.size());
    Eigen::MatrixXd x(2, n);
    Eigen::MatrixXd y(1, n);
    for (Index k = 0; k < n; ++k) {
        const Cell c = cells[static_cast<std::size_t>(k)];
        x(0, k) = coord(c.row, samples.rows());
        x(1, k) = coord(c.col, samples.cols());
        y(0, k) = samples.values(c.row, c.col);
    }
    const double mean = y.mean();
    const double sd = std::sqrt((y.array() - mean).square().mean());
    const double scale = sd > 0.0 ? sd : 1.0;
    const Eigen::MatrixXd y_norm = (y.array() - mean) / scale;

    std::vector<int> widths{2};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(1);
    Mlp mlp(widths);
    mlp.init(seed);
    Adam adam(mlp.parameters().size(), cfg.adam);
    AlignedVector grad(mlp.parameters().size());
    const auto start = Clock::now();
    for (int it = 0; it < cfg.iterations; ++it) {
        mlp.loss_gradient(x, y_norm, grad);
        adam.step(mlp.parameters(), grad);
    }
    const double seconds = seconds_since(start);

    Matrix predicted = samples.values;
    const auto targets = valid_cells(eval_mask);
    if (!targets.empty()) {
        Eigen::MatrixXd xt(2, static_cast<Index>(targets.size()));
        for (Index k = 0; k < xt.cols(); ++k) {
            xt(0, k) = coord(targets[static_cast<std::size_t>(k)].row, samples.rows());
            xt(1, k) = coord(targets[static_cast<std::size_t>(k)].col, samples.cols());
        }
        const Eigen::MatrixXd out = mlp.forward(xt);
        for (Index k = 0; k < xt.cols(); ++k) {
            const Cell c = targets[static_cast<std::size_t>(k)];
            predicted(c.row, c.col) = mean + scale * out(0, k);
        }
    }
    EvalReport report = evaluate(predicted, truth, eval_mask);
    report.method = std::string(to_string(Method::fullnn_baseline));
    report.runtime_s = seconds;
    return report;
}

EvalReport run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
    EvalReport report;
    switch (cfg.method) {
    case Method::gp: {
        const auto start = Clock::now();
        const GpParams params = cfg.gp_params ? *cfg.gp_params
                                              : fit_gp(data.observed, data.bs, cfg.nbhd, cfg.d0_search, cfg.shadow_fraction);
        const auto filled = gp_interpolate(data.observed, params, data.bs, cfg.nbhd);
        const double seconds = seconds_since(start);
        report = evaluate(filled.grid.values, data.truth, data.eval_mask);
        report.runtime_s = seconds;
        report.gp = params;
        break;
    }
    case Method::knn_uniform:
    case Method::knn_distance: {
        const KnnConfig knn{cfg.knn.k, cfg.method == Method::knn_uniform ? Weighting::uniform : Weighting::inverse_distance};
        const auto start = Clock::now();
        const auto filled = knn_fill(data.observed, knn);
        const double seconds = seconds_since(start);
        report = evaluate(filled.values, data.truth, data.eval_mask);
        report.runtime_s = seconds;
        report.k = knn.k;
        break;
    }
    case Method::two_step: {
        const auto model = two_step_train(data.observed, cfg.knn, cfg.structure, cfg.train, cfg.seed);
        const auto filled = two_step_interpolate(data.observed, model.net, cfg.knn);
        report = evaluate(filled.values, data.truth, data.eval_mask);
        report.runtime_s = model.train_seconds;
        report.structure = cfg.structure.to_string();
        report.k = cfg.knn.k;
        report.loss_log = model.log;
        break;
    }
    case Method::fullnn_baseline:
        report = fullnn_baseline(data.observed, data.truth, data.eval_mask, cfg.mlp, cfg.seed);
        break;
    }
    report.method = std::string(to_string(cfg.method));
    return report;
}

std::vector<EvalReport> sweep(const std::vector<ExperimentConfig>& configs, const ExperimentData& data,
                              std::string_view reference_structure) {
    std::vector<EvalReport> reports;
    reports.reserve(configs.size());
    for (const auto& cfg : configs) {
        reports.push_back(run_experiment(cfg, data));
    }
    double reference = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : reports) {
        if (r.method == to_string(Method::two_step) && r.structure == reference_structure) {
            reference = r.runtime_s;
            break;
        }
    }
    for (auto& r : reports) {
        r.runtime_normalized = r.runtime_s / reference;
    }
    return reports;
}

std::vector<NetStructure> default_sweep_structures() {
    const std::vector<std::vector<int>> sizes{{9, 1, 5}, {9, 3, 5}, {9, 5, 5}, {9, 3, 3, 5}, {9, 3, 3, 3, 5}};
    std::vector<NetStructure> out;
    for (const auto& s : sizes) {
        for (const int first : {32, 64, 128, 256}) {
            NetStructure net;
            for (std::size_t l = 0; l < s.size(); ++l) {
                int tiers = 16;
                if (l == 0) {
                    tiers = first;
                } else if (l == 1) {
                    tiers = 32;
                }
                if (l + 1 == s.size()) {
                    tiers = 1;
                }
                net.layers.push_back({s[l], 1, tiers});
            }
            out.push_back(net);
        }
    }
    return out;
}

void write_report_csv(std::ostream& out, const std::vector<EvalReport>& reports) {
    out << "method,structure,k,rmse_db,runtime_s,runtime_normalized\n";
    for (const auto& r : reports) {
        out << r.method << ',' << r.structure << ',' << (r.k > 0 ? std::to_string(r.k) : std::string()) << ','
            << shortest(r.rmse_db) << ',' << shortest(r.runtime_s) << ',' << shortest(r.runtime_normalized) << '\n';
    }
}

void write_summary(std::ostream& out, const std::vector<EvalReport>& reports) {
    const auto flags = out.flags();
    out << std::left << std::setw(16) << "method" << std::setw(26) << "structure" << std::setw(4) << "k"
        << std::right << std::setw(10) << "rmse[dB]" << std::setw(12) << "runtime[s]" << std::setw(12) << "normalized"
        << '\n';
    for (const auto& r : reports) {
        out << std::left << std::setw(16) << r.method << std::setw(26) << (r.structure.empty() ? "-" : r.structure)
            << std::setw(4) << (r.k > 0 ? std::to_string(r.k) : "-") << std::right << std::fixed
            << std::setprecision(4) << std::setw(10) << r.rmse_db << std::setprecision(3) << std::setw(12)
            << r.runtime_s << std::setw(12);
        if (std::isnan(r.runtime_normalized)) {
            out << "-";
        } else {
            out << std::setprecision(2) << r.runtime_normalized;
        }
        out << '\n';
    }
    out.flags(flags);
}

BenchmarkSpec reference_benchmark() {
    return BenchmarkSpec{};
}

BenchmarkFactory::BenchmarkFactory(const BenchmarkSpec& spec, const ShadowingOptions& options)
    : spec_(spec),
      sampler_(std::make_shared<const ShadowingSampler>(spec.field, spec.rows, spec.cols, options)) {
    if (!(spec.valid_fraction > 0.0 && spec.valid_fraction < 1.0)) {
        throw std::invalid_argument("BenchmarkSpec: valid fraction must lie in (0, 1)");
    }
}

GridSpec BenchmarkFactory::grid_spec() const {
    return GridSpec::from_shape(spec_.rows, spec_.cols, spec_.q);
}

ExperimentData BenchmarkFactory::instance(std::uint64_t seed) const {
    const GridSpec grid = grid_spec();
    Matrix truth = mean_field(spec_.field, grid) + sampler_->draw(derive_seed(seed, 0));
    const auto n_valid = static_cast<Index>(std::floor(spec_.valid_fraction * static_cast<double>(grid.cells())));
    Mask mask = random_cells(grid.rows(), grid.cols(), n_valid, derive_seed(seed, 1));
    ChannelGrid observed = masked_grid(grid, truth, mask);
    Mask eval_mask = (mask.array() == 0).cast<std::uint8_t>();
    return ExperimentData{std::move(observed), std::move(truth), std::move(eval_mask), spec_.field.bs};
}

} // namespace chandb
