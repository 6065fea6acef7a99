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

#include "chandb/convnet.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace chandb {

namespace {

constexpr std::string_view kModelMagic = "chandb-convnet";
constexpr int kModelVersion = 1;

std::vector<int> parse_int_list(std::string_view text, std::string_view what) {
    std::vector<int> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto dash = text.find('-', start);
        auto token = text.substr(start, dash == std::string_view::npos ? std::string_view::npos : dash - start);
        while (!token.empty() && std::isspace(static_cast<unsigned char>(token.front()))) {
            token.remove_prefix(1);
        }
        while (!token.empty() && std::isspace(static_cast<unsigned char>(token.back()))) {
            token.remove_suffix(1);
        }
        int value = 0;
        const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (token.empty() || ec != std::errc() || ptr != token.data() + token.size() || value < 1) {
            throw std::invalid_argument("network structure: bad " + std::string(what) + " '" +
                                        std::string(token) + "'");
        }
        out.push_back(value);
        if (dash == std::string_view::npos) {
            break;
        }
        start = dash + 1;
    }
    return out;
}

void im2col(const double* x, Index tiers, Index rows, Index cols, int f, int s, Index out_rows, Index out_cols,
            Matrix& patches) {
    patches.resize(tiers * f * f, out_rows * out_cols);
    for (Index t = 0; t < tiers; ++t) {
        const double* plane = x + t * rows * cols;
        for (int dy = 0; dy < f; ++dy) {
            for (int dx = 0; dx < f; ++dx) {
                double* dst = patches.row((t * f + dy) * f + dx).data();
                for (Index y = 0; y < out_rows; ++y) {
                    const double* src = plane + (y * s + dy) * cols + dx;
                    double* d = dst + y * out_cols;
                    if (s == 1) {
                        std::copy(src, src + out_cols, d);
                    } else {
                        for (Index xo = 0; xo < out_cols; ++xo) {
                            d[xo] = src[xo * s];
                        }
                    }
                }
            }
        }
    }
}

void col2im(const Matrix& d_patches, Index tiers, Index rows, Index cols, int f, int s, Index out_rows,
            Index out_cols, Matrix& dx_out) {
    dx_out.setZero(tiers, rows * cols);
    for (Index t = 0; t < tiers; ++t) {
        double* plane = dx_out.row(t).data();
        for (int dy = 0; dy < f; ++dy) {
            for (int dx = 0; dx < f; ++dx) {
                const double* src = d_patches.row((t * f + dy) * f + dx).data();
                for (Index y = 0; y < out_rows; ++y) {
                    double* dst = plane + (y * s + dy) * cols + dx;
                    const double* sv = src + y * out_cols;
                    for (Index xo = 0; xo < out_cols; ++xo) {
                        dst[xo * s] += sv[xo];
                    }
                }
            }
        }
    }
}

// Layers with few output tiers skip the patch matrix and accumulate shifted
// input rows directly (stride 1 only).
bool use_direct(std::size_t layer, const LayerSpec& spec) {
    return layer > 0 && spec.stride == 1 && spec.tiers_out <= 4;
}

void direct_forward(const double* x, Index t_in, Index rows, Index cols, const double* w, const double* b,
                    Index t_out, int f, Index out_rows, Index out_cols, Matrix& z) {
    z.resize(t_out, out_rows * out_cols);
    for (Index to = 0; to < t_out; ++to) {
        double* out = z.row(to).data();
        std::fill(out, out + out_rows * out_cols, b[to]);
        for (Index ti = 0; ti < t_in; ++ti) {
            const double* plane = x + ti * rows * cols;
            for (int dy = 0; dy < f; ++dy) {
                for (int dx = 0; dx < f; ++dx) {
                    const double wv = w[((to * t_in + ti) * f + dy) * f + dx];
                    for (Index r = 0; r < out_rows; ++r) {
                        const double* src = plane + (r + dy) * cols + dx;
                        double* dst = out + r * out_cols;
                        for (Index c = 0; c < out_cols; ++c) {
                            dst[c] += wv * src[c];
                        }
                    }
                }
            }
        }
    }
}

void direct_backward(const double* x, Index t_in, Index rows, Index cols, const double* w, const Matrix& d_pre,
                     Index t_out, int f, Index out_rows, Index out_cols, double* dw, Matrix& dx_out) {
    dx_out.setZero(t_in, rows * cols);
    for (Index to = 0; to < t_out; ++to) {
        const double* g = d_pre.row(to).data();
        for (Index ti = 0; ti < t_in; ++ti) {
            const double* plane = x + ti * rows * cols;
            double* dplane = dx_out.row(ti).data();
            for (int dy = 0; dy < f; ++dy) {
                for (int dx = 0; dx < f; ++dx) {
                    const Index k = ((to * t_in + ti) * f + dy) * f + dx;
                    const double wv = w[k];
                    double acc = 0.0;
                    for (Index r = 0; r < out_rows; ++r) {
                        const double* src = plane + (r + dy) * cols + dx;
                        double* dst = dplane + (r + dy) * cols + dx;
                        const double* gr = g + r * out_cols;
                        for (Index c = 0; c < out_cols; ++c) {
                            acc += gr[c] * src[c];
                            dst[c] += wv * gr[c];
                        }
                    }
                    dw[k] = acc;
                }
            }
        }
    }
}

double parse_hex_double(const std::string& token) {
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') {
        throw std::runtime_error("model file: bad number '" + token + "'");
    }
    return v;
}

std::string expect_key(std::istream& in, std::string_view key) {
    std::string k;
    if (!(in >> k) || k != key) {
        throw std::runtime_error("model file: expected '" + std::string(key) + "'");
    }
    std::string rest;
    std::getline(in, rest);
    const auto first = rest.find_first_not_of(' ');
    return first == std::string::npos ? std::string() : rest.substr(first);
}

} // namespace

NetStructure NetStructure::parse(std::string_view text) {
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
        throw std::invalid_argument("network structure '" + std::string(text) +
                                    "': expected form f1-f2-...(T1-T2-...)");
    }
    for (const char c : text.substr(close + 1)) {
        if (!std::isspace(static_cast<unsigned char>(c))) {
            throw std::invalid_argument("network structure: trailing characters after ')'");
        }
    }
    const auto sizes = parse_int_list(text.substr(0, open), "filter size");
    const auto tiers = parse_int_list(text.substr(open + 1, close - open - 1), "filter count");
    if (sizes.size() != tiers.size()) {
        throw std::invalid_argument("network structure: " + std::to_string(sizes.size()) + " filter sizes but " +
                                    std::to_string(tiers.size()) + " filter counts");
    }
    if (tiers.back() != 1) {
        throw std::invalid_argument("network structure: the last layer must have exactly one filter");
    }
    NetStructure s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        s.layers.push_back({sizes[i], 1, tiers[i]});
    }
    return s;
}

std::string NetStructure::to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out << (i ? "-" : "") << layers[i].filter_size;
    }
    out << '(';
    for (std::size_t i = 0; i < layers.size(); ++i) {
        out << (i ? "-" : "") << layers[i].tiers_out;
    }
    out << ')';
    return out.str();
}

int NetStructure::total_shrink() const {
    int shrink = 0;
    for (const auto& l : layers) {
        shrink += l.filter_size - 1;
    }
    return shrink;
}

int conv_output_size(int c_in, int f, int s) {
    if (f < 1 || s < 1) {
        throw std::invalid_argument("conv_output_size: filter size and stride must be positive");
    }
    if (c_in < f) {
        throw std::invalid_argument("conv_output_size: input size " + std::to_string(c_in) +
                                    " smaller than filter size " + std::to_string(f));
    }
    return (c_in - f) / s + 1;
}

Tensor3::Tensor3(Index tiers, Index rows, Index cols, double fill)
    : tiers_(tiers), rows_(rows), cols_(cols), data_(static_cast<std::size_t>(tiers * rows * cols), fill) {}

Matrix ForwardTrace::output() const {
    const auto [h, w] = out_shape.back();
    return Eigen::Map<const Matrix>(act.back().data(), h, w);
}

ConvNet::ConvNet(NetStructure structure, int input_tiers, bool final_relu)
    : structure_(std::move(structure)), input_tiers_(input_tiers), final_relu_(final_relu) {
    if (structure_.layers.empty()) {
        throw std::invalid_argument("ConvNet: no layers");
    }
    if (input_tiers < 1) {
        throw std::invalid_argument("ConvNet: input must have at least one tier");
    }
    std::size_t offset = 0;
    int t_in = input_tiers;
    for (std::size_t l = 0; l < structure_.layers.size(); ++l) {
        const auto& spec = structure_.layers[l];
        if (spec.filter_size < 1 || spec.stride < 1 || spec.tiers_out < 1) {
            throw std::invalid_argument("ConvNet: layer " + std::to_string(l + 1) + " has a non-positive size");
        }
        weight_offset_.push_back(offset);
        offset += static_cast<std::size_t>(spec.tiers_out * t_in * spec.filter_size * spec.filter_size);
        bias_offset_.push_back(offset);
        offset += static_cast<std::size_t>(spec.tiers_out);
        t_in = spec.tiers_out;
    }
    if (structure_.layers.back().tiers_out != 1) {
        throw std::invalid_argument("ConvNet: the final layer must output one tier");
    }
    params_.assign(offset, 0.0);
}

int ConvNet::tiers_in(std::size_t layer) const {
    return layer == 0 ? input_tiers_ : structure_.layers[layer - 1].tiers_out;
}

std::span<double> ConvNet::weights(std::size_t layer) {
    return std::span<double>(params_).subspan(weight_offset_[layer], bias_offset_[layer] - weight_offset_[layer]);
}

std::span<const double> ConvNet::weights(std::size_t layer) const {
    return std::span<const double>(params_).subspan(weight_offset_[layer],
                                                    bias_offset_[layer] - weight_offset_[layer]);
}

std::span<double> ConvNet::biases(std::size_t layer) {
    return std::span<double>(params_).subspan(bias_offset_[layer],
                                              static_cast<std::size_t>(structure_.layers[layer].tiers_out));
}

std::span<const double> ConvNet::biases(std::size_t layer) const {
    return std::span<const double>(params_).subspan(bias_offset_[layer],
                                                    static_cast<std::size_t>(structure_.layers[layer].tiers_out));
}

void ConvNet::init_he(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const int f = structure_.layers[l].filter_size;
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(f * f * tiers_in(l))));
        for (double& w : weights(l)) {
            w = normal(rng);
        }
        for (double& b : biases(l)) {
            b = 0.0;
        }
    }
}

std::pair<Index, Index> ConvNet::output_shape(Index rows, Index cols) const {
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const auto& spec = structure_.layers[l];
        try {
            rows = conv_output_size(static_cast<int>(rows), spec.filter_size, spec.stride);
            cols = conv_output_size(static_cast<int>(cols), spec.filter_size, spec.stride);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("ConvNet layer " + std::to_string(l + 1) + ": " + e.what());
        }
    }
    return {rows, cols};
}

Matrix ConvNet::forward(const Tensor3& input) const {
    ForwardTrace trace;
    forward(input, trace);
    return trace.output();
}

void ConvNet::forward(const Tensor3& input, ForwardTrace& trace) const {
    if (input.tiers() != input_tiers_) {
        throw std::invalid_argument("ConvNet layer 1: expected " + std::to_string(input_tiers_) +
                                    " input tiers, got " + std::to_string(input.tiers()));
    }
    const std::size_t n_layers = layer_count();
    trace.patches.resize(n_layers);
    trace.pre.resize(n_layers);
    trace.act.resize(n_layers);
    trace.in_shape.resize(n_layers);
    trace.out_shape.resize(n_layers);

    const double* x = input.data().data();
    Index rows = input.rows();
    Index cols = input.cols();
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& spec = structure_.layers[l];
        const int f = spec.filter_size;
        const int s = spec.stride;
        Index out_rows = 0;
        Index out_cols = 0;
        try {
            out_rows = conv_output_size(static_cast<int>(rows), f, s);
            out_cols = conv_output_size(static_cast<int>(cols), f, s);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("ConvNet layer " + std::to_string(l + 1) + ": " + e.what());
        }
        const Index t_in = tiers_in(l);
        const Index t_out = spec.tiers_out;
        trace.in_shape[l] = {rows, cols};
        trace.out_shape[l] = {out_rows, out_cols};

        Matrix& z = trace.pre[l];
        if (use_direct(l, spec)) {
            direct_forward(x, t_in, rows, cols, params_.data() + weight_offset_[l], params_.data() + bias_offset_[l],
                           t_out, f, out_rows, out_cols, z);
        } else {
            const bool cached = l == 0 && trace.reuse_input_patches && trace.patches[0].rows() == t_in * f * f &&
                                trace.patches[0].cols() == out_rows * out_cols;
            if (!cached) {
                im2col(x, t_in, rows, cols, f, s, out_rows, out_cols, trace.patches[l]);
            }
            const Eigen::Map<const Matrix> w(params_.data() + weight_offset_[l], t_out, t_in * f * f);
            const Eigen::Map<const Eigen::VectorXd> b(params_.data() + bias_offset_[l], t_out);
            z.noalias() = w * trace.patches[l];
            z.colwise() += b;
        }
        if (l + 1 < n_layers || final_relu_) {
            trace.act[l] = z.cwiseMax(0.0);
        } else {
            trace.act[l] = z;
        }
        x = trace.act[l].data();
        rows = out_rows;
        cols = out_cols;
    }
}

void ConvNet::backward(const ForwardTrace& trace, const Matrix& d_output, std::span<double> grad) const {
    if (grad.size() != params_.size()) {
        throw std::invalid_argument("ConvNet::backward: gradient buffer has the wrong size");
    }
    const auto [h, w] = trace.out_shape.back();
    if (d_output.rows() != h || d_output.cols() != w) {
        throw std::invalid_argument("ConvNet::backward: output gradient has the wrong shape");
    }
    const std::size_t n_layers = layer_count();
    trace.d_act.resize(n_layers);
    trace.d_pre.resize(n_layers);
    trace.d_patches.resize(n_layers);
    trace.d_act.back() = Eigen::Map<const Matrix>(d_output.data(), 1, h * w);
    for (std::size_t li = n_layers; li-- > 0;) {
        const auto& spec = structure_.layers[li];
        const int f = spec.filter_size;
        const Index t_in = tiers_in(li);
        const Index t_out = spec.tiers_out;
        const Matrix& d_act = trace.d_act[li];
        Matrix& d_pre = trace.d_pre[li];
        if (li + 1 < n_layers || final_relu_) {
            d_pre.noalias() = (trace.pre[li].array() > 0.0).select(d_act.array(), 0.0).matrix();
        } else {
            d_pre = d_act;
        }
        Eigen::Map<Eigen::VectorXd> db(grad.data() + bias_offset_[li], t_out);
        db = d_pre.rowwise().sum();
        if (use_direct(li, spec)) {
            const auto [in_rows, in_cols] = trace.in_shape[li];
            const auto [out_rows, out_cols] = trace.out_shape[li];
            direct_backward(trace.act[li - 1].data(), t_in, in_rows, in_cols, params_.data() + weight_offset_[li],
                            d_pre, t_out, f, out_rows, out_cols, grad.data() + weight_offset_[li],
                            trace.d_act[li - 1]);
            continue;
        }
        Eigen::Map<Matrix> dw(grad.data() + weight_offset_[li], t_out, t_in * f * f);
        dw.noalias() = d_pre * trace.patches[li].transpose();
        if (li == 0) {
            break;
        }
        const Eigen::Map<const Matrix> wm(params_.data() + weight_offset_[li], t_out, t_in * f * f);
        Matrix& d_patches = trace.d_patches[li];
        d_patches.noalias() = wm.transpose() * d_pre;
        const auto [in_rows, in_cols] = trace.in_shape[li];
        const auto [out_rows, out_cols] = trace.out_shape[li];
        col2im(d_patches, t_in, in_rows, in_cols, f, spec.stride, out_rows, out_cols, trace.d_act[li - 1]);
    }
}

double masked_loss(const Matrix& output, const Matrix& truth, const Mask& label) {
    if (output.rows() != truth.rows() || output.cols() != truth.cols() || label.rows() != truth.rows() ||
        label.cols() != truth.cols()) {
        throw std::invalid_argument("masked_loss: output, truth and label mask differ in shape");
    }
    return (label.array() != 0).select((output - truth).array().square(), 0.0).sum();
}

double masked_mean_loss(const Matrix& output, const Matrix& truth, const Mask& label) {
    const Index n = count_valid(label);
    return n == 0 ? 0.0 : masked_loss(output, truth, label) / static_cast<double>(n);
}

LossGradient loss_gradient(const ConvNet& net, const Tensor3& input, const Matrix& truth, const Mask& label) {
    ForwardTrace trace;
    net.forward(input, trace);
    const Matrix out = trace.output();
    LossGradient lg;
    lg.loss = masked_loss(out, truth, label);
    const Matrix d_out = (label.array() != 0).select(2.0 * (out - truth).array(), 0.0);
    lg.grad.assign(net.parameters().size(), 0.0);
    net.backward(trace, d_out, lg.grad);
    return lg;
}

AlignedVector backward(const ConvNet& net, const Tensor3& input, const Matrix& truth, const Mask& label) {
    return loss_gradient(net, input, truth, label).grad;
}

Adam::Adam(std::size_t parameter_count, const AdamConfig& config)
    : config_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {
    if (!(config.learning_rate > 0.0) || !(config.beta1 >= 0.0 && config.beta1 < 1.0) ||
        !(config.beta2 >= 0.0 && config.beta2 < 1.0) || !(config.epsilon > 0.0)) {
        throw std::invalid_argument("Adam: invalid hyperparameters");
    }
}

void Adam::step(std::span<double> params, std::span<const double> grads) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw std::invalid_argument("Adam::step: parameter and gradient sizes differ from the state");
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g * g;
        const double m_hat = m_[i] / c1;
        const double v_hat = v_[i] / c2;
        params[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
}

Tensor3 make_network_input(const Matrix& values, const Mask& mask, int shrink) {
    if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
        throw std::invalid_argument("make_network_input: values and mask differ in shape");
    }
    if (shrink < 0) {
        throw std::invalid_argument("make_network_input: negative padding");
    }
    const Index lo = shrink / 2;
    const Index rows = values.rows();
    const Index cols = values.cols();
    Tensor3 input(2, rows + shrink, cols + shrink, 0.0);
    for (Index r = 0; r < input.rows(); ++r) {
        const Index sr = std::clamp<Index>(r - lo, 0, rows - 1);
        for (Index c = 0; c < input.cols(); ++c) {
            const Index sc = std::clamp<Index>(c - lo, 0, cols - 1);
            input(0, r, c) = values(sr, sc);
            const bool inside = r - lo >= 0 && r - lo < rows && c - lo >= 0 && c - lo < cols;
            input(1, r, c) = inside ? static_cast<double>(mask(r - lo, c - lo)) : 0.0;
        }
    }
    return input;
}

void save_model(std::ostream& out, const ConvNet& net) {
    out << kModelMagic << ' ' << kModelVersion << '\n';
    out << "structure " << net.structure().to_string() << '\n';
    out << "strides";
    for (const auto& l : net.structure().layers) {
        out << ' ' << l.stride;
    }
    out << '\n';
    out << "input_tiers " << net.input_tiers() << '\n';
    out << "final_relu " << (net.final_relu() ? 1 : 0) << '\n';
    out << "grid " << net.grid_rows << ' ' << net.grid_cols << '\n';
    out << std::hexfloat;
    out << "normalization " << net.normalization.offset << ' ' << net.normalization.scale << '\n';
    out << "parameters " << std::dec << net.parameters().size() << '\n' << std::hexfloat;
    for (const double p : net.parameters()) {
        out << p << '\n';
    }
    out << std::defaultfloat;
    if (!out) {
        throw std::runtime_error("save_model: write failed");
    }
}

void save_model(const std::filesystem::path& path, const ConvNet& net) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    save_model(out, net);
}

ConvNet load_model(std::istream& in) {
    std::string magic;
    int version = 0;
    if (!(in >> magic >> version) || magic != kModelMagic) {
        throw std::runtime_error("model file: not a chandb convnet model");
    }
    if (version != kModelVersion) {
        throw std::runtime_error("model file: unsupported version " + std::to_string(version));
    }
    auto structure = NetStructure::parse(expect_key(in, "structure"));
    {
        std::istringstream strides(expect_key(in, "strides"));
        for (auto& l : structure.layers) {
            if (!(strides >> l.stride)) {
                throw std::runtime_error("model file: missing stride");
            }
        }
    }
    const int input_tiers = std::stoi(expect_key(in, "input_tiers"));
    const bool final_relu = std::stoi(expect_key(in, "final_relu")) != 0;
    ConvNet net(structure, input_tiers, final_relu);
    {
        std::istringstream grid(expect_key(in, "grid"));
        grid >> net.grid_rows >> net.grid_cols;
    }
    {
        std::istringstream norm(expect_key(in, "normalization"));
        std::string a;
        std::string b;
        norm >> a >> b;
        net.normalization = {parse_hex_double(a), parse_hex_double(b)};
    }
    const auto count = static_cast<std::size_t>(std::stoull(expect_key(in, "parameters")));
    if (count != net.parameters().size()) {
        throw std::runtime_error("model file: parameter count does not match the structure");
    }
    std::string token;
    for (double& p : net.parameters()) {
        if (!(in >> token)) {
            throw std::runtime_error("model file: truncated parameter list");
        }
        p = parse_hex_double(token);
    }
    return net;
}

ConvNet load_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string() + " for reading");
    }
    return load_model(in);
}

} // namespace chandb
