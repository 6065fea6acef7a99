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
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

using namespace chandb;

namespace {

Tensor3 random_tensor(Index tiers, Index rows, Index cols, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor3 t(tiers, rows, cols);
    for (double& x : t.data()) {
        x = u(rng);
    }
    return t;
}

void randomize(ConvNet& net, std::mt19937_64& rng, double scale = 0.3) {
    std::normal_distribution<double> n(0.0, scale);
    for (double& p : net.parameters()) {
        p = n(rng);
    }
}

} // namespace

TEST(ConvShape, OutputSizeLaw) {
    EXPECT_EQ(conv_output_size(11, 9, 1), 3);
    EXPECT_EQ(conv_output_size(37, 1, 1), 37);
    EXPECT_EQ(conv_output_size(10, 3, 2), 4);
    EXPECT_EQ(conv_output_size(conv_output_size(conv_output_size(301, 9, 1), 1, 1), 5, 1), 289);
    EXPECT_THROW(conv_output_size(4, 5, 1), std::invalid_argument);
    EXPECT_THROW(conv_output_size(4, 1, 0), std::invalid_argument);
}

TEST(NetStructure, ParseAndPrint) {
    const auto s = NetStructure::parse("9-1-5(64-32-1)");
    ASSERT_EQ(s.layers.size(), 3U);
    EXPECT_EQ(s.layers[0].filter_size, 9);
    EXPECT_EQ(s.layers[1].tiers_out, 32);
    EXPECT_EQ(s.layers[2].tiers_out, 1);
    EXPECT_EQ(s.total_shrink(), 12);
    EXPECT_EQ(s.to_string(), "9-1-5(64-32-1)");
    EXPECT_EQ(NetStructure::parse(" 9-3-3-3-5 ( 256-32-16-16-1 ) ").to_string(), "9-3-3-3-5(256-32-16-16-1)");
}

TEST(NetStructure, RejectsMalformed) {
    EXPECT_THROW(NetStructure::parse("9-1-5"), std::invalid_argument);
    EXPECT_THROW(NetStructure::parse("9-1-5(64-32)"), std::invalid_argument);
    EXPECT_THROW(NetStructure::parse("9-1-5(64-32-2)"), std::invalid_argument);
    EXPECT_THROW(NetStructure::parse("9-x-5(64-32-1)"), std::invalid_argument);
    EXPECT_THROW(NetStructure::parse("9-0-5(64-32-1)"), std::invalid_argument);
    EXPECT_THROW(NetStructure::parse("9-1-5(64-32-1)x"), std::invalid_argument);
}

TEST(ConvNet, ConstantOutputFromBias) {
    ConvNet net(NetStructure::parse("1(1)"), 1);
    net.biases(0)[0] = 0.75;
    std::mt19937_64 rng(1);
    const Matrix out = net.forward(random_tensor(1, 4, 6, rng));
    EXPECT_TRUE(out.isApproxToConstant(0.75, 0.0));
}

TEST(ConvNet, LinearRegime) {
    ConvNet net(NetStructure::parse("1(1)"), 1);
    net.weights(0)[0] = 2.5;
    std::mt19937_64 rng(2);
    const Tensor3 in = random_tensor(1, 5, 3, rng);
    const Matrix out = net.forward(in);
    EXPECT_EQ(out, Matrix(2.5 * in.plane(0)));
}

TEST(ConvNet, ForwardMatchesNestedLoops) {
    std::mt19937_64 rng(3);
    for (const char* s : {"5-3-3(6-3-1)", "3-1-3(8-6-1)", "9-1-5(16-8-1)", "3-3-3-3(2-5-2-1)"}) {
        for (const bool final_relu : {true, false}) {
            ConvNet net(NetStructure::parse(s), 2, final_relu);
            randomize(net, rng);
            const Tensor3 in = random_tensor(2, 21, 18, rng);
            const Matrix got = net.forward(in);
            const Matrix want = oracle::naive_forward(net, in);
            ASSERT_EQ(got.rows(), want.rows());
            ASSERT_EQ(got.cols(), want.cols());
            EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-10) << s;
        }
    }
}

TEST(ConvNet, StridedForwardMatchesNestedLoops) {
    std::mt19937_64 rng(4);
    NetStructure s = NetStructure::parse("3-3-1(5-2-1)");
    s.layers[0].stride = 2;
    s.layers[1].stride = 2;
    ConvNet net(s, 2);
    randomize(net, rng);
    const Tensor3 in = random_tensor(2, 19, 16, rng);
    const Matrix got = net.forward(in);
    EXPECT_EQ(got.rows(), conv_output_size(conv_output_size(19, 3, 2), 3, 2));
    EXPECT_LT((got - oracle::naive_forward(net, in)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ConvNet, ShapeChainErrorsNameTheLayer) {
    ConvNet net(NetStructure::parse("5-5(4-1)"), 2);
    std::mt19937_64 rng(5);
    try {
        net.forward(random_tensor(2, 7, 7, rng));
        FAIL() << "expected a shape error";
    } catch (const std::invalid_argument& e) {
        EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos);
    }
    EXPECT_THROW(net.forward(random_tensor(3, 20, 20, rng)), std::invalid_argument);
}

TEST(ConvNet, ForwardIsDeterministic) {
    std::mt19937_64 rng(6);
    ConvNet net(NetStructure::parse("9-1-5(16-8-1)"), 2);
    net.init_he(12);
    const Tensor3 in = random_tensor(2, 30, 30, rng);
    EXPECT_EQ(net.forward(in), net.forward(in));
    ConvNet again(NetStructure::parse("9-1-5(16-8-1)"), 2);
    again.init_he(12);
    EXPECT_TRUE(std::equal(net.parameters().begin(), net.parameters().end(), again.parameters().begin()));
}

TEST(ConvNet, HeInitialisationScale) {
    ConvNet net(NetStructure::parse("9-1-5(64-32-1)"), 2);
    net.init_he(1);
    const auto w = net.weights(0);
    double ss = 0.0;
    for (const double x : w) {
        ss += x * x;
    }
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(w.size())), std::sqrt(2.0 / (81.0 * 2.0)), 0.01);
    for (const double b : net.biases(1)) {
        EXPECT_EQ(b, 0.0);
    }
}

TEST(MaskedLoss, Basics) {
    Matrix out = Matrix::Constant(3, 3, 1.0);
    Matrix truth = out;
    Mask label = Mask::Ones(3, 3);
    EXPECT_EQ(masked_loss(out, truth, label), 0.0);
    label.setZero();
    label(1, 2) = 1;
    truth(1, 2) = 4.0;
    truth(0, 0) = 100.0;
    EXPECT_EQ(masked_loss(out, truth, label), 9.0);
    EXPECT_EQ(masked_mean_loss(out, truth, label), 9.0);
}

TEST(MaskedLoss, MatchesLoop) {
    std::mt19937_64 rng(7);
    const Matrix a = oracle::random_matrix(13, 17, -3.0, 3.0, rng);
    const Matrix b = oracle::random_matrix(13, 17, -3.0, 3.0, rng);
    const Mask m = oracle::random_mask(13, 17, 0.3, rng);
    EXPECT_NEAR(masked_loss(a, b, m), oracle::loop_masked_loss(a, b, m), 1e-12);
}

TEST(Backward, ZeroLabelGivesZeroGradient) {
    std::mt19937_64 rng(8);
    ConvNet net(NetStructure::parse("3-1-3(4-3-1)"), 2);
    randomize(net, rng);
    const Tensor3 in = random_tensor(2, 14, 14, rng);
    const auto g = backward(net, in, Matrix::Ones(10, 10), Mask::Zero(10, 10));
    for (const double x : g) {
        EXPECT_EQ(x, 0.0);
    }
}

TEST(Backward, SingleLinearLayerClosedForm) {
    std::mt19937_64 rng(9);
    ConvNet net(NetStructure::parse("3(1)"), 1, false);
    randomize(net, rng);
    const Tensor3 in = random_tensor(1, 8, 9, rng);
    const Matrix truth = oracle::random_matrix(6, 7, 0.0, 1.0, rng);
    const Mask label = oracle::random_mask(6, 7, 0.5, rng);
    const auto lg = loss_gradient(net, in, truth, label);
    const Matrix out = net.forward(in);
    const Matrix e = (label.array() != 0).select(2.0 * (out - truth).array(), 0.0);
    for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
            double want = 0.0;
            for (Index r = 0; r < 6; ++r) {
                for (Index c = 0; c < 7; ++c) {
                    want += e(r, c) * in(0, r + dy, c + dx);
                }
            }
            EXPECT_NEAR(lg.grad[static_cast<std::size_t>(dy * 3 + dx)], want, 1e-12);
        }
    }
    EXPECT_NEAR(lg.grad[9], e.sum(), 1e-12);
}

TEST(Backward, MatchesFiniteDifferencesForSweepShapes) {
    std::mt19937_64 rng(10);
    for (const char* s : {"9-1-5(4-3-1)", "9-3-5(4-3-1)", "9-5-5(4-3-1)", "9-3-3-5(4-3-2-1)", "9-3-3-3-5(4-3-2-2-1)"}) {
        ConvNet net(NetStructure::parse(s), 2);
        net.init_he(static_cast<std::uint64_t>(rng()));
        for (double& p : net.parameters()) {
            p += 0.01;
        }
        const int shrink = net.structure().total_shrink();
        const Tensor3 in = random_tensor(2, 12 + shrink, 12 + shrink, rng);
        const Matrix truth = oracle::random_matrix(12, 12, 0.0, 1.0, rng);
        const Mask label = oracle::random_mask(12, 12, 0.4, rng);
        const auto lg = loss_gradient(net, in, truth, label);
        const auto num = oracle::numeric_gradient(net, in, truth, label, 1e-6);
        int bad = 0;
        for (std::size_t p = 0; p < num.size(); ++p) {
            bad += oracle::relative_error(lg.grad[p], num[p]) < 1e-3 ? 0 : 1;
        }
        EXPECT_EQ(bad, 0) << s;
    }
}

TEST(Backward, NoFinalReluMatchesFiniteDifferences) {
    std::mt19937_64 rng(11);
    ConvNet net(NetStructure::parse("5-1-3(6-5-1)"), 2, false);
    net.init_he(3);
    for (double& b : net.parameters()) {
        b += 0.01;
    }
    const Tensor3 in = random_tensor(2, 16, 16, rng);
    const Matrix truth = oracle::random_matrix(10, 10, -1.0, 1.0, rng);
    const Mask label = oracle::random_mask(10, 10, 0.5, rng);
    const auto lg = loss_gradient(net, in, truth, label);
    const auto num = oracle::numeric_gradient(net, in, truth, label, 1e-6);
    for (std::size_t p = 0; p < num.size(); ++p) {
        EXPECT_LT(oracle::relative_error(lg.grad[p], num[p]), 1e-3) << "parameter " << p;
    }
}

TEST(Adam, ZeroGradientKeepsParameters) {
    Adam adam(3, {});
    std::vector<double> p{1.0, -2.0, 3.0};
    const std::vector<double> g(3, 0.0);
    adam.step(p, g);
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Adam adam(2, {1e-3, 0.9, 0.999, 1e-8});
    std::vector<double> p{0.0, 0.0};
    const std::vector<double> g{0.5, -4.0};
    adam.step(p, g);
    EXPECT_NEAR(p[0], -1e-3, 1e-10);
    EXPECT_NEAR(p[1], 1e-3, 1e-10);
    EXPECT_LT(std::abs(p[0]), 1e-3);
}

TEST(Adam, QuadraticBowlDecreases) {
    Adam adam(2, {1e-3, 0.9, 0.999, 1e-8});
    std::vector<double> p{1.5, -0.7};
    const auto loss = [&] { return 3.0 * p[0] * p[0] + 0.5 * p[1] * p[1]; };
    double prev = loss();
    for (int i = 0; i < 100; ++i) {
        const std::vector<double> g{6.0 * p[0], p[1]};
        adam.step(p, g);
        const double now = loss();
        EXPECT_LT(now, prev);
        prev = now;
    }
}

TEST(Adam, RejectsBadConfig) {
    EXPECT_THROW(Adam(1, {0.0, 0.9, 0.999, 1e-8}), std::invalid_argument);
    EXPECT_THROW(Adam(1, {1e-3, 1.0, 0.999, 1e-8}), std::invalid_argument);
}

TEST(NetworkInput, PaddingReplicatesValuesAndZeroesMask) {
    Matrix v(2, 3);
    v << 1, 2, 3, 4, 5, 6;
    Mask m(2, 3);
    m << 1, 0, 1, 0, 1, 1;
    const Tensor3 in = make_network_input(v, m, 3);
    ASSERT_EQ(in.rows(), 5);
    ASSERT_EQ(in.cols(), 6);
    EXPECT_EQ(in(0, 0, 0), 1.0);  // corner replicates (0, 0)
    EXPECT_EQ(in(0, 4, 5), 6.0);  // far corner replicates (1, 2)
    EXPECT_EQ(in(0, 1, 2), 2.0);  // interior at offset 1
    EXPECT_EQ(in(1, 1, 1), 1.0);
    EXPECT_EQ(in(1, 1, 2), 0.0);
    EXPECT_EQ(in(1, 0, 0), 0.0);
    EXPECT_EQ(in(1, 4, 5), 0.0);
}

TEST(NetworkInput, PaddedOutputAlignsWithGrid) {
    for (const char* s : {"9-1-5(32-32-1)", "9-3-5(32-32-1)", "9-5-5(32-32-1)", "9-3-3-5(32-32-16-1)",
                          "9-3-3-3-5(32-32-16-16-1)"}) {
        ConvNet net(NetStructure::parse(s), 2);
        const Tensor3 in = make_network_input(Matrix::Zero(23, 17), Mask::Zero(23, 17), net.structure().total_shrink());
        EXPECT_EQ(net.output_shape(in.rows(), in.cols()), (std::pair<Index, Index>{23, 17}));
        EXPECT_EQ(net.forward(in).rows(), 23);
    }
}

TEST(NetworkInput, CentredIdentityNetworkReproducesValues) {
    ConvNet net(NetStructure::parse("9-1-5(1-1-1)"), 2, false);
    net.weights(0)[4 * 9 + 4] = 1.0; // value tier, centre tap
    net.weights(1)[0] = 1.0;
    net.weights(2)[2 * 5 + 2] = 1.0;
    std::mt19937_64 rng(12);
    const Matrix v = oracle::random_matrix(11, 14, 0.0, 5.0, rng);
    const Matrix out = net.forward(make_network_input(v, Mask::Ones(11, 14), 12));
    EXPECT_EQ(out, v);
}

TEST(ModelFile, RoundTripIsBitExact) {
    ConvNet net(NetStructure::parse("9-3-5(8-4-1)"), 2, false);
    net.init_he(99);
    net.normalization = {-87.123456789, 11.0 / 3.0};
    net.grid_rows = 31;
    net.grid_cols = 29;
    std::stringstream buf;
    save_model(buf, net);
    const ConvNet back = load_model(buf);
    EXPECT_EQ(back.structure(), net.structure());
    EXPECT_FALSE(back.final_relu());
    EXPECT_EQ(back.normalization.offset, net.normalization.offset);
    EXPECT_EQ(back.normalization.scale, net.normalization.scale);
    EXPECT_EQ(back.grid_rows, 31);
    EXPECT_TRUE(std::equal(net.parameters().begin(), net.parameters().end(), back.parameters().begin()));
    std::mt19937_64 rng(13);
    const Tensor3 in = random_tensor(2, 40, 40, rng);
    EXPECT_EQ(net.forward(in), back.forward(in));
}

TEST(ModelFile, RejectsCorruptInput) {
    std::stringstream bad("not-a-model 1\n");
    EXPECT_THROW(load_model(bad), std::runtime_error);
    ConvNet net(NetStructure::parse("3(1)"), 2);
    std::stringstream buf;
    save_model(buf, net);
    std::string text = buf.str();
    text.resize(text.size() - 10);
    std::stringstream cut(text);
    EXPECT_THROW(load_model(cut), std::runtime_error);
}
