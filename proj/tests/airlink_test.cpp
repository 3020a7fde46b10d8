// Copyright 2026 The tmadm Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include <tmadm/airlink.hpp>

using namespace tmadm;

TEST(Psk, ConstellationAndDecisions)
{
    EXPECT_EQ(psk_point(0, 2), Complex(1.0, 0.0));
    EXPECT_EQ(psk_point(1, 2), Complex(-1.0, 0.0));
    EXPECT_EQ(psk_point(1, 4), Complex(0.0, 1.0));
    for (int m : {2, 4, 8, 16})
    {
        for (int u = 0; u < m; ++u)
        {
            EXPECT_NEAR(std::abs(psk_point(u, m)), 1.0, 1e-15);
            EXPECT_EQ(psk_decide(psk_point(u, m) * 0.7, m), u);
        }
    }
    // Gray labels of neighbours differ in one bit.
    for (int u = 0; u < 8; ++u)
    {
        EXPECT_EQ(std::popcount(psk_label(u) ^ psk_label((u + 1) % 8)), 1);
    }
    EXPECT_FALSE(is_valid_psk_order(3));
    EXPECT_FALSE(is_valid_psk_order(1));
    EXPECT_TRUE(is_valid_psk_order(8));
}

TEST(Symbols, BpskSupport)
{
    auto rng         = make_rng(1, 1);
    const auto block = generate_symbols(2, 2, 4, rng);
    ASSERT_EQ(block.symbols.rows(), 2);
    ASSERT_EQ(block.symbols.cols(), 4);
    for (Index i = 0; i < block.symbols.size(); ++i)
    {
        const auto s = block.symbols(i);
        EXPECT_TRUE(s == Complex(1.0, 0.0) || s == Complex(-1.0, 0.0));
    }
    EXPECT_EQ(block.bits().size(), 8u);
}

TEST(Symbols, RejectsBadParameters)
{
    auto rng = make_rng(1, 1);
    EXPECT_THROW(generate_symbols(4, 3, 10, rng), Error);
    EXPECT_THROW(generate_symbols(1, 2, 10, rng), Error);
    EXPECT_THROW(generate_symbols(4, 2, 0, rng), Error);
}

TEST(Symbols, BalancedAndUncorrelated)
{
    const auto block = generate_symbols_seeded(16, 2, 100'000, 5);
    const Eigen::MatrixXd s = block.symbols.real();
    const double h = static_cast<double>(s.cols());
    for (Index i = 0; i < 16; ++i)
    {
        EXPECT_LT(std::abs(s.row(i).mean()), 0.02);
        for (Index j = i + 1; j < 16; ++j)
        {
            EXPECT_LT(std::abs(s.row(i).dot(s.row(j)) / h), 0.02);
        }
    }
}

TEST(Symbols, BitsFollowIndices)
{
    Eigen::MatrixXi idx(2, 2);
    idx << 0, 3, 1, 2;
    const auto block = make_symbol_block(idx, 4);
    // column-major: (0,0)=0 -> 00, (1,0)=1 -> 01, (0,1)=3 -> Gray 10, (1,1)=2 -> Gray 11
    EXPECT_EQ(block.bits(), (std::vector<std::uint8_t>{0, 0, 0, 1, 1, 0, 1, 1}));
}

TEST(Static, OnBeamIsScaledIdentity)
{
    auto rng         = make_rng(3, 2);
    const auto cfg   = sample_random_pattern(7, 1.0 / 7, 60.0, rng);
    const auto block = generate_symbols_seeded(16, 2, 200, 8);
    const auto obs   = transmit_static(cfg, 16, block, 60.0);
    const double c   = (1.0 / 7.0) * std::sqrt(7.0 / 16.0);
    EXPECT_LT((obs.samples - c * block.symbols).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(obs.mode, TransmitMode::static_pattern);
}

TEST(Static, TwoByTwoHandExpansion)
{
    TmaConfig cfg{2, 0.5, {0.5, 0.0}, 70.0};
    const double theta = 25.0;
    const double phi   = phi_of(theta, cfg.theta0_deg);

    // V_m = sum_n dt sinc(m pi dt) exp(-j m pi (2 tau_n + dt)) exp(j n pi phi), by hand.
    auto v = [&](int m) {
        Complex acc{0.0, 0.0};
        for (int n = 0; n < 2; ++n)
        {
            const double x   = m * pi * 0.5;
            const double mag = 0.5 * (m == 0 ? 1.0 : std::sin(x) / x);
            acc += mag * std::exp(Complex(0.0, -m * pi * (2.0 * cfg.tau_offsets[n] + 0.5))) *
                   std::exp(Complex(0.0, n * pi * phi));
        }
        return acc;
    };

    Eigen::MatrixXi idx(2, 1);
    idx << 0, 1; // s = (1, -1)
    const auto block = make_symbol_block(idx, 2);
    const auto obs   = transmit_static(cfg, 2, block, theta);
    const double g   = 1.0 / std::sqrt(4.0);
    EXPECT_LT(std::abs(obs.samples(0, 0) - (v(0) - v(-1)) * g), 1e-14);
    EXPECT_LT(std::abs(obs.samples(1, 0) - (v(1) - v(0)) * g), 1e-14);
}

TEST(Static, RejectsShapeMismatch)
{
    const auto block = generate_symbols_seeded(8, 2, 10, 1);
    EXPECT_THROW(transmit_static(identity_pattern(3, 90.0), 16, block, 40.0), Error);
}

TEST(Static, Linearity)
{
    auto rng       = make_rng(21, 2);
    const auto cfg = sample_random_pattern(5, 0.2, 50.0, rng);
    SymbolBlock a, b, mix;
    a.symbols = ComplexMatrix::Random(10, 20);
    b.symbols = ComplexMatrix::Random(10, 20);
    const Complex alpha(0.3, -1.2), beta(-0.7, 0.4);
    mix.symbols = alpha * a.symbols + beta * b.symbols;
    const auto ya = transmit_static(cfg, 10, a, 110.0).samples;
    const auto yb = transmit_static(cfg, 10, b, 110.0).samples;
    const auto ym = transmit_static(cfg, 10, mix, 110.0).samples;
    EXPECT_LT((ym - (alpha * ya + beta * yb)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Defended, OnBeamBitIdenticalToStatic)
{
    const auto block = generate_symbols_seeded(16, 2, 500, 4);
    const auto cfg   = identity_pattern(7, 40.0);
    const auto st    = transmit_static(cfg, 16, block, 40.0);
    const auto df    = transmit_defended_seeded(cfg, 16, block, 40.0, 77);
    EXPECT_TRUE(df.samples == st.samples);
    const double c = (1.0 / 7.0) * std::sqrt(7.0 / 16.0);
    EXPECT_LT((df.samples - c * block.symbols).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Defended, ColumnsFollowTheirPatterns)
{
    const auto block = generate_symbols_seeded(8, 2, 30, 6);
    const auto cfg   = identity_pattern(5, 70.0);
    const auto obs   = transmit_defended_seeded(cfg, 8, block, 20.0, 12);
    ASSERT_EQ(obs.pattern_log.size(), 30u);
    ASSERT_EQ(obs.mode, TransmitMode::defended);
    for (Index c = 0; c < 30; ++c)
    {
        const auto v = build_mixing_matrix(obs.pattern_log[static_cast<std::size_t>(c)], 8, 20.0).dense();
        EXPECT_LT((obs.samples.col(c) - v * block.symbols.col(c)).norm(), 1e-13);
    }
    const auto regenerated = regenerate_pattern_log(cfg, 30, 12);
    for (std::size_t c = 0; c < 30; ++c)
    {
        EXPECT_EQ(regenerated[c].tau_offsets, obs.pattern_log[c].tau_offsets);
    }
}

TEST(Defended, RepeatedSymbolsScrambleDifferently)
{
    const Index h = 4000;
    Eigen::MatrixXi idx = Eigen::MatrixXi::Zero(16, h); // every column identical
    const auto block    = make_symbol_block(idx, 2);
    const auto obs      = transmit_defended_seeded(identity_pattern(7, 60.0), 16, block, 30.0, 3);
    Index differ = 0;
    for (Index c = 0; c + 1 < h; ++c)
    {
        differ += (obs.samples.col(c) - obs.samples.col(c + 1)).norm() > 1e-12 ? 1 : 0;
    }
    EXPECT_GE(static_cast<double>(differ) / static_cast<double>(h - 1), 0.99);
}

TEST(Defended, SeedDeterminism)
{
    const auto block = generate_symbols_seeded(8, 2, 50, 6);
    const auto a     = transmit_defended_seeded(identity_pattern(5, 70.0), 8, block, 20.0, 5);
    const auto b     = transmit_defended_seeded(identity_pattern(5, 70.0), 8, block, 20.0, 5);
    EXPECT_TRUE(a.samples == b.samples);
    const auto c = generate_symbols_seeded(8, 2, 50, 6);
    EXPECT_TRUE(block.indices == c.indices);
}

TEST(Ber, Basics)
{
    const std::vector<std::uint8_t> t{0, 1, 0, 1};
    EXPECT_EQ(ber(t, t), 0.0);
    EXPECT_EQ(ber(t, std::vector<std::uint8_t>{1, 0, 1, 0}), 1.0);
    EXPECT_EQ(ber(t, std::vector<std::uint8_t>{0, 1, 1, 0}), 0.5);
    EXPECT_THROW(ber(t, std::vector<std::uint8_t>{0, 1}), Error);
    EXPECT_THROW(ber(std::vector<std::uint8_t>{}, std::vector<std::uint8_t>{}), Error);
}

TEST(RawDecision, OnBeamIsErrorFree)
{
    const auto block = generate_symbols_seeded(16, 2, 1000, 2);
    const auto obs   = transmit_static(identity_pattern(7, 60.0), 16, block, 60.0);
    EXPECT_EQ(raw_decision_ber(obs, block), 0.0);
}

TEST(RawDecision, NegatedIsAllWrong)
{
    Eigen::MatrixXi idx = Eigen::MatrixXi::Zero(4, 10);
    const auto block    = make_symbol_block(idx, 2);
    ObservationSet obs;
    obs.samples   = -block.symbols;
    obs.psk_order = 2;
    EXPECT_EQ(raw_decision_ber(obs, block), 1.0);
}

TEST(RawDecision, ScaleInvariantPerSubcarrier)
{
    const auto block = generate_symbols_seeded(8, 2, 300, 9);
    auto obs         = transmit_static(identity_pattern(5, 60.0), 8, block, 100.0);
    const double before = raw_decision_ber(obs, block);
    for (Index r = 0; r < 8; ++r) obs.samples.row(r) *= 3.0 + r;
    EXPECT_EQ(raw_decision_ber(obs, block), before);
}
