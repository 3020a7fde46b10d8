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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include <tmadm/tma_core.hpp>

using namespace tmadm;

namespace
{

// Brute-force reference for V_m: oracle coefficients, summed in antenna order.
Complex gain_from_oracle(int m, const TmaConfig& cfg, double phi, long steps = 1'000'000)
{
    Complex acc{0.0, 0.0};
    for (int n = 0; n < cfg.n_antennas; ++n)
    {
        acc += harmonic_coefficient_oracle(m, cfg.delta_tau, cfg.tau_offsets[static_cast<std::size_t>(n)], steps) *
               std::exp(Complex(0.0, n * pi * phi));
    }
    return acc;
}

TmaConfig random_config(std::mt19937_64& rng, int n_min = 2, int n_max = 16)
{
    std::uniform_int_distribution<int> nd(n_min, n_max);
    std::uniform_real_distribution<double> dt(0.01, 1.0);
    std::uniform_real_distribution<double> th(0.0, 180.0);
    const int n = nd(rng);
    return sample_random_pattern(n, dt(rng), th(rng), rng);
}

// ON duration a whole number of slots, q/N. Scrambling vanishes at theta0
// only for these: with N*dt fractional the m = N harmonic survives.
TmaConfig random_slot_config(std::mt19937_64& rng)
{
    std::uniform_int_distribution<int> nd(2, 16);
    std::uniform_real_distribution<double> th(0.0, 180.0);
    const int n = nd(rng);
    std::uniform_int_distribution<int> qd(1, n);
    return sample_random_pattern(n, static_cast<double>(qd(rng)) / n, th(rng), rng);
}

} // namespace

TEST(Validate, AcceptsLatticeFamily)
{
    const auto cfg = identity_pattern(7, 60.0);
    EXPECT_TRUE(validate_tma_params(cfg).ok());
}

TEST(Validate, DuplicateOffsets)
{
    TmaConfig cfg{3, 1.0 / 3, {0.0, 0.0, 1.0 / 3}, 90.0};
    const auto v = validate_tma_params(cfg);
    EXPECT_TRUE(v.violates("C2"));
    EXPECT_FALSE(v.violates("C1"));
}

TEST(Validate, ZeroOnTime)
{
    TmaConfig cfg{4, 0.0, {0.0, 0.25, 0.5, 0.75}, 90.0};
    EXPECT_TRUE(validate_tma_params(cfg).violates("C3"));
}

TEST(Validate, OffLatticeAndShape)
{
    TmaConfig off{3, 0.2, {0.0, 0.3, 2.0 / 3}, 90.0};
    EXPECT_TRUE(validate_tma_params(off).violates("C1"));

    TmaConfig shape{3, 0.2, {0.0, 1.0 / 3}, 90.0};
    EXPECT_TRUE(validate_tma_params(shape).violates("shape"));

    TmaConfig wide{2, 1.5, {0.0, 0.5}, 90.0};
    EXPECT_TRUE(validate_tma_params(wide).violates("C1"));

    TmaConfig angle{2, 0.5, {0.0, 0.5}, 200.0};
    EXPECT_TRUE(validate_tma_params(angle).violates("range"));

    EXPECT_THROW(require_valid(off), Error);
}

TEST(Coefficient, DcTerm)
{
    const auto a = harmonic_coefficient(0, 1.0 / 7, 0.0);
    EXPECT_EQ(a.real(), 1.0 / 7);
    EXPECT_EQ(a.imag(), 0.0);
}

TEST(Coefficient, SincZero)
{
    EXPECT_LT(std::abs(harmonic_coefficient(7, 1.0 / 7, 3.0 / 7)), 1e-15);
}

TEST(Coefficient, FirstHarmonicValue)
{
    const auto a = harmonic_coefficient(1, 1.0 / 7, 2.0 / 7);
    EXPECT_NEAR(std::abs(a), 0.1381, 5e-5);
    EXPECT_NEAR(std::arg(a), -5.0 * pi / 7.0, 1e-12);
    EXPECT_LT(std::abs(a - harmonic_coefficient_oracle(1, 1.0 / 7, 2.0 / 7, 1'000'000)), 1e-8);
}

TEST(Coefficient, SeriesBranchIsContinuous)
{
    for (double x : {1e-7, 5e-7, 9.9e-7, 1.01e-6, 2e-6})
    {
        EXPECT_NEAR(sinc(x), std::sin(x) / x, 1e-15) << x;
        EXPECT_NEAR(sinc(-x), sinc(x), 0.0);
    }
    EXPECT_EQ(sinc(0.0), 1.0);
}

TEST(Oracle, KnownIntegrals)
{
    EXPECT_NEAR(std::abs(harmonic_coefficient_oracle(0, 0.5, 0.0, 100'000) - Complex(0.5, 0.0)), 0.0, 1e-12);
    EXPECT_LT(std::abs(harmonic_coefficient_oracle(2, 1.0, 0.0, 100'000)), 1e-10);
    EXPECT_THROW(harmonic_coefficient_oracle(1, 0.5, 0.0, 9'999), Error);
}

TEST(Oracle, WrapsPastOnePeriod)
{
    // ON on [6/7, 8/7): the integrand is 1-periodic so no explicit wrap is needed.
    const auto a = harmonic_coefficient_oracle(3, 2.0 / 7, 6.0 / 7, 1'000'000);
    EXPECT_LT(std::abs(a - harmonic_coefficient(3, 2.0 / 7, 6.0 / 7)), 1e-8);
}

TEST(Oracle, RandomGridAgreement)
{
    std::mt19937_64 rng(20261015);
    std::uniform_int_distribution<int> md(-40, 40);
    std::uniform_real_distribution<double> dt(0.0, 1.0);
    std::uniform_real_distribution<double> tau(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 60; ++i)
    {
        const int m       = md(rng);
        const double d    = dt(rng);
        const double t    = tau(rng);
        const double diff = std::abs(harmonic_coefficient(m, d, t) - harmonic_coefficient_oracle(m, d, t, 1'000'000));
        worst             = std::max(worst, diff);
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Gain, ZeroOffBeam)
{
    const auto cfg = identity_pattern(7, 60.0);
    EXPECT_LT(std::abs(harmonic_gain(1, cfg, 60.0)), 1e-12);
    EXPECT_NEAR(harmonic_gain(0, cfg, 60.0).real(), 1.0, 1e-15);
    EXPECT_NEAR(harmonic_gain(0, cfg, 60.0).imag(), 0.0, 1e-15);
}

TEST(Gain, MatchesOracleSum)
{
    std::mt19937_64 rng(7);
    const auto cfg   = sample_random_pattern(7, 1.0 / 7, 60.0, rng);
    const double phi = phi_of(30.0, 60.0);
    EXPECT_NEAR(phi, 0.3660, 5e-5);
    EXPECT_LT(std::abs(harmonic_gain(2, cfg, 30.0) - gain_from_oracle(2, cfg, phi)), 1e-8);
}

TEST(Gain, FractionalSlotLeaksAtTheta0)
{
    TmaConfig cfg{2, 0.3, {0.0, 0.5}, 90.0};
    EXPECT_GT(std::abs(harmonic_gain(2, cfg, 90.0)), 0.1);
    EXPECT_LT(std::abs(harmonic_gain(1, cfg, 90.0)), 1e-15);
}

TEST(Gain, RejectsBadInput)
{
    TmaConfig bad{3, 0.2, {0.0, 0.0, 1.0 / 3}, 90.0};
    EXPECT_THROW(harmonic_gain(0, bad, 40.0), Error);
    EXPECT_THROW(harmonic_gain(0, identity_pattern(3, 90.0), 181.0), Error);
}

TEST(Gain, OffBeamZeroForRandomConfigs)
{
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i)
    {
        const auto cfg = random_slot_config(rng);
        const auto mix = build_mixing_matrix(cfg, 16, cfg.theta0_deg);
        for (Index m = -15; m <= 15; ++m)
        {
            if (m == 0) continue;
            EXPECT_LT(std::abs(mix.generators().at(m)), 1e-9);
        }
        EXPECT_NEAR(std::abs(mix.generators().at(0) - Complex(cfg.n_antennas * cfg.delta_tau, 0.0)), 0.0, 1e-12);
    }
}

TEST(Mixing, DiagonalOnBeam)
{
    const auto mix = build_mixing_matrix(identity_pattern(7, 60.0), 16, 60.0);
    const auto d   = mix.dense();
    const double expected = (1.0 / 7.0) * std::sqrt(7.0 / 16.0);
    EXPECT_NEAR(expected, 0.0945, 5e-5);
    for (Index i = 0; i < 16; ++i)
    {
        for (Index j = 0; j < 16; ++j)
        {
            if (i == j)
            {
                EXPECT_NEAR(d(i, j).real(), expected, 1e-15);
                EXPECT_NEAR(d(i, j).imag(), 0.0, 1e-15);
            }
            else
            {
                EXPECT_LT(std::abs(d(i, j)), 1e-9);
            }
        }
    }
}

TEST(Mixing, ToeplitzExactly)
{
    std::mt19937_64 rng(3);
    const auto cfg = sample_random_pattern(5, 0.2, 70.0, rng);
    const auto d   = build_mixing_matrix(cfg, 9, 20.0).dense();
    for (Index i = 0; i + 1 < 9; ++i)
    {
        for (Index j = 0; j + 1 < 9; ++j)
        {
            EXPECT_EQ(d(i, j), d(i + 1, j + 1));
        }
    }
}

TEST(Mixing, MatchesOracleAssembly)
{
    std::mt19937_64 rng(5);
    const auto cfg   = sample_random_pattern(7, 1.0 / 7, 60.0, rng);
    const double phi = phi_of(30.0, 60.0);
    const auto d     = build_mixing_matrix(cfg, 16, 30.0).dense();
    std::map<int, Complex> gen;
    for (int m = -15; m <= 15; ++m) gen[m] = gain_from_oracle(m, cfg, phi, 200'000) / std::sqrt(7.0 * 16.0);
    double worst = 0.0;
    for (Index i = 0; i < 16; ++i)
    {
        for (Index j = 0; j < 16; ++j)
        {
            worst = std::max(worst, std::abs(d(i, j) - gen[static_cast<int>(i - j)]));
        }
    }
    EXPECT_LT(worst, 1e-8);
}

TEST(Mixing, RejectsSmallK)
{
    EXPECT_THROW(build_mixing_matrix(identity_pattern(3, 90.0), 1, 40.0), Error);
}

TEST(Mixing, ToeplitzApplyMatchesDense)
{
    std::mt19937_64 rng(9);
    const auto cfg = sample_random_pattern(6, 0.3, 45.0, rng);
    const auto mix = build_mixing_matrix(cfg, 12, 100.0);
    ComplexVector s = ComplexVector::Random(12);
    ComplexVector y(12);
    toeplitz_apply(mix.generators().generators, mix.scale(), s, y);
    EXPECT_LT((y - mix.dense() * s).norm(), 1e-14);
}

TEST(GainTableTest, AgreesWithDirectGains)
{
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial)
    {
        const auto cfg   = sample_random_pattern(7, 1.0 / 7, 50.0, rng);
        const double phi = phi_of(120.0, 50.0);
        GainTable table(7, 1.0 / 7, 16, phi);
        std::vector<Complex> g;
        table.generators(offset_indices(cfg), g);
        const auto mix = build_mixing_matrix(cfg, 16, 120.0);
        for (Index m = -15; m <= 15; ++m)
        {
            EXPECT_LT(std::abs(g[static_cast<std::size_t>(m + 15)] - mix.generators().at(m)), 1e-15);
        }
    }
}

TEST(ClosedForm, V0Limits)
{
    EXPECT_NEAR(std::abs(v0_closed_form(7, 1.0 / 7, 0.0) - Complex(1.0, 0.0)), 0.0, 1e-15);
    EXPECT_LT(std::abs(v0_closed_form(2, 0.5, 1.0)), 1e-15);
}

TEST(ClosedForm, V0MatchesGainOnRandomGrid)
{
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> ph(-1.999, 1.999);
    double worst = 0.0;
    for (int i = 0; i < 500; ++i)
    {
        const auto cfg   = random_config(rng, 2, 16);
        const double phi = ph(rng);
        worst = std::max(worst, std::abs(v0_closed_form(cfg.n_antennas, cfg.delta_tau, phi) -
                                         harmonic_gain_at_phi(0, cfg, phi)));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(ClosedForm, V0NearRemovableSingularity)
{
    for (double phi : {0.0, 1e-12, -1e-10, 2.0 - 1e-12})
    {
        const auto cfg = identity_pattern(5, 90.0);
        EXPECT_LT(std::abs(v0_closed_form(5, 0.2, phi) - harmonic_gain_at_phi(0, cfg, phi)), 1e-10) << phi;
    }
}

TEST(ClosedForm, LambdaValues)
{
    const double phi = phi_of(30.0, 60.0);
    const auto l     = lambda_of(7, phi);
    ASSERT_TRUE(l.has_value());
    EXPECT_NEAR(*l, 1.0 / std::tan(3.0 * pi * phi), 1e-12);
    const auto v0 = v0_closed_form(7, 1.0 / 7, phi);
    EXPECT_NEAR(*l, v0.real() / v0.imag(), 1e-10);

    EXPECT_FALSE(lambda_of(1, 0.37).has_value());
    ASSERT_TRUE(lambda_of(3, 0.5).has_value());
    EXPECT_NEAR(*lambda_of(3, 0.5), 0.0, 1e-15);
}

TEST(ClosedForm, LambdaConsistencyOnGrid)
{
    std::mt19937_64 rng(19);
    std::uniform_int_distribution<int> nd(2, 16);
    std::uniform_real_distribution<double> ph(-1.99, 1.99);
    for (int i = 0; i < 500; ++i)
    {
        const int n      = nd(rng);
        const double phi = ph(rng);
        const auto l     = lambda_of(n, phi);
        const auto v0    = v0_closed_form(n, 0.5, phi);
        if (!l || std::abs(v0.imag()) < 1e-9 * std::abs(v0)) continue;
        EXPECT_LT(std::abs(*l - v0.real() / v0.imag()), 1e-8 * (1.0 + std::abs(*l)));
    }
}

TEST(Sampler, SupportAndValidity)
{
    auto rng = make_rng(42, 2);
    for (int i = 0; i < 200; ++i)
    {
        const auto cfg = sample_random_pattern(3, 1.0 / 3, 90.0, rng);
        EXPECT_TRUE(validate_tma_params(cfg).ok());
        auto idx = offset_indices(cfg);
        std::sort(idx.begin(), idx.end());
        EXPECT_EQ(idx, (std::vector<int>{0, 1, 2}));
    }
    EXPECT_THROW(sample_random_pattern(1, 1.0, 90.0, rng), Error);
    EXPECT_THROW(sample_random_pattern(3, 0.0, 90.0, rng), Error);
}

TEST(Sampler, UniformOverPermutations)
{
    auto rng = make_rng(99, 2);
    std::map<std::vector<int>, int> counts;
    const int draws = 10'000;
    for (int i = 0; i < draws; ++i)
    {
        counts[offset_indices(sample_random_pattern(3, 1.0 / 3, 90.0, rng))]++;
    }
    ASSERT_EQ(counts.size(), 6u);
    double chi2 = 0.0;
    for (const auto& [perm, c] : counts)
    {
        EXPECT_NEAR(static_cast<double>(c) / draws, 1.0 / 6.0, 0.02);
        const double e = draws / 6.0;
        chi2 += (c - e) * (c - e) / e;
    }
    // 5 degrees of freedom, 0.999 quantile.
    EXPECT_LT(chi2, 20.52);
}

TEST(Sampler, DefensePatternsShareTheOnBeamMatrix)
{
    auto rng       = make_rng(1, 2);
    const auto ref = build_mixing_matrix(identity_pattern(7, 40.0), 16, 40.0).dense();
    for (int i = 0; i < 50; ++i)
    {
        const auto d = build_mixing_matrix(sample_random_pattern(7, 1.0 / 7, 40.0, rng), 16, 40.0).dense();
        EXPECT_EQ(d.diagonal(), ref.diagonal());
        EXPECT_LT((d - ref).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Json, RoundTrip)
{
    auto rng       = make_rng(4, 2);
    const auto cfg = sample_random_pattern(7, 1.0 / 7, 60.0, rng);
    nlohmann::json j = cfg;
    EXPECT_TRUE(j.contains("n_antennas"));
    EXPECT_TRUE(j.contains("delta_tau"));
    EXPECT_TRUE(j.contains("tau_offsets"));
    EXPECT_TRUE(j.contains("theta0_deg"));
    const auto back = nlohmann::json::parse(j.dump()).get<TmaConfig>();
    EXPECT_EQ(back.n_antennas, cfg.n_antennas);
    EXPECT_EQ(back.delta_tau, cfg.delta_tau);
    EXPECT_EQ(back.tau_offsets, cfg.tau_offsets);
    EXPECT_EQ(back.theta0_deg, cfg.theta0_deg);
}
