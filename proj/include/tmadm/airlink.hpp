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

///
/// \file airlink.hpp
///
/// PSK data generation and the post-demodulation observations an
/// eavesdropper collects: one column y = V s per OFDM symbol, with V either
/// fixed (static mode) or redrawn every symbol (defended mode).
///
#ifndef TMADM_AIRLINK_HPP
#define TMADM_AIRLINK_HPP

#include <bit>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <tmadm/common.hpp>
#include <tmadm/tma_core.hpp>

namespace tmadm
{

//------------------------------------------------------------------------------
// PSK constellation
//------------------------------------------------------------------------------

inline bool is_valid_psk_order(int m) noexcept
{
    return m >= 2 && std::has_single_bit(static_cast<unsigned>(m));
}

inline int bits_per_symbol(int m) noexcept
{
    return std::countr_zero(static_cast<unsigned>(m));
}

/// Unit-power point exp(j 2 pi u / M); exact on the real and imaginary axes.
inline Complex psk_point(int u, int m)
{
    u %= m;
    if ((4 * u) % m == 0)
    {
        switch ((4 * u) / m)
        {
            case 0: return {1.0, 0.0};
            case 1: return {0.0, 1.0};
            case 2: return {-1.0, 0.0};
            default: return {0.0, -1.0};
        }
    }
    return std::polar(1.0, 2.0 * pi * u / m);
}

/// Label carried by constellation index u (Gray; identical to natural for BPSK).
inline unsigned psk_label(int u) noexcept
{
    return static_cast<unsigned>(u) ^ (static_cast<unsigned>(u) >> 1);
}

/// Minimum-distance decision for a unit-power M-PSK constellation.
inline int psk_decide(Complex z, int m)
{
    if (m == 2)
    {
        return z.real() >= 0.0 ? 0 : 1;
    }
    const double sector = std::round(std::arg(z) * m / (2.0 * pi));
    return static_cast<int>(((static_cast<long>(sector) % m) + m) % m);
}

//------------------------------------------------------------------------------
// Symbol blocks
//------------------------------------------------------------------------------

///
/// K x H data symbols together with their constellation indices. Bits are
/// derived on demand from the indices.
///
struct SymbolBlock
{
    int psk_order = 2;
    ComplexMatrix symbols;  // K x H
    Eigen::MatrixXi indices; // K x H, constellation index of each symbol

    Index subcarriers() const noexcept
    {
        return symbols.rows();
    }
    Index length() const noexcept
    {
        return symbols.cols();
    }

    /// Bits in column-major symbol order, MSB first within a symbol.
    std::vector<std::uint8_t> bits() const
    {
        const int nb = bits_per_symbol(psk_order);
        std::vector<std::uint8_t> out;
        out.reserve(static_cast<std::size_t>(indices.size() * nb));
        for (Index c = 0; c < indices.cols(); ++c)
        {
            for (Index r = 0; r < indices.rows(); ++r)
            {
                const unsigned label = psk_label(indices(r, c));
                for (int b = nb - 1; b >= 0; --b)
                {
                    out.push_back(static_cast<std::uint8_t>((label >> b) & 1u));
                }
            }
        }
        return out;
    }
};

/// Builds a block from constellation indices.
inline SymbolBlock make_symbol_block(Eigen::MatrixXi indices, int psk_order)
{
    SymbolBlock block;
    block.psk_order = psk_order;
    block.symbols.resize(indices.rows(), indices.cols());
    for (Index c = 0; c < indices.cols(); ++c)
    {
        for (Index r = 0; r < indices.rows(); ++r)
        {
            block.symbols(r, c) = psk_point(indices(r, c), psk_order);
        }
    }
    block.indices = std::move(indices);
    return block;
}

/// i.i.d. uniform M-PSK symbols on K subcarriers over H OFDM symbols.
template <typename Rng>
SymbolBlock generate_symbols(Index subcarriers, int psk_order, Index length, Rng& rng)
{
    if (!is_valid_psk_order(psk_order))
    {
        throw Error(ErrorKind::invalid_argument,
                    "PSK order must be a power of two >= 2, got " + std::to_string(psk_order));
    }
    if (subcarriers < 2 || length < 1)
    {
        throw Error(ErrorKind::invalid_argument, "need K >= 2 and H >= 1");
    }
    std::uniform_int_distribution<int> draw(0, psk_order - 1);
    Eigen::MatrixXi idx(subcarriers, length);
    for (Index c = 0; c < length; ++c)
    {
        for (Index r = 0; r < subcarriers; ++r)
        {
            idx(r, c) = draw(rng);
        }
    }
    return make_symbol_block(std::move(idx), psk_order);
}

/// Symbol stream of the given seed; the dataset format relies on this to
/// regenerate ground truth.
inline SymbolBlock generate_symbols_seeded(Index subcarriers, int psk_order, Index length,
                                           std::uint64_t seed)
{
    auto rng = make_rng(seed, 1);
    return generate_symbols(subcarriers, psk_order, length, rng);
}

//------------------------------------------------------------------------------
// Observations
//------------------------------------------------------------------------------

enum class TransmitMode
{
    static_pattern,
    defended,
};

inline std::string to_string(TransmitMode mode)
{
    return mode == TransmitMode::static_pattern ? "static" : "defended";
}

inline TransmitMode transmit_mode_from_string(const std::string& s)
{
    if (s == "static")
    {
        return TransmitMode::static_pattern;
    }
    if (s == "defended")
    {
        return TransmitMode::defended;
    }
    throw Error(ErrorKind::invalid_argument, "unknown mode '" + s + "'");
}

struct ObservationSet
{
    ComplexMatrix samples; // K x H, column h is y for OFDM symbol h
    double angle_deg  = 0.0;
    double theta0_deg = 0.0;
    int psk_order     = 2;
    TransmitMode mode = TransmitMode::static_pattern;
    TmaConfig pattern;                   // static pattern, or the defended template
    std::vector<TmaConfig> pattern_log;  // defended mode: one draw per column
    std::uint64_t source_seed = 0;
    std::optional<std::uint64_t> pattern_seed;

    Index subcarriers() const noexcept
    {
        return samples.rows();
    }
    Index length() const noexcept
    {
        return samples.cols();
    }
    double phi() const noexcept
    {
        return phi_of(angle_deg, theta0_deg);
    }
};

inline ObservationSet transmit_static(const TmaConfig& cfg, Index subcarriers,
                                      const SymbolBlock& block, double theta_deg)
{
    if (block.subcarriers() != subcarriers)
    {
        throw Error(ErrorKind::dimension_mismatch, "symbol block has " +
                                                       std::to_string(block.subcarriers()) +
                                                       " rows, expected " +
                                                       std::to_string(subcarriers));
    }
    const auto mix = build_mixing_matrix(cfg, subcarriers, theta_deg);
    const auto& g  = mix.generators().generators;

    ObservationSet obs;
    obs.samples.resize(subcarriers, block.length());
    for (Index c = 0; c < block.length(); ++c)
    {
        toeplitz_apply(g, mix.scale(), block.symbols.col(c), obs.samples.col(c));
    }
    obs.angle_deg  = theta_deg;
    obs.theta0_deg = cfg.theta0_deg;
    obs.psk_order  = block.psk_order;
    obs.mode       = TransmitMode::static_pattern;
    obs.pattern    = cfg;
    return obs;
}

///
/// Defended transmitter: every OFDM symbol uses a fresh uniformly random
/// assignment of the ON instants, keeping N and dt from the template.
///
template <typename Rng>
ObservationSet transmit_defended(const TmaConfig& cfg_template, Index subcarriers,
                                 const SymbolBlock& block, double theta_deg, Rng& rng)
{
    require_valid(cfg_template);
    if (block.subcarriers() != subcarriers)
    {
        throw Error(ErrorKind::dimension_mismatch, "symbol block row count differs from K");
    }
    if (subcarriers < 2)
    {
        throw Error(ErrorKind::invalid_argument, "need at least 2 subcarriers");
    }
    const int n      = cfg_template.n_antennas;
    const double phi = phi_of(theta_deg, cfg_template.theta0_deg);
    const GainTable table(n, cfg_template.delta_tau, subcarriers, phi);
    const double scale =
        1.0 / std::sqrt(static_cast<double>(n) * static_cast<double>(subcarriers));

    ObservationSet obs;
    obs.samples.resize(subcarriers, block.length());
    obs.pattern_log.reserve(static_cast<std::size_t>(block.length()));
    std::vector<Complex> g;
    for (Index c = 0; c < block.length(); ++c)
    {
        auto pattern = sample_random_pattern(n, cfg_template.delta_tau, cfg_template.theta0_deg, rng);
        table.generators(offset_indices(pattern), g);
        toeplitz_apply(g, scale, block.symbols.col(c), obs.samples.col(c));
        obs.pattern_log.push_back(std::move(pattern));
    }
    obs.angle_deg  = theta_deg;
    obs.theta0_deg = cfg_template.theta0_deg;
    obs.psk_order  = block.psk_order;
    obs.mode       = TransmitMode::defended;
    obs.pattern    = cfg_template;
    return obs;
}

/// Defended transmission driven by its own seed, so that the pattern log can
/// be regenerated from the seed alone.
inline ObservationSet transmit_defended_seeded(const TmaConfig& cfg_template, Index subcarriers,
                                               const SymbolBlock& block, double theta_deg,
                                               std::uint64_t pattern_seed)
{
    auto rng = make_rng(pattern_seed, 2);
    auto obs = transmit_defended(cfg_template, subcarriers, block, theta_deg, rng);
    obs.pattern_seed = pattern_seed;
    return obs;
}

inline std::vector<TmaConfig> regenerate_pattern_log(const TmaConfig& cfg_template, Index length,
                                                     std::uint64_t pattern_seed)
{
    require_valid(cfg_template);
    auto rng = make_rng(pattern_seed, 2);
    std::vector<TmaConfig> log;
    log.reserve(static_cast<std::size_t>(length));
    for (Index c = 0; c < length; ++c)
    {
        log.push_back(sample_random_pattern(cfg_template.n_antennas, cfg_template.delta_tau,
                                            cfg_template.theta0_deg, rng));
    }
    return log;
}

/// Optional complex AWGN of per-component standard deviation sigma/sqrt(2).
/// Nothing in the experiment pipeline calls this.
template <typename Rng>
void add_awgn(ObservationSet& obs, double sigma, Rng& rng)
{
    std::normal_distribution<double> nd(0.0, sigma / std::sqrt(2.0));
    for (Index c = 0; c < obs.samples.cols(); ++c)
    {
        for (Index r = 0; r < obs.samples.rows(); ++r)
        {
            obs.samples(r, c) += Complex(nd(rng), nd(rng));
        }
    }
}

//------------------------------------------------------------------------------
// BER
//------------------------------------------------------------------------------

/// Hamming distance over length.
inline double ber(std::span<const std::uint8_t> truth, std::span<const std::uint8_t> estimate)
{
    if (truth.size() != estimate.size())
    {
        throw Error(ErrorKind::dimension_mismatch, "bit sequences differ in length");
    }
    if (truth.empty())
    {
        throw Error(ErrorKind::invalid_argument, "empty bit sequence");
    }
    std::size_t errors = 0;
    for (std::size_t i = 0; i < truth.size(); ++i)
    {
        errors += (truth[i] != estimate[i]) ? 1u : 0u;
    }
    return static_cast<double>(errors) / static_cast<double>(truth.size());
}

/// Hard-decides every entry of a K x H matrix onto the M-PSK constellation.
inline SymbolBlock decide_symbols(const ComplexMatrix& z, int psk_order)
{
    Eigen::MatrixXi idx(z.rows(), z.cols());
    for (Index c = 0; c < z.cols(); ++c)
    {
        for (Index r = 0; r < z.rows(); ++r)
        {
            idx(r, c) = psk_decide(z(r, c), psk_order);
        }
    }
    return make_symbol_block(std::move(idx), psk_order);
}

///
/// BER of the receiver that takes the scrambled samples at face value: each
/// subcarrier is normalized to unit average power and every sample is
/// hard-decided onto the constellation (for BPSK, the sign of the real part).
///
inline double raw_decision_ber(const ObservationSet& obs, const SymbolBlock& block)
{
    if (obs.samples.rows() != block.symbols.rows() || obs.samples.cols() != block.symbols.cols())
    {
        throw Error(ErrorKind::dimension_mismatch, "observations and symbols differ in shape");
    }
    ComplexMatrix normalized = obs.samples;
    for (Index r = 0; r < normalized.rows(); ++r)
    {
        const double rms = std::sqrt(normalized.row(r).squaredNorm() /
                                     static_cast<double>(normalized.cols()));
        if (rms > 0.0)
        {
            normalized.row(r) /= rms;
        }
    }
    const auto decided = decide_symbols(normalized, block.psk_order);
    const auto truth   = block.bits();
    const auto est     = decided.bits();
    return ber(truth, est);
}

} // namespace tmadm

#endif // TMADM_AIRLINK_HPP
