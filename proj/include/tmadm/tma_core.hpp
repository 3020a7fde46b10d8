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
/// \file tma_core.hpp
///
/// Closed-form mathematics of a time-modulated array (TMA) driving an OFDM
/// waveform: switching-parameter validation, the Fourier coefficients of the
/// ON-OFF switching functions, the per-harmonic array gains \f$V_m\f$ and the
/// Toeplitz mixing matrix they generate.
///
/// The array is a half-wavelength uniform linear array of \f$N\f$ elements.
/// Element \f$n\f$ (0-based here) switches ON at normalized instant
/// \f$\tau_n\f$ for a normalized duration \f$\Delta\tau\f$ common to all
/// elements. With \f$\varphi = \cos\theta - \cos\theta_0\f$,
/// \f[
///   a_{m}(\tau) = \Delta\tau\,\mathrm{sinc}(m\pi\Delta\tau)\,
///                 e^{-jm\pi(2\tau + \Delta\tau)}, \qquad
///   V_m = \sum_{n=0}^{N-1} a_m(\tau_n)\, e^{jn\pi\varphi},
/// \f]
/// and the mixing matrix is \f$V(i,j) = V_{i-j}/\sqrt{NK}\f$.
///
#ifndef TMADM_TMA_CORE_HPP
#define TMADM_TMA_CORE_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include <tmadm/common.hpp>

namespace tmadm
{

//------------------------------------------------------------------------------
// Configuration and validation
//------------------------------------------------------------------------------

struct TmaConfig
{
    int n_antennas = 0;
    double delta_tau = 0.0;
    std::vector<double> tau_offsets;
    double theta0_deg = 90.0;
};

struct Violation
{
    std::string condition; // "C1", "C2", "C3", "shape" or "range"
    std::string detail;
};

struct ValidationVerdict
{
    std::vector<Violation> violations;

    bool ok() const noexcept
    {
        return violations.empty();
    }

    bool violates(std::string_view condition) const noexcept
    {
        return std::any_of(violations.begin(), violations.end(),
                           [&](const Violation& v) { return v.condition == condition; });
    }
};

namespace detail
{
// ON instants are accepted when within this distance of the lattice (h-1)/N.
inline constexpr double lattice_tolerance = 1e-9;

inline std::optional<int> lattice_index(double tau, int n)
{
    const double scaled  = tau * n;
    const double rounded = std::round(scaled);
    if (std::abs(scaled - rounded) > lattice_tolerance * n || rounded < 0.0 || rounded >= n)
    {
        return std::nullopt;
    }
    return static_cast<int>(rounded);
}
} // namespace detail

///
/// Checks the switching rules that make the array scramble everywhere except
/// along theta0:
///  - C1: every ON instant lies on the lattice {(h-1)/N} and dt lies in [0,1];
///  - C2: ON instants are pairwise distinct (the common dt is structural);
///  - C3: the total ON time N*dt is nonzero.
///
inline ValidationVerdict validate_tma_params(const TmaConfig& cfg)
{
    ValidationVerdict verdict;
    auto fail = [&](std::string cond, std::string detail) {
        verdict.violations.push_back({std::move(cond), std::move(detail)});
    };

    if (cfg.n_antennas < 1)
    {
        fail("shape", "n_antennas must be positive");
        return verdict;
    }
    if (static_cast<int>(cfg.tau_offsets.size()) != cfg.n_antennas)
    {
        fail("shape", "tau_offsets has " + std::to_string(cfg.tau_offsets.size()) +
                          " entries, expected " + std::to_string(cfg.n_antennas));
    }
    if (!(cfg.theta0_deg >= 0.0 && cfg.theta0_deg <= 180.0))
    {
        fail("range", "theta0_deg outside [0, 180]");
    }
    if (!(cfg.delta_tau >= 0.0 && cfg.delta_tau <= 1.0))
    {
        fail("C1", "delta_tau outside [0, 1]");
    }

    std::vector<int> seen;
    bool off_lattice = false;
    for (double tau : cfg.tau_offsets)
    {
        if (auto h = detail::lattice_index(tau, cfg.n_antennas))
        {
            seen.push_back(*h);
        }
        else
        {
            off_lattice = true;
        }
    }
    if (off_lattice)
    {
        fail("C1", "an ON instant is not of the form (h-1)/N");
    }
    std::sort(seen.begin(), seen.end());
    if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    {
        fail("C2", "ON instants are not pairwise distinct");
    }
    if (!(cfg.n_antennas * cfg.delta_tau != 0.0))
    {
        fail("C3", "total ON time is zero");
    }
    return verdict;
}

inline void require_valid(const TmaConfig& cfg)
{
    const auto verdict = validate_tma_params(cfg);
    if (!verdict.ok())
    {
        std::string msg;
        for (const auto& v : verdict.violations)
        {
            msg += (msg.empty() ? "" : "; ") + v.condition + " (" + v.detail + ")";
        }
        throw Error(ErrorKind::invalid_config, msg);
    }
}

/// Lattice indices h (0-based) of the ON instants of a valid configuration.
inline std::vector<int> offset_indices(const TmaConfig& cfg)
{
    std::vector<int> idx;
    idx.reserve(cfg.tau_offsets.size());
    for (double tau : cfg.tau_offsets)
    {
        idx.push_back(detail::lattice_index(tau, cfg.n_antennas).value_or(-1));
    }
    return idx;
}

//------------------------------------------------------------------------------
// Harmonic coefficients
//------------------------------------------------------------------------------

/// Unnormalized sinc, sin(x)/x with sinc(0) = 1.
inline double sinc(double x) noexcept
{
    if (std::abs(x) < 1e-6)
    {
        const double x2 = x * x;
        return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sin(x) / x;
}

/// Fourier coefficient of a unit-period square wave that is ON on
/// [tau_o, tau_o + delta_tau).
inline Complex harmonic_coefficient(int m, double delta_tau, double tau_o)
{
    const double mag   = delta_tau * sinc(m * pi * delta_tau);
    const double phase = -m * pi * (2.0 * tau_o + delta_tau);
    return std::polar(mag, phase);
}

///
/// Independent check of harmonic_coefficient: integrates
/// \f$\int_0^1 U(t) e^{-j2\pi m t}\,dt\f$ with the composite midpoint rule over
/// the ON interval. The integrand is 1-periodic, so the interval is not wrapped
/// explicitly.
///
inline Complex harmonic_coefficient_oracle(int m, double delta_tau, double tau_o, long steps)
{
    if (steps < 10'000)
    {
        throw Error(ErrorKind::invalid_argument, "oracle needs at least 1e4 steps");
    }
    const double h = delta_tau / static_cast<double>(steps);
    double re = 0.0;
    double im = 0.0;
    for (long k = 0; k < steps; ++k)
    {
        const double t   = tau_o + (static_cast<double>(k) + 0.5) * h;
        const double arg = -2.0 * pi * m * t;
        re += std::cos(arg);
        im += std::sin(arg);
    }
    return {re * h, im * h};
}

//------------------------------------------------------------------------------
// Harmonic gains
//------------------------------------------------------------------------------

namespace detail
{
// Sums the per-antenna terms in a canonical (lexicographic) order so that V_m
// depends only on the multiset of terms. Along theta0 every antenna phasor is
// exactly 1, which makes the result independent of how ON instants are
// assigned to antennas, bit for bit.
inline Complex canonical_sum(std::span<Complex> terms)
{
    std::sort(terms.begin(), terms.end(), [](const Complex& a, const Complex& b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });
    Complex acc{0.0, 0.0};
    for (const auto& t : terms)
    {
        acc += t;
    }
    return acc;
}

inline Complex antenna_phasor(int n, double phi)
{
    return std::polar(1.0, n * pi * phi);
}
} // namespace detail

/// V_m for an already validated configuration and a given phi.
inline Complex harmonic_gain_at_phi(int m, const TmaConfig& cfg, double phi)
{
    std::vector<Complex> terms(cfg.tau_offsets.size());
    for (std::size_t n = 0; n < terms.size(); ++n)
    {
        terms[n] = harmonic_coefficient(m, cfg.delta_tau, cfg.tau_offsets[n]) *
                   detail::antenna_phasor(static_cast<int>(n), phi);
    }
    return detail::canonical_sum(terms);
}

inline Complex harmonic_gain(int m, const TmaConfig& cfg, double theta_deg)
{
    require_valid(cfg);
    if (!(theta_deg >= 0.0 && theta_deg <= 180.0))
    {
        throw Error(ErrorKind::invalid_argument, "theta outside [0, 180]");
    }
    return harmonic_gain_at_phi(m, cfg, phi_of(theta_deg, cfg.theta0_deg));
}

///
/// The 2K-1 harmonic gains V_{-(K-1)} .. V_{K-1} seen from one direction.
///
struct HarmonicGainVector
{
    Index subcarriers = 0;          // K
    std::vector<Complex> generators; // generators[m + K - 1] = V_m
    double angle_deg = 0.0;
    double phi       = 0.0;

    Complex at(Index m) const
    {
        return generators[static_cast<std::size_t>(m + subcarriers - 1)];
    }

    Index min_index() const noexcept
    {
        return -(subcarriers - 1);
    }
    Index max_index() const noexcept
    {
        return subcarriers - 1;
    }
};

///
/// Precomputed a_m(h/N) and antenna phasors for one (N, dt, K, phi). Lets the
/// defended transmitter rebuild generators for a new ON-instant assignment
/// without recomputing transcendental functions; the values are identical to
/// the ones harmonic_gain_at_phi produces for the same assignment.
///
class GainTable
{
public:
    GainTable(int n_antennas, double delta_tau, Index subcarriers, double phi)
        : m_n(n_antennas),
          m_k(subcarriers),
          m_coeff(static_cast<std::size_t>((2 * subcarriers - 1) * n_antennas)),
          m_phasor(static_cast<std::size_t>(n_antennas))
    {
        for (Index m = -(m_k - 1); m <= m_k - 1; ++m)
        {
            for (int h = 0; h < m_n; ++h)
            {
                m_coeff[slot(m, h)] = harmonic_coefficient(static_cast<int>(m), delta_tau,
                                                           lattice_tau(h, m_n));
            }
        }
        for (int n = 0; n < m_n; ++n)
        {
            m_phasor[static_cast<std::size_t>(n)] = detail::antenna_phasor(n, phi);
        }
    }

    static double lattice_tau(int h, int n) noexcept
    {
        return static_cast<double>(h) / static_cast<double>(n);
    }

    int antennas() const noexcept
    {
        return m_n;
    }
    Index subcarriers() const noexcept
    {
        return m_k;
    }

    Complex coefficient(Index m, int h) const
    {
        return m_coeff[slot(m, h)];
    }
    Complex phasor(int n) const
    {
        return m_phasor[static_cast<std::size_t>(n)];
    }

    /// Generators for the assignment antenna n -> lattice index h_of_antenna[n].
    void generators(std::span<const int> h_of_antenna, std::vector<Complex>& out) const
    {
        out.resize(static_cast<std::size_t>(2 * m_k - 1));
        std::vector<Complex> terms(static_cast<std::size_t>(m_n));
        for (Index m = -(m_k - 1); m <= m_k - 1; ++m)
        {
            for (int n = 0; n < m_n; ++n)
            {
                terms[static_cast<std::size_t>(n)] =
                    coefficient(m, h_of_antenna[static_cast<std::size_t>(n)]) * phasor(n);
            }
            out[static_cast<std::size_t>(m + m_k - 1)] = detail::canonical_sum(terms);
        }
    }

private:
    std::size_t slot(Index m, int h) const
    {
        return static_cast<std::size_t>((m + m_k - 1) * m_n + h);
    }

    int m_n;
    Index m_k;
    std::vector<Complex> m_coeff;
    std::vector<Complex> m_phasor;
};

//------------------------------------------------------------------------------
// Mixing matrix
//------------------------------------------------------------------------------

///
/// K x K Toeplitz mixing matrix stored through its generators. The dense form
/// is only built on request.
///
class MixingMatrix
{
public:
    MixingMatrix() = default;

    MixingMatrix(HarmonicGainVector gains, double scale)
        : m_gains(std::move(gains)), m_scale(scale)
    {
    }

    Index size() const noexcept
    {
        return m_gains.subcarriers;
    }
    double scale() const noexcept
    {
        return m_scale;
    }
    const HarmonicGainVector& generators() const noexcept
    {
        return m_gains;
    }

    Complex entry(Index i, Index j) const
    {
        return m_gains.at(i - j) * m_scale;
    }

    ComplexMatrix dense() const
    {
        const Index k = size();
        ComplexMatrix out(k, k);
        for (Index j = 0; j < k; ++j)
        {
            for (Index i = 0; i < k; ++i)
            {
                out(i, j) = entry(i, j);
            }
        }
        return out;
    }

private:
    HarmonicGainVector m_gains;
    double m_scale = 0.0;
};

///
/// y = T s for the Toeplitz matrix T(i,j) = scale * g[i - j + K - 1]. Both
/// transmitter modes go through this one kernel so their outputs agree bit
/// for bit whenever their generators do.
///
template <typename InVec, typename OutVec>
void toeplitz_apply(std::span<const Complex> generators, double scale, const InVec& s, OutVec&& y)
{
    const Index k = s.size();
    for (Index i = 0; i < k; ++i)
    {
        Complex acc{0.0, 0.0};
        const Complex* g = generators.data() + (i + k - 1);
        for (Index j = 0; j < k; ++j)
        {
            acc += g[-j] * s[j];
        }
        y[i] = acc * scale;
    }
}

inline MixingMatrix build_mixing_matrix(const TmaConfig& cfg, Index subcarriers, double theta_deg)
{
    require_valid(cfg);
    if (subcarriers < 2)
    {
        throw Error(ErrorKind::invalid_argument, "need at least 2 subcarriers");
    }
    if (!(theta_deg >= 0.0 && theta_deg <= 180.0))
    {
        throw Error(ErrorKind::invalid_argument, "theta outside [0, 180]");
    }
    HarmonicGainVector gains;
    gains.subcarriers = subcarriers;
    gains.angle_deg   = theta_deg;
    gains.phi         = phi_of(theta_deg, cfg.theta0_deg);
    gains.generators.resize(static_cast<std::size_t>(2 * subcarriers - 1));
    for (Index m = gains.min_index(); m <= gains.max_index(); ++m)
    {
        gains.generators[static_cast<std::size_t>(m + subcarriers - 1)] =
            harmonic_gain_at_phi(static_cast<int>(m), cfg, gains.phi);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.n_antennas) *
                                         static_cast<double>(subcarriers));
    return MixingMatrix(std::move(gains), scale);
}

//------------------------------------------------------------------------------
// Closed forms used by the phase resolver
//------------------------------------------------------------------------------

/// Signed Dirichlet kernel sin(N pi phi / 2) / sin(pi phi / 2).
inline double dirichlet(int n, double phi)
{
    const double den = std::sin(pi * phi / 2.0);
    if (std::abs(den) < 1e-9)
    {
        // Removable singularity: recover the real kernel from the direct sum.
        Complex acc{0.0, 0.0};
        for (int k = 0; k < n; ++k)
        {
            acc += detail::antenna_phasor(k, phi);
        }
        return (acc * std::polar(1.0, -(n - 1) * pi * phi / 2.0)).real();
    }
    return std::sin(n * pi * phi / 2.0) / den;
}

/// V_0 = dt * sin(N pi phi/2) / sin(pi phi/2) * exp(j (N-1) pi phi / 2).
inline Complex v0_closed_form(int n, double delta_tau, double phi)
{
    if (std::abs(std::sin(pi * phi / 2.0)) < 1e-9)
    {
        Complex acc{0.0, 0.0};
        for (int k = 0; k < n; ++k)
        {
            acc += detail::antenna_phasor(k, phi);
        }
        return delta_tau * acc;
    }
    return delta_tau * dirichlet(n, phi) * std::polar(1.0, (n - 1) * pi * phi / 2.0);
}

/// Re(V_0)/Im(V_0) = 1/tan((N-1) pi phi / 2); empty when the tangent vanishes.
inline std::optional<double> lambda_of(int n, double phi)
{
    const double arg = (n - 1) * pi * phi / 2.0;
    if (std::abs(std::sin(arg)) < 1e-12)
    {
        return std::nullopt;
    }
    return std::cos(arg) / std::sin(arg);
}

//------------------------------------------------------------------------------
// Defense pattern sampling
//------------------------------------------------------------------------------

///
/// Draws a configuration whose ON instants are a uniformly random assignment
/// of the lattice {(h-1)/N} to the N antennas.
///
template <typename Rng>
TmaConfig sample_random_pattern(int n_antennas, double delta_tau, double theta0_deg, Rng& rng)
{
    if (n_antennas < 2)
    {
        throw Error(ErrorKind::invalid_argument, "random patterns need N >= 2");
    }
    if (!(delta_tau > 0.0 && delta_tau <= 1.0))
    {
        throw Error(ErrorKind::invalid_argument, "delta_tau outside (0, 1]");
    }
    std::vector<int> h(static_cast<std::size_t>(n_antennas));
    std::iota(h.begin(), h.end(), 0);
    std::shuffle(h.begin(), h.end(), rng);

    TmaConfig cfg;
    cfg.n_antennas = n_antennas;
    cfg.delta_tau  = delta_tau;
    cfg.theta0_deg = theta0_deg;
    cfg.tau_offsets.reserve(h.size());
    for (int idx : h)
    {
        cfg.tau_offsets.push_back(GainTable::lattice_tau(idx, n_antennas));
    }
    return cfg;
}

/// The configuration with ON instant (n-1)/N on antenna n and dt = 1/N.
inline TmaConfig identity_pattern(int n_antennas, double theta0_deg)
{
    TmaConfig cfg;
    cfg.n_antennas = n_antennas;
    cfg.delta_tau  = 1.0 / n_antennas;
    cfg.theta0_deg = theta0_deg;
    for (int h = 0; h < n_antennas; ++h)
    {
        cfg.tau_offsets.push_back(GainTable::lattice_tau(h, n_antennas));
    }
    return cfg;
}

//------------------------------------------------------------------------------
// JSON
//------------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const TmaConfig& cfg)
{
    j = nlohmann::json{{"n_antennas", cfg.n_antennas},
                       {"delta_tau", cfg.delta_tau},
                       {"tau_offsets", cfg.tau_offsets},
                       {"theta0_deg", cfg.theta0_deg}};
}

inline void from_json(const nlohmann::json& j, TmaConfig& cfg)
{
    j.at("n_antennas").get_to(cfg.n_antennas);
    j.at("delta_tau").get_to(cfg.delta_tau);
    j.at("tau_offsets").get_to(cfg.tau_offsets);
    j.at("theta0_deg").get_to(cfg.theta0_deg);
}

} // namespace tmadm

#endif // TMADM_TMA_CORE_HPP
