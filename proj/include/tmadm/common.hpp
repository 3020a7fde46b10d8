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
/// \file common.hpp
///
/// Shared scalar and matrix aliases and the library error type.
///
#ifndef TMADM_COMMON_HPP
#define TMADM_COMMON_HPP

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

#define TMADM_VERSION "0.1.0"

namespace tmadm
{

using Complex        = std::complex<double>;
using Index          = Eigen::Index;
using RealMatrix     = Eigen::MatrixXd;
using RealVector     = Eigen::VectorXd;
using ComplexMatrix  = Eigen::MatrixXcd;
using ComplexVector  = Eigen::VectorXcd;

inline constexpr double pi = std::numbers::pi;
inline constexpr Complex imag_unit{0.0, 1.0};

///
/// Error kinds surfaced by the library. Each kind has a stable string name
/// which is what the CLI prints in its machine-readable error object.
///
enum class ErrorKind
{
    invalid_argument,
    invalid_config,
    dimension_mismatch,
    insufficient_samples,
    rank_deficient,
    singular_matrix,
    diagonal_inconsistency,
    no_consistent_candidate,
    ambiguous_resolution,
    grid_exhausted,
    corrupt_header,
    truncated_payload,
    checksum_mismatch,
    io_error,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind)
    {
        case ErrorKind::invalid_argument: return "invalid argument";
        case ErrorKind::invalid_config: return "invalid config";
        case ErrorKind::dimension_mismatch: return "dimension mismatch";
        case ErrorKind::insufficient_samples: return "insufficient samples";
        case ErrorKind::rank_deficient: return "rank-deficient observations";
        case ErrorKind::singular_matrix: return "singular matrix";
        case ErrorKind::diagonal_inconsistency: return "diagonal inconsistency";
        case ErrorKind::no_consistent_candidate: return "no consistent candidate";
        case ErrorKind::ambiguous_resolution: return "ambiguous resolution";
        case ErrorKind::grid_exhausted: return "grid exhausted";
        case ErrorKind::corrupt_header: return "corrupt header";
        case ErrorKind::truncated_payload: return "truncated payload";
        case ErrorKind::checksum_mismatch: return "checksum mismatch";
        case ErrorKind::io_error: return "io error";
    }
    return "unknown";
}

class Error : public std::runtime_error
{
public:
    Error(ErrorKind kind, const std::string& detail)
        : std::runtime_error(std::string(to_string(kind)) + ": " + detail),
          m_kind(kind)
    {
    }

    ErrorKind kind() const noexcept
    {
        return m_kind;
    }

private:
    ErrorKind m_kind;
};

inline double deg_to_rad(double deg) noexcept
{
    return deg * pi / 180.0;
}

/// phi = cos(theta) - cos(theta0), both given in degrees.
inline double phi_of(double theta_deg, double theta0_deg) noexcept
{
    return std::cos(deg_to_rad(theta_deg)) - std::cos(deg_to_rad(theta0_deg));
}

/// Deterministic 64-bit engine for a (seed, stream) pair. Every seeded
/// component derives its own stream so that they do not share draws.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

} // namespace tmadm

#endif // TMADM_COMMON_HPP
