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
/// \file ica.hpp
///
/// Blind source separation front end. Complex observations y = V s with real
/// (BPSK) sources are stacked as [Re y; Im y] = [Re V; Im V] s, which is an
/// over-determined real mixture. The stacked data are centered, whitened onto
/// their K principal directions, and separated with the fixed-point FastICA
/// iteration; the complex mixing estimate F = W^{-1} is then read back from
/// the dewhitened real mixing matrix.
///
#ifndef TMADM_ICA_HPP
#define TMADM_ICA_HPP

#include <algorithm>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include "json.hpp"

#include <tmadm/airlink.hpp>
#include <tmadm/common.hpp>

namespace tmadm
{

enum class Nonlinearity
{
    tanh,
    cubic,
};

enum class Orthogonalization
{
    symmetric,
    deflation,
};

struct IcaOptions
{
    Nonlinearity nonlinearity           = Nonlinearity::tanh;
    int max_iterations                  = 500;
    double tolerance                    = 1e-6;
    int restarts                        = 3;
    Orthogonalization orthogonalization = Orthogonalization::symmetric;
    std::uint64_t seed                  = 0;

    void validate() const
    {
        if (!(tolerance > 0.0) || max_iterations < 1 || restarts < 1)
        {
            throw Error(ErrorKind::invalid_config,
                        "ICA needs tolerance > 0, max_iterations >= 1, restarts >= 1");
        }
    }
};

//------------------------------------------------------------------------------
// Stacking
//------------------------------------------------------------------------------

inline RealMatrix stack_real_composite(const ComplexMatrix& y)
{
    const Index k = y.rows();
    RealMatrix out(2 * k, y.cols());
    out.topRows(k)    = y.real();
    out.bottomRows(k) = y.imag();
    return out;
}

inline ComplexMatrix unstack_real_composite(const RealMatrix& x)
{
    if (x.rows() % 2 != 0)
    {
        throw Error(ErrorKind::dimension_mismatch, "stacked matrix needs an even row count");
    }
    const Index k = x.rows() / 2;
    ComplexMatrix out(k, x.cols());
    out.real() = x.topRows(k);
    out.imag() = x.bottomRows(k);
    return out;
}

//------------------------------------------------------------------------------
// Whitening
//------------------------------------------------------------------------------

struct Whitened
{
    RealMatrix data;        // rank x H, zero mean, identity covariance
    RealMatrix whitening;   // rank x D
    RealMatrix dewhitening; // D x rank
    RealVector mean;        // D
    RealVector eigenvalues; // all D covariance eigenvalues, descending
};

///
/// PCA whitening onto the `rank` leading eigen-directions of the sample
/// covariance. Throws insufficient_samples unless H > D and rank_deficient if
/// fewer than `rank` eigenvalues exceed 1e-10 times the largest.
///
inline Whitened whiten(const RealMatrix& data, Index rank)
{
    const Index d = data.rows();
    const Index h = data.cols();
    if (rank < 1 || rank > d)
    {
        throw Error(ErrorKind::invalid_argument, "whitening rank out of range");
    }
    if (h <= d)
    {
        throw Error(ErrorKind::insufficient_samples,
                    "need more than " + std::to_string(d) + " samples, got " + std::to_string(h));
    }

    Whitened out;
    out.mean = data.rowwise().mean();
    const RealMatrix centered = data.colwise() - out.mean;
    RealMatrix cov            = RealMatrix::Zero(d, d);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(centered, 1.0 / static_cast<double>(h));
    cov = cov.selfadjointView<Eigen::Lower>();

    Eigen::SelfAdjointEigenSolver<RealMatrix> eig(cov);
    const RealVector evals = eig.eigenvalues().reverse();
    const RealMatrix evecs = eig.eigenvectors().rowwise().reverse();
    out.eigenvalues        = evals;

    const double largest = evals(0);
    Index above          = 0;
    for (Index i = 0; i < d; ++i)
    {
        above += (evals(i) > 1e-10 * largest) ? 1 : 0;
    }
    if (!(largest > 0.0) || above < rank)
    {
        throw Error(ErrorKind::rank_deficient,
                    std::to_string(above) + " significant eigenvalues, need " + std::to_string(rank));
    }

    const RealVector top = evals.head(rank);
    const RealMatrix basis = evecs.leftCols(rank);
    out.whitening   = top.cwiseSqrt().cwiseInverse().asDiagonal() * basis.transpose();
    out.dewhitening = basis * top.cwiseSqrt().asDiagonal();
    out.data        = out.whitening * centered;
    return out;
}

//------------------------------------------------------------------------------
// FastICA
//------------------------------------------------------------------------------

enum class IcaStatus
{
    converged,
    no_convergence,
};

struct FastIcaResult
{
    RealMatrix unmixing; // K x K, acts on whitened data
    RealMatrix sources;  // K x H
    std::vector<bool> converged;
    int iterations    = 0; // iterations of the returned attempt
    int attempts      = 0;
    IcaStatus status  = IcaStatus::no_convergence;

    Index converged_count() const
    {
        return std::count(converged.begin(), converged.end(), true);
    }
};

namespace detail
{
// g and the row means of g' for the chosen contrast.
inline void contrast(Nonlinearity nl, const RealMatrix& u, RealMatrix& g, RealVector& dg_mean)
{
    const double inv_h = 1.0 / static_cast<double>(u.cols());
    if (nl == Nonlinearity::cubic)
    {
        g       = u.array().cube().matrix();
        dg_mean = 3.0 * u.array().square().rowwise().sum().matrix() * inv_h;
        return;
    }
    // tanh(u) = 1 - 2 / (exp(2u) + 1); Eigen vectorizes exp but not tanh for doubles.
    g       = (1.0 - 2.0 / ((2.0 * u.array()).exp() + 1.0)).matrix();
    dg_mean = (1.0 - g.array().square()).rowwise().sum().matrix() * inv_h;
}

// (W W^T)^{-1/2} W
inline RealMatrix symmetric_decorrelation(const RealMatrix& w)
{
    Eigen::SelfAdjointEigenSolver<RealMatrix> eig(w * w.transpose());
    const RealVector inv_sqrt = eig.eigenvalues().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    return eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose() * w;
}

inline RealMatrix random_matrix(Index k, std::uint64_t seed, int attempt)
{
    auto rng = make_rng(seed, 0x1CA0u + static_cast<std::uint64_t>(attempt));
    std::normal_distribution<double> nd(0.0, 1.0);
    RealMatrix w(k, k);
    for (Index c = 0; c < k; ++c)
    {
        for (Index r = 0; r < k; ++r)
        {
            w(r, c) = nd(rng);
        }
    }
    return w;
}

inline FastIcaResult fastica_symmetric(const RealMatrix& z, const IcaOptions& opts, int attempt)
{
    const Index k      = z.rows();
    const double inv_h = 1.0 / static_cast<double>(z.cols());
    RealMatrix w       = symmetric_decorrelation(random_matrix(k, opts.seed, attempt));
    RealMatrix u, g;
    RealVector dg_mean;
    RealVector change = RealVector::Ones(k);

    FastIcaResult res;
    for (int it = 1; it <= opts.max_iterations; ++it)
    {
        u.noalias() = w * z;
        contrast(opts.nonlinearity, u, g, dg_mean);
        RealMatrix w_next = (g * z.transpose()) * inv_h - dg_mean.asDiagonal() * w;
        w_next            = symmetric_decorrelation(w_next);
        change            = (1.0 - (w_next.cwiseProduct(w)).rowwise().sum().array().abs()).matrix();
        w                 = std::move(w_next);
        res.iterations    = it;
        if (change.maxCoeff() < opts.tolerance)
        {
            break;
        }
    }
    res.unmixing = w;
    res.converged.resize(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i)
    {
        res.converged[static_cast<std::size_t>(i)] = change(i) < opts.tolerance;
    }
    return res;
}

inline FastIcaResult fastica_deflation(const RealMatrix& z, const IcaOptions& opts, int attempt)
{
    const Index k      = z.rows();
    const double inv_h = 1.0 / static_cast<double>(z.cols());
    const RealMatrix init = random_matrix(k, opts.seed, attempt);
    RealMatrix w          = RealMatrix::Zero(k, k);

    FastIcaResult res;
    res.converged.assign(static_cast<std::size_t>(k), false);
    for (Index p = 0; p < k; ++p)
    {
        RealVector wp = init.row(p).transpose();
        auto project  = [&](RealVector& v) {
            if (p > 0)
            {
                v -= w.topRows(p).transpose() * (w.topRows(p) * v);
            }
            v.normalize();
        };
        project(wp);
        for (int it = 1; it <= opts.max_iterations; ++it)
        {
            const RealMatrix u = wp.transpose() * z;
            RealMatrix g;
            RealVector dg_mean;
            contrast(opts.nonlinearity, u, g, dg_mean);
            RealVector next = (z * g.transpose()) * inv_h - dg_mean(0) * wp;
            project(next);
            const double change = 1.0 - std::abs(next.dot(wp));
            wp                  = next;
            res.iterations      = std::max(res.iterations, it);
            if (change < opts.tolerance)
            {
                res.converged[static_cast<std::size_t>(p)] = true;
                break;
            }
        }
        w.row(p) = wp.transpose();
    }
    res.unmixing = w;
    return res;
}
} // namespace detail

///
/// Fixed-point FastICA on whitened data. Each attempt starts from a seeded
/// random orthonormal matrix; attempts are repeated up to `restarts` times
/// until every component converges. When no attempt converges the attempt
/// with the most converged components is returned with status
/// no_convergence, which is an expected outcome on non-stationary mixtures.
///
inline FastIcaResult fastica(const RealMatrix& whitened, const IcaOptions& opts)
{
    opts.validate();
    FastIcaResult best;
    bool have_best = false;
    for (int attempt = 0; attempt < opts.restarts; ++attempt)
    {
        FastIcaResult res = opts.orthogonalization == Orthogonalization::symmetric
                                ? detail::fastica_symmetric(whitened, opts, attempt)
                                : detail::fastica_deflation(whitened, opts, attempt);
        res.attempts = attempt + 1;
        const bool all = res.converged_count() == static_cast<Index>(res.converged.size());
        if (!have_best || res.converged_count() > best.converged_count() || all)
        {
            best      = std::move(res);
            have_best = true;
        }
        best.attempts = attempt + 1;
        if (all)
        {
            best.status = IcaStatus::converged;
            break;
        }
    }
    best.sources = best.unmixing * whitened;
    return best;
}

//------------------------------------------------------------------------------
// Mixing estimate
//------------------------------------------------------------------------------

struct MixingEstimate
{
    ComplexMatrix mixing;     // K x K complex F
    RealVector source_scale;  // multiply source i by this to get unit variance
};

///
/// F = unstack(dewhitening * W^{-1}) with every column rescaled so that the
/// corresponding source has unit variance (the constellation has unit power).
/// The mean is not part of the linear map; it is accepted so callers can pass
/// the whitening triple through unchanged.
///
inline MixingEstimate estimate_mixing(const RealMatrix& unmixing, const RealMatrix& dewhitening,
                                      const RealVector& /*mean*/)
{
    if (unmixing.rows() != unmixing.cols() || dewhitening.cols() != unmixing.rows())
    {
        throw Error(ErrorKind::dimension_mismatch, "unmixing/dewhitening shapes disagree");
    }
    Eigen::FullPivLU<RealMatrix> lu(unmixing);
    if (!lu.isInvertible())
    {
        throw Error(ErrorKind::singular_matrix, "unmixing matrix is singular");
    }
    RealMatrix a = dewhitening * lu.inverse();

    // Source i = W_i z has variance |W_i|^2 on white z.
    MixingEstimate out;
    out.source_scale.resize(unmixing.rows());
    for (Index i = 0; i < unmixing.rows(); ++i)
    {
        const double sd      = unmixing.row(i).norm();
        out.source_scale(i)  = 1.0 / sd;
        a.col(i)            *= sd;
    }
    out.mixing = unstack_real_composite(a);
    return out;
}

//------------------------------------------------------------------------------
// Pipeline
//------------------------------------------------------------------------------

struct IcaResult
{
    ComplexMatrix mixing_estimate; // F, K x K
    RealMatrix sources;            // K x H, unit variance
    std::vector<bool> converged;
    int iterations_used = 0;
    IcaStatus status    = IcaStatus::no_convergence;
    RealVector mean;               // 2K stacked mean removed before whitening

    Index converged_count() const
    {
        return std::count(converged.begin(), converged.end(), true);
    }
};

///
/// Stack, whiten to rank K, separate and read back F for real sources.
///
inline IcaResult run_ica(const ComplexMatrix& observations, const IcaOptions& opts)
{
    const Index k       = observations.rows();
    const auto stacked  = stack_real_composite(observations);
    const auto white    = whiten(stacked, k);
    auto sep            = fastica(white.data, opts);
    auto est            = estimate_mixing(sep.unmixing, white.dewhitening, white.mean);

    IcaResult out;
    out.mixing_estimate = std::move(est.mixing);
    out.sources         = est.source_scale.asDiagonal() * sep.sources;
    out.converged       = std::move(sep.converged);
    out.iterations_used = sep.iterations;
    out.status          = sep.status;
    out.mean            = white.mean;
    return out;
}

/// Mean over true sources of the best absolute correlation with any
/// recovered source, matched greedily one-to-one. 1 means perfect separation.
inline double alignment_score(const RealMatrix& truth, const RealMatrix& recovered)
{
    const Index k = truth.rows();
    if (recovered.rows() != k || recovered.cols() != truth.cols())
    {
        throw Error(ErrorKind::dimension_mismatch, "alignment needs equal shapes");
    }
    auto standardize = [](const RealMatrix& x) {
        RealMatrix c = x.colwise() - x.rowwise().mean();
        for (Index i = 0; i < c.rows(); ++i)
        {
            const double n = c.row(i).norm();
            if (n > 0.0)
            {
                c.row(i) /= n;
            }
        }
        return c;
    };
    const RealMatrix corr = (standardize(truth) * standardize(recovered).transpose()).cwiseAbs();

    std::vector<bool> row_used(static_cast<std::size_t>(k)), col_used(static_cast<std::size_t>(k));
    double total = 0.0;
    for (Index step = 0; step < k; ++step)
    {
        double best = -1.0;
        Index br = 0, bc = 0;
        for (Index r = 0; r < k; ++r)
        {
            if (row_used[static_cast<std::size_t>(r)]) continue;
            for (Index c = 0; c < k; ++c)
            {
                if (col_used[static_cast<std::size_t>(c)]) continue;
                if (corr(r, c) > best)
                {
                    best = corr(r, c);
                    br   = r;
                    bc   = c;
                }
            }
        }
        row_used[static_cast<std::size_t>(br)] = true;
        col_used[static_cast<std::size_t>(bc)] = true;
        total += best;
    }
    return total / static_cast<double>(k);
}

//------------------------------------------------------------------------------
// JSON
//------------------------------------------------------------------------------

NLOHMANN_JSON_SERIALIZE_ENUM(Nonlinearity, {{Nonlinearity::tanh, "tanh"},
                                            {Nonlinearity::cubic, "cubic"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Orthogonalization, {{Orthogonalization::symmetric, "symmetric"},
                                                 {Orthogonalization::deflation, "deflation"}})

inline void to_json(nlohmann::json& j, const IcaOptions& o)
{
    j = nlohmann::json{{"nonlinearity", o.nonlinearity},
                       {"max_iterations", o.max_iterations},
                       {"tolerance", o.tolerance},
                       {"restarts", o.restarts},
                       {"orthogonalization", o.orthogonalization},
                       {"seed", o.seed}};
}

inline void from_json(const nlohmann::json& j, IcaOptions& o)
{
    o = IcaOptions{};
    if (j.contains("nonlinearity")) j.at("nonlinearity").get_to(o.nonlinearity);
    if (j.contains("max_iterations")) j.at("max_iterations").get_to(o.max_iterations);
    if (j.contains("tolerance")) j.at("tolerance").get_to(o.tolerance);
    if (j.contains("restarts")) j.at("restarts").get_to(o.restarts);
    if (j.contains("orthogonalization")) j.at("orthogonalization").get_to(o.orthogonalization);
    if (j.contains("seed")) j.at("seed").get_to(o.seed);
}

} // namespace tmadm

#endif // TMADM_ICA_HPP
