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
/// \file descrambler.hpp
///
/// Removes the permutation and phase ambiguities left by ICA.
///
/// 1. reorder_toeplitz() permutes the columns of the estimate F until its
///    main diagonal is (nearly) constant in magnitude.
/// 2. enumerate_phase_candidates() rotates each column by a constellation
///    symmetry so that the main diagonal has a single phase, leaving M global
///    rotations F_u.
/// 3. resolve_phase_known_phi() / resolve_phase_unknown_phi() keep the only
///    F_u that is consistent with some array (N, dt, ON instants, phi) obeying
///    the switching rules; the ON instants are searched by
///    match_tau_offsets().
/// 4. recover_symbols() inverts the resolved mixing matrix.
///
#ifndef TMADM_DESCRAMBLER_HPP
#define TMADM_DESCRAMBLER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/LU>

#include "json.hpp"

#include <tmadm/airlink.hpp>
#include <tmadm/common.hpp>
#include <tmadm/tma_core.hpp>

namespace tmadm
{

struct ToleranceSet
{
    double lambda   = 0.05; // relative, on Re/Im of the V_0 diagonal
    double offsets  = 0.05; // relative Frobenius distance on the generators
    double toeplitz = 0.1;  // diagonal spread after reordering
    double imag     = 1e-6; // below this |Im|/|.| the lambda test is replaced
    double dominance = 10.0; // a match this many times worse than the best is an alias
};

struct NRange
{
    int min = 2;
    int max = 32;
};

struct PhiGrid
{
    double min  = -2.0;
    double max  = 2.0;
    double step = 0.001;
};

//------------------------------------------------------------------------------
// Reordering
//------------------------------------------------------------------------------

struct ReorderOutcome
{
    std::vector<int> permutation; // reordered column r is original column permutation[r]
    ComplexMatrix reordered;
    std::vector<double> sigma_per_seed;
    int chosen_seed = 0;
    bool verified   = false;
    bool refined    = false; // swap descent was needed after the greedy pass
    double spread   = 0.0;   // toeplitz_spread of the returned ordering
};

/// Entries of F(:, perm) along every diagonal i - j = m, averaged.
inline std::vector<Complex> diagonal_means(const ComplexMatrix& f)
{
    const Index k = f.rows();
    std::vector<Complex> out(static_cast<std::size_t>(2 * k - 1));
    for (Index m = -(k - 1); m <= k - 1; ++m)
    {
        Complex acc{0.0, 0.0};
        Index count = 0;
        for (Index j = std::max<Index>(0, -m); j < k && j + m < k; ++j)
        {
            acc += f(j + m, j);
            ++count;
        }
        out[static_cast<std::size_t>(m + k - 1)] = acc / static_cast<double>(count);
    }
    return out;
}

///
/// Largest relative spread of |F| along any diagonal: the standard deviation
/// of the magnitudes divided by their mean, where the mean is floored at the
/// mean magnitude of the whole matrix so that diagonals of a vanishing
/// harmonic do not dominate.
///
inline double toeplitz_spread(const ComplexMatrix& f)
{
    const Index k     = f.rows();
    const double flat = f.cwiseAbs().mean();
    double worst      = 0.0;
    for (Index m = -(k - 2); m <= k - 2; ++m)
    {
        double sum = 0.0, sum2 = 0.0;
        Index count = 0;
        for (Index j = std::max<Index>(0, -m); j < k && j + m < k; ++j)
        {
            const double a = std::abs(f(j + m, j));
            sum += a;
            sum2 += a * a;
            ++count;
        }
        const double mean = sum / count;
        const double var  = std::max(0.0, sum2 / count - mean * mean);
        worst             = std::max(worst, std::sqrt(var) / std::max(mean, flat));
    }
    return worst;
}

namespace detail
{
inline double population_std(const std::vector<double>& v)
{
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double acc        = 0.0;
    for (double x : v)
    {
        acc += (x - mean) * (x - mean);
    }
    return std::sqrt(acc / v.size());
}

// Greedy diagonal assembly from seed column `seed`: row r takes the unused
// column whose magnitude in that row is closest to |F(0, seed)|.
inline std::vector<int> greedy_order(const RealMatrix& q, int seed, std::vector<double>& diag)
{
    const Index k = q.rows();
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::vector<bool> used(static_cast<std::size_t>(k), false);
    perm[0]                             = seed;
    used[static_cast<std::size_t>(seed)] = true;
    const double target                 = q(0, seed);
    diag.assign(static_cast<std::size_t>(k), 0.0);
    diag[0] = target;
    for (Index r = 1; r < k; ++r)
    {
        int best      = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (Index c = 0; c < k; ++c)
        {
            if (used[static_cast<std::size_t>(c)]) continue;
            const double d = std::abs(q(r, c) - target);
            if (d < best_d)
            {
                best_d = d;
                best   = static_cast<int>(c);
            }
        }
        perm[static_cast<std::size_t>(r)]    = best;
        used[static_cast<std::size_t>(best)] = true;
        diag[static_cast<std::size_t>(r)]    = q(r, best);
    }
    return perm;
}

// Column j+1 of a Toeplitz matrix is column j moved down one row. With
// shift(a, b) the mismatch of that relation between columns a and b, every
// start column is grown into a chain by the cheapest unused successor.
// O(K^3) overall.
inline std::vector<std::vector<int>> shift_chains(const RealMatrix& q)
{
    const Index k = q.rows();
    RealMatrix shift(k, k);
    for (Index a = 0; a < k; ++a)
    {
        for (Index b = 0; b < k; ++b)
        {
            shift(a, b) = (q.col(b).tail(k - 1) - q.col(a).head(k - 1)).squaredNorm();
        }
    }
    std::vector<std::vector<int>> chains;
    chains.reserve(static_cast<std::size_t>(k));
    std::vector<char> used(static_cast<std::size_t>(k));
    for (Index start = 0; start < k; ++start)
    {
        std::fill(used.begin(), used.end(), 0);
        std::vector<int> chain{static_cast<int>(start)};
        used[static_cast<std::size_t>(start)] = 1;
        while (static_cast<Index>(chain.size()) < k)
        {
            const int prev = chain.back();
            int best       = -1;
            for (Index b = 0; b < k; ++b)
            {
                if (!used[static_cast<std::size_t>(b)] && (best < 0 || shift(prev, b) < shift(prev, best)))
                {
                    best = static_cast<int>(b);
                }
            }
            used[static_cast<std::size_t>(best)] = 1;
            chain.push_back(best);
        }
        chains.push_back(std::move(chain));
    }
    return chains;
}
// Pairwise column swaps, best improvement first, until no swap lowers the
// total squared deviation of |F| from its diagonal means. Unlike the greedy
// pass this uses every diagonal. Per-diagonal sums are maintained so each
// candidate swap costs O(K).
inline std::vector<int> swap_descent(const RealMatrix& q, std::vector<int> perm)
{
    const Index k  = q.rows();
    const Index nd = 2 * k - 1;
    std::vector<double> sum(static_cast<std::size_t>(nd), 0.0), sum2(sum), count(sum);
    for (Index j = 0; j < k; ++j)
    {
        for (Index r = 0; r < k; ++r)
        {
            const double a       = q(r, perm[static_cast<std::size_t>(j)]);
            const auto d         = static_cast<std::size_t>(r - j + k - 1);
            sum[d] += a;
            sum2[d] += a * a;
            count[d] += 1.0;
        }
    }
    double scale = 0.0;
    for (Index d = 0; d < nd; ++d) scale += sum2[static_cast<std::size_t>(d)];

    std::vector<double> ds(static_cast<std::size_t>(nd), 0.0), ds2(ds);
    std::vector<std::size_t> touched;
    touched.reserve(static_cast<std::size_t>(2 * k));
    auto apply_delta = [&](Index i, Index j, bool commit) {
        touched.clear();
        for (Index r = 0; r < k; ++r)
        {
            const double a = q(r, perm[static_cast<std::size_t>(i)]);
            const double b = q(r, perm[static_cast<std::size_t>(j)]);
            const auto di  = static_cast<std::size_t>(r - i + k - 1);
            const auto dj  = static_cast<std::size_t>(r - j + k - 1);
            if (ds[di] == 0.0 && ds2[di] == 0.0) touched.push_back(di);
            ds[di] += b - a;
            ds2[di] += b * b - a * a;
            if (ds[dj] == 0.0 && ds2[dj] == 0.0) touched.push_back(dj);
            ds[dj] += a - b;
            ds2[dj] += a * a - b * b;
        }
        double delta = 0.0;
        for (auto d : touched)
        {
            const double s_new = sum[d] + ds[d];
            delta += ds2[d] - (s_new * s_new - sum[d] * sum[d]) / count[d];
            if (commit)
            {
                sum[d] = s_new;
                sum2[d] += ds2[d];
            }
            ds[d]  = 0.0;
            ds2[d] = 0.0;
        }
        return delta;
    };

    const double eps = 1e-13 * scale;
    for (;;)
    {
        double best = -eps;
        Index bi = 0, bj = 0;
        for (Index i = 0; i + 1 < k; ++i)
        {
            for (Index j = i + 1; j < k; ++j)
            {
                const double delta = apply_delta(i, j, false);
                if (delta < best)
                {
                    best = delta;
                    bi   = i;
                    bj   = j;
                }
            }
        }
        if (bi == bj)
        {
            return perm;
        }
        apply_delta(bi, bj, true);
        std::swap(perm[static_cast<std::size_t>(bi)], perm[static_cast<std::size_t>(bj)]);
    }
}

/// Minimum-cost perfect matching of rows to columns of a square matrix
/// (Hungarian method, O(n^3)). Returns the total cost and column of each row.
inline std::pair<double, std::vector<int>> min_cost_assignment(const RealMatrix& cost)
{
    const int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> row_of(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i)
    {
        row_of[0] = i;
        int j0    = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<bool> done(n + 1, false);
        do
        {
            done[j0]    = true;
            const int i0 = row_of[j0];
            double delta = inf;
            int j1       = 0;
            for (int j = 1; j <= n; ++j)
            {
                if (done[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j])
                {
                    minv[j] = cur;
                    way[j]  = j0;
                }
                if (minv[j] < delta)
                {
                    delta = minv[j];
                    j1    = j;
                }
            }
            for (int j = 0; j <= n; ++j)
            {
                if (done[j])
                {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                }
                else
                {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (row_of[j0] != 0);
        do
        {
            const int j1 = way[j0];
            row_of[j0]   = row_of[j1];
            j0           = j1;
        } while (j0 != 0);
    }
    std::vector<int> col(static_cast<std::size_t>(n), -1);
    double total = 0.0;
    for (int j = 1; j <= n; ++j)
    {
        col[static_cast<std::size_t>(row_of[j] - 1)] = j - 1;
        total += cost(row_of[j] - 1, j - 1);
    }
    return {total, col};
}

inline ComplexMatrix permute_columns(const ComplexMatrix& f, const std::vector<int>& perm)
{
    ComplexMatrix out(f.rows(), f.cols());
    for (std::size_t c = 0; c < perm.size(); ++c)
    {
        out.col(static_cast<Index>(c)) = f.col(perm[c]);
    }
    return out;
}
} // namespace detail

///
/// Column reordering that makes F Toeplitz in magnitude. Every column is tried
/// as the seed of the main diagonal (O(K^2) each, O(K^3) overall) and scored
/// by the standard deviation of the unit-normalized diagonal. The ordering with
/// the smallest spread over all diagonals is kept if it passes the spread
/// check. When none does, orderings chained by the one-row shift between
/// neighbouring columns are tried, and failing those the seeds' orderings are refined
/// in the same order by pairwise column swaps on the spread of all diagonals
/// until one passes; `verified` reports the final check.
///
inline ReorderOutcome reorder_toeplitz(const ComplexMatrix& f, double toeplitz_tolerance = 0.1)
{
    const Index k = f.rows();
    if (k < 2 || f.cols() != k)
    {
        throw Error(ErrorKind::invalid_argument, "reordering needs a square matrix with K >= 2");
    }
    const RealMatrix q = f.cwiseAbs();

    ReorderOutcome out;
    out.sigma_per_seed.resize(static_cast<std::size_t>(k));
    std::vector<std::vector<int>> orders(static_cast<std::size_t>(k));
    std::vector<double> diag;
    for (int seed = 0; seed < k; ++seed)
    {
        orders[static_cast<std::size_t>(seed)] = detail::greedy_order(q, seed, diag);
        double norm = 0.0;
        for (double x : diag) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
        {
            for (double& x : diag) x /= norm;
        }
        out.sigma_per_seed[static_cast<std::size_t>(seed)] = detail::population_std(diag);
    }

    std::vector<int> ranked(static_cast<std::size_t>(k));
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        return out.sigma_per_seed[static_cast<std::size_t>(a)] <
               out.sigma_per_seed[static_cast<std::size_t>(b)];
    });

    // Every seed's ordering is checked against all diagonals (O(K^2) each) and
    // the most Toeplitz one kept; ties go to the lower sigma.
    out.spread = std::numeric_limits<double>::infinity();
    for (int seed : ranked)
    {
        const auto& perm = orders[static_cast<std::size_t>(seed)];
        ComplexMatrix candidate = detail::permute_columns(f, perm);
        const double spread     = toeplitz_spread(candidate);
        if (spread < out.spread)
        {
            out.permutation = perm;
            out.reordered   = std::move(candidate);
            out.chosen_seed = seed;
            out.spread      = spread;
        }
    }
    if (out.spread < toeplitz_tolerance)
    {
        out.verified = true;
        return out;
    }
    // No greedy ordering is Toeplitz across all diagonals: the main diagonal
    // alone did not separate near-equal harmonic magnitudes. Chain columns by
    // the shift relation instead, then fall back to swap refinement of each
    // seed's ordering in order of sigma.
    out.refined = true;
    for (auto& perm : detail::shift_chains(q))
    {
        ComplexMatrix candidate = detail::permute_columns(f, perm);
        const double spread     = toeplitz_spread(candidate);
        if (spread < out.spread)
        {
            out.chosen_seed = perm.front();
            out.permutation = std::move(perm);
            out.reordered   = std::move(candidate);
            out.spread      = spread;
        }
    }
    if (out.spread < toeplitz_tolerance)
    {
        out.verified = true;
        return out;
    }
    for (int seed : ranked)
    {
        auto perm               = detail::swap_descent(q, orders[static_cast<std::size_t>(seed)]);
        ComplexMatrix candidate = detail::permute_columns(f, perm);
        const double spread     = toeplitz_spread(candidate);
        if (spread < out.spread)
        {
            out.permutation = std::move(perm);
            out.reordered   = std::move(candidate);
            out.chosen_seed = seed;
            out.spread      = spread;
        }
        if (spread < toeplitz_tolerance)
        {
            break;
        }
    }
    out.verified = out.spread < toeplitz_tolerance;
    return out;
}

//------------------------------------------------------------------------------
// Phase candidates
//------------------------------------------------------------------------------

struct PhaseCandidates
{
    std::vector<ComplexMatrix> candidates; // F_u = exp(-j 2 pi u / M) F_aligned
    std::vector<int> column_rotation;      // column j of F_aligned = F(:, j) exp(-j 2 pi r_j / M)
    int psk_order = 2;
};

///
/// Rotates each column by the constellation symmetry that brings its
/// diagonal entry onto the phase of entry (0,0), then emits the M global
/// rotations. Fails with diagonal_inconsistency when a column's residual
/// phase is more than pi/(2M) from every constellation rotation.
///
inline PhaseCandidates enumerate_phase_candidates(const ComplexMatrix& reordered, int psk_order)
{
    if (!is_valid_psk_order(psk_order))
    {
        throw Error(ErrorKind::invalid_argument, "PSK order must be a power of two");
    }
    const Index k = reordered.rows();
    const Complex anchor = reordered(0, 0);
    if (std::abs(anchor) == 0.0)
    {
        throw Error(ErrorKind::diagonal_inconsistency, "zero leading diagonal entry");
    }
    const double step = 2.0 * pi / psk_order;

    PhaseCandidates out;
    out.psk_order = psk_order;
    out.column_rotation.resize(static_cast<std::size_t>(k));
    ComplexMatrix aligned = reordered;
    for (Index j = 0; j < k; ++j)
    {
        const double angle   = std::arg(reordered(j, j) / anchor);
        const double nearest = std::round(angle / step);
        const double resid   = std::abs(angle - nearest * step);
        if (!(resid <= 0.5 * pi / psk_order))
        {
            throw Error(ErrorKind::diagonal_inconsistency,
                        "column " + std::to_string(j) + " is " + std::to_string(resid) +
                            " rad away from every constellation rotation");
        }
        const int r = static_cast<int>(((static_cast<long>(nearest) % psk_order) + psk_order) % psk_order);
        out.column_rotation[static_cast<std::size_t>(j)] = r;
        aligned.col(j) *= std::conj(psk_point(r, psk_order));
    }
    for (int u = 0; u < psk_order; ++u)
    {
        out.candidates.push_back(aligned * std::conj(psk_point(u, psk_order)));
    }
    return out;
}

//------------------------------------------------------------------------------
// ON-instant search
//------------------------------------------------------------------------------

struct OffsetMatch
{
    std::vector<int> lattice_index; // per antenna, h in 0..N-1
    std::vector<double> tau_offsets;
    double score = 0.0; // relative Frobenius distance of the generators
};

struct OffsetSearch
{
    std::optional<OffsetMatch> match;
    long nodes     = 0; // partial assignments expanded
    long leaves    = 0; // complete assignments scored
    bool exhausted = false; // node budget hit before the search space was covered
    bool unidentifiable = false; // N > 2K - 1
};

struct OffsetSearchOptions
{
    bool spectral_gate = true;
    long max_nodes     = 200'000;
};

///
/// Searches the assignments of the lattice {(h-1)/N} to the N antennas for the
/// one whose predicted generators best match those read off the diagonals of
/// F_u, scaled by sqrt(NK). A valid assignment is a permutation, so the raw
/// search space is N!.
///
/// Pruning, all necessary conditions for an assignment scoring below the
/// current bound s (the tolerance, then the best score found):
///  - triangle bound: with k antennas placed, each generator can still move
///    by at most (N-k)|c_m|, where |c_m| = |a_m|;
///  - spectral bound: V_m / c_m is the length-N DFT of b_h = exp(j n(h) pi phi)
///    at frequency m mod N. The squared distance splits exactly into the
///    least-squares residual over unconstrained b plus a weighted spectral
///    term, which is bounded below by an assignment cost on |b_hat_h - b_h|^2.
///    The optimal assignment seeds the incumbent.
///
inline OffsetSearch search_tau_offsets(const ComplexMatrix& f_u, int n_antennas, double delta_tau,
                                       double phi, double tolerance,
                                       const OffsetSearchOptions& opts = {})
{
    const Index k = f_u.rows();
    const int n   = n_antennas;
    OffsetSearch out;
    if (n < 1 || k < 2)
    {
        return out;
    }

    const double gain = std::sqrt(static_cast<double>(n) * static_cast<double>(k));
    auto observed     = diagonal_means(f_u);
    for (auto& g : observed) g *= gain;
    double gnorm = 0.0;
    for (const auto& g : observed) gnorm += std::norm(g);
    gnorm = std::sqrt(gnorm);
    if (!(gnorm > 0.0))
    {
        return out;
    }

    const GainTable table(n, delta_tau, k, phi);
    const std::size_t ng = observed.size();
    std::vector<double> cmag(ng);
    for (Index m = -(k - 1); m <= k - 1; ++m)
    {
        cmag[static_cast<std::size_t>(m + k - 1)] = std::abs(table.coefficient(m, 0));
    }

    // V_0 = dt * sum_n exp(j n pi phi) does not depend on the assignment.
    {
        Complex v0{0.0, 0.0};
        for (int a = 0; a < n; ++a) v0 += table.coefficient(0, 0) * table.phasor(a);
        if (std::abs(observed[static_cast<std::size_t>(k - 1)] - v0) > tolerance * gnorm)
        {
            return out;
        }
    }

    // With fewer generators than residues mod N the assignment is not
    // identifiable and the search is not attempted.
    if (n > 2 * k - 1)
    {
        out.unidentifiable = true;
        return out;
    }

    // g_m / c_m is the DFT of b_h = exp(j n(h) pi phi) at m mod N. Grouping the
    // generators by residue r gives the least-squares spectrum B_r and the
    // exact split |g - g(b)|^2 = r0^2 + sum_r w_r |B_r - DFT_r(b)|^2, with
    // w_r = sum_{m = r} |c_m|^2. By Parseval the second term is at least
    // N min_r w_r |b_hat - b|^2, which is a linear assignment cost.
    const double limit2 = tolerance * tolerance * gnorm * gnorm;
    std::vector<Complex> b_hat;
    double mu    = 0.0;
    double r0sq  = 0.0;
    double slack = 1.0;
    if (opts.spectral_gate)
    {
        std::vector<Complex> num(static_cast<std::size_t>(n), Complex{0.0, 0.0});
        std::vector<double> w(static_cast<std::size_t>(n), 0.0);
        for (Index m = -(k - 1); m <= k - 1; ++m)
        {
            const auto i   = static_cast<std::size_t>(m + k - 1);
            const auto r   = static_cast<std::size_t>(((m % n) + n) % n);
            const Complex c = table.coefficient(m, 0);
            num[r] += std::conj(c) * observed[i];
            w[r] += std::norm(c);
        }
        double explained = 0.0;
        std::vector<Complex> spectrum(static_cast<std::size_t>(n), Complex{0.0, 0.0});
        for (std::size_t r = 0; r < w.size(); ++r)
        {
            if (w[r] > 0.0)
            {
                spectrum[r] = num[r] / w[r];
                explained += w[r] * std::norm(spectrum[r]);
            }
        }
        r0sq = std::max(0.0, gnorm * gnorm - explained);
        if (r0sq > limit2)
        {
            return out;
        }
        mu = static_cast<double>(n) * *std::min_element(w.begin(), w.end());
        if (mu > 1e-12 * gnorm * gnorm)
        {
            b_hat.assign(static_cast<std::size_t>(n), Complex{0.0, 0.0});
            for (int h = 0; h < n; ++h)
            {
                Complex acc{0.0, 0.0};
                for (int r = 0; r < n; ++r)
                {
                    acc += spectrum[static_cast<std::size_t>(r)] *
                           std::polar(1.0, 2.0 * pi * static_cast<double>((static_cast<long>(r) * h) % n) / n);
                }
                b_hat[static_cast<std::size_t>(h)] = acc / static_cast<double>(n);
            }
            slack = std::max(limit2 - r0sq, std::numeric_limits<double>::min());
            mu /= slack;
        }
    }

    // cost(a, h) = |b_hat_h - p_a|^2, scaled so that a completion is admissible
    // only if its total cost is at most 1 (relative to the current bound).
    RealMatrix cost;
    if (!b_hat.empty())
    {
        cost.resize(n, n);
        for (int a = 0; a < n; ++a)
        {
            for (int h = 0; h < n; ++h)
            {
                cost(a, h) = mu * std::norm(b_hat[static_cast<std::size_t>(h)] - table.phasor(a));
            }
        }
    }

    std::vector<int> assign(static_cast<std::size_t>(n), -1);
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    std::vector<std::vector<Complex>> partial(static_cast<std::size_t>(n) + 1,
                                              std::vector<Complex>(ng, Complex{0.0, 0.0}));
    std::vector<int> best_assign;
    double best_score = std::numeric_limits<double>::infinity();
    double bound      = tolerance; // admissible score
    double budget     = 1.0;       // admissible assignment cost, shrinks with bound

    auto score_of = [&](const std::vector<int>& h_of) {
        double err = 0.0;
        for (Index m = -(k - 1); m <= k - 1; ++m)
        {
            Complex v{0.0, 0.0};
            for (int a = 0; a < n; ++a)
            {
                v += table.coefficient(m, h_of[static_cast<std::size_t>(a)]) * table.phasor(a);
            }
            err += std::norm(observed[static_cast<std::size_t>(m + k - 1)] - v);
        }
        return std::sqrt(err) / gnorm;
    };
    auto accept = [&](const std::vector<int>& h_of, double score) {
        if (score < best_score && score <= bound)
        {
            best_score  = score;
            best_assign = h_of;
            bound       = score;
            if (!b_hat.empty())
            {
                budget = (score * score * gnorm * gnorm - r0sq) / slack;
            }
        }
    };

    if (!b_hat.empty())
    {
        const auto [lap, h_of] = detail::min_cost_assignment(cost);
        if (lap > budget)
        {
            return out;
        }
        accept(h_of, score_of(h_of));
    }

    // Depth-first over antennas; candidates for each antenna ordered by cost.
    auto recurse = [&](auto&& self, int depth, double spent) -> void {
        if (out.exhausted) return;
        if (++out.nodes > opts.max_nodes)
        {
            out.exhausted = true;
            return;
        }
        const auto& cur = partial[static_cast<std::size_t>(depth)];
        if (depth == n)
        {
            ++out.leaves;
            double err = 0.0;
            for (std::size_t i = 0; i < ng; ++i) err += std::norm(observed[i] - cur[i]);
            accept(assign, std::sqrt(err) / gnorm);
            return;
        }
        // Triangle lower bound on the final distance.
        const double remaining = static_cast<double>(n - depth);
        double lb = 0.0;
        for (std::size_t i = 0; i < ng; ++i)
        {
            const double gap = std::abs(observed[i] - cur[i]) - remaining * cmag[i];
            if (gap > 0.0) lb += gap * gap;
        }
        if (std::sqrt(lb) > bound * gnorm)
        {
            return;
        }
        // Assignment lower bound: each unplaced antenna takes its cheapest free instant.
        if (!b_hat.empty())
        {
            double rest = spent;
            for (int a = depth; a < n && rest <= budget; ++a)
            {
                double lo = std::numeric_limits<double>::infinity();
                for (int h = 0; h < n; ++h)
                {
                    if (!used[static_cast<std::size_t>(h)]) lo = std::min(lo, cost(a, h));
                }
                rest += lo;
            }
            if (rest > budget) return;
        }

        const Complex p = table.phasor(depth);
        std::vector<std::pair<double, int>> options;
        for (int h = 0; h < n; ++h)
        {
            if (used[static_cast<std::size_t>(h)]) continue;
            options.emplace_back(b_hat.empty() ? 0.0 : cost(depth, h), h);
        }
        std::stable_sort(options.begin(), options.end());
        for (const auto& [c, h] : options)
        {
            if (!b_hat.empty() && spent + c > budget) break;
            auto& next = partial[static_cast<std::size_t>(depth) + 1];
            for (Index m = -(k - 1); m <= k - 1; ++m)
            {
                const auto i = static_cast<std::size_t>(m + k - 1);
                next[i]      = cur[i] + table.coefficient(m, h) * p;
            }
            assign[static_cast<std::size_t>(depth)] = h;
            used[static_cast<std::size_t>(h)]       = true;
            self(self, depth + 1, spent + c);
            used[static_cast<std::size_t>(h)] = false;
            if (out.exhausted) return;
        }
    };
    recurse(recurse, 0, 0.0);

    if (!best_assign.empty())
    {
        OffsetMatch m;
        m.lattice_index = best_assign;
        for (int h : best_assign)
        {
            m.tau_offsets.push_back(GainTable::lattice_tau(h, n));
        }
        m.score   = best_score;
        out.match = std::move(m);
    }
    return out;
}

inline std::optional<OffsetMatch> match_tau_offsets(const ComplexMatrix& f_u, int n_antennas,
                                                    double delta_tau, double phi, double tolerance)
{
    return search_tau_offsets(f_u, n_antennas, delta_tau, phi, tolerance).match;
}

//------------------------------------------------------------------------------
// Phase resolution
//------------------------------------------------------------------------------

struct Resolution
{
    int phase_index = 0;
    int n_antennas  = 0;
    double delta_tau = 0.0;
    std::vector<double> tau_offsets;
    double phi      = 0.0;
    double residual = 0.0;
};

struct Survivor
{
    int phase_index;
    int n_antennas;
    double delta_tau;
};

///
/// Candidates (u, N, dt) that pass the V_0 checks: the Re/Im ratio of the
/// main diagonal against 1/tan((N-1) pi phi / 2) (or the full complex V_0 when
/// the ratio is ill-conditioned) and dt = |F_u(0,0)| sqrt(NK) / |D_N(phi)|
/// inside (0, 1].
///
inline std::vector<Survivor> phase_survivors(const PhaseCandidates& cands, double phi,
                                             const NRange& gn, const ToleranceSet& tol)
{
    std::vector<Survivor> out;
    if (cands.candidates.empty()) return out;
    const Index k = cands.candidates.front().rows();
    for (std::size_t u = 0; u < cands.candidates.size(); ++u)
    {
        const auto& fu   = cands.candidates[u];
        const Complex d0 = fu.diagonal().mean();
        const double mag = std::abs(d0);
        if (!(mag > 0.0)) continue;
        for (int n = std::max(1, gn.min); n <= gn.max; ++n)
        {
            const double dk = dirichlet(n, phi);
            if (std::abs(dk) < 1e-12) continue;
            const double gain = std::sqrt(static_cast<double>(n) * static_cast<double>(k));
            const double dt   = mag * gain / std::abs(dk);
            if (!(dt > 0.0 && dt <= 1.0 + 1e-9)) continue;

            const auto lambda_n = lambda_of(n, phi);
            bool pass           = false;
            if (std::abs(d0.imag()) < tol.imag * mag || !lambda_n)
            {
                const Complex v0 = v0_closed_form(n, dt, phi);
                pass             = std::abs(d0 * gain - v0) <= tol.lambda * std::abs(v0);
            }
            else
            {
                const double lambda_u = d0.real() / d0.imag();
                pass = std::abs(lambda_u - *lambda_n) <= tol.lambda * std::max(1.0, std::abs(*lambda_n));
            }
            if (pass)
            {
                out.push_back({static_cast<int>(u), n, std::min(dt, 1.0)});
            }
        }
    }
    return out;
}

///
/// Keeps the unique (u, N, dt, ON instants) consistent with the switching
/// rules for a known phi. Every survivor of the V_0 checks must also admit an
/// ON-instant assignment reproducing all 2K-1 generators, which is what
/// settles the sign left open by the Re/Im ratio. A match whose residual
/// exceeds `tol.dominance` times the best one is discarded.
///
inline Resolution resolve_phase_known_phi(const PhaseCandidates& cands, double phi, const NRange& gn,
                                          const ToleranceSet& tol)
{
    if (phi == 0.0)
    {
        throw Error(ErrorKind::invalid_argument, "phi = 0 is the legitimate direction");
    }
    const auto survivors = phase_survivors(cands, phi, gn, tol);
    std::vector<Resolution> consistent;
    for (const auto& s : survivors)
    {
        const auto& fu = cands.candidates[static_cast<std::size_t>(s.phase_index)];
        if (auto m = match_tau_offsets(fu, s.n_antennas, s.delta_tau, phi, tol.offsets))
        {
            Resolution r;
            r.phase_index = s.phase_index;
            r.n_antennas  = s.n_antennas;
            r.delta_tau   = s.delta_tau;
            r.tau_offsets = std::move(m->tau_offsets);
            r.phi         = phi;
            r.residual    = m->score;
            consistent.push_back(std::move(r));
        }
    }
    if (consistent.empty())
    {
        throw Error(ErrorKind::no_consistent_candidate,
                    std::to_string(survivors.size()) + " V0-consistent candidates, none with valid ON instants");
    }
    // Near-degenerate phi (a sign flip equal to an antenna shift) lets a wrong
    // assignment fit within tolerance. It is dropped only when the best fit is
    // clearly better; comparable fits stay ambiguous.
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : consistent) best = std::min(best, r.residual);
    std::erase_if(consistent, [&](const Resolution& r) { return r.residual > tol.dominance * best; });
    if (consistent.size() > 1)
    {
        std::string which;
        for (const auto& r : consistent)
        {
            which += (which.empty() ? "" : ", ") + std::string("(u=") + std::to_string(r.phase_index) +
                     ", N=" + std::to_string(r.n_antennas) + ")";
        }
        throw Error(ErrorKind::ambiguous_resolution, which);
    }
    return consistent.front();
}

///
/// Unknown phi: the known-phi resolver is run on every grid point and the
/// lowest-residual success wins (ties to the lowest phi). phi = 0 is skipped.
/// phi is identifiable only modulo 2.
///
inline Resolution resolve_phase_unknown_phi(const PhaseCandidates& cands, const NRange& gn,
                                            const PhiGrid& grid, const ToleranceSet& tol)
{
    if (!(grid.step > 0.0) || !(grid.max > grid.min))
    {
        throw Error(ErrorKind::invalid_argument, "empty phi grid");
    }
    std::optional<Resolution> best;
    const long count = static_cast<long>(std::floor((grid.max - grid.min) / grid.step + 1e-9));
    // The antenna phasors exp(j n pi phi) have period 2 in phi, so phi and
    // phi -+ 2 give identical generators. When the grid holds both, only the
    // representative in [-1, 1) is evaluated.
    const double per_period = 2.0 / grid.step;
    const long period       = std::lround(per_period);
    const bool periodic     = std::abs(per_period - static_cast<double>(period)) < 1e-6;
    for (long i = 1; i < count; ++i) // open interval (min, max)
    {
        const double phi = grid.min + static_cast<double>(i) * grid.step;
        if (std::abs(phi) < 0.5 * grid.step) continue;
        if (periodic && phi >= 1.0 - 0.5 * grid.step && i - period >= 1) continue;
        if (periodic && phi < -1.0 - 0.5 * grid.step && i + period < count) continue;
        try
        {
            auto r = resolve_phase_known_phi(cands, phi, gn, tol);
            if (!best || r.residual < best->residual)
            {
                best = std::move(r);
            }
        }
        catch (const Error& e)
        {
            if (e.kind() != ErrorKind::no_consistent_candidate &&
                e.kind() != ErrorKind::ambiguous_resolution)
            {
                throw;
            }
        }
    }
    if (!best)
    {
        throw Error(ErrorKind::grid_exhausted, "no grid point admits a consistent resolution");
    }
    return *best;
}

//------------------------------------------------------------------------------
// Symbol recovery
//------------------------------------------------------------------------------

/// s_hat = F^{-1} y for every column, hard-decided onto the constellation.
/// F must already be in subcarrier order with its phase resolved.
inline SymbolBlock recover_symbols(const ComplexMatrix& f_final, const ComplexMatrix& y, int psk_order)
{
    if (f_final.rows() != y.rows() || f_final.cols() != f_final.rows())
    {
        throw Error(ErrorKind::dimension_mismatch, "mixing estimate and observations disagree");
    }
    Eigen::FullPivLU<ComplexMatrix> lu(f_final);
    if (!lu.isInvertible())
    {
        throw Error(ErrorKind::singular_matrix, "resolved mixing matrix is singular");
    }
    const ComplexMatrix s_hat = lu.solve(y);
    return decide_symbols(s_hat, psk_order);
}

//------------------------------------------------------------------------------
// JSON
//------------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ToleranceSet& t)
{
    j = nlohmann::json{{"lambda", t.lambda}, {"offsets", t.offsets}, {"toeplitz", t.toeplitz}, {"imag", t.imag},
                       {"dominance", t.dominance}};
}

inline void from_json(const nlohmann::json& j, ToleranceSet& t)
{
    t = ToleranceSet{};
    if (j.contains("lambda")) j.at("lambda").get_to(t.lambda);
    if (j.contains("offsets")) j.at("offsets").get_to(t.offsets);
    if (j.contains("toeplitz")) j.at("toeplitz").get_to(t.toeplitz);
    if (j.contains("imag")) j.at("imag").get_to(t.imag);
    if (j.contains("dominance")) j.at("dominance").get_to(t.dominance);
}

inline void to_json(nlohmann::json& j, const Resolution& r)
{
    j = nlohmann::json{{"phase_index", r.phase_index}, {"n_antennas", r.n_antennas},
                       {"delta_tau", r.delta_tau},     {"tau_offsets", r.tau_offsets},
                       {"phi", r.phi},                 {"residual", r.residual}};
}

inline void to_json(nlohmann::json& j, const ReorderOutcome& r)
{
    j = nlohmann::json{{"permutation", r.permutation}, {"sigma_per_seed", r.sigma_per_seed},
                       {"chosen_seed", r.chosen_seed}, {"verified", r.verified},
                       {"refined", r.refined},
                       {"spread", r.spread}};
}

} // namespace tmadm

#endif // TMADM_DESCRAMBLER_HPP
