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
/// \file harness.hpp
///
/// End-to-end experiments: transmit, attack, score, and aggregate over seeded
/// trials. Table and sweep drivers sit on top of run_experiment.
///
#ifndef TMADM_HARNESS_HPP
#define TMADM_HARNESS_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include <tmadm/airlink.hpp>
#include <tmadm/common.hpp>
#include <tmadm/dataset_io.hpp>
#include <tmadm/descrambler.hpp>
#include <tmadm/ica.hpp>
#include <tmadm/tma_core.hpp>

namespace tmadm
{

//------------------------------------------------------------------------------
// Configuration
//------------------------------------------------------------------------------

struct OfdmConfig
{
    Index subcarriers = 16;     // K
    int psk_order     = 2;      // M
    Index length      = 100000; // H
};

///
/// Where each trial's switching pattern comes from: either one fixed
/// configuration, or the family dt = 1/N with a uniformly random assignment
/// of the offsets {(n-1)/N} drawn per trial.
///
struct PatternSource
{
    enum class Kind
    {
        fixed,
        paper_family,
    };

    Kind kind = Kind::paper_family;
    TmaConfig fixed;
    int n_antennas    = 7;
    double theta0_deg = 90.0;

    double theta0() const noexcept
    {
        return kind == Kind::fixed ? fixed.theta0_deg : theta0_deg;
    }

    template <typename Rng>
    TmaConfig draw(Rng& rng) const
    {
        if (kind == Kind::fixed)
        {
            return fixed;
        }
        return sample_random_pattern(n_antennas, 1.0 / n_antennas, theta0_deg, rng);
    }
};

struct ExperimentConfig
{
    PatternSource tma;
    OfdmConfig ofdm;
    double theta_e_deg = 30.0;
    bool phi_known     = true;
    int trials         = 30;
    IcaOptions ica;
    ToleranceSet tolerances;
    NRange gn;
    PhiGrid phi_grid;
    bool defense       = true; // also run the defended transmission per trial
    std::uint64_t seed = 1;

    void validate() const
    {
        if (trials < 1)
        {
            throw Error(ErrorKind::invalid_config, "trials must be at least 1");
        }
        if (tma.kind == PatternSource::Kind::fixed)
        {
            require_valid(tma.fixed);
        }
        else if (tma.n_antennas < 2)
        {
            throw Error(ErrorKind::invalid_config, "pattern family needs n_antennas >= 2");
        }
        if (!(tma.theta0() >= 0.0 && tma.theta0() <= 180.0) ||
            !(theta_e_deg >= 0.0 && theta_e_deg <= 180.0))
        {
            throw Error(ErrorKind::invalid_config, "angles must lie in [0, 180] degrees");
        }
        if (ofdm.subcarriers < 2 || ofdm.length < 1)
        {
            throw Error(ErrorKind::invalid_config, "need K >= 2 and H >= 1");
        }
        if (ofdm.psk_order != 2)
        {
            throw Error(ErrorKind::invalid_config, "the attack supports BPSK (M = 2) only");
        }
        if (gn.min < 1 || gn.max < gn.min)
        {
            throw Error(ErrorKind::invalid_config, "empty antenna-count range");
        }
        if (!(phi_grid.step > 0.0) || !(phi_grid.max > phi_grid.min))
        {
            throw Error(ErrorKind::invalid_config, "empty phi grid");
        }
        ica.validate();
    }
};

struct AttackOptions
{
    IcaOptions ica;
    ToleranceSet tolerances;
    NRange gn;
    PhiGrid phi_grid;
    bool phi_known = true;
};

inline AttackOptions attack_options(const ExperimentConfig& cfg)
{
    return AttackOptions{cfg.ica, cfg.tolerances, cfg.gn, cfg.phi_grid, cfg.phi_known};
}

//------------------------------------------------------------------------------
// Attack
//------------------------------------------------------------------------------

struct StageSeconds
{
    double transmit = 0.0;
    double ica      = 0.0;
    double reorder  = 0.0;
    double resolve  = 0.0;
    double recover  = 0.0;

    StageSeconds& operator+=(const StageSeconds& o)
    {
        transmit += o.transmit;
        ica += o.ica;
        reorder += o.reorder;
        resolve += o.resolve;
        recover += o.recover;
        return *this;
    }
};

struct AttackOutcome
{
    bool failed = false;
    std::string failed_stage; // ica, reorder, phase, resolve, recover
    std::string error;
    std::optional<double> ber; // against ground truth, when it is known

    bool ica_converged       = false;
    Index ica_converged_count = 0;
    Index ica_components     = 0;
    int ica_iterations       = 0;
    std::optional<double> alignment;

    std::optional<ReorderOutcome> reorder;
    std::optional<Resolution> resolution;
    StageSeconds seconds;
};

namespace detail
{

inline double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace detail

///
/// Runs ICA, reordering, phase resolution and symbol recovery on one
/// observation set. A failing stage is recorded rather than thrown. The BER
/// of a failed attack is the mean over the M global phase rotations of the
/// attacker's best estimate so far (the latest F available, inverted and
/// hard-decided), or exactly 0.5 when ICA produced nothing.
///
inline AttackOutcome run_attack(const ObservationSet& obs, const AttackOptions& opts,
                                const SymbolBlock* truth = nullptr)
{
    AttackOutcome out;
    out.ica_components = obs.subcarriers();
    std::string stage  = "ica";
    std::optional<ComplexMatrix> best_f;
    std::optional<SymbolBlock> recovered;
    try
    {
        if (obs.psk_order != 2)
        {
            throw Error(ErrorKind::invalid_argument, "the attack supports BPSK (M = 2) only");
        }
        auto t0  = std::chrono::steady_clock::now();
        auto ica = run_ica(obs.samples, opts.ica);
        out.seconds.ica       = detail::seconds_since(t0);
        out.ica_converged     = ica.status == IcaStatus::converged;
        out.ica_converged_count = ica.converged_count();
        out.ica_iterations    = ica.iterations_used;
        if (truth != nullptr)
        {
            out.alignment = alignment_score(truth->symbols.real(), ica.sources);
        }
        best_f = ica.mixing_estimate;

        stage = "reorder";
        t0    = std::chrono::steady_clock::now();
        auto ro = reorder_toeplitz(ica.mixing_estimate, opts.tolerances.toeplitz);
        out.seconds.reorder = detail::seconds_since(t0);
        best_f              = ro.reordered;
        out.reorder         = ro;

        stage = "phase";
        t0    = std::chrono::steady_clock::now();
        const auto cands = enumerate_phase_candidates(ro.reordered, obs.psk_order);
        best_f           = cands.candidates.front();

        stage = "resolve";
        const auto res = opts.phi_known
                             ? resolve_phase_known_phi(cands, obs.phi(), opts.gn, opts.tolerances)
                             : resolve_phase_unknown_phi(cands, opts.gn, opts.phi_grid, opts.tolerances);
        out.seconds.resolve = detail::seconds_since(t0);
        best_f              = cands.candidates[static_cast<std::size_t>(res.phase_index)];
        out.resolution      = res;

        stage = "recover";
        t0    = std::chrono::steady_clock::now();
        recovered           = recover_symbols(*best_f, obs.samples, obs.psk_order);
        out.seconds.recover = detail::seconds_since(t0);
    }
    catch (const Error& e)
    {
        out.failed       = true;
        out.failed_stage = stage;
        out.error        = e.what();
    }

    if (truth != nullptr)
    {
        if (recovered)
        {
            out.ber = ber(truth->bits(), recovered->bits());
        }
        else
        {
            // Without a resolution the M global rotations of the estimate are
            // indistinguishable to the attacker; score their mean.
            out.ber = 0.5;
            if (best_f)
            {
                try
                {
                    const auto bits = truth->bits();
                    double sum      = 0.0;
                    for (int u = 0; u < obs.psk_order; ++u)
                    {
                        const ComplexMatrix fu = *best_f * std::conj(psk_point(u, obs.psk_order));
                        sum += ber(bits, recover_symbols(fu, obs.samples, obs.psk_order).bits());
                    }
                    out.ber = sum / obs.psk_order;
                }
                catch (const Error&)
                {
                }
            }
        }
    }
    return out;
}

//------------------------------------------------------------------------------
// Experiments
//------------------------------------------------------------------------------

struct TrialRecord
{
    int index          = 0;
    std::uint64_t seed = 0;
    TmaConfig pattern;
    double phi  = 0.0;
    double ber1 = 0.0;
    AttackOutcome attack;                  // static transmission
    std::optional<AttackOutcome> defended; // randomized switching

    double ber2() const
    {
        return attack.ber.value_or(0.5);
    }
    std::optional<double> ber3() const
    {
        if (!defended) return std::nullopt;
        return defended->ber.value_or(0.5);
    }
};

struct AttackReport
{
    nlohmann::json config;
    std::string fingerprint;
    std::vector<TrialRecord> trials;
    std::optional<double> ber1;
    std::optional<double> ber2;
    std::optional<double> ber3;
    int failed_static   = 0;
    int failed_defended = 0;
    StageSeconds seconds;
    double wall_seconds = 0.0;
};

/// Per-trial seed derived from the experiment seed and the trial index.
inline std::uint64_t trial_seed(std::uint64_t seed, int trial)
{
    auto rng = make_rng(seed, 0x7a1a0000ull + static_cast<std::uint64_t>(trial));
    return rng();
}

/// FNV-1a over the library version and the canonical config text.
inline std::string fingerprint_of(const nlohmann::json& config)
{
    const std::string text = std::string("tmadm ") + TMADM_VERSION + "\n" + config.dump();
    std::uint64_t h        = 0xcbf29ce484222325ull;
    for (unsigned char c : text)
    {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& cfg);

inline TrialRecord run_trial(const ExperimentConfig& cfg, int index)
{
    TrialRecord rec;
    rec.index = index;
    rec.seed  = trial_seed(cfg.seed, index);

    auto pattern_rng = make_rng(rec.seed, 3);
    rec.pattern      = cfg.tma.draw(pattern_rng);
    rec.phi          = phi_of(cfg.theta_e_deg, rec.pattern.theta0_deg);

    const auto block = generate_symbols_seeded(cfg.ofdm.subcarriers, cfg.ofdm.psk_order,
                                               cfg.ofdm.length, rec.seed);
    auto opts     = attack_options(cfg);
    opts.ica.seed = rec.seed;

    {
        auto t0  = std::chrono::steady_clock::now();
        auto obs = transmit_static(rec.pattern, cfg.ofdm.subcarriers, block, cfg.theta_e_deg);
        obs.source_seed = rec.seed;
        const double tx = detail::seconds_since(t0);
        rec.ber1        = raw_decision_ber(obs, block);
        rec.attack      = run_attack(obs, opts, &block);
        rec.attack.seconds.transmit = tx;
    }
    if (cfg.defense)
    {
        auto t0  = std::chrono::steady_clock::now();
        auto obs = transmit_defended_seeded(rec.pattern, cfg.ofdm.subcarriers, block, cfg.theta_e_deg,
                                            rec.seed ^ 0xdefe0000defe0000ull);
        obs.source_seed = rec.seed;
        const double tx = detail::seconds_since(t0);
        rec.defended    = run_attack(obs, opts, &block);
        rec.defended->seconds.transmit = tx;
    }
    return rec;
}

///
/// Averages over trials. Trials run on up to `parallel` threads; each trial
/// depends only on (config, seed, index), so the report does not depend on
/// the thread count apart from the timing fields.
///
inline AttackReport run_experiment(const ExperimentConfig& cfg, int parallel = 1,
                                   const std::function<void(const TrialRecord&)>& on_trial = {})
{
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    AttackReport report;
    to_json(report.config, cfg);
    report.fingerprint = fingerprint_of(report.config);
    report.trials.resize(static_cast<std::size_t>(cfg.trials));

    std::atomic<int> next{0};
    std::mutex done_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        for (;;)
        {
            const int i = next.fetch_add(1);
            if (i >= cfg.trials) return;
            try
            {
                auto rec = run_trial(cfg, i);
                std::lock_guard lock(done_mutex);
                report.trials[static_cast<std::size_t>(i)] = std::move(rec);
                if (on_trial) on_trial(report.trials[static_cast<std::size_t>(i)]);
            }
            catch (...)
            {
                std::lock_guard lock(done_mutex);
                if (!failure) failure = std::current_exception();
                next = cfg.trials;
                return;
            }
        }
    };
    const int threads = std::max(1, std::min(parallel, cfg.trials));
    if (threads == 1)
    {
        worker();
    }
    else
    {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    if (failure)
    {
        std::rethrow_exception(failure);
    }

    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (const auto& r : report.trials)
    {
        s1 += r.ber1;
        s2 += r.ber2();
        report.failed_static += r.attack.failed ? 1 : 0;
        report.seconds += r.attack.seconds;
        if (r.defended)
        {
            s3 += *r.ber3();
            report.failed_defended += r.defended->failed ? 1 : 0;
            report.seconds += r.defended->seconds;
        }
    }
    const double n = static_cast<double>(cfg.trials);
    report.ber1    = s1 / n;
    report.ber2    = s2 / n;
    if (cfg.defense)
    {
        report.ber3 = s3 / n;
    }
    report.wall_seconds = detail::seconds_since(t0);
    return report;
}

///
/// Attack on a stored dataset. Ground truth is regenerated from the source
/// seed; the BER lands in ber2 for a static dataset and ber3 for a defended one.
///
inline AttackReport attack_dataset(const ObservationSet& obs, const AttackOptions& opts)
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto block =
        generate_symbols_seeded(obs.subcarriers(), obs.psk_order, obs.length(), obs.source_seed);

    AttackReport report;
    report.config = {{"dataset", {{"K", obs.subcarriers()},
                                  {"H", obs.length()},
                                  {"M", obs.psk_order},
                                  {"mode", to_string(obs.mode)},
                                  {"angle_deg", obs.angle_deg},
                                  {"theta0_deg", obs.theta0_deg},
                                  {"seed", obs.source_seed}}},
                     {"phi_known", opts.phi_known},
                     {"ica", opts.ica},
                     {"tolerances", opts.tolerances},
                     {"search", {{"n_min", opts.gn.min},
                                 {"n_max", opts.gn.max},
                                 {"phi_min", opts.phi_grid.min},
                                 {"phi_max", opts.phi_grid.max},
                                 {"phi_step", opts.phi_grid.step}}}};
    report.fingerprint = fingerprint_of(report.config);

    TrialRecord rec;
    rec.seed    = obs.source_seed;
    rec.pattern = obs.pattern;
    rec.phi     = obs.phi();
    rec.ber1    = raw_decision_ber(obs, block);
    auto outcome = run_attack(obs, opts, &block);
    report.ber1  = rec.ber1;
    report.seconds += outcome.seconds;
    if (obs.mode == TransmitMode::defended)
    {
        report.failed_defended = outcome.failed ? 1 : 0;
        report.ber3            = outcome.ber.value_or(0.5);
        rec.defended           = std::move(outcome);
    }
    else
    {
        report.failed_static = outcome.failed ? 1 : 0;
        report.ber2          = outcome.ber.value_or(0.5);
        rec.attack           = std::move(outcome);
    }
    report.trials.push_back(std::move(rec));
    report.wall_seconds = detail::seconds_since(t0);
    return report;
}

//------------------------------------------------------------------------------
// Sweeps and tables
//------------------------------------------------------------------------------

struct SweepPoint
{
    Index subcarriers = 0;
    Index length      = 0;
    double ber2       = 0.0;
    std::vector<double> per_trial;
    int failed = 0;
};

/// Averaged BER2 over the K x H grid, static transmissions only.
inline std::vector<SweepPoint> sweep_kh(const ExperimentConfig& base, const std::vector<Index>& k_list,
                                        const std::vector<Index>& h_list, int parallel = 1,
                                        const std::function<void(const SweepPoint&)>& on_point = {})
{
    if (k_list.empty() || h_list.empty())
    {
        throw Error(ErrorKind::invalid_config, "sweep needs at least one K and one H");
    }
    std::vector<SweepPoint> out;
    for (Index k : k_list)
    {
        for (Index h : h_list)
        {
            auto cfg             = base;
            cfg.ofdm.subcarriers = k;
            cfg.ofdm.length      = h;
            cfg.defense          = false;
            const auto rep       = run_experiment(cfg, parallel);
            SweepPoint p;
            p.subcarriers = k;
            p.length      = h;
            p.ber2        = *rep.ber2;
            p.failed      = rep.failed_static;
            for (const auto& t : rep.trials) p.per_trial.push_back(t.ber2());
            if (on_point) on_point(p);
            out.push_back(std::move(p));
        }
    }
    return out;
}

struct Table1Geometry
{
    int no;
    double theta0_deg;
    double theta_e_deg;
    bool phi_known;
};

inline const std::vector<Table1Geometry>& table1_geometries()
{
    static const std::vector<Table1Geometry> rows{
        {1, 50.0, 90.0, true},  {2, 60.0, 30.0, true},   {3, 80.0, 40.0, true},
        {4, 30.0, 70.0, false}, {5, 40.0, 90.0, false}, {6, 50.0, 130.0, false},
    };
    return rows;
}

struct Table1Row
{
    Table1Geometry geometry;
    double phi = 0.0;
    AttackReport report;
};

struct Table1Options
{
    int trials         = 30;
    std::uint64_t seed = 1;
    int parallel       = 1;
    int n_antennas     = 7;
    OfdmConfig ofdm;
    IcaOptions ica;
    ToleranceSet tolerances;
};

inline ExperimentConfig table1_config(const Table1Geometry& g, const Table1Options& opts)
{
    ExperimentConfig cfg;
    cfg.tma.kind       = PatternSource::Kind::paper_family;
    cfg.tma.n_antennas = opts.n_antennas;
    cfg.tma.theta0_deg = g.theta0_deg;
    cfg.ofdm           = opts.ofdm;
    cfg.theta_e_deg    = g.theta_e_deg;
    cfg.phi_known      = g.phi_known;
    cfg.trials         = opts.trials;
    cfg.ica            = opts.ica;
    cfg.tolerances     = opts.tolerances;
    cfg.defense        = true;
    cfg.seed           = opts.seed + static_cast<std::uint64_t>(g.no);
    return cfg;
}

inline std::vector<Table1Row> reproduce_table1(const Table1Options& opts,
                                               const std::function<void(const Table1Row&)>& on_row = {},
                                               const std::function<void(const TrialRecord&)>& on_trial = {})
{
    std::vector<Table1Row> rows;
    for (const auto& g : table1_geometries())
    {
        Table1Row row;
        row.geometry = g;
        row.phi      = phi_of(g.theta_e_deg, g.theta0_deg);
        row.report   = run_experiment(table1_config(g, opts), opts.parallel, on_trial);
        if (on_row) on_row(row);
        rows.push_back(std::move(row));
    }
    return rows;
}

//------------------------------------------------------------------------------
// JSON and CSV
//------------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const OfdmConfig& o)
{
    j = nlohmann::json{{"K", o.subcarriers}, {"M", o.psk_order}, {"H", o.length}};
}

inline void from_json(const nlohmann::json& j, OfdmConfig& o)
{
    o = OfdmConfig{};
    if (j.contains("K")) j.at("K").get_to(o.subcarriers);
    if (j.contains("M")) j.at("M").get_to(o.psk_order);
    if (j.contains("H")) j.at("H").get_to(o.length);
}

inline void to_json(nlohmann::json& j, const PatternSource& p)
{
    if (p.kind == PatternSource::Kind::fixed)
    {
        j = p.fixed;
    }
    else
    {
        j = nlohmann::json{{"family", "paper"}, {"n_antennas", p.n_antennas}, {"theta0_deg", p.theta0_deg}};
    }
}

/// Either a TmaConfig object or {"family": "paper", "n_antennas", "theta0_deg"}.
inline void from_json(const nlohmann::json& j, PatternSource& p)
{
    p = PatternSource{};
    if (j.contains("family"))
    {
        const auto family = j.at("family").get<std::string>();
        if (family != "paper")
        {
            throw Error(ErrorKind::invalid_config, "unknown pattern family '" + family + "'");
        }
        p.kind = PatternSource::Kind::paper_family;
        if (j.contains("n_antennas")) j.at("n_antennas").get_to(p.n_antennas);
        if (j.contains("theta0_deg")) j.at("theta0_deg").get_to(p.theta0_deg);
    }
    else
    {
        p.kind = PatternSource::Kind::fixed;
        j.get_to(p.fixed);
    }
}

inline void to_json(nlohmann::json& j, const ExperimentConfig& cfg)
{
    j = nlohmann::json{{"tma", cfg.tma},
                       {"ofdm", cfg.ofdm},
                       {"theta_e_deg", cfg.theta_e_deg},
                       {"phi_known", cfg.phi_known},
                       {"trials", cfg.trials},
                       {"ica", cfg.ica},
                       {"tolerances", cfg.tolerances},
                       {"search", {{"n_min", cfg.gn.min},
                                   {"n_max", cfg.gn.max},
                                   {"phi_min", cfg.phi_grid.min},
                                   {"phi_max", cfg.phi_grid.max},
                                   {"phi_step", cfg.phi_grid.step}}},
                       {"defense", cfg.defense},
                       {"seed", cfg.seed}};
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& cfg)
{
    cfg = ExperimentConfig{};
    j.at("tma").get_to(cfg.tma);
    if (j.contains("ofdm")) j.at("ofdm").get_to(cfg.ofdm);
    j.at("theta_e_deg").get_to(cfg.theta_e_deg);
    if (j.contains("phi_known")) j.at("phi_known").get_to(cfg.phi_known);
    if (j.contains("trials")) j.at("trials").get_to(cfg.trials);
    if (j.contains("ica")) j.at("ica").get_to(cfg.ica);
    if (j.contains("tolerances")) j.at("tolerances").get_to(cfg.tolerances);
    if (j.contains("search"))
    {
        const auto& s = j.at("search");
        if (s.contains("n_min")) s.at("n_min").get_to(cfg.gn.min);
        if (s.contains("n_max")) s.at("n_max").get_to(cfg.gn.max);
        if (s.contains("phi_min")) s.at("phi_min").get_to(cfg.phi_grid.min);
        if (s.contains("phi_max")) s.at("phi_max").get_to(cfg.phi_grid.max);
        if (s.contains("phi_step")) s.at("phi_step").get_to(cfg.phi_grid.step);
    }
    if (j.contains("defense")) j.at("defense").get_to(cfg.defense);
    if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
}

/// Parses an ExperimentConfig, mapping every schema problem to invalid_config.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j)
{
    try
    {
        auto cfg = j.get<ExperimentConfig>();
        cfg.validate();
        return cfg;
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::invalid_config, e.what());
    }
}

inline void to_json(nlohmann::json& j, const StageSeconds& s)
{
    j = nlohmann::json{{"transmit", s.transmit}, {"ica", s.ica},         {"reorder", s.reorder},
                       {"resolve", s.resolve},   {"recover", s.recover}};
}

inline void to_json(nlohmann::json& j, const AttackOutcome& a)
{
    j = nlohmann::json{{"failed", a.failed},
                       {"ica", {{"converged", a.ica_converged},
                                {"converged_components", a.ica_converged_count},
                                {"components", a.ica_components},
                                {"iterations", a.ica_iterations}}},
                       {"seconds", a.seconds}};
    j["ber"]       = a.ber ? nlohmann::json(*a.ber) : nlohmann::json(nullptr);
    j["alignment"] = a.alignment ? nlohmann::json(*a.alignment) : nlohmann::json(nullptr);
    if (a.failed)
    {
        j["failed_stage"] = a.failed_stage;
        j["error"]        = a.error;
    }
    j["reorder"]    = a.reorder ? nlohmann::json(*a.reorder) : nlohmann::json(nullptr);
    j["resolution"] = a.resolution ? nlohmann::json(*a.resolution) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const TrialRecord& r)
{
    j = nlohmann::json{{"index", r.index},   {"seed", r.seed}, {"pattern", r.pattern},
                       {"phi", r.phi},       {"ber1", r.ber1}, {"static", r.attack}};
    j["defended"] = r.defended ? nlohmann::json(*r.defended) : nlohmann::json(nullptr);
}

inline void to_json(nlohmann::json& j, const AttackReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j = nlohmann::json{{"version", TMADM_VERSION},
                       {"fingerprint", r.fingerprint},
                       {"config", r.config},
                       {"ber1", opt(r.ber1)},
                       {"ber2", opt(r.ber2)},
                       {"ber3", opt(r.ber3)},
                       {"ber1_rule", "per-subcarrier unit power, minimum-distance decision"},
                       {"pattern_reading", "dt = 1/N; each trial assigns the offsets (n-1)/N by a random permutation"},
                       {"failed_static", r.failed_static},
                       {"failed_defended", r.failed_defended},
                       {"seconds", r.seconds},
                       {"wall_seconds", r.wall_seconds},
                       {"trials", r.trials}};
}

inline void write_table1_csv(const std::vector<Table1Row>& rows, const std::filesystem::path& path)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(6);
    os << "no,theta0_deg,theta_e_deg,phi,ber1,ber2,ber3\n";
    for (const auto& r : rows)
    {
        os << r.geometry.no << ',' << r.geometry.theta0_deg << ',' << r.geometry.theta_e_deg << ','
           << r.phi << ',' << r.report.ber1.value_or(0.0) << ',' << r.report.ber2.value_or(0.0) << ','
           << r.report.ber3.value_or(0.0) << '\n';
    }
    detail::write_text_atomically(path, os.str());
}

inline nlohmann::json table1_json(const std::vector<Table1Row>& rows)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows)
    {
        out.push_back({{"no", r.geometry.no},
                       {"theta0_deg", r.geometry.theta0_deg},
                       {"theta_e_deg", r.geometry.theta_e_deg},
                       {"phi_known", r.geometry.phi_known},
                       {"phi", r.phi},
                       {"ber1", *r.report.ber1},
                       {"ber2", *r.report.ber2},
                       {"ber3", *r.report.ber3},
                       {"report", r.report}});
    }
    return out;
}

inline void write_sweep_csv(const std::vector<SweepPoint>& points, const std::filesystem::path& path)
{
    std::ostringstream os;
    os << "K,H,ber2\n";
    os.precision(8);
    for (const auto& p : points)
    {
        os << p.subcarriers << ',' << p.length << ',' << p.ber2 << '\n';
    }
    detail::write_text_atomically(path, os.str());
}

} // namespace tmadm

#endif // TMADM_HARNESS_HPP
