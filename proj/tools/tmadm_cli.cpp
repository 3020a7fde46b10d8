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

// tmadm: generate datasets, attack them, and run the BER experiments.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include <tmadm/harness.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tmadm;

namespace
{

struct Common
{
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
    bool defended   = false;
    bool phi_known  = false;
    bool phi_unknown = false;
    std::optional<int> trials;
    int parallel = 1;
};

int emit_error(const std::string& kind, const std::string& message, int code)
{
    std::cerr << json{{"error", {{"kind", kind}, {"message", message}}}}.dump() << '\n';
    return code;
}

json opt(const std::optional<double>& v)
{
    return v ? json(*v) : json(nullptr);
}

json read_json(const std::string& path)
{
    std::ifstream is(path);
    if (!is)
    {
        throw Error(ErrorKind::io_error, "cannot open " + path);
    }
    try
    {
        return json::parse(is);
    }
    catch (const json::exception& e)
    {
        throw Error(ErrorKind::invalid_config, path + ": " + e.what());
    }
}

fs::path prepare_out(const std::string& dir)
{
    fs::path p(dir);
    std::error_code ec;
    fs::create_directories(p, ec);
    if (ec)
    {
        throw Error(ErrorKind::io_error, "cannot create " + dir + ": " + ec.message());
    }
    return p;
}

void write_json(const fs::path& path, const json& j)
{
    detail::write_text_atomically(path, j.dump(2) + "\n");
}

void apply_overrides(ExperimentConfig& cfg, const Common& c)
{
    if (c.seed) cfg.seed = *c.seed;
    if (c.trials) cfg.trials = *c.trials;
    if (c.phi_known) cfg.phi_known = true;
    if (c.phi_unknown) cfg.phi_known = false;
    cfg.validate();
}

ExperimentConfig load_config(const Common& c)
{
    if (c.config.empty())
    {
        throw Error(ErrorKind::invalid_config, "--config is required");
    }
    auto cfg = parse_experiment_config(read_json(c.config));
    apply_overrides(cfg, c);
    return cfg;
}

void log_trial(const TrialRecord& r)
{
    std::cerr << "trial " << r.index << " ber1 " << r.ber1 << " ber2 " << r.ber2();
    if (auto b3 = r.ber3()) std::cerr << " ber3 " << *b3;
    if (r.attack.failed) std::cerr << " [static attack failed at " << r.attack.failed_stage << "]";
    std::cerr << '\n';
}

int cmd_gen(const Common& c)
{
    const auto cfg = load_config(c);
    const auto out = prepare_out(c.out);
    const auto seed = trial_seed(cfg.seed, 0);
    auto rng        = make_rng(seed, 3);
    const auto pattern = cfg.tma.draw(rng);
    const auto block = generate_symbols_seeded(cfg.ofdm.subcarriers, cfg.ofdm.psk_order, cfg.ofdm.length, seed);
    auto obs = c.defended
                   ? transmit_defended_seeded(pattern, cfg.ofdm.subcarriers, block, cfg.theta_e_deg,
                                              seed ^ 0xdefe0000defe0000ull)
                   : transmit_static(pattern, cfg.ofdm.subcarriers, block, cfg.theta_e_deg);
    obs.source_seed = seed;
    const auto header = out / "dataset.json";
    save_dataset(obs, header);
    std::cout << json{{"dataset", header.string()}, {"payload", payload_path_for(header).string()}}.dump()
              << '\n';
    return 0;
}

int cmd_attack(const Common& c, const std::string& dataset)
{
    AttackOptions opts;
    if (!c.config.empty())
    {
        auto cfg = parse_experiment_config(read_json(c.config));
        apply_overrides(cfg, c);
        opts = attack_options(cfg);
    }
    else
    {
        if (c.phi_unknown) opts.phi_known = false;
    }
    const auto obs = load_dataset(dataset);
    if (c.seed) opts.ica.seed = *c.seed;
    const auto report = attack_dataset(obs, opts);
    const auto out    = prepare_out(c.out);
    write_json(out / "report.json", report);
    std::cout << json{{"report", (out / "report.json").string()},
                      {"ber1", opt(report.ber1)},
                      {"ber2", opt(report.ber2)},
                      {"ber3", opt(report.ber3)}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_experiment(const Common& c)
{
    const auto cfg    = load_config(c);
    const auto out    = prepare_out(c.out);
    const auto report = run_experiment(cfg, c.parallel, log_trial);
    write_json(out / "report.json", report);
    std::cout << json{{"report", (out / "report.json").string()},
                      {"ber1", opt(report.ber1)},
                      {"ber2", opt(report.ber2)},
                      {"ber3", opt(report.ber3)}}
                     .dump()
              << '\n';
    return 0;
}

int cmd_table1(const Common& c)
{
    Table1Options opts;
    if (!c.config.empty())
    {
        const auto j = read_json(c.config);
        try
        {
            if (j.contains("ofdm")) j.at("ofdm").get_to(opts.ofdm);
            if (j.contains("ica")) j.at("ica").get_to(opts.ica);
            if (j.contains("tolerances")) j.at("tolerances").get_to(opts.tolerances);
            if (j.contains("trials")) j.at("trials").get_to(opts.trials);
            if (j.contains("seed")) j.at("seed").get_to(opts.seed);
        }
        catch (const json::exception& e)
        {
            throw Error(ErrorKind::invalid_config, e.what());
        }
    }
    if (c.trials) opts.trials = *c.trials;
    if (c.seed) opts.seed = *c.seed;
    opts.parallel  = c.parallel;
    const auto out = prepare_out(c.out);
    const auto rows = reproduce_table1(
        opts,
        [](const Table1Row& r) {
            std::cerr << "row " << r.geometry.no << " phi " << r.phi << " ber1 " << *r.report.ber1 << " ber2 "
                      << *r.report.ber2 << " ber3 " << *r.report.ber3 << '\n';
        },
        log_trial);
    write_table1_csv(rows, out / "table1.csv");
    write_json(out / "table1.json", table1_json(rows));
    std::cout << json{{"csv", (out / "table1.csv").string()}, {"json", (out / "table1.json").string()}}.dump()
              << '\n';
    return 0;
}

int cmd_sweep(const Common& c, std::vector<Index> k_list, std::vector<Index> h_list, bool large)
{
    ExperimentConfig cfg;
    if (!c.config.empty())
    {
        cfg = load_config(c);
    }
    else
    {
        // Fig. 1 geometry: theta0 = 60, theta_e = 30, offsets in natural order.
        cfg.tma.kind  = PatternSource::Kind::fixed;
        cfg.tma.fixed = identity_pattern(7, 60.0);
        cfg.theta_e_deg = 30.0;
        cfg.trials      = 3;
        apply_overrides(cfg, c);
    }
    if (k_list.empty()) k_list = {8, 16, 32, 64};
    if (large)
    {
        k_list.push_back(128);
        k_list.push_back(256);
    }
    if (h_list.empty()) h_list = {1000, 3000, 10000, 30000, 100000};
    const auto out    = prepare_out(c.out);
    const auto points = sweep_kh(cfg, k_list, h_list, c.parallel, [](const SweepPoint& p) {
        std::cerr << "K " << p.subcarriers << " H " << p.length << " ber2 " << p.ber2 << '\n';
    });
    write_sweep_csv(points, out / "sweep.csv");
    json j = json::array();
    for (const auto& p : points)
    {
        j.push_back({{"K", p.subcarriers}, {"H", p.length}, {"ber2", p.ber2}, {"per_trial", p.per_trial},
                     {"failed", p.failed}});
    }
    json cj;
    to_json(cj, cfg);
    write_json(out / "sweep.json", json{{"config", cj}, {"points", j}});
    std::cout << json{{"csv", (out / "sweep.csv").string()}}.dump() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"TMA-OFDM directional modulation: ICA attack and randomized-switching defense"};
    app.require_subcommand(1);
    app.set_version_flag("--version", TMADM_VERSION);

    Common c;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", c.config, "ExperimentConfig JSON");
        sub->add_option("--seed", c.seed, "master seed");
        sub->add_option("--out", c.out, "output directory")->capture_default_str();
        auto* known   = sub->add_flag("--phi-known", c.phi_known, "eavesdropper knows phi");
        auto* unknown = sub->add_flag("--phi-unknown", c.phi_unknown, "grid-search phi");
        known->excludes(unknown);
        sub->add_option("--trials", c.trials, "number of trials");
        sub->add_option("--parallel", c.parallel, "worker threads")->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen", "write a dataset (trial 0 of the config)");
    add_common(gen);
    gen->add_flag("--defended", c.defended, "randomize the switching pattern per OFDM symbol");

    std::string dataset;
    auto* attack = app.add_subcommand("attack", "attack a stored dataset");
    add_common(attack);
    attack->add_option("dataset", dataset, "dataset header JSON")->required();

    auto* experiment = app.add_subcommand("experiment", "end-to-end trials from a config");
    add_common(experiment);

    auto* table1 = app.add_subcommand("table1", "the six reference geometries");
    add_common(table1);

    std::vector<Index> k_list, h_list;
    bool large = false;
    auto* sweep = app.add_subcommand("sweep", "BER2 over a K x H grid");
    add_common(sweep);
    sweep->add_option("--K", k_list, "subcarrier counts");
    sweep->add_option("--H", h_list, "OFDM symbol counts");
    sweep->add_flag("--large", large, "add K = 128 and 256");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::CallForVersion& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        return emit_error("usage", e.what(), 2);
    }

    try
    {
        if (*gen) return cmd_gen(c);
        if (*attack) return cmd_attack(c, dataset);
        if (*experiment) return cmd_experiment(c);
        if (*table1) return cmd_table1(c);
        if (*sweep) return cmd_sweep(c, k_list, h_list, large);
    }
    catch (const Error& e)
    {
        const bool config = e.kind() == ErrorKind::invalid_config || e.kind() == ErrorKind::invalid_argument;
        return emit_error(std::string(to_string(e.kind())), e.what(), config ? 2 : 1);
    }
    catch (const std::exception& e)
    {
        return emit_error("internal", e.what(), 1);
    }
    return 0;
}
