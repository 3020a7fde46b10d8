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
/// \file dataset_io.hpp
///
/// Observation datasets on disk: a JSON header next to a binary payload of
/// little-endian float64 pairs (re, im), column-major K x H.
///
#ifndef TMADM_DATASET_IO_HPP
#define TMADM_DATASET_IO_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "json.hpp"

#include <tmadm/airlink.hpp>
#include <tmadm/common.hpp>
#include <tmadm/tma_core.hpp>

namespace tmadm
{

inline constexpr int dataset_format_version = 1;

/// The payload sits next to the header with the extension replaced by ".bin".
inline std::filesystem::path payload_path_for(const std::filesystem::path& header)
{
    auto p = header;
    p.replace_extension(".bin");
    return p;
}

namespace detail
{

inline std::uint32_t crc32_of(const std::vector<unsigned char>& bytes)
{
    uLong crc          = ::crc32(0L, Z_NULL, 0);
    std::size_t offset = 0;
    while (offset < bytes.size())
    {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - offset, 1u << 30));
        crc              = ::crc32(crc, bytes.data() + offset, chunk);
        offset += chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

inline void put_le(std::vector<unsigned char>& out, double v)
{
    auto u = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b)
    {
        out.push_back(static_cast<unsigned char>(u & 0xffu));
        u >>= 8;
    }
}

inline double get_le(const unsigned char* p)
{
    std::uint64_t u = 0;
    for (int b = 7; b >= 0; --b)
    {
        u = (u << 8) | p[b];
    }
    return std::bit_cast<double>(u);
}

/// Writes to a temporary sibling and renames it over the target.
inline void write_atomically(const std::filesystem::path& target, const char* data, std::size_t size)
{
    auto tmp = target;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os)
        {
            throw Error(ErrorKind::io_error, "cannot open " + tmp.string());
        }
        os.write(data, static_cast<std::streamsize>(size));
        if (!os)
        {
            throw Error(ErrorKind::io_error, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec)
    {
        throw Error(ErrorKind::io_error, "cannot rename " + tmp.string() + ": " + ec.message());
    }
}

inline void write_text_atomically(const std::filesystem::path& target, const std::string& text)
{
    write_atomically(target, text.data(), text.size());
}

} // namespace detail

inline std::vector<unsigned char> encode_payload(const ComplexMatrix& samples)
{
    std::vector<unsigned char> bytes;
    bytes.reserve(static_cast<std::size_t>(samples.size()) * 16);
    for (Index c = 0; c < samples.cols(); ++c)
    {
        for (Index r = 0; r < samples.rows(); ++r)
        {
            detail::put_le(bytes, samples(r, c).real());
            detail::put_le(bytes, samples(r, c).imag());
        }
    }
    return bytes;
}

///
/// Writes `header` (JSON) and its ".bin" payload. In defended mode the
/// pattern log is stored as its seed when one is known, and otherwise as the
/// lattice indices of every draw.
///
inline void save_dataset(const ObservationSet& obs, const std::filesystem::path& header)
{
    const auto payload = encode_payload(obs.samples);
    const auto bin     = payload_path_for(header);

    nlohmann::json j;
    j["format"]      = "tmadm-dataset";
    j["version"]     = dataset_format_version;
    j["K"]           = obs.subcarriers();
    j["H"]           = obs.length();
    j["M"]           = obs.psk_order;
    j["mode"]        = to_string(obs.mode);
    j["angle_deg"]   = obs.angle_deg;
    j["theta0_deg"]  = obs.theta0_deg;
    j["seed"]        = obs.source_seed;
    j["pattern"]     = obs.pattern;
    nlohmann::json summary{{"n_antennas", obs.pattern.n_antennas},
                           {"delta_tau", obs.pattern.delta_tau},
                           {"draws", obs.mode == TransmitMode::defended ? obs.pattern_log.size() : 1}};
    if (obs.pattern_seed)
    {
        summary["pattern_seed"] = *obs.pattern_seed;
    }
    else if (obs.mode == TransmitMode::defended)
    {
        nlohmann::json log = nlohmann::json::array();
        for (const auto& p : obs.pattern_log)
        {
            log.push_back(offset_indices(p));
        }
        summary["lattice_indices"] = std::move(log);
    }
    j["pattern_summary"] = std::move(summary);
    j["payload"]         = {{"file", bin.filename().string()},
                            {"bytes", payload.size()},
                            {"crc32", detail::crc32_of(payload)}};

    detail::write_atomically(bin, reinterpret_cast<const char*>(payload.data()), payload.size());
    detail::write_text_atomically(header, j.dump(2) + "\n");
}

inline ObservationSet load_dataset(const std::filesystem::path& header)
{
    std::ifstream hs(header);
    if (!hs)
    {
        throw Error(ErrorKind::io_error, "cannot open " + header.string());
    }

    ObservationSet obs;
    Index k = 0;
    Index h = 0;
    std::size_t bytes  = 0;
    std::uint32_t crc  = 0;
    std::string file;
    nlohmann::json summary;
    try
    {
        const auto j = nlohmann::json::parse(hs);
        if (j.at("format").get<std::string>() != "tmadm-dataset" ||
            j.at("version").get<int>() != dataset_format_version)
        {
            throw Error(ErrorKind::corrupt_header, "unknown format or version");
        }
        k = j.at("K").get<Index>();
        h = j.at("H").get<Index>();
        j.at("M").get_to(obs.psk_order);
        obs.mode = transmit_mode_from_string(j.at("mode").get<std::string>());
        j.at("angle_deg").get_to(obs.angle_deg);
        j.at("theta0_deg").get_to(obs.theta0_deg);
        j.at("seed").get_to(obs.source_seed);
        j.at("pattern").get_to(obs.pattern);
        summary = j.at("pattern_summary");
        const auto& pl = j.at("payload");
        pl.at("file").get_to(file);
        pl.at("bytes").get_to(bytes);
        pl.at("crc32").get_to(crc);
    }
    catch (const nlohmann::json::exception& e)
    {
        throw Error(ErrorKind::corrupt_header, e.what());
    }
    catch (const Error& e)
    {
        if (e.kind() == ErrorKind::corrupt_header) throw;
        throw Error(ErrorKind::corrupt_header, e.what());
    }

    if (k < 1 || h < 1 || !is_valid_psk_order(obs.psk_order))
    {
        throw Error(ErrorKind::corrupt_header, "K, H or M out of range");
    }
    if (static_cast<std::size_t>(k) * static_cast<std::size_t>(h) * 16 != bytes)
    {
        throw Error(ErrorKind::corrupt_header, "K x H does not match the recorded payload size " +
                                                   std::to_string(bytes));
    }
    if (!validate_tma_params(obs.pattern).ok())
    {
        throw Error(ErrorKind::corrupt_header, "invalid pattern");
    }

    const auto bin = header.parent_path() / file;
    std::ifstream bs(bin, std::ios::binary);
    if (!bs)
    {
        throw Error(ErrorKind::io_error, "cannot open " + bin.string());
    }
    std::vector<unsigned char> payload(bytes);
    bs.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes));
    if (static_cast<std::size_t>(bs.gcount()) != bytes)
    {
        throw Error(ErrorKind::truncated_payload, "expected " + std::to_string(bytes) + " bytes, read " +
                                                      std::to_string(bs.gcount()));
    }
    if (bs.peek() != std::char_traits<char>::eof())
    {
        throw Error(ErrorKind::corrupt_header, "payload is longer than the header records");
    }
    if (detail::crc32_of(payload) != crc)
    {
        throw Error(ErrorKind::checksum_mismatch, bin.string());
    }

    obs.samples.resize(k, h);
    const unsigned char* p = payload.data();
    for (Index c = 0; c < h; ++c)
    {
        for (Index r = 0; r < k; ++r, p += 16)
        {
            obs.samples(r, c) = Complex(detail::get_le(p), detail::get_le(p + 8));
        }
    }

    if (obs.mode == TransmitMode::defended)
    {
        try
        {
            if (summary.contains("pattern_seed"))
            {
                obs.pattern_seed = summary.at("pattern_seed").get<std::uint64_t>();
                obs.pattern_log  = regenerate_pattern_log(obs.pattern, h, *obs.pattern_seed);
            }
            else
            {
                const auto& log = summary.at("lattice_indices");
                if (log.size() != static_cast<std::size_t>(h))
                {
                    throw Error(ErrorKind::corrupt_header, "pattern log length differs from H");
                }
                const int n = obs.pattern.n_antennas;
                for (const auto& idx : log)
                {
                    TmaConfig cfg = obs.pattern;
                    cfg.tau_offsets.clear();
                    for (int v : idx.get<std::vector<int>>())
                    {
                        cfg.tau_offsets.push_back(GainTable::lattice_tau(v, n));
                    }
                    obs.pattern_log.push_back(std::move(cfg));
                }
            }
        }
        catch (const nlohmann::json::exception& e)
        {
            throw Error(ErrorKind::corrupt_header, e.what());
        }
    }
    return obs;
}

} // namespace tmadm

#endif // TMADM_DATASET_IO_HPP
