// Copyright 2026 The kzfreeze Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

/// File formats, content hashing and the on-disk result cache.

#include <atomic>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "kzfreeze/ed.hpp"
#include "kzfreeze/errors.hpp"
#include "kzfreeze/lattice.hpp"

namespace kzfreeze {

inline constexpr const char* kToolVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Hashing.

/// 64-bit FNV-1a, incremental.
class ContentHash {
  public:
    ContentHash& bytes(const void* data, std::size_t n) {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t k = 0; k < n; ++k) {
            h_ ^= p[k];
            h_ *= 0x100000001b3ull;
        }
        return *this;
    }
    ContentHash& text(std::string_view s) {
        std::uint64_t n = s.size();
        bytes(&n, sizeof n);
        return bytes(s.data(), s.size());
    }
    ContentHash& u64(std::uint64_t v) { return bytes(&v, sizeof v); }
    ContentHash& f64(double v) {
        if (v == 0.0) v = 0.0;  // fold -0
        return u64(std::bit_cast<std::uint64_t>(v));
    }

    std::uint64_t value() const { return h_; }
    std::string hex() const { return to_hex(h_); }

    static std::string to_hex(std::uint64_t v) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
        return buf;
    }

  private:
    std::uint64_t h_ = 0xcbf29ce484222325ull;
};

inline std::uint64_t hash_grid_spec(const GridSpec& g) {
    ContentHash h;
    h.text("grid");
    for (const auto* axis : {&g.temperature, &g.delta}) {
        h.u64(axis->values.size());
        for (double v : axis->values) h.f64(v);
    }
    return h.value();
}

/// Identifies an instance including its field magnitude.
inline std::uint64_t instance_hash(const SquareLatticeInstance& x) {
    return ContentHash().text("instance").u64(x.key()).f64(x.field_magnitude).value();
}

// ---------------------------------------------------------------------------
// Files.

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes `content` to a unique temporary file beside `path` and renames it
/// into place, so readers never observe a partial file.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view content) {
    static std::atomic<unsigned> counter{0};
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp." + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()) % 1000003) + "." +
           std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out.write(content.data(), std::streamsize(content.size()));
        out.flush();
        if (!out) throw IoError("write to '" + tmp.string() + "' failed");
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
    }
}

// ---------------------------------------------------------------------------
// Instance JSON.

inline nlohmann::json instance_to_json(const SquareLatticeInstance& x) {
    nlohmann::json couplers = nlohmann::json::array();
    for (int e = 0; e < kEdges; ++e)
        couplers.push_back({{"u", kGridEdges[e].u}, {"v", kGridEdges[e].v}, {"sign", int(x.couplers[e])}});
    nlohmann::json fields = nlohmann::json::array();
    for (auto h : x.fields) fields.push_back(int(h));
    return {{"couplers", couplers}, {"fields", fields}, {"field_magnitude", x.field_magnitude}};
}

inline SquareLatticeInstance instance_from_json(const nlohmann::json& j) {
    SquareLatticeInstance x;
    try {
        const auto& couplers = j.at("couplers");
        if (!couplers.is_array() || couplers.size() != kEdges)
            throw std::invalid_argument("instance needs exactly 12 couplers");
        std::array<bool, kEdges> seen{};
        for (const auto& c : couplers) {
            int e = edge_index(c.at("u").get<int>(), c.at("v").get<int>());
            if (e < 0) throw std::invalid_argument("coupler is not an edge of the 3x3 grid");
            if (seen[e]) throw std::invalid_argument("duplicate coupler");
            seen[e] = true;
            x.couplers[e] = Sign(c.at("sign").get<int>());
        }
        if (j.contains("fields")) {
            const auto& f = j.at("fields");
            if (!f.is_array() || f.size() != kSites) throw std::invalid_argument("instance needs exactly 9 fields");
            for (int i = 0; i < kSites; ++i) x.fields[i] = Sign(f[i].get<int>());
        }
        if (j.contains("field_magnitude")) x.field_magnitude = j.at("field_magnitude").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("malformed instance: ") + e.what());
    }
    x.validate();
    return x;
}

inline nlohmann::json class_list_to_json(const std::vector<SquareLatticeInstance>& classes) {
    nlohmann::json out = nlohmann::json::array();
    for (std::size_t k = 0; k < classes.size(); ++k) {
        auto j = instance_to_json(classes[k]);
        j["class_id"] = k;
        j["key"] = classes[k].key();
        out.push_back(j);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Binary magnetization grid cache.
//
// Layout (little-endian): magic "KZMG", u32 version, u64 instance key,
// u64 grid hash, u64 nt, u64 nd, nt + nd axis doubles, 9*nt*nd doubles
// [spin][T][delta], u64 FNV-1a of everything before it.

inline constexpr std::uint32_t kGridCacheVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "cache files are written in native little-endian order");

struct ByteWriter {
    std::string buf;
    template <class T>
    void put(const T& v) {
        buf.append(reinterpret_cast<const char*>(&v), sizeof v);
    }
};

struct ByteReader {
    std::string_view buf;
    std::size_t pos = 0;
    template <class T>
    bool get(T& v) {
        if (pos + sizeof v > buf.size()) return false;
        std::memcpy(&v, buf.data() + pos, sizeof v);
        pos += sizeof v;
        return true;
    }
};

}  // namespace detail

inline std::string encode_grid(std::uint64_t instance_key, const MagnetizationGrid& g) {
    detail::ByteWriter w;
    w.buf.append("KZMG", 4);
    w.put(kGridCacheVersion);
    w.put(instance_key);
    w.put(hash_grid_spec(g.grid));
    w.put(std::uint64_t(g.nt()));
    w.put(std::uint64_t(g.nd()));
    for (double v : g.grid.temperature.values) w.put(v);
    for (double v : g.grid.delta.values) w.put(v);
    for (double v : g.values) w.put(v);
    w.put(ContentHash().bytes(w.buf.data(), w.buf.size()).value());
    return std::move(w.buf);
}

/// Decodes a cached grid; nullopt with a reason when the payload is corrupt
/// or was produced for a different instance or grid.
inline std::optional<MagnetizationGrid> decode_grid(std::string_view data, std::uint64_t instance_key,
                                                    const GridSpec& expected, std::string* reason = nullptr) {
    auto fail = [&](const char* why) -> std::optional<MagnetizationGrid> {
        if (reason) *reason = why;
        return std::nullopt;
    };
    if (data.size() < 4 + 4 + 8 * 5 || data.substr(0, 4) != "KZMG") return fail("bad magic");
    std::uint64_t stored_sum;
    std::memcpy(&stored_sum, data.data() + data.size() - 8, 8);
    if (ContentHash().bytes(data.data(), data.size() - 8).value() != stored_sum) return fail("checksum mismatch");
    detail::ByteReader r{data.substr(0, data.size() - 8), 4};
    std::uint32_t version;
    std::uint64_t key, grid_hash, nt, nd;
    if (!r.get(version) || !r.get(key) || !r.get(grid_hash) || !r.get(nt) || !r.get(nd)) return fail("truncated header");
    if (version != kGridCacheVersion) return fail("version mismatch");
    if (key != instance_key) return fail("instance mismatch");
    if (grid_hash != hash_grid_spec(expected) || nt != std::uint64_t(expected.temperature.size()) ||
        nd != std::uint64_t(expected.delta.size()))
        return fail("grid mismatch");
    MagnetizationGrid g{expected, {}};
    for (std::uint64_t k = 0; k < nt + nd; ++k) {
        double v;
        if (!r.get(v)) return fail("truncated axes");
    }
    g.values.resize(std::size_t(kSites * nt * nd));
    for (double& v : g.values)
        if (!r.get(v)) return fail("truncated payload");
    if (r.pos != r.buf.size()) return fail("trailing bytes");
    return g;
}

/// Content-addressed store under a root directory.
class ResultCache {
  public:
    explicit ResultCache(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }

    std::filesystem::path grid_path(std::uint64_t instance_key, const GridSpec& g) const {
        ContentHash h;
        h.text("magnetization-grid").u64(kGridCacheVersion).u64(instance_key).u64(hash_grid_spec(g));
        return root_ / "grids" / (h.hex() + ".kzmg");
    }

    /// Returns the cached grid if present and valid. A corrupt entry is
    /// reported through `warning` and treated as a miss.
    std::optional<MagnetizationGrid> load_grid(const SquareLatticeInstance& x, const GridSpec& g,
                                               std::string* warning = nullptr) const {
        auto path = grid_path(instance_hash(x), g);
        if (!std::filesystem::exists(path)) return std::nullopt;
        std::string reason;
        std::optional<MagnetizationGrid> out;
        try {
            out = decode_grid(read_file(path), instance_hash(x), g, &reason);
        } catch (const IoError& e) {
            reason = e.what();
        }
        if (!out && warning) *warning = "ignoring corrupt cache entry " + path.string() + " (" + reason + ")";
        return out;
    }

    void store_grid(const SquareLatticeInstance& x, const MagnetizationGrid& g) const {
        atomic_write_file(grid_path(instance_hash(x), g.grid), encode_grid(instance_hash(x), g));
    }

  private:
    std::filesystem::path root_;
};

// ---------------------------------------------------------------------------
// CSV.

inline std::string csv_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Header lines carried by every exported text file.
inline std::string provenance_comment(std::string_view config_hash, std::string_view prefix = "# ") {
    std::string s;
    s += prefix;
    s += "kzfreeze ";
    s += kToolVersion;
    s += " config_hash=";
    s += config_hash;
    s += "\n";
    return s;
}

inline std::string grid_to_csv(const MagnetizationGrid& g, std::string_view config_hash) {
    std::string out = provenance_comment(config_hash);
    out += "spin,T,delta,m\n";
    for (int i = 0; i < kSites; ++i)
        for (int t = 0; t < g.nt(); ++t)
            for (int d = 0; d < g.nd(); ++d)
                out += std::to_string(i) + "," + csv_number(g.grid.temperature.values[t]) + "," +
                       csv_number(g.grid.delta.values[d]) + "," + csv_number(g.at(i, t, d)) + "\n";
    return out;
}

}  // namespace kzfreeze
