#pragma once

// Shared vocabulary for the blogjury pipeline: error types, labelling stages,
// line-delimited JSON helpers and small text utilities.

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"

namespace blogjury {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

inline constexpr std::string_view kToolVersion = "0.3.0";

/// Base class for all pipeline errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad or missing input data (CLI exit code 2).
class InputError : public Error {
public:
    using Error::Error;
};

/// A stage was invoked out of order or without its prerequisites (exit code 3).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Every juror abstained on some post during a live run (exit code 4).
class ProviderExhausted : public Error {
public:
    using Error::Error;
};

enum class Stage { area, activity, task };

inline constexpr std::array<Stage, 3> kAllStages{Stage::area, Stage::activity, Stage::task};

inline std::string_view to_string(Stage s)
{
    switch (s) {
    case Stage::area: return "area";
    case Stage::activity: return "activity";
    case Stage::task: return "task";
    }
    return "?";
}

inline Stage parse_stage(std::string_view s)
{
    if (s == "area") return Stage::area;
    if (s == "activity") return Stage::activity;
    if (s == "task") return Stage::task;
    throw InputError("unknown stage '" + std::string(s) + "'");
}

inline void to_json(json& j, Stage s) { j = std::string(to_string(s)); }
inline void from_json(json const& j, Stage& s) { s = parse_stage(j.get<std::string>()); }

// ---------------------------------------------------------------------------
// text helpers

inline std::string trim(std::string_view s)
{
    auto const ws = [](unsigned char c) { return std::isspace(c) != 0; };
    while (!s.empty() && ws(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && ws(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::string to_lower_ascii(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

/// Number of Unicode code points in a UTF-8 string. Continuation bytes are
/// not counted, so malformed input degrades to a byte-ish count.
inline std::size_t utf8_length(std::string_view s)
{
    return static_cast<std::size_t>(std::count_if(s.begin(), s.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0U) != 0x80U;
    }));
}

inline std::string sha256_hex(std::string_view data)
{
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 digest failed");
    }
    std::ostringstream os;
    os << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) os << std::setw(2) << static_cast<int>(digest[i]);
    return os.str();
}

// ---------------------------------------------------------------------------
// line-delimited JSON

inline std::string read_file(std::filesystem::path const& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(std::filesystem::path const& path, std::string_view content)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
    if (!out) throw Error("write failed for " + path.string());
}

inline void append_line(std::filesystem::path const& path, std::string_view line)
{
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw Error("cannot append to " + path.string());
    out << line << '\n';
}

/// Parses every non-blank line of `in` as JSON. Throws InputError naming the
/// line number on malformed content.
inline std::vector<json> read_jsonl(std::istream& in, std::string_view what = "input")
{
    std::vector<json> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(json::parse(line));
        } catch (json::parse_error const& e) {
            throw InputError(std::string(what) + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return rows;
}

inline std::vector<json> read_jsonl_file(std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    return read_jsonl(in, path.string());
}

template <typename Range>
std::string to_jsonl(Range const& rows)
{
    std::string out;
    for (auto const& row : rows) {
        out += json(row).dump();
        out += '\n';
    }
    return out;
}

} // namespace blogjury
