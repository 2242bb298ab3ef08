#pragma once

// Corpus collection: search-record ingestion, URL and language filtering,
// content download and the interquartile-range length filter.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "blogjury/common.hpp"
#include "blogjury/parallel.hpp"

namespace blogjury::corpus {

struct SearchRecord {
    std::int64_t id = 0;
    std::string url;
    std::string title;
    std::string snippet;
    std::string source_blog;
    std::string company;
    std::string date; // optional ISO-8601 date, empty when unknown
};

enum class FetchStatus { ok, failed, excluded };

inline std::string_view to_string(FetchStatus s)
{
    switch (s) {
    case FetchStatus::ok: return "ok";
    case FetchStatus::failed: return "failed";
    case FetchStatus::excluded: return "excluded";
    }
    return "?";
}

inline FetchStatus parse_fetch_status(std::string_view s)
{
    if (s == "ok") return FetchStatus::ok;
    if (s == "failed") return FetchStatus::failed;
    if (s == "excluded") return FetchStatus::excluded;
    throw InputError("unknown fetch status '" + std::string(s) + "'");
}

struct BlogPost {
    std::int64_t record_id = 0;
    std::string url;
    std::string title;
    std::string company;
    std::string source_blog;
    std::string body;
    std::size_t content_length = 0; // code points of body
    FetchStatus fetch_status = FetchStatus::failed;
};

struct LengthStats {
    double q1 = 0;
    double q3 = 0;
    double iqr = 0;
    double lower_bound = 0;
    double upper_bound = 0;
    double multiplier = 1.5;
};

struct FilterConfig {
    std::vector<std::string> url_denylist{"/index/", "/author/"};
    std::set<std::string> language_allow{"en"};
    double iqr_multiplier = 1.5;
    std::optional<std::pair<std::string, std::string>> date_range;
};

enum class ExclusionReason { url_denylist, language, fetch_failed, length_outlier, date_range };

inline std::string_view to_string(ExclusionReason r)
{
    switch (r) {
    case ExclusionReason::url_denylist: return "url_denylist";
    case ExclusionReason::language: return "language";
    case ExclusionReason::fetch_failed: return "fetch_failed";
    case ExclusionReason::length_outlier: return "length_outlier";
    case ExclusionReason::date_range: return "date_range";
    }
    return "?";
}

/// One line of the filter-audit file.
struct AuditEntry {
    std::int64_t record_id = 0;
    std::string url;
    ExclusionReason reason = ExclusionReason::url_denylist;
    std::string detail;
};

template <typename T>
struct Partition {
    std::vector<T> kept;
    std::vector<T> excluded;
};

// ---------------------------------------------------------------------------
// JSON mapping

inline void to_json(json& j, SearchRecord const& r)
{
    j = json{{"id", r.id},          {"url", r.url},
             {"title", r.title},    {"snippet", r.snippet},
             {"source_blog", r.source_blog}, {"company", r.company}};
    if (!r.date.empty()) j["date"] = r.date;
}

inline void to_json(json& j, BlogPost const& p)
{
    j = json{{"record_id", p.record_id},
             {"url", p.url},
             {"title", p.title},
             {"company", p.company},
             {"source_blog", p.source_blog},
             {"body", p.body},
             {"content_length", p.content_length},
             {"fetch_status", std::string(to_string(p.fetch_status))}};
}

inline void from_json(json const& j, BlogPost& p)
{
    p.record_id = j.at("record_id").get<std::int64_t>();
    p.url = j.value("url", "");
    p.title = j.value("title", "");
    p.company = j.value("company", "");
    p.source_blog = j.value("source_blog", "");
    p.body = j.value("body", "");
    p.content_length = j.value("content_length", utf8_length(p.body));
    p.fetch_status = parse_fetch_status(j.value("fetch_status", "ok"));
}

inline void to_json(json& j, AuditEntry const& a)
{
    j = json{{"record_id", a.record_id}, {"url", a.url}, {"reason", std::string(to_string(a.reason))}};
    if (!a.detail.empty()) j["detail"] = a.detail;
}

// ---------------------------------------------------------------------------
// ingestion

struct IngestResult {
    std::vector<SearchRecord> records;
    std::size_t rejects = 0;
};

inline bool is_absolute_url(std::string_view url)
{
    static std::regex const pattern(R"(^[A-Za-z][A-Za-z0-9+.\-]*://[^/\s]+.*$)");
    return std::regex_match(url.begin(), url.end(), pattern);
}

/// Key used for duplicate detection: the trimmed URL without a trailing slash.
inline std::string dedup_key(std::string_view url)
{
    std::string key = trim(url);
    while (key.size() > 1 && key.back() == '/') key.pop_back();
    return key;
}

/// Reads one JSON object per line. Records without a usable absolute url and
/// lines that are not JSON objects are counted as rejects. Ids are assigned
/// sequentially over the surviving, de-duplicated records.
inline IngestResult ingest_search_records(std::istream& in)
{
    IngestResult result;
    std::unordered_set<std::string> seen;
    std::string line;
    auto text_field = [](json const& obj, char const* key) -> std::string {
        auto it = obj.find(key);
        return (it != obj.end() && it->is_string()) ? it->get<std::string>() : std::string{};
    };
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json obj = json::parse(line, nullptr, /*allow_exceptions=*/false);
        if (!obj.is_object()) {
            ++result.rejects;
            continue;
        }
        std::string url = trim(text_field(obj, "url"));
        if (url.empty() || !is_absolute_url(url)) {
            ++result.rejects;
            continue;
        }
        if (!seen.insert(dedup_key(url)).second) continue;

        SearchRecord rec;
        rec.id = static_cast<std::int64_t>(result.records.size());
        rec.url = std::move(url);
        rec.title = text_field(obj, "title");
        rec.snippet = text_field(obj, "snippet");
        rec.source_blog = text_field(obj, "source_blog");
        rec.company = text_field(obj, "company");
        rec.date = text_field(obj, "date");
        result.records.push_back(std::move(rec));
    }
    return result;
}

// ---------------------------------------------------------------------------
// URL filter

inline bool url_matches_denylist(std::string_view url, std::vector<std::string> const& denylist)
{
    std::string const lowered = to_lower_ascii(url);
    return std::any_of(denylist.begin(), denylist.end(), [&](std::string const& needle) {
        return !needle.empty() && lowered.find(to_lower_ascii(needle)) != std::string::npos;
    });
}

inline Partition<SearchRecord> filter_urls(std::vector<SearchRecord> const& records, FilterConfig const& cfg)
{
    Partition<SearchRecord> out;
    for (auto const& r : records) {
        (url_matches_denylist(r.url, cfg.url_denylist) ? out.excluded : out.kept).push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// language filter

struct Detection {
    std::string code;
    double confidence = 0;
};

class LanguageDetector {
public:
    virtual ~LanguageDetector() = default;
    /// May throw; the filter treats any exception as a detector failure.
    virtual Detection detect(std::string_view text) const = 0;
};

/// Deterministic stop-word scorer over a handful of European languages.
/// Text that is mostly non-Latin script is reported as "und". ASCII text with
/// no stop-word evidence defaults to English at low confidence.
class StopwordDetector final : public LanguageDetector {
public:
    Detection detect(std::string_view text) const override
    {
        std::size_t ascii_letters = 0;
        std::size_t other = 0;
        for (unsigned char c : text) {
            if (std::isalpha(c)) {
                ++ascii_letters;
            } else if (c >= 0xC0) {
                ++other; // lead byte of a multi-byte sequence
            }
        }
        if (ascii_letters + other == 0) return {"und", 0.0};
        if (other * 2 > ascii_letters + other) return {"und", 0.5};

        std::map<std::string, int> hits;
        std::istringstream words(to_lower_ascii(text));
        std::string w;
        while (words >> w) {
            while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.back()))) w.pop_back();
            while (!w.empty() && !std::isalnum(static_cast<unsigned char>(w.front()))) w.erase(0, 1);
            for (auto const& [code, list] : stopwords()) {
                if (list.count(w)) ++hits[code];
            }
        }
        std::string best = "en";
        int best_hits = 0;
        int total = 0;
        for (auto const& [code, n] : hits) {
            total += n;
            if (n > best_hits) {
                best = code;
                best_hits = n;
            }
        }
        if (total == 0) return {"en", 0.3};
        return {best, static_cast<double>(best_hits) / total};
    }

private:
    static std::map<std::string, std::set<std::string>> const& stopwords()
    {
        static std::map<std::string, std::set<std::string>> const table{
            {"en", {"the", "and", "of", "to", "in", "is", "for", "with", "on", "at", "how", "your",
                    "from", "by", "are", "this", "that", "using", "an", "we", "you", "into", "it"}},
            {"de", {"der", "die", "das", "und", "mit", "ist", "nicht", "ein", "eine", "wie", "für",
                    "auf", "zu", "den", "dem", "sich", "von", "werden"}},
            {"fr", {"le", "la", "les", "et", "est", "une", "des", "pour", "avec", "dans", "sur",
                    "du", "au", "qui", "comment"}},
            {"es", {"el", "los", "las", "y", "es", "una", "para", "con", "por", "del", "como",
                    "que", "cómo"}},
            {"pt", {"o", "os", "as", "e", "um", "uma", "para", "com", "não", "do", "da", "em"}},
        };
        return table;
    }
};

struct LanguageFilterResult {
    Partition<SearchRecord> partition;
    std::vector<std::int64_t> detector_failures;
};

/// Excludes a record when either its title or its snippet is empty or
/// detected outside `cfg.language_allow`.
inline LanguageFilterResult filter_language(std::vector<SearchRecord> const& records,
                                            LanguageDetector const& detector,
                                            FilterConfig const& cfg)
{
    LanguageFilterResult out;
    for (auto const& r : records) {
        bool keep = true;
        try {
            for (std::string_view field : {std::string_view(r.title), std::string_view(r.snippet)}) {
                if (trim(field).empty() || !cfg.language_allow.count(detector.detect(field).code)) {
                    keep = false;
                    break;
                }
            }
        } catch (std::exception const&) {
            keep = false;
            out.detector_failures.push_back(r.id);
        }
        (keep ? out.partition.kept : out.partition.excluded).push_back(r);
    }
    return out;
}

/// Lexicographic ISO-date window. Records without a date pass.
inline Partition<SearchRecord> filter_dates(std::vector<SearchRecord> const& records, FilterConfig const& cfg)
{
    Partition<SearchRecord> out;
    for (auto const& r : records) {
        bool keep = true;
        if (cfg.date_range && !r.date.empty()) {
            std::string const day = r.date.substr(0, 10);
            keep = day >= cfg.date_range->first && day <= cfg.date_range->second;
        }
        (keep ? out.kept : out.excluded).push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------------------
// fetching

struct FetchResult {
    bool ok = false;
    std::string body;
    std::string error;
};

class ContentFetcher {
public:
    virtual ~ContentFetcher() = default;
    /// Returns the extracted main text of the page. May throw.
    virtual FetchResult fetch(std::string const& url) = 0;
};

/// Offline fetcher: reads `<dir>/<sha256(url)>.txt`.
class FixtureFetcher final : public ContentFetcher {
public:
    explicit FixtureFetcher(std::filesystem::path dir) : dir_(std::move(dir)) {}

    static std::string file_name_for(std::string_view url) { return sha256_hex(url) + ".txt"; }

    FetchResult fetch(std::string const& url) override
    {
        auto const path = dir_ / file_name_for(url);
        std::ifstream in(path, std::ios::binary);
        if (!in) return {false, {}, "404: no fixture " + path.filename().string()};
        std::ostringstream ss;
        ss << in.rdbuf();
        return {true, ss.str(), {}};
    }

private:
    std::filesystem::path dir_;
};

/// One BlogPost per record, in input order. A fetch failure (returned or
/// thrown) yields fetch_status=failed and never aborts the batch.
inline std::vector<BlogPost> fetch_contents(std::vector<SearchRecord> const& records,
                                            ContentFetcher& fetcher,
                                            std::size_t max_in_flight = 4)
{
    std::vector<BlogPost> posts(records.size());
    parallel_for(records.size(), max_in_flight, [&](std::size_t i) {
        auto const& r = records[i];
        BlogPost& p = posts[i];
        p.record_id = r.id;
        p.url = r.url;
        p.title = r.title;
        p.company = r.company;
        p.source_blog = r.source_blog;
        FetchResult res;
        try {
            res = fetcher.fetch(r.url);
        } catch (std::exception const& e) {
            res = {false, {}, e.what()};
        }
        if (res.ok) {
            p.body = std::move(res.body);
            p.content_length = utf8_length(p.body);
            p.fetch_status = FetchStatus::ok;
        } else {
            p.fetch_status = FetchStatus::failed;
        }
    });
    return posts;
}

// ---------------------------------------------------------------------------
// length filter

/// Quartiles by linear interpolation at 0.25(n-1) and 0.75(n-1) of the
/// sorted sample.
inline LengthStats compute_quartiles(std::vector<std::size_t> lengths, double multiplier = 1.5)
{
    if (lengths.size() < 4) throw InputError("insufficient sample");
    std::sort(lengths.begin(), lengths.end());
    auto const at = [&](double p) {
        double const pos = p * static_cast<double>(lengths.size() - 1);
        auto const lo = static_cast<std::size_t>(std::floor(pos));
        double const frac = pos - static_cast<double>(lo);
        double const a = static_cast<double>(lengths[lo]);
        if (lo + 1 >= lengths.size()) return a;
        return a + frac * (static_cast<double>(lengths[lo + 1]) - a);
    };
    LengthStats s;
    s.q1 = at(0.25);
    s.q3 = at(0.75);
    s.iqr = s.q3 - s.q1;
    s.multiplier = multiplier;
    s.lower_bound = s.q1 - multiplier * s.iqr;
    s.upper_bound = s.q3 + multiplier * s.iqr;
    return s;
}

inline Partition<BlogPost> iqr_filter(std::vector<BlogPost> const& posts, LengthStats const& stats)
{
    Partition<BlogPost> out;
    for (auto const& p : posts) {
        auto const len = static_cast<double>(p.content_length);
        bool const outlier = len < stats.lower_bound || len > stats.upper_bound;
        (outlier ? out.excluded : out.kept).push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// end-to-end collection

struct HarvestResult {
    std::size_t ingested = 0;
    std::size_t rejects = 0;
    std::vector<SearchRecord> records;
    std::vector<BlogPost> corpus;
    std::vector<AuditEntry> audit;
    LengthStats stats;
};

/// ingest, URL filter, date filter, language filter, fetch, IQR filter.
/// The audit is sorted by record id.
inline HarvestResult harvest(std::istream& in,
                             FilterConfig const& cfg,
                             LanguageDetector const& detector,
                             ContentFetcher& fetcher,
                             std::size_t max_in_flight = 4)
{
    HarvestResult out;
    auto ingest = ingest_search_records(in);
    out.ingested = ingest.records.size();
    out.rejects = ingest.rejects;
    out.records = ingest.records;

    auto urls = filter_urls(ingest.records, cfg);
    for (auto const& r : urls.excluded) out.audit.push_back({r.id, r.url, ExclusionReason::url_denylist, {}});

    auto dates = filter_dates(urls.kept, cfg);
    for (auto const& r : dates.excluded) out.audit.push_back({r.id, r.url, ExclusionReason::date_range, r.date});

    auto lang = filter_language(dates.kept, detector, cfg);
    std::set<std::int64_t> const failures(lang.detector_failures.begin(), lang.detector_failures.end());
    for (auto const& r : lang.partition.excluded) {
        out.audit.push_back({r.id, r.url, ExclusionReason::language,
                             failures.count(r.id) ? "detector_failure" : ""});
    }

    auto fetched = fetch_contents(lang.partition.kept, fetcher, max_in_flight);
    std::vector<BlogPost> ok;
    for (auto& p : fetched) {
        if (p.fetch_status == FetchStatus::ok) {
            ok.push_back(std::move(p));
        } else {
            out.audit.push_back({p.record_id, p.url, ExclusionReason::fetch_failed, {}});
        }
    }

    std::vector<std::size_t> lengths;
    lengths.reserve(ok.size());
    for (auto const& p : ok) lengths.push_back(p.content_length);
    out.stats = compute_quartiles(lengths, cfg.iqr_multiplier);
    auto kept = iqr_filter(ok, out.stats);
    for (auto const& p : kept.excluded) {
        out.audit.push_back({p.record_id, p.url, ExclusionReason::length_outlier,
                             "length=" + std::to_string(p.content_length)});
    }
    out.corpus = std::move(kept.kept);

    std::stable_sort(out.audit.begin(), out.audit.end(),
                     [](AuditEntry const& a, AuditEntry const& b) { return a.record_id < b.record_id; });
    return out;
}

inline std::vector<BlogPost> load_corpus(std::filesystem::path const& path)
{
    std::vector<BlogPost> posts;
    for (auto const& row : read_jsonl_file(path)) posts.push_back(row.get<BlogPost>());
    return posts;
}

} // namespace blogjury::corpus
