#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "blogjury/corpus.hpp"
#include "oracles.hpp"

using namespace blogjury;
using namespace blogjury::corpus;

namespace {

std::string record_line(std::string const& url, std::string const& title = "How to deploy a model",
                        std::string const& snippet = "A guide to serving models in the cloud")
{
    return json{{"url", url}, {"title", title}, {"snippet", snippet}, {"source_blog", "b"}, {"company", "c"}}.dump() + "\n";
}

SearchRecord rec(std::int64_t id, std::string url, std::string title = "Scaling inference with the cloud",
                 std::string snippet = "How we serve models for our users")
{
    return SearchRecord{id, std::move(url), std::move(title), std::move(snippet), "blog", "acme", ""};
}

BlogPost post_of_length(std::int64_t id, std::size_t n)
{
    BlogPost p;
    p.record_id = id;
    p.body = std::string(n, 'x');
    p.content_length = n;
    p.fetch_status = FetchStatus::ok;
    return p;
}

/// Maps exact text to a language code; unknown text throws.
class TableDetector final : public LanguageDetector {
public:
    explicit TableDetector(std::map<std::string, std::string> table) : table_(std::move(table)) {}
    Detection detect(std::string_view text) const override
    {
        auto it = table_.find(std::string(text));
        if (it == table_.end()) throw std::runtime_error("no detection");
        return {it->second, 0.99};
    }

private:
    std::map<std::string, std::string> table_;
};

class StubFetcher final : public ContentFetcher {
public:
    std::map<std::string, std::string> pages;
    FetchResult fetch(std::string const& url) override
    {
        auto it = pages.find(url);
        if (it == pages.end()) return {false, {}, "HTTP 404"};
        return {true, it->second, {}};
    }
};

} // namespace

TEST(Ingest, AssignsSequentialIds)
{
    std::istringstream in(record_line("https://a.com/1") + record_line("https://a.com/2") + record_line("https://a.com/3"));
    auto r = ingest_search_records(in);
    ASSERT_EQ(r.records.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.records[i].id, static_cast<std::int64_t>(i));
    EXPECT_EQ(r.records[1].url, "https://a.com/2");
    EXPECT_EQ(r.rejects, 0u);
}

TEST(Ingest, CollapsesDuplicateUrlsToFirstOccurrence)
{
    std::istringstream in(record_line("https://a.com/u1", "first") + record_line("https://a.com/u2") +
                          record_line("https://a.com/u1/", "second"));
    auto r = ingest_search_records(in);
    ASSERT_EQ(r.records.size(), 2u);
    EXPECT_EQ(r.records[0].id, 0);
    EXPECT_EQ(r.records[1].id, 1);
    EXPECT_EQ(r.records[0].title, "first");
}

TEST(Ingest, SkipsRecordsWithoutUrl)
{
    std::string lines;
    for (int i = 0; i < 4; ++i) lines += record_line("https://a.com/" + std::to_string(i));
    lines += json{{"title", "no url"}, {"snippet", "x"}}.dump() + "\n";
    std::istringstream in(lines);
    auto r = ingest_search_records(in);
    EXPECT_EQ(r.records.size(), 4u);
    EXPECT_EQ(r.rejects, 1u);
}

TEST(Ingest, RejectsRelativeUrlsAndGarbageLines)
{
    std::istringstream in(record_line("/relative/path") + "not json\n" + record_line("https://ok.com/x"));
    auto r = ingest_search_records(in);
    EXPECT_EQ(r.records.size(), 1u);
    EXPECT_EQ(r.rejects, 2u);
}

TEST(Ingest, EmptyStreamIsNotAnError)
{
    std::istringstream in("");
    auto r = ingest_search_records(in);
    EXPECT_TRUE(r.records.empty());
    EXPECT_EQ(r.rejects, 0u);
}

TEST(Ingest, IdempotentOnDeduplicatedUrls)
{
    std::string lines;
    for (int i = 0; i < 10; ++i) lines += record_line("https://a.com/" + std::to_string(i % 7));
    std::istringstream first(lines);
    auto once = ingest_search_records(first);
    std::string again;
    for (auto const& r : once.records) again += record_line(r.url);
    std::istringstream second(again);
    auto twice = ingest_search_records(second);
    ASSERT_EQ(once.records.size(), twice.records.size());
    for (std::size_t i = 0; i < once.records.size(); ++i) EXPECT_EQ(once.records[i].url, twice.records[i].url);
}

TEST(UrlFilter, KeepsOrdinaryPost)
{
    FilterConfig cfg;
    auto p = filter_urls({rec(0, "https://x.com/blog/post-1")}, cfg);
    EXPECT_EQ(p.kept.size(), 1u);
    EXPECT_TRUE(p.excluded.empty());
}

TEST(UrlFilter, ExcludesAuthorPages)
{
    FilterConfig cfg;
    auto p = filter_urls({rec(0, "https://x.com/author/jane")}, cfg);
    EXPECT_EQ(p.excluded.size(), 1u);
}

TEST(UrlFilter, MatchesCaseInsensitively)
{
    FilterConfig cfg;
    std::string const url = "https://x.com/INDEX/home";
    // substring scan over the lowercased url
    bool oracle = false;
    std::string lowered;
    for (char c : url) lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    for (auto const& needle : cfg.url_denylist) oracle = oracle || lowered.find(needle) != std::string::npos;
    ASSERT_TRUE(oracle);

    auto p = filter_urls({rec(0, url)}, cfg);
    EXPECT_EQ(p.excluded.size(), 1u);
}

TEST(UrlFilter, PartitionIsTotalAndOrderPreserving)
{
    FilterConfig cfg;
    std::vector<SearchRecord> in;
    for (int i = 0; i < 20; ++i) in.push_back(rec(i, i % 3 == 0 ? "https://x.com/author/" + std::to_string(i) : "https://x.com/p/" + std::to_string(i)));
    auto p = filter_urls(in, cfg);
    EXPECT_EQ(p.kept.size() + p.excluded.size(), in.size());
    EXPECT_TRUE(std::is_sorted(p.kept.begin(), p.kept.end(), [](auto& a, auto& b) { return a.id < b.id; }));
    EXPECT_TRUE(std::is_sorted(p.excluded.begin(), p.excluded.end(), [](auto& a, auto& b) { return a.id < b.id; }));
}

TEST(LanguageFilter, KeepsEnglishTitleAndSnippet)
{
    TableDetector d({{"Deploying models at scale", "en"}, {"We show how to serve models", "en"}});
    auto r = filter_language({rec(0, "https://a.com/1", "Deploying models at scale", "We show how to serve models")}, d, {});
    EXPECT_EQ(r.partition.kept.size(), 1u);
}

TEST(LanguageFilter, EitherFieldNonEnglishExcludes)
{
    TableDetector d({{"Deploying models at scale", "en"}, {"Wir zeigen, wie man Modelle betreibt", "de"}});
    auto r = filter_language({rec(0, "https://a.com/1", "Deploying models at scale", "Wir zeigen, wie man Modelle betreibt")}, d, {});
    EXPECT_EQ(r.partition.excluded.size(), 1u);
    EXPECT_TRUE(r.detector_failures.empty());
}

TEST(LanguageFilter, EmptySnippetIsUndetermined)
{
    TableDetector d(std::map<std::string, std::string>{{"Deploying models at scale", "en"}});
    auto r = filter_language({rec(0, "https://a.com/1", "Deploying models at scale", "")}, d, {});
    EXPECT_EQ(r.partition.excluded.size(), 1u);
}

TEST(LanguageFilter, DetectorFailureExcludesAndFlags)
{
    TableDetector d({});
    auto r = filter_language({rec(7, "https://a.com/1"), rec(8, "https://a.com/2")}, d, {});
    EXPECT_EQ(r.partition.excluded.size(), 2u);
    EXPECT_EQ(r.detector_failures, (std::vector<std::int64_t>{7, 8}));
}

TEST(StopwordDetector, SeparatesEnglishFromGerman)
{
    StopwordDetector d;
    EXPECT_EQ(d.detect("How to build agents with the new SDK").code, "en");
    EXPECT_EQ(d.detect("Wie man Modelle mit der Cloud bereitstellt").code, "de");
    EXPECT_EQ(d.detect("Kubernetes Operators").code, "en");
    EXPECT_EQ(d.detect("").code, "und");
}

TEST(Fetch, LengthIsCharacterCount)
{
    StubFetcher f;
    f.pages["https://a.com/1"] = std::string(1200, 'a');
    auto posts = fetch_contents({rec(0, "https://a.com/1")}, f);
    ASSERT_EQ(posts.size(), 1u);
    EXPECT_EQ(posts[0].fetch_status, FetchStatus::ok);
    EXPECT_EQ(posts[0].content_length, 1200u);
}

TEST(Fetch, CountsCodePointsNotBytes)
{
    StubFetcher f;
    f.pages["https://a.com/1"] = "h\xC3\xA9llo"; // héllo
    auto posts = fetch_contents({rec(0, "https://a.com/1")}, f);
    EXPECT_EQ(posts[0].content_length, 5u);
}

TEST(Fetch, NotFoundMapsToFailed)
{
    StubFetcher f;
    auto posts = fetch_contents({rec(0, "https://a.com/missing")}, f);
    EXPECT_EQ(posts[0].fetch_status, FetchStatus::failed);
}

TEST(Fetch, FailuresDoNotAbortBatchAndOrderIsStable)
{
    StubFetcher f;
    std::vector<SearchRecord> records;
    for (int i = 0; i < 10; ++i) {
        records.push_back(rec(i, "https://a.com/" + std::to_string(i)));
        if (i != 3 && i != 7) f.pages[records.back().url] = std::string(100 + i, 'b');
    }
    auto posts = fetch_contents(records, f, 4);
    ASSERT_EQ(posts.size(), 10u);
    int ok = 0;
    for (std::size_t i = 0; i < posts.size(); ++i) {
        EXPECT_EQ(posts[i].record_id, static_cast<std::int64_t>(i));
        ok += posts[i].fetch_status == FetchStatus::ok;
    }
    EXPECT_EQ(ok, 8);
}

TEST(Fetch, ThrowingFetcherIsContained)
{
    struct Thrower : ContentFetcher {
        FetchResult fetch(std::string const&) override { throw std::runtime_error("connection reset"); }
    } f;
    auto posts = fetch_contents({rec(0, "https://a.com/1")}, f);
    EXPECT_EQ(posts[0].fetch_status, FetchStatus::failed);
}

TEST(FixtureFetcher, ReadsFileNamedByUrlHash)
{
    auto const dir = std::filesystem::temp_directory_path() / "blogjury_fixture_fetcher";
    std::filesystem::create_directories(dir);
    write_file(dir / FixtureFetcher::file_name_for("https://a.com/x"), "body text");
    FixtureFetcher f(dir);
    EXPECT_EQ(f.fetch("https://a.com/x").body, "body text");
    EXPECT_FALSE(f.fetch("https://a.com/y").ok);
    std::filesystem::remove_all(dir);
}

TEST(Quartiles, InterpolatedExample)
{
    auto s = compute_quartiles({2, 10, 11, 12, 13, 14, 15, 400}, 1.5);
    EXPECT_DOUBLE_EQ(s.q1, 10.75);
    EXPECT_DOUBLE_EQ(s.q3, 14.25);
    EXPECT_DOUBLE_EQ(s.iqr, 3.5);
    EXPECT_DOUBLE_EQ(s.lower_bound, 5.5);
    EXPECT_DOUBLE_EQ(s.upper_bound, 19.5);
}

TEST(Quartiles, AllEqual)
{
    auto s = compute_quartiles({7, 7, 7, 7});
    EXPECT_EQ(s.iqr, 0.0);
    EXPECT_EQ(s.lower_bound, 7.0);
    EXPECT_EQ(s.upper_bound, 7.0);
}

TEST(Quartiles, SmallRange)
{
    auto s = compute_quartiles({3, 0, 2, 1});
    EXPECT_DOUBLE_EQ(s.q1, 0.75);
    EXPECT_DOUBLE_EQ(s.q3, 2.25);
}

TEST(Quartiles, InsufficientSample)
{
    EXPECT_THROW(compute_quartiles({1, 2, 3}), InputError);
}

TEST(Quartiles, MatchesOracleOnRandomSamples)
{
    std::mt19937_64 rng(20240810);
    for (int trial = 0; trial < 100; ++trial) {
        std::size_t const n = std::uniform_int_distribution<std::size_t>(4, 200)(rng);
        std::vector<std::size_t> v(n);
        for (auto& x : v) x = std::uniform_int_distribution<std::size_t>(0, 20000)(rng);
        auto s = compute_quartiles(v);
        EXPECT_NEAR(s.q1, oracle::quartile(v, 1), 1e-9);
        EXPECT_NEAR(s.q3, oracle::quartile(v, 3), 1e-9);
        EXPECT_GE(s.iqr, 0.0);
    }
}

TEST(IqrFilter, ExcludesBothOutliers)
{
    std::vector<BlogPost> posts;
    std::vector<std::size_t> lengths{2, 10, 11, 12, 13, 14, 15, 400};
    for (std::size_t i = 0; i < lengths.size(); ++i) posts.push_back(post_of_length(static_cast<std::int64_t>(i), lengths[i]));
    auto p = iqr_filter(posts, compute_quartiles(lengths));
    ASSERT_EQ(p.excluded.size(), 2u);
    EXPECT_EQ(p.excluded[0].content_length, 2u);
    EXPECT_EQ(p.excluded[1].content_length, 400u);
    EXPECT_EQ(p.kept.size(), 6u);
}

TEST(IqrFilter, DegenerateKeepsAll)
{
    std::vector<BlogPost> posts;
    for (int i = 0; i < 5; ++i) posts.push_back(post_of_length(i, 42));
    auto p = iqr_filter(posts, compute_quartiles({42, 42, 42, 42, 42}));
    EXPECT_EQ(p.kept.size(), 5u);
}

TEST(IqrFilter, BoundsAreInclusive)
{
    LengthStats s;
    s.lower_bound = 5.0;
    s.upper_bound = 19.0;
    auto p = iqr_filter({post_of_length(0, 19), post_of_length(1, 5), post_of_length(2, 20)}, s);
    EXPECT_EQ(p.kept.size(), 2u);
    EXPECT_EQ(p.excluded.size(), 1u);
}

TEST(IqrFilter, RaisingMultiplierNeverShrinksKeptSet)
{
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> lengths(std::uniform_int_distribution<std::size_t>(4, 60)(rng));
        for (auto& x : lengths) x = std::uniform_int_distribution<std::size_t>(0, 5000)(rng);
        std::vector<BlogPost> posts;
        for (std::size_t i = 0; i < lengths.size(); ++i) posts.push_back(post_of_length(static_cast<std::int64_t>(i), lengths[i]));
        std::size_t previous = 0;
        for (double m : {0.0, 0.5, 1.0, 1.5, 3.0}) {
            auto kept = iqr_filter(posts, compute_quartiles(lengths, m)).kept.size();
            EXPECT_GE(kept, previous);
            previous = kept;
        }
    }
}

TEST(Harvest, DeterministicAcrossRuns)
{
    StubFetcher f;
    std::string lines;
    std::vector<std::size_t> lengths{2, 10, 11, 12, 13, 14, 15, 400};
    for (std::size_t i = 0; i < lengths.size(); ++i) {
        auto url = "https://blog.example.com/p/" + std::to_string(i);
        lines += record_line(url);
        f.pages[url] = std::string(lengths[i], 'w');
    }
    lines += record_line("https://blog.example.com/author/sam");
    StopwordDetector detector;
    FilterConfig cfg;
    std::istringstream a(lines);
    std::istringstream b(lines);
    auto r1 = harvest(a, cfg, detector, f, 3);
    auto r2 = harvest(b, cfg, detector, f, 1);
    EXPECT_EQ(to_jsonl(r1.corpus), to_jsonl(r2.corpus));
    EXPECT_EQ(to_jsonl(r1.audit), to_jsonl(r2.audit));
    EXPECT_EQ(r1.corpus.size(), 6u);
    EXPECT_EQ(r1.audit.size(), 3u);
}
