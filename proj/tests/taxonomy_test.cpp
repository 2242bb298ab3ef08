#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "blogjury/taxonomy.hpp"

using namespace blogjury;
using namespace blogjury::taxonomy;

namespace {

Taxonomy sample()
{
    Taxonomy t;
    std::istringstream area("FM4SE\nSE4FM\nunrelated\n");
    std::istringstream task("code generation\nspecialized databases\nmodel serving\n");
    t.add_vocabulary(load_vocabulary(LabelKind::area, area));
    t.add_vocabulary(load_vocabulary(LabelKind::task, task));
    return t;
}

AdjudicationDecision decide(std::string proposal, Verdict v, std::optional<std::string> target = std::nullopt)
{
    return AdjudicationDecision{std::move(proposal), LabelKind::task, v, std::move(target), Actor::human, 0};
}

} // namespace

TEST(Vocabulary, AreaHasExactlyThreeLabels)
{
    std::istringstream in("FM4SE\nSE4FM\nunrelated\n");
    auto labels = load_vocabulary(LabelKind::area, in);
    ASSERT_EQ(labels.size(), 3u);
    EXPECT_EQ(labels[0].display, "FM4SE");
    EXPECT_EQ(labels[1].display, "SE4FM");
    EXPECT_EQ(labels[2].display, "unrelated");
}

TEST(Vocabulary, AreaRejectsOtherSets)
{
    std::istringstream in("FM4SE\nSE4FM\n");
    EXPECT_THROW(load_vocabulary(LabelKind::area, in), InputError);
}

TEST(Vocabulary, Deduplicates)
{
    std::istringstream in("Software development\nsoftware  development\nTesting\n");
    auto labels = load_vocabulary(LabelKind::activity, in);
    EXPECT_EQ(labels.size(), 2u);
}

TEST(Vocabulary, Canonicalizes)
{
    std::istringstream in("  code Generation \n");
    auto labels = load_vocabulary(LabelKind::task, in);
    ASSERT_EQ(labels.size(), 1u);
    EXPECT_EQ(labels[0].name, "code generation");
}

TEST(Vocabulary, EmptyFileIsAnError)
{
    std::istringstream in("\n  \n# comment\n");
    EXPECT_THROW(load_vocabulary(LabelKind::task, in), InputError);
}

TEST(Canonicalize, Idempotent)
{
    std::mt19937 rng(3);
    std::string const alphabet = "aB \t\nzQ-_é";
    for (int i = 0; i < 500; ++i) {
        std::string s;
        for (int k = std::uniform_int_distribution<int>(0, 20)(rng); k > 0; --k) {
            s += alphabet[std::uniform_int_distribution<std::size_t>(0, alphabet.size() - 1)(rng)];
        }
        EXPECT_EQ(canonicalize(canonicalize(s)), canonicalize(s));
    }
}

TEST(Resolve, CanonicalMatch)
{
    auto t = sample();
    auto l = t.resolve("Code Generation", LabelKind::task);
    EXPECT_EQ(l.name, "code generation");
    EXPECT_EQ(l.status, LabelStatus::predefined);
}

TEST(Resolve, UnknownBecomesProposal)
{
    auto t = sample();
    auto l = t.resolve("prompt caching", LabelKind::task);
    EXPECT_EQ(l.status, LabelStatus::proposed);
    EXPECT_EQ(l.kind, LabelKind::task);
}

TEST(Resolve, OtherIsAlwaysKnown)
{
    auto t = sample();
    EXPECT_TRUE(is_other(t.resolve("other", LabelKind::task).name));
    EXPECT_EQ(t.resolve("OTHER", LabelKind::task).status, LabelStatus::predefined);
}

TEST(Adjudicate, AcceptGrowsVocabulary)
{
    auto t = sample();
    auto const before = t.vocabulary(LabelKind::task).size();
    t.register_proposal(t.resolve("agent memory", LabelKind::task));
    t.adjudicate(decide("agent memory", Verdict::accept));
    EXPECT_EQ(t.vocabulary(LabelKind::task).size(), before + 1);
    EXPECT_EQ(t.resolve("Agent Memory", LabelKind::task).status, LabelStatus::accepted);
}

TEST(Adjudicate, ReclassifyMapsToTargetAndReplays)
{
    auto t = sample();
    Taxonomy const initial = t;
    t.register_proposal(t.resolve("vector db", LabelKind::task));
    auto logged = t.adjudicate(decide("vector db", Verdict::reclassify, "Specialized Databases"));
    EXPECT_EQ(logged.target, "specialized databases");
    EXPECT_EQ(t.find("vector db", LabelKind::task)->maps_to, "specialized databases");

    auto replayed = Taxonomy::replay(initial, t.log());
    EXPECT_EQ(replayed.resolve("vector db", LabelKind::task).name, "specialized databases");
    EXPECT_EQ(replayed.resolve("vector db", LabelKind::task).status, LabelStatus::predefined);
    EXPECT_TRUE(replayed == t);
}

TEST(Adjudicate, IgnoredProposalComesBackFresh)
{
    auto t = sample();
    t.register_proposal(t.resolve("llm vibes", LabelKind::task));
    t.adjudicate(decide("llm vibes", Verdict::ignore));
    auto again = t.resolve("llm vibes", LabelKind::task);
    EXPECT_EQ(again.status, LabelStatus::proposed);
    EXPECT_EQ(t.find("llm vibes", LabelKind::task)->status, LabelStatus::ignored);
    EXPECT_TRUE(t.map_labels({"llm vibes", "code generation"}, LabelKind::task) ==
                std::vector<std::string>{"code generation"});
}

TEST(Adjudicate, ReclassifyToUnknownTargetFails)
{
    auto t = sample();
    t.register_proposal(t.resolve("vector db", LabelKind::task));
    EXPECT_THROW(t.adjudicate(decide("vector db", Verdict::reclassify, "no such label")), InputError);
    EXPECT_EQ(t.find("vector db", LabelKind::task)->status, LabelStatus::proposed);
    EXPECT_TRUE(t.log().empty());
}

TEST(Adjudicate, NonProposedLabelFails)
{
    auto t = sample();
    EXPECT_THROW(t.adjudicate(decide("code generation", Verdict::accept)), PreconditionError);
    EXPECT_THROW(t.adjudicate(decide("never proposed", Verdict::accept)), PreconditionError);
}

TEST(Adjudicate, SequenceNumbersAreMonotonic)
{
    auto t = sample();
    for (auto const* name : {"a1", "a2", "a3"}) t.register_proposal(t.resolve(name, LabelKind::task));
    t.adjudicate(decide("a1", Verdict::accept));
    t.adjudicate(decide("a2", Verdict::ignore));
    t.adjudicate(decide("a3", Verdict::reclassify, "model serving"));
    ASSERT_EQ(t.log().size(), 3u);
    EXPECT_EQ(t.log()[0].sequence, 1u);
    EXPECT_EQ(t.log()[2].sequence, 3u);
}

TEST(Adjudicate, LogRoundTripsThroughJson)
{
    auto t = sample();
    t.register_proposal(t.resolve("vector db", LabelKind::task));
    auto d = t.adjudicate(decide("vector db", Verdict::reclassify, "specialized databases"));
    auto back = json(d).get<AdjudicationDecision>();
    EXPECT_EQ(back.proposal, d.proposal);
    EXPECT_EQ(back.verdict, d.verdict);
    EXPECT_EQ(back.target, d.target);
    EXPECT_EQ(back.sequence, d.sequence);
}

TEST(Closure, AllMappedLabelsAreClosedAfterAdjudication)
{
    auto t = sample();
    std::vector<std::string> raw{"code generation", "vector db", "agent memory", "llm vibes"};
    for (auto const& r : raw) t.register_proposal(t.resolve(r, LabelKind::task));
    t.adjudicate(decide("vector db", Verdict::reclassify, "specialized databases"));
    t.adjudicate(decide("agent memory", Verdict::accept));
    t.adjudicate(decide("llm vibes", Verdict::ignore));
    EXPECT_TRUE(t.pending(LabelKind::task).empty());
    for (auto const& l : t.map_labels(raw, LabelKind::task)) EXPECT_TRUE(t.is_closed(l, LabelKind::task)) << l;
}

TEST(Replay, DeterministicFinalTaxonomy)
{
    auto t = sample();
    Taxonomy const initial = t;
    std::mt19937 rng(11);
    for (int i = 0; i < 30; ++i) {
        auto name = "p" + std::to_string(i);
        t.register_proposal(t.resolve(name, LabelKind::task));
        switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
        case 0: t.adjudicate(decide(name, Verdict::accept)); break;
        case 1: t.adjudicate(decide(name, Verdict::ignore)); break;
        default: t.adjudicate(decide(name, Verdict::reclassify, "code generation")); break;
        }
    }
    auto a = Taxonomy::replay(initial, t.log());
    auto b = Taxonomy::replay(initial, t.log());
    EXPECT_TRUE(a == b);
    EXPECT_TRUE(a == t);
}
