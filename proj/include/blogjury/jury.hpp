#pragma once

// The labelling jury: prompt rendering, per-juror verdict collection,
// per-juror confidence standardization and vote merging.
//
// Every post is labelled by every juror. Raw confidences are standardized to
// z-scores per (juror, stage) over the whole batch, because self-reported
// confidence is not comparable across models. Verdicts are then merged by
// plurality vote; the standardized confidence only matters for ties. Ties
// that even z cannot separate are escalated to a human.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "blogjury/common.hpp"
#include "blogjury/corpus.hpp"
#include "blogjury/parallel.hpp"
#include "blogjury/taxonomy.hpp"

namespace blogjury::jury {

using corpus::BlogPost;
using taxonomy::Label;
using taxonomy::Taxonomy;

/// Two standardized confidences closer than this are considered equal.
inline constexpr double kTieEpsilon = 1e-9;

// ---------------------------------------------------------------------------
// prompts

struct FewShotExample {
    std::string input;
    std::string output;
};

class PromptTooLong : public Error {
public:
    PromptTooLong(std::size_t measured, std::size_t budget)
        : Error("post too long: " + std::to_string(measured) + " chars exceeds budget of " +
                std::to_string(budget)),
          measured_(measured)
    {
    }
    std::size_t measured() const { return measured_; }

private:
    std::size_t measured_;
};

inline constexpr std::string_view kDefaultTemplate =
    "You are labelling an industry blog post for a survey of software engineering and foundation "
    "models.\n"
    "Stage: {{stage}}. Previously assigned area: {{area}}.\n\n"
    "Allowed labels:\n{{vocabulary}}\n"
    "Examples:\n{{few_shot}}\n"
    "{{chain_of_thought}}\n\n"
    "{{output_format}}\n\n"
    "Title: {{title}}\n"
    "Blog post:\n{{body}}\n";

inline constexpr std::string_view kDefaultChainOfThought =
    "Think step by step: summarize what the post is about, compare it against each allowed label, "
    "then decide.";

/// A versioned labelling prompt for one stage. Once frozen, its content can
/// no longer be edited.
class PromptSpec {
public:
    PromptSpec() = default;
    PromptSpec(std::string id, Stage stage, std::string tmpl = std::string(kDefaultTemplate),
               std::string chain_of_thought = std::string(kDefaultChainOfThought),
               std::vector<FewShotExample> few_shot = {}, std::size_t max_body_chars = 100000)
        : id_(std::move(id)), stage_(stage), template_(std::move(tmpl)),
          chain_of_thought_(std::move(chain_of_thought)), few_shot_(std::move(few_shot)),
          max_body_chars_(max_body_chars)
    {
    }

    std::string const& id() const { return id_; }
    Stage stage() const { return stage_; }
    std::string const& template_text() const { return template_; }
    std::string const& chain_of_thought() const { return chain_of_thought_; }
    std::vector<FewShotExample> const& few_shot() const { return few_shot_; }
    std::size_t max_body_chars() const { return max_body_chars_; }
    bool frozen() const { return frozen_; }

    void set_template(std::string t) { mutable_check(); template_ = std::move(t); }
    void set_chain_of_thought(std::string c) { mutable_check(); chain_of_thought_ = std::move(c); }
    void set_few_shot(std::vector<FewShotExample> f) { mutable_check(); few_shot_ = std::move(f); }
    void set_max_body_chars(std::size_t n) { mutable_check(); max_body_chars_ = n; }
    void freeze() { frozen_ = true; }

    /// Digest over everything that influences the model's view of the task.
    std::string version_hash(std::vector<Label> const& vocabulary) const
    {
        ordered_json doc;
        doc["stage"] = std::string(to_string(stage_));
        doc["template"] = template_;
        doc["chain_of_thought"] = chain_of_thought_;
        doc["few_shot"] = ordered_json::array();
        for (auto const& ex : few_shot_) doc["few_shot"].push_back({{"input", ex.input}, {"output", ex.output}});
        doc["vocabulary"] = ordered_json::array();
        for (auto const& l : vocabulary) doc["vocabulary"].push_back(l.display);
        return sha256_hex(doc.dump()).substr(0, 16);
    }

private:
    void mutable_check() const
    {
        if (frozen_) throw PreconditionError("prompt '" + id_ + "' is frozen");
    }

    std::string id_;
    Stage stage_ = Stage::area;
    std::string template_{kDefaultTemplate};
    std::string chain_of_thought_{kDefaultChainOfThought};
    std::vector<FewShotExample> few_shot_;
    std::size_t max_body_chars_ = 100000;
    bool frozen_ = false;
};

/// Reads {id, stage, template?, chain_of_thought?, few_shot?: [{input, output}], max_body_chars?}.
inline PromptSpec load_prompt_spec(std::filesystem::path const& path)
{
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (json::parse_error const& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    std::vector<FewShotExample> shots;
    for (auto const& ex : doc.value("few_shot", json::array())) {
        shots.push_back({ex.at("input").get<std::string>(),
                         ex.at("output").is_string() ? ex.at("output").get<std::string>() : ex.at("output").dump()});
    }
    return PromptSpec(doc.value("id", path.stem().string()), parse_stage(doc.at("stage").get<std::string>()),
                      doc.value("template", std::string(kDefaultTemplate)),
                      doc.value("chain_of_thought", std::string(kDefaultChainOfThought)), std::move(shots),
                      doc.value("max_body_chars", std::size_t{100000}));
}

inline std::string output_format_instructions(Stage stage)
{
    if (stage == Stage::area) {
        return "Respond with a single JSON object and nothing else: {\"labels\": [\"<exactly one allowed "
               "label>\"], \"confidence\": <number between 0 and 1>, \"rationale\": \"<one or two "
               "sentences>\"}";
    }
    return "Respond with a single JSON object and nothing else: {\"labels\": [\"<one or more labels>\"], "
           "\"confidence\": <number between 0 and 1>, \"rationale\": \"<one or two sentences>\"}. Use "
           "allowed labels where they fit. If none fits, you may propose a new short label. If nothing "
           "applies at all, answer [\"Other\"].";
}

namespace detail {

inline void replace_all(std::string& text, std::string_view slot, std::string_view value)
{
    std::size_t pos = 0;
    while ((pos = text.find(slot, pos)) != std::string::npos) {
        text.replace(pos, slot.size(), value);
        pos += value.size();
    }
}

} // namespace detail

/// Fills the template slots. Slots for vocabulary, examples, reasoning
/// instruction, output format and body are appended when the template
/// omits them, so every rendered prompt carries all five.
inline std::string render_prompt(PromptSpec const& spec, BlogPost const& post, std::vector<Label> const& vocabulary,
                                 std::string_view area_hint = "unknown")
{
    if (vocabulary.empty()) throw PreconditionError("empty vocabulary for prompt '" + spec.id() + "'");
    std::size_t const length = utf8_length(post.body);
    if (length > spec.max_body_chars()) throw PromptTooLong(length, spec.max_body_chars());

    std::string vocab;
    for (auto const& l : vocabulary) vocab += "- " + l.display + "\n";
    std::string shots;
    for (std::size_t i = 0; i < spec.few_shot().size(); ++i) {
        auto const& ex = spec.few_shot()[i];
        shots += "Example " + std::to_string(i + 1) + ":\nInput: " + ex.input + "\nOutput: " + ex.output + "\n";
    }
    if (shots.empty()) shots = "(none)\n";

    std::string text = spec.template_text();
    std::vector<std::pair<std::string_view, std::string>> const required{
        {"{{vocabulary}}", vocab},
        {"{{few_shot}}", shots},
        {"{{chain_of_thought}}", spec.chain_of_thought()},
        {"{{output_format}}", output_format_instructions(spec.stage())},
        {"{{body}}", post.body},
    };
    for (auto const& [slot, value] : required) {
        if (text.find(slot) == std::string::npos) text += "\n" + std::string(slot) + "\n";
    }
    // body last: post text must never be scanned for slots
    detail::replace_all(text, "{{stage}}", to_string(spec.stage()));
    detail::replace_all(text, "{{area}}", area_hint);
    detail::replace_all(text, "{{title}}", post.title);
    for (auto const& [slot, value] : required) {
        if (slot != "{{body}}") detail::replace_all(text, slot, value);
    }
    detail::replace_all(text, "{{body}}", post.body);
    return text;
}

// ---------------------------------------------------------------------------
// providers

struct ProviderRequest {
    std::string juror_id;
    std::int64_t post_id = 0;
    Stage stage = Stage::area;
    std::string prompt_version;
    std::string prompt;
};

class TransportError : public Error {
public:
    using Error::Error;
};

/// Send prompt text, receive response text. Implementations throw
/// TransportError on failure.
class Provider {
public:
    virtual ~Provider() = default;

    std::string send(ProviderRequest const& request)
    {
        ++requests_;
        return do_send(request);
    }

    std::size_t request_count() const { return requests_.load(); }

private:
    virtual std::string do_send(ProviderRequest const& request) = 0;

    std::atomic<std::size_t> requests_{0};
};

/// Canned responses from `<dir>/<juror_id>.jsonl`, one object per line:
/// {post_id, stage, prompt_version, response}. A prompt_version of "*"
/// matches any version. Several lines with the same key are served in order
/// on successive calls, the last one repeating.
class ReplayProvider final : public Provider {
public:
    ReplayProvider(std::filesystem::path const& dir, std::string juror_id) : juror_id_(std::move(juror_id))
    {
        auto const path = dir / (juror_id_ + ".jsonl");
        if (!std::filesystem::exists(path)) throw InputError("no replay fixture " + path.string());
        for (auto const& row : read_jsonl_file(path)) {
            Key key{row.at("post_id").get<std::int64_t>(), parse_stage(row.at("stage").get<std::string>()),
                    row.value("prompt_version", "*")};
            auto const& resp = row.at("response");
            responses_[key].push_back(resp.is_string() ? resp.get<std::string>() : resp.dump());
        }
    }

private:
    using Key = std::tuple<std::int64_t, Stage, std::string>;

    std::string do_send(ProviderRequest const& request) override
    {
        std::lock_guard lock(mutex_);
        auto it = responses_.find(Key{request.post_id, request.stage, request.prompt_version});
        if (it == responses_.end()) it = responses_.find(Key{request.post_id, request.stage, "*"});
        if (it == responses_.end()) {
            throw TransportError("replay: no response for " + juror_id_ + " post " +
                                 std::to_string(request.post_id) + " stage " + std::string(to_string(request.stage)));
        }
        std::size_t& cursor = cursors_[it->first];
        std::string const& out = it->second[std::min(cursor, it->second.size() - 1)];
        ++cursor;
        return out;
    }

    std::string juror_id_;
    std::map<Key, std::vector<std::string>> responses_;
    std::map<Key, std::size_t> cursors_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// verdicts

enum class VerdictStatus { ok, abstained };

struct JurorVerdict {
    std::string juror_id;
    std::int64_t post_id = 0;
    Stage stage = Stage::area;
    std::vector<std::string> labels;   // canonical names
    std::vector<std::string> proposed; // labels outside the vocabulary, as spelled by the juror
    double raw_confidence = 0;
    std::string rationale;
    std::string prompt_version;
    VerdictStatus status = VerdictStatus::abstained;
    int attempts = 0;

    bool ok() const { return status == VerdictStatus::ok; }
};

inline void to_json(json& j, JurorVerdict const& v)
{
    j = json{{"juror_id", v.juror_id},
             {"post_id", v.post_id},
             {"stage", v.stage},
             {"labels", v.labels},
             {"proposed", v.proposed},
             {"raw_confidence", v.raw_confidence},
             {"rationale", v.rationale},
             {"prompt_version", v.prompt_version},
             {"status", v.ok() ? "ok" : "abstained"},
             {"attempts", v.attempts}};
}

inline void from_json(json const& j, JurorVerdict& v)
{
    v.juror_id = j.at("juror_id").get<std::string>();
    v.post_id = j.at("post_id").get<std::int64_t>();
    v.stage = j.at("stage").get<Stage>();
    v.labels = j.value("labels", std::vector<std::string>{});
    v.proposed = j.value("proposed", std::vector<std::string>{});
    v.raw_confidence = j.value("raw_confidence", 0.0);
    v.rationale = j.value("rationale", "");
    v.prompt_version = j.value("prompt_version", "");
    v.status = j.value("status", "ok") == "ok" ? VerdictStatus::ok : VerdictStatus::abstained;
    v.attempts = j.value("attempts", 0);
}

struct ParsedResponse {
    std::vector<std::string> labels;
    double confidence = 0;
    std::string rationale;
};

namespace detail {

/// Index one past the brace matching text[open], honouring JSON strings.
inline std::optional<std::size_t> match_brace(std::string_view text, std::size_t open)
{
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = open; i < text.size(); ++i) {
        char const c = text[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '{') ++depth;
        else if (c == '}' && --depth == 0) return i + 1;
    }
    return std::nullopt;
}

} // namespace detail

/// Extracts the first JSON object carrying a "labels" key from free text
/// (models like to wrap it in prose or code fences).
inline std::optional<ParsedResponse> parse_response(std::string_view text, Stage stage)
{
    for (std::size_t open = text.find('{'); open != std::string_view::npos; open = text.find('{', open + 1)) {
        auto close = detail::match_brace(text, open);
        if (!close) break;
        json obj = json::parse(text.substr(open, *close - open), nullptr, false);
        if (!obj.is_object() || !obj.contains("labels")) continue;

        ParsedResponse out;
        auto const& labels = obj["labels"];
        if (labels.is_string()) {
            out.labels.push_back(labels.get<std::string>());
        } else if (labels.is_array()) {
            for (auto const& l : labels) {
                if (!l.is_string()) return std::nullopt;
                out.labels.push_back(l.get<std::string>());
            }
        } else {
            return std::nullopt;
        }
        std::erase_if(out.labels, [](std::string const& l) { return trim(l).empty(); });
        if (out.labels.empty()) return std::nullopt;
        if (stage == Stage::area && out.labels.size() != 1) return std::nullopt;

        auto const conf = obj.find("confidence");
        if (conf == obj.end()) return std::nullopt;
        if (conf->is_number()) {
            out.confidence = conf->get<double>();
        } else if (conf->is_string()) {
            try {
                out.confidence = std::stod(conf->get<std::string>());
            } catch (std::exception const&) {
                return std::nullopt;
            }
        } else {
            return std::nullopt;
        }
        if (!std::isfinite(out.confidence)) return std::nullopt;
        if (auto r = obj.find("rationale"); r != obj.end() && r->is_string()) out.rationale = r->get<std::string>();
        return out;
    }
    return std::nullopt;
}

struct CollectOptions {
    int retries = 2; // extra attempts after the first
    std::string area_hint = "unknown";
    std::function<void(std::string const&)> warn = [](std::string const& msg) {
        std::cerr << "[jury] warning: " << msg << '\n';
    };
};

/// Queries one juror about one post. Parse and transport failures are
/// retried; when attempts run out the verdict is recorded as abstained.
inline JurorVerdict collect_verdict(Provider& provider, std::string const& juror_id, BlogPost const& post,
                                    PromptSpec const& spec, Taxonomy const& taxonomy,
                                    CollectOptions const& options = {})
{
    auto const vocabulary = taxonomy.vocabulary(spec.stage());
    JurorVerdict v;
    v.juror_id = juror_id;
    v.post_id = post.record_id;
    v.stage = spec.stage();
    v.prompt_version = spec.version_hash(vocabulary);

    std::string prompt;
    try {
        prompt = render_prompt(spec, post, vocabulary, options.area_hint);
    } catch (PromptTooLong const& e) {
        v.rationale = e.what();
        return v;
    }

    ProviderRequest const request{juror_id, post.record_id, spec.stage(), v.prompt_version, prompt};
    std::optional<ParsedResponse> parsed;
    std::string last_error;
    for (int attempt = 0; attempt <= options.retries && !parsed; ++attempt) {
        ++v.attempts;
        try {
            parsed = parse_response(provider.send(request), spec.stage());
            if (!parsed) last_error = "unparseable response";
        } catch (TransportError const& e) {
            last_error = e.what();
        }
    }
    if (!parsed) {
        v.rationale = "abstained: " + last_error;
        if (options.warn) {
            options.warn(juror_id + " abstained on post " + std::to_string(post.record_id) + ": " + last_error);
        }
        return v;
    }

    if (parsed->confidence < 0.0 || parsed->confidence > 1.0) {
        if (options.warn) {
            options.warn(juror_id + " post " + std::to_string(post.record_id) + ": confidence " +
                         std::to_string(parsed->confidence) + " clamped to [0,1]");
        }
    }
    v.raw_confidence = std::clamp(parsed->confidence, 0.0, 1.0);
    v.rationale = parsed->rationale;
    std::set<std::string> seen;
    for (auto const& raw : parsed->labels) {
        Label const l = taxonomy.resolve(raw, spec.stage());
        if (!seen.insert(l.name).second) continue;
        v.labels.push_back(l.name);
        if (l.status == taxonomy::LabelStatus::proposed) v.proposed.push_back(l.display);
    }
    v.status = VerdictStatus::ok;
    return v;
}

// ---------------------------------------------------------------------------
// confidence standardization

struct ConfidenceStats {
    std::string juror_id;
    Stage stage = Stage::area;
    double mean = 0;
    double std = 0; // population
    std::size_t n = 0;
};

struct NormalizedVerdict {
    JurorVerdict verdict;
    double z = 0;
};

inline void to_json(json& j, ConfidenceStats const& s)
{
    j = json{{"juror_id", s.juror_id}, {"stage", s.stage}, {"mean", s.mean}, {"std", s.std}, {"n", s.n}};
}

/// z-scores for one juror's ok verdicts of one stage. Abstained verdicts are
/// skipped. A batch whose confidences are all equal has sigma 0 and z 0.
inline std::pair<ConfidenceStats, std::vector<NormalizedVerdict>>
normalize_confidences(std::span<JurorVerdict const> verdicts)
{
    ConfidenceStats stats;
    std::vector<NormalizedVerdict> out;
    double lo = INFINITY;
    double hi = -INFINITY;
    double sum = 0;
    for (auto const& v : verdicts) {
        if (!v.ok()) continue;
        if (stats.n == 0) {
            stats.juror_id = v.juror_id;
            stats.stage = v.stage;
        }
        ++stats.n;
        sum += v.raw_confidence;
        lo = std::min(lo, v.raw_confidence);
        hi = std::max(hi, v.raw_confidence);
    }
    if (stats.n == 0) return {stats, out};

    stats.mean = sum / static_cast<double>(stats.n);
    if (hi > lo) {
        double ss = 0;
        for (auto const& v : verdicts) {
            if (v.ok()) ss += (v.raw_confidence - stats.mean) * (v.raw_confidence - stats.mean);
        }
        stats.std = std::sqrt(ss / static_cast<double>(stats.n));
    }
    for (auto const& v : verdicts) {
        if (!v.ok()) continue;
        double const z = stats.std > 0 ? (v.raw_confidence - stats.mean) / stats.std : 0.0;
        out.push_back({v, z});
    }
    return {stats, out};
}

struct NormalizedBatch {
    std::vector<ConfidenceStats> stats;
    std::vector<NormalizedVerdict> verdicts; // input order; abstentions carry z = 0
};

/// Groups by (juror, stage) and standardizes each group independently.
inline NormalizedBatch normalize_all(std::vector<JurorVerdict> const& verdicts)
{
    std::map<std::pair<std::string, Stage>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < verdicts.size(); ++i) groups[{verdicts[i].juror_id, verdicts[i].stage}].push_back(i);

    NormalizedBatch out;
    out.verdicts.resize(verdicts.size());
    for (std::size_t i = 0; i < verdicts.size(); ++i) out.verdicts[i] = {verdicts[i], 0.0};
    for (auto const& [key, idx] : groups) {
        std::vector<JurorVerdict> batch;
        for (auto i : idx) batch.push_back(verdicts[i]);
        auto [stats, normalized] = normalize_confidences(batch);
        if (stats.n == 0) {
            stats.juror_id = key.first;
            stats.stage = key.second;
        }
        out.stats.push_back(stats);
        std::size_t k = 0;
        for (auto i : idx) {
            if (verdicts[i].ok()) out.verdicts[i].z = normalized[k++].z;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// voting

struct JuryDecision {
    std::int64_t post_id = 0;
    Stage stage = Stage::area;
    std::vector<std::string> labels;
    std::map<std::string, int> vote_counts;
    bool tie_broken = false;
    bool escalated = false;
    std::vector<std::string> contributing; // sorted juror ids of ok verdicts
    taxonomy::Actor resolved_by = taxonomy::Actor::jury;

    friend bool operator==(JuryDecision const&, JuryDecision const&) = default;
};

inline void to_json(json& j, JuryDecision const& d)
{
    j = json{{"post_id", d.post_id},
             {"stage", d.stage},
             {"labels", d.labels},
             {"vote_counts", d.vote_counts},
             {"tie_broken", d.tie_broken},
             {"escalated", d.escalated},
             {"contributing", d.contributing},
             {"resolved_by", std::string(taxonomy::to_string(d.resolved_by))}};
}

inline void from_json(json const& j, JuryDecision& d)
{
    d.post_id = j.at("post_id").get<std::int64_t>();
    d.stage = j.at("stage").get<Stage>();
    d.labels = j.value("labels", std::vector<std::string>{});
    d.vote_counts = j.value("vote_counts", std::map<std::string, int>{});
    d.tie_broken = j.value("tie_broken", false);
    d.escalated = j.value("escalated", false);
    d.contributing = j.value("contributing", std::vector<std::string>{});
    d.resolved_by = taxonomy::parse_actor(j.value("resolved_by", "jury"));
}

namespace detail {

inline JuryDecision start_decision(std::int64_t post_id, Stage stage, std::span<NormalizedVerdict const> verdicts,
                                   std::vector<NormalizedVerdict const*>& ok)
{
    JuryDecision d;
    d.post_id = post_id;
    d.stage = stage;
    for (auto const& nv : verdicts) {
        if (!nv.verdict.ok()) continue;
        ok.push_back(&nv);
        d.contributing.push_back(nv.verdict.juror_id);
        for (auto const& l : nv.verdict.labels) ++d.vote_counts[l];
    }
    std::sort(d.contributing.begin(), d.contributing.end());
    if (ok.empty()) d.escalated = true;
    return d;
}

/// Labels ordered by votes (descending) then name.
inline std::vector<std::string> by_votes(std::map<std::string, int> const& counts, int min_votes)
{
    std::vector<std::pair<int, std::string>> rows;
    for (auto const& [label, n] : counts) {
        if (n >= min_votes) rows.emplace_back(-n, label);
    }
    std::sort(rows.begin(), rows.end());
    std::vector<std::string> out;
    for (auto& r : rows) out.push_back(std::move(r.second));
    return out;
}

} // namespace detail

/// Single-label merge: plurality wins. Among labels tied on votes, the one
/// whose strongest voter has the highest z wins; if that z is shared
/// (within kTieEpsilon) the decision is escalated.
inline JuryDecision vote_single(std::int64_t post_id, Stage stage, std::span<NormalizedVerdict const> verdicts)
{
    std::vector<NormalizedVerdict const*> ok;
    JuryDecision d = detail::start_decision(post_id, stage, verdicts, ok);
    if (d.escalated) return d;
    for (auto const* nv : ok) {
        if (nv->verdict.labels.size() != 1) {
            throw PreconditionError("single-label vote got " + std::to_string(nv->verdict.labels.size()) +
                                    " labels from " + nv->verdict.juror_id);
        }
    }

    int top = 0;
    for (auto const& [label, n] : d.vote_counts) top = std::max(top, n);
    std::vector<std::pair<double, std::string>> tied; // (best z, label)
    for (auto const& [label, n] : d.vote_counts) {
        if (n != top) continue;
        double best = -INFINITY;
        for (auto const* nv : ok) {
            if (nv->verdict.labels.front() == label) best = std::max(best, nv->z);
        }
        tied.emplace_back(best, label);
    }
    if (tied.size() == 1) {
        d.labels = {tied.front().second};
        return d;
    }
    std::sort(tied.begin(), tied.end(), [](auto const& a, auto const& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    if (tied[0].first - tied[1].first <= kTieEpsilon) {
        d.escalated = true;
        return d;
    }
    d.labels = {tied.front().second};
    d.tie_broken = true;
    return d;
}

/// Multi-label merge. A label wins when at least ceil(k/2) of the k ok
/// verdicts carry it. With no such label, the set of the juror with the
/// highest z is taken (tie_broken); jurors sharing that z with different
/// sets escalate. When every verdict holds a single label the merge is the
/// single-label plurality vote.
inline JuryDecision vote_multi(std::int64_t post_id, Stage stage, std::span<NormalizedVerdict const> verdicts)
{
    bool const all_singletons = std::all_of(verdicts.begin(), verdicts.end(), [](NormalizedVerdict const& nv) {
        return !nv.verdict.ok() || nv.verdict.labels.size() == 1;
    });
    if (all_singletons) return vote_single(post_id, stage, verdicts);

    std::vector<NormalizedVerdict const*> ok;
    JuryDecision d = detail::start_decision(post_id, stage, verdicts, ok);
    if (d.escalated) return d;

    int const k = static_cast<int>(ok.size());
    d.labels = detail::by_votes(d.vote_counts, (k + 1) / 2);
    if (!d.labels.empty()) return d;

    double top = -INFINITY;
    for (auto const* nv : ok) top = std::max(top, nv->z);
    std::optional<std::set<std::string>> chosen;
    for (auto const* nv : ok) {
        if (top - nv->z > kTieEpsilon) continue;
        std::set<std::string> s(nv->verdict.labels.begin(), nv->verdict.labels.end());
        if (chosen && *chosen != s) {
            d.escalated = true;
            return d;
        }
        chosen = std::move(s);
    }
    std::map<std::string, int> subset;
    for (auto const& l : *chosen) subset[l] = d.vote_counts[l];
    d.labels = detail::by_votes(subset, 0);
    if (d.labels.empty()) d.labels = {taxonomy::canonicalize(taxonomy::kOther)};
    d.tie_broken = true;
    return d;
}

inline JuryDecision vote(std::int64_t post_id, Stage stage, std::span<NormalizedVerdict const> verdicts)
{
    return stage == Stage::area ? vote_single(post_id, stage, verdicts) : vote_multi(post_id, stage, verdicts);
}

/// Final labels after adjudication: reclassified proposals map to their
/// target, ignored ones drop out, and an empty result becomes Other.
inline std::vector<std::string> finalize_labels(JuryDecision const& d, Taxonomy const& taxonomy)
{
    if (d.escalated) return {};
    auto labels = taxonomy.map_labels(d.labels, d.stage);
    if (labels.empty()) labels = {taxonomy::canonicalize(taxonomy::kOther)};
    return labels;
}

// ---------------------------------------------------------------------------
// escalation

struct EscalationEntry {
    std::int64_t post_id = 0;
    Stage stage = Stage::area;
    JuryDecision decision;
    std::vector<NormalizedVerdict> verdicts;
};

inline void to_json(json& j, EscalationEntry const& e)
{
    json verdicts = json::array();
    for (auto const& nv : e.verdicts) {
        json v = nv.verdict;
        v["z"] = nv.z;
        verdicts.push_back(std::move(v));
    }
    j = json{{"post_id", e.post_id}, {"stage", e.stage}, {"decision", e.decision}, {"verdicts", verdicts}};
}

inline void from_json(json const& j, EscalationEntry& e)
{
    e.post_id = j.at("post_id").get<std::int64_t>();
    e.stage = j.at("stage").get<Stage>();
    e.decision = j.at("decision").get<JuryDecision>();
    e.verdicts.clear();
    for (auto const& v : j.value("verdicts", json::array())) {
        e.verdicts.push_back({v.get<JurorVerdict>(), v.value("z", 0.0)});
    }
}

inline EscalationEntry escalate_unresolved(JuryDecision const& decision, std::span<NormalizedVerdict const> verdicts)
{
    if (!decision.escalated) {
        throw PreconditionError("post " + std::to_string(decision.post_id) + " " +
                                std::string(to_string(decision.stage)) + " decision is not escalated");
    }
    EscalationEntry e{decision.post_id, decision.stage, decision, {}};
    for (auto const& nv : verdicts) {
        if (nv.verdict.post_id == decision.post_id && nv.verdict.stage == decision.stage) e.verdicts.push_back(nv);
    }
    return e;
}

/// A recorded resolution of an escalated decision.
struct EscalationResolution {
    std::int64_t post_id = 0;
    Stage stage = Stage::area;
    std::vector<std::string> labels;
    taxonomy::Actor actor = taxonomy::Actor::human;
    std::uint64_t sequence = 0;
};

inline void to_json(json& j, EscalationResolution const& r)
{
    j = json{{"type", "escalation"},
             {"sequence", r.sequence},
             {"post_id", r.post_id},
             {"stage", r.stage},
             {"labels", r.labels},
             {"actor", std::string(taxonomy::to_string(r.actor))}};
}

inline void from_json(json const& j, EscalationResolution& r)
{
    r.post_id = j.at("post_id").get<std::int64_t>();
    r.stage = j.at("stage").get<Stage>();
    r.labels = j.at("labels").get<std::vector<std::string>>();
    r.actor = taxonomy::parse_actor(j.value("actor", "human"));
    r.sequence = j.value("sequence", std::uint64_t{0});
}

inline JuryDecision resolve_escalation(JuryDecision decision, std::vector<std::string> const& labels,
                                       taxonomy::Actor actor)
{
    if (!decision.escalated) throw PreconditionError("decision is not escalated");
    if (labels.empty()) throw InputError("a resolution needs at least one label");
    if (decision.stage == Stage::area && labels.size() != 1) throw InputError("area decisions take exactly one label");
    decision.labels.clear();
    for (auto const& l : labels) decision.labels.push_back(taxonomy::canonicalize(l));
    decision.escalated = false;
    decision.resolved_by = actor;
    return decision;
}

/// Replays resolutions onto a decision store. Resolutions for decisions that
/// are missing or no longer escalated are ignored.
inline std::vector<JuryDecision> apply_resolutions(std::vector<JuryDecision> decisions,
                                                   std::vector<EscalationResolution> const& resolutions)
{
    for (auto const& r : resolutions) {
        for (auto& d : decisions) {
            if (d.post_id == r.post_id && d.stage == r.stage && d.escalated) d = resolve_escalation(d, r.labels, r.actor);
        }
    }
    return decisions;
}

// ---------------------------------------------------------------------------
// stage runner

struct Juror {
    std::string id;
    std::shared_ptr<Provider> provider;
};

struct StageOptions {
    std::size_t max_in_flight = 4;
    CollectOptions collect;
    std::map<std::int64_t, std::string> area_hints;
};

struct StageRun {
    std::vector<JurorVerdict> verdicts; // post order, then roster order
    std::vector<ConfidenceStats> stats;
    std::vector<JuryDecision> decisions; // ascending post id
    std::vector<EscalationEntry> escalations;
    std::vector<Label> proposals;        // first-seen order
    std::string prompt_version;

    std::size_t abstentions() const
    {
        return static_cast<std::size_t>(
            std::count_if(verdicts.begin(), verdicts.end(), [](JurorVerdict const& v) { return !v.ok(); }));
    }
};

/// Labels every post with every juror, standardizes confidences per juror,
/// then merges and escalates post by post.
inline StageRun run_stage(std::vector<BlogPost> posts, std::vector<Juror> const& jurors, PromptSpec const& spec,
                          Taxonomy const& taxonomy, StageOptions const& options = {})
{
    if (jurors.empty()) throw PreconditionError("empty juror roster");
    std::sort(posts.begin(), posts.end(),
              [](BlogPost const& a, BlogPost const& b) { return a.record_id < b.record_id; });

    StageRun run;
    run.prompt_version = spec.version_hash(taxonomy.vocabulary(spec.stage()));
    std::size_t const per_post = jurors.size();
    run.verdicts.resize(posts.size() * per_post);
    parallel_for(run.verdicts.size(), options.max_in_flight, [&](std::size_t i) {
        auto const& post = posts[i / per_post];
        auto const& juror = jurors[i % per_post];
        CollectOptions collect = options.collect;
        if (auto it = options.area_hints.find(post.record_id); it != options.area_hints.end()) {
            collect.area_hint = it->second;
        }
        run.verdicts[i] = collect_verdict(*juror.provider, juror.id, post, spec, taxonomy, collect);
    });

    auto normalized = normalize_all(run.verdicts);
    run.stats = std::move(normalized.stats);

    std::set<std::string> seen;
    for (auto const& v : run.verdicts) {
        for (auto const& p : v.proposed) {
            if (seen.insert(taxonomy::canonicalize(p)).second) run.proposals.push_back(taxonomy.resolve(p, spec.stage()));
        }
    }

    for (std::size_t p = 0; p < posts.size(); ++p) {
        std::span<NormalizedVerdict const> slice(normalized.verdicts.data() + p * per_post, per_post);
        auto decision = vote(posts[p].record_id, spec.stage(), slice);
        if (decision.escalated) run.escalations.push_back(escalate_unresolved(decision, slice));
        run.decisions.push_back(std::move(decision));
    }
    return run;
}

} // namespace blogjury::jury
