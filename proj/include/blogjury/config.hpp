#pragma once

// Run configuration and the on-disk layout of a run's output directory.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "blogjury/agreement.hpp"
#include "blogjury/common.hpp"
#include "blogjury/corpus.hpp"
#include "blogjury/jury.hpp"
#include "blogjury/taxonomy.hpp"

namespace blogjury::cli {

namespace fs = std::filesystem;

struct JurorConfig {
    std::string id;
    std::string provider = "openai"; // chat-completions compatible endpoint
    std::string base_url;
    std::string model;
    std::string path = "/v1/chat/completions";
};

struct RunConfig {
    fs::path base_dir;
    fs::path records;
    std::optional<fs::path> pages_dir;
    fs::path output_dir = "out";
    std::map<Stage, fs::path> vocabularies;
    std::map<Stage, fs::path> prompts;
    std::map<Stage, fs::path> golden;
    std::vector<JurorConfig> jurors;
    corpus::FilterConfig filter;
    agreement::GateConfig gate;
    std::size_t max_in_flight = 4;
    int retries = 2;
    std::optional<fs::path> replay_dir;
    json raw; // as read, echoed into the manifest
};

namespace detail {

inline fs::path resolve(fs::path const& base, std::string const& p)
{
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

inline std::map<Stage, fs::path> stage_paths(json const& doc, char const* key, fs::path const& base)
{
    std::map<Stage, fs::path> out;
    if (!doc.contains(key)) return out;
    for (auto const& [stage, p] : doc.at(key).items()) out[parse_stage(stage)] = resolve(base, p.get<std::string>());
    return out;
}

} // namespace detail

inline RunConfig load_config(fs::path const& path)
{
    if (!fs::exists(path)) throw InputError("config not found: " + path.string());
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (json::parse_error const& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    RunConfig c;
    c.raw = doc;
    c.base_dir = fs::absolute(path).parent_path();
    auto const& base = c.base_dir;
    try {
        c.records = detail::resolve(base, doc.value("records", "records.jsonl"));
        if (doc.contains("pages_dir")) c.pages_dir = detail::resolve(base, doc.at("pages_dir").get<std::string>());
        c.output_dir = detail::resolve(base, doc.value("output_dir", "out"));
        c.vocabularies = detail::stage_paths(doc, "vocabularies", base);
        c.prompts = detail::stage_paths(doc, "prompts", base);
        c.golden = detail::stage_paths(doc, "golden", base);
        for (auto const& j : doc.value("jurors", json::array())) {
            JurorConfig jc;
            jc.id = j.at("id").get<std::string>();
            jc.provider = j.value("provider", jc.provider);
            jc.base_url = j.value("base_url", "");
            jc.model = j.value("model", "");
            jc.path = j.value("path", jc.path);
            c.jurors.push_back(std::move(jc));
        }
        if (doc.contains("filter")) {
            auto const& f = doc.at("filter");
            if (f.contains("url_denylist")) c.filter.url_denylist = f.at("url_denylist").get<std::vector<std::string>>();
            if (f.contains("language_allow")) c.filter.language_allow = f.at("language_allow").get<std::set<std::string>>();
            c.filter.iqr_multiplier = f.value("iqr_multiplier", c.filter.iqr_multiplier);
            if (f.contains("date_range")) {
                auto const r = f.at("date_range").get<std::vector<std::string>>();
                if (r.size() != 2) throw InputError("date_range needs [start, end]");
                c.filter.date_range = std::make_pair(r[0], r[1]);
            }
        }
        if (c.filter.url_denylist.empty()) throw InputError("url_denylist must not be empty");
        if (doc.contains("gate")) {
            c.gate.excellent_threshold = doc.at("gate").value("excellent_threshold", c.gate.excellent_threshold);
            c.gate.substantial_threshold = doc.at("gate").value("substantial_threshold", c.gate.substantial_threshold);
        }
        c.gate.validate();
        c.max_in_flight = doc.value("max_in_flight", c.max_in_flight);
        c.retries = doc.value("retries", c.retries);
        if (doc.contains("replay_dir")) c.replay_dir = detail::resolve(base, doc.at("replay_dir").get<std::string>());
    } catch (json::exception const& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return c;
}

/// File names inside the output directory.
struct Workspace {
    fs::path dir;

    fs::path corpus() const { return dir / "corpus.jsonl"; }
    fs::path audit() const { return dir / "audit.jsonl"; }
    fs::path harvest_summary() const { return dir / "harvest.json"; }
    fs::path verdicts(Stage s) const { return dir / ("verdicts_" + std::string(to_string(s)) + ".jsonl"); }
    fs::path decisions(Stage s) const { return dir / ("decisions_" + std::string(to_string(s)) + ".jsonl"); }
    fs::path escalations(Stage s) const { return dir / ("escalations_" + std::string(to_string(s)) + ".jsonl"); }
    fs::path confidence(Stage s) const { return dir / ("confidence_" + std::string(to_string(s)) + ".json"); }
    fs::path ledger(Stage s) const { return dir / ("ledger_" + std::string(to_string(s)) + ".jsonl"); }
    fs::path golden_report(Stage s) const { return dir / ("golden_" + std::string(to_string(s)) + ".json"); }
    fs::path golden_verdicts(Stage s) const { return dir / ("golden_verdicts_" + std::string(to_string(s)) + ".jsonl"); }
    fs::path proposals() const { return dir / "proposals.jsonl"; }
    fs::path adjudication_log() const { return dir / "adjudication_log.jsonl"; }
    fs::path tables() const { return dir / "tables"; }
    fs::path manifest() const { return dir / "manifest.json"; }
};

/// Proposal registered by a labelling run. `after_sequence` is the last
/// adjudication sequence number at the time, so replay can interleave
/// re-proposals of ignored labels correctly.
struct ProposalRecord {
    std::string name;
    std::string display;
    Stage kind = Stage::task;
    std::uint64_t after_sequence = 0;
};

inline void to_json(json& j, ProposalRecord const& p)
{
    j = json{{"name", p.name}, {"display", p.display}, {"kind", p.kind}, {"after_sequence", p.after_sequence}};
}

inline void from_json(json const& j, ProposalRecord& p)
{
    p.name = j.at("name").get<std::string>();
    p.display = j.value("display", p.name);
    p.kind = j.at("kind").get<Stage>();
    p.after_sequence = j.value("after_sequence", std::uint64_t{0});
}

struct AdjudicationLog {
    std::vector<taxonomy::AdjudicationDecision> proposals;
    std::vector<jury::EscalationResolution> escalations;
    std::uint64_t last_sequence = 0;
};

inline AdjudicationLog load_adjudication_log(fs::path const& path)
{
    AdjudicationLog log;
    if (!fs::exists(path)) return log;
    for (auto const& row : read_jsonl_file(path)) {
        auto const type = row.value("type", "proposal");
        if (type == "escalation") {
            log.escalations.push_back(row.get<jury::EscalationResolution>());
            log.last_sequence = std::max(log.last_sequence, log.escalations.back().sequence);
        } else {
            log.proposals.push_back(row.get<taxonomy::AdjudicationDecision>());
            log.last_sequence = std::max(log.last_sequence, log.proposals.back().sequence);
        }
    }
    return log;
}

/// Vocabularies, then the interleaving of registered proposals and logged
/// adjudications in sequence order.
inline taxonomy::Taxonomy load_taxonomy(RunConfig const& cfg, Workspace const& ws)
{
    taxonomy::Taxonomy tax;
    for (auto const stage : kAllStages) {
        auto it = cfg.vocabularies.find(stage);
        if (it == cfg.vocabularies.end()) throw InputError("no vocabulary configured for stage " + std::string(to_string(stage)));
        tax.add_vocabulary(taxonomy::load_vocabulary_file(stage, it->second));
    }
    std::vector<ProposalRecord> proposals;
    if (fs::exists(ws.proposals())) {
        for (auto const& row : read_jsonl_file(ws.proposals())) proposals.push_back(row.get<ProposalRecord>());
    }
    auto log = load_adjudication_log(ws.adjudication_log());
    std::sort(log.proposals.begin(), log.proposals.end(),
              [](auto const& a, auto const& b) { return a.sequence < b.sequence; });
    std::size_t next = 0;
    auto register_upto = [&](std::uint64_t seq) {
        for (; next < proposals.size() && proposals[next].after_sequence < seq; ++next) {
            auto const& p = proposals[next];
            tax.register_proposal({p.name, p.display, p.kind, taxonomy::LabelStatus::proposed, std::nullopt});
        }
    };
    std::stable_sort(proposals.begin(), proposals.end(),
                     [](auto const& a, auto const& b) { return a.after_sequence < b.after_sequence; });
    for (auto const& d : log.proposals) {
        register_upto(d.sequence);
        tax.apply_logged(d);
    }
    register_upto(UINT64_MAX);
    return tax;
}

inline std::vector<jury::JuryDecision> load_decisions(fs::path const& path)
{
    std::vector<jury::JuryDecision> out;
    if (!fs::exists(path)) return out;
    for (auto const& row : read_jsonl_file(path)) out.push_back(row.get<jury::JuryDecision>());
    return out;
}

} // namespace blogjury::cli
