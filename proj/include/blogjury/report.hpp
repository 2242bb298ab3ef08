#pragma once

// Aggregation of final labels into per-activity and per-task count tables,
// table export and the run manifest.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "blogjury/common.hpp"
#include "blogjury/corpus.hpp"
#include "blogjury/jury.hpp"
#include "blogjury/taxonomy.hpp"

namespace blogjury::report {

enum class Scope { FM4SE, SE4FM };

inline std::string_view to_string(Scope s) { return s == Scope::FM4SE ? "FM4SE" : "SE4FM"; }

inline std::optional<Scope> scope_of_area(std::string_view label)
{
    auto const key = taxonomy::canonicalize(label);
    if (key == "fm4se") return Scope::FM4SE;
    if (key == "se4fm") return Scope::SE4FM;
    return std::nullopt;
}

struct LabelledPost {
    std::int64_t post_id = 0;
    std::string company;
    Scope area = Scope::FM4SE;
    std::set<std::string> activities;
    std::set<std::string> tasks;
};

struct CountRow {
    std::string name;
    std::size_t post_count = 0;
    std::size_t company_count = 0;

    friend bool operator==(CountRow const&, CountRow const&) = default;
};

struct CountTable {
    Scope scope = Scope::FM4SE;
    std::vector<CountRow> rows;

    friend bool operator==(CountTable const&, CountTable const&) = default;
};

namespace detail {

template <typename Member>
CountTable count_by(std::vector<LabelledPost> const& posts, Scope scope, Member member)
{
    std::map<std::string, std::pair<std::size_t, std::set<std::string>>> acc;
    for (auto const& p : posts) {
        if (p.area != scope) continue;
        for (auto const& label : p.*member) {
            auto& [count, companies] = acc[label];
            ++count;
            companies.insert(p.company);
        }
    }
    CountTable t{scope, {}};
    for (auto const& [name, v] : acc) t.rows.push_back({name, v.first, v.second.size()});
    std::sort(t.rows.begin(), t.rows.end(), [](CountRow const& a, CountRow const& b) {
        return a.post_count != b.post_count ? a.post_count > b.post_count : a.name < b.name;
    });
    return t;
}

} // namespace detail

/// Posts per activity and distinct companies per activity, so that one
/// prolific company does not dominate a row.
inline CountTable count_by_activity(std::vector<LabelledPost> const& posts, Scope scope)
{
    return detail::count_by(posts, scope, &LabelledPost::activities);
}

inline CountTable count_by_task(std::vector<LabelledPost> const& posts, Scope scope)
{
    return detail::count_by(posts, scope, &LabelledPost::tasks);
}

// ---------------------------------------------------------------------------
// export

enum class Format { csv, json };

inline Format parse_format(std::string_view s)
{
    if (s == "csv") return Format::csv;
    if (s == "json") return Format::json;
    throw InputError("unknown table format '" + std::string(s) + "'");
}

inline std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

inline std::string render_table(CountTable const& table, Format format)
{
    if (format == Format::csv) {
        std::string out = "name,posts,companies\n";
        for (auto const& r : table.rows) {
            out += csv_field(r.name) + "," + std::to_string(r.post_count) + "," + std::to_string(r.company_count) + "\n";
        }
        return out;
    }
    ordered_json doc;
    doc["scope"] = std::string(to_string(table.scope));
    doc["rows"] = ordered_json::array();
    for (auto const& r : table.rows) {
        ordered_json row;
        row["name"] = r.name;
        row["posts"] = r.post_count;
        row["companies"] = r.company_count;
        doc["rows"].push_back(std::move(row));
    }
    return doc.dump(2) + "\n";
}

inline CountTable parse_table_json(std::string_view text)
{
    auto const doc = json::parse(text);
    CountTable t;
    t.scope = doc.at("scope").get<std::string>() == "FM4SE" ? Scope::FM4SE : Scope::SE4FM;
    for (auto const& r : doc.at("rows")) {
        t.rows.push_back({r.at("name").get<std::string>(), r.at("posts").get<std::size_t>(),
                          r.at("companies").get<std::size_t>()});
    }
    return t;
}

inline void export_table(CountTable const& table, Format format, std::filesystem::path const& path)
{
    write_file(path, render_table(table, format));
}

// ---------------------------------------------------------------------------
// assembly from decisions

struct StageTally {
    std::size_t decisions = 0;
    std::size_t escalated = 0;
    std::size_t human_resolved = 0;
    std::size_t other = 0;
};

struct Assembly {
    std::vector<LabelledPost> posts;
    std::map<std::string, std::size_t> area_counts; // display name -> posts, incl. unrelated
    std::map<Stage, StageTally> tallies;
    std::size_t activity_other = 0; // in-scope posts dropped because the activity decision was Other
};

using DecisionIndex = std::map<std::int64_t, jury::JuryDecision>;

inline DecisionIndex index_decisions(std::vector<jury::JuryDecision> const& decisions)
{
    DecisionIndex out;
    for (auto const& d : decisions) out[d.post_id] = d;
    return out;
}

/// Joins final decisions of the three stages with the corpus. A post enters
/// the tables when its area is FM4SE or SE4FM and its activity decision is
/// resolved and not Other. Labels go through the taxonomy first.
inline Assembly assemble(std::vector<corpus::BlogPost> const& corpus, std::vector<jury::JuryDecision> const& area,
                         std::vector<jury::JuryDecision> const& activity, std::vector<jury::JuryDecision> const& task,
                         taxonomy::Taxonomy const& tax)
{
    Assembly out;
    auto tally = [&](Stage stage, std::vector<jury::JuryDecision> const& ds) {
        auto& t = out.tallies[stage];
        for (auto const& d : ds) {
            ++t.decisions;
            if (d.escalated) ++t.escalated;
            if (!d.escalated && d.resolved_by == taxonomy::Actor::human) ++t.human_resolved;
            auto const f = jury::finalize_labels(d, tax);
            if (f.size() == 1 && taxonomy::is_other(f.front())) ++t.other;
        }
    };
    tally(Stage::area, area);
    tally(Stage::activity, activity);
    tally(Stage::task, task);

    auto const area_by = index_decisions(area);
    auto const act_by = index_decisions(activity);
    auto const task_by = index_decisions(task);
    auto display = [&](std::vector<std::string> const& labels, Stage stage) {
        std::set<std::string> s;
        for (auto const& l : labels) {
            if (!taxonomy::is_other(l)) s.insert(tax.display_name(l, stage));
        }
        return s;
    };

    for (auto const& post : corpus) {
        auto a = area_by.find(post.record_id);
        if (a == area_by.end() || a->second.escalated) continue;
        auto const area_labels = jury::finalize_labels(a->second, tax);
        ++out.area_counts[tax.display_name(area_labels.front(), Stage::area)];
        auto const scope = scope_of_area(area_labels.front());
        if (!scope) continue;

        auto act = act_by.find(post.record_id);
        if (act == act_by.end() || act->second.escalated) continue;
        auto activities = display(jury::finalize_labels(act->second, tax), Stage::activity);
        if (activities.empty()) {
            ++out.activity_other;
            continue;
        }
        LabelledPost lp{post.record_id, post.company, *scope, std::move(activities), {}};
        if (auto t = task_by.find(post.record_id); t != task_by.end() && !t->second.escalated) {
            lp.tasks = display(jury::finalize_labels(t->second, tax), Stage::task);
        }
        out.posts.push_back(std::move(lp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// manifest

struct JurorEntry {
    std::string id;
    std::string provider;
    std::string model;
};

struct RunState {
    std::string corpus_digest;
    std::map<Stage, std::string> prompt_versions;
    std::map<Stage, std::string> frozen_versions;
    std::vector<JurorEntry> roster;
    json config;
    std::map<std::string, std::size_t> counts;
    std::string generated_at; // wall clock; the only field allowed to differ between identical runs
};

inline ordered_json run_manifest(RunState const& state)
{
    ordered_json m;
    m["tool"] = "blogjury";
    m["tool_version"] = std::string(kToolVersion);
    m["corpus_digest"] = state.corpus_digest;
    ordered_json prompts = ordered_json::object();
    for (auto const stage : kAllStages) {
        ordered_json p;
        auto v = state.prompt_versions.find(stage);
        auto f = state.frozen_versions.find(stage);
        p["version"] = v != state.prompt_versions.end() ? ordered_json(v->second) : ordered_json(nullptr);
        p["frozen_version"] = f != state.frozen_versions.end() ? ordered_json(f->second) : ordered_json(nullptr);
        prompts[std::string(blogjury::to_string(stage))] = std::move(p);
    }
    m["prompts"] = std::move(prompts);
    m["jurors"] = ordered_json::array();
    for (auto const& j : state.roster) {
        ordered_json e;
        e["id"] = j.id;
        e["provider"] = j.provider;
        e["model"] = j.model;
        m["jurors"].push_back(std::move(e));
    }
    m["config"] = ordered_json::parse(state.config.dump());
    m["counts"] = ordered_json::object();
    for (auto const& [k, v] : state.counts) m["counts"][k] = v;
    m["generated_at"] = state.generated_at;
    return m;
}

} // namespace blogjury::report
