#pragma once

// Command-line front end: harvest, label, adjudicate, report.
//
// Exit codes: 0 success, 2 input error, 3 precondition violation,
// 4 provider exhaustion (every juror abstained on some post, live mode).

#include <chrono>
#include <ctime>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "blogjury/agreement.hpp"
#include "blogjury/config.hpp"
#include "blogjury/corpus.hpp"
#include "blogjury/http.hpp"
#include "blogjury/jury.hpp"
#include "blogjury/report.hpp"
#include "blogjury/taxonomy.hpp"

namespace blogjury::cli {

enum ExitCode : int { kOk = 0, kInputError = 2, kPrecondition = 3, kProviderExhausted = 4 };

struct Options {
    fs::path config;
    std::optional<Stage> stage;
    bool golden = false;
    bool live = false;
    bool yes = false;
    std::optional<fs::path> replay_dir;
    std::optional<fs::path> out_dir;
    std::optional<std::size_t> max_in_flight;
    taxonomy::Actor actor = taxonomy::Actor::human;
};

/// Streams used by a command; tests substitute string streams.
struct Io {
    std::istream& in;
    std::ostream& out;
    std::ostream& err;
};

struct Context {
    RunConfig cfg;
    Workspace ws;
    Options opt;
};

inline Context make_context(Options const& opt)
{
    Context ctx{load_config(opt.config), {}, opt};
    if (opt.out_dir) ctx.cfg.output_dir = *opt.out_dir;
    if (opt.replay_dir) ctx.cfg.replay_dir = *opt.replay_dir;
    if (opt.max_in_flight) ctx.cfg.max_in_flight = *opt.max_in_flight;
    ctx.ws.dir = ctx.cfg.output_dir;
    return ctx;
}

// ---------------------------------------------------------------------------
// harvest

inline int cmd_harvest(Context const& ctx, Io io)
{
    auto const& cfg = ctx.cfg;
    if (!fs::exists(cfg.records)) throw InputError("search-record file not found: " + cfg.records.string());
    std::ifstream records(cfg.records);
    if (!records) throw InputError("cannot read " + cfg.records.string());

    std::unique_ptr<corpus::ContentFetcher> fetcher;
    if (ctx.opt.live) {
        fetcher = std::make_unique<http::HttpFetcher>();
    } else {
        if (!cfg.pages_dir) throw InputError("offline harvest requires pages_dir in the config (or --live)");
        fetcher = std::make_unique<corpus::FixtureFetcher>(*cfg.pages_dir);
    }
    corpus::StopwordDetector detector;
    auto const result = corpus::harvest(records, cfg.filter, detector, *fetcher, cfg.max_in_flight);
    if (result.ingested == 0) throw InputError("no usable search records in " + cfg.records.string());

    write_file(ctx.ws.corpus(), to_jsonl(result.corpus));
    write_file(ctx.ws.audit(), to_jsonl(result.audit));
    ordered_json summary;
    summary["ingested"] = result.ingested;
    summary["rejects"] = result.rejects;
    summary["excluded"] = result.audit.size();
    summary["kept"] = result.corpus.size();
    summary["length_stats"] = {{"q1", result.stats.q1},
                               {"q3", result.stats.q3},
                               {"iqr", result.stats.iqr},
                               {"lower_bound", result.stats.lower_bound},
                               {"upper_bound", result.stats.upper_bound},
                               {"multiplier", result.stats.multiplier}};
    write_file(ctx.ws.harvest_summary(), summary.dump(2) + "\n");

    io.out << "harvest: " << result.ingested << " records (" << result.rejects << " rejected), "
           << result.audit.size() << " excluded, " << result.corpus.size() << " posts kept\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// label

inline std::vector<jury::Juror> build_jurors(Context const& ctx)
{
    auto const& cfg = ctx.cfg;
    if (cfg.jurors.empty()) throw InputError("juror roster is empty");
    std::vector<jury::Juror> jurors;
    for (auto const& jc : cfg.jurors) {
        std::shared_ptr<jury::Provider> provider;
        if (ctx.opt.live) {
            if (jc.provider == "replay") {
                if (!cfg.replay_dir) throw InputError("juror " + jc.id + " uses replay but no replay directory is set");
                provider = std::make_shared<jury::ReplayProvider>(*cfg.replay_dir, jc.id);
            } else if (jc.provider == "openai") {
                provider = std::make_shared<http::ChatCompletionsProvider>(jc.id, jc.base_url, jc.model, jc.path);
            } else {
                throw InputError("unknown provider kind '" + jc.provider + "' for juror " + jc.id);
            }
        } else {
            if (!cfg.replay_dir) throw InputError("replay mode requires a replay directory (--replay-dir or --live)");
            provider = std::make_shared<jury::ReplayProvider>(*cfg.replay_dir, jc.id);
        }
        jurors.push_back({jc.id, std::move(provider)});
    }
    return jurors;
}

/// Final decisions of a stage with logged resolutions applied.
inline std::vector<jury::JuryDecision> final_decisions(Workspace const& ws, Stage stage)
{
    auto const log = load_adjudication_log(ws.adjudication_log());
    return jury::apply_resolutions(load_decisions(ws.decisions(stage)), log.escalations);
}

/// Posts eligible for `stage`, with the area hint for the prompt.
inline std::vector<corpus::BlogPost> stage_posts(Context const& ctx, Stage stage, taxonomy::Taxonomy const& tax,
                                                 std::map<std::int64_t, std::string>& area_hints)
{
    auto posts = corpus::load_corpus(ctx.ws.corpus());
    if (stage == Stage::area) return posts;

    if (!fs::exists(ctx.ws.decisions(Stage::area))) throw PreconditionError("run the area stage first");
    std::set<std::int64_t> eligible;
    for (auto const& d : final_decisions(ctx.ws, Stage::area)) {
        auto const labels = jury::finalize_labels(d, tax);
        if (labels.empty() || !report::scope_of_area(labels.front())) continue;
        eligible.insert(d.post_id);
        area_hints[d.post_id] = tax.display_name(labels.front(), Stage::area);
    }
    if (stage == Stage::task) {
        if (!fs::exists(ctx.ws.decisions(Stage::activity))) throw PreconditionError("run the activity stage first");
        std::set<std::int64_t> with_activity;
        for (auto const& d : final_decisions(ctx.ws, Stage::activity)) {
            auto const labels = jury::finalize_labels(d, tax);
            if (labels.empty() || (labels.size() == 1 && taxonomy::is_other(labels.front()))) continue;
            with_activity.insert(d.post_id);
        }
        std::erase_if(eligible, [&](std::int64_t id) { return !with_activity.count(id); });
    }
    std::erase_if(posts, [&](corpus::BlogPost const& p) { return !eligible.count(p.record_id); });
    return posts;
}

inline void record_proposals(Context const& ctx, taxonomy::Taxonomy const& tax, std::vector<taxonomy::Label> const& proposals)
{
    auto const log = load_adjudication_log(ctx.ws.adjudication_log());
    for (auto const& p : proposals) {
        auto existing = tax.find(p.name, p.kind);
        if (existing && existing->status != taxonomy::LabelStatus::ignored) continue;
        ProposalRecord rec{p.name, p.display, p.kind, log.last_sequence};
        append_line(ctx.ws.proposals(), json(rec).dump());
    }
}

inline int cmd_label(Context const& ctx, Io io)
{
    if (!ctx.opt.stage) throw InputError("--stage is required for label");
    Stage const stage = *ctx.opt.stage;
    auto const& cfg = ctx.cfg;
    if (!fs::exists(ctx.ws.corpus())) throw InputError("no corpus at " + ctx.ws.corpus().string() + "; run harvest");

    auto const tax = load_taxonomy(cfg, ctx.ws);
    auto pit = cfg.prompts.find(stage);
    if (pit == cfg.prompts.end()) throw InputError("no prompt configured for stage " + std::string(to_string(stage)));
    auto const spec = jury::load_prompt_spec(pit->second);
    if (spec.stage() != stage) throw InputError("prompt " + pit->second.string() + " is not for stage " + std::string(to_string(stage)));
    auto const version = spec.version_hash(tax.vocabulary(stage));
    auto ledger = agreement::load_ledger(ctx.ws.ledger(stage));

    jury::StageOptions options;
    options.max_in_flight = cfg.max_in_flight;
    options.collect.retries = cfg.retries;
    options.collect.warn = [&io](std::string const& msg) { io.err << "warning: " << msg << '\n'; };
    auto const jurors = build_jurors(ctx);

    if (ctx.opt.golden) {
        auto git = cfg.golden.find(stage);
        if (git == cfg.golden.end()) throw InputError("no golden set configured for stage " + std::string(to_string(stage)));
        std::ifstream gin(git->second);
        if (!gin) throw InputError("cannot open golden set " + git->second.string());
        auto golden = agreement::load_golden(gin);
        std::erase_if(golden, [&](agreement::GoldenItem const& g) { return g.stage != stage; });
        if (golden.empty()) throw InputError("golden set has no items for stage " + std::string(to_string(stage)));

        std::map<std::string, corpus::BlogPost> by_id;
        for (auto& p : corpus::load_corpus(ctx.ws.corpus())) by_id[std::to_string(p.record_id)] = std::move(p);
        std::vector<corpus::BlogPost> posts;
        for (auto const& g : golden) {
            auto it = by_id.find(g.item_id);
            if (it == by_id.end()) throw InputError("golden item " + g.item_id + " is not in the corpus");
            posts.push_back(it->second);
        }
        if (stage != Stage::area && fs::exists(ctx.ws.decisions(Stage::area))) {
            for (auto const& d : final_decisions(ctx.ws, Stage::area)) {
                auto const labels = jury::finalize_labels(d, tax);
                if (!labels.empty()) options.area_hints[d.post_id] = tax.display_name(labels.front(), Stage::area);
            }
        }

        auto const run = jury::run_stage(posts, jurors, spec, tax, options);
        auto const human = agreement::golden_ratings(golden);
        std::map<std::string, double> kappas;
        ordered_json doc;
        doc["stage"] = std::string(to_string(stage));
        doc["prompt_version"] = version;
        doc["items"] = golden.size();
        doc["jurors"] = ordered_json::object();
        for (auto const& j : jurors) {
            auto const r = agreement::cohen_kappa(human, agreement::juror_ratings(j.id, human, run.verdicts));
            kappas[j.id] = r.kappa;
            doc["jurors"][j.id] = ordered_json::parse(json(r).dump());
        }
        try {
            auto const r = agreement::evaluate_jury_vs_human(human, run.decisions);
            doc["jury"] = ordered_json::parse(json(r).dump());
        } catch (PreconditionError const& e) {
            doc["jury"] = nullptr;
            doc["jury_note"] = e.what();
        }
        auto const outcome = agreement::evaluate_gate(kappas, cfg.gate);
        doc["gate"] = ordered_json::parse(json(outcome).dump());
        write_file(ctx.ws.golden_report(stage), doc.dump(2) + "\n");
        write_file(ctx.ws.golden_verdicts(stage), to_jsonl(run.verdicts));

        io.out << "golden " << to_string(stage) << " prompt " << version << ":\n";
        for (auto const& [juror, k] : kappas) io.out << "  " << juror << " kappa=" << k << "\n";
        if (doc["jury"].is_object()) io.out << "  jury kappa=" << doc["jury"]["kappa"].get<double>() << "\n";
        io.out << "gate: " << (outcome.pass ? "pass" : "fail") << " (" << outcome.reason << ")\n";

        if (ledger.frozen_version() && *ledger.frozen_version() == version) {
            io.out << "prompt version " << version << " is already frozen\n";
            return kOk;
        }
        bool record = true;
        if (outcome.pass && !ctx.opt.yes) {
            io.out << "freeze prompt version " << version << "? [y/N] " << std::flush;
            std::string answer;
            std::getline(io.in, answer);
            record = !answer.empty() && (answer[0] == 'y' || answer[0] == 'Y');
        }
        if (record) {
            auto const& entry = ledger.record(version, kappas, outcome);
            append_line(ctx.ws.ledger(stage), json(entry).dump());
            if (ledger.frozen_version() && *ledger.frozen_version() == version) io.out << "frozen " << version << "\n";
        }
        return kOk;
    }

    ledger.require_frozen(version);
    auto const posts = stage_posts(ctx, stage, tax, options.area_hints);
    auto const run = jury::run_stage(posts, jurors, spec, tax, options);

    write_file(ctx.ws.verdicts(stage), to_jsonl(run.verdicts));
    write_file(ctx.ws.decisions(stage), to_jsonl(run.decisions));
    write_file(ctx.ws.escalations(stage), to_jsonl(run.escalations));
    write_file(ctx.ws.confidence(stage), json(run.stats).dump(2) + "\n");
    record_proposals(ctx, tax, run.proposals);

    io.out << "label " << to_string(stage) << ": " << run.decisions.size() << " decisions, " << run.escalations.size()
           << " escalated, " << run.abstentions() << " abstentions, " << run.proposals.size() << " proposals\n";

    if (ctx.opt.live) {
        for (auto const& d : run.decisions) {
            if (d.contributing.empty()) {
                throw ProviderExhausted("every juror abstained on post " + std::to_string(d.post_id));
            }
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// adjudicate

namespace detail {

inline std::vector<std::string> split_labels(std::string const& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!trim(item).empty()) out.push_back(trim(item));
    }
    return out;
}

} // namespace detail

inline int cmd_adjudicate(Context const& ctx, Io io)
{
    auto tax = load_taxonomy(ctx.cfg, ctx.ws);
    auto log = load_adjudication_log(ctx.ws.adjudication_log());
    std::uint64_t sequence = std::max(log.last_sequence, tax.last_sequence());
    std::size_t recorded = 0;

    struct Open {
        jury::EscalationEntry entry;
    };
    std::vector<Open> open;
    std::map<Stage, std::vector<jury::JuryDecision>> decisions;
    for (auto const stage : kAllStages) {
        decisions[stage] = final_decisions(ctx.ws, stage);
        if (!fs::exists(ctx.ws.escalations(stage))) continue;
        for (auto const& row : read_jsonl_file(ctx.ws.escalations(stage))) {
            auto entry = row.get<jury::EscalationEntry>();
            bool const still_open = std::any_of(decisions[stage].begin(), decisions[stage].end(), [&](auto const& d) {
                return d.post_id == entry.post_id && d.escalated;
            });
            if (still_open) open.push_back({std::move(entry)});
        }
    }
    std::vector<taxonomy::Label> pending;
    for (auto const stage : kAllStages) {
        for (auto& l : tax.pending(stage)) pending.push_back(std::move(l));
    }
    if (open.empty() && pending.empty()) {
        io.out << "nothing to adjudicate\n";
        return kOk;
    }

    bool eof = false;
    auto ask = [&](std::string const& prompt) -> std::optional<std::string> {
        io.out << prompt << std::flush;
        std::string line;
        if (!std::getline(io.in, line)) {
            eof = true;
            io.out << "\n";
            return std::nullopt;
        }
        return trim(line);
    };

    for (auto const& [entry] : open) {
        if (eof) break;
        io.out << "\nescalated " << to_string(entry.stage) << " decision for post " << entry.post_id << "\n";
        for (auto const& nv : entry.verdicts) {
            io.out << "  " << nv.verdict.juror_id << ": ";
            if (!nv.verdict.ok()) {
                io.out << "abstained\n";
                continue;
            }
            for (std::size_t i = 0; i < nv.verdict.labels.size(); ++i) {
                io.out << (i ? ", " : "") << tax.display_name(nv.verdict.labels[i], entry.stage);
            }
            io.out << " (confidence " << nv.verdict.raw_confidence << ", z " << nv.z << ") " << nv.verdict.rationale << "\n";
        }
        while (true) {
            auto answer = ask("label(s) for post " + std::to_string(entry.post_id) + " (comma-separated, blank to skip): ");
            if (!answer || answer->empty()) break;
            auto labels = detail::split_labels(*answer);
            std::string problem;
            if (entry.stage == Stage::area && labels.size() != 1) problem = "area decisions take exactly one label";
            for (auto const& l : labels) {
                if (problem.empty() && !tax.is_closed(l, entry.stage)) problem = "'" + l + "' is not a known label";
            }
            if (!problem.empty()) {
                io.out << "  " << problem << "; try again\n";
                continue;
            }
            jury::EscalationResolution res{entry.post_id, entry.stage, {}, ctx.opt.actor, ++sequence};
            for (auto const& l : labels) res.labels.push_back(taxonomy::canonicalize(l));
            append_line(ctx.ws.adjudication_log(), json(res).dump());
            auto& ds = decisions[entry.stage];
            ds = jury::apply_resolutions(ds, {res});
            write_file(ctx.ws.decisions(entry.stage), to_jsonl(ds));
            ++recorded;
            break;
        }
    }

    for (auto const& proposal : pending) {
        if (eof) break;
        io.out << "\nproposed " << to_string(proposal.kind) << " label '" << proposal.display << "'\n";
        if (fs::exists(ctx.ws.verdicts(proposal.kind))) {
            for (auto const& row : read_jsonl_file(ctx.ws.verdicts(proposal.kind))) {
                auto const v = row.get<jury::JurorVerdict>();
                bool const mentioned = std::any_of(v.proposed.begin(), v.proposed.end(), [&](std::string const& p) {
                    return taxonomy::canonicalize(p) == proposal.name;
                });
                if (mentioned) {
                    io.out << "  by " << v.juror_id << " on post " << v.post_id << "\n";
                }
            }
        }
        while (true) {
            auto answer = ask("[a]ccept, [r]eclassify <target>, [i]gnore, blank to skip: ");
            if (!answer || answer->empty()) break;
            taxonomy::AdjudicationDecision d{proposal.name, proposal.kind, taxonomy::Verdict::accept, std::nullopt,
                                             ctx.opt.actor, sequence + 1};
            char const c = static_cast<char>(std::tolower(static_cast<unsigned char>((*answer)[0])));
            if (c == 'a') {
                d.verdict = taxonomy::Verdict::accept;
            } else if (c == 'i') {
                d.verdict = taxonomy::Verdict::ignore;
            } else if (c == 'r') {
                d.verdict = taxonomy::Verdict::reclassify;
                auto const space = answer->find(' ');
                if (space == std::string::npos) {
                    io.out << "  reclassify needs a target label; try again\n";
                    continue;
                }
                d.target = trim(answer->substr(space + 1));
            } else {
                io.out << "  unrecognized answer; try again\n";
                continue;
            }
            try {
                taxonomy::Taxonomy trial = tax;
                auto const logged = trial.adjudicate(d);
                append_line(ctx.ws.adjudication_log(), json(logged).dump());
                tax = std::move(trial);
                sequence = logged.sequence;
                ++recorded;
                break;
            } catch (InputError const& e) {
                io.out << "  " << e.what() << "; try again\n";
            }
        }
    }

    io.out << "recorded " << recorded << " adjudication(s)\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// report

inline std::string utc_now()
{
    auto const now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline int cmd_report(Context const& ctx, Io io)
{
    auto const& ws = ctx.ws;
    if (!fs::exists(ws.corpus())) throw InputError("no corpus at " + ws.corpus().string());
    auto const area = final_decisions(ws, Stage::area);
    if (area.empty()) throw InputError("no decisions to report; run label first");
    auto const activity = final_decisions(ws, Stage::activity);
    auto const task = final_decisions(ws, Stage::task);
    auto const tax = load_taxonomy(ctx.cfg, ws);

    std::vector<std::string> open;
    for (auto const* ds : {&area, &activity, &task}) {
        for (auto const& d : *ds) {
            for (auto const& l : jury::finalize_labels(d, tax)) {
                if (!tax.is_closed(l, d.stage)) open.push_back(std::string(to_string(d.stage)) + ":" + l);
            }
        }
    }
    if (!open.empty()) {
        std::sort(open.begin(), open.end());
        open.erase(std::unique(open.begin(), open.end()), open.end());
        std::string msg = "decisions carry unadjudicated proposals:";
        for (auto const& o : open) msg += " " + o;
        throw PreconditionError(msg + " (run adjudicate)");
    }

    auto const corpus_posts = corpus::load_corpus(ws.corpus());
    auto const assembly = report::assemble(corpus_posts, area, activity, task, tax);

    fs::create_directories(ws.tables());
    std::size_t rows = 0;
    for (auto const scope : {report::Scope::FM4SE, report::Scope::SE4FM}) {
        for (auto const& [kind, table] : {std::pair{std::string("activity"), report::count_by_activity(assembly.posts, scope)},
                                         std::pair{std::string("task"), report::count_by_task(assembly.posts, scope)}}) {
            auto const stem = kind + "_" + std::string(report::to_string(scope));
            report::export_table(table, report::Format::csv, ws.tables() / (stem + ".csv"));
            report::export_table(table, report::Format::json, ws.tables() / (stem + ".json"));
            rows += table.rows.size();
        }
    }

    report::RunState state;
    state.corpus_digest = sha256_hex(read_file(ws.corpus()));
    for (auto const stage : kAllStages) {
        if (fs::exists(ws.verdicts(stage))) {
            auto const rows_v = read_jsonl_file(ws.verdicts(stage));
            if (!rows_v.empty()) state.prompt_versions[stage] = rows_v.front().value("prompt_version", "");
        }
        auto const ledger = agreement::load_ledger(ws.ledger(stage));
        if (ledger.frozen_version()) state.frozen_versions[stage] = *ledger.frozen_version();
    }
    for (auto const& j : ctx.cfg.jurors) state.roster.push_back({j.id, ctx.opt.live ? j.provider : "replay", j.model});
    state.config = ctx.cfg.raw;

    auto& counts = state.counts;
    if (fs::exists(ws.harvest_summary())) {
        auto const h = json::parse(read_file(ws.harvest_summary()));
        counts["ingested"] = h.value("ingested", std::size_t{0});
        counts["ingest_rejects"] = h.value("rejects", std::size_t{0});
    }
    if (fs::exists(ws.audit())) {
        std::size_t total = 0;
        for (auto const& row : read_jsonl_file(ws.audit())) {
            ++counts["excluded_" + row.at("reason").get<std::string>()];
            ++total;
        }
        counts["excluded_total"] = total;
    }
    counts["corpus"] = corpus_posts.size();
    for (auto const& [label, n] : assembly.area_counts) counts["area_" + label] = n;
    for (auto const& [stage, t] : assembly.tallies) {
        auto const prefix = std::string(to_string(stage)) + "_";
        counts[prefix + "decisions"] = t.decisions;
        counts[prefix + "escalated"] = t.escalated;
        counts[prefix + "human_resolved"] = t.human_resolved;
        counts[prefix + "other"] = t.other;
    }
    counts["labelled_FM4SE"] = static_cast<std::size_t>(std::count_if(
        assembly.posts.begin(), assembly.posts.end(), [](auto const& p) { return p.area == report::Scope::FM4SE; }));
    counts["labelled_SE4FM"] = assembly.posts.size() - counts["labelled_FM4SE"];
    counts["activity_other_excluded"] = assembly.activity_other;
    counts["table_rows"] = rows;
    state.generated_at = utc_now();

    write_file(ws.manifest(), report::run_manifest(state).dump(2) + "\n");
    io.out << "report: " << assembly.posts.size() << " labelled posts, " << rows << " table rows written to "
           << ws.tables().string() << "\n";
    return kOk;
}

// ---------------------------------------------------------------------------
// entry point

inline int run(int argc, char const* const* argv, Io io)
{
    CLI::App app{"blogjury: label a blog-post corpus with a jury of language models"};
    app.require_subcommand(1);
    app.fallthrough();
    Options opt;
    std::string stage;
    std::string actor = "human";
    std::size_t max_in_flight = 0;
    std::string replay_dir;
    std::string out_dir;
    app.add_option("--config", opt.config, "run configuration (JSON)")->required();
    app.add_option("--stage", stage, "labelling stage")->check(CLI::IsMember({"area", "activity", "task"}));
    app.add_flag("--golden", opt.golden, "run on the golden set and evaluate the agreement gate");
    app.add_flag("--live", opt.live, "use live HTTP fetchers and providers");
    app.add_flag("--yes", opt.yes, "freeze a passing prompt without asking");
    app.add_option("--replay-dir", replay_dir, "directory of canned juror responses");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--max-in-flight", max_in_flight, "concurrent requests")->check(CLI::PositiveNumber);
    app.add_option("--actor", actor, "who adjudicates")->check(CLI::IsMember({"human", "jury"}));

    auto* harvest = app.add_subcommand("harvest", "ingest, filter and download the corpus");
    auto* label = app.add_subcommand("label", "label one stage with the jury");
    auto* adjudicate = app.add_subcommand("adjudicate", "resolve escalations and label proposals");
    auto* report_cmd = app.add_subcommand("report", "write count tables and the run manifest");

    try {
        app.parse(argc, argv);
    } catch (CLI::ParseError const& e) {
        int const code = app.exit(e, io.out, io.err);
        return code == 0 ? kOk : kInputError;
    }
    if (!stage.empty()) opt.stage = parse_stage(stage);
    if (!replay_dir.empty()) opt.replay_dir = replay_dir;
    if (!out_dir.empty()) opt.out_dir = out_dir;
    if (max_in_flight > 0) opt.max_in_flight = max_in_flight;
    opt.actor = taxonomy::parse_actor(actor);

    try {
        auto const ctx = make_context(opt);
        if (harvest->parsed()) return cmd_harvest(ctx, io);
        if (label->parsed()) return cmd_label(ctx, io);
        if (adjudicate->parsed()) return cmd_adjudicate(ctx, io);
        if (report_cmd->parsed()) return cmd_report(ctx, io);
    } catch (InputError const& e) {
        io.err << "error: " << e.what() << '\n';
        return kInputError;
    } catch (PreconditionError const& e) {
        io.err << "error: " << e.what() << '\n';
        return kPrecondition;
    } catch (ProviderExhausted const& e) {
        io.err << "error: " << e.what() << '\n';
        return kProviderExhausted;
    } catch (std::exception const& e) {
        io.err << "error: " << e.what() << '\n';
        return 1;
    }
    return kInputError;
}

} // namespace blogjury::cli
