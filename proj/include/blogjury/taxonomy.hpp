#pragma once

// Label vocabularies per labelling stage and the lifecycle of labels that
// jurors propose outside the vocabulary (accept, reclassify, ignore).

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "blogjury/common.hpp"

namespace blogjury::taxonomy {

using LabelKind = Stage;

enum class LabelStatus { predefined, proposed, accepted, ignored };
enum class Verdict { accept, reclassify, ignore };
enum class Actor { human, jury };

inline std::string_view to_string(LabelStatus s)
{
    switch (s) {
    case LabelStatus::predefined: return "predefined";
    case LabelStatus::proposed: return "proposed";
    case LabelStatus::accepted: return "accepted";
    case LabelStatus::ignored: return "ignored";
    }
    return "?";
}

inline std::string_view to_string(Verdict v)
{
    switch (v) {
    case Verdict::accept: return "accept";
    case Verdict::reclassify: return "reclassify";
    case Verdict::ignore: return "ignore";
    }
    return "?";
}

inline Verdict parse_verdict(std::string_view s)
{
    if (s == "accept") return Verdict::accept;
    if (s == "reclassify") return Verdict::reclassify;
    if (s == "ignore") return Verdict::ignore;
    throw InputError("unknown adjudication verdict '" + std::string(s) + "'");
}

inline std::string_view to_string(Actor a) { return a == Actor::human ? "human" : "jury"; }

inline Actor parse_actor(std::string_view s)
{
    if (s == "human") return Actor::human;
    if (s == "jury") return Actor::jury;
    throw InputError("unknown actor '" + std::string(s) + "'");
}

/// Sentinel for posts where the jury found no applicable label.
inline constexpr std::string_view kOther = "Other";

/// Trim, collapse internal whitespace runs to one space, ASCII case-fold.
inline std::string canonicalize(std::string_view raw)
{
    std::string out;
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(std::tolower(c));
    }
    return out;
}

/// Like canonicalize but keeps the original letter case; used for display.
inline std::string tidy(std::string_view raw)
{
    std::string out;
    bool pending_space = false;
    for (unsigned char c : raw) {
        if (std::isspace(c)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out += ' ';
            pending_space = false;
        }
        out += static_cast<char>(c);
    }
    return out;
}

/// `name` is the canonical key used for matching; `display` keeps the
/// spelling from the vocabulary file (e.g. "FM4SE") for prompts and tables.
struct Label {
    std::string name;
    std::string display;
    LabelKind kind = LabelKind::area;
    LabelStatus status = LabelStatus::predefined;
    std::optional<std::string> maps_to;

    bool in_vocabulary() const
    {
        return status == LabelStatus::predefined || (status == LabelStatus::accepted && !maps_to);
    }
};

inline Label other_label(LabelKind kind)
{
    return Label{canonicalize(kOther), std::string(kOther), kind, LabelStatus::predefined, std::nullopt};
}

inline bool is_other(std::string_view name) { return canonicalize(name) == canonicalize(kOther); }

struct AdjudicationDecision {
    std::string proposal;
    LabelKind kind = LabelKind::task;
    Verdict verdict = Verdict::accept;
    std::optional<std::string> target;
    Actor actor = Actor::human;
    std::uint64_t sequence = 0;
};

inline void to_json(json& j, AdjudicationDecision const& d)
{
    j = json{{"type", "proposal"},
             {"sequence", d.sequence},
             {"proposal", d.proposal},
             {"kind", d.kind},
             {"verdict", std::string(to_string(d.verdict))},
             {"actor", std::string(to_string(d.actor))}};
    j["target"] = d.target ? json(*d.target) : json(nullptr);
}

inline void from_json(json const& j, AdjudicationDecision& d)
{
    d.proposal = j.at("proposal").get<std::string>();
    d.kind = j.at("kind").get<Stage>();
    d.verdict = parse_verdict(j.at("verdict").get<std::string>());
    d.actor = parse_actor(j.value("actor", "human"));
    d.sequence = j.value("sequence", std::uint64_t{0});
    auto it = j.find("target");
    d.target = (it != j.end() && it->is_string()) ? std::optional(it->get<std::string>()) : std::nullopt;
}

inline std::set<std::string> const& area_vocabulary_keys()
{
    static std::set<std::string> const keys{"fm4se", "se4fm", "unrelated"};
    return keys;
}

/// One label per line; blank lines and lines starting with '#' are skipped.
/// The result is canonicalized and de-duplicated in first-seen order.
inline std::vector<Label> load_vocabulary(LabelKind kind, std::istream& in)
{
    std::vector<Label> labels;
    std::set<std::string> seen;
    std::string line;
    while (std::getline(in, line)) {
        std::string const shown = tidy(line);
        if (shown.empty() || shown.front() == '#') continue;
        std::string key = canonicalize(shown);
        if (!seen.insert(key).second) continue;
        labels.push_back(Label{std::move(key), shown, kind, LabelStatus::predefined, std::nullopt});
    }
    if (labels.empty()) throw InputError("empty vocabulary");
    if (kind == LabelKind::area && seen != area_vocabulary_keys()) {
        throw InputError("area vocabulary must be exactly {FM4SE, SE4FM, unrelated}");
    }
    return labels;
}

inline std::vector<Label> load_vocabulary_file(LabelKind kind, std::filesystem::path const& path)
{
    std::ifstream in(path);
    if (!in) throw InputError("cannot open vocabulary " + path.string());
    return load_vocabulary(kind, in);
}

/// Vocabulary plus proposal state for all three stages. Adjudications are
/// applied by a single writer in sequence order.
class Taxonomy {
public:
    void add_vocabulary(std::vector<Label> const& labels)
    {
        for (auto const& l : labels) {
            auto& entries = entries_[l.kind];
            if (entries.count(l.name)) continue;
            Label stored = l;
            stored.status = LabelStatus::predefined;
            stored.maps_to.reset();
            order_[l.kind].push_back(l.name);
            entries.emplace(l.name, std::move(stored));
        }
    }

    /// Predefined and accepted labels, in load order then acceptance order.
    std::vector<Label> vocabulary(LabelKind kind) const
    {
        std::vector<Label> out;
        auto e = entries_.find(kind);
        auto o = order_.find(kind);
        if (e == entries_.end() || o == order_.end()) return out;
        for (auto const& name : o->second) {
            auto const& l = e->second.at(name);
            if (l.in_vocabulary()) out.push_back(l);
        }
        return out;
    }

    std::optional<Label> find(std::string_view raw, LabelKind kind) const
    {
        auto e = entries_.find(kind);
        if (e == entries_.end()) return std::nullopt;
        auto it = e->second.find(canonicalize(raw));
        if (it == e->second.end()) return std::nullopt;
        return it->second;
    }

    /// Vocabulary match, reclassification target, or a fresh proposal.
    Label resolve(std::string_view raw, LabelKind kind) const
    {
        std::string const key = canonicalize(raw);
        if (key == canonicalize(kOther)) return other_label(kind);
        if (auto hit = find(key, kind)) {
            if (hit->in_vocabulary()) return *hit;
            if (hit->maps_to) {
                if (auto target = find(*hit->maps_to, kind)) return *target;
            }
        }
        return Label{key, tidy(raw), kind, LabelStatus::proposed, std::nullopt};
    }

    /// Records a juror proposal as pending. Re-proposing an ignored label
    /// reopens it; labels that are already resolved are left alone.
    void register_proposal(Label const& proposal)
    {
        if (proposal.status != LabelStatus::proposed) return;
        auto& entries = entries_[proposal.kind];
        auto it = entries.find(proposal.name);
        if (it == entries.end()) {
            order_[proposal.kind].push_back(proposal.name);
            entries.emplace(proposal.name, proposal);
        } else if (it->second.status == LabelStatus::ignored) {
            it->second.status = LabelStatus::proposed;
        }
    }

    std::vector<Label> pending(LabelKind kind) const
    {
        std::vector<Label> out;
        auto e = entries_.find(kind);
        auto o = order_.find(kind);
        if (e == entries_.end() || o == order_.end()) return out;
        for (auto const& name : o->second) {
            if (e->second.at(name).status == LabelStatus::proposed) out.push_back(e->second.at(name));
        }
        return out;
    }

    /// Applies one decision and appends it to the log. Returns the logged
    /// decision with its sequence number filled in.
    AdjudicationDecision adjudicate(AdjudicationDecision decision)
    {
        std::string const key = canonicalize(decision.proposal);
        auto& entries = entries_[decision.kind];
        auto it = entries.find(key);
        if (it == entries.end() || it->second.status != LabelStatus::proposed) {
            throw PreconditionError("'" + decision.proposal + "' is not a pending " +
                                    std::string(blogjury::to_string(decision.kind)) + " proposal");
        }
        Label& label = it->second;
        switch (decision.verdict) {
        case Verdict::accept:
            label.status = LabelStatus::accepted;
            label.maps_to.reset();
            decision.target.reset();
            break;
        case Verdict::reclassify: {
            if (!decision.target) throw InputError("reclassify requires a target label");
            auto target = find(*decision.target, decision.kind);
            if (!target || !target->in_vocabulary() || target->name == key) {
                throw InputError("reclassify target '" + *decision.target + "' is not a " +
                                 std::string(blogjury::to_string(decision.kind)) + " label");
            }
            label.status = LabelStatus::accepted;
            label.maps_to = target->name;
            decision.target = target->name;
            break;
        }
        case Verdict::ignore:
            label.status = LabelStatus::ignored;
            label.maps_to.reset();
            decision.target.reset();
            break;
        }
        decision.proposal = key;
        if (decision.sequence <= last_sequence_) decision.sequence = last_sequence_ + 1;
        last_sequence_ = decision.sequence;
        log_.push_back(decision);
        return decision;
    }

    std::vector<AdjudicationDecision> const& log() const { return log_; }
    std::uint64_t last_sequence() const { return last_sequence_; }

    /// Rewrites juror/decision labels through the adjudication state:
    /// reclassified proposals become their target, ignored ones are dropped,
    /// everything else passes through. Order is kept, duplicates removed.
    std::vector<std::string> map_labels(std::vector<std::string> const& labels, LabelKind kind) const
    {
        std::vector<std::string> out;
        std::set<std::string> seen;
        for (auto const& raw : labels) {
            std::string name = canonicalize(raw);
            if (auto hit = find(name, kind)) {
                if (hit->status == LabelStatus::ignored) continue;
                if (hit->maps_to) name = *hit->maps_to;
            }
            if (seen.insert(name).second) out.push_back(name);
        }
        return out;
    }

    /// True when the label may appear on a final decision.
    bool is_closed(std::string_view raw, LabelKind kind) const
    {
        if (is_other(raw)) return true;
        auto hit = find(raw, kind);
        return hit && hit->in_vocabulary();
    }

    std::string display_name(std::string_view raw, LabelKind kind) const
    {
        if (is_other(raw)) return std::string(kOther);
        auto hit = find(raw, kind);
        return hit ? hit->display : std::string(raw);
    }

    /// Applies a logged decision during replay, registering the proposal
    /// first so the log is self-contained.
    void apply_logged(AdjudicationDecision const& decision)
    {
        std::string const key = canonicalize(decision.proposal);
        register_proposal(Label{key, tidy(decision.proposal), decision.kind, LabelStatus::proposed, std::nullopt});
        adjudicate(decision);
    }

    static Taxonomy replay(Taxonomy initial, std::vector<AdjudicationDecision> const& log)
    {
        for (auto const& d : log) initial.apply_logged(d);
        return initial;
    }

    friend bool operator==(Taxonomy const& a, Taxonomy const& b)
    {
        auto key = [](Taxonomy const& t) {
            std::vector<std::tuple<int, std::string, std::string, int, std::string>> rows;
            for (auto const& [kind, entries] : t.entries_) {
                for (auto const& [name, l] : entries) {
                    rows.emplace_back(static_cast<int>(kind), name, l.display, static_cast<int>(l.status),
                                      l.maps_to.value_or(""));
                }
            }
            return rows;
        };
        return key(a) == key(b) && a.order_ == b.order_;
    }

private:
    std::map<LabelKind, std::map<std::string, Label>> entries_;
    std::map<LabelKind, std::vector<std::string>> order_;
    std::vector<AdjudicationDecision> log_;
    std::uint64_t last_sequence_ = 0;
};

} // namespace blogjury::taxonomy
