#pragma once

// Inter-rater agreement (unweighted Cohen's kappa), the prompt acceptance
// gate and the iterate-then-freeze ledger of prompt versions.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "blogjury/common.hpp"
#include "blogjury/jury.hpp"

namespace blogjury::agreement {

struct RatingVector {
    std::string rater_id;
    std::vector<std::pair<std::string, std::string>> ratings; // (item id, label)
};

struct AgreementReport {
    std::string rater_a;
    std::string rater_b;
    double observed_agreement = 0;
    double expected_agreement = 0;
    double kappa = 0;
    std::size_t n_items = 0;
    bool degenerate = false; // expected agreement was 1
};

inline void to_json(json& j, AgreementReport const& r)
{
    j = json{{"rater_a", r.rater_a},
             {"rater_b", r.rater_b},
             {"observed_agreement", r.observed_agreement},
             {"expected_agreement", r.expected_agreement},
             {"kappa", r.kappa},
             {"n_items", r.n_items},
             {"degenerate", r.degenerate}};
}

namespace detail {

inline std::map<std::string, std::string> index_ratings(RatingVector const& v)
{
    std::map<std::string, std::string> out;
    for (auto const& [item, label] : v.ratings) {
        if (!out.emplace(item, label).second) {
            throw InputError("rater " + v.rater_id + " rates item '" + item + "' more than once");
        }
    }
    return out;
}

} // namespace detail

/// kappa = (p_o - p_e) / (1 - p_e). When both raters use one and the same
/// label throughout, p_e = 1 and kappa is 1 (perfect agreement) by
/// convention; the report is flagged degenerate.
inline AgreementReport cohen_kappa(RatingVector const& a, RatingVector const& b)
{
    auto const ia = detail::index_ratings(a);
    auto const ib = detail::index_ratings(b);

    std::vector<std::string> diff;
    for (auto const& [item, _] : ia) {
        if (!ib.count(item)) diff.push_back(item);
    }
    for (auto const& [item, _] : ib) {
        if (!ia.count(item)) diff.push_back(item);
    }
    if (!diff.empty()) {
        std::string msg = "item sets differ between " + a.rater_id + " and " + b.rater_id + ":";
        for (auto const& d : diff) msg += " " + d;
        throw InputError(msg);
    }
    if (ia.empty()) throw InputError("cannot compute kappa over zero items");

    std::size_t agree = 0;
    std::map<std::string, std::size_t> marginal_a;
    std::map<std::string, std::size_t> marginal_b;
    for (auto const& [item, la] : ia) {
        auto const& lb = ib.at(item);
        if (la == lb) ++agree;
        ++marginal_a[la];
        ++marginal_b[lb];
    }
    std::size_t chance = 0; // sum of marginal products, in item^2 units
    for (auto const& [label, na] : marginal_a) {
        if (auto it = marginal_b.find(label); it != marginal_b.end()) chance += na * it->second;
    }

    AgreementReport r;
    r.rater_a = a.rater_id;
    r.rater_b = b.rater_id;
    r.n_items = ia.size();
    auto const n = static_cast<double>(r.n_items);
    r.observed_agreement = static_cast<double>(agree) / n;
    r.expected_agreement = static_cast<double>(chance) / (n * n);
    if (chance == r.n_items * r.n_items) {
        r.degenerate = true;
        r.kappa = agree == r.n_items ? 1.0 : 0.0;
    } else {
        r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
    }
    return r;
}

using KappaMatrix = std::vector<std::vector<double>>;

inline KappaMatrix pairwise_kappa_matrix(std::vector<RatingVector> const& raters)
{
    if (raters.size() < 2) throw InputError("pairwise kappa needs at least two raters");
    KappaMatrix m(raters.size(), std::vector<double>(raters.size(), 1.0));
    for (std::size_t i = 0; i < raters.size(); ++i) {
        for (std::size_t j = i + 1; j < raters.size(); ++j) {
            m[i][j] = m[j][i] = cohen_kappa(raters[i], raters[j]).kappa;
        }
    }
    return m;
}

// ---------------------------------------------------------------------------
// gate

struct GateConfig {
    double excellent_threshold = 0.78;   // at least one juror strictly above
    double substantial_threshold = 0.63; // every juror at or above

    void validate() const
    {
        if (!(0 < substantial_threshold && substantial_threshold <= excellent_threshold && excellent_threshold < 1)) {
            throw InputError("gate thresholds must satisfy 0 < substantial <= excellent < 1");
        }
    }
};

struct GateOutcome {
    bool pass = false;
    std::string reason;
    std::vector<std::string> offenders;
};

inline void to_json(json& j, GateOutcome const& g)
{
    j = json{{"pass", g.pass}, {"reason", g.reason}, {"offenders", g.offenders}};
}

namespace detail {

inline std::string format_threshold(double t)
{
    std::ostringstream os;
    os << t;
    return os.str();
}

} // namespace detail

inline GateOutcome evaluate_gate(std::map<std::string, double> const& juror_kappas, GateConfig const& cfg = {})
{
    cfg.validate();
    GateOutcome out;
    if (juror_kappas.empty()) {
        out.reason = "no juror kappas";
        return out;
    }
    bool any_excellent = false;
    for (auto const& [juror, kappa] : juror_kappas) {
        if (kappa > cfg.excellent_threshold) any_excellent = true;
        if (kappa < cfg.substantial_threshold) out.offenders.push_back(juror);
    }
    std::vector<std::string> reasons;
    if (!any_excellent) reasons.push_back("no juror exceeds " + detail::format_threshold(cfg.excellent_threshold));
    if (!out.offenders.empty()) {
        std::string r = "below " + detail::format_threshold(cfg.substantial_threshold) + ":";
        for (auto const& o : out.offenders) r += " " + o;
        reasons.push_back(r);
    }
    out.pass = reasons.empty();
    out.reason = out.pass ? "pass" : reasons.front();
    for (std::size_t i = 1; i < reasons.size(); ++i) out.reason += "; " + reasons[i];
    return out;
}

// ---------------------------------------------------------------------------
// golden set

/// One golden item: the human label(s) for an item at one stage.
struct GoldenItem {
    std::string item_id;
    Stage stage = Stage::area;
    std::vector<std::string> human_labels;
};

/// Reads {item_id, stage, human_label | human_labels}.
inline std::vector<GoldenItem> load_golden(std::istream& in)
{
    std::vector<GoldenItem> out;
    for (auto const& row : read_jsonl(in, "golden set")) {
        GoldenItem g;
        auto const& id = row.at("item_id");
        g.item_id = id.is_string() ? id.get<std::string>() : id.dump();
        g.stage = row.at("stage").get<Stage>();
        if (row.contains("human_labels")) {
            g.human_labels = row.at("human_labels").get<std::vector<std::string>>();
        } else {
            g.human_labels = {row.at("human_label").get<std::string>()};
        }
        if (g.human_labels.empty()) throw InputError("golden item " + g.item_id + " has no human label");
        out.push_back(std::move(g));
    }
    return out;
}

/// Label sets compare as categories: the key is the sorted, canonical set.
inline std::string set_category(std::vector<std::string> const& labels)
{
    std::set<std::string> s;
    for (auto const& l : labels) s.insert(taxonomy::canonicalize(l));
    std::string key;
    for (auto const& l : s) {
        if (!key.empty()) key += " | ";
        key += l;
    }
    return key;
}

inline RatingVector golden_ratings(std::vector<GoldenItem> const& golden, std::string rater_id = "human")
{
    RatingVector v{std::move(rater_id), {}};
    for (auto const& g : golden) v.ratings.emplace_back(g.item_id, set_category(g.human_labels));
    return v;
}

/// Agreement between merged jury labels and human labels over the golden
/// items. Multi-label stages compare exact label sets.
inline AgreementReport evaluate_jury_vs_human(RatingVector const& golden, std::vector<jury::JuryDecision> const& decisions)
{
    std::map<std::string, jury::JuryDecision const*> by_item;
    for (auto const& d : decisions) by_item[std::to_string(d.post_id)] = &d;

    RatingVector jury_vec{"jury", {}};
    std::vector<std::string> unresolved;
    for (auto const& [item, _] : golden.ratings) {
        auto it = by_item.find(item);
        if (it == by_item.end() || it->second->escalated) {
            unresolved.push_back(item);
            continue;
        }
        jury_vec.ratings.emplace_back(item, set_category(it->second->labels));
    }
    if (!unresolved.empty()) {
        std::string msg = "golden items without a resolved jury decision:";
        for (auto const& u : unresolved) msg += " " + u;
        throw PreconditionError(msg);
    }
    return cohen_kappa(golden, jury_vec);
}

/// Per-juror ratings over the golden items. Abstentions become their own
/// category, which always disagrees with the human label.
inline RatingVector juror_ratings(std::string const& juror_id, RatingVector const& golden,
                                  std::vector<jury::JurorVerdict> const& verdicts)
{
    std::map<std::string, jury::JurorVerdict const*> by_item;
    for (auto const& v : verdicts) {
        if (v.juror_id == juror_id) by_item[std::to_string(v.post_id)] = &v;
    }
    RatingVector out{juror_id, {}};
    for (auto const& [item, _] : golden.ratings) {
        auto it = by_item.find(item);
        bool const ok = it != by_item.end() && it->second->ok();
        out.ratings.emplace_back(item, ok ? set_category(it->second->labels) : std::string("<abstained>"));
    }
    return out;
}

// ---------------------------------------------------------------------------
// iteration ledger

struct LedgerEntry {
    std::string version;
    std::map<std::string, double> kappas;
    GateOutcome outcome;
    std::uint64_t sequence = 0;
};

inline void to_json(json& j, LedgerEntry const& e)
{
    j = json{{"sequence", e.sequence}, {"version", e.version}, {"kappas", e.kappas}, {"outcome", e.outcome}};
}

inline void from_json(json const& j, LedgerEntry& e)
{
    e.sequence = j.at("sequence").get<std::uint64_t>();
    e.version = j.at("version").get<std::string>();
    e.kappas = j.value("kappas", std::map<std::string, double>{});
    auto const& o = j.at("outcome");
    e.outcome.pass = o.value("pass", false);
    e.outcome.reason = o.value("reason", "");
    e.outcome.offenders = o.value("offenders", std::vector<std::string>{});
}

/// Append-only record of gate evaluations. The first passing version is
/// frozen and stays frozen.
class IterationLedger {
public:
    IterationLedger() = default;

    explicit IterationLedger(std::vector<LedgerEntry> const& entries)
    {
        for (auto const& e : entries) append(e);
    }

    LedgerEntry const& record(std::string const& version, std::map<std::string, double> const& kappas,
                              GateOutcome const& outcome)
    {
        if (frozen_ && *frozen_ == version) throw PreconditionError("prompt version " + version + " is already frozen");
        return append(LedgerEntry{version, kappas, outcome, entries_.size() + 1});
    }

    std::optional<std::string> const& frozen_version() const { return frozen_; }
    std::vector<LedgerEntry> const& entries() const { return entries_; }

    /// Throws unless `version` is the frozen one.
    void require_frozen(std::string const& version) const
    {
        if (!frozen_ || *frozen_ != version) {
            throw PreconditionError("prompt not frozen: version " + version +
                                    (frozen_ ? " differs from frozen " + *frozen_ : std::string(" (no frozen version)")));
        }
    }

private:
    LedgerEntry const& append(LedgerEntry e)
    {
        if (!frozen_ && e.outcome.pass) frozen_ = e.version;
        entries_.push_back(std::move(e));
        return entries_.back();
    }

    std::vector<LedgerEntry> entries_;
    std::optional<std::string> frozen_;
};

/// Free-function form: returns the ledger with the entry appended.
inline IterationLedger record_iteration(std::string const& version, std::map<std::string, double> const& kappas,
                                        GateOutcome const& outcome, IterationLedger ledger)
{
    ledger.record(version, kappas, outcome);
    return ledger;
}

inline IterationLedger load_ledger(std::filesystem::path const& path)
{
    if (!std::filesystem::exists(path)) return {};
    std::vector<LedgerEntry> entries;
    for (auto const& row : read_jsonl_file(path)) entries.push_back(row.get<LedgerEntry>());
    return IterationLedger(entries);
}

} // namespace blogjury::agreement
