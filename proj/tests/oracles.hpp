#pragma once

// Brute-force reference implementations used only by tests. They are
// written independently of the library code paths they check.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace oracle {

/// Cohen's kappa from an explicit k x k confusion matrix over label indices.
inline double kappa(std::vector<int> const& a, std::vector<int> const& b, int categories)
{
    std::vector<std::vector<double>> m(categories, std::vector<double>(categories, 0.0));
    for (std::size_t i = 0; i < a.size(); ++i) m[a[i]][b[i]] += 1.0;
    double const n = static_cast<double>(a.size());
    double trace = 0;
    for (int i = 0; i < categories; ++i) trace += m[i][i];
    double pe_num = 0;
    for (int i = 0; i < categories; ++i) {
        double row = 0;
        double col = 0;
        for (int j = 0; j < categories; ++j) {
            row += m[i][j];
            col += m[j][i];
        }
        pe_num += row * col;
    }
    double const po = trace / n;
    double const pe = pe_num / (n * n);
    if (pe_num == n * n) return 1.0;
    return (po - pe) / (1.0 - pe);
}

/// Quartile via integer position arithmetic: (n-1)*p with p = num/4 split into
/// whole and remainder quarters.
inline double quartile(std::vector<std::size_t> values, int quarter)
{
    std::sort(values.begin(), values.end());
    std::size_t const scaled = (values.size() - 1) * static_cast<std::size_t>(quarter);
    std::size_t const whole = scaled / 4;
    std::size_t const rem = scaled % 4;
    if (rem == 0) return static_cast<double>(values[whole]);
    double const lo = static_cast<double>(values[whole]);
    double const hi = static_cast<double>(values[whole + 1]);
    return lo + (hi - lo) * static_cast<double>(rem) / 4.0;
}

/// Indices of values kept by the 1.5-style IQR rule with multiplier m.
inline std::vector<std::size_t> iqr_kept(std::vector<std::size_t> const& values, double m)
{
    double const q1 = quartile(values, 1);
    double const q3 = quartile(values, 3);
    double const lo = q1 - m * (q3 - q1);
    double const hi = q3 + m * (q3 - q1);
    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double const v = static_cast<double>(values[i]);
        if (!(v < lo) && !(v > hi)) kept.push_back(i);
    }
    return kept;
}

struct SingleVote {
    std::string label;
    double z;
};

struct VoteResult {
    std::optional<std::string> label; // nullopt = escalated
    bool tie_broken = false;
};

/// Plurality by enumeration: walk jurors from highest to lowest z and take
/// the first one whose label has the maximal vote count. If another voter of
/// a different maximal label has the same z, the tie is unresolvable.
inline VoteResult plurality(std::vector<SingleVote> votes, double eps = 1e-9)
{
    if (votes.empty()) return {};
    std::map<std::string, int> count;
    for (auto const& v : votes) ++count[v.label];
    int top = 0;
    for (auto const& [l, c] : count) top = std::max(top, c);
    std::set<std::string> tied;
    for (auto const& [l, c] : count) {
        if (c == top) tied.insert(l);
    }
    if (tied.size() == 1) return {*tied.begin(), false};

    std::stable_sort(votes.begin(), votes.end(), [](auto const& a, auto const& b) { return a.z > b.z; });
    for (std::size_t i = 0; i < votes.size(); ++i) {
        if (!tied.count(votes[i].label)) continue;
        for (std::size_t j = 0; j < votes.size(); ++j) {
            if (j != i && tied.count(votes[j].label) && votes[j].label != votes[i].label &&
                std::abs(votes[j].z - votes[i].z) <= eps) {
                return {};
            }
        }
        return {votes[i].label, true};
    }
    return {};
}

/// Distinct companies per label by direct set construction.
inline std::map<std::string, std::pair<std::size_t, std::size_t>>
count_posts_and_companies(std::vector<std::pair<std::string, std::set<std::string>>> const& posts)
{
    std::map<std::string, std::pair<std::size_t, std::set<std::string>>> acc;
    for (auto const& [company, labels] : posts) {
        for (auto const& l : labels) {
            acc[l].first += 1;
            acc[l].second.insert(company);
        }
    }
    std::map<std::string, std::pair<std::size_t, std::size_t>> out;
    for (auto const& [l, v] : acc) out[l] = {v.first, v.second.size()};
    return out;
}

} // namespace oracle
