#pragma once

// Labeling from detection counts, epsilon-neighborhood deduplication,
// per-month sampling into train/test, and cross-validation folds.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"

namespace apkbench {

// ---------------------------------------------------------------------------
// Labeling

struct LabelingPolicy {
    int goodware_max_vtd = 0;
    int malware_min_vtd = 7;

    void validate() const
    {
        if (goodware_max_vtd < 0 || goodware_max_vtd >= malware_min_vtd) {
            throw ValidationError("labeling policy: need 0 <= goodware_max_vtd < malware_min_vtd, got (" +
                                  std::to_string(goodware_max_vtd) + ", " + std::to_string(malware_min_vtd) + ")");
        }
    }
};

inline ClassLabel label(int vtd, const LabelingPolicy& p)
{
    if (vtd <= p.goodware_max_vtd) {
        return ClassLabel::goodware;
    }
    if (vtd >= p.malware_min_vtd) {
        return ClassLabel::malware;
    }
    return ClassLabel::greyware;
}

inline std::vector<ClassLabel> label(std::span<const AppRecord> records, const LabelingPolicy& p)
{
    p.validate();
    std::vector<ClassLabel> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        out.push_back(label(r.vtd, p));
    }
    return out;
}

/// Rows/columns in goodware, greyware, malware order.
using SwapMatrix = std::array<std::array<std::size_t, 3>, 3>;

inline std::size_t swap_index(ClassLabel c)
{
    return c == ClassLabel::goodware ? 0 : c == ClassLabel::greyware ? 1 : 2;
}

inline SwapMatrix label_swap_matrix(const std::map<std::string, ClassLabel>& a,
                                    const std::map<std::string, ClassLabel>& b)
{
    if (a.size() != b.size()) {
        throw ValidationError("label swap: id universes differ in size (" + std::to_string(a.size()) + " vs " +
                              std::to_string(b.size()) + ")");
    }
    SwapMatrix m{};
    for (const auto& [id, la] : a) {
        const auto it = b.find(id);
        if (it == b.end()) {
            throw ValidationError("label swap: id '" + id + "' missing from the second labeling");
        }
        ++m[swap_index(la)][swap_index(it->second)];
    }
    return m;
}

// ---------------------------------------------------------------------------
// Deduplication

struct DedupConfig {
    double epsilon = 0.0;
    std::uint64_t seed = 1;

    void validate() const
    {
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) {
            throw ValidationError("dedup: epsilon must be a finite value >= 0");
        }
    }
};

struct DedupGroup {
    std::string representative;
    std::vector<std::string> members; // sorted, includes the representative
};

struct DedupResult {
    std::vector<AppRecord> kept; // input order
    std::vector<DedupGroup> groups;
};

namespace dedup_detail {

using SparseCounts = std::vector<std::pair<std::uint32_t, std::int64_t>>;

inline std::int64_t squared_distance(const SparseCounts& a, const SparseCounts& b)
{
    std::int64_t d = 0;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        if (j == b.size() || (i < a.size() && a[i].first < b[j].first)) {
            d += a[i].second * a[i].second;
            ++i;
        }
        else if (i == a.size() || b[j].first < a[i].first) {
            d += b[j].second * b[j].second;
            ++j;
        }
        else {
            const auto x = a[i].second - b[j].second;
            d += x * x;
            ++i;
            ++j;
        }
    }
    return d;
}

} // namespace dedup_detail

/// Random-order epsilon-net within each class: each surviving record in turn
/// becomes a representative and absorbs the unabsorbed records within
/// Euclidean distance epsilon of its API-call count vector.
inline DedupResult dedup(std::span<const AppRecord> records, std::span<const ClassLabel> labels,
                         const DedupConfig& cfg)
{
    using namespace dedup_detail;
    cfg.validate();
    if (records.empty()) {
        throw ValidationError("dedup: empty input");
    }
    if (labels.size() != records.size()) {
        throw ValidationError("dedup: label count does not match record count");
    }
    std::map<std::string, std::uint32_t> dims;
    for (const auto& r : records) {
        for (const auto& [api, n] : r.api_calls) {
            dims.emplace(api, 0);
        }
    }
    std::uint32_t next = 0;
    for (auto& [api, d] : dims) {
        d = next++;
    }
    std::vector<SparseCounts> vecs(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        for (const auto& [api, n] : records[i].api_calls) {
            vecs[i].emplace_back(dims.at(api), static_cast<std::int64_t>(n));
        }
    }

    std::vector<bool> keep(records.size(), false);
    DedupResult res;
    for (auto cls : {ClassLabel::goodware, ClassLabel::greyware, ClassLabel::malware}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < records.size(); ++i) {
            if (labels[i] == cls) {
                idx.push_back(i);
            }
        }
        // canonical order first so the permutation depends only on the seed and ids
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
        Rng rng(derive_seed(cfg.seed, "dedup:" + std::string(to_string(cls))));
        rng.shuffle(idx);

        std::vector<bool> absorbed(idx.size(), false);
        if (cfg.epsilon == 0.0) {
            std::map<SparseCounts, std::size_t> first;
            std::map<std::size_t, std::vector<std::size_t>> members;
            for (std::size_t p = 0; p < idx.size(); ++p) {
                const auto [it, fresh] = first.emplace(vecs[idx[p]], p);
                members[it->second].push_back(p);
            }
            for (std::size_t p = 0; p < idx.size(); ++p) {
                if (const auto m = members.find(p); m != members.end()) {
                    DedupGroup g{records[idx[p]].id, {}};
                    for (auto q : m->second) {
                        g.members.push_back(records[idx[q]].id);
                    }
                    std::sort(g.members.begin(), g.members.end());
                    keep[idx[p]] = true;
                    res.groups.push_back(std::move(g));
                }
            }
            continue;
        }
        const double eps2 = cfg.epsilon * cfg.epsilon;
        for (std::size_t p = 0; p < idx.size(); ++p) {
            if (absorbed[p]) {
                continue;
            }
            keep[idx[p]] = true;
            const std::size_t rest = idx.size() - p - 1;
            std::vector<char> near(rest, 0);
            parallel_for(rest, [&](std::size_t k) {
                const std::size_t q = p + 1 + k;
                if (!absorbed[q] && static_cast<double>(squared_distance(vecs[idx[p]], vecs[idx[q]])) <= eps2) {
                    near[k] = 1;
                }
            });
            DedupGroup g{records[idx[p]].id, {records[idx[p]].id}};
            for (std::size_t k = 0; k < rest; ++k) {
                if (near[k]) {
                    absorbed[p + 1 + k] = true;
                    g.members.push_back(records[idx[p + 1 + k]].id);
                }
            }
            std::sort(g.members.begin(), g.members.end());
            res.groups.push_back(std::move(g));
        }
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (keep[i]) {
            res.kept.push_back(records[i]);
        }
    }
    std::sort(res.groups.begin(), res.groups.end(),
              [](const DedupGroup& a, const DedupGroup& b) { return a.representative < b.representative; });
    return res;
}

// ---------------------------------------------------------------------------
// Sampling

enum class SamplingMode { balanced, unbalanced };

struct Period {
    std::optional<YearMonth> from;
    std::optional<YearMonth> to;
    bool contains(YearMonth m) const { return (!from || !(m < *from)) && (!to || !(*to < m)); }
};

struct SamplingConfig {
    SamplingMode mode = SamplingMode::balanced;
    double ratio_mean = 0.1;
    double ratio_stddev = 0.02;
    double train_fraction = 0.7;
    std::uint64_t seed = 1;
    int per_month_cap = 0; // 0: no cap on the per-month, per-class count
    int folds = 5;
    bool time_aware = false;

    void validate() const
    {
        if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
            throw ValidationError("sampling: train_fraction must lie in (0,1)");
        }
        if (!(ratio_mean > 0.0 && ratio_mean < 1.0) || !(ratio_stddev >= 0.0)) {
            throw ValidationError("sampling: ratio mean must lie in (0,1) and stddev be >= 0");
        }
        if (per_month_cap < 0 || folds < 2) {
            throw ValidationError("sampling: per_month_cap >= 0 and folds >= 2 required");
        }
    }
};

struct SplitPlan {
    std::vector<std::string> train;
    std::vector<std::string> test;
    std::map<std::string, ClassLabel> labels; // every train and test id
    std::vector<int> folds;                   // aligned with train
    int k = 5;
    bool time_aware = false;
};

/// Per-month sample of goodware and malware ids (greyware never sampled).
struct MonthSample {
    YearMonth month;
    std::vector<std::size_t> goodware;
    std::vector<std::size_t> malware;
};

inline std::vector<MonthSample> sample_months(std::span<const AppRecord> records, std::span<const ClassLabel> labels,
                                              const SamplingConfig& cfg, const Period& period = {})
{
    cfg.validate();
    if (labels.size() != records.size()) {
        throw ValidationError("sampling: label count does not match record count");
    }
    std::map<YearMonth, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> months;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!period.contains(records[i].timestamp) || labels[i] == ClassLabel::greyware) {
            continue;
        }
        auto& cell = months[records[i].timestamp];
        (labels[i] == ClassLabel::goodware ? cell.first : cell.second).push_back(i);
    }
    if (months.empty()) {
        throw ValidationError("sampling: no labeled goodware/malware records in the period");
    }
    std::vector<MonthSample> out;
    for (auto& [month, cell] : months) {
        auto& [g, m] = cell;
        if (g.empty() || m.empty()) {
            throw ValidationError("sampling: month " + month.str() + " has no " +
                                  (g.empty() ? "goodware" : "malware") + " candidates");
        }
        auto by_id = [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; };
        std::sort(g.begin(), g.end(), by_id);
        std::sort(m.begin(), m.end(), by_id);
        Rng rng(derive_seed(cfg.seed, "sample:" + month.str()));
        rng.shuffle(g);
        rng.shuffle(m);
        std::size_t ng = g.size(), nm = m.size();
        if (cfg.mode == SamplingMode::balanced) {
            ng = nm = std::min(g.size(), m.size());
            if (cfg.per_month_cap > 0) {
                ng = nm = std::min<std::size_t>(ng, static_cast<std::size_t>(cfg.per_month_cap));
            }
        }
        else {
            if (cfg.per_month_cap > 0) {
                ng = std::min<std::size_t>(ng, static_cast<std::size_t>(cfg.per_month_cap));
            }
            const double r = std::max(0.0, rng.normal(cfg.ratio_mean, cfg.ratio_stddev));
            nm = std::min<std::size_t>(m.size(), static_cast<std::size_t>(std::llround(static_cast<double>(ng) * r)));
        }
        g.resize(ng);
        m.resize(nm);
        out.push_back({month, std::move(g), std::move(m)});
    }
    return out;
}

namespace split_detail {

struct Item {
    std::string id;
    YearMonth month;
    ClassLabel label;
};

} // namespace split_detail

/// Fold per item. Standard: stratified round-robin over a shuffled order,
/// values 0..k-1 name the validation fold. Time-aware: items ordered by
/// (month, id) and cut at month boundaries into k+1 contiguous segments;
/// value s is the segment, fold i (1..k) validates segment i and trains on
/// segments below it.
inline std::vector<int> make_folds(std::span<const std::string> ids, std::span<const YearMonth> months,
                                   std::span<const ClassLabel> labels, int k, bool time_aware, std::uint64_t seed)
{
    if (k < 2) {
        throw ValidationError("folds: k must be >= 2");
    }
    if (ids.size() != labels.size() || ids.size() != months.size()) {
        throw ValidationError("folds: ids, months and labels differ in length");
    }
    std::map<ClassLabel, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    for (const auto& [cls, v] : by_class) {
        if (static_cast<int>(v.size()) < k) {
            throw ValidationError("folds: k=" + std::to_string(k) + " exceeds the " + std::string(to_string(cls)) +
                                  " count " + std::to_string(v.size()));
        }
    }
    std::vector<int> fold(ids.size(), 0);
    if (!time_aware) {
        Rng rng(derive_seed(seed, "folds"));
        for (auto& [cls, v] : by_class) {
            std::sort(v.begin(), v.end(), [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
            rng.shuffle(v);
            for (std::size_t p = 0; p < v.size(); ++p) {
                fold[v[p]] = static_cast<int>(p % static_cast<std::size_t>(k));
            }
        }
        return fold;
    }
    std::vector<YearMonth> distinct(months.begin(), months.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) < k + 1) {
        throw ValidationError("folds: time-aware k=" + std::to_string(k) + " needs at least " +
                              std::to_string(k + 1) + " distinct months, have " + std::to_string(distinct.size()));
    }
    // cut points balance item counts, but every segment keeps at least one month
    std::map<YearMonth, std::size_t> per_month;
    for (const auto& m : months) {
        ++per_month[m];
    }
    const std::size_t n_months = distinct.size();
    std::vector<int> seg_of_month(n_months, 0);
    const double total = static_cast<double>(ids.size());
    std::size_t cum = 0;
    int seg = 0;
    for (std::size_t mi = 0; mi < n_months; ++mi) {
        const int remaining_segments = k - seg;
        const auto remaining_months = static_cast<int>(n_months - mi);
        const double mid = static_cast<double>(cum) + static_cast<double>(per_month[distinct[mi]]) / 2.0;
        int want = std::min(k, static_cast<int>(mid * (k + 1) / total));
        want = std::max(want, seg);
        // leave enough months for the segments still to come
        if (remaining_months <= remaining_segments) {
            want = std::max(want, k - remaining_months + 1);
        }
        want = mi == 0 ? 0 : std::min(want, seg + 1);
        seg = want;
        seg_of_month[mi] = seg;
        cum += per_month[distinct[mi]];
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const auto mi = static_cast<std::size_t>(std::lower_bound(distinct.begin(), distinct.end(), months[i]) -
                                                 distinct.begin());
        fold[i] = seg_of_month[mi];
    }
    return fold;
}

/// (train positions, validation positions) within plan.train for every fold.
inline std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> fold_views(const SplitPlan& plan)
{
    std::vector<std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> out;
    const int first = plan.time_aware ? 1 : 0;
    const int last = plan.time_aware ? plan.k : plan.k - 1;
    for (int f = first; f <= last; ++f) {
        std::pair<std::vector<std::size_t>, std::vector<std::size_t>> v;
        for (std::size_t i = 0; i < plan.train.size(); ++i) {
            const int s = plan.folds[i];
            if (s == f) {
                v.second.push_back(i);
            }
            else if (plan.time_aware ? s < f : true) {
                v.first.push_back(i);
            }
        }
        out.push_back(std::move(v));
    }
    return out;
}

inline SplitPlan sample_split(std::span<const AppRecord> records, std::span<const ClassLabel> labels,
                              const SamplingConfig& cfg, const Period& period = {})
{
    const auto months = sample_months(records, labels, cfg, period);
    SplitPlan plan;
    plan.k = cfg.folds;
    plan.time_aware = cfg.time_aware;
    std::vector<YearMonth> train_months;
    std::vector<ClassLabel> train_labels;
    for (const auto& ms : months) {
        for (const auto* cls : {&ms.goodware, &ms.malware}) {
            const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(cls->size())));
            for (std::size_t p = 0; p < cls->size(); ++p) {
                const auto& r = records[(*cls)[p]];
                plan.labels[r.id] = labels[(*cls)[p]];
                if (p < n_train) {
                    plan.train.push_back(r.id);
                    train_months.push_back(r.timestamp);
                    train_labels.push_back(labels[(*cls)[p]]);
                }
                else {
                    plan.test.push_back(r.id);
                }
            }
        }
    }
    plan.folds = make_folds(plan.train, train_months, train_labels, cfg.folds, cfg.time_aware, cfg.seed);
    return plan;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr std::string_view split_format = "apkbench-split";

inline nlohmann::json split_to_json(const SplitPlan& p)
{
    nlohmann::json j;
    j["format"] = split_format;
    j["version"] = 1;
    j["k"] = p.k;
    j["time_aware"] = p.time_aware;
    j["train"] = p.train;
    j["test"] = p.test;
    j["folds"] = p.folds;
    j["labels"] = nlohmann::json::object();
    for (const auto& [id, l] : p.labels) {
        j["labels"][id] = to_string(l);
    }
    return j;
}

inline SplitPlan split_from_json(const nlohmann::json& j)
{
    SplitPlan p;
    try {
        if (j.at("format") != split_format) {
            throw ValidationError("split plan: unexpected format tag");
        }
        p.k = j.at("k").get<int>();
        p.time_aware = j.at("time_aware").get<bool>();
        p.train = j.at("train").get<std::vector<std::string>>();
        p.test = j.at("test").get<std::vector<std::string>>();
        p.folds = j.at("folds").get<std::vector<int>>();
        for (const auto& [id, l] : j.at("labels").items()) {
            p.labels[id] = class_label_from(l.get<std::string>());
        }
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("split plan: ") + e.what());
    }
    if (p.folds.size() != p.train.size()) {
        throw ValidationError("split plan: folds and train ids differ in length");
    }
    std::set<std::string> seen(p.train.begin(), p.train.end());
    if (seen.size() != p.train.size()) {
        throw ValidationError("split plan: duplicate train id");
    }
    for (const auto& id : p.test) {
        if (!seen.insert(id).second) {
            throw ValidationError("split plan: id '" + id + "' in both train and test (or repeated)");
        }
    }
    for (const auto& id : seen) {
        if (!p.labels.contains(id)) {
            throw ValidationError("split plan: id '" + id + "' has no label");
        }
    }
    return p;
}

inline LabelingPolicy policy_from_json(const nlohmann::json& j)
{
    LabelingPolicy p;
    p.goodware_max_vtd = j.value("goodware_max_vtd", p.goodware_max_vtd);
    p.malware_min_vtd = j.value("malware_min_vtd", p.malware_min_vtd);
    p.validate();
    return p;
}

inline nlohmann::json policy_to_json(const LabelingPolicy& p)
{
    return {{"goodware_max_vtd", p.goodware_max_vtd}, {"malware_min_vtd", p.malware_min_vtd}};
}

inline SamplingConfig sampling_from_json(const nlohmann::json& j)
{
    SamplingConfig c;
    try {
        if (j.contains("mode")) {
            const auto m = j.at("mode").get<std::string>();
            if (m == "balanced") {
                c.mode = SamplingMode::balanced;
            }
            else if (m == "unbalanced") {
                c.mode = SamplingMode::unbalanced;
            }
            else {
                throw ValidationError("sampling: unknown mode '" + m + "'");
            }
        }
        c.ratio_mean = j.value("ratio_mean", c.ratio_mean);
        c.ratio_stddev = j.value("ratio_stddev", c.ratio_stddev);
        c.train_fraction = j.value("train_fraction", c.train_fraction);
        c.seed = j.value("seed", c.seed);
        c.per_month_cap = j.value("per_month_cap", c.per_month_cap);
        c.folds = j.value("folds", c.folds);
        c.time_aware = j.value("time_aware", c.time_aware);
    }
    catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("sampling: ") + e.what());
    }
    c.validate();
    return c;
}

inline nlohmann::json sampling_to_json(const SamplingConfig& c)
{
    return {{"mode", c.mode == SamplingMode::balanced ? "balanced" : "unbalanced"},
            {"ratio_mean", c.ratio_mean},
            {"ratio_stddev", c.ratio_stddev},
            {"train_fraction", c.train_fraction},
            {"seed", c.seed},
            {"per_month_cap", c.per_month_cap},
            {"folds", c.folds},
            {"time_aware", c.time_aware}};
}

} // namespace apkbench
