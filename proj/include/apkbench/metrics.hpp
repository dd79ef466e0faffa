#pragma once

// Confusion counts and the derived rates. Ratios with a zero denominator are
// absent, never NaN.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"

namespace apkbench {

struct ConfusionCounts {
    std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
    std::uint64_t positives() const { return tp + fn; }
    std::uint64_t negatives() const { return tn + fp; }
    std::uint64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const ConfusionCounts&) const = default;
};

/// Truth and prediction are 1 for malware, 0 for goodware.
inline ConfusionCounts confusion(std::span<const int> truth, std::span<const int> predicted)
{
    if (truth.size() != predicted.size()) {
        throw ValidationError("metrics: truth/prediction length mismatch");
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (truth[i]) {
            (predicted[i] ? c.tp : c.fn)++;
        }
        else {
            (predicted[i] ? c.fp : c.tn)++;
        }
    }
    return c;
}

struct MetricsReport {
    ConfusionCounts counts;
    std::optional<double> tpr, fpr, precision, f1, a_mean, kappa;
};

inline MetricsReport metrics(const ConfusionCounts& c)
{
    MetricsReport r;
    r.counts = c;
    const auto tp = static_cast<double>(c.tp), fp = static_cast<double>(c.fp), tn = static_cast<double>(c.tn),
               fn = static_cast<double>(c.fn);
    const double p = tp + fn, n = tn + fp, total = p + n;
    if (p > 0) {
        r.tpr = tp / p;
    }
    if (n > 0) {
        r.fpr = fp / n;
    }
    if (tp + fp > 0) {
        r.precision = tp / (tp + fp);
    }
    if (r.tpr && r.precision && *r.tpr + *r.precision > 0) {
        r.f1 = 2.0 * *r.tpr * *r.precision / (*r.tpr + *r.precision);
    }
    if (r.tpr && r.fpr) {
        r.a_mean = (*r.tpr + 1.0 - *r.fpr) / 2.0;
    }
    if (total > 0) {
        const double po = (tp + tn) / total;
        const double pc = (p / total) * ((tp + fp) / total) + (n / total) * ((tn + fn) / total);
        if (1.0 - pc > 0) {
            r.kappa = (po - pc) / (1.0 - pc);
        }
    }
    return r;
}

inline nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

inline nlohmann::json metrics_to_json(const MetricsReport& r)
{
    return {{"tp", r.counts.tp},
            {"fp", r.counts.fp},
            {"tn", r.counts.tn},
            {"fn", r.counts.fn},
            {"tpr", optional_json(r.tpr)},
            {"fpr", optional_json(r.fpr)},
            {"precision", optional_json(r.precision)},
            {"f1", optional_json(r.f1)},
            {"a_mean", optional_json(r.a_mean)},
            {"kappa", optional_json(r.kappa)}};
}

/// Share of greyware predicted goodware (g) and malware (m).
struct GreywareRatio {
    std::size_t count = 0;
    std::optional<double> g, m;
};

struct GreywareProbe {
    GreywareRatio overall;
    std::array<GreywareRatio, 6> by_vtd; // vtd 1..6
};

/// `vtd` and `predicted` are aligned; records outside 1..6 count only overall.
inline GreywareProbe greyware_probe(std::span<const int> vtd, std::span<const int> predicted)
{
    if (vtd.size() != predicted.size()) {
        throw ValidationError("greyware probe: vtd/prediction length mismatch");
    }
    std::array<std::size_t, 7> mal{}, cnt{};
    std::size_t all_mal = 0;
    for (std::size_t i = 0; i < vtd.size(); ++i) {
        all_mal += predicted[i] != 0;
        if (vtd[i] >= 1 && vtd[i] <= 6) {
            cnt[static_cast<std::size_t>(vtd[i])]++;
            mal[static_cast<std::size_t>(vtd[i])] += predicted[i] != 0;
        }
    }
    auto ratio = [](std::size_t m, std::size_t n) {
        GreywareRatio r;
        r.count = n;
        if (n > 0) {
            r.m = static_cast<double>(m) / static_cast<double>(n);
            r.g = 1.0 - *r.m;
        }
        return r;
    };
    GreywareProbe p;
    p.overall = ratio(all_mal, vtd.size());
    for (std::size_t b = 1; b <= 6; ++b) {
        p.by_vtd[b - 1] = ratio(mal[b], cnt[b]);
    }
    return p;
}

} // namespace apkbench
