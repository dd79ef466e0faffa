#pragma once

// Feature spaces over AppRecords: category selection, binary/frequency
// encoding, mutual-information and tf-idf selection, call-graph Markov
// profiles and HMM likelihood scores.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "app_ir.hpp"
#include "common.hpp"
#include "dataset_ops.hpp"
#include "hmm.hpp"

namespace apkbench {

enum class FeatureCategory {
    permission,
    intent,
    component,
    component_count,
    hw_feature,
    string,
    network_address,
    code_string,
    api_call,
    basic_block,
    markov_transition,
    hmm_score
};

enum class Encoding { binary, frequency, real };

inline std::string_view to_string(FeatureCategory c)
{
    switch (c) {
    case FeatureCategory::permission: return "permission";
    case FeatureCategory::intent: return "intent";
    case FeatureCategory::component: return "component";
    case FeatureCategory::component_count: return "component-count";
    case FeatureCategory::hw_feature: return "hw-feature";
    case FeatureCategory::string: return "string";
    case FeatureCategory::network_address: return "network-address";
    case FeatureCategory::code_string: return "code-string";
    case FeatureCategory::api_call: return "api-call";
    case FeatureCategory::basic_block: return "basic-block";
    case FeatureCategory::markov_transition: return "markov-transition";
    case FeatureCategory::hmm_score: return "hmm-score";
    }
    return "?";
}

inline FeatureCategory feature_category_from(std::string_view s)
{
    static constexpr FeatureCategory all[] = {
        FeatureCategory::permission,      FeatureCategory::intent,        FeatureCategory::component,
        FeatureCategory::component_count, FeatureCategory::hw_feature,    FeatureCategory::string,
        FeatureCategory::network_address, FeatureCategory::code_string,   FeatureCategory::api_call,
        FeatureCategory::basic_block,     FeatureCategory::markov_transition, FeatureCategory::hmm_score};
    return detail::enum_from(s, all, "feature category");
}

inline std::string_view to_string(Encoding e)
{
    return e == Encoding::binary ? "binary" : e == Encoding::frequency ? "frequency" : "real";
}

inline Encoding encoding_from(std::string_view s)
{
    static constexpr Encoding all[] = {Encoding::binary, Encoding::frequency, Encoding::real};
    return detail::enum_from(s, all, "encoding");
}

struct FeatureName {
    FeatureCategory category;
    std::string name;
    auto operator<=>(const FeatureName&) const = default;
};

using FeatureVector = std::vector<std::pair<std::uint32_t, double>>; // sorted by index
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

class FeatureSpace {
public:
    FeatureSpace() = default;
    FeatureSpace(std::vector<FeatureName> names, Encoding encoding, std::map<FeatureCategory, Encoding> overrides = {})
        : names_(std::move(names)), encoding_(encoding), overrides_(std::move(overrides))
    {
        for (std::size_t i = 0; i < names_.size(); ++i) {
            if (!index_.emplace(names_[i], static_cast<std::uint32_t>(i)).second) {
                throw ValidationError("feature space: duplicate feature '" + names_[i].name + "'");
            }
        }
    }

    std::size_t size() const { return names_.size(); }
    const FeatureName& name(std::size_t i) const { return names_[i]; }
    const std::vector<FeatureName>& names() const { return names_; }
    Encoding encoding() const { return encoding_; }
    Encoding encoding_of(FeatureCategory c) const
    {
        const auto it = overrides_.find(c);
        return it == overrides_.end() ? encoding_ : it->second;
    }
    const std::map<FeatureCategory, Encoding>& overrides() const { return overrides_; }

    std::optional<std::uint32_t> find(const FeatureName& n) const
    {
        const auto it = index_.find(n);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    /// Keeps the given indices, in their current relative order.
    FeatureSpace subset(std::vector<std::uint32_t> keep) const
    {
        std::sort(keep.begin(), keep.end());
        keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
        std::vector<FeatureName> n;
        for (auto i : keep) {
            n.push_back(names_.at(i));
        }
        return FeatureSpace(std::move(n), encoding_, overrides_);
    }

    bool operator==(const FeatureSpace& o) const
    {
        return names_ == o.names_ && encoding_ == o.encoding_ && overrides_ == o.overrides_;
    }

private:
    std::vector<FeatureName> names_;
    Encoding encoding_ = Encoding::binary;
    std::map<FeatureCategory, Encoding> overrides_;
    std::map<FeatureName, std::uint32_t> index_;
};

/// Training records only. Fitting steps accept nothing else.
class TrainPartition {
public:
    TrainPartition(std::vector<const AppRecord*> records, std::vector<ClassLabel> labels)
        : records_(std::move(records)), labels_(std::move(labels))
    {
        if (records_.size() != labels_.size()) {
            throw ValidationError("train partition: record and label counts differ");
        }
        for (auto l : labels_) {
            if (l == ClassLabel::greyware) {
                throw ValidationError("train partition: greyware cannot be a training label");
            }
        }
    }

    static TrainPartition from_plan(std::span<const AppRecord> records, const SplitPlan& plan)
    {
        std::map<std::string_view, const AppRecord*> by_id;
        for (const auto& r : records) {
            by_id[r.id] = &r;
        }
        std::vector<const AppRecord*> recs;
        std::vector<ClassLabel> labels;
        for (const auto& id : plan.train) {
            const auto it = by_id.find(id);
            if (it == by_id.end()) {
                throw ValidationError("train partition: id '" + id + "' not in corpus");
            }
            recs.push_back(it->second);
            labels.push_back(plan.labels.at(id));
        }
        return TrainPartition(std::move(recs), std::move(labels));
    }

    TrainPartition subset(std::span<const std::size_t> idx) const
    {
        std::vector<const AppRecord*> r;
        std::vector<ClassLabel> l;
        for (auto i : idx) {
            r.push_back(records_.at(i));
            l.push_back(labels_.at(i));
        }
        return TrainPartition(std::move(r), std::move(l));
    }

    std::size_t size() const { return records_.size(); }
    const AppRecord& record(std::size_t i) const { return *records_[i]; }
    ClassLabel label(std::size_t i) const { return labels_[i]; }
    const std::vector<const AppRecord*>& records() const { return records_; }
    const std::vector<ClassLabel>& labels() const { return labels_; }
    std::vector<int> targets() const
    {
        std::vector<int> y;
        for (auto l : labels_) {
            y.push_back(l == ClassLabel::malware ? 1 : 0);
        }
        return y;
    }

private:
    std::vector<const AppRecord*> records_;
    std::vector<ClassLabel> labels_;
};

// ---------------------------------------------------------------------------
// Call-graph Markov profile

enum class MarkovAbstraction { family, package };

inline std::string_view to_string(MarkovAbstraction a) { return a == MarkovAbstraction::family ? "family" : "package"; }

inline MarkovAbstraction markov_abstraction_from(std::string_view s)
{
    static constexpr MarkovAbstraction all[] = {MarkovAbstraction::family, MarkovAbstraction::package};
    return detail::enum_from(s, all, "markov abstraction");
}

namespace feat_detail {

/// Known API namespaces and the family each belongs to.
inline const std::vector<std::pair<std::string, std::string>>& api_namespaces()
{
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"android", "android"},    {"com.android", "android"}, {"dalvik", "android"}, {"java", "java"},
        {"javax", "javax"},        {"com.google", "google"},   {"org.apache", "apache"}, {"org.json", "json"},
        {"org.w3c.dom", "dom"},    {"org.xml", "xml"},         {"junit", "junit"},     {"org.junit", "junit"}};
    return v;
}

inline bool in_namespace(const std::string& pkg, const std::string& ns)
{
    return pkg == ns || (pkg.size() > ns.size() && pkg.compare(0, ns.size(), ns) == 0 && pkg[ns.size()] == '.');
}

} // namespace feat_detail

/// Abstract state of a method: its package or family when it lies in a known
/// API namespace, "self-defined" for other app code, "obfuscated" for other
/// external code.
inline std::string abstract_method(const std::string& method, bool user, MarkovAbstraction abstraction)
{
    std::string cls = method.substr(0, method.find("->"));
    if (cls.size() >= 2 && cls.front() == 'L' && cls.back() == ';') {
        cls = cls.substr(1, cls.size() - 2);
    }
    std::replace(cls.begin(), cls.end(), '/', '.');
    const auto dot = cls.rfind('.');
    const std::string pkg = dot == std::string::npos ? std::string() : cls.substr(0, dot);
    for (const auto& [ns, family] : feat_detail::api_namespaces()) {
        if (feat_detail::in_namespace(pkg, ns)) {
            return abstraction == MarkovAbstraction::family ? family : pkg;
        }
    }
    return user ? "self-defined" : "obfuscated";
}

inline std::string markov_feature_name(const std::string& from, const std::string& to) { return from + " -> " + to; }

/// Transition probabilities between abstract states, from call-edge counts.
inline std::map<std::string, double> markov_profile(const AppRecord& app, MarkovAbstraction abstraction)
{
    std::map<std::string, std::map<std::string, double>> counts;
    for (const auto& e : app.call_edges) {
        const auto from = abstract_method(e.caller, true, abstraction);
        const auto to = abstract_method(e.callee, e.kind == CalleeKind::user, abstraction);
        counts[from][to] += 1.0;
    }
    std::map<std::string, double> out;
    for (const auto& [from, row] : counts) {
        double total = 0.0;
        for (const auto& [to, n] : row) {
            total += n;
        }
        for (const auto& [to, n] : row) {
            out[markov_feature_name(from, to)] = n / total;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Raw observations

inline bool is_network_address(const std::string& s)
{
    static const std::regex url(R"(^[A-Za-z][A-Za-z0-9+.-]*://\S+$)");
    static const std::regex ip(R"(^\d{1,3}(\.\d{1,3}){3}(:\d{1,5})?(/\S*)?$)");
    return std::regex_match(s, url) || std::regex_match(s, ip);
}

/// Calls f(name, count) for every observation of `cat` in `app`.
template <typename F>
void observe(const AppRecord& app, FeatureCategory cat, MarkovAbstraction abstraction, F&& f)
{
    switch (cat) {
    case FeatureCategory::permission:
        for (const auto& p : app.permissions) {
            f(p, 1.0);
        }
        break;
    case FeatureCategory::intent:
        for (const auto& a : app.intent_actions) {
            f(a, 1.0);
        }
        break;
    case FeatureCategory::component:
        for (const auto& c : app.app_components) {
            f(std::string(to_string(c.kind)) + ":" + c.name, 1.0);
        }
        break;
    case FeatureCategory::component_count: {
        std::map<std::string, double> n;
        for (const auto& c : app.app_components) {
            n[std::string(to_string(c.kind))] += 1.0;
        }
        for (const auto& [k, v] : n) {
            f(k, v);
        }
        break;
    }
    case FeatureCategory::hw_feature:
        for (const auto& h : app.hw_sw_features) {
            f(h, 1.0);
        }
        break;
    case FeatureCategory::string:
        for (const auto& s : app.strings) {
            f(s, 1.0);
        }
        break;
    case FeatureCategory::network_address:
        for (const auto& s : app.strings) {
            if (is_network_address(s)) {
                f(s, 1.0);
            }
        }
        break;
    case FeatureCategory::code_string:
        for (const auto& s : app.strings) {
            if (!is_network_address(s)) {
                f(s, 1.0);
            }
        }
        break;
    case FeatureCategory::api_call:
        for (const auto& [api, n] : app.api_calls) {
            f(api, static_cast<double>(n));
        }
        break;
    case FeatureCategory::basic_block:
        for (const auto& [b, n] : app.basic_blocks) {
            f(b, static_cast<double>(n));
        }
        break;
    case FeatureCategory::markov_transition:
        for (const auto& [t, p] : markov_profile(app, abstraction)) {
            f(t, p);
        }
        break;
    case FeatureCategory::hmm_score:
        break; // needs fitted models
    }
}

inline FeatureSpace build_space(const TrainPartition& train, std::span<const FeatureCategory> categories,
                                Encoding encoding, std::map<FeatureCategory, Encoding> overrides = {},
                                MarkovAbstraction abstraction = MarkovAbstraction::package)
{
    if (train.size() == 0) {
        throw ValidationError("feature space: no training records");
    }
    std::set<FeatureName> names;
    for (auto cat : categories) {
        for (const auto* r : train.records()) {
            observe(*r, cat, abstraction, [&](const std::string& n, double) { names.insert({cat, n}); });
        }
    }
    if (names.empty()) {
        throw ValidationError("feature space: empty vocabulary for the requested categories");
    }
    return FeatureSpace(std::vector<FeatureName>(names.begin(), names.end()), encoding, std::move(overrides));
}

/// Features unseen at training are dropped.
inline FeatureVector encode(const AppRecord& app, const FeatureSpace& space,
                            MarkovAbstraction abstraction = MarkovAbstraction::package)
{
    std::set<FeatureCategory> cats;
    for (const auto& n : space.names()) {
        cats.insert(n.category);
    }
    FeatureVector v;
    for (auto cat : cats) {
        const auto enc = space.encoding_of(cat);
        observe(app, cat, abstraction, [&](const std::string& n, double value) {
            if (const auto idx = space.find({cat, n})) {
                v.emplace_back(*idx, enc == Encoding::binary ? 1.0 : value);
            }
        });
    }
    std::sort(v.begin(), v.end());
    return v;
}

inline SparseMatrix to_matrix(std::span<const FeatureVector> rows, std::size_t cols)
{
    SparseMatrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (const auto& [j, v] : rows[i]) {
            trip.emplace_back(static_cast<int>(i), static_cast<int>(j), v);
        }
    }
    m.setFromTriplets(trip.begin(), trip.end());
    m.makeCompressed();
    return m;
}

// ---------------------------------------------------------------------------
// Selection

/// MI(F;C) in bits for every column, treating non-zero entries as 1.
inline std::vector<double> mutual_information(const SparseMatrix& x, std::span<const int> y)
{
    const auto n = static_cast<double>(x.rows());
    if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != y.size()) {
        throw ValidationError("mutual information: sample/label count mismatch");
    }
    std::vector<double> n11(static_cast<std::size_t>(x.cols()), 0.0), n1(static_cast<std::size_t>(x.cols()), 0.0);
    double c1 = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const bool mal = y[static_cast<std::size_t>(i)] == 1;
        c1 += mal;
        for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
            if (it.value() != 0.0) {
                n1[static_cast<std::size_t>(it.col())] += 1.0;
                if (mal) {
                    n11[static_cast<std::size_t>(it.col())] += 1.0;
                }
            }
        }
    }
    auto term = [&](double nfc, double nf, double nc) {
        if (nfc <= 0.0) {
            return 0.0;
        }
        return nfc / n * std::log2(nfc * n / (nf * nc));
    };
    std::vector<double> mi(n1.size());
    const double c0 = n - c1;
    for (std::size_t j = 0; j < mi.size(); ++j) {
        const double f1 = n1[j], f0 = n - n1[j];
        const double a11 = n11[j], a10 = f1 - a11, a01 = c1 - a11, a00 = f0 - a01;
        mi[j] = term(a11, f1, c1) + term(a10, f1, c0) + term(a01, f0, c1) + term(a00, f0, c0);
    }
    return mi;
}

/// Class-as-document tf-idf: tf = occurrences of the feature within the class,
/// idf = ln(2 / number of classes containing it); score = max over classes.
inline std::vector<double> tfidf_scores(const SparseMatrix& x, std::span<const int> y)
{
    if (static_cast<std::size_t>(x.rows()) != y.size()) {
        throw ValidationError("tf-idf: sample/label count mismatch");
    }
    const bool has0 = std::find(y.begin(), y.end(), 0) != y.end();
    const bool has1 = std::find(y.begin(), y.end(), 1) != y.end();
    if (!has0 || !has1) {
        throw ValidationError("tf-idf: both classes need at least one training record");
    }
    std::vector<std::array<double, 2>> tf(static_cast<std::size_t>(x.cols()), {0.0, 0.0});
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
            tf[static_cast<std::size_t>(it.col())][y[static_cast<std::size_t>(i)] == 1 ? 1 : 0] += it.value();
        }
    }
    std::vector<double> score(tf.size(), 0.0);
    for (std::size_t j = 0; j < tf.size(); ++j) {
        const int docs = (tf[j][0] > 0.0) + (tf[j][1] > 0.0);
        if (docs == 0) {
            continue;
        }
        const double idf = std::log(2.0 / docs);
        score[j] = std::max(tf[j][0], tf[j][1]) * idf;
    }
    return score;
}

/// Indices ranked by descending score, ties by index.
inline std::vector<std::uint32_t> rank_features(std::span<const double> scores)
{
    std::vector<std::uint32_t> idx(scores.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = static_cast<std::uint32_t>(i);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
    return idx;
}

inline std::vector<std::uint32_t> top_k(std::span<const double> scores, std::size_t k)
{
    if (k > scores.size()) {
        warn("top-k selection: k=" + std::to_string(k) + " exceeds the " + std::to_string(scores.size()) +
             " available features; keeping all");
        k = scores.size();
    }
    auto r = rank_features(scores);
    r.resize(k);
    return r;
}

// ---------------------------------------------------------------------------
// Pipelines

enum class Selection { none, mutual_information, tfidf };

inline std::string_view to_string(Selection s)
{
    return s == Selection::none ? "none" : s == Selection::mutual_information ? "mutual-information" : "tfidf";
}

inline Selection selection_from(std::string_view s)
{
    static constexpr Selection all[] = {Selection::none, Selection::mutual_information, Selection::tfidf};
    return detail::enum_from(s, all, "selection");
}

struct FeaturePipelineSpec {
    std::vector<FeatureCategory> categories;
    Encoding encoding = Encoding::binary;
    std::map<FeatureCategory, Encoding> encoding_overrides;
    Selection selection = Selection::none;
    std::size_t k = 0;
    std::vector<FeatureCategory> selection_categories; // empty: selection ranges over every category
    MarkovAbstraction markov = MarkovAbstraction::package;
    HmmFitOptions hmm;
    std::size_t hmm_max_length = 2000; // symbols per app fed to the HMMs

    bool uses_hmm() const
    {
        return std::find(categories.begin(), categories.end(), FeatureCategory::hmm_score) != categories.end();
    }
};

/// Concatenated opcode stream of an app, truncated to `max_len`.
inline std::vector<std::string> opcode_stream(const AppRecord& app, std::size_t max_len)
{
    std::vector<std::string> out;
    for (const auto& s : app.opcode_sequences) {
        for (const auto& op : s.opcodes) {
            if (out.size() >= max_len) {
                return out;
            }
            out.push_back(op);
        }
    }
    return out;
}

/// One HMM per class fitted on training opcode streams.
struct HmmPair {
    HmmModel goodware;
    HmmModel malware;
};

inline HmmPair hmm_fit(const TrainPartition& train, const HmmFitOptions& opt, std::size_t max_len)
{
    std::set<std::string> vocab_set;
    std::vector<std::vector<std::string>> streams(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
        streams[i] = opcode_stream(train.record(i), max_len);
        vocab_set.insert(streams[i].begin(), streams[i].end());
    }
    std::vector<std::string> vocab(vocab_set.begin(), vocab_set.end());
    HmmModel index;
    index.vocab = vocab;
    std::array<std::vector<std::vector<std::uint32_t>>, 2> per_class;
    for (std::size_t i = 0; i < train.size(); ++i) {
        if (!streams[i].empty()) {
            per_class[train.label(i) == ClassLabel::malware ? 1 : 0].push_back(index.encode(streams[i]));
        }
    }
    std::array<HmmModel, 2> models;
    parallel_for(2, [&](std::size_t c) {
        auto o = opt;
        o.seed = derive_seed(opt.seed, c == 0 ? "hmm-goodware" : "hmm-malware");
        if (per_class[c].empty()) {
            throw ValidationError(std::string("hmm: no ") + (c ? "malware" : "goodware") +
                                  " training record has opcodes");
        }
        models[c] = baum_welch(per_class[c], vocab, o).model;
    });
    return {std::move(models[0]), std::move(models[1])};
}

/// (goodware score, malware score): length-normalized log-likelihoods.
inline std::array<double, 2> hmm_features(const HmmPair& hmm, const AppRecord& app, std::size_t max_len)
{
    const auto stream = opcode_stream(app, max_len);
    if (stream.empty()) {
        return {0.0, 0.0};
    }
    const auto t = static_cast<double>(stream.size());
    return {log_likelihood(hmm.goodware, hmm.goodware.encode(stream)) / t,
            log_likelihood(hmm.malware, hmm.malware.encode(stream)) / t};
}

struct FittedFeaturizer {
    FeaturePipelineSpec spec;
    FeatureSpace space;
    std::optional<HmmPair> hmm;

    FeatureVector transform(const AppRecord& app) const
    {
        if (hmm) {
            const auto s = hmm_features(*hmm, app, spec.hmm_max_length);
            return {{0, s[0]}, {1, s[1]}};
        }
        return encode(app, space, spec.markov);
    }

    SparseMatrix transform(std::span<const AppRecord* const> apps) const
    {
        std::vector<FeatureVector> rows(apps.size());
        parallel_for(apps.size(), [&](std::size_t i) { rows[i] = transform(*apps[i]); });
        return to_matrix(rows, space.size());
    }
};

inline FittedFeaturizer fit_featurizer(const FeaturePipelineSpec& spec, const TrainPartition& train)
{
    FittedFeaturizer f;
    f.spec = spec;
    if (spec.uses_hmm()) {
        if (spec.categories.size() != 1) {
            throw ValidationError("featurizer: hmm scores cannot be mixed with other categories");
        }
        f.hmm = hmm_fit(train, spec.hmm, spec.hmm_max_length);
        f.space = FeatureSpace({{FeatureCategory::hmm_score, "goodware"}, {FeatureCategory::hmm_score, "malware"}},
                               Encoding::real);
        return f;
    }
    f.space = build_space(train, spec.categories, spec.encoding, spec.encoding_overrides, spec.markov);
    if (spec.selection == Selection::none) {
        return f;
    }
    const auto x = f.transform(train.records());
    const auto y = train.targets();
    const auto scores = spec.selection == Selection::mutual_information ? mutual_information(x, y) : tfidf_scores(x, y);
    std::vector<double> eligible_scores;
    std::vector<std::uint32_t> eligible, keep;
    for (std::uint32_t j = 0; j < f.space.size(); ++j) {
        const auto cat = f.space.name(j).category;
        const bool selectable = spec.selection_categories.empty() ||
                                std::find(spec.selection_categories.begin(), spec.selection_categories.end(), cat) !=
                                    spec.selection_categories.end();
        if (selectable) {
            eligible.push_back(j);
            eligible_scores.push_back(scores[j]);
        }
        else {
            keep.push_back(j);
        }
    }
    for (auto r : top_k(eligible_scores, std::min(spec.k, eligible.size()))) {
        keep.push_back(eligible[r]);
    }
    if (spec.k > eligible.size()) {
        // clamping is routine at desk scale; report it once per fit
        warn("featurizer: selection k=" + std::to_string(spec.k) + " clamped to " + std::to_string(eligible.size()));
    }
    f.space = f.space.subset(keep);
    return f;
}

// ---------------------------------------------------------------------------
// Persistence

inline nlohmann::json space_to_json(const FeatureSpace& s)
{
    nlohmann::json j;
    j["encoding"] = to_string(s.encoding());
    j["overrides"] = nlohmann::json::object();
    for (const auto& [c, e] : s.overrides()) {
        j["overrides"][std::string(to_string(c))] = to_string(e);
    }
    j["features"] = nlohmann::json::array();
    for (const auto& n : s.names()) {
        j["features"].push_back({to_string(n.category), n.name});
    }
    return j;
}

inline FeatureSpace space_from_json(const nlohmann::json& j)
{
    std::vector<FeatureName> names;
    for (const auto& f : j.at("features")) {
        names.push_back({feature_category_from(f.at(0).get<std::string>()), f.at(1).get<std::string>()});
    }
    std::map<FeatureCategory, Encoding> ov;
    for (const auto& [c, e] : j.at("overrides").items()) {
        ov[feature_category_from(c)] = encoding_from(e.get<std::string>());
    }
    return FeatureSpace(std::move(names), encoding_from(j.at("encoding").get<std::string>()), std::move(ov));
}

inline nlohmann::json pipeline_to_json(const FeaturePipelineSpec& p)
{
    nlohmann::json j;
    for (auto c : p.categories) {
        j["categories"].push_back(to_string(c));
    }
    j["encoding"] = to_string(p.encoding);
    j["encoding_overrides"] = nlohmann::json::object();
    for (const auto& [c, e] : p.encoding_overrides) {
        j["encoding_overrides"][std::string(to_string(c))] = to_string(e);
    }
    j["selection"] = to_string(p.selection);
    j["k"] = p.k;
    j["selection_categories"] = nlohmann::json::array();
    for (auto c : p.selection_categories) {
        j["selection_categories"].push_back(to_string(c));
    }
    j["markov"] = to_string(p.markov);
    j["hmm_states"] = p.hmm.states;
    j["hmm_max_iterations"] = p.hmm.max_iterations;
    j["hmm_tolerance"] = p.hmm.tolerance;
    j["hmm_emission_floor"] = p.hmm.emission_floor;
    j["hmm_seed"] = p.hmm.seed;
    j["hmm_max_length"] = p.hmm_max_length;
    return j;
}

inline FeaturePipelineSpec pipeline_from_json(const nlohmann::json& j)
{
    FeaturePipelineSpec p;
    for (const auto& c : j.at("categories")) {
        p.categories.push_back(feature_category_from(c.get<std::string>()));
    }
    p.encoding = encoding_from(j.at("encoding").get<std::string>());
    for (const auto& [c, e] : j.at("encoding_overrides").items()) {
        p.encoding_overrides[feature_category_from(c)] = encoding_from(e.get<std::string>());
    }
    p.selection = selection_from(j.at("selection").get<std::string>());
    p.k = j.at("k").get<std::size_t>();
    for (const auto& c : j.at("selection_categories")) {
        p.selection_categories.push_back(feature_category_from(c.get<std::string>()));
    }
    p.markov = markov_abstraction_from(j.at("markov").get<std::string>());
    p.hmm.states = j.at("hmm_states").get<int>();
    p.hmm.max_iterations = j.at("hmm_max_iterations").get<int>();
    p.hmm.tolerance = j.at("hmm_tolerance").get<double>();
    p.hmm.emission_floor = j.at("hmm_emission_floor").get<double>();
    p.hmm.seed = j.at("hmm_seed").get<std::uint64_t>();
    p.hmm_max_length = j.at("hmm_max_length").get<std::size_t>();
    return p;
}

inline nlohmann::json featurizer_to_json(const FittedFeaturizer& f)
{
    nlohmann::json j;
    j["pipeline"] = pipeline_to_json(f.spec);
    j["space"] = space_to_json(f.space);
    if (f.hmm) {
        j["hmm"] = {{"goodware", hmm_to_json(f.hmm->goodware)}, {"malware", hmm_to_json(f.hmm->malware)}};
    }
    return j;
}

inline FittedFeaturizer featurizer_from_json(const nlohmann::json& j)
{
    FittedFeaturizer f;
    f.spec = pipeline_from_json(j.at("pipeline"));
    f.space = space_from_json(j.at("space"));
    if (j.contains("hmm")) {
        f.hmm = HmmPair{hmm_from_json(j.at("hmm").at("goodware")), hmm_from_json(j.at("hmm").at("malware"))};
    }
    return f;
}

} // namespace apkbench
