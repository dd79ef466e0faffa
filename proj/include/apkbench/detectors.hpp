#pragma once

// The eight detector pipelines: feature pipeline + classifier grid, fitted
// by grid search over cross-validation folds scored on A_mean.

#include <limits>
#include <memory>

#include "classifiers.hpp"
#include "featurization.hpp"
#include "metrics.hpp"

namespace apkbench {

inline const std::vector<std::string>& detector_names()
{
    static const std::vector<std::string> v = {"AndroDialysis", "BasicBlocks", "Drebin",      "DroidDet",
                                               "DroidDetector", "HMMDetector", "ICCDetector", "MaMaDroid"};
    return v;
}

struct DetectorSpec {
    std::string name;
    FeaturePipelineSpec features;
    ClassifierKind classifier = ClassifierKind::random_forest;
    std::vector<ClassifierParams> grid; // evaluated in order; ties keep the earlier point
    std::string note;
};

/// Locked (features, encoding, selection, classifier) tuple per detector.
struct ConformanceRow {
    std::string name;
    std::map<FeatureCategory, Encoding> features;
    Selection selection;
    std::vector<FeatureCategory> selection_scope; // empty: all categories
    ClassifierKind classifier;
};

inline const std::vector<ConformanceRow>& conformance_table()
{
    using C = FeatureCategory;
    using E = Encoding;
    static const std::vector<ConformanceRow> rows = {
        {"AndroDialysis", {{C::permission, E::binary}, {C::intent, E::binary}}, Selection::none, {},
         ClassifierKind::naive_bayes_net},
        {"BasicBlocks", {{C::basic_block, E::binary}}, Selection::mutual_information, {},
         ClassifierKind::random_forest},
        {"Drebin",
         {{C::permission, E::binary},
          {C::component, E::binary},
          {C::hw_feature, E::binary},
          {C::intent, E::binary},
          {C::network_address, E::binary},
          {C::code_string, E::binary},
          {C::api_call, E::binary}},
         Selection::none,
         {},
         ClassifierKind::linear_svm},
        {"DroidDet", {{C::permission, E::binary}, {C::intent, E::binary}, {C::api_call, E::binary}}, Selection::tfidf,
         {}, ClassifierKind::rotation_forest},
        {"DroidDetector", {{C::permission, E::binary}, {C::api_call, E::binary}}, Selection::mutual_information,
         {C::api_call}, ClassifierKind::mlp},
        {"HMMDetector", {{C::hmm_score, E::real}}, Selection::none, {}, ClassifierKind::random_forest},
        {"ICCDetector",
         {{C::intent, E::frequency}, {C::component, E::binary}, {C::component_count, E::frequency}},
         Selection::mutual_information,
         {},
         ClassifierKind::linear_svm},
        {"MaMaDroid", {{C::markov_transition, E::real}}, Selection::none, {}, ClassifierKind::random_forest},
    };
    return rows;
}

inline const ConformanceRow& conformance_row(const std::string& name)
{
    for (const auto& r : conformance_table()) {
        if (r.name == name) {
            return r;
        }
    }
    throw ValidationError("unknown detector '" + name + "'");
}

/// Throws when `spec` departs from its detector's locked row.
inline void check_conformance(const DetectorSpec& spec)
{
    const auto& row = conformance_row(spec.name);
    auto fail = [&](const std::string& what) {
        throw ValidationError("detector " + spec.name + ": " + what + " differs from its reference configuration");
    };
    std::map<FeatureCategory, Encoding> got;
    for (auto c : spec.features.categories) {
        got[c] = c == FeatureCategory::hmm_score ? Encoding::real : [&] {
            const auto it = spec.features.encoding_overrides.find(c);
            return it == spec.features.encoding_overrides.end() ? spec.features.encoding : it->second;
        }();
    }
    if (got != row.features || got.size() != spec.features.categories.size()) {
        fail("feature set or encoding");
    }
    if (spec.features.selection != row.selection) {
        fail("selection method");
    }
    if (spec.features.selection_categories != row.selection_scope) {
        fail("selection scope");
    }
    if (row.selection != Selection::none && spec.features.k == 0) {
        fail("selection size");
    }
    if (spec.classifier != row.classifier) {
        fail("classifier");
    }
    if (spec.grid.empty()) {
        throw ValidationError("detector " + spec.name + ": empty hyperparameter grid");
    }
    for (const auto& p : spec.grid) {
        if (p.kind != spec.classifier) {
            fail("grid classifier kind");
        }
        p.validate();
    }
}

/// Cartesian product of `axes` (first axis outermost) over `base`.
inline std::vector<ClassifierParams> make_grid(const ClassifierParams& base,
                                               const std::vector<std::pair<std::string, nlohmann::json>>& axes)
{
    std::vector<ClassifierParams> out{base};
    for (const auto& [key, values] : axes) {
        if (!values.is_array() || values.empty()) {
            throw ValidationError("grid axis '" + key + "' must be a non-empty array");
        }
        std::vector<ClassifierParams> next;
        for (const auto& p : out) {
            for (const auto& v : values) {
                next.push_back(params_from_json({{key, v}}, p));
            }
        }
        out = std::move(next);
    }
    return out;
}

inline std::vector<std::pair<std::string, nlohmann::json>> default_grid_axes(ClassifierKind k)
{
    using J = nlohmann::json;
    switch (k) {
    case ClassifierKind::decision_tree: return {{"max_depth", J{8, 16, 0}}};
    case ClassifierKind::random_forest:
    case ClassifierKind::rotation_forest: return {{"max_depth", J{8, 16, 0}}, {"trees", J{32, 128}}};
    case ClassifierKind::linear_svm: return {{"lambda", J{0.01, 0.1, 1.0}}};
    case ClassifierKind::mlp: return {{"hidden", J{32, 128}}};
    case ClassifierKind::knn: return {{"k", J{1, 3, 5}}};
    case ClassifierKind::naive_bayes_net: return {};
    }
    return {};
}

inline DetectorSpec default_detector(const std::string& name)
{
    const auto& row = conformance_row(name);
    DetectorSpec s;
    s.name = name;
    s.classifier = row.classifier;
    s.features.encoding = Encoding::binary;
    for (const auto& [c, e] : row.features) {
        s.features.categories.push_back(c);
        if (e != Encoding::binary && c != FeatureCategory::hmm_score) {
            s.features.encoding_overrides[c] = e;
        }
    }
    s.features.selection = row.selection;
    s.features.selection_categories = row.selection_scope;
    if (name == "BasicBlocks") {
        s.features.k = 500;
    }
    else if (name == "DroidDet" || name == "ICCDetector") {
        s.features.k = 200;
    }
    else if (name == "DroidDetector") {
        s.features.k = 1000;
        s.note = "deep belief network approximated by a one-hidden-layer perceptron";
    }
    else if (name == "AndroDialysis") {
        s.note = "Bayesian network with naive structure";
    }
    if (name == "MaMaDroid") {
        s.features.markov = MarkovAbstraction::package;
    }
    ClassifierParams base;
    base.kind = row.classifier;
    s.grid = make_grid(base, default_grid_axes(row.classifier));
    check_conformance(s);
    return s;
}

inline std::vector<DetectorSpec> default_detectors()
{
    std::vector<DetectorSpec> v;
    for (const auto& n : detector_names()) {
        v.push_back(default_detector(n));
    }
    return v;
}

/// Config form: {"name": ..., "k": ..., "markov": ..., "hmm_states": ..., "params": {...}, "grid": {axis: [...]}}.
/// Unlisted keys keep the detector defaults; grid axes replace the default axes.
inline DetectorSpec detector_spec_from_json(const nlohmann::json& j)
{
    auto s = default_detector(j.at("name").get<std::string>());
    ClassifierParams base;
    base.kind = s.classifier;
    bool regrid = false;
    auto axes = default_grid_axes(s.classifier);
    for (const auto& [key, v] : j.items()) {
        if (key == "name") {
            continue;
        }
        if (key == "k") s.features.k = v.get<std::size_t>();
        else if (key == "markov") s.features.markov = markov_abstraction_from(v.get<std::string>());
        else if (key == "hmm_states") s.features.hmm.states = v.get<int>();
        else if (key == "hmm_max_iterations") s.features.hmm.max_iterations = v.get<int>();
        else if (key == "hmm_max_length") s.features.hmm_max_length = v.get<std::size_t>();
        else if (key == "params") {
            auto copy = v;
            copy.erase("kind");
            base = params_from_json(copy, base);
            regrid = true;
        }
        else if (key == "grid") {
            axes.clear();
            for (const auto& [axis, values] : v.items()) {
                axes.emplace_back(axis, values);
            }
            regrid = true;
        }
        else {
            throw ValidationError("detector config: unknown key '" + key + "'");
        }
    }
    if (regrid) {
        s.grid = make_grid(base, axes);
    }
    check_conformance(s);
    return s;
}

struct TrainedDetector {
    std::string name;
    std::string note;
    FittedFeaturizer featurizer;
    std::shared_ptr<const Classifier> classifier;
    // training metadata
    std::uint64_t seed = 0;
    int folds = 0;
    bool time_aware = false;
    std::vector<ClassifierParams> grid;
    std::vector<std::optional<double>> grid_scores; // mean validation A_mean per grid point
    std::size_t chosen = 0;
};

struct Prediction {
    std::vector<int> labels; // 1 malware, 0 goodware
    std::vector<double> scores;
};

inline Prediction predict(const TrainedDetector& d, std::span<const AppRecord* const> records)
{
    const auto x = d.featurizer.transform(records);
    Prediction p;
    p.scores = d.classifier->scores(x);
    p.labels.resize(p.scores.size());
    for (std::size_t i = 0; i < p.scores.size(); ++i) {
        p.labels[i] = p.scores[i] > d.classifier->threshold() ? 1 : 0;
    }
    return p;
}

inline Prediction predict(const TrainedDetector& d, std::span<const AppRecord> records)
{
    std::vector<const AppRecord*> ptr;
    for (const auto& r : records) {
        ptr.push_back(&r);
    }
    return predict(d, ptr);
}

using FoldView = std::pair<std::vector<std::size_t>, std::vector<std::size_t>>; // (train rows, validation rows)

/// Grid search over `views` (indices into `train`), then refit on all of `train`.
inline TrainedDetector fit_detector(const DetectorSpec& spec, const TrainPartition& train,
                                    std::span<const FoldView> views, std::uint64_t seed, bool time_aware = false)
{
    check_conformance(spec);
    TrainedDetector out;
    out.name = spec.name;
    out.note = spec.note;
    out.seed = seed;
    out.folds = static_cast<int>(views.size());
    out.time_aware = time_aware;
    out.grid = spec.grid;
    auto features = spec.features;
    features.hmm.seed = derive_seed(seed, "hmm");
    for (auto& p : out.grid) {
        p.seed = derive_seed(seed, "classifier");
    }

    if (out.grid.size() > 1 && !views.empty()) {
        struct FoldData {
            SparseMatrix xtr, xva;
            std::vector<int> ytr, yva;
        };
        std::vector<FoldData> data(views.size());
        parallel_for(views.size(), [&](std::size_t f) {
            const auto tr = train.subset(views[f].first);
            const auto va = train.subset(views[f].second);
            const auto fz = fit_featurizer(features, tr);
            data[f] = {fz.transform(tr.records()), fz.transform(va.records()), tr.targets(), va.targets()};
        });
        const std::size_t g = out.grid.size(), k = views.size();
        std::vector<std::optional<double>> score(g * k);
        parallel_for(g * k, [&](std::size_t t) {
            const auto& d = data[t % k];
            auto c = make_classifier(out.grid[t / k]);
            c->fit(d.xtr, d.ytr);
            score[t] = metrics(confusion(d.yva, c->predict(d.xva))).a_mean;
        });
        out.grid_scores.assign(g, std::nullopt);
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < g; ++p) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t f = 0; f < k; ++f) {
                if (score[p * k + f]) {
                    sum += *score[p * k + f];
                    ++n;
                }
            }
            if (n > 0) {
                out.grid_scores[p] = sum / n;
                if (*out.grid_scores[p] > best) {
                    best = *out.grid_scores[p];
                    out.chosen = p;
                }
            }
        }
    }
    out.featurizer = fit_featurizer(features, train);
    auto c = make_classifier(out.grid[out.chosen]);
    c->fit(out.featurizer.transform(train.records()), train.targets());
    out.classifier = std::move(c);
    return out;
}

inline TrainedDetector fit_detector(const DetectorSpec& spec, std::span<const AppRecord> records, const SplitPlan& plan,
                                    std::uint64_t seed)
{
    const auto train = TrainPartition::from_plan(records, plan);
    std::vector<FoldView> views;
    if (!plan.folds.empty()) {
        views = fold_views(plan);
    }
    return fit_detector(spec, train, views, seed, plan.time_aware);
}

constexpr int model_format_version = 1;

inline nlohmann::json detector_to_json(const TrainedDetector& d)
{
    nlohmann::json grid = nlohmann::json::array(), scores = nlohmann::json::array();
    for (const auto& p : d.grid) {
        grid.push_back(params_to_json(p));
    }
    for (const auto& s : d.grid_scores) {
        scores.push_back(optional_json(s));
    }
    return {{"format", "apkbench-model"},
            {"version", model_format_version},
            {"detector", d.name},
            {"note", d.note},
            {"featurizer", featurizer_to_json(d.featurizer)},
            {"classifier", d.classifier->to_json()},
            {"training",
             {{"seed", d.seed},
              {"folds", d.folds},
              {"time_aware", d.time_aware},
              {"grid", grid},
              {"grid_scores", scores},
              {"chosen", d.chosen}}}};
}

inline TrainedDetector trained_detector_from_json(const nlohmann::json& j)
{
    if (j.value("format", "") != "apkbench-model") {
        throw ParseError("model file: not an apkbench model");
    }
    if (j.at("version").get<int>() != model_format_version) {
        throw ParseError("model file: unsupported version " + j.at("version").dump());
    }
    TrainedDetector d;
    d.name = j.at("detector").get<std::string>();
    conformance_row(d.name);
    d.note = j.at("note").get<std::string>();
    d.featurizer = featurizer_from_json(j.at("featurizer"));
    d.classifier = classifier_from_json(j.at("classifier"));
    if (d.classifier->dims() != d.featurizer.space.size()) {
        throw ValidationError("model file: classifier expects " + std::to_string(d.classifier->dims()) +
                              " features, feature space has " + std::to_string(d.featurizer.space.size()));
    }
    const auto& t = j.at("training");
    d.seed = t.at("seed").get<std::uint64_t>();
    d.folds = t.at("folds").get<int>();
    d.time_aware = t.at("time_aware").get<bool>();
    for (const auto& p : t.at("grid")) {
        d.grid.push_back(params_from_json(p));
    }
    for (const auto& s : t.at("grid_scores")) {
        d.grid_scores.push_back(s.is_null() ? std::nullopt : std::optional<double>(s.get<double>()));
    }
    d.chosen = t.at("chosen").get<std::size_t>();
    return d;
}

inline TrainedDetector load_detector(const std::filesystem::path& p)
{
    try {
        return trained_detector_from_json(nlohmann::json::parse(read_file(p)));
    }
    catch (const nlohmann::json::exception& e) {
        throw ParseError("model file " + p.string() + ": " + e.what());
    }
}

} // namespace apkbench
