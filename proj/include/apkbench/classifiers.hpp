#pragma once

#include "classifiers/base.hpp"
#include "classifiers/bayes.hpp"
#include "classifiers/knn.hpp"
#include "classifiers/linear.hpp"
#include "classifiers/mlp.hpp"
#include "classifiers/tree.hpp"

namespace apkbench {

inline std::unique_ptr<Classifier> make_classifier(const ClassifierParams& p)
{
    switch (p.kind) {
    case ClassifierKind::decision_tree: return std::make_unique<DecisionTreeClassifier>(p);
    case ClassifierKind::random_forest: return std::make_unique<ForestClassifier>(p, false);
    case ClassifierKind::rotation_forest: return std::make_unique<ForestClassifier>(p, true);
    case ClassifierKind::linear_svm: return std::make_unique<LinearSvmClassifier>(p);
    case ClassifierKind::naive_bayes_net: return std::make_unique<NaiveBayesNetClassifier>(p);
    case ClassifierKind::mlp: return std::make_unique<MlpClassifier>(p);
    case ClassifierKind::knn: return std::make_unique<KnnClassifier>(p);
    }
    throw ValidationError("classifier: unknown kind");
}

inline std::unique_ptr<Classifier> classifier_from_json(const nlohmann::json& j)
{
    auto c = make_classifier(params_from_json(j.at("params")));
    c->dims_ = j.at("dims").get<std::size_t>();
    c->state_from_json(j.at("state"));
    return c;
}

} // namespace apkbench
