#pragma once

// Shared classifier interface. Targets are 0 (goodware) / 1 (malware);
// every backend yields a real malware score and a per-backend threshold.

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <nlohmann/json.hpp>

#include "../app_ir.hpp"
#include "../common.hpp"

namespace apkbench {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

enum class ClassifierKind { decision_tree, random_forest, rotation_forest, linear_svm, naive_bayes_net, mlp, knn };

inline std::string_view to_string(ClassifierKind k)
{
    switch (k) {
    case ClassifierKind::decision_tree: return "decision-tree";
    case ClassifierKind::random_forest: return "random-forest";
    case ClassifierKind::rotation_forest: return "rotation-forest";
    case ClassifierKind::linear_svm: return "linear-svm";
    case ClassifierKind::naive_bayes_net: return "naive-bayes-net";
    case ClassifierKind::mlp: return "mlp";
    case ClassifierKind::knn: return "knn";
    }
    return "?";
}

inline ClassifierKind classifier_kind_from(std::string_view s)
{
    static constexpr ClassifierKind all[] = {ClassifierKind::decision_tree,   ClassifierKind::random_forest,
                                             ClassifierKind::rotation_forest, ClassifierKind::linear_svm,
                                             ClassifierKind::naive_bayes_net, ClassifierKind::mlp,
                                             ClassifierKind::knn};
    return detail::enum_from(s, all, "classifier");
}

/// Union of every backend's hyperparameters; each backend reads its own.
struct ClassifierParams {
    ClassifierKind kind = ClassifierKind::decision_tree;
    std::uint64_t seed = 1;
    // trees
    int max_depth = 0; // 0: unlimited
    int min_leaf = 1;
    // forests
    int trees = 32;
    bool bootstrap = true;
    double max_features = 0.0; // 0: sqrt(d); otherwise a fraction of d in (0, 1]
    int rotation_subset = 3;
    double rotation_sample = 0.75;
    // linear svm
    double lambda = 0.1;
    int svm_epochs = 200;
    // naive bayes
    double alpha = 1.0;
    bool tan = false;
    // mlp
    int hidden = 32;
    double learning_rate = 0.01;
    int batch = 32;
    int mlp_epochs = 60;
    double l2 = 1e-4;
    // knn
    int k = 3;

    void validate() const
    {
        auto bad = [](const std::string& m) { throw ValidationError("classifier: " + m); };
        if (max_depth < 0) bad("max_depth must be >= 0");
        if (min_leaf < 1) bad("min_leaf must be >= 1");
        if (trees < 1) bad("trees must be >= 1");
        if (max_features < 0.0 || max_features > 1.0) bad("max_features must be in [0, 1]");
        if (rotation_subset < 1) bad("rotation_subset must be >= 1");
        if (!(rotation_sample > 0.0 && rotation_sample <= 1.0)) bad("rotation_sample must be in (0, 1]");
        if (!(lambda > 0.0)) bad("lambda must be > 0");
        if (svm_epochs < 1 || mlp_epochs < 1) bad("epochs must be >= 1");
        if (!(alpha > 0.0)) bad("alpha must be > 0");
        if (hidden < 1) bad("hidden must be >= 1");
        if (!(learning_rate > 0.0)) bad("learning_rate must be > 0");
        if (batch < 1) bad("batch must be >= 1");
        if (l2 < 0.0) bad("l2 must be >= 0");
        if (k < 1) bad("k must be >= 1");
    }
};

inline nlohmann::json params_to_json(const ClassifierParams& p)
{
    return {{"kind", to_string(p.kind)},
            {"seed", p.seed},
            {"max_depth", p.max_depth},
            {"min_leaf", p.min_leaf},
            {"trees", p.trees},
            {"bootstrap", p.bootstrap},
            {"max_features", p.max_features},
            {"rotation_subset", p.rotation_subset},
            {"rotation_sample", p.rotation_sample},
            {"lambda", p.lambda},
            {"svm_epochs", p.svm_epochs},
            {"alpha", p.alpha},
            {"tan", p.tan},
            {"hidden", p.hidden},
            {"learning_rate", p.learning_rate},
            {"batch", p.batch},
            {"mlp_epochs", p.mlp_epochs},
            {"l2", p.l2},
            {"k", p.k}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ClassifierParams params_from_json(const nlohmann::json& j, ClassifierParams p = {})
{
    for (const auto& [key, v] : j.items()) {
        if (key == "kind") p.kind = classifier_kind_from(v.get<std::string>());
        else if (key == "seed") p.seed = v.get<std::uint64_t>();
        else if (key == "max_depth") p.max_depth = v.is_null() ? 0 : v.get<int>();
        else if (key == "min_leaf") p.min_leaf = v.get<int>();
        else if (key == "trees") p.trees = v.get<int>();
        else if (key == "bootstrap") p.bootstrap = v.get<bool>();
        else if (key == "max_features") p.max_features = v.get<double>();
        else if (key == "rotation_subset") p.rotation_subset = v.get<int>();
        else if (key == "rotation_sample") p.rotation_sample = v.get<double>();
        else if (key == "lambda") p.lambda = v.get<double>();
        else if (key == "svm_epochs") p.svm_epochs = v.get<int>();
        else if (key == "alpha") p.alpha = v.get<double>();
        else if (key == "tan") p.tan = v.get<bool>();
        else if (key == "hidden") p.hidden = v.get<int>();
        else if (key == "learning_rate") p.learning_rate = v.get<double>();
        else if (key == "batch") p.batch = v.get<int>();
        else if (key == "mlp_epochs") p.mlp_epochs = v.get<int>();
        else if (key == "l2") p.l2 = v.get<double>();
        else if (key == "k") p.k = v.get<int>();
        else throw ValidationError("classifier: unknown parameter '" + key + "'");
    }
    p.validate();
    return p;
}

class Classifier {
public:
    explicit Classifier(ClassifierParams p) : params_(std::move(p)) { params_.validate(); }
    virtual ~Classifier() = default;

    void fit(const SparseMatrix& x, std::span<const int> y)
    {
        if (static_cast<std::size_t>(x.rows()) != y.size() || y.empty()) {
            throw ValidationError("classifier: sample/label count mismatch");
        }
        bool has[2] = {false, false};
        for (int v : y) {
            if (v != 0 && v != 1) {
                throw ValidationError("classifier: labels must be 0 or 1");
            }
            has[v] = true;
        }
        if (!has[0] || !has[1]) {
            throw ValidationError("classifier: degenerate single-class training data");
        }
        dims_ = static_cast<std::size_t>(x.cols());
        do_fit(x, y);
    }

    std::vector<double> scores(const SparseMatrix& x) const
    {
        if (static_cast<std::size_t>(x.cols()) != dims_) {
            throw ValidationError("classifier: input has " + std::to_string(x.cols()) + " features, model expects " +
                                  std::to_string(dims_));
        }
        return do_scores(x);
    }

    std::vector<int> predict(const SparseMatrix& x) const
    {
        const auto s = scores(x);
        std::vector<int> out(s.size());
        for (std::size_t i = 0; i < s.size(); ++i) {
            out[i] = s[i] > threshold() ? 1 : 0;
        }
        return out;
    }

    /// Scores above this are malware.
    virtual double threshold() const { return 0.5; }
    const ClassifierParams& params() const { return params_; }
    std::size_t dims() const { return dims_; }

    nlohmann::json to_json() const
    {
        return {{"params", params_to_json(params_)}, {"dims", dims_}, {"state", state_to_json()}};
    }

protected:
    virtual void do_fit(const SparseMatrix& x, std::span<const int> y) = 0;
    virtual std::vector<double> do_scores(const SparseMatrix& x) const = 0;
    virtual nlohmann::json state_to_json() const = 0;

    ClassifierParams params_;
    std::size_t dims_ = 0;

    friend std::unique_ptr<Classifier> classifier_from_json(const nlohmann::json& j);
    virtual void state_from_json(const nlohmann::json& j) = 0;
};

/// Column-major dense copy of a sparse matrix.
struct DenseColumns {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;
    double at(std::size_t i, std::size_t f) const { return v[f * rows + i]; }
    const double* column(std::size_t f) const { return v.data() + f * rows; }

    static DenseColumns from(const SparseMatrix& x)
    {
        DenseColumns d;
        d.rows = static_cast<std::size_t>(x.rows());
        d.cols = static_cast<std::size_t>(x.cols());
        d.v.assign(d.rows * d.cols, 0.0);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                d.v[static_cast<std::size_t>(it.col()) * d.rows + static_cast<std::size_t>(i)] = it.value();
            }
        }
        return d;
    }
};

} // namespace apkbench
