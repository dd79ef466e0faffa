#pragma once

// L2-regularized hinge-loss linear SVM trained by full-batch subgradient
// descent with a backtracking step, so the objective never increases.

#include "base.hpp"

namespace apkbench {

class LinearSvmClassifier : public Classifier {
public:
    using Classifier::Classifier;

    double threshold() const override { return 0.0; }
    const Eigen::VectorXd& weights() const { return w_; }
    double bias() const { return b_; }
    /// Objective after initialisation and after every epoch.
    const std::vector<double>& objective_history() const { return history_; }

    static double objective(const SparseMatrix& x, std::span<const int> y, const Eigen::VectorXd& w, double b,
                            double lambda)
    {
        const Eigen::VectorXd m = x * w;
        double loss = 0.0;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double s = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
            loss += std::max(0.0, 1.0 - s * (m(i) + b));
        }
        return 0.5 * lambda * w.squaredNorm() + loss / static_cast<double>(m.size());
    }

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        const double lambda = params_.lambda;
        const auto n = static_cast<double>(x.rows());
        w_ = Eigen::VectorXd::Zero(x.cols());
        b_ = 0.0;
        history_.assign(1, objective(x, y, w_, b_, lambda));
        double step = 1.0;
        for (int epoch = 0; epoch < params_.svm_epochs; ++epoch) {
            const Eigen::VectorXd m = x * w_;
            Eigen::VectorXd coef = Eigen::VectorXd::Zero(x.rows());
            double gb = 0.0;
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                const double s = y[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
                if (s * (m(i) + b_) < 1.0) {
                    coef(i) = -s / n;
                    gb -= s / n;
                }
            }
            const Eigen::VectorXd gw = lambda * w_ + x.transpose() * coef;
            if (gw.squaredNorm() + gb * gb == 0.0) {
                history_.push_back(history_.back());
                continue;
            }
            step *= 2.0;
            bool moved = false;
            for (int halving = 0; halving < 50; ++halving, step *= 0.5) {
                Eigen::VectorXd w2 = w_ - step * gw;
                const double b2 = b_ - step * gb;
                const double obj = objective(x, y, w2, b2, lambda);
                if (obj <= history_.back()) {
                    w_ = std::move(w2);
                    b_ = b2;
                    history_.push_back(obj);
                    moved = true;
                    break;
                }
            }
            if (!moved) {
                history_.push_back(history_.back());
                step = 1.0;
            }
        }
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const Eigen::VectorXd m = x * w_;
        std::vector<double> out(static_cast<std::size_t>(m.size()));
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            out[static_cast<std::size_t>(i)] = m(i) + b_;
        }
        return out;
    }

    nlohmann::json state_to_json() const override
    {
        return {{"w", std::vector<double>(w_.data(), w_.data() + w_.size())}, {"b", b_}};
    }

    void state_from_json(const nlohmann::json& j) override
    {
        const auto w = j.at("w").get<std::vector<double>>();
        if (w.size() != dims_) {
            throw ValidationError("svm model: weight count mismatch");
        }
        w_ = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
        b_ = j.at("b").get<double>();
    }

private:
    Eigen::VectorXd w_;
    double b_ = 0.0;
    std::vector<double> history_;
};

} // namespace apkbench
