#pragma once

// Euclidean k-nearest neighbours; equal distances prefer the earlier
// training row. Score is the malware fraction among the k neighbours.

#include <algorithm>

#include "base.hpp"

namespace apkbench {

inline double squared_distance(const SparseMatrix& a, Eigen::Index i, const SparseMatrix& b, Eigen::Index j)
{
    SparseMatrix::InnerIterator p(a, i), q(b, j);
    double s = 0.0;
    while (p || q) {
        if (q && (!p || q.col() < p.col())) {
            s += q.value() * q.value();
            ++q;
        }
        else if (p && (!q || p.col() < q.col())) {
            s += p.value() * p.value();
            ++p;
        }
        else {
            const double d = p.value() - q.value();
            s += d * d;
            ++p;
            ++q;
        }
    }
    return s;
}

class KnnClassifier : public Classifier {
public:
    using Classifier::Classifier;

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        train_ = x;
        train_.makeCompressed();
        labels_.assign(y.begin(), y.end());
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const auto n = static_cast<std::size_t>(train_.rows());
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(params_.k), n);
        std::vector<double> out(static_cast<std::size_t>(x.rows()));
        parallel_for(out.size(), [&](std::size_t i) {
            std::vector<std::pair<double, std::size_t>> d(n);
            for (std::size_t j = 0; j < n; ++j) {
                d[j] = {squared_distance(x, static_cast<Eigen::Index>(i), train_, static_cast<Eigen::Index>(j)), j};
            }
            std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
            double mal = 0.0;
            for (std::size_t t = 0; t < k; ++t) {
                mal += labels_[d[t].second];
            }
            out[i] = mal / static_cast<double>(k);
        });
        return out;
    }

    nlohmann::json state_to_json() const override
    {
        nlohmann::json rows = nlohmann::json::array();
        for (Eigen::Index i = 0; i < train_.rows(); ++i) {
            nlohmann::json r = nlohmann::json::array();
            for (SparseMatrix::InnerIterator it(train_, i); it; ++it) {
                r.push_back({it.col(), it.value()});
            }
            rows.push_back(std::move(r));
        }
        return {{"rows", rows}, {"labels", labels_}};
    }

    void state_from_json(const nlohmann::json& j) override
    {
        labels_ = j.at("labels").get<std::vector<int>>();
        const auto& rows = j.at("rows");
        if (rows.size() != labels_.size() || labels_.empty()) {
            throw ValidationError("knn model: row/label count mismatch");
        }
        std::vector<Eigen::Triplet<double>> trip;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            for (const auto& e : rows[i]) {
                const auto c = e.at(0).get<Eigen::Index>();
                if (c < 0 || static_cast<std::size_t>(c) >= dims_) {
                    throw ValidationError("knn model: feature out of range");
                }
                trip.emplace_back(static_cast<int>(i), static_cast<int>(c), e.at(1).get<double>());
            }
        }
        train_ = SparseMatrix(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dims_));
        train_.setFromTriplets(trip.begin(), trip.end());
        train_.makeCompressed();
    }

private:
    SparseMatrix train_;
    std::vector<int> labels_;
};

} // namespace apkbench
