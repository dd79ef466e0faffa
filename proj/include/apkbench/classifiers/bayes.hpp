#pragma once

// Bayesian network classifier over binarized features: naive structure
// (class -> every feature), or tree-augmented when params.tan is set.
// A feature is present when its value is positive.

#include <algorithm>
#include <array>
#include <limits>

#include "base.hpp"

namespace apkbench {

class NaiveBayesNetClassifier : public Classifier {
public:
    using Classifier::Classifier;

    /// parent[j] is the feature parent of j (-1: class only).
    const std::vector<int>& parents() const { return parent_; }

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        const auto d = static_cast<std::size_t>(x.cols());
        const double a = params_.alpha;
        double nc[2] = {0.0, 0.0};
        std::vector<double> njc[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            const int c = y[static_cast<std::size_t>(i)];
            nc[c] += 1.0;
            for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                if (it.value() > 0.0) {
                    njc[c][static_cast<std::size_t>(it.col())] += 1.0;
                }
            }
        }
        const double n = nc[0] + nc[1];
        parent_.assign(d, -1);
        for (int c = 0; c < 2; ++c) {
            prior_[c] = std::log((nc[c] + a) / (n + 2.0 * a));
            theta_[c].assign(d, 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                theta_[c][j] = (njc[c][j] + a) / (nc[c] + 2.0 * a);
            }
        }
        if (!params_.tan || d < 2) {
            return;
        }

        // pairwise co-occurrence per class
        Eigen::MatrixXd n11[2];
        for (int c = 0; c < 2; ++c) {
            std::vector<Eigen::Triplet<double>> trip;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                if (y[static_cast<std::size_t>(i)] != c) {
                    continue;
                }
                for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                    if (it.value() > 0.0) {
                        trip.emplace_back(static_cast<int>(i), static_cast<int>(it.col()), 1.0);
                    }
                }
            }
            Eigen::SparseMatrix<double> b(x.rows(), x.cols());
            b.setFromTriplets(trip.begin(), trip.end());
            n11[c] = Eigen::MatrixXd(b.transpose() * b);
        }
        auto cmi = [&](std::size_t i, std::size_t j) {
            double v = 0.0;
            for (int c = 0; c < 2; ++c) {
                const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
                const double both = n11[c](ii, jj);
                const double cell[2][2] = {{nc[c] - njc[c][i] - njc[c][j] + both, njc[c][j] - both},
                                           {njc[c][i] - both, both}};
                for (int p = 0; p < 2; ++p) {
                    for (int q = 0; q < 2; ++q) {
                        const double m = cell[p][q];
                        if (m <= 0.0) {
                            continue;
                        }
                        const double mi = p ? njc[c][i] : nc[c] - njc[c][i];
                        const double mj = q ? njc[c][j] : nc[c] - njc[c][j];
                        v += m / n * std::log(m * nc[c] / (mi * mj));
                    }
                }
            }
            return v;
        };
        // Prim's maximum spanning tree rooted at feature 0; ties keep the lower index
        std::vector<double> best(d, -std::numeric_limits<double>::infinity());
        std::vector<int> from(d, -1);
        std::vector<char> in(d, 0);
        std::size_t cur = 0;
        in[0] = 1;
        for (std::size_t step = 1; step < d; ++step) {
            for (std::size_t j = 0; j < d; ++j) {
                if (!in[j]) {
                    const double w = cmi(cur, j);
                    if (w > best[j]) {
                        best[j] = w;
                        from[j] = static_cast<int>(cur);
                    }
                }
            }
            std::size_t pick = d;
            for (std::size_t j = 0; j < d; ++j) {
                if (!in[j] && (pick == d || best[j] > best[pick])) {
                    pick = j;
                }
            }
            in[pick] = 1;
            parent_[pick] = from[pick];
            cur = pick;
        }
        for (int c = 0; c < 2; ++c) {
            cond_[c].assign(d, {0.0, 0.0});
            for (std::size_t j = 0; j < d; ++j) {
                if (parent_[j] < 0) {
                    continue;
                }
                const auto p = static_cast<std::size_t>(parent_[j]);
                const double both = n11[c](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(p));
                cond_[c][j][1] = (both + a) / (njc[c][p] + 2.0 * a);
                cond_[c][j][0] = (njc[c][j] - both + a) / (nc[c] - njc[c][p] + 2.0 * a);
            }
        }
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const std::size_t d = dims_;
        const bool tan = !cond_[0].empty();
        double base[2] = {prior_[0], prior_[1]};
        if (!tan) {
            for (int c = 0; c < 2; ++c) {
                for (std::size_t j = 0; j < d; ++j) {
                    base[c] += std::log(1.0 - theta_[c][j]);
                }
            }
        }
        std::vector<double> out(static_cast<std::size_t>(x.rows()));
        std::vector<char> row(d);
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            double lp[2] = {base[0], base[1]};
            if (!tan) {
                for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                    if (it.value() > 0.0) {
                        const auto j = static_cast<std::size_t>(it.col());
                        for (int c = 0; c < 2; ++c) {
                            lp[c] += std::log(theta_[c][j]) - std::log(1.0 - theta_[c][j]);
                        }
                    }
                }
            }
            else {
                std::fill(row.begin(), row.end(), 0);
                for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                    row[static_cast<std::size_t>(it.col())] = it.value() > 0.0;
                }
                for (int c = 0; c < 2; ++c) {
                    for (std::size_t j = 0; j < d; ++j) {
                        const double p1 = parent_[j] < 0 ? theta_[c][j]
                                                          : cond_[c][j][row[static_cast<std::size_t>(parent_[j])]];
                        lp[c] += std::log(row[j] ? p1 : 1.0 - p1);
                    }
                }
            }
            out[static_cast<std::size_t>(i)] = 1.0 / (1.0 + std::exp(lp[0] - lp[1]));
        }
        return out;
    }

    nlohmann::json state_to_json() const override
    {
        nlohmann::json j{{"prior", {prior_[0], prior_[1]}}, {"theta", {theta_[0], theta_[1]}}, {"parent", parent_}};
        if (!cond_[0].empty()) {
            j["cond"] = {cond_[0], cond_[1]};
        }
        return j;
    }

    void state_from_json(const nlohmann::json& j) override
    {
        for (int c = 0; c < 2; ++c) {
            prior_[c] = j.at("prior").at(static_cast<std::size_t>(c)).get<double>();
            theta_[c] = j.at("theta").at(static_cast<std::size_t>(c)).get<std::vector<double>>();
            cond_[c].clear();
            if (j.contains("cond")) {
                cond_[c] = j.at("cond").at(static_cast<std::size_t>(c)).get<std::vector<std::array<double, 2>>>();
            }
            if (theta_[c].size() != dims_ || (!cond_[c].empty() && cond_[c].size() != dims_)) {
                throw ValidationError("bayes model: parameter count mismatch");
            }
        }
        parent_ = j.at("parent").get<std::vector<int>>();
        if (parent_.size() != dims_) {
            throw ValidationError("bayes model: parent count mismatch");
        }
        for (int p : parent_) {
            if (p >= static_cast<int>(dims_) || (p >= 0 && cond_[0].empty())) {
                throw ValidationError("bayes model: bad parent");
            }
        }
    }

private:
    double prior_[2] = {0.0, 0.0};
    std::vector<double> theta_[2];
    std::vector<int> parent_;
    std::vector<std::array<double, 2>> cond_[2]; // P(x_j = 1 | x_parent = v, c)
};

} // namespace apkbench
