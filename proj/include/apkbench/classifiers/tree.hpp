#pragma once

// CART trees on Gini impurity, and the bagged / rotated forests built on them.

#include <algorithm>
#include <limits>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "base.hpp"

namespace apkbench {

inline double gini(double pos, double n)
{
    if (n <= 0.0) {
        return 0.0;
    }
    const double p = pos / n;
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

struct TreeNode {
    int feature = -1; // -1: leaf
    double threshold = 0.0;
    int left = -1, right = -1;
    double value = 0.0; // malware fraction of training samples reaching the node
};

struct TreeOptions {
    int max_depth = 0;
    int min_leaf = 1;
    std::size_t mtry = 0; // features tried per split; 0 or >= d: all, no sampling
};

class Tree {
public:
    std::vector<TreeNode> nodes;

    /// `idx` may repeat rows (bootstrap).
    void fit(const DenseColumns& x, std::span<const int> y, std::vector<std::uint32_t> idx, const TreeOptions& opt,
             Rng& rng)
    {
        nodes.clear();
        build(x, y, idx, 0, opt, rng);
    }

    template <typename Row>
    double value(const Row& row) const
    {
        int n = 0;
        while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
            const auto& nd = nodes[static_cast<std::size_t>(n)];
            n = row(static_cast<std::size_t>(nd.feature)) <= nd.threshold ? nd.left : nd.right;
        }
        return nodes[static_cast<std::size_t>(n)].value;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& n : nodes) {
            j.push_back({n.feature, n.threshold, n.left, n.right, n.value});
        }
        return j;
    }

    static Tree from_json(const nlohmann::json& j, std::size_t dims)
    {
        Tree t;
        for (const auto& n : j) {
            TreeNode nd{n.at(0).get<int>(), n.at(1).get<double>(), n.at(2).get<int>(), n.at(3).get<int>(),
                        n.at(4).get<double>()};
            t.nodes.push_back(nd);
        }
        const auto count = static_cast<int>(t.nodes.size());
        for (const auto& nd : t.nodes) {
            if (nd.feature >= static_cast<int>(dims) ||
                (nd.feature >= 0 && (nd.left <= 0 || nd.right <= 0 || nd.left >= count || nd.right >= count))) {
                throw ValidationError("tree model: malformed node");
            }
        }
        if (t.nodes.empty()) {
            throw ValidationError("tree model: no nodes");
        }
        return t;
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double impurity = 0.0;
    };

    int build(const DenseColumns& x, std::span<const int> y, std::vector<std::uint32_t>& idx, int depth,
              const TreeOptions& opt, Rng& rng)
    {
        const int id = static_cast<int>(nodes.size());
        nodes.emplace_back();
        double pos = 0.0;
        for (auto i : idx) {
            pos += y[i];
        }
        const auto n = static_cast<double>(idx.size());
        nodes[static_cast<std::size_t>(id)].value = pos / n;
        const bool pure = pos == 0.0 || pos == n;
        if (pure || (opt.max_depth > 0 && depth >= opt.max_depth) ||
            idx.size() < 2 * static_cast<std::size_t>(opt.min_leaf)) {
            return id;
        }
        const auto split = best_split(x, y, idx, pos, opt, rng);
        if (split.feature < 0) {
            return id;
        }
        std::vector<std::uint32_t> left, right;
        const double* col = x.column(static_cast<std::size_t>(split.feature));
        for (auto i : idx) {
            (col[i] <= split.threshold ? left : right).push_back(i);
        }
        idx.clear();
        idx.shrink_to_fit();
        nodes[static_cast<std::size_t>(id)].feature = split.feature;
        nodes[static_cast<std::size_t>(id)].threshold = split.threshold;
        const int l = build(x, y, left, depth + 1, opt, rng);
        nodes[static_cast<std::size_t>(id)].left = l;
        const int r = build(x, y, right, depth + 1, opt, rng);
        nodes[static_cast<std::size_t>(id)].right = r;
        return id;
    }

    Split best_split(const DenseColumns& x, std::span<const int> y, const std::vector<std::uint32_t>& idx, double pos,
                     const TreeOptions& opt, Rng& rng) const
    {
        const std::size_t d = x.cols;
        std::vector<std::uint32_t> feats;
        if (opt.mtry == 0 || opt.mtry >= d) {
            feats.resize(d);
            std::iota(feats.begin(), feats.end(), 0u);
        }
        else {
            std::vector<std::uint32_t> all(d);
            std::iota(all.begin(), all.end(), 0u);
            for (std::size_t i = 0; i < opt.mtry; ++i) {
                std::swap(all[i], all[i + rng.below(d - i)]);
            }
            feats.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(opt.mtry));
            std::sort(feats.begin(), feats.end());
        }
        const auto n = static_cast<double>(idx.size());
        const auto min_leaf = static_cast<std::size_t>(opt.min_leaf);
        Split best;
        best.impurity = std::numeric_limits<double>::infinity();
        std::vector<std::pair<double, int>> vals(idx.size());
        for (auto f : feats) {
            const double* col = x.column(f);
            double lo = col[idx[0]], hi = lo;
            for (std::size_t k = 0; k < idx.size(); ++k) {
                const double v = col[idx[k]];
                vals[k] = {v, y[idx[k]]};
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (lo == hi) {
                continue;
            }
            std::sort(vals.begin(), vals.end());
            double lpos = 0.0;
            for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
                lpos += vals[k].second;
                if (vals[k].first == vals[k + 1].first) {
                    continue;
                }
                const std::size_t nl = k + 1, nr = vals.size() - nl;
                if (nl < min_leaf || nr < min_leaf) {
                    continue;
                }
                const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
                const double imp = (dl * gini(lpos, dl) + dr * gini(pos - lpos, dr)) / n;
                if (imp < best.impurity) {
                    double thr = 0.5 * (vals[k].first + vals[k + 1].first);
                    if (thr >= vals[k + 1].first) {
                        thr = vals[k].first;
                    }
                    best = {static_cast<int>(f), thr, imp};
                }
            }
        }
        return best;
    }
};

class DecisionTreeClassifier : public Classifier {
public:
    using Classifier::Classifier;
    const Tree& tree() const { return tree_; }

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        const auto dense = DenseColumns::from(x);
        std::vector<std::uint32_t> idx(dense.rows);
        std::iota(idx.begin(), idx.end(), 0u);
        Rng rng(derive_seed(params_.seed, "tree:0"));
        tree_.fit(dense, y, std::move(idx), {params_.max_depth, params_.min_leaf, 0}, rng);
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const auto dense = DenseColumns::from(x);
        std::vector<double> out(dense.rows);
        for (std::size_t i = 0; i < dense.rows; ++i) {
            out[i] = tree_.value([&](std::size_t f) { return dense.at(i, f); });
        }
        return out;
    }

    nlohmann::json state_to_json() const override { return {{"tree", tree_.to_json()}}; }
    void state_from_json(const nlohmann::json& j) override { tree_ = Tree::from_json(j.at("tree"), dims_); }

private:
    Tree tree_;
};

/// Block-diagonal rotation: each subset's principal axes written back onto
/// the subset's own (sorted) coordinates.
struct Rotation {
    std::vector<std::vector<std::uint32_t>> subsets;
    std::vector<Eigen::MatrixXd> axes; // |subset| x |subset|, column c = component c

    DenseColumns apply(const DenseColumns& x) const
    {
        DenseColumns out;
        out.rows = x.rows;
        out.cols = x.cols;
        out.v.assign(x.v.size(), 0.0);
        for (std::size_t s = 0; s < subsets.size(); ++s) {
            const auto& sub = subsets[s];
            const auto& r = axes[s];
            for (std::size_t c = 0; c < sub.size(); ++c) {
                double* dst = out.v.data() + static_cast<std::size_t>(sub[c]) * x.rows;
                for (std::size_t f = 0; f < sub.size(); ++f) {
                    const double w = r(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(c));
                    if (w == 0.0) {
                        continue;
                    }
                    const double* src = x.column(sub[f]);
                    for (std::size_t i = 0; i < x.rows; ++i) {
                        dst[i] += w * src[i];
                    }
                }
            }
        }
        return out;
    }

    static Rotation fit(const DenseColumns& x, int subset_size, double sample_fraction, Rng& rng)
    {
        Rotation rot;
        std::vector<std::uint32_t> order(x.cols);
        std::iota(order.begin(), order.end(), 0u);
        rng.shuffle(order);
        const auto k = static_cast<std::size_t>(subset_size);
        for (std::size_t at = 0; at < order.size(); at += k) {
            std::vector<std::uint32_t> sub(order.begin() + static_cast<std::ptrdiff_t>(at),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(at + k, order.size())));
            std::sort(sub.begin(), sub.end());
            const auto m = std::max<std::size_t>(
                2, static_cast<std::size_t>(std::llround(sample_fraction * static_cast<double>(x.rows))));
            std::vector<std::size_t> rows(m);
            for (auto& r : rows) {
                r = rng.below(x.rows);
            }
            const auto s = static_cast<Eigen::Index>(sub.size());
            Eigen::MatrixXd data(static_cast<Eigen::Index>(m), s);
            for (Eigen::Index f = 0; f < s; ++f) {
                for (std::size_t i = 0; i < m; ++i) {
                    data(static_cast<Eigen::Index>(i), f) = x.at(rows[i], sub[static_cast<std::size_t>(f)]);
                }
            }
            const Eigen::RowVectorXd mean = data.colwise().mean();
            data.rowwise() -= mean;
            const Eigen::MatrixXd cov = data.transpose() * data / static_cast<double>(m - 1);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
            Eigen::MatrixXd axes(s, s);
            for (Eigen::Index c = 0; c < s; ++c) {
                // descending eigenvalue order; sign fixed so the largest |entry| is positive
                Eigen::VectorXd v = es.eigenvectors().col(s - 1 - c);
                Eigen::Index arg = 0;
                v.cwiseAbs().maxCoeff(&arg);
                if (v(arg) < 0.0) {
                    v = -v;
                }
                axes.col(c) = v;
            }
            rot.subsets.push_back(std::move(sub));
            rot.axes.push_back(std::move(axes));
        }
        return rot;
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j = nlohmann::json::array();
        for (std::size_t s = 0; s < subsets.size(); ++s) {
            std::vector<double> flat(axes[s].data(), axes[s].data() + axes[s].size());
            j.push_back({{"features", subsets[s]}, {"axes", flat}});
        }
        return j;
    }

    static Rotation from_json(const nlohmann::json& j, std::size_t dims)
    {
        Rotation r;
        for (const auto& s : j) {
            auto sub = s.at("features").get<std::vector<std::uint32_t>>();
            const auto flat = s.at("axes").get<std::vector<double>>();
            if (flat.size() != sub.size() * sub.size()) {
                throw ValidationError("rotation model: axis block size mismatch");
            }
            for (auto f : sub) {
                if (f >= dims) {
                    throw ValidationError("rotation model: feature out of range");
                }
            }
            const auto n = static_cast<Eigen::Index>(sub.size());
            r.axes.push_back(Eigen::Map<const Eigen::MatrixXd>(flat.data(), n, n));
            r.subsets.push_back(std::move(sub));
        }
        return r;
    }
};

/// Random forest, or rotation forest when `rotate` is set. Score is the
/// fraction of trees voting malware.
class ForestClassifier : public Classifier {
public:
    ForestClassifier(ClassifierParams p, bool rotate) : Classifier(std::move(p)), rotate_(rotate) {}
    const std::vector<Tree>& trees() const { return trees_; }

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        const auto dense = DenseColumns::from(x);
        const std::size_t d = dense.cols;
        TreeOptions opt{params_.max_depth, params_.min_leaf, 0};
        if (params_.max_features == 0.0) {
            opt.mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(d))));
        }
        else {
            opt.mtry = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(params_.max_features * static_cast<double>(d))));
        }
        const auto count = static_cast<std::size_t>(params_.trees);
        trees_.assign(count, {});
        rotations_.assign(rotate_ ? count : 0, {});
        parallel_for(count, [&](std::size_t t) {
            Rng rng(derive_seed(params_.seed, "tree:" + std::to_string(t)));
            std::vector<std::uint32_t> idx(dense.rows);
            if (params_.bootstrap) {
                for (auto& i : idx) {
                    i = static_cast<std::uint32_t>(rng.below(dense.rows));
                }
            }
            else {
                std::iota(idx.begin(), idx.end(), 0u);
            }
            if (rotate_) {
                Rng rot_rng(derive_seed(params_.seed, "rotation:" + std::to_string(t)));
                rotations_[t] = Rotation::fit(dense, params_.rotation_subset, params_.rotation_sample, rot_rng);
                trees_[t].fit(rotations_[t].apply(dense), y, std::move(idx), opt, rng);
            }
            else {
                trees_[t].fit(dense, y, std::move(idx), opt, rng);
            }
        });
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const auto dense = DenseColumns::from(x);
        std::vector<std::vector<char>> votes(trees_.size());
        parallel_for(trees_.size(), [&](std::size_t t) {
            const DenseColumns rotated = rotate_ ? rotations_[t].apply(dense) : DenseColumns{};
            const DenseColumns& in = rotate_ ? rotated : dense;
            votes[t].resize(in.rows);
            for (std::size_t i = 0; i < in.rows; ++i) {
                votes[t][i] = trees_[t].value([&](std::size_t f) { return in.at(i, f); }) > 0.5;
            }
        });
        std::vector<double> out(dense.rows, 0.0);
        for (const auto& v : votes) {
            for (std::size_t i = 0; i < out.size(); ++i) {
                out[i] += v[i];
            }
        }
        for (auto& s : out) {
            s /= static_cast<double>(trees_.size());
        }
        return out;
    }

    nlohmann::json state_to_json() const override
    {
        nlohmann::json t = nlohmann::json::array(), r = nlohmann::json::array();
        for (const auto& tree : trees_) {
            t.push_back(tree.to_json());
        }
        for (const auto& rot : rotations_) {
            r.push_back(rot.to_json());
        }
        return {{"trees", t}, {"rotations", r}};
    }

    void state_from_json(const nlohmann::json& j) override
    {
        trees_.clear();
        rotations_.clear();
        for (const auto& t : j.at("trees")) {
            trees_.push_back(Tree::from_json(t, dims_));
        }
        for (const auto& r : j.at("rotations")) {
            rotations_.push_back(Rotation::from_json(r, dims_));
        }
        if (trees_.empty() || (rotate_ && rotations_.size() != trees_.size())) {
            throw ValidationError("forest model: tree/rotation count mismatch");
        }
    }

private:
    bool rotate_;
    std::vector<Tree> trees_;
    std::vector<Rotation> rotations_;
};

} // namespace apkbench
