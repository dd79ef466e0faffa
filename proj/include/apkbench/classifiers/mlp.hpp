#pragma once

// One-hidden-layer perceptron: sigmoid hidden units, logistic output,
// mean cross-entropy plus L2, trained by mini-batch Adam.

#include <numeric>

#include "base.hpp"

namespace apkbench {

struct MlpWeights {
    Eigen::MatrixXd w1; // d x H
    Eigen::VectorXd b1; // H
    Eigen::VectorXd w2; // H
    double b2 = 0.0;

    std::size_t size() const { return static_cast<std::size_t>(w1.size() + b1.size() + w2.size() + 1); }
    static MlpWeights zeros_like(const MlpWeights& m)
    {
        return {Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols()), Eigen::VectorXd::Zero(m.b1.size()),
                Eigen::VectorXd::Zero(m.w2.size()), 0.0};
    }
    /// Flat view order: w1 (column-major), b1, w2, b2.
    double& at(std::size_t k)
    {
        const auto n1 = static_cast<std::size_t>(w1.size()), n2 = static_cast<std::size_t>(b1.size()),
                   n3 = static_cast<std::size_t>(w2.size());
        if (k < n1) return w1.data()[k];
        k -= n1;
        if (k < n2) return b1.data()[k];
        k -= n2;
        if (k < n3) return w2.data()[k];
        return b2;
    }
};

inline Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z)
{
    return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

/// Output probabilities for every row of x.
inline Eigen::VectorXd mlp_forward(const MlpWeights& w, const SparseMatrix& x)
{
    Eigen::MatrixXd h = x * w.w1;
    h.rowwise() += w.b1.transpose();
    h = sigmoid(h);
    Eigen::VectorXd z = h * w.w2;
    z.array() += w.b2;
    return sigmoid(z);
}

/// Mean cross-entropy + l2/2 (|w1|^2 + |w2|^2); fills `grad` when given.
inline double mlp_loss_and_gradient(const MlpWeights& w, const SparseMatrix& x, std::span<const int> y, double l2,
                                    MlpWeights* grad)
{
    const auto n = static_cast<double>(x.rows());
    Eigen::MatrixXd h = x * w.w1;
    h.rowwise() += w.b1.transpose();
    h = sigmoid(h);
    Eigen::VectorXd z = h * w.w2;
    z.array() += w.b2;
    double loss = 0.0;
    Eigen::VectorXd dz(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double t = y[static_cast<std::size_t>(i)];
        // log(1 + e^z) - t z, computed stably
        const double zi = z(i);
        loss += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - t * zi;
        dz(i) = (1.0 / (1.0 + std::exp(-zi)) - t) / n;
    }
    loss = loss / n + 0.5 * l2 * (w.w1.squaredNorm() + w.w2.squaredNorm());
    if (grad) {
        grad->w2 = h.transpose() * dz + l2 * w.w2;
        grad->b2 = dz.sum();
        const Eigen::MatrixXd dh = (dz * w.w2.transpose()).cwiseProduct(h.cwiseProduct((1.0 - h.array()).matrix()));
        grad->b1 = dh.colwise().sum().transpose();
        grad->w1 = x.transpose() * dh + l2 * w.w1;
    }
    return loss;
}

class MlpClassifier : public Classifier {
public:
    using Classifier::Classifier;
    const MlpWeights& weights() const { return w_; }

    static MlpWeights initial_weights(std::size_t d, int hidden, std::uint64_t seed)
    {
        Rng rng(derive_seed(seed, "mlp-init"));
        const auto H = static_cast<Eigen::Index>(hidden);
        MlpWeights w{Eigen::MatrixXd(static_cast<Eigen::Index>(d), H), Eigen::VectorXd::Zero(H), Eigen::VectorXd(H), 0.0};
        const double r1 = std::sqrt(6.0 / static_cast<double>(d + static_cast<std::size_t>(hidden)));
        const double r2 = std::sqrt(6.0 / static_cast<double>(hidden + 1));
        for (Eigen::Index c = 0; c < w.w1.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.w1.rows(); ++r) {
                w.w1(r, c) = rng.uniform(-r1, r1);
            }
        }
        for (Eigen::Index i = 0; i < H; ++i) {
            w.w2(i) = rng.uniform(-r2, r2);
        }
        return w;
    }

protected:
    void do_fit(const SparseMatrix& x, std::span<const int> y) override
    {
        w_ = initial_weights(dims_, params_.hidden, params_.seed);
        auto m = MlpWeights::zeros_like(w_), v = MlpWeights::zeros_like(w_);
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        Rng rng(derive_seed(params_.seed, "mlp-batches"));
        std::vector<std::size_t> order(static_cast<std::size_t>(x.rows()));
        std::iota(order.begin(), order.end(), 0u);
        const auto batch = static_cast<std::size_t>(params_.batch);
        long step = 0;
        for (int epoch = 0; epoch < params_.mlp_epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t at = 0; at < order.size(); at += batch) {
                const std::size_t end = std::min(order.size(), at + batch);
                SparseMatrix xb(static_cast<Eigen::Index>(end - at), x.cols());
                std::vector<Eigen::Triplet<double>> trip;
                std::vector<int> yb;
                for (std::size_t k = at; k < end; ++k) {
                    const auto i = static_cast<Eigen::Index>(order[k]);
                    for (SparseMatrix::InnerIterator it(x, i); it; ++it) {
                        trip.emplace_back(static_cast<int>(k - at), static_cast<int>(it.col()), it.value());
                    }
                    yb.push_back(y[order[k]]);
                }
                xb.setFromTriplets(trip.begin(), trip.end());
                MlpWeights g;
                mlp_loss_and_gradient(w_, xb, yb, params_.l2, &g);
                ++step;
                const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
                const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
                const double lr = params_.learning_rate;
                auto adam = [&](auto& p, auto& mm, auto& vv, const auto& gg) {
                    mm = beta1 * mm + (1.0 - beta1) * gg;
                    vv = beta2 * vv + (1.0 - beta2) * gg.cwiseProduct(gg);
                    p -= (lr * (mm / c1).array() / ((vv / c2).array().sqrt() + eps)).matrix();
                };
                adam(w_.w1, m.w1, v.w1, g.w1);
                adam(w_.b1, m.b1, v.b1, g.b1);
                adam(w_.w2, m.w2, v.w2, g.w2);
                m.b2 = beta1 * m.b2 + (1.0 - beta1) * g.b2;
                v.b2 = beta2 * v.b2 + (1.0 - beta2) * g.b2 * g.b2;
                w_.b2 -= lr * (m.b2 / c1) / (std::sqrt(v.b2 / c2) + eps);
            }
        }
    }

    std::vector<double> do_scores(const SparseMatrix& x) const override
    {
        const Eigen::VectorXd p = mlp_forward(w_, x);
        return {p.data(), p.data() + p.size()};
    }

    nlohmann::json state_to_json() const override
    {
        return {{"w1", std::vector<double>(w_.w1.data(), w_.w1.data() + w_.w1.size())},
                {"b1", std::vector<double>(w_.b1.data(), w_.b1.data() + w_.b1.size())},
                {"w2", std::vector<double>(w_.w2.data(), w_.w2.data() + w_.w2.size())},
                {"b2", w_.b2}};
    }

    void state_from_json(const nlohmann::json& j) override
    {
        const auto w1 = j.at("w1").get<std::vector<double>>();
        const auto b1 = j.at("b1").get<std::vector<double>>();
        const auto w2 = j.at("w2").get<std::vector<double>>();
        const auto H = static_cast<std::size_t>(params_.hidden);
        if (w1.size() != dims_ * H || b1.size() != H || w2.size() != H) {
            throw ValidationError("mlp model: weight shape mismatch");
        }
        const auto h = static_cast<Eigen::Index>(H);
        w_.w1 = Eigen::Map<const Eigen::MatrixXd>(w1.data(), static_cast<Eigen::Index>(dims_), h);
        w_.b1 = Eigen::Map<const Eigen::VectorXd>(b1.data(), h);
        w_.w2 = Eigen::Map<const Eigen::VectorXd>(w2.data(), h);
        w_.b2 = j.at("b2").get<double>();
    }

private:
    MlpWeights w_;
};

} // namespace apkbench
