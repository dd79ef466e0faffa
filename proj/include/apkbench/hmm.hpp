#pragma once

// Discrete hidden Markov models over opcode mnemonics: scaled forward
// algorithm and Baum-Welch re-estimation over many sequences.

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"

namespace apkbench {

struct HmmModel {
    int states = 1;
    std::vector<std::string> vocab; // symbol i <-> vocab[i]; index vocab.size() is "unseen"
    std::vector<double> pi;         // S
    std::vector<double> a;          // S x S, row-major
    std::vector<double> b;          // S x (V + 1), row-major

    std::size_t symbols() const { return vocab.size() + 1; }
    double A(int i, int j) const { return a[static_cast<std::size_t>(i * states + j)]; }
    double B(int i, std::size_t o) const { return b[static_cast<std::size_t>(i) * symbols() + o]; }

    std::vector<std::uint32_t> encode(std::span<const std::string> seq) const
    {
        std::map<std::string_view, std::uint32_t> index;
        for (std::size_t i = 0; i < vocab.size(); ++i) {
            index.emplace(vocab[i], static_cast<std::uint32_t>(i));
        }
        std::vector<std::uint32_t> out;
        out.reserve(seq.size());
        for (const auto& s : seq) {
            const auto it = index.find(s);
            out.push_back(it == index.end() ? static_cast<std::uint32_t>(vocab.size()) : it->second);
        }
        return out;
    }
};

/// log P(obs | model) by the scaled forward recursion. Empty input gives 0.
inline double log_likelihood(const HmmModel& m, std::span<const std::uint32_t> obs)
{
    const int S = m.states;
    if (obs.empty()) {
        return 0.0;
    }
    std::vector<double> alpha(static_cast<std::size_t>(S)), next(static_cast<std::size_t>(S));
    double ll = 0.0;
    for (std::size_t t = 0; t < obs.size(); ++t) {
        double c = 0.0;
        for (int j = 0; j < S; ++j) {
            double v;
            if (t == 0) {
                v = m.pi[static_cast<std::size_t>(j)];
            }
            else {
                v = 0.0;
                for (int i = 0; i < S; ++i) {
                    v += alpha[static_cast<std::size_t>(i)] * m.A(i, j);
                }
            }
            v *= m.B(j, obs[t]);
            next[static_cast<std::size_t>(j)] = v;
            c += v;
        }
        if (c <= 0.0) {
            return -std::numeric_limits<double>::infinity();
        }
        for (int j = 0; j < S; ++j) {
            alpha[static_cast<std::size_t>(j)] = next[static_cast<std::size_t>(j)] / c;
        }
        ll += std::log(c);
    }
    return ll;
}

struct HmmFitOptions {
    int states = 4;
    int max_iterations = 100;
    double tolerance = 1e-4; // on the mean per-symbol log-likelihood
    double emission_floor = 1e-8;
    std::uint64_t seed = 1;
};

struct HmmFitResult {
    HmmModel model;
    std::vector<double> log_likelihood; // total over sequences, one entry per E-step
    bool converged = false;
};

namespace hmm_detail {

inline void normalize(std::span<double> row)
{
    double s = 0.0;
    for (double v : row) {
        s += v;
    }
    if (s <= 0.0) {
        for (double& v : row) {
            v = 1.0 / static_cast<double>(row.size());
        }
        return;
    }
    for (double& v : row) {
        v /= s;
    }
}

inline void apply_floor(HmmModel& m, double floor)
{
    const std::size_t V = m.symbols();
    for (int i = 0; i < m.states; ++i) {
        std::span<double> row(m.b.data() + static_cast<std::size_t>(i) * V, V);
        for (double& v : row) {
            v = std::max(v, floor);
        }
        normalize(row);
    }
}

struct Stats {
    std::vector<double> pi, a, b, a_den;
    double ll = 0.0;
    explicit Stats(std::size_t S, std::size_t V) : pi(S, 0.0), a(S * S, 0.0), b(S * V, 0.0), a_den(S, 0.0) {}
};

/// Adds one sequence's expected counts to `st`.
inline void accumulate(const HmmModel& m, std::span<const std::uint32_t> obs, Stats& st)
{
    const auto S = static_cast<std::size_t>(m.states);
    const std::size_t V = m.symbols();
    const std::size_t T = obs.size();
    if (T == 0) {
        return;
    }
    std::vector<double> alpha(T * S), beta(T * S), scale(T);
    for (std::size_t t = 0; t < T; ++t) {
        double c = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            double v = 0.0;
            if (t == 0) {
                v = m.pi[j];
            }
            else {
                for (std::size_t i = 0; i < S; ++i) {
                    v += alpha[(t - 1) * S + i] * m.a[i * S + j];
                }
            }
            v *= m.b[j * V + obs[t]];
            alpha[t * S + j] = v;
            c += v;
        }
        scale[t] = c;
        for (std::size_t j = 0; j < S; ++j) {
            alpha[t * S + j] /= c;
        }
        st.ll += std::log(c);
    }
    for (std::size_t j = 0; j < S; ++j) {
        beta[(T - 1) * S + j] = 1.0;
    }
    for (std::size_t t = T - 1; t-- > 0;) {
        for (std::size_t i = 0; i < S; ++i) {
            double v = 0.0;
            for (std::size_t j = 0; j < S; ++j) {
                v += m.a[i * S + j] * m.b[j * V + obs[t + 1]] * beta[(t + 1) * S + j];
            }
            beta[t * S + i] = v / scale[t + 1];
        }
    }
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t i = 0; i < S; ++i) {
            const double g = alpha[t * S + i] * beta[t * S + i];
            if (t == 0) {
                st.pi[i] += g;
            }
            st.b[i * V + obs[t]] += g;
            if (t + 1 < T) {
                st.a_den[i] += g;
                for (std::size_t j = 0; j < S; ++j) {
                    st.a[i * S + j] += alpha[t * S + i] * m.a[i * S + j] * m.b[j * V + obs[t + 1]] *
                                       beta[(t + 1) * S + j] / scale[t + 1];
                }
            }
        }
    }
}

} // namespace hmm_detail

inline HmmModel random_hmm(int states, std::vector<std::string> vocab,
                           std::span<const std::vector<std::uint32_t>> seqs, std::uint64_t seed)
{
    HmmModel m;
    m.states = states;
    m.vocab = std::move(vocab);
    const auto S = static_cast<std::size_t>(states);
    const std::size_t V = m.symbols();
    std::vector<double> freq(V, 1.0);
    for (const auto& s : seqs) {
        for (auto o : s) {
            freq[o] += 1.0;
        }
    }
    Rng rng(derive_seed(seed, "hmm-init"));
    m.pi.resize(S);
    m.a.resize(S * S);
    m.b.resize(S * V);
    for (auto& v : m.pi) {
        v = rng.uniform(0.5, 1.5);
    }
    hmm_detail::normalize(m.pi);
    for (std::size_t i = 0; i < S; ++i) {
        for (std::size_t j = 0; j < S; ++j) {
            m.a[i * S + j] = rng.uniform(0.5, 1.5);
        }
        hmm_detail::normalize(std::span<double>(m.a.data() + i * S, S));
        for (std::size_t o = 0; o < V; ++o) {
            m.b[i * V + o] = freq[o] * rng.uniform(0.5, 1.5);
        }
        hmm_detail::normalize(std::span<double>(m.b.data() + i * V, V));
    }
    return m;
}

/// Baum-Welch from a seeded random start. `seqs` are symbol indices over
/// vocab (plus the unseen slot).
inline HmmFitResult baum_welch(std::span<const std::vector<std::uint32_t>> seqs, std::vector<std::string> vocab,
                               const HmmFitOptions& opt)
{
    if (opt.states < 1) {
        throw ValidationError("hmm: state count must be >= 1");
    }
    std::size_t total_symbols = 0;
    for (const auto& s : seqs) {
        total_symbols += s.size();
    }
    if (total_symbols == 0) {
        throw ValidationError("hmm: no observations to fit");
    }
    HmmFitResult res;
    res.model = random_hmm(opt.states, std::move(vocab), seqs, opt.seed);
    hmm_detail::apply_floor(res.model, opt.emission_floor);
    auto& m = res.model;
    const auto S = static_cast<std::size_t>(m.states);
    const std::size_t V = m.symbols();

    // fixed chunking keeps the reduction order independent of the thread count
    constexpr std::size_t chunks = 16;
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iterations; ++it) {
        std::vector<hmm_detail::Stats> part(chunks, hmm_detail::Stats(S, V));
        parallel_for(chunks, [&](std::size_t c) {
            for (std::size_t k = c; k < seqs.size(); k += chunks) {
                hmm_detail::accumulate(m, seqs[k], part[c]);
            }
        });
        hmm_detail::Stats st(S, V);
        for (const auto& p : part) {
            st.ll += p.ll;
            for (std::size_t i = 0; i < st.pi.size(); ++i) {
                st.pi[i] += p.pi[i];
            }
            for (std::size_t i = 0; i < st.a.size(); ++i) {
                st.a[i] += p.a[i];
            }
            for (std::size_t i = 0; i < st.b.size(); ++i) {
                st.b[i] += p.b[i];
            }
            for (std::size_t i = 0; i < st.a_den.size(); ++i) {
                st.a_den[i] += p.a_den[i];
            }
        }
        res.log_likelihood.push_back(st.ll);
        const double per_symbol = st.ll / static_cast<double>(total_symbols);
        if (std::abs(per_symbol - prev) < opt.tolerance) {
            res.converged = true;
            break;
        }
        prev = per_symbol;

        m.pi = st.pi;
        hmm_detail::normalize(m.pi);
        for (std::size_t i = 0; i < S; ++i) {
            std::span<double> arow(m.a.data() + i * S, S);
            if (st.a_den[i] > 0.0) {
                for (std::size_t j = 0; j < S; ++j) {
                    arow[j] = st.a[i * S + j];
                }
                hmm_detail::normalize(arow);
            }
            std::span<double> brow(m.b.data() + i * V, V);
            double mass = 0.0;
            for (std::size_t o = 0; o < V; ++o) {
                mass += st.b[i * V + o];
            }
            if (mass > 0.0) {
                for (std::size_t o = 0; o < V; ++o) {
                    brow[o] = st.b[i * V + o];
                }
                hmm_detail::normalize(brow);
            }
        }
        hmm_detail::apply_floor(m, opt.emission_floor);
    }
    return res;
}

inline nlohmann::json hmm_to_json(const HmmModel& m)
{
    return {{"states", m.states}, {"vocab", m.vocab}, {"pi", m.pi}, {"a", m.a}, {"b", m.b}};
}

inline HmmModel hmm_from_json(const nlohmann::json& j)
{
    HmmModel m;
    m.states = j.at("states").get<int>();
    m.vocab = j.at("vocab").get<std::vector<std::string>>();
    m.pi = j.at("pi").get<std::vector<double>>();
    m.a = j.at("a").get<std::vector<double>>();
    m.b = j.at("b").get<std::vector<double>>();
    const auto S = static_cast<std::size_t>(m.states);
    if (m.states < 1 || m.pi.size() != S || m.a.size() != S * S || m.b.size() != S * m.symbols()) {
        throw ValidationError("hmm model: inconsistent dimensions");
    }
    return m;
}

} // namespace apkbench
