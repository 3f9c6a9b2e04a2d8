#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "format.hpp"
#include "hash.hpp"
#include "log.hpp"
#include "matrix.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace topicdyn {

struct LdaConfig {
    int k = 13;
    /// Dirichlet concentration of the document-topic prior; alpha_k starts at alpha0 / k.
    double alpha0 = 5.0;
    double beta = 0.01;
    int iterations = 1000;
    int burn_in = 200;
    /// Sweeps between alpha re-optimizations; 0 disables optimization.
    int optimize_interval = 100;
    std::uint64_t seed = 1;

    double alpha_tolerance = 1e-6;
    int alpha_max_iterations = 100;
    double alpha_floor = 1e-10;

    void validate() const {
        if (k < 2)
            throw InvalidArgument("LDA needs k >= 2 topics");
        if (!(beta > 0) || !(alpha0 > 0))
            throw InvalidArgument("LDA priors must be positive");
        if (iterations < 1 || burn_in < 0 || burn_in >= iterations)
            throw InvalidArgument("LDA needs 0 <= burn_in < iterations");
        if (optimize_interval < 0)
            throw InvalidArgument("optimize_interval must be >= 0");
    }

    friend bool operator==(const LdaConfig&, const LdaConfig&) = default;
};

inline json to_json(const LdaConfig& c) {
    return {{"k", c.k},
            {"alpha0", c.alpha0},
            {"beta", c.beta},
            {"iterations", c.iterations},
            {"burn_in", c.burn_in},
            {"optimize_interval", c.optimize_interval},
            {"seed", c.seed},
            {"alpha_tolerance", c.alpha_tolerance},
            {"alpha_max_iterations", c.alpha_max_iterations},
            {"alpha_floor", c.alpha_floor}};
}

inline LdaConfig lda_config_from_json(const json& j, LdaConfig c = {}) {
    c.k = j.value("k", c.k);
    c.alpha0 = j.value("alpha0", c.alpha0);
    c.beta = j.value("beta", c.beta);
    c.iterations = j.value("iterations", c.iterations);
    c.burn_in = j.value("burn_in", c.burn_in);
    c.optimize_interval = j.value("optimize_interval", c.optimize_interval);
    c.seed = j.value("seed", c.seed);
    c.alpha_tolerance = j.value("alpha_tolerance", c.alpha_tolerance);
    c.alpha_max_iterations = j.value("alpha_max_iterations", c.alpha_max_iterations);
    c.alpha_floor = j.value("alpha_floor", c.alpha_floor);
    return c;
}

/// Bag of word ids per document plus the vocabulary they index.
struct LdaCorpus {
    std::vector<std::string> vocabulary;
    std::vector<std::string> doc_ids;
    std::vector<std::vector<int>> docs;

    static LdaCorpus from_week(const CorpusWeek& week) {
        LdaCorpus c;
        c.vocabulary = week.terms;
        for (const auto& d : week.documents) {
            c.doc_ids.push_back(d.id);
            std::vector<int> ids;
            ids.reserve(d.tokens.size());
            for (const auto& t : d.tokens)
                ids.push_back(week.vocabulary.at(t.lemma));
            c.docs.push_back(std::move(ids));
        }
        return c;
    }
};

inline std::string vocabulary_hash(const std::vector<std::string>& vocab) {
    std::string joined;
    for (const auto& t : vocab) {
        joined += t;
        joined += '\n';
    }
    return sha256_hex(joined);
}

struct TopicModel {
    LdaConfig config;
    std::vector<std::string> vocabulary;
    std::string vocab_hash;
    std::vector<std::string> doc_ids;
    std::vector<std::vector<int>> docs;
    std::vector<std::vector<int>> z;
    Matrix<int> n_dk;
    Matrix<int> n_kw;
    std::vector<int> n_k;
    std::vector<double> alpha;
    Matrix<double> phi;
    Matrix<double> theta;
    /// Number of alpha optimization events applied during fitting.
    int alpha_updates = 0;

    std::size_t num_topics() const noexcept { return alpha.size(); }
    std::size_t num_terms() const noexcept { return vocabulary.size(); }
    std::size_t num_docs() const noexcept { return docs.size(); }
    double alpha_sum() const { return std::accumulate(alpha.begin(), alpha.end(), 0.0); }

    /// phi = (n_kw + beta) / (n_k + V beta); theta = (n_dk + alpha_k) / (N_d + sum alpha).
    void estimate() {
        const auto K = num_topics(), V = num_terms(), D = num_docs();
        const double beta = config.beta;
        phi = Matrix<double>(K, V);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t w = 0; w < V; ++w)
                phi(k, w) = (n_kw(k, w) + beta) / (n_k[k] + static_cast<double>(V) * beta);
        theta = Matrix<double>(D, K);
        const double asum = alpha_sum();
        for (std::size_t d = 0; d < D; ++d)
            for (std::size_t k = 0; k < K; ++k)
                theta(d, k) = (n_dk(d, k) + alpha[k]) / (static_cast<double>(docs[d].size()) + asum);
    }

    /// Empirical marginal p(w) over all tokens of the corpus.
    std::vector<double> term_marginals() const {
        std::vector<double> p(num_terms(), 0.0);
        double total = 0;
        for (const auto& d : docs)
            for (int w : d) {
                p[static_cast<std::size_t>(w)] += 1;
                total += 1;
            }
        for (auto& v : p)
            v /= total;
        return p;
    }
};

namespace detail {

inline void check_corpus(const LdaCorpus& corpus, const LdaConfig& cfg) {
    cfg.validate();
    if (corpus.docs.empty())
        throw InvalidArgument("cannot fit LDA on an empty corpus");
    if (corpus.doc_ids.size() != corpus.docs.size())
        throw InvalidArgument("document ids not aligned with documents");
    if (static_cast<std::size_t>(cfg.k) > corpus.vocabulary.size())
        throw InvalidArgument("k = " + std::to_string(cfg.k) + " exceeds vocabulary size " +
                              std::to_string(corpus.vocabulary.size()));
    for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
        if (corpus.docs[d].empty())
            throw InvalidArgument("document '" + corpus.doc_ids[d] + "' is empty; prune it before fitting");
        for (int w : corpus.docs[d])
            if (w < 0 || static_cast<std::size_t>(w) >= corpus.vocabulary.size())
                throw InvalidArgument("word id out of range in document '" + corpus.doc_ids[d] + "'");
    }
}

} // namespace detail

/// Builds a model state from explicit topic assignments (counts derived from z).
inline TopicModel make_state(const LdaCorpus& corpus, const LdaConfig& cfg, std::vector<std::vector<int>> z,
                             std::vector<double> alpha = {}) {
    detail::check_corpus(corpus, cfg);
    const auto K = static_cast<std::size_t>(cfg.k), V = corpus.vocabulary.size(), D = corpus.docs.size();
    TopicModel m;
    m.config = cfg;
    m.vocabulary = corpus.vocabulary;
    m.vocab_hash = vocabulary_hash(corpus.vocabulary);
    m.doc_ids = corpus.doc_ids;
    m.docs = corpus.docs;
    m.alpha = alpha.empty() ? std::vector<double>(K, cfg.alpha0 / static_cast<double>(K)) : std::move(alpha);
    if (m.alpha.size() != K)
        throw InvalidArgument("alpha vector length differs from k");
    if (z.size() != D)
        throw InvalidArgument("assignments not aligned with documents");
    m.z = std::move(z);
    m.n_dk = Matrix<int>(D, K);
    m.n_kw = Matrix<int>(K, V);
    m.n_k.assign(K, 0);
    for (std::size_t d = 0; d < D; ++d) {
        if (m.z[d].size() != m.docs[d].size())
            throw InvalidArgument("assignments not aligned with tokens");
        for (std::size_t i = 0; i < m.docs[d].size(); ++i) {
            const int k = m.z[d][i];
            if (k < 0 || static_cast<std::size_t>(k) >= K)
                throw InvalidArgument("topic assignment out of range");
            const auto w = static_cast<std::size_t>(m.docs[d][i]);
            ++m.n_dk(d, static_cast<std::size_t>(k));
            ++m.n_kw(static_cast<std::size_t>(k), w);
            ++m.n_k[static_cast<std::size_t>(k)];
        }
    }
    m.estimate();
    return m;
}

/// Collapsed conditional p(z_i = k | z_-i, w) for token i of document d,
/// with that token's current assignment excluded from the counts.
inline std::vector<double> sampling_distribution(const TopicModel& m, std::size_t d, std::size_t i) {
    const auto K = m.num_topics();
    const double vbeta = static_cast<double>(m.num_terms()) * m.config.beta;
    const auto w = static_cast<std::size_t>(m.docs[d][i]);
    const auto cur = static_cast<std::size_t>(m.z[d][i]);
    std::vector<double> p(K);
    double total = 0;
    for (std::size_t k = 0; k < K; ++k) {
        const double self = k == cur ? 1.0 : 0.0;
        p[k] = (m.n_dk(d, k) - self + m.alpha[k]) * (m.n_kw(k, w) - self + m.config.beta) / (m.n_k[k] - self + vbeta);
        total += p[k];
    }
    for (auto& v : p)
        v /= total;
    return p;
}

/// Minka's fixed-point update of the asymmetric Dirichlet prior from the
/// document-topic count histograms. Uses Psi(n + a) - Psi(a) = sum_{i<n} 1/(a + i).
/// Returns the previous alpha (with a warning) if an intermediate goes non-finite.
inline std::vector<double> optimize_alpha(const TopicModel& m) {
    const auto K = m.num_topics(), D = m.num_docs();
    std::size_t max_len = 0;
    for (const auto& d : m.docs)
        max_len = std::max(max_len, d.size());
    std::vector<std::size_t> len_hist(max_len + 1, 0);
    Matrix<std::size_t> topic_hist(K, max_len + 1, 0);
    std::vector<std::size_t> topic_max(K, 0);
    for (std::size_t d = 0; d < D; ++d) {
        ++len_hist[m.docs[d].size()];
        for (std::size_t k = 0; k < K; ++k) {
            const auto n = static_cast<std::size_t>(m.n_dk(d, k));
            if (n > 0) {
                ++topic_hist(k, n);
                topic_max[k] = std::max(topic_max[k], n);
            }
        }
    }

    const auto& cfg = m.config;
    std::vector<double> alpha = m.alpha;
    for (int iter = 0; iter < cfg.alpha_max_iterations; ++iter) {
        const double sum = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        double denom = 0, diff = 0;
        for (std::size_t n = 1; n <= max_len; ++n) {
            diff += 1.0 / (sum + static_cast<double>(n) - 1.0);
            denom += static_cast<double>(len_hist[n]) * diff;
        }
        std::vector<double> next(K);
        double max_change = 0;
        for (std::size_t k = 0; k < K; ++k) {
            double num = 0, dk = 0;
            for (std::size_t n = 1; n <= topic_max[k]; ++n) {
                dk += 1.0 / (alpha[k] + static_cast<double>(n) - 1.0);
                num += static_cast<double>(topic_hist(k, n)) * dk;
            }
            next[k] = std::max(alpha[k] * num / denom, cfg.alpha_floor);
            if (!std::isfinite(next[k]) || !std::isfinite(denom) || denom <= 0) {
                warn("alpha optimization produced a non-finite value; keeping previous alpha");
                return m.alpha;
            }
            max_change = std::max(max_change, std::abs(next[k] - alpha[k]) / alpha[k]);
        }
        alpha = std::move(next);
        if (max_change < cfg.alpha_tolerance)
            break;
    }
    return alpha;
}

/// log p(w | z, beta) + log p(z | alpha), collapsed over phi and theta.
inline double log_likelihood(const TopicModel& m) {
    const auto K = m.num_topics(), V = m.num_terms(), D = m.num_docs();
    const double beta = m.config.beta;
    double ll = static_cast<double>(K) * (std::lgamma(static_cast<double>(V) * beta) - static_cast<double>(V) * std::lgamma(beta));
    for (std::size_t k = 0; k < K; ++k) {
        for (std::size_t w = 0; w < V; ++w)
            ll += std::lgamma(m.n_kw(k, w) + beta);
        ll -= std::lgamma(m.n_k[k] + static_cast<double>(V) * beta);
    }
    const double asum = m.alpha_sum();
    double lg_alpha = 0;
    for (double a : m.alpha)
        lg_alpha += std::lgamma(a);
    ll += static_cast<double>(D) * (std::lgamma(asum) - lg_alpha);
    for (std::size_t d = 0; d < D; ++d) {
        for (std::size_t k = 0; k < K; ++k)
            ll += std::lgamma(m.n_dk(d, k) + m.alpha[k]);
        ll -= std::lgamma(static_cast<double>(m.docs[d].size()) + asum);
    }
    return ll;
}

/// Collapsed Gibbs sampling. Documents are swept in id order and every
/// document draws from its own RNG stream keyed by (seed, id, sweep), so the
/// result does not depend on the input order of the documents.
inline TopicModel fit(const LdaCorpus& corpus, const LdaConfig& cfg) {
    detail::check_corpus(corpus, cfg);
    const auto K = static_cast<std::size_t>(cfg.k), D = corpus.docs.size();

    std::vector<std::size_t> order(D);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return corpus.doc_ids[a] < corpus.doc_ids[b]; });
    for (std::size_t i = 1; i < D; ++i)
        if (corpus.doc_ids[order[i]] == corpus.doc_ids[order[i - 1]])
            throw InvalidArgument("duplicate document id '" + corpus.doc_ids[order[i]] + "'");

    std::vector<std::vector<int>> z(D);
    for (std::size_t d : order) {
        auto rng = keyed_engine(cfg.seed, corpus.doc_ids[d], 0);
        std::uniform_int_distribution<int> pick(0, cfg.k - 1);
        z[d].resize(corpus.docs[d].size());
        for (auto& t : z[d])
            t = pick(rng);
    }
    TopicModel m = make_state(corpus, cfg, std::move(z));

    const double beta = cfg.beta;
    const double vbeta = static_cast<double>(m.num_terms()) * beta;
    std::vector<double> cumulative(K);
    for (int sweep = 1; sweep <= cfg.iterations; ++sweep) {
        for (std::size_t d : order) {
            auto rng = keyed_engine(cfg.seed, m.doc_ids[d], static_cast<std::uint64_t>(sweep));
            auto& zd = m.z[d];
            const auto& words = m.docs[d];
            for (std::size_t i = 0; i < words.size(); ++i) {
                const auto w = static_cast<std::size_t>(words[i]);
                auto k_old = static_cast<std::size_t>(zd[i]);
                --m.n_dk(d, k_old);
                --m.n_kw(k_old, w);
                --m.n_k[k_old];
                double total = 0;
                for (std::size_t k = 0; k < K; ++k) {
                    total += (m.n_dk(d, k) + m.alpha[k]) * (m.n_kw(k, w) + beta) / (m.n_k[k] + vbeta);
                    cumulative[k] = total;
                }
                const double u = uniform01(rng) * total;
                std::size_t k_new = 0;
                while (k_new + 1 < K && cumulative[k_new] <= u)
                    ++k_new;
                zd[i] = static_cast<int>(k_new);
                ++m.n_dk(d, k_new);
                ++m.n_kw(k_new, w);
                ++m.n_k[k_new];
            }
        }
        if (cfg.optimize_interval > 0 && sweep > cfg.burn_in && sweep % cfg.optimize_interval == 0) {
            m.alpha = optimize_alpha(m);
            ++m.alpha_updates;
        }
    }
    m.estimate();
    return m;
}

inline TopicModel fit(const CorpusWeek& week, const LdaConfig& cfg) { return fit(LdaCorpus::from_week(week), cfg); }

// ---------------------------------------------------------------------------
// Snapshots

namespace detail {
template <typename T>
json matrix_json(const Matrix<T>& mat) {
    return {{"rows", mat.rows()}, {"cols", mat.cols()}, {"data", mat.data()}};
}
template <typename T>
Matrix<T> matrix_from_json(const json& j) {
    Matrix<T> mat(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
    auto data = j.at("data").get<std::vector<T>>();
    if (data.size() != mat.rows() * mat.cols())
        throw DataError("matrix payload has the wrong size");
    mat.data() = std::move(data);
    return mat;
}
} // namespace detail

inline json to_json(const TopicModel& m) {
    return {{"format_version", kFormatVersion},
            {"kind", "topic_model"},
            {"config", to_json(m.config)},
            {"vocabulary_hash", m.vocab_hash},
            {"vocabulary", m.vocabulary},
            {"doc_ids", m.doc_ids},
            {"docs", m.docs},
            {"z", m.z},
            {"alpha", m.alpha},
            {"alpha_updates", m.alpha_updates},
            {"n_dk", detail::matrix_json(m.n_dk)},
            {"n_kw", detail::matrix_json(m.n_kw)},
            {"n_k", m.n_k},
            {"phi", detail::matrix_json(m.phi)},
            {"theta", detail::matrix_json(m.theta)}};
}

/// Loads a snapshot. When `expected_vocabulary` is given, its hash must match.
inline TopicModel topic_model_from_json(const json& j, const std::vector<std::string>* expected_vocabulary = nullptr) {
    if (j.value("format_version", 0) != kFormatVersion || j.value("kind", "") != "topic_model")
        throw DataError("not a topic model snapshot of format version " + std::to_string(kFormatVersion));
    TopicModel m;
    m.config = lda_config_from_json(j.at("config"));
    m.vocab_hash = j.at("vocabulary_hash").get<std::string>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    if (vocabulary_hash(m.vocabulary) != m.vocab_hash)
        throw DataError("topic model snapshot is corrupt: vocabulary hash mismatch");
    if (expected_vocabulary && vocabulary_hash(*expected_vocabulary) != m.vocab_hash)
        throw DataError("topic model was fitted on a different vocabulary");
    m.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    m.docs = j.at("docs").get<std::vector<std::vector<int>>>();
    m.z = j.at("z").get<std::vector<std::vector<int>>>();
    m.alpha = j.at("alpha").get<std::vector<double>>();
    m.alpha_updates = j.value("alpha_updates", 0);
    m.n_dk = detail::matrix_from_json<int>(j.at("n_dk"));
    m.n_kw = detail::matrix_from_json<int>(j.at("n_kw"));
    m.n_k = j.at("n_k").get<std::vector<int>>();
    m.phi = detail::matrix_from_json<double>(j.at("phi"));
    m.theta = detail::matrix_from_json<double>(j.at("theta"));
    return m;
}

} // namespace topicdyn
