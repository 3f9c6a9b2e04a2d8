#pragma once

// Independent reference computations shared by the unit tests and the acceptance run.

#include <topicdyn/coherence.hpp>
#include <topicdyn/dynamics.hpp>
#include <topicdyn/lda.hpp>
#include <topicdyn/modelsel.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace topicdyn::testing {

// Brute-force C_v written from the definition over string tokens.
inline double oracle_cv(const std::vector<std::vector<std::string>>& docs, const std::vector<std::string>& top,
                 std::size_t window, double eps) {
    std::vector<std::set<std::string>> windows;
    for (const auto& d : docs) {
        if (d.empty())
            continue;
        if (d.size() <= window) {
            windows.emplace_back(d.begin(), d.end());
            continue;
        }
        for (std::size_t s = 0; s + window <= d.size(); ++s)
            windows.emplace_back(d.begin() + static_cast<long>(s), d.begin() + static_cast<long>(s + window));
    }
    const double N = static_cast<double>(windows.size());
    auto p = [&](const std::string& a, const std::string& b) {
        double c = 0;
        for (const auto& w : windows)
            c += (w.count(a) && w.count(b)) ? 1 : 0;
        return c / N;
    };
    auto np = [&](const std::string& a, const std::string& b) {
        const double p12 = p(a, b), p1 = p(a, a), p2 = p(b, b);
        double v = std::log((p12 + eps) / (p1 * p2)) / (-std::log(p12 + eps));
        return std::max(-1.0, std::min(1.0, v));
    };
    const std::size_t n = top.size();
    std::vector<std::vector<double>> vec(n, std::vector<double>(n));
    std::vector<double> sum(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            vec[i][j] = np(top[i], top[j]);
            sum[j] += vec[i][j];
        }
    double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0, a = 0, b = 0;
        for (std::size_t j = 0; j < n; ++j) {
            dot += vec[i][j] * sum[j];
            a += vec[i][j] * vec[i][j];
            b += sum[j] * sum[j];
        }
        total += dot / std::sqrt(a * b);
    }
    return total / static_cast<double>(n);
}

inline TopicModel random_model(std::mt19937_64& rng, std::size_t V, std::size_t K, std::size_t D) {
    std::uniform_int_distribution<int> word(0, static_cast<int>(V) - 1), topic(0, static_cast<int>(K) - 1),
        len(5, 40);
    LdaCorpus c;
    for (std::size_t w = 0; w < V; ++w)
        c.vocabulary.push_back("t" + std::to_string(w));
    std::vector<std::vector<int>> z;
    for (std::size_t d = 0; d < D; ++d) {
        std::vector<int> doc, zd;
        const int n = len(rng);
        for (int i = 0; i < n; ++i) {
            doc.push_back(word(rng));
            zd.push_back(topic(rng));
        }
        c.doc_ids.push_back("d" + std::to_string(d));
        c.docs.push_back(doc);
        z.push_back(zd);
    }
    LdaConfig cfg;
    cfg.k = static_cast<int>(K);
    return make_state(c, cfg, z);
}

// Full ordering of term ids by key descending, ties by id.
template <class Key>
std::vector<int> order_by(std::size_t V, Key key) {
    std::vector<int> ids(V);
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) { return key(a) > key(b); });
    return ids;
}

inline SweepRecord rec(int k, int interval, double c, std::uint64_t seed = 1) {
    SweepRecord r;
    r.key = {1, "vk", k, interval, seed};
    r.coherence = c;
    return r;
}

inline std::vector<SweepRecord> table(const std::map<int, std::map<int, double>>& curves) {
    std::vector<SweepRecord> out;
    for (const auto& [i, curve] : curves)
        for (const auto& [k, v] : curve)
            out.push_back(rec(k, i, v));
    return out;
}

// Five interval curves over k = 2..50: a shared early peak at 13, a dip, and a
// slightly higher late maximum around k = 44.
inline std::vector<SweepRecord> early_peak_curves() {
    const std::vector<int> intervals{10, 50, 100, 500, 1000};
    std::vector<SweepRecord> out;
    for (std::size_t n = 0; n < intervals.size(); ++n) {
        const int peak = n < 3 ? 13 : (n == 3 ? 12 : 14);
        const double lift = 0.001 * static_cast<double>(n);
        for (int k = 2; k <= 50; ++k) {
            double v;
            if (k <= peak)
                v = 0.38 + 0.12 * (k - 2) / double(peak - 2);
            else if (k <= 20)
                v = 0.50 - 0.04 * (k - peak) / double(20 - peak);
            else if (k <= 44)
                v = 0.46 + 0.045 * (k - 20) / 24.0;
            else
                v = 0.505 - 0.003 * (k - 44);
            for (std::uint64_t s : {1u, 2u, 3u}) {
                const double jitter = (s == 1 ? 0.001 : (s == 2 ? -0.001 : 0.0));
                out.push_back(rec(k, intervals[n], v + lift + jitter, s));
            }
        }
    }
    return out;
}

inline double label_agreement(const std::vector<int>& got, const std::vector<int>& truth, int k) {
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    double best = 0;
    do {
        std::size_t ok = 0;
        for (std::size_t i = 0; i < got.size(); ++i)
            ok += perm[static_cast<std::size_t>(got[i])] == truth[i] ? 1 : 0;
        best = std::max(best, static_cast<double>(ok) / static_cast<double>(got.size()));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline Matrix<double> to_matrix(const std::vector<std::vector<double>>& rows) {
    Matrix<double> m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
    return m;
}

struct TinyFixture {
    LdaCorpus corpus;
    std::vector<std::vector<std::string>> text;
    TopicModel model;
};

// 5 documents over V = 6, two topics with fixed assignments.
inline TinyFixture tiny() {
    TinyFixture f;
    f.corpus.vocabulary = {"flu", "mask", "shop", "food", "virus", "home"};
    f.corpus.doc_ids = {"a", "b", "c", "d", "e"};
    f.corpus.docs = {{0, 1, 4, 1, 0}, {2, 3, 5, 3}, {4, 0, 1, 5, 2}, {3, 2, 2, 5}, {0, 4, 3, 1}};
    for (const auto& d : f.corpus.docs) {
        std::vector<std::string> t;
        for (int w : d)
            t.push_back(f.corpus.vocabulary[static_cast<std::size_t>(w)]);
        f.text.push_back(t);
    }
    LdaConfig cfg;
    cfg.k = 2;
    std::vector<std::vector<int>> z;
    for (const auto& d : f.corpus.docs) {
        std::vector<int> zd;
        for (int w : d)
            zd.push_back(w == 0 || w == 1 || w == 4 ? 0 : 1);
        z.push_back(zd);
    }
    // one crossing assignment so rankings are not perfectly clean
    z[2][3] = 0;
    f.model = make_state(f.corpus, cfg, z);
    return f;
}

inline std::vector<std::string> words_of(const TopicModel& m, const std::vector<int>& ids) {
    std::vector<std::string> out;
    for (int w : ids)
        out.push_back(m.vocabulary[static_cast<std::size_t>(w)]);
    return out;
}

} // namespace topicdyn::testing
