#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "lda.hpp"
#include "log.hpp"

namespace topicdyn {

struct CoherenceConfig {
    std::size_t top_n = 10;
    /// Sliding window width in tokens.
    std::size_t window = 110;
    double npmi_epsilon = 1e-12;

    void validate() const {
        if (top_n < 2)
            throw InvalidArgument("coherence needs top_n >= 2");
        if (window < 1)
            throw InvalidArgument("coherence window must be >= 1");
        if (!(npmi_epsilon > 0))
            throw InvalidArgument("npmi epsilon must be positive");
    }
};

/// Boolean document-frequency counts over sliding windows (virtual documents).
struct CooccurrenceTable {
    std::size_t total_windows = 0;
    std::unordered_map<int, std::size_t> singles;
    std::map<std::pair<int, int>, std::size_t> pairs;

    std::size_t count(int w) const {
        auto it = singles.find(w);
        return it == singles.end() ? 0 : it->second;
    }
    std::size_t count(int a, int b) const {
        if (a == b)
            return count(a);
        auto it = pairs.find(std::minmax(a, b));
        return it == pairs.end() ? 0 : it->second;
    }
};

/// Each document yields max(1, L - window + 1) windows (step 1, never
/// crossing documents); empty documents yield none. Negative ids are
/// placeholders that occupy a position but are never counted. When `only`
/// is given, words outside it are ignored.
inline CooccurrenceTable build_windows(const std::vector<std::vector<int>>& docs, std::size_t window,
                                       const std::set<int>* only = nullptr) {
    if (window < 1)
        throw InvalidArgument("window must be >= 1");
    CooccurrenceTable tab;
    std::vector<int> present;
    for (const auto& doc : docs) {
        if (doc.empty())
            continue;
        const std::size_t n_windows = doc.size() <= window ? 1 : doc.size() - window + 1;
        for (std::size_t s = 0; s < n_windows; ++s) {
            const std::size_t e = std::min(doc.size(), s + window);
            present.clear();
            for (std::size_t i = s; i < e; ++i) {
                const int w = doc[i];
                if (w < 0 || (only && !only->count(w)))
                    continue;
                present.push_back(w);
            }
            std::sort(present.begin(), present.end());
            present.erase(std::unique(present.begin(), present.end()), present.end());
            ++tab.total_windows;
            for (std::size_t a = 0; a < present.size(); ++a) {
                ++tab.singles[present[a]];
                for (std::size_t b = a + 1; b < present.size(); ++b)
                    ++tab.pairs[{present[a], present[b]}];
            }
        }
    }
    return tab;
}

/// log((p12 + eps) / (p1 p2)) / -log(p12 + eps), clamped to [-1, 1].
inline double npmi(std::size_t pair_count, std::size_t count1, std::size_t count2, std::size_t total, double eps) {
    if (total == 0)
        throw InvalidArgument("npmi needs a positive window count");
    const double n = static_cast<double>(total);
    const double p1 = static_cast<double>(count1) / n, p2 = static_cast<double>(count2) / n;
    const double p12 = static_cast<double>(pair_count) / n;
    if (p1 <= 0 || p2 <= 0)
        return 0.0;
    const double denom = -std::log(p12 + eps);
    if (denom <= 0)
        return 1.0;
    return std::clamp(std::log((p12 + eps) / (p1 * p2)) / denom, -1.0, 1.0);
}

/// One-set segmentation: each word's NPMI context vector against the whole
/// set, compared by cosine with the sum of all the words' vectors.
inline double cv_topic(const std::vector<int>& words, const CooccurrenceTable& tab, double eps) {
    const std::size_t n = words.size();
    std::vector<std::vector<double>> vec(n, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            vec[i][j] = npmi(tab.count(words[i], words[j]), tab.count(words[i]), tab.count(words[j]),
                             tab.total_windows, eps);
    std::vector<double> set_vec(n, 0.0);
    for (const auto& v : vec)
        for (std::size_t j = 0; j < n; ++j)
            set_vec[j] += v[j];
    double total = 0;
    for (const auto& v : vec) {
        double dot = 0, a = 0, b = 0;
        for (std::size_t j = 0; j < n; ++j) {
            dot += v[j] * set_vec[j];
            a += v[j] * v[j];
            b += set_vec[j] * set_vec[j];
        }
        total += (a > 0 && b > 0) ? dot / std::sqrt(a * b) : 0.0;
    }
    return total / static_cast<double>(n);
}

struct CoherenceReport {
    /// nullopt for topics skipped for lack of supported words.
    std::vector<std::optional<double>> per_topic;
    std::vector<std::vector<int>> top_words;
    std::optional<double> mean;
};

/// Words of topic k by descending phi (ties by id).
inline std::vector<int> ranked_words(const TopicModel& m, std::size_t k) {
    std::vector<int> ids(m.num_terms());
    std::iota(ids.begin(), ids.end(), 0);
    const auto row = m.phi.row(k);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
        return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)];
    });
    return ids;
}

/// Maps an external token corpus onto the model vocabulary; unknown tokens
/// become placeholders so window geometry is preserved.
inline std::vector<std::vector<int>> map_reference(const TopicModel& m,
                                                   const std::vector<std::vector<std::string>>& reference) {
    std::unordered_map<std::string, int> ids;
    for (std::size_t i = 0; i < m.vocabulary.size(); ++i)
        ids.emplace(m.vocabulary[i], static_cast<int>(i));
    std::vector<std::vector<int>> out;
    for (const auto& doc : reference) {
        std::vector<int> d;
        d.reserve(doc.size());
        for (const auto& t : doc) {
            auto it = ids.find(t);
            d.push_back(it == ids.end() ? -1 : it->second);
        }
        out.push_back(std::move(d));
    }
    return out;
}

/// C_v coherence of every topic. Probabilities come from the model's own
/// documents unless an external reference corpus is supplied.
inline CoherenceReport cv_coherence(const TopicModel& m, const CoherenceConfig& cfg,
                                    const std::vector<std::vector<std::string>>* reference = nullptr) {
    cfg.validate();
    const auto K = m.num_topics();
    std::vector<std::vector<int>> ranked(K);
    std::set<int> candidates;
    // words beyond the first top_n are only needed when the reference lacks some of them
    const std::size_t depth = std::min(reference ? 10 * cfg.top_n : cfg.top_n, m.num_terms());
    for (std::size_t k = 0; k < K; ++k) {
        ranked[k] = ranked_words(m, k);
        ranked[k].resize(depth);
        candidates.insert(ranked[k].begin(), ranked[k].end());
    }
    const auto docs = reference ? map_reference(m, *reference) : m.docs;
    const auto tab = build_windows(docs, cfg.window, &candidates);

    CoherenceReport rep;
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t k = 0; k < K; ++k) {
        std::vector<int> words;
        for (int w : ranked[k]) {
            if (words.size() == cfg.top_n)
                break;
            if (tab.count(w) > 0)
                words.push_back(w);
        }
        if (words.size() < cfg.top_n) {
            warn("topic " + std::to_string(k) + " has fewer than " + std::to_string(cfg.top_n) +
                 " supported words; excluded from coherence");
            rep.per_topic.push_back(std::nullopt);
            rep.top_words.push_back(std::move(words));
            continue;
        }
        const double c = cv_topic(words, tab, cfg.npmi_epsilon);
        rep.per_topic.push_back(c);
        rep.top_words.push_back(std::move(words));
        sum += c;
        ++used;
    }
    if (used > 0)
        rep.mean = sum / static_cast<double>(used);
    return rep;
}

/// Header for tab-separated coherence reports.
inline std::string coherence_tsv_header() { return "week\tnetwork\tk\toptimize_interval\tseed\tmean\tper_topic\n"; }

inline std::string coherence_tsv_row(int week, const std::string& network, int k, int interval, std::uint64_t seed,
                                     const CoherenceReport& rep) {
    std::string per;
    for (std::size_t i = 0; i < rep.per_topic.size(); ++i) {
        if (i)
            per += ',';
        per += rep.per_topic[i] ? format_fixed(*rep.per_topic[i], 6) : "NA";
    }
    return std::to_string(week) + '\t' + network + '\t' + std::to_string(k) + '\t' + std::to_string(interval) + '\t' +
           std::to_string(seed) + '\t' + (rep.mean ? format_fixed(*rep.mean, 6) : "NA") + '\t' + per + '\n';
}

} // namespace topicdyn
