#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "corpus.hpp"
#include "error.hpp"
#include "format.hpp"
#include "hash.hpp"
#include "matrix.hpp"
#include "rng.hpp"
#include "topics.hpp"
#include "version.hpp"

namespace topicdyn {

// ---------------------------------------------------------------------------
// dispersion

enum class DispersionMode { plain, weighted };

inline std::string to_string(DispersionMode m) { return m == DispersionMode::plain ? "plain" : "weighted"; }

inline DispersionMode dispersion_mode_from_string(const std::string& s) {
    if (s == "plain")
        return DispersionMode::plain;
    if (s == "weighted")
        return DispersionMode::weighted;
    throw InvalidArgument("unknown dispersion mode '" + s + "'");
}

struct DispersionConfig {
    DispersionMode mode = DispersionMode::plain;
    /// Weighted mode: a topic counts for an account only if one of its docs
    /// in that topic contains one of the topic's top n_terms terms.
    std::size_t n_terms = 5;
};

struct DispersionGroup {
    std::size_t n = 0;
    std::vector<std::string> accounts; ///< sorted
};

struct Dispersion {
    int week = 0;
    std::string network;
    DispersionConfig config;
    std::vector<DispersionGroup> groups;              ///< ascending n
    std::map<std::string, std::set<int>> topics_of;   ///< counted topics per grouped account
    std::vector<std::string> excluded;                ///< weighted mode: no counted topic

    std::size_t group_of(const std::string& account) const {
        auto it = topics_of.find(account);
        return it == topics_of.end() ? 0 : it->second.size();
    }
};

inline Dispersion dispersion_groups(const WeekTopics& wt, const DispersionConfig& cfg = {},
                                    const CorpusWeek* corpus = nullptr) {
    Dispersion out;
    out.week = wt.week;
    out.network = wt.network;
    out.config = cfg;
    std::unordered_map<std::string, std::unordered_set<std::string>> lemmas;
    std::vector<std::unordered_set<std::string>> top_terms;
    if (cfg.mode == DispersionMode::weighted) {
        if (!corpus)
            throw InvalidArgument("weighted dispersion needs the week's documents");
        if (cfg.n_terms < 1)
            throw InvalidArgument("n_terms must be >= 1");
        for (const auto& d : corpus->documents) {
            auto& s = lemmas[d.id];
            for (const auto& t : d.tokens)
                s.insert(t.lemma);
        }
        for (const auto& t : wt.topics) {
            const auto n = std::min(cfg.n_terms, t.terms.size());
            top_terms.emplace_back(t.terms.begin(), t.terms.begin() + static_cast<long>(n));
        }
    }
    std::map<std::string, std::set<int>> all;
    for (const auto& d : wt.docs) {
        auto& mine = all[d.author];
        if (cfg.mode == DispersionMode::plain) {
            mine.insert(d.topic);
            continue;
        }
        auto it = lemmas.find(d.doc_id);
        if (it == lemmas.end())
            throw DataError("document '" + d.doc_id + "' missing from week corpus");
        const auto& tops = top_terms.at(static_cast<std::size_t>(d.topic));
        if (std::any_of(tops.begin(), tops.end(), [&](const auto& t) { return it->second.count(t) > 0; }))
            mine.insert(d.topic);
    }
    std::map<std::size_t, std::vector<std::string>> by_n;
    for (auto& [acct, topics] : all) {
        if (topics.empty()) {
            out.excluded.push_back(acct);
            continue;
        }
        by_n[topics.size()].push_back(acct);
        out.topics_of.emplace(acct, std::move(topics));
    }
    for (auto& [n, accts] : by_n)
        out.groups.push_back({n, std::move(accts)});
    return out;
}

inline json to_json(const Dispersion& d) {
    json groups = json::array();
    for (const auto& g : d.groups)
        groups.push_back({{"n", g.n}, {"accounts", g.accounts}});
    json topics = json::object();
    for (const auto& [a, t] : d.topics_of)
        topics[a] = t;
    return {{"format_version", kFormatVersion},
            {"kind", "dispersion"},
            {"week", d.week},
            {"network", d.network},
            {"mode", to_string(d.config.mode)},
            {"n_terms", d.config.n_terms},
            {"groups", groups},
            {"topics_of", topics},
            {"excluded", d.excluded}};
}

inline Dispersion dispersion_from_json(const json& j) {
    if (j.value("kind", "") != "dispersion")
        throw DataError("not a dispersion document");
    Dispersion d;
    d.week = j.at("week").get<int>();
    d.network = j.at("network").get<std::string>();
    d.config.mode = dispersion_mode_from_string(j.at("mode").get<std::string>());
    d.config.n_terms = j.at("n_terms").get<std::size_t>();
    for (const auto& g : j.at("groups"))
        d.groups.push_back({g.at("n").get<std::size_t>(), g.at("accounts").get<std::vector<std::string>>()});
    for (const auto& [a, t] : j.at("topics_of").items())
        d.topics_of[a] = t.get<std::set<int>>();
    d.excluded = j.at("excluded").get<std::vector<std::string>>();
    return d;
}

// ---------------------------------------------------------------------------
// topic time series

struct Indicators {
    double median_relevance = 0;
    double text_ratio = 0;
    double contributor_ratio = 0;
    double onetopic_share_of_topic = 0;
    double onetopic_share_of_onetopic_users = 0;
    /// 1 - Jaccard against the previous present week; empty in the first one.
    std::optional<double> term_shift;
    bool non_consecutive = false;
    std::vector<int> week_topics; ///< local topics attributed to the unique topic
    std::size_t texts = 0;
    std::size_t contributors = 0;
};

struct TimePoint {
    int week = 0;
    std::optional<Indicators> value; ///< empty when the topic is absent
};

struct TopicTimeSeries {
    std::string unique_id;
    std::string network;
    std::vector<TimePoint> points;
};

inline double median(std::vector<double> v) {
    if (v.empty())
        throw InvalidArgument("median of an empty list");
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2;
}

inline double jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    if (sa.empty() && sb.empty())
        return 1.0;
    std::size_t inter = 0;
    for (const auto& t : sa)
        inter += sb.count(t);
    return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

/// Median of the week topic's relevance scores over the terms it shares
/// with the unique topic's representative ranking.
inline double median_intersection_relevance(const std::vector<std::string>& unique_terms, const TopicInstance& t) {
    std::unordered_set<std::string> u(unique_terms.begin(), unique_terms.end());
    std::vector<double> s;
    for (std::size_t i = 0; i < t.terms.size(); ++i)
        if (u.count(t.terms[i]))
            s.push_back(t.scores.at(i));
    return s.empty() ? 0.0 : median(s);
}

/// Indicators per (unique topic, week). `weeks` must be the same ordered list
/// the set was built from; documents count once, for their attributed topic.
/// A unique topic is present in a week when an attributed week topic is the
/// prevalent topic of at least one document.
inline std::vector<TopicTimeSeries> topic_timeseries(const UniqueTopicSet& set, const std::vector<WeekTopics>& weeks) {
    std::vector<TopicTimeSeries> out(set.base.size());
    for (std::size_t u = 0; u < set.base.size(); ++u) {
        out[u].unique_id = set.base[u].id;
        out[u].network = set.network;
    }
    std::vector<std::optional<std::pair<int, std::vector<std::string>>>> last(set.base.size());
    for (const auto& wt : weeks) {
        if (wt.network != set.network)
            throw InvalidArgument("week network does not match the unique set");
        std::map<int, std::set<std::string>> authors_by_topic;
        std::map<int, std::size_t> texts_by_topic;
        std::map<std::string, std::set<int>> topics_by_author;
        for (const auto& d : wt.docs) {
            authors_by_topic[d.topic].insert(d.author);
            ++texts_by_topic[d.topic];
            topics_by_author[d.author].insert(d.topic);
        }
        std::set<std::string> one_topic_users;
        for (const auto& [a, ts] : topics_by_author)
            if (ts.size() == 1)
                one_topic_users.insert(a);
        const double T = static_cast<double>(wt.docs.size());
        const double U = static_cast<double>(topics_by_author.size());

        std::map<std::size_t, std::vector<const Attribution*>> attributed;
        for (const auto& t : wt.topics) {
            const auto* a = set.attribution(wt.week, t.topic);
            if (!a)
                throw DataError("topic " + std::to_string(t.topic) + " of week " + std::to_string(wt.week) +
                                " has no attribution in the unique set");
            if (texts_by_topic.count(t.topic))
                attributed[a->unique_index].push_back(a);
        }
        for (std::size_t u = 0; u < set.base.size(); ++u) {
            TimePoint p;
            p.week = wt.week;
            auto it = attributed.find(u);
            if (it != attributed.end() && T > 0) {
                Indicators ind;
                std::set<std::string> contributors;
                const Attribution* closest = nullptr;
                for (const auto* a : it->second) {
                    ind.week_topics.push_back(a->topic);
                    ind.texts += texts_by_topic[a->topic];
                    const auto& c = authors_by_topic[a->topic];
                    contributors.insert(c.begin(), c.end());
                    if (!closest || a->shared > closest->shared)
                        closest = a;
                }
                const auto& inst = wt.topics.at(static_cast<std::size_t>(closest->topic));
                ind.contributors = contributors.size();
                ind.median_relevance = median_intersection_relevance(set.base[u].terms, inst);
                ind.text_ratio = static_cast<double>(ind.texts) / T;
                ind.contributor_ratio = static_cast<double>(contributors.size()) / U;
                std::size_t one = 0;
                for (const auto& a : contributors)
                    one += one_topic_users.count(a);
                ind.onetopic_share_of_topic =
                    contributors.empty() ? 0.0 : static_cast<double>(one) / static_cast<double>(contributors.size());
                ind.onetopic_share_of_onetopic_users =
                    one_topic_users.empty() ? 0.0 : static_cast<double>(one) / static_cast<double>(one_topic_users.size());
                if (last[u]) {
                    ind.term_shift = 1.0 - jaccard(last[u]->second, inst.terms);
                    ind.non_consecutive = wt.week != last[u]->first + 1;
                }
                last[u] = std::make_pair(wt.week, inst.terms);
                p.value = std::move(ind);
            }
            out[u].points.push_back(std::move(p));
        }
    }
    return out;
}

inline json to_json(const TopicTimeSeries& ts, const std::string& theme = "") {
    json pts = json::array();
    for (const auto& p : ts.points) {
        json j = {{"week", p.week}, {"present", p.value.has_value()}};
        if (p.value) {
            const auto& v = *p.value;
            j["median_relevance"] = v.median_relevance;
            j["text_ratio"] = v.text_ratio;
            j["contributor_ratio"] = v.contributor_ratio;
            j["onetopic_share_of_topic"] = v.onetopic_share_of_topic;
            j["onetopic_share_of_onetopic_users"] = v.onetopic_share_of_onetopic_users;
            j["term_shift"] = v.term_shift ? json(*v.term_shift) : json(nullptr);
            j["non_consecutive"] = v.non_consecutive;
            j["week_topics"] = v.week_topics;
            j["texts"] = v.texts;
            j["contributors"] = v.contributors;
        }
        pts.push_back(std::move(j));
    }
    json out = {{"unique_id", ts.unique_id}, {"network", ts.network}, {"points", pts}};
    if (!theme.empty())
        out["theme"] = theme;
    return out;
}

inline std::string timeseries_tsv(const std::vector<TopicTimeSeries>& all) {
    std::ostringstream o;
    o << "# " << kPipelineVersion << '\n';
    o << "unique_id\tnetwork\tweek\tpresent\tmedian_relevance\ttext_ratio\tcontributor_ratio\t"
         "onetopic_share_of_topic\tonetopic_share_of_onetopic_users\tterm_shift\tnon_consecutive\n";
    for (const auto& ts : all)
        for (const auto& p : ts.points) {
            o << ts.unique_id << '\t' << ts.network << '\t' << p.week << '\t';
            if (!p.value) {
                o << "0\tNA\tNA\tNA\tNA\tNA\tNA\tNA\n";
                continue;
            }
            const auto& v = *p.value;
            o << "1\t" << format_fixed(v.median_relevance) << '\t' << format_fixed(v.text_ratio) << '\t'
              << format_fixed(v.contributor_ratio) << '\t' << format_fixed(v.onetopic_share_of_topic) << '\t'
              << format_fixed(v.onetopic_share_of_onetopic_users) << '\t'
              << (v.term_shift ? format_fixed(*v.term_shift) : "NA") << '\t' << (v.non_consecutive ? 1 : 0) << '\n';
        }
    return o.str();
}

// ---------------------------------------------------------------------------
// activity matrix

struct ActivityMatrix {
    std::vector<std::string> accounts; ///< sorted
    std::vector<int> weeks;
    Matrix<double> values;
    bool row_normalized = false;
    bool col_standardized = false;
    std::size_t excluded_zero_rows = 0;
};

/// Post counts per account and week. Accounts with no posts in the listed
/// weeks are dropped.
inline ActivityMatrix build_activity_matrix(const std::map<std::string, std::map<int, std::size_t>>& counts,
                                            const std::vector<int>& weeks) {
    if (weeks.empty())
        throw InvalidArgument("activity matrix needs at least one week");
    std::map<int, std::size_t> col;
    for (std::size_t i = 0; i < weeks.size(); ++i)
        if (!col.emplace(weeks[i], i).second)
            throw InvalidArgument("duplicate week in activity matrix");
    ActivityMatrix m;
    m.weeks = weeks;
    std::vector<std::vector<double>> rows;
    std::set<std::string> seen;
    for (const auto& [acct, per_week] : counts) {
        std::vector<double> row(weeks.size(), 0.0);
        double sum = 0;
        for (const auto& [w, c] : per_week)
            if (auto it = col.find(w); it != col.end()) {
                row[it->second] += static_cast<double>(c);
                sum += static_cast<double>(c);
            }
        if (sum == 0) {
            ++m.excluded_zero_rows;
            continue;
        }
        m.accounts.push_back(acct);
        rows.push_back(std::move(row));
    }
    m.values = Matrix<double>(rows.size(), weeks.size());
    for (std::size_t r = 0; r < rows.size(); ++r)
        std::copy(rows[r].begin(), rows[r].end(), m.values.row(r).begin());
    return m;
}

inline ActivityMatrix build_activity_matrix(const std::vector<CorpusWeek>& weeks) {
    std::map<std::string, std::map<int, std::size_t>> counts;
    std::vector<int> ids;
    for (const auto& w : weeks) {
        ids.push_back(w.week_index);
        for (const auto& d : w.documents)
            ++counts[d.author_id][w.week_index];
    }
    return build_activity_matrix(counts, ids);
}

inline ActivityMatrix build_activity_matrix(const std::vector<WeekTopics>& weeks) {
    std::map<std::string, std::map<int, std::size_t>> counts;
    std::vector<int> ids;
    for (const auto& w : weeks) {
        ids.push_back(w.week);
        for (const auto& d : w.docs)
            ++counts[d.author][w.week];
    }
    return build_activity_matrix(counts, ids);
}

/// Row shares, then per-column population z-scores; constant columns become 0.
inline ActivityMatrix normalize(ActivityMatrix m) {
    auto& X = m.values;
    for (std::size_t r = 0; r < X.rows(); ++r) {
        auto row = X.row(r);
        const double s = std::accumulate(row.begin(), row.end(), 0.0);
        if (s <= 0)
            throw DataError("activity row for '" + m.accounts[r] + "' has no posts");
        for (auto& v : row)
            v /= s;
    }
    m.row_normalized = true;
    const auto n = static_cast<double>(X.rows());
    for (std::size_t c = 0; c < X.cols() && X.rows() > 0; ++c) {
        double lo = X(0, c), hi = X(0, c), mean = 0;
        for (std::size_t r = 0; r < X.rows(); ++r) {
            lo = std::min(lo, X(r, c));
            hi = std::max(hi, X(r, c));
            mean += X(r, c);
        }
        mean /= n;
        if (lo == hi) {
            for (std::size_t r = 0; r < X.rows(); ++r)
                X(r, c) = 0.0;
            continue;
        }
        double var = 0;
        for (std::size_t r = 0; r < X.rows(); ++r)
            var += (X(r, c) - mean) * (X(r, c) - mean);
        const double sd = std::sqrt(var / n);
        for (std::size_t r = 0; r < X.rows(); ++r)
            X(r, c) = (X(r, c) - mean) / sd;
    }
    m.col_standardized = true;
    return m;
}

// ---------------------------------------------------------------------------
// k-means

struct KMeansRun {
    std::uint64_t seed = 0;
    bool warm_start = false;
    double wcss = 0;
    std::vector<double> trace; ///< WCSS after each Lloyd iteration
    std::size_t iterations = 0;
    bool converged = false;
};

struct ClusterResult {
    std::size_t k = 0;
    std::vector<std::string> ids;
    std::vector<int> assignment; ///< canonical labels: 0 = largest cluster
    Matrix<double> centroids;
    std::vector<std::size_t> sizes;
    double wcss = 0;
    std::vector<KMeansRun> runs;
    std::size_t best_run = 0;
};

struct KMeansConfig {
    std::size_t max_iterations = 300;
};

namespace detail {

inline double sqdist(std::span<const double> a, std::span<const double> b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// Index of the row with the smallest exponential key -log(u)/w. Rows keep
/// their keyed random numbers when reordered, so the pick follows the id.
inline std::optional<std::size_t> keyed_weighted_pick(const std::vector<double>& w, const std::vector<std::uint64_t>& keys,
                                                      std::uint64_t seed, std::uint64_t step) {
    std::optional<std::size_t> best;
    double best_key = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (!(w[i] > 0))
            continue;
        const double key = -std::log(keyed_uniform(seed, keys[i], step)) / w[i];
        if (key < best_key || (key == best_key && best && keys[i] < keys[*best])) {
            best_key = key;
            best = i;
        }
    }
    return best;
}

/// D^2 seeding continued from `centers` until k rows are chosen.
inline std::vector<std::size_t> kmeanspp(const Matrix<double>& X, const std::vector<std::uint64_t>& keys, std::size_t k,
                                         std::uint64_t seed, std::vector<std::vector<double>>& centers) {
    const auto n = X.rows();
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    for (const auto& c : centers)
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sqdist(X.row(i), c));
    std::vector<std::size_t> picked;
    std::vector<char> used(n, 0);
    while (centers.size() < k) {
        std::vector<double> w(n);
        for (std::size_t i = 0; i < n; ++i)
            w[i] = used[i] ? 0.0 : (centers.empty() ? 1.0 : d2[i]);
        auto pick = keyed_weighted_pick(w, keys, seed, centers.size());
        if (!pick) {
            // every remaining row coincides with a center
            for (std::size_t i = 0; i < n; ++i)
                w[i] = used[i] ? 0.0 : 1.0;
            pick = keyed_weighted_pick(w, keys, seed, centers.size());
            if (!pick)
                throw InvalidArgument("k exceeds the number of rows");
        }
        used[*pick] = 1;
        picked.push_back(*pick);
        centers.emplace_back(X.row(*pick).begin(), X.row(*pick).end());
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sqdist(X.row(i), centers.back()));
    }
    return picked;
}

struct LloydState {
    std::vector<int> assignment;
    std::vector<std::vector<double>> centers;
    KMeansRun run;
};

inline LloydState lloyd(const Matrix<double>& X, std::vector<std::vector<double>> centers, const KMeansConfig& cfg) {
    const auto n = X.rows(), dims = X.cols(), k = centers.size();
    LloydState st;
    st.assignment.assign(n, -1);
    for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
        bool changed = false;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double bd = sqdist(X.row(i), centers[0]);
            for (std::size_t c = 1; c < k; ++c) {
                const double d = sqdist(X.row(i), centers[c]);
                if (d < bd) {
                    bd = d;
                    best = static_cast<int>(c);
                }
            }
            if (st.assignment[i] != best) {
                st.assignment[i] = best;
                changed = true;
            }
        }
        if (!changed) {
            st.run.converged = true;
            break;
        }
        std::vector<std::vector<double>> sum(k, std::vector<double>(dims, 0.0));
        std::vector<std::size_t> cnt(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(st.assignment[i]);
            ++cnt[c];
            for (std::size_t j = 0; j < dims; ++j)
                sum[c][j] += X(i, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            if (cnt[c])
                for (std::size_t j = 0; j < dims; ++j)
                    centers[c][j] = sum[c][j] / static_cast<double>(cnt[c]);
        double w = 0;
        for (std::size_t i = 0; i < n; ++i)
            w += sqdist(X.row(i), centers[static_cast<std::size_t>(st.assignment[i])]);
        st.run.trace.push_back(w);
        st.run.iterations = it + 1;
    }
    double w = 0;
    for (std::size_t i = 0; i < n; ++i)
        w += sqdist(X.row(i), centers[static_cast<std::size_t>(st.assignment[i])]);
    st.run.wcss = w;
    st.centers = std::move(centers);
    return st;
}

inline std::vector<std::uint64_t> row_keys(const std::vector<std::string>& ids) {
    std::vector<std::uint64_t> keys;
    keys.reserve(ids.size());
    for (const auto& id : ids)
        keys.push_back(fnv1a64(id));
    return keys;
}

/// Labels sorted by descending size, then centroid lexicographic order.
inline void canonicalize(ClusterResult& r, const std::vector<std::vector<double>>& centers) {
    const auto k = centers.size();
    std::vector<std::size_t> size(k, 0);
    for (int a : r.assignment)
        ++size[static_cast<std::size_t>(a)];
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (size[a] != size[b])
            return size[a] > size[b];
        return centers[a] < centers[b];
    });
    std::vector<int> relabel(k);
    for (std::size_t i = 0; i < k; ++i)
        relabel[order[i]] = static_cast<int>(i);
    for (auto& a : r.assignment)
        a = relabel[static_cast<std::size_t>(a)];
    r.centroids = Matrix<double>(k, centers.empty() ? 0 : centers[0].size());
    r.sizes.assign(k, 0);
    for (std::size_t i = 0; i < k; ++i) {
        std::copy(centers[order[i]].begin(), centers[order[i]].end(), r.centroids.row(i).begin());
        r.sizes[i] = size[order[i]];
    }
}

} // namespace detail

/// Best-of-seeds Lloyd's algorithm from k-means++ starts. `warm` adds one
/// more start: the given centers extended by D^2 seeding.
inline ClusterResult kmeans(const Matrix<double>& X, const std::vector<std::string>& ids, std::size_t k,
                            const std::vector<std::uint64_t>& seeds, const KMeansConfig& cfg = {},
                            const Matrix<double>* warm = nullptr) {
    if (ids.size() != X.rows())
        throw InvalidArgument("row ids do not match the matrix");
    if (k < 1)
        throw InvalidArgument("k must be >= 1");
    if (k > X.rows())
        throw InvalidArgument("k = " + std::to_string(k) + " exceeds the number of rows " + std::to_string(X.rows()));
    if (seeds.empty())
        throw InvalidArgument("k-means needs at least one seed");
    if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
        throw InvalidArgument("row ids must be unique");
    const auto keys = detail::row_keys(ids);

    ClusterResult best;
    std::optional<detail::LloydState> best_state;
    auto consider = [&](detail::LloydState st) {
        best.runs.push_back(st.run);
        if (!best_state || st.run.wcss < best_state->run.wcss) {
            best.best_run = best.runs.size() - 1;
            best_state = std::move(st);
        }
    };
    for (auto seed : seeds) {
        std::vector<std::vector<double>> centers;
        detail::kmeanspp(X, keys, k, seed, centers);
        auto st = detail::lloyd(X, std::move(centers), cfg);
        st.run.seed = seed;
        consider(std::move(st));
    }
    if (warm && warm->rows() < k) {
        std::vector<std::vector<double>> centers;
        for (std::size_t c = 0; c < warm->rows(); ++c)
            centers.emplace_back(warm->row(c).begin(), warm->row(c).end());
        detail::kmeanspp(X, keys, k, seeds.front(), centers);
        auto st = detail::lloyd(X, std::move(centers), cfg);
        st.run.seed = seeds.front();
        st.run.warm_start = true;
        consider(std::move(st));
    }
    best.k = k;
    best.ids = ids;
    best.assignment = best_state->assignment;
    best.wcss = best_state->run.wcss;
    detail::canonicalize(best, best_state->centers);
    return best;
}

struct ElbowResult {
    std::vector<std::size_t> ks;
    std::vector<double> wcss;
    std::size_t suggested = 0;
    std::vector<ClusterResult> fits;

    const ClusterResult& fit(std::size_t k) const {
        for (const auto& f : fits)
            if (f.k == k)
                return f;
        throw InvalidArgument("no fit for k = " + std::to_string(k));
    }
};

/// WCSS curve over k_min..k_max; each k also tries the previous best
/// centers plus one new one, which keeps the curve non-increasing. The
/// suggestion maximizes the second difference over interior k.
inline ElbowResult elbow(const Matrix<double>& X, const std::vector<std::string>& ids, std::size_t k_min,
                         std::size_t k_max, const std::vector<std::uint64_t>& seeds, const KMeansConfig& cfg = {}) {
    k_max = std::min(k_max, X.rows());
    if (k_min < 1 || k_min > k_max)
        throw InvalidArgument("invalid elbow k range");
    ElbowResult e;
    for (std::size_t k = k_min; k <= k_max; ++k) {
        const Matrix<double>* warm = e.fits.empty() ? nullptr : &e.fits.back().centroids;
        e.fits.push_back(kmeans(X, ids, k, seeds, cfg, warm));
        e.ks.push_back(k);
        e.wcss.push_back(e.fits.back().wcss);
    }
    e.suggested = e.ks.front();
    if (e.ks.size() >= 3) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 1; i + 1 < e.ks.size(); ++i) {
            const double d2 = e.wcss[i - 1] - 2 * e.wcss[i] + e.wcss[i + 1];
            if (d2 > best) {
                best = d2;
                e.suggested = e.ks[i];
            }
        }
    }
    return e;
}

/// Largest cluster.
inline int main_cluster(const ClusterResult& r) {
    if (r.sizes.empty())
        throw InvalidArgument("empty clustering");
    return 0;
}

/// Cluster whose centroid peaks at column `week_col`; ties go to the larger
/// cluster. Empty when no centroid peaks there.
inline std::optional<int> week_peak_cluster(const ClusterResult& r, std::size_t week_col) {
    std::optional<int> best;
    for (std::size_t c = 0; c < r.k; ++c) {
        const auto row = r.centroids.row(c);
        if (week_col >= row.size())
            throw InvalidArgument("week column out of range");
        const auto peak = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
        if (peak == week_col && (!best || r.sizes[c] > r.sizes[static_cast<std::size_t>(*best)]))
            best = static_cast<int>(c);
    }
    return best;
}

inline json to_json(const ClusterResult& r, const std::vector<int>& weeks = {}) {
    json cents = json::array();
    for (std::size_t c = 0; c < r.k; ++c)
        cents.push_back(std::vector<double>(r.centroids.row(c).begin(), r.centroids.row(c).end()));
    json assign = json::object();
    for (std::size_t i = 0; i < r.ids.size(); ++i)
        assign[r.ids[i]] = r.assignment[i];
    json runs = json::array();
    for (const auto& run : r.runs)
        runs.push_back({{"seed", run.seed},
                        {"warm_start", run.warm_start},
                        {"wcss", run.wcss},
                        {"iterations", run.iterations},
                        {"converged", run.converged}});
    return {{"format_version", kFormatVersion},
            {"kind", "clusters"},
            {"k", r.k},
            {"weeks", weeks},
            {"assignment", assign},
            {"centroids", cents},
            {"sizes", r.sizes},
            {"wcss", r.wcss},
            {"runs", runs},
            {"best_run", r.best_run}};
}

inline ClusterResult cluster_result_from_json(const json& j) {
    if (j.value("kind", "") != "clusters")
        throw DataError("not a clusters document");
    ClusterResult r;
    r.k = j.at("k").get<std::size_t>();
    for (const auto& [id, a] : j.at("assignment").items()) {
        r.ids.push_back(id);
        r.assignment.push_back(a.get<int>());
    }
    const auto cents = j.at("centroids").get<std::vector<std::vector<double>>>();
    r.centroids = Matrix<double>(cents.size(), cents.empty() ? 0 : cents[0].size());
    for (std::size_t c = 0; c < cents.size(); ++c)
        std::copy(cents[c].begin(), cents[c].end(), r.centroids.row(c).begin());
    r.sizes = j.at("sizes").get<std::vector<std::size_t>>();
    r.wcss = j.at("wcss").get<double>();
    for (const auto& run : j.at("runs")) {
        KMeansRun k;
        k.seed = run.at("seed").get<std::uint64_t>();
        k.warm_start = run.at("warm_start").get<bool>();
        k.wcss = run.at("wcss").get<double>();
        k.iterations = run.at("iterations").get<std::size_t>();
        k.converged = run.at("converged").get<bool>();
        r.runs.push_back(k);
    }
    r.best_run = j.at("best_run").get<std::size_t>();
    return r;
}

inline std::string clusters_tsv(const ClusterResult& r) {
    std::ostringstream o;
    o << "# " << kPipelineVersion << '\n' << "account\tcluster\n";
    std::vector<std::size_t> idx(r.ids.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return r.ids[a] < r.ids[b]; });
    for (auto i : idx)
        o << r.ids[i] << '\t' << r.assignment[i] << '\n';
    return o.str();
}

inline std::string elbow_tsv(const ElbowResult& e) {
    std::ostringstream o;
    o << "# " << kPipelineVersion << '\n' << "k\twcss\tsuggested\n";
    for (std::size_t i = 0; i < e.ks.size(); ++i)
        o << e.ks[i] << '\t' << format_fixed(e.wcss[i], 9) << '\t' << (e.ks[i] == e.suggested ? 1 : 0) << '\n';
    return o.str();
}

} // namespace topicdyn
