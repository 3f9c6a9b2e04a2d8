#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
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
#include "lda.hpp"
#include "log.hpp"
#include "text.hpp"
#include "version.hpp"

namespace topicdyn {

// ---------------------------------------------------------------------------
// relevance

struct RelevanceConfig {
    double lambda = 0.6;
    std::size_t top_m = 50;
    /// Any base gives the same ordering; kept configurable for testing.
    double log_base = std::exp(1.0);

    void validate() const {
        if (!(lambda >= 0 && lambda <= 1))
            throw InvalidArgument("relevance lambda must lie in [0, 1]");
        if (top_m < 1)
            throw InvalidArgument("top_m must be >= 1");
        if (!(log_base > 0) || log_base == 1)
            throw InvalidArgument("log base must be positive and not 1");
    }
};

struct TopicRanking {
    std::size_t topic = 0;
    std::vector<int> terms; ///< term ids, descending relevance
    std::vector<double> scores;
};

/// r = lambda log p(w|t) + (1 - lambda) log(p(w|t) / p(w)).
inline double relevance(double p_wt, double p_w, double lambda, double log_base = std::exp(1.0)) {
    const double lb = std::log(log_base);
    return lambda * (std::log(p_wt) / lb) + (1 - lambda) * (std::log(p_wt / p_w) / lb);
}

/// Per-topic relevance ranking; ties broken by term id. `marginals`
/// defaults to the model corpus' empirical token frequencies.
inline std::vector<TopicRanking> rank_relevance(const TopicModel& m, const RelevanceConfig& cfg = {},
                                                const std::vector<double>* marginals = nullptr) {
    cfg.validate();
    const auto V = m.num_terms();
    if (cfg.top_m > V)
        throw InvalidArgument("top_m = " + std::to_string(cfg.top_m) + " exceeds vocabulary size " +
                              std::to_string(V));
    const auto pw = marginals ? *marginals : m.term_marginals();
    if (pw.size() != V)
        throw InvalidArgument("marginal vector does not match the vocabulary");
    for (std::size_t w = 0; w < V; ++w)
        if (!(pw[w] > 0))
            throw DataError("term '" + m.vocabulary[w] + "' has zero marginal probability");

    std::vector<TopicRanking> out;
    std::vector<double> r(V);
    std::vector<int> ids(V);
    for (std::size_t k = 0; k < m.num_topics(); ++k) {
        for (std::size_t w = 0; w < V; ++w)
            r[w] = relevance(m.phi(k, w), pw[w], cfg.lambda, cfg.log_base);
        std::iota(ids.begin(), ids.end(), 0);
        std::partial_sort(ids.begin(), ids.begin() + static_cast<long>(cfg.top_m), ids.end(), [&](int a, int b) {
            const double ra = r[static_cast<std::size_t>(a)], rb = r[static_cast<std::size_t>(b)];
            return ra != rb ? ra > rb : a < b;
        });
        TopicRanking tr;
        tr.topic = k;
        tr.terms.assign(ids.begin(), ids.begin() + static_cast<long>(cfg.top_m));
        for (int w : tr.terms)
            tr.scores.push_back(r[static_cast<std::size_t>(w)]);
        out.push_back(std::move(tr));
    }
    return out;
}

/// Argmax of theta for document d; ties resolve to the lowest topic index.
inline std::size_t prevalent_topic(const TopicModel& m, std::size_t d) {
    if (d >= m.num_docs())
        throw InvalidArgument("document index out of range");
    const auto row = m.theta.row(d);
    return static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
}

// ---------------------------------------------------------------------------
// per-week topic instances

struct TopicInstance {
    int week = 0;
    std::string network;
    int topic = 0;
    std::vector<std::string> terms; ///< top_m relevant terms, best first
    std::vector<double> scores;
    std::size_t doc_count = 0;
    std::set<std::string> contributors;
};

struct DocAssignment {
    std::string doc_id;
    std::string author;
    int topic = 0;
};

/// Everything later stages need about one fitted (week, network) model.
struct WeekTopics {
    int week = 0;
    std::string network;
    std::vector<DocAssignment> docs;
    std::vector<TopicInstance> topics;

    std::set<std::string> authors() const {
        std::set<std::string> a;
        for (const auto& d : docs)
            a.insert(d.author);
        return a;
    }
};

inline WeekTopics week_topics(const TopicModel& m, const CorpusWeek& week, const RelevanceConfig& cfg = {}) {
    std::unordered_map<std::string, const Document*> by_id;
    for (const auto& d : week.documents)
        by_id.emplace(d.id, &d);
    WeekTopics wt;
    wt.week = week.week_index;
    wt.network = week.network;
    const auto rankings = rank_relevance(m, cfg);
    for (const auto& r : rankings) {
        TopicInstance t;
        t.week = week.week_index;
        t.network = week.network;
        t.topic = static_cast<int>(r.topic);
        for (int w : r.terms)
            t.terms.push_back(m.vocabulary[static_cast<std::size_t>(w)]);
        t.scores = r.scores;
        wt.topics.push_back(std::move(t));
    }
    for (std::size_t d = 0; d < m.num_docs(); ++d) {
        auto it = by_id.find(m.doc_ids[d]);
        if (it == by_id.end())
            throw DataError("model document '" + m.doc_ids[d] + "' is not in week " + std::to_string(week.week_index));
        const int k = static_cast<int>(prevalent_topic(m, d));
        wt.docs.push_back({m.doc_ids[d], it->second->author_id, k});
        auto& t = wt.topics[static_cast<std::size_t>(k)];
        ++t.doc_count;
        t.contributors.insert(it->second->author_id);
    }
    std::sort(wt.docs.begin(), wt.docs.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
    return wt;
}

inline json to_json(const WeekTopics& wt) {
    json topics = json::array();
    for (const auto& t : wt.topics)
        topics.push_back({{"topic", t.topic},
                          {"terms", t.terms},
                          {"scores", t.scores},
                          {"doc_count", t.doc_count},
                          {"contributors", t.contributors}});
    json docs = json::array();
    for (const auto& d : wt.docs)
        docs.push_back({{"id", d.doc_id}, {"author", d.author}, {"topic", d.topic}});
    return {{"format_version", kFormatVersion}, {"kind", "week_topics"}, {"week", wt.week},
            {"network", wt.network},            {"topics", topics},       {"docs", docs}};
}

inline WeekTopics week_topics_from_json(const json& j) {
    if (j.value("kind", "") != "week_topics")
        throw DataError("not a week_topics document");
    WeekTopics wt;
    wt.week = j.at("week").get<int>();
    wt.network = j.at("network").get<std::string>();
    for (const auto& t : j.at("topics")) {
        TopicInstance ti;
        ti.week = wt.week;
        ti.network = wt.network;
        ti.topic = t.at("topic").get<int>();
        ti.terms = t.at("terms").get<std::vector<std::string>>();
        ti.scores = t.at("scores").get<std::vector<double>>();
        ti.doc_count = t.at("doc_count").get<std::size_t>();
        ti.contributors = t.at("contributors").get<std::set<std::string>>();
        wt.topics.push_back(std::move(ti));
    }
    for (const auto& d : j.at("docs"))
        wt.docs.push_back({d.at("id").get<std::string>(), d.at("author").get<std::string>(), d.at("topic").get<int>()});
    return wt;
}

// ---------------------------------------------------------------------------
// unique topic set

struct MatchConfig {
    double threshold = 0.30;
    /// Denominator of the intersection ratio.
    std::size_t top_m = 50;

    void validate() const {
        if (!(threshold > 0 && threshold <= 1))
            throw InvalidArgument("matching threshold must lie in (0, 1]");
        if (top_m < 1)
            throw InvalidArgument("top_m must be >= 1");
    }

    bool similar(std::size_t shared) const {
        return static_cast<double>(shared) >= threshold * static_cast<double>(top_m) - 1e-9;
    }
};

struct UniqueTopic {
    std::string id; ///< "<network>:<index>"
    int week = 0;   ///< week of the representative
    int topic = 0;
    std::vector<std::string> terms;
};

struct MatchRecord {
    int week = 0;
    int topic = 0;
    std::size_t unique_index = 0;
    std::size_t shared = 0;
    double ratio = 0;
    bool similar = false;
};

/// Where a week topic's statistics go: the most similar base entry, or the
/// entry it created.
struct Attribution {
    int week = 0;
    int topic = 0;
    std::size_t unique_index = 0;
    std::size_t shared = 0;
    bool appended = false;
};

struct UniqueTopicSet {
    std::string network;
    MatchConfig config;
    std::vector<UniqueTopic> base;
    std::vector<MatchRecord> comparisons;
    std::vector<Attribution> attributions;

    const Attribution* attribution(int week, int topic) const {
        for (const auto& a : attributions)
            if (a.week == week && a.topic == topic)
                return &a;
        return nullptr;
    }
    std::size_t index_of(const std::string& id) const {
        for (std::size_t i = 0; i < base.size(); ++i)
            if (base[i].id == id)
                return i;
        throw InvalidArgument("unknown unique topic '" + id + "'");
    }
};

inline std::size_t shared_terms(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    std::unordered_set<std::string> sa(a.begin(), a.end());
    std::size_t n = 0;
    std::unordered_set<std::string> seen;
    for (const auto& t : b)
        if (sa.count(t) && seen.insert(t).second)
            ++n;
    return n;
}

/// Seeds the base list with the first week's topics, then compares every
/// later topic with all current base entries (representative rankings) and
/// appends it when no entry reaches the threshold.
inline UniqueTopicSet build_unique_set(const std::vector<WeekTopics>& weeks, const MatchConfig& cfg = {}) {
    cfg.validate();
    UniqueTopicSet set;
    set.config = cfg;
    if (weeks.empty())
        return set;
    set.network = weeks.front().network;
    for (std::size_t i = 0; i < weeks.size(); ++i) {
        if (weeks[i].network != set.network)
            throw InvalidArgument("unique sets are built per network");
        if (i && weeks[i].week <= weeks[i - 1].week)
            throw InvalidArgument("weeks must be given in increasing order");
    }
    auto append = [&](const TopicInstance& t) {
        set.base.push_back({set.network + ":" + std::to_string(set.base.size()), t.week, t.topic, t.terms});
        return set.base.size() - 1;
    };
    for (const auto& t : weeks.front().topics)
        set.attributions.push_back({t.week, t.topic, append(t), t.terms.size(), true});
    for (std::size_t i = 1; i < weeks.size(); ++i) {
        for (const auto& t : weeks[i].topics) {
            std::optional<std::size_t> best;
            std::size_t best_shared = 0;
            const std::size_t n = set.base.size();
            for (std::size_t u = 0; u < n; ++u) {
                const auto s = shared_terms(set.base[u].terms, t.terms);
                const bool sim = cfg.similar(s);
                set.comparisons.push_back(
                    {t.week, t.topic, u, s, static_cast<double>(s) / static_cast<double>(cfg.top_m), sim});
                if (sim && (!best || s > best_shared)) {
                    best = u;
                    best_shared = s;
                }
            }
            if (best)
                set.attributions.push_back({t.week, t.topic, *best, best_shared, false});
            else
                set.attributions.push_back({t.week, t.topic, append(t), t.terms.size(), true});
        }
    }
    return set;
}

inline json to_json(const UniqueTopicSet& s) {
    json base = json::array();
    for (const auto& u : s.base)
        base.push_back({{"id", u.id}, {"week", u.week}, {"topic", u.topic}, {"terms", u.terms}});
    json cmp = json::array();
    for (const auto& c : s.comparisons)
        cmp.push_back({{"week", c.week},
                       {"topic", c.topic},
                       {"unique", c.unique_index},
                       {"shared", c.shared},
                       {"ratio", c.ratio},
                       {"similar", c.similar}});
    json att = json::array();
    for (const auto& a : s.attributions)
        att.push_back({{"week", a.week},
                       {"topic", a.topic},
                       {"unique", a.unique_index},
                       {"shared", a.shared},
                       {"appended", a.appended}});
    return {{"format_version", kFormatVersion},
            {"kind", "unique_topics"},
            {"network", s.network},
            {"threshold", s.config.threshold},
            {"top_m", s.config.top_m},
            {"base", base},
            {"comparisons", cmp},
            {"attributions", att}};
}

inline UniqueTopicSet unique_set_from_json(const json& j) {
    if (j.value("kind", "") != "unique_topics")
        throw DataError("not a unique_topics document");
    UniqueTopicSet s;
    s.network = j.at("network").get<std::string>();
    s.config.threshold = j.at("threshold").get<double>();
    s.config.top_m = j.at("top_m").get<std::size_t>();
    for (const auto& u : j.at("base"))
        s.base.push_back({u.at("id").get<std::string>(), u.at("week").get<int>(), u.at("topic").get<int>(),
                          u.at("terms").get<std::vector<std::string>>()});
    for (const auto& c : j.at("comparisons"))
        s.comparisons.push_back({c.at("week").get<int>(), c.at("topic").get<int>(), c.at("unique").get<std::size_t>(),
                                 c.at("shared").get<std::size_t>(), c.at("ratio").get<double>(),
                                 c.at("similar").get<bool>()});
    for (const auto& a : j.at("attributions"))
        s.attributions.push_back({a.at("week").get<int>(), a.at("topic").get<int>(), a.at("unique").get<std::size_t>(),
                                  a.at("shared").get<std::size_t>(), a.at("appended").get<bool>()});
    return s;
}

// ---------------------------------------------------------------------------
// themes

inline constexpr const char* kUnassignedTheme = "unassigned";

struct Theme {
    std::string name;
    std::vector<std::string> keywords;
    std::vector<std::string> members; ///< unique topic ids
    std::string note;
};

struct ThemeMap {
    std::vector<Theme> themes;
    std::string default_theme = kUnassignedTheme;
    std::string provenance;

    const Theme* find(const std::string& name) const {
        for (const auto& t : themes)
            if (t.name == name)
                return &t;
        return nullptr;
    }
};

namespace detail {
inline std::vector<std::string> comma_list(const std::string& s) {
    std::vector<std::string> out;
    for (const auto& part : text::split(s, ',')) {
        auto t = text::trim(part);
        if (!t.empty())
            out.push_back(t);
    }
    return out;
}
} // namespace detail

/// INI-like text: top-level `provenance =` and `default =`, then one
/// `[Theme name]` section per theme with `keywords`, `members` and `note`.
/// `#` starts a comment line.
inline ThemeMap parse_theme_map(std::istream& in, const std::string& source = "<theme map>") {
    ThemeMap map;
    std::string line;
    int n = 0;
    Theme* cur = nullptr;
    std::set<std::string> members_seen;
    auto fail = [&](const std::string& msg) { throw DataError(source + ":" + std::to_string(n) + ": " + msg); };
    while (std::getline(in, line)) {
        ++n;
        const auto t = text::trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';')
            continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                fail("unterminated section header");
            auto name = text::trim(t.substr(1, t.size() - 2));
            if (name.empty())
                fail("empty theme name");
            if (name == kUnassignedTheme)
                fail("'unassigned' is reserved");
            if (map.find(name))
                fail("duplicate theme '" + name + "'");
            map.themes.push_back({name, {}, {}, {}});
            cur = &map.themes.back();
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos)
            fail("expected 'key = value'");
        const auto key = text::trim(t.substr(0, eq));
        const auto value = text::trim(t.substr(eq + 1));
        if (!cur) {
            if (key == "provenance")
                map.provenance = value;
            else if (key == "default")
                map.default_theme = value;
            else
                fail("unknown top-level key '" + key + "'");
            continue;
        }
        if (key == "keywords") {
            auto kw = detail::comma_list(value);
            cur->keywords.insert(cur->keywords.end(), kw.begin(), kw.end());
        } else if (key == "members") {
            for (auto& m : detail::comma_list(value)) {
                if (m.find(':') == std::string::npos)
                    fail("member '" + m + "' is not of the form network:index");
                if (!members_seen.insert(m).second)
                    fail("topic '" + m + "' assigned to more than one theme");
                cur->members.push_back(m);
            }
        } else if (key == "note") {
            cur->note = value;
        } else {
            fail("unknown key '" + key + "'");
        }
    }
    if (map.default_theme != kUnassignedTheme && !map.find(map.default_theme))
        throw DataError(source + ": default theme '" + map.default_theme + "' is not defined");
    return map;
}

inline ThemeMap load_theme_map(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open theme map " + path.string());
    return parse_theme_map(in, path.string());
}

inline std::string to_text(const ThemeMap& map) {
    std::ostringstream o;
    if (!map.provenance.empty())
        o << "provenance = " << map.provenance << '\n';
    if (map.default_theme != kUnassignedTheme)
        o << "default = " << map.default_theme << '\n';
    auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i)
            s += (i ? ", " : "") + v[i];
        return s;
    };
    for (const auto& t : map.themes) {
        o << "\n[" << t.name << "]\n";
        if (!t.keywords.empty())
            o << "keywords = " << join(t.keywords) << '\n';
        if (!t.members.empty())
            o << "members = " << join(t.members) << '\n';
        if (!t.note.empty())
            o << "note = " << t.note << '\n';
    }
    return o.str();
}

struct ThemeAssignment {
    std::map<std::string, std::string> theme_of; ///< unique id -> theme
    std::vector<std::string> themes;             ///< map order, then "unassigned" if used

    std::vector<std::string> members(const std::string& theme) const {
        std::vector<std::string> out;
        for (const auto& [id, t] : theme_of)
            if (t == theme)
                out.push_back(id);
        return out;
    }
};

/// Total assignment of the given unique topic ids. Unmapped ids go to the
/// map's default theme with a warning.
inline ThemeAssignment assign_themes(const std::vector<std::string>& ids, const ThemeMap& map) {
    const std::set<std::string> known(ids.begin(), ids.end());
    ThemeAssignment a;
    for (const auto& t : map.themes) {
        for (const auto& m : t.members) {
            if (!known.count(m))
                throw DataError("theme '" + t.name + "' references unknown topic '" + m + "'");
            a.theme_of[m] = t.name;
        }
        a.themes.push_back(t.name);
    }
    std::size_t unmapped = 0;
    for (const auto& id : ids)
        if (!a.theme_of.count(id)) {
            a.theme_of[id] = map.default_theme;
            ++unmapped;
        }
    if (unmapped) {
        warn(std::to_string(unmapped) + " unique topic(s) not in the theme map; assigned to '" + map.default_theme +
             "'");
        if (std::find(a.themes.begin(), a.themes.end(), map.default_theme) == a.themes.end())
            a.themes.push_back(map.default_theme);
    }
    return a;
}

inline std::vector<std::string> unique_ids(const std::vector<UniqueTopicSet>& sets) {
    std::vector<std::string> ids;
    for (const auto& s : sets)
        for (const auto& u : s.base)
            ids.push_back(u.id);
    return ids;
}

inline json to_json(const ThemeAssignment& a) {
    return {{"format_version", kFormatVersion}, {"kind", "theme_assignment"}, {"themes", a.themes},
            {"theme_of", a.theme_of}};
}

inline ThemeAssignment theme_assignment_from_json(const json& j) {
    if (j.value("kind", "") != "theme_assignment")
        throw DataError("not a theme_assignment document");
    ThemeAssignment a;
    a.themes = j.at("themes").get<std::vector<std::string>>();
    a.theme_of = j.at("theme_of").get<std::map<std::string, std::string>>();
    return a;
}

struct ThemeSuggestion {
    std::string topic_id;
    std::vector<std::pair<std::string, std::size_t>> ranked; ///< (theme, keyword hits)
};

/// A keyword hits when all of its words occur among the topic's terms.
inline std::size_t keyword_hits(const std::vector<std::string>& keywords, const std::vector<std::string>& terms) {
    std::unordered_set<std::string> ts;
    for (const auto& t : terms)
        ts.insert(text::lowercase(t));
    std::size_t hits = 0;
    for (const auto& k : keywords) {
        const auto parts = text::words(text::lowercase(k));
        if (!parts.empty() && std::all_of(parts.begin(), parts.end(), [&](const auto& p) { return ts.count(p) > 0; }))
            ++hits;
    }
    return hits;
}

/// Ranked theme suggestions for topics assigned to the default theme.
/// Nothing is assigned.
inline std::vector<ThemeSuggestion> suggest_themes(const std::vector<UniqueTopicSet>& sets, const ThemeAssignment& a,
                                                   const ThemeMap& map) {
    std::vector<ThemeSuggestion> out;
    for (const auto& s : sets)
        for (const auto& u : s.base) {
            auto it = a.theme_of.find(u.id);
            if (it != a.theme_of.end() && it->second != map.default_theme)
                continue;
            ThemeSuggestion sug{u.id, {}};
            for (const auto& t : map.themes)
                if (auto h = keyword_hits(t.keywords, u.terms); h > 0)
                    sug.ranked.emplace_back(t.name, h);
            std::sort(sug.ranked.begin(), sug.ranked.end(),
                      [](const auto& x, const auto& y) { return x.second != y.second ? x.second > y.second : x.first < y.first; });
            out.push_back(std::move(sug));
        }
    return out;
}

/// Tab-separated topic report: unique id, theme, terms, match records.
inline std::string topic_report_tsv(const std::vector<UniqueTopicSet>& sets, const ThemeAssignment& a) {
    std::ostringstream o;
    o << "# " << kPipelineVersion << '\n';
    o << "unique_id\ttheme\tterms\tmatches\n";
    for (const auto& s : sets)
        for (std::size_t u = 0; u < s.base.size(); ++u) {
            const auto& t = s.base[u];
            auto it = a.theme_of.find(t.id);
            o << t.id << '\t' << (it == a.theme_of.end() ? std::string(kUnassignedTheme) : it->second) << '\t';
            for (std::size_t i = 0; i < t.terms.size(); ++i)
                o << (i ? " " : "") << t.terms[i];
            o << '\t';
            bool first = true;
            for (const auto& at : s.attributions)
                if (at.unique_index == u) {
                    o << (first ? "" : ",") << "w" << at.week << "/t" << at.topic << ":" << at.shared;
                    first = false;
                }
            o << '\n';
        }
    return o.str();
}

} // namespace topicdyn
