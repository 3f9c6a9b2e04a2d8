#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "error.hpp"
#include "format.hpp"
#include "topics.hpp"
#include "version.hpp"

namespace topicdyn {

enum class ClusterSelector { all, main, peak };
enum class Granularity { theme, unique };

inline std::string to_string(ClusterSelector c) {
    switch (c) {
    case ClusterSelector::all: return "all";
    case ClusterSelector::main: return "main";
    case ClusterSelector::peak: return "peak";
    }
    return "all";
}

inline ClusterSelector cluster_selector_from_string(const std::string& s) {
    if (s == "all")
        return ClusterSelector::all;
    if (s == "main")
        return ClusterSelector::main;
    if (s == "peak")
        return ClusterSelector::peak;
    throw InvalidArgument("unknown cluster selector '" + s + "' (all, main, peak)");
}

inline std::string to_string(Granularity g) { return g == Granularity::theme ? "theme" : "unique"; }

inline Granularity granularity_from_string(const std::string& s) {
    if (s == "theme")
        return Granularity::theme;
    if (s == "unique")
        return Granularity::unique;
    throw InvalidArgument("unknown granularity '" + s + "' (theme, unique)");
}

struct GroupShare {
    std::size_t n = 0;
    std::size_t accounts = 0;
    double ratio = 0; ///< of the topic node's accounts
};

struct TopicNode {
    std::string id;
    std::size_t accounts = 0;
    std::size_t texts = 0;
    double size = 0;                   ///< accounts / week accounts
    double post_ratio = 0;             ///< texts / week texts
    double mean_posts_per_account = 0; ///< texts / accounts
    std::vector<GroupShare> groups;    ///< ascending n
};

struct GroupNode {
    std::size_t n = 0;
    std::size_t accounts = 0;
    std::size_t texts = 0;
    double size = 0;          ///< accounts / week accounts
    double account_ratio = 0; ///< accounts / selected accounts
    std::size_t topics_covered = 0;
};

struct Edge {
    std::size_t group = 0;
    std::string topic;
    std::size_t texts = 0;
    double width = 0; ///< texts / week texts
};

struct WeekGraph {
    int week = 0;
    std::string network;
    ClusterSelector cluster = ClusterSelector::all;
    std::optional<int> cluster_label;
    Granularity granularity = Granularity::theme;
    std::size_t week_accounts = 0;
    std::size_t week_texts = 0;
    std::size_t selected_accounts = 0;
    std::vector<TopicNode> topic_nodes;
    std::vector<GroupNode> group_nodes;
    std::vector<Edge> edges;

    bool empty() const { return topic_nodes.empty() && group_nodes.empty() && edges.empty(); }
};

/// Local topic -> node id, plus the node order.
struct TopicKeying {
    Granularity granularity = Granularity::unique;
    std::map<int, std::string> node_of;
    std::vector<std::string> order;

    std::size_t rank(const std::string& id) const {
        auto it = std::find(order.begin(), order.end(), id);
        return static_cast<std::size_t>(it - order.begin());
    }
};

/// Unique-topic keying orders nodes by base-list position; theme keying by
/// theme-map order.
inline TopicKeying topic_keying(const WeekTopics& wt, const UniqueTopicSet& set, Granularity g,
                                const ThemeAssignment* themes = nullptr) {
    if (g == Granularity::theme && !themes)
        throw InvalidArgument("theme granularity needs a theme assignment");
    TopicKeying k;
    k.granularity = g;
    for (const auto& t : wt.topics) {
        const auto* a = set.attribution(wt.week, t.topic);
        if (!a)
            throw DataError("week " + std::to_string(wt.week) + " topic " + std::to_string(t.topic) +
                            " has no unique-topic attribution");
        const auto& uid = set.base.at(a->unique_index).id;
        if (g == Granularity::unique) {
            k.node_of[t.topic] = uid;
            continue;
        }
        auto it = themes->theme_of.find(uid);
        if (it == themes->theme_of.end())
            throw DataError("unique topic '" + uid + "' has no theme");
        k.node_of[t.topic] = it->second;
    }
    if (g == Granularity::unique)
        for (const auto& u : set.base)
            k.order.push_back(u.id);
    else
        k.order = themes->themes;
    return k;
}

/// Keys each local topic by itself ("t<id>"); for graphs built without a
/// unique-topic set.
inline TopicKeying local_keying(const WeekTopics& wt) {
    TopicKeying k;
    for (const auto& t : wt.topics) {
        k.node_of[t.topic] = "t" + std::to_string(t.topic);
        k.order.push_back(k.node_of[t.topic]);
    }
    return k;
}

/// Accounts kept by a selector; nullopt keeps everyone. The label of the
/// chosen cluster goes to `label`.
inline std::optional<std::set<std::string>> select_accounts(const ClusterResult& r, ClusterSelector c,
                                                            std::size_t week_col, std::optional<int>* label = nullptr) {
    if (c == ClusterSelector::all)
        return std::nullopt;
    const std::optional<int> chosen = c == ClusterSelector::main ? std::optional<int>(main_cluster(r))
                                                                 : week_peak_cluster(r, week_col);
    if (label)
        *label = chosen;
    std::set<std::string> out;
    if (!chosen)
        return out;
    for (std::size_t i = 0; i < r.ids.size(); ++i)
        if (r.assignment[i] == *chosen)
            out.insert(r.ids[i]);
    return out;
}

/// Bipartite dispersion-group/topic graph. Denominators are the whole week's
/// unique accounts and texts regardless of the selection.
inline WeekGraph build_graph(const WeekTopics& wt, const Dispersion& disp, const TopicKeying& keys,
                             const std::optional<std::set<std::string>>& selection = std::nullopt,
                             ClusterSelector selector = ClusterSelector::all, std::optional<int> label = std::nullopt) {
    if (disp.week != wt.week || disp.network != wt.network)
        throw InvalidArgument("dispersion and week topics describe different weeks");
    WeekGraph g;
    g.week = wt.week;
    g.network = wt.network;
    g.cluster = selector;
    g.cluster_label = label;
    g.granularity = keys.granularity;
    g.week_accounts = wt.authors().size();
    g.week_texts = wt.docs.size();

    const auto kept = [&](const std::string& a) {
        return disp.topics_of.count(a) && (!selection || selection->count(a));
    };

    std::map<std::string, std::set<std::string>> topic_accounts;
    std::map<std::string, std::size_t> topic_texts;
    std::map<std::size_t, std::set<std::string>> group_accounts;
    std::map<std::size_t, std::set<std::string>> group_topics;
    std::map<std::size_t, std::size_t> group_texts;
    std::map<std::pair<std::size_t, std::string>, std::size_t> edge_texts;
    std::map<std::string, std::map<std::size_t, std::set<std::string>>> topic_group_accounts;

    for (const auto& d : wt.docs) {
        if (!kept(d.author))
            continue;
        auto it = keys.node_of.find(d.topic);
        if (it == keys.node_of.end())
            throw DataError("no node for topic " + std::to_string(d.topic));
        const auto& node = it->second;
        const auto n = disp.group_of(d.author);
        topic_accounts[node].insert(d.author);
        ++topic_texts[node];
        group_accounts[n].insert(d.author);
        group_topics[n].insert(node);
        ++group_texts[n];
        ++edge_texts[{n, node}];
        topic_group_accounts[node][n].insert(d.author);
    }
    std::set<std::string> selected;
    for (const auto& [n, accts] : group_accounts)
        selected.insert(accts.begin(), accts.end());
    g.selected_accounts = selected.size();
    if (selected.empty())
        return g;

    const auto U = static_cast<double>(g.week_accounts);
    const auto T = static_cast<double>(g.week_texts);

    std::vector<std::string> node_ids;
    for (const auto& [id, _] : topic_accounts)
        node_ids.push_back(id);
    std::sort(node_ids.begin(), node_ids.end(), [&](const auto& a, const auto& b) {
        const auto ra = keys.rank(a), rb = keys.rank(b);
        return ra != rb ? ra < rb : a < b;
    });
    for (const auto& id : node_ids) {
        TopicNode t;
        t.id = id;
        t.accounts = topic_accounts[id].size();
        t.texts = topic_texts[id];
        t.size = static_cast<double>(t.accounts) / U;
        t.post_ratio = static_cast<double>(t.texts) / T;
        t.mean_posts_per_account = static_cast<double>(t.texts) / static_cast<double>(t.accounts);
        for (const auto& [n, accts] : topic_group_accounts[id])
            t.groups.push_back({n, accts.size(), static_cast<double>(accts.size()) / static_cast<double>(t.accounts)});
        g.topic_nodes.push_back(std::move(t));
    }
    for (const auto& [n, accts] : group_accounts) {
        GroupNode gn;
        gn.n = n;
        gn.accounts = accts.size();
        gn.texts = group_texts[n];
        gn.size = static_cast<double>(gn.accounts) / U;
        gn.account_ratio = static_cast<double>(gn.accounts) / static_cast<double>(selected.size());
        gn.topics_covered = group_topics[n].size();
        g.group_nodes.push_back(gn);
    }
    for (const auto& gn : g.group_nodes)
        for (const auto& t : g.topic_nodes) {
            auto it = edge_texts.find({gn.n, t.id});
            if (it != edge_texts.end())
                g.edges.push_back({gn.n, t.id, it->second, static_cast<double>(it->second) / T});
        }
    return g;
}

inline json to_json(const WeekGraph& g) {
    json meta = {{"week", g.week},
                 {"network", g.network},
                 {"cluster", to_string(g.cluster)},
                 {"cluster_label", g.cluster_label ? json(*g.cluster_label) : json(nullptr)},
                 {"granularity", to_string(g.granularity)},
                 {"week_accounts", g.week_accounts},
                 {"week_texts", g.week_texts},
                 {"selected_accounts", g.selected_accounts},
                 {"version", kPipelineVersion},
                 {"format_version", kFormatVersion}};
    json topics = json::array();
    for (const auto& t : g.topic_nodes) {
        json groups = json::array();
        for (const auto& s : t.groups)
            groups.push_back({{"n", s.n}, {"accounts", s.accounts}, {"ratio", s.ratio}});
        topics.push_back({{"id", t.id},
                          {"size", t.size},
                          {"accounts", t.accounts},
                          {"texts", t.texts},
                          {"hover",
                           {{"post_ratio", t.post_ratio},
                            {"mean_posts_per_account", t.mean_posts_per_account},
                            {"groups", groups}}}});
    }
    json groups = json::array();
    for (const auto& gn : g.group_nodes)
        groups.push_back({{"n", gn.n},
                          {"size", gn.size},
                          {"texts", gn.texts},
                          {"hover",
                           {{"accounts", gn.accounts},
                            {"account_ratio", gn.account_ratio},
                            {"topics_covered", gn.topics_covered}}}});
    json edges = json::array();
    for (const auto& e : g.edges)
        edges.push_back({{"group", e.group},
                         {"topic", e.topic},
                         {"width", e.width},
                         {"hover", {{"group", std::to_string(e.group) + "-topic"}, {"texts", e.texts}, {"text_ratio", e.width}}}});
    return {{"meta", meta}, {"topic_nodes", topics}, {"group_nodes", groups}, {"edges", edges}};
}

inline std::string serialize_graph(const WeekGraph& g) { return canonical_json(to_json(g)); }

inline WeekGraph graph_from_json(const json& j) {
    WeekGraph g;
    const auto& m = j.at("meta");
    g.week = m.at("week").get<int>();
    g.network = m.at("network").get<std::string>();
    g.cluster = cluster_selector_from_string(m.at("cluster").get<std::string>());
    if (!m.at("cluster_label").is_null())
        g.cluster_label = m.at("cluster_label").get<int>();
    g.granularity = granularity_from_string(m.at("granularity").get<std::string>());
    g.week_accounts = m.at("week_accounts").get<std::size_t>();
    g.week_texts = m.at("week_texts").get<std::size_t>();
    g.selected_accounts = m.at("selected_accounts").get<std::size_t>();
    for (const auto& t : j.at("topic_nodes")) {
        TopicNode n;
        n.id = t.at("id").get<std::string>();
        n.size = t.at("size").get<double>();
        n.accounts = t.at("accounts").get<std::size_t>();
        n.texts = t.at("texts").get<std::size_t>();
        const auto& h = t.at("hover");
        n.post_ratio = h.at("post_ratio").get<double>();
        n.mean_posts_per_account = h.at("mean_posts_per_account").get<double>();
        for (const auto& s : h.at("groups"))
            n.groups.push_back({s.at("n").get<std::size_t>(), s.at("accounts").get<std::size_t>(), s.at("ratio").get<double>()});
        g.topic_nodes.push_back(std::move(n));
    }
    for (const auto& x : j.at("group_nodes")) {
        GroupNode n;
        n.n = x.at("n").get<std::size_t>();
        n.size = x.at("size").get<double>();
        n.texts = x.at("texts").get<std::size_t>();
        const auto& h = x.at("hover");
        n.accounts = h.at("accounts").get<std::size_t>();
        n.account_ratio = h.at("account_ratio").get<double>();
        n.topics_covered = h.at("topics_covered").get<std::size_t>();
        g.group_nodes.push_back(n);
    }
    for (const auto& e : j.at("edges"))
        g.edges.push_back({e.at("group").get<std::size_t>(), e.at("topic").get<std::string>(),
                           e.at("hover").at("texts").get<std::size_t>(), e.at("width").get<double>()});
    return g;
}

inline WeekGraph parse_graph(const std::string& text) {
    try {
        return graph_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed graph document: ") + e.what());
    }
}

} // namespace topicdyn
