#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "graphs.hpp"
#include "hash.hpp"
#include "pipeline.hpp"
#include "version.hpp"

namespace topicdyn {

struct ApiResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

/// Read-only view of a completed run. Responses are artifact bytes, checked
/// against the manifest on every request.
class Api {
public:
    explicit Api(fs::path run_dir) : dir_(std::move(run_dir)), manifest_(load_manifest(dir_)) {
        const auto* h = manifest_.hash_of("meta.json");
        if (!h || !fs::exists(dir_ / "meta.json"))
            throw MissingArtifact("meta.json", "graphs");
        try {
            meta_ = json::parse(read_file(dir_ / "meta.json"));
        } catch (const json::exception& e) {
            throw DataError(std::string("unreadable meta.json: ") + e.what());
        }
        for (const auto& g : meta_.at("graphs"))
            graphs_[{g.at("network").get<std::string>(), g.at("week").get<int>(), g.at("cluster").get<std::string>()}] =
                g.at("path").get<std::string>();
        for (const auto& [net, ids] : meta_.at("unique_topics").items())
            for (const auto& id : ids)
                topics_.insert(id.get<std::string>());
        if (auto it = manifest_.stages.find("report"); it != manifest_.stages.end() && it->second.complete)
            for (const auto& [rel, _] : it->second.outputs)
                if (rel.ends_with(".json") && rel != "report/bars.json")
                    reports_.insert(rel);
    }

    const fs::path& run_dir() const noexcept { return dir_; }

    ApiResponse handle(std::string_view path, const std::map<std::string, std::string>& params) const {
        if (path == "/v1/meta")
            return artifact("meta.json");
        if (path == "/v1/graph")
            return graph(params);
        if (path == "/v1/timeseries")
            return timeseries(params);
        if (path == "/v1/report")
            return report(params);
        return not_found("unknown endpoint '" + std::string(path) + "'", "endpoint",
                         {"/v1/meta", "/v1/graph", "/v1/timeseries", "/v1/report"});
    }

private:
    fs::path dir_;
    Manifest manifest_;
    json meta_;
    std::map<std::tuple<std::string, int, std::string>, std::string> graphs_;
    std::set<std::string> topics_;
    std::set<std::string> reports_;

    static ApiResponse error(int status, json payload) { return {status, canonical_json(payload)}; }

    static ApiResponse not_found(const std::string& msg, const std::string& param, json valid) {
        return error(404, {{"error", msg}, {"parameter", param}, {"valid", std::move(valid)}});
    }

    ApiResponse artifact(const std::string& rel) const {
        const auto* h = manifest_.hash_of(rel);
        const auto p = dir_ / rel;
        if (!h)
            return error(500, {{"error", "artifact not listed in the manifest"}, {"artifact", rel}});
        std::string bytes;
        try {
            bytes = read_file(p);
        } catch (const Error&) {
            return error(500, {{"error", "artifact missing"}, {"artifact", rel}});
        }
        const auto actual = sha256_hex(bytes);
        if (actual != *h)
            return error(500, {{"error", "artifact hash mismatch"}, {"artifact", rel}, {"expected", *h}, {"actual", actual}});
        return {200, std::move(bytes), rel.ends_with(".json") ? "application/json" : "text/plain"};
    }

    static std::optional<int> parse_week(const std::map<std::string, std::string>& params) {
        auto it = params.find("week");
        if (it == params.end())
            return std::nullopt;
        int w = 0;
        const auto& s = it->second;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), w);
        if (ec != std::errc() || ptr != s.data() + s.size())
            return std::nullopt;
        return w;
    }

    std::vector<int> weeks_of(const std::string& network) const {
        std::set<int> s;
        for (const auto& [k, _] : graphs_)
            if (std::get<0>(k) == network)
                s.insert(std::get<1>(k));
        return {s.begin(), s.end()};
    }

    /// Checks week and network; returns an error response when invalid.
    std::optional<ApiResponse> check_selectors(const std::map<std::string, std::string>& params, int& week,
                                               std::string& network) const {
        const auto w = parse_week(params);
        if (!w || !std::count(meta_.at("weeks").begin(), meta_.at("weeks").end(), json(*w)))
            return not_found(params.count("week") ? "unknown week '" + params.at("week") + "'" : "missing week", "week",
                             meta_.at("weeks"));
        auto n = params.find("network");
        if (n == params.end() || !std::count(meta_.at("networks").begin(), meta_.at("networks").end(), json(n->second)))
            return not_found(n == params.end() ? "missing network" : "unknown network '" + n->second + "'", "network",
                             meta_.at("networks"));
        week = *w;
        network = n->second;
        return std::nullopt;
    }

    ApiResponse graph(const std::map<std::string, std::string>& params) const {
        int week = 0;
        std::string network;
        if (auto e = check_selectors(params, week, network))
            return *e;
        auto c = params.find("cluster");
        const std::string cluster = c == params.end() ? "all" : c->second;
        if (!std::count(meta_.at("clusters").begin(), meta_.at("clusters").end(), json(cluster)))
            return not_found("unknown cluster '" + cluster + "'", "cluster", meta_.at("clusters"));
        auto it = graphs_.find({network, week, cluster});
        if (it == graphs_.end())
            return not_found("no week " + std::to_string(week) + " for network '" + network + "'", "week",
                             weeks_of(network));
        return artifact(it->second);
    }

    ApiResponse timeseries(const std::map<std::string, std::string>& params) const {
        auto it = params.find("topic");
        if (it == params.end() || it->second == "all")
            return artifact("timeseries/all.json");
        if (!topics_.count(it->second))
            return not_found("unknown topic '" + it->second + "'", "topic", std::vector<std::string>(topics_.begin(), topics_.end()));
        return artifact("timeseries/" + file_safe(it->second) + ".json");
    }

    ApiResponse report(const std::map<std::string, std::string>& params) const {
        int week = 0;
        std::string network;
        if (auto e = check_selectors(params, week, network))
            return *e;
        const auto rel = "report/" + week_key(network, week) + ".json";
        if (!reports_.count(rel)) {
            std::vector<int> valid;
            for (int w : weeks_of(network))
                if (reports_.count("report/" + week_key(network, w) + ".json"))
                    valid.push_back(w);
            return not_found(reports_.empty() ? "no report in this run; run `topicdyn report`"
                                              : "no report for week " + std::to_string(week),
                             "week", valid);
        }
        return artifact(rel);
    }
};

} // namespace topicdyn
