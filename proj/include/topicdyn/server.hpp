#pragma once

#include <functional>
#include <map>
#include <string>

#include <httplib.h>

#include "api.hpp"

namespace topicdyn {

/// Registers the /v1 routes of `api` on `server`.
inline void mount(httplib::Server& server, const Api& api) {
    auto handler = [&api](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> params;
        for (const auto& [k, v] : req.params)
            params.emplace(k, v);
        const auto r = api.handle(req.path, params);
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get(R"(/v1/.*)", handler);
    server.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.status = 404;
        res.set_content(canonical_json({{"error", "API lives under /v1"},
                                        {"parameter", "endpoint"},
                                        {"valid", {"/v1/meta", "/v1/graph", "/v1/timeseries", "/v1/report"}}}),
                        "application/json");
    });
}

} // namespace topicdyn
