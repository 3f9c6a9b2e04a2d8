#include <topicdyn/api.hpp>
#include <topicdyn/pipeline.hpp>
#include <topicdyn/server.hpp>

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>

using namespace topicdyn;

namespace {

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

struct Common {
    std::string config = env_or("TOPICDYN_CONFIG", "");
    std::string out;
    bool force = false;
};

Pipeline open_pipeline(const Common& c) {
    if (c.config.empty())
        throw InvalidArgument("no config given (--config or TOPICDYN_CONFIG)");
    auto cfg = load_config(c.config);
    return Pipeline(std::move(cfg), c.out.empty() ? std::nullopt : std::optional<fs::path>(c.out));
}

void report_status(const std::string& stage, StageStatus s) { std::cerr << stage << ": " << to_string(s) << '\n'; }

int print_selection(const Pipeline& p, const std::string& endpoint, std::map<std::string, std::string> params) {
    const Api api(p.run_dir());
    const auto r = api.handle(endpoint, params);
    std::cout << r.body;
    return r.status == 200 ? 0 : 1;
}

httplib::Server* g_server = nullptr;

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weekly topic dynamics pipeline: LDA topics, cross-week matching, account dispersion and activity "
                 "clusters, bipartite graphs and a read-only HTTP API."};
    app.require_subcommand(1);
    app.set_version_flag("--version", kPipelineVersion);

    Common common;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", common.config, "pipeline config (JSON); env TOPICDYN_CONFIG");
        sub->add_option("-o,--out", common.out, "root directory for run directories (default: config output_dir)");
        sub->add_flag("-f,--force", common.force, "rerun even when up to date");
    };

    for (const auto& s : stage_table()) {
        auto* sub = app.add_subcommand(s.name, s.summary);
        add_common(sub);
    }
    auto* run = app.add_subcommand("run", "run every stage in order, skipping up-to-date ones");
    add_common(run);
    auto* status = app.add_subcommand("status", "show stage completion and the run directory");
    add_common(status);

    int week = 0;
    std::string network, cluster = "all";
    auto* graphs = app.get_subcommand("graphs");
    graphs->add_option("--week", week, "print the graph for this week");
    graphs->add_option("--network", network, "network of the printed graph");
    graphs->add_option("--cluster", cluster, "all | main | peak")->check(CLI::IsMember({"all", "main", "peak"}));
    auto* report = app.get_subcommand("report");
    report->add_option("--week", week, "print the report for this week");
    report->add_option("--network", network, "network of the printed report");

    auto* serve = app.add_subcommand("serve", "serve a completed run over HTTP (read-only /v1 API)");
    std::string run_dir = env_or("TOPICDYN_RUN_DIR", "");
    std::string bind = env_or("TOPICDYN_BIND", "127.0.0.1:8080");
    serve->add_option("-c,--config", common.config, "config whose run directory is served; env TOPICDYN_CONFIG");
    serve->add_option("-o,--out", common.out, "root directory for run directories");
    serve->add_option("--run", run_dir, "run directory to serve; env TOPICDYN_RUN_DIR");
    serve->add_option("--bind", bind, "host:port; env TOPICDYN_BIND");

    CLI11_PARSE(app, argc, argv);

    try {
        auto* sub = app.get_subcommands().front();
        const auto name = sub->get_name();
        if (name == "serve") {
            fs::path dir = run_dir;
            if (dir.empty())
                dir = open_pipeline(common).run_dir();
            const Api api(dir);
            const auto colon = bind.rfind(':');
            if (colon == std::string::npos)
                throw InvalidArgument("--bind must be host:port");
            const auto host = bind.substr(0, colon);
            const int port = std::stoi(bind.substr(colon + 1));
            httplib::Server server;
            mount(server, api);
            g_server = &server;
            std::signal(SIGINT, [](int) { g_server->stop(); });
            std::signal(SIGTERM, [](int) { g_server->stop(); });
            std::cerr << "serving " << dir.string() << " on http://" << host << ':' << port << "/v1/meta\n";
            if (!server.listen(host, port))
                throw Error("cannot listen on " + bind);
            return 0;
        }

        auto p = open_pipeline(common);
        std::cerr << "run directory: " << p.run_dir().string() << '\n';
        if (name == "status") {
            for (const auto& s : stage_table()) {
                std::string state = "missing";
                if (p.manifest().complete(s.name)) {
                    try {
                        state = p.up_to_date(s.name) ? "up to date" : "stale";
                    } catch (const MissingArtifact&) {
                        state = "stale";
                    }
                }
                std::cout << s.name << '\t' << state << '\n';
            }
            return 0;
        }
        if (name == "run") {
            for (const auto& [stage, st] : p.run_all(common.force))
                report_status(stage, st);
            return 0;
        }
        report_status(name, p.run(name, common.force));
        if (name == "graphs" && (week || !network.empty()))
            return print_selection(p, "/v1/graph",
                                   {{"week", std::to_string(week)}, {"network", network}, {"cluster", cluster}});
        if (name == "report" && (week || !network.empty()))
            return print_selection(p, "/v1/report", {{"week", std::to_string(week)}, {"network", network}});
        return 0;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
