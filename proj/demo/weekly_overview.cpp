// Runs the pipeline on a config (the bundled fixture by default) and prints,
// per network and week, the theme nodes of the full graph and the share of
// accounts in each dispersion group.

#include <topicdyn/graphs.hpp>
#include <topicdyn/pipeline.hpp>

#include <cstdio>
#include <iostream>

using namespace topicdyn;

int main(int argc, char** argv) {
    try {
        const fs::path config = argc > 1 ? fs::path(argv[1]) : fs::path(TOPICDYN_FIXTURE_DIR) / "config.json";
        const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::temp_directory_path() / "topicdyn-demo";
        Pipeline p(load_config(config), out);
        for (const auto& [stage, status] : p.run_all())
            std::cerr << stage << ": " << to_string(status) << '\n';
        std::cout << "run directory " << p.run_dir().string() << "\n\n";

        const auto meta = p.load_json("meta.json");
        for (const auto& g : meta.at("graphs")) {
            if (g.at("cluster") != "all")
                continue;
            const auto graph = parse_graph(p.load(g.at("path").get<std::string>()));
            std::printf("%s week %d: %zu accounts, %zu texts\n", graph.network.c_str(), graph.week,
                        graph.week_accounts, graph.week_texts);
            for (const auto& t : graph.topic_nodes)
                std::printf("  %-16s accounts %5.1f%%  texts %5.1f%%\n", t.id.c_str(), 100 * t.size,
                            100 * t.post_ratio);
            std::printf("  groups:");
            for (const auto& n : graph.group_nodes)
                std::printf("  %zu-topic %.1f%%", n.n, 100 * n.size);
            std::printf("\n");
        }

        for (const auto& net : meta.at("networks")) {
            const auto c = p.load_json("clusters/" + net.get<std::string>() + ".json");
            std::cout << '\n' << net.get<std::string>() << " activity clusters (k = " << c.at("k") << "): sizes "
                      << c.at("sizes").dump() << '\n';
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
