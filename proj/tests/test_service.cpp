#include <topicdyn/api.hpp>
#include <topicdyn/pipeline.hpp>
#include <topicdyn/server.hpp>

#include "support/fixture.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

using namespace topicdyn;
using namespace topicdyn::testing;

namespace {

json minimal_config() {
    return {{"input", "corpus.jsonl"}, {"weeks", {{"start", "2020-03-22"}, {"count", 4}}}};
}

/// One fixture run shared by the read-only tests.
class FixtureRun : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new TempDir("fixture-run");
        Pipeline p(load_config(copy_fixture(dir_->path() / "in")), dir_->path() / "runs");
        p.run_all();
        run_dir_ = new fs::path(p.run_dir());
    }
    static void TearDownTestSuite() {
        delete run_dir_;
        delete dir_;
    }
    static TempDir* dir_;
    static fs::path* run_dir_;
};
TempDir* FixtureRun::dir_ = nullptr;
fs::path* FixtureRun::run_dir_ = nullptr;

} // namespace

// ---------------------------------------------------------------------------
// config

TEST(Config, DefaultsAndOverrides) {
    auto c = parse_config(minimal_config(), "/base");
    EXPECT_EQ(c.input, "corpus.jsonl");
    EXPECT_EQ(c.resolve(c.input), fs::path("/base/corpus.jsonl"));
    EXPECT_EQ(c.boundaries.size(), 5u);
    EXPECT_EQ(c.lda.k, 13);
    EXPECT_EQ(c.selection, SelectionMode::global);
    EXPECT_EQ(c.granularity, Granularity::theme);
    EXPECT_EQ(c.run_id().size(), 16u);

    auto j = minimal_config();
    j["selection"] = {{"mode", "per_week"}, {"ks", {{"from", 2}, {"to", 5}}}, {"intervals", {10, 50}}};
    j["graphs"] = {{"granularity", "unique"}};
    c = parse_config(j, "/base");
    EXPECT_EQ(c.sweep_ks, (std::vector<int>{2, 3, 4, 5}));
    EXPECT_EQ(c.sweep_seeds, (std::vector<std::uint64_t>{1}));
    EXPECT_EQ(c.granularity, Granularity::unique);
    EXPECT_NE(c.hash, parse_config(minimal_config(), "/base").hash);
    // location does not change the run id
    EXPECT_EQ(parse_config(minimal_config(), "/a").hash, parse_config(minimal_config(), "/b").hash);
}

TEST(Config, Errors) {
    auto bad = [](json j) { EXPECT_THROW(parse_config(j, "/"), InvalidArgument) << j.dump(); };
    bad({{"weeks", {{"start", "2020-03-22"}, {"count", 4}}}});
    auto j = minimal_config();
    j["selection"] = {{"mode", "sometimes"}};
    bad(j);
    j["selection"] = {{"mode", "per_week"}};
    bad(j);
    j = minimal_config();
    j["weeks"] = {{"boundaries", {"2020-03-29", "2020-03-22"}}};
    bad(j);
    j = minimal_config();
    j["matching"] = {{"top_m", 60}};
    bad(j);
    j = minimal_config();
    j["lda"] = {{"burn_in", 5000}};
    bad(j);
}

// ---------------------------------------------------------------------------
// stage graph

TEST(Stages, TableIsTopologicallyOrdered) {
    std::set<std::string> seen;
    for (const auto& s : stage_table()) {
        for (const auto& d : s.deps)
            EXPECT_TRUE(seen.count(d)) << s.name << " depends on later stage " << d;
        EXPECT_TRUE(seen.insert(s.name).second);
    }
    for (const char* name : {"ingest", "preprocess", "sweep", "fit", "rank", "match", "themes", "dynamics", "cluster",
                             "graphs", "report"})
        EXPECT_TRUE(seen.count(name)) << name;
}

TEST(Stages, MissingUpstreamNamesTheSubcommand) {
    TempDir tmp;
    Pipeline p(load_config(copy_fixture(tmp.path() / "in")), tmp.path() / "runs");
    try {
        p.run("fit");
        FAIL() << "expected MissingArtifact";
    } catch (const MissingArtifact& e) {
        EXPECT_EQ(e.producer(), "preprocess");
        EXPECT_NE(std::string(e.what()).find("topicdyn preprocess"), std::string::npos);
    }
    p.run("ingest");
    EXPECT_THROW(p.run("sweep"), MissingArtifact);
    EXPECT_THROW(p.load("models/twitter_w01.json"), MissingArtifact);
}

TEST(Stages, RerunIsUpToDateAndDeterministic) {
    TempDir a, b;
    Pipeline pa(load_config(copy_fixture(a.path() / "in")), a.path() / "runs");
    for (const auto& [stage, st] : pa.run_all())
        EXPECT_EQ(st, StageStatus::ran) << stage;
    for (const auto& [stage, st] : pa.run_all())
        EXPECT_EQ(st, StageStatus::up_to_date) << stage;

    Pipeline pb(load_config(copy_fixture(b.path() / "in")), b.path() / "runs");
    pb.run_all();
    EXPECT_EQ(pa.run_dir().filename(), pb.run_dir().filename());
    const auto oa = all_outputs(pa.manifest()), ob = all_outputs(pb.manifest());
    EXPECT_GT(oa.size(), 40u);
    EXPECT_EQ(oa, ob);
    EXPECT_EQ(read_file(pa.run_dir() / "manifest.json"), read_file(pb.run_dir() / "manifest.json"));

    // a reopened pipeline sees the same state
    Pipeline again(load_config(a.path() / "in" / "config.json"), a.path() / "runs");
    EXPECT_TRUE(again.up_to_date("report"));
}

TEST(Stages, ThemeMapChangeRerunsDownstreamOnly) {
    TempDir tmp;
    const auto cfg = copy_fixture(tmp.path() / "in");
    Pipeline p(load_config(cfg), tmp.path() / "runs");
    p.run_all();
    const auto before = p.manifest().stages.at("graphs").outputs;
    std::ofstream(tmp.path() / "in" / "themes.ini", std::ios::app) << "\n[Spare]\nkeywords = nothing\n";
    Pipeline q(load_config(cfg), tmp.path() / "runs");
    std::map<std::string, StageStatus> st;
    for (const auto& [stage, s] : q.run_all())
        st[stage] = s;
    for (const char* up : {"ingest", "preprocess", "sweep", "fit", "rank", "match", "cluster"})
        EXPECT_EQ(st[up], StageStatus::up_to_date) << up;
    for (const char* down : {"themes", "dynamics", "graphs", "report"})
        EXPECT_EQ(st[down], StageStatus::ran) << down;
    // theme list is part of meta.json, graph files themselves are unchanged
    EXPECT_NE(q.manifest().stages.at("graphs").outputs.at("meta.json"), before.at("meta.json"));
    EXPECT_EQ(q.manifest().stages.at("graphs").outputs.at("graphs/twitter_w01_all.json"),
              before.at("graphs/twitter_w01_all.json"));
}

TEST(Stages, CorruptArtifactIsDetected) {
    TempDir tmp;
    Pipeline p(load_config(copy_fixture(tmp.path() / "in")), tmp.path() / "runs");
    p.run_all();
    std::ofstream(p.run_dir() / "topics" / "lj_w02.json", std::ios::app) << " ";
    EXPECT_FALSE(p.up_to_date("rank"));
    EXPECT_THROW(p.run("match", true), DataError);
    EXPECT_EQ(p.run("rank"), StageStatus::ran);
    // the failed forced run cleared match
    EXPECT_FALSE(p.manifest().complete("match"));
    EXPECT_EQ(p.run("match"), StageStatus::ran);
    EXPECT_EQ(p.run("match"), StageStatus::up_to_date);
}

TEST(Stages, DeclaredDependenciesMatchReads) {
    TempDir tmp;
    const auto cfg_path = copy_fixture(tmp.path() / "in");
    Pipeline full(load_config(cfg_path), tmp.path() / "runs");
    full.run_all();
    const auto ref = full.manifest();

    for (const auto& s : stage_table()) {
        // sandbox: a run directory holding only the declared upstream artifacts
        const auto root = tmp.path() / ("sandbox-" + s.name);
        const auto deps = full.dependencies(s.name);
        Manifest m;
        m.run_id = ref.run_id;
        m.config_hash = ref.config_hash;
        m.config = ref.config;
        std::set<std::string> allowed;
        for (const auto& d : deps) {
            m.stages[d] = ref.stages.at(d);
            for (const auto& [rel, _] : ref.stages.at(d).outputs) {
                fs::create_directories((root / ref.run_id / rel).parent_path());
                fs::copy_file(full.run_dir() / rel, root / ref.run_id / rel);
                allowed.insert(rel);
            }
        }
        write_atomic(root / ref.run_id / "manifest.json", to_json(m).dump(2));
        Pipeline sandboxed(load_config(cfg_path), root);
        ASSERT_EQ(sandboxed.run(s.name), StageStatus::ran) << s.name;
        EXPECT_EQ(sandboxed.manifest().stages.at(s.name).outputs, ref.stages.at(s.name).outputs) << s.name;

        std::set<std::string> read_stages;
        for (const auto& r : sandboxed.reads()) {
            if (r.starts_with("input:") || r.starts_with("themes:")) {
                EXPECT_FALSE(s.external.empty()) << s.name << " reads " << r;
                continue;
            }
            EXPECT_TRUE(allowed.count(r)) << s.name << " reads undeclared " << r;
            for (const auto& d : deps)
                if (ref.stages.at(d).outputs.count(r))
                    read_stages.insert(d);
        }
        EXPECT_EQ(read_stages, std::set<std::string>(deps.begin(), deps.end())) << s.name;
    }
}

TEST(Stages, PerWeekSelectionRunsSweep) {
    TempDir tmp;
    const auto cfg_path = copy_fixture(tmp.path() / "in");
    auto j = json::parse(read_file(cfg_path));
    j["selection"] = {{"mode", "per_week"}, {"ks", {3, 4, 5, 6}}, {"intervals", {0, 50}}, {"seeds", {1}},
                      {"rule", {{"min_shared", 1}}}};
    j["lda"]["iterations"] = 60;
    j["lda"]["burn_in"] = 20;
    j["networks"] = {"lj"};
    j["themes"] = nullptr;
    const auto cfg = parse_config(j, cfg_path.parent_path());
    Pipeline p(cfg, tmp.path() / "runs");
    for (const char* s : {"ingest", "preprocess", "sweep"})
        p.run(s);
    const auto sel = p.load_json("sweep/selection.json");
    EXPECT_EQ(sel.at("mode"), "per_week");
    for (const auto& [key, k] : sel.at("k").items()) {
        EXPECT_GE(k.get<int>(), 3);
        EXPECT_LE(k.get<int>(), 6);
        const auto s = p.load_json("sweep/" + key + ".selection.json");
        EXPECT_EQ(s.at("k"), k);
        const auto tsv = p.load("sweep/" + key + ".tsv");
        EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 4 * 2);
    }
    EXPECT_TRUE(fs::exists(p.run_dir() / "work" / "sweep"));
    EXPECT_FALSE(p.manifest().hash_of("work/sweep/lj_w01.log.tsv"));
}

// ---------------------------------------------------------------------------
// fixture properties

TEST_F(FixtureRun, GraphsConserve) {
    const auto manifest = load_manifest(*run_dir_);
    std::size_t checked = 0;
    for (const auto& [rel, _] : manifest.stages.at("graphs").outputs) {
        if (!rel.starts_with("graphs/"))
            continue;
        const auto text = read_file(*run_dir_ / rel);
        const auto g = parse_graph(text);
        EXPECT_EQ(serialize_graph(g), text) << rel;
        std::size_t grouped = 0;
        for (const auto& gn : g.group_nodes)
            grouped += gn.accounts;
        EXPECT_EQ(grouped, g.selected_accounts) << rel;
        // widths are written with 6 decimals
        double w = 0;
        std::size_t texts = 0;
        for (const auto& e : g.edges) {
            w += e.width;
            texts += e.texts;
        }
        const double tol = 5e-7 * static_cast<double>(g.edges.size()) + 1e-12;
        if (g.cluster == ClusterSelector::all) {
            EXPECT_EQ(texts, g.week_texts) << rel;
            EXPECT_NEAR(w, 1.0, tol) << rel;
            EXPECT_EQ(g.selected_accounts, g.week_accounts) << rel;
        } else {
            EXPECT_LE(texts, g.week_texts) << rel;
            EXPECT_LE(w, 1.0 + tol) << rel;
        }
        ++checked;
    }
    EXPECT_EQ(checked, 2u * 4u * 3u);
}

TEST_F(FixtureRun, DispersionPartitionsActiveAccounts) {
    for (const char* net : {"lj", "twitter"})
        for (int w = 1; w <= 4; ++w) {
            const auto key = week_key(net, w);
            const auto d = dispersion_from_json(json::parse(read_file(*run_dir_ / "dispersion" / (key + ".json"))));
            const auto wt = week_topics_from_json(json::parse(read_file(*run_dir_ / "topics" / (key + ".json"))));
            std::set<std::string> seen;
            for (const auto& g : d.groups)
                for (const auto& a : g.accounts)
                    EXPECT_TRUE(seen.insert(a).second) << a;
            EXPECT_EQ(seen, wt.authors()) << key;
        }
}

TEST_F(FixtureRun, PeakGraphUsesWeekDenominators) {
    for (const char* net : {"lj", "twitter"})
        for (int w = 1; w <= 4; ++w) {
            const auto all = parse_graph(read_file(*run_dir_ / "graphs" / (week_key(net, w) + "_all.json")));
            const auto peak = parse_graph(read_file(*run_dir_ / "graphs" / (week_key(net, w) + "_peak.json")));
            EXPECT_EQ(peak.week_accounts, all.week_accounts);
            EXPECT_EQ(peak.week_texts, all.week_texts);
            for (const auto& t : peak.topic_nodes)
                EXPECT_NEAR(t.size, static_cast<double>(t.accounts) / static_cast<double>(all.week_accounts), 5e-7);
        }
}

// ---------------------------------------------------------------------------
// API

TEST_F(FixtureRun, ApiServesArtifactBytes) {
    const Api api(*run_dir_);
    auto r = api.handle("/v1/meta", {});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body, read_file(*run_dir_ / "meta.json"));
    r = api.handle("/v1/graph", {{"week", "1"}, {"network", "twitter"}, {"cluster", "main"}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body, read_file(*run_dir_ / "graphs" / "twitter_w01_main.json"));
    EXPECT_EQ(r.body, serialize_graph(parse_graph(r.body)));
    r = api.handle("/v1/graph", {{"week", "2"}, {"network", "lj"}});
    EXPECT_EQ(r.body, read_file(*run_dir_ / "graphs" / "lj_w02_all.json"));
    r = api.handle("/v1/timeseries", {});
    EXPECT_EQ(r.body, read_file(*run_dir_ / "timeseries" / "all.json"));
    r = api.handle("/v1/timeseries", {{"topic", "lj:3"}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(json::parse(r.body).at("unique_id"), "lj:3");
    r = api.handle("/v1/report", {{"week", "3"}, {"network", "lj"}});
    ASSERT_EQ(r.status, 200);
    EXPECT_EQ(r.body, read_file(*run_dir_ / "report" / "lj_w03.json"));
}

TEST_F(FixtureRun, FixtureGraphMatchesGolden) {
    const Api api(*run_dir_);
    const auto r = api.handle("/v1/graph", {{"week", "1"}, {"network", "twitter"}, {"cluster", "main"}});
    const auto path = std::string(TOPICDYN_TEST_DIR) + "/golden/fixture_twitter_w01_main.json";
    if (std::getenv("TOPICDYN_UPDATE_GOLDEN"))
        std::ofstream(path, std::ios::binary) << r.body;
    EXPECT_EQ(r.body, read_file(path));
}

TEST_F(FixtureRun, ApiUnknownSelectorsList404Options) {
    const Api api(*run_dir_);
    auto r = api.handle("/v1/graph", {{"week", "99"}, {"network", "twitter"}});
    EXPECT_EQ(r.status, 404);
    auto j = json::parse(r.body);
    EXPECT_EQ(j.at("parameter"), "week");
    EXPECT_EQ(j.at("valid"), json({1, 2, 3, 4}));
    r = api.handle("/v1/graph", {{"week", "99"}});
    EXPECT_EQ(json::parse(r.body).at("valid"), json({1, 2, 3, 4}));
    r = api.handle("/v1/graph", {{"week", "1"}, {"network", "facebook"}});
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(json::parse(r.body).at("valid"), json({"lj", "twitter"}));
    r = api.handle("/v1/graph", {{"week", "1"}, {"network", "lj"}, {"cluster", "biggest"}});
    EXPECT_EQ(json::parse(r.body).at("valid"), json({"all", "main", "peak"}));
    r = api.handle("/v1/timeseries", {{"topic", "lj:99"}});
    EXPECT_EQ(r.status, 404);
    EXPECT_TRUE(json::parse(r.body).at("valid").size() > 5);
    r = api.handle("/v1/graph", {{"week", "one"}, {"network", "lj"}});
    EXPECT_EQ(r.status, 404);
    r = api.handle("/v2/meta", {});
    EXPECT_EQ(r.status, 404);
    EXPECT_EQ(json::parse(r.body).at("parameter"), "endpoint");
}

TEST(Api, HashMismatchGives500AndStaysUp) {
    TempDir tmp;
    Pipeline p(load_config(copy_fixture(tmp.path() / "in")), tmp.path() / "runs");
    p.run_all();
    const Api api(p.run_dir());
    std::ofstream(p.run_dir() / "graphs" / "lj_w01_all.json", std::ios::app) << "\n";
    auto r = api.handle("/v1/graph", {{"week", "1"}, {"network", "lj"}});
    EXPECT_EQ(r.status, 500);
    EXPECT_EQ(json::parse(r.body).at("error"), "artifact hash mismatch");
    r = api.handle("/v1/graph", {{"week", "2"}, {"network", "lj"}});
    EXPECT_EQ(r.status, 200);
    fs::remove(p.run_dir() / "graphs" / "lj_w02_all.json");
    EXPECT_EQ(api.handle("/v1/graph", {{"week", "2"}, {"network", "lj"}}).status, 500);
}

TEST(Api, NeedsCompletedGraphs) {
    TempDir tmp;
    Pipeline p(load_config(copy_fixture(tmp.path() / "in")), tmp.path() / "runs");
    p.run("ingest");
    EXPECT_THROW(Api{p.run_dir()}, MissingArtifact);
    EXPECT_THROW(Api{tmp.path() / "nowhere"}, MissingArtifact);
}

TEST_F(FixtureRun, HttpConcurrentGetsAreIdentical) {
    const Api api(*run_dir_);
    httplib::Server server;
    mount(server, api);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    const auto want = read_file(*run_dir_ / "graphs" / "twitter_w01_main.json");
    std::vector<std::string> bodies(8);
    std::vector<int> codes(8);
    {
        std::vector<std::jthread> clients;
        for (std::size_t i = 0; i < bodies.size(); ++i)
            clients.emplace_back([&, i] {
                httplib::Client c("127.0.0.1", port);
                if (auto res = c.Get("/v1/graph?week=1&network=twitter&cluster=main")) {
                    codes[i] = res->status;
                    bodies[i] = res->body;
                }
            });
    }
    for (std::size_t i = 0; i < bodies.size(); ++i) {
        EXPECT_EQ(codes[i], 200);
        EXPECT_EQ(bodies[i], want);
    }
    httplib::Client c("127.0.0.1", port);
    auto res = c.Get("/v1/graph?week=99&network=twitter");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 404);
    EXPECT_EQ(json::parse(res->body).at("valid"), json({1, 2, 3, 4}));
    res = c.Get("/v1/meta");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, read_file(*run_dir_ / "meta.json"));
    res = c.Post("/v1/meta", "", "text/plain");
    ASSERT_TRUE(res);
    EXPECT_NE(res->status, 200);
    server.stop();
    t.join();
}

// ---------------------------------------------------------------------------
// CLI

namespace {

int sh(const std::string& cmd) {
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

} // namespace

TEST(Cli, StagesGraphsAndErrors) {
    TempDir tmp;
    const auto cfg = copy_fixture(tmp.path() / "in");
    const std::string cli = TOPICDYN_CLI;
    const auto sub = [&](const std::string& s, const std::string& extra = "") {
        return cli + " " + s + " --config " + cfg.string() + " --out " + (tmp.path() / "runs").string() + " " + extra;
    };
    EXPECT_EQ(sh(sub("fit", "2> " + (tmp.path() / "err.txt").string())), 3);
    EXPECT_NE(read_file(tmp.path() / "err.txt").find("topicdyn preprocess"), std::string::npos);
    EXPECT_EQ(sh(sub("run", "2>/dev/null")), 0);
    EXPECT_EQ(sh(sub("run", "2> " + (tmp.path() / "rerun.txt").string())), 0);
    const auto rerun = read_file(tmp.path() / "rerun.txt");
    EXPECT_EQ(rerun.find(": ran"), std::string::npos) << rerun;

    const auto out = tmp.path() / "g.json";
    EXPECT_EQ(sh(sub("graphs", "--week 1 --network twitter --cluster main > " + out.string() + " 2>/dev/null")), 0);
    const auto cfgd = load_config(cfg);
    const auto run_dir = tmp.path() / "runs" / cfgd.run_id();
    EXPECT_EQ(read_file(out), read_file(run_dir / "graphs" / "twitter_w01_main.json"));
    EXPECT_EQ(sh(sub("graphs", "--week 99 --network twitter > " + out.string() + " 2>/dev/null")), 1);
    EXPECT_EQ(json::parse(read_file(out)).at("valid"), json({1, 2, 3, 4}));
    EXPECT_EQ(sh(sub("status", "> " + out.string() + " 2>/dev/null")), 0);
    EXPECT_NE(read_file(out).find("graphs\tup to date"), std::string::npos);
    EXPECT_EQ(sh(cli + " graphs --config /nonexistent.json 2>/dev/null"), 1);
    EXPECT_NE(sh(cli + " nonsense 2>/dev/null"), 0);
    EXPECT_EQ(sh(cli + " --help > /dev/null"), 0);
}
