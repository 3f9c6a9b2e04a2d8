#include <topicdyn/modelsel.hpp>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace topicdyn;
using namespace topicdyn::testing;
namespace fs = std::filesystem;

namespace {

LdaCorpus small_corpus() { return topicdyn::testing::planted_corpus(40, 4, 30, 20, 3).corpus; }

SweepSpec small_spec() {
    SweepSpec s;
    s.week = 2;
    s.network = "vk";
    s.ks = k_range(2, 4);
    s.intervals = {10, 20};
    s.seeds = {1, 2};
    s.base.iterations = 40;
    s.base.burn_in = 10;
    s.coherence.top_n = 5;
    s.coherence.window = 10;
    return s;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("topicdyn_ms_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST(SelectK, SharedEarlyPeakPicks13) {
    auto sel = select_k(early_peak_curves());
    EXPECT_EQ(sel.k, 13);
    EXPECT_FALSE(sel.fallback);
    EXPECT_EQ(sel.min_shared, 3u);
    EXPECT_GT(sel.global_argmax, 13);
    bool saw13 = false;
    for (const auto& c : sel.candidates) {
        EXPECT_FALSE(c.reason.empty());
        if (c.k == 13) {
            saw13 = true;
            EXPECT_TRUE(c.chosen);
            EXPECT_EQ(c.peak_intervals, (std::vector<int>{10, 50, 100}));
        } else {
            EXPECT_FALSE(c.chosen);
        }
    }
    EXPECT_TRUE(saw13);
    EXPECT_NE(sel.audit().find("selected k = 13"), std::string::npos);
    EXPECT_EQ(sel.to_json()["k"], 13);
}

TEST(SelectK, EpsilonControlsEarlyPeak) {
    std::map<int, double> c{{5, 0.30}, {6, 0.35}, {7, 0.42}, {8, 0.38}, {9, 0.36},
                            {10, 0.40}, {11, 0.44}, {12, 0.45}, {13, 0.41}, {14, 0.40}};
    SelectionRule rule;
    rule.epsilon = 0.0;
    EXPECT_EQ(select_k(table({{10, c}}), rule).k, 12);
    rule.epsilon = 0.031;
    EXPECT_EQ(select_k(table({{10, c}}), rule).k, 7);
    rule.epsilon = 0.0299;
    EXPECT_EQ(select_k(table({{10, c}}), rule).k, 12);
    rule.epsilon = 0.031;
    rule.prefer_small_k = false;
    EXPECT_EQ(select_k(table({{10, c}}), rule).k, 12);
}

TEST(SelectK, MonotoneCurvesFallBackToArgmax) {
    std::map<int, double> up, up2;
    for (int k = 2; k <= 10; ++k) {
        up[k] = 0.1 * k;
        up2[k] = 0.1 * k - 0.01;
    }
    auto sel = select_k(table({{10, up}, {50, up2}}));
    // the last point is an endpoint maximum in both curves and counts as shared
    EXPECT_EQ(sel.k, 10);

    SelectionRule strict;
    strict.min_shared = 3;
    std::map<int, double> flat;
    for (int k = 2; k <= 10; ++k)
        flat[k] = 0.5;
    auto fb = select_k(table({{10, flat}}), strict);
    EXPECT_TRUE(fb.fallback);
    EXPECT_EQ(fb.k, 2);
    EXPECT_NE(fb.audit().find("fallback"), std::string::npos);
}

TEST(SelectK, EndpointsCompareToSingleNeighbour) {
    EXPECT_EQ(local_maxima({{2, 0.5}, {3, 0.4}, {4, 0.6}}), (std::vector<int>{2, 4}));
    EXPECT_EQ(local_maxima({{2, 0.5}, {3, 0.5}}), std::vector<int>{});
    EXPECT_EQ(local_maxima({{2, 0.5}}), std::vector<int>{});
}

TEST(SelectK, AveragesOverSeedsAndIgnoresFailures) {
    std::vector<SweepRecord> r{rec(2, 10, 0.2, 1), rec(2, 10, 0.4, 2), rec(3, 10, 0.25, 1), rec(3, 10, 0.35, 2),
                               rec(4, 10, 0.1, 1)};
    SweepRecord bad = rec(4, 10, 0.0, 2);
    bad.status = "failed";
    bad.coherence.reset();
    r.push_back(bad);
    auto curves = coherence_curves(r);
    EXPECT_DOUBLE_EQ(curves[10][2], 0.3);
    EXPECT_DOUBLE_EQ(curves[10][3], 0.3);
    EXPECT_DOUBLE_EQ(curves[10][4], 0.1);
}

TEST(SelectK, EmptyResultsError) {
    EXPECT_THROW(select_k({}), DataError);
    SweepRecord bad = rec(2, 10, 0.0);
    bad.status = "failed";
    bad.coherence.reset();
    EXPECT_THROW(select_k({bad}), DataError);
    SelectionRule r;
    r.epsilon = -1;
    EXPECT_THROW(select_k(early_peak_curves(), r), InvalidArgument);
}

TEST(SelectKProperty, PermutationInvariance) {
    auto base = early_peak_curves();
    const auto want = select_k(base);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        std::shuffle(base.begin(), base.end(), rng);
        auto got = select_k(base);
        EXPECT_EQ(got.k, want.k);
        EXPECT_EQ(got.audit(), want.audit());
    }
}

TEST(SelectKProperty, ScalingInvariance) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.2, 0.6), scale(0.1, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::map<int, std::map<int, double>> curves;
        for (int i : {10, 50, 100})
            for (int k = 2; k <= 15; ++k)
                curves[i][k] = u(rng);
        const double s = scale(rng);
        auto scaled = curves;
        for (auto& [i, c] : scaled)
            for (auto& [k, v] : c)
                v *= s;
        SelectionRule rel;
        EXPECT_EQ(select_k(table(curves), rel).k, select_k(table(scaled), rel).k);
        SelectionRule zero;
        zero.epsilon = 0.0;
        EXPECT_EQ(select_k(table(curves), zero).k, select_k(table(scaled), zero).k);
    }
}

TEST(SelectKProperty, SingleIntervalZeroEpsilonIsArgmax) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    SelectionRule rule;
    rule.epsilon = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::map<int, double> c;
        int arg = 0;
        double best = -1;
        for (int k = 2; k <= 20; ++k) {
            c[k] = u(rng);
            if (c[k] > best) {
                best = c[k];
                arg = k;
            }
        }
        EXPECT_EQ(select_k(table({{100, c}}), rule).k, arg);
    }
}

TEST(Sweep, Cardinality) {
    auto spec = small_spec();
    spec.intervals = {10};
    spec.seeds = {1};
    auto res = sweep(small_corpus(), spec);
    ASSERT_EQ(res.size(), 3u);
    for (const auto& r : res) {
        EXPECT_TRUE(r.ok()) << r.message;
        EXPECT_TRUE(std::isfinite(*r.coherence));
    }
}

TEST(Sweep, DeterministicPerSeed) {
    auto spec = small_spec();
    const auto a = sweep(small_corpus(), spec);
    const auto b = sweep(small_corpus(), spec);
    EXPECT_EQ(serialize_results(a), serialize_results(b));
}

TEST(Sweep, FailuresAreRecordedAndSweepContinues) {
    auto spec = small_spec();
    spec.ks = {2, 41, 3}; // 41 exceeds the vocabulary
    spec.intervals = {10};
    spec.seeds = {1};
    auto res = sweep(small_corpus(), spec);
    ASSERT_EQ(res.size(), 3u);
    EXPECT_TRUE(res[0].ok());
    EXPECT_TRUE(res[1].ok());
    EXPECT_EQ(res[2].key.k, 41);
    EXPECT_EQ(res[2].status, "failed");
    EXPECT_NE(res[2].message.find("exceeds"), std::string::npos);
    EXPECT_EQ(select_k(res).k, select_k({res[0], res[1]}).k);
}

TEST(Sweep, InterruptedSweepResumesToIdenticalResults) {
    TempDir dir;
    const auto corpus = small_corpus();
    const auto spec = small_spec();
    const auto reference = serialize_results(sweep(corpus, spec));

    SweepOptions opt;
    opt.results_file = dir.path / "sweep.tsv";
    int fits = 0;
    opt.cancelled = [&] { return fits++ >= 5; };
    auto partial = sweep(corpus, spec, opt);
    EXPECT_EQ(partial.size(), 5u);
    // simulate a writer killed mid-line
    std::ofstream(*opt.results_file, std::ios::app | std::ios::binary) << "2\tvk\t4\t20\t2\t0.12";

    opt.cancelled = nullptr;
    auto resumed = sweep(corpus, spec, opt);
    EXPECT_EQ(resumed.size(), spec.keys().size());
    EXPECT_EQ(serialize_results(resumed), reference);
    EXPECT_EQ(serialize_results(read_sweep(*opt.results_file)), reference);

    // a completed file is not rerun
    const auto before = read_file(*opt.results_file);
    sweep(corpus, spec, opt);
    EXPECT_EQ(read_file(*opt.results_file), before);
}

TEST(Sweep, ParallelMatchesSerial) {
    auto spec = small_spec();
    SweepOptions opt;
    opt.threads = 3;
    EXPECT_EQ(serialize_results(sweep(small_corpus(), spec, opt)), serialize_results(sweep(small_corpus(), spec)));
}

TEST(Sweep, WritesModels) {
    TempDir dir;
    auto spec = small_spec();
    spec.ks = {3};
    spec.intervals = {10};
    spec.seeds = {9};
    SweepOptions opt;
    opt.model_dir = dir.path / "models";
    auto res = sweep(small_corpus(), spec, opt);
    ASSERT_EQ(res.size(), 1u);
    const auto path = *opt.model_dir / res[0].model_ref;
    ASSERT_TRUE(fs::exists(path));
    auto m = topic_model_from_json(json::parse(read_file(path)));
    EXPECT_EQ(m.config.k, 3);
    EXPECT_EQ(m.config.seed, 9u);
}

TEST(Sweep, TsvRoundTrip) {
    SweepRecord r = rec(7, 100, 0.123456789, 3);
    r.runtime_s = 1.5;
    r.model_ref = "m.json";
    r.message = "a\tb";
    auto back = sweep_record_from_tsv(to_tsv(r).substr(0, to_tsv(r).size() - 1));
    EXPECT_EQ(back.key, r.key);
    EXPECT_DOUBLE_EQ(*back.coherence, 0.123456789);
    EXPECT_EQ(back.message, "a b");
    EXPECT_THROW(sweep_record_from_tsv("1\t2"), DataError);
}

TEST(Sweep, EmptyRangesRejected) {
    auto spec = small_spec();
    spec.seeds.clear();
    EXPECT_THROW(sweep(small_corpus(), spec), InvalidArgument);
    EXPECT_THROW(k_range(5, 4), InvalidArgument);
}
