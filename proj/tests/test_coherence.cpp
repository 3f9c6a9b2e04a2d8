#include <topicdyn/coherence.hpp>

#include "support/oracles.hpp"
#include "support/synthetic.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace topicdyn;
using namespace topicdyn::testing;

TEST(BuildWindows, ShortDocumentIsOneWindow) {
    auto t = build_windows({{0, 1, 2}}, 110);
    EXPECT_EQ(t.total_windows, 1u);
    EXPECT_EQ(t.count(0), 1u);
    EXPECT_EQ(t.count(1, 2), 1u);
}

TEST(BuildWindows, HandEnumeration) {
    // [a, b, a] with window 2 -> {a,b}, {b,a}
    auto t = build_windows({{0, 1, 0}}, 2);
    EXPECT_EQ(t.total_windows, 2u);
    EXPECT_EQ(t.count(0), 2u);
    EXPECT_EQ(t.count(1), 2u);
    EXPECT_EQ(t.count(0, 1), 2u);
}

TEST(BuildWindows, EmptyDocumentContributesNothing) {
    auto t = build_windows({{}, {3}}, 5);
    EXPECT_EQ(t.total_windows, 1u);
}

TEST(BuildWindows, PairCountsBounded) {
    std::mt19937_64 rng(2);
    std::uniform_int_distribution<int> w(0, 9), len(0, 40);
    std::vector<std::vector<int>> docs(30);
    for (auto& d : docs) {
        d.resize(static_cast<std::size_t>(len(rng)));
        for (auto& x : d)
            x = w(rng);
    }
    auto t = build_windows(docs, 7);
    for (auto& [pr, c] : t.pairs) {
        EXPECT_LE(c, std::min(t.count(pr.first), t.count(pr.second)));
        EXPECT_LE(c, t.total_windows);
    }
}

TEST(Npmi, ReferenceValues) {
    EXPECT_NEAR(npmi(5, 5, 5, 10, 1e-12), 1.0, 1e-6);
    EXPECT_NEAR(npmi(25, 50, 50, 100, 1e-12), 0.0, 1e-9);
    // p1 = p2 = 0.5, p12 = 0: log(eps / 0.25) / -log(eps)
    const double eps = 1e-12;
    const double expected = std::log(eps / 0.25) / -std::log(eps);
    EXPECT_NEAR(npmi(0, 5, 5, 10, eps), expected, 1e-12);
    EXPECT_LT(npmi(0, 5, 5, 10, eps), -0.9);
    EXPECT_THROW(npmi(0, 0, 0, 0, eps), InvalidArgument);
    for (std::size_t a = 0; a <= 10; ++a)
        for (std::size_t b = 0; b <= 10; ++b)
            for (std::size_t ab = 0; ab <= std::min(a, b); ++ab) {
                const double v = npmi(ab, a, b, 10, eps);
                EXPECT_GE(v, -1.0);
                EXPECT_LE(v, 1.0);
            }
}

TEST(CvCoherence, MatchesBruteForceOracle) {
    auto f = tiny();
    CoherenceConfig cfg;
    cfg.top_n = 3;
    for (std::size_t window : {2u, 3u, 110u}) {
        cfg.window = window;
        auto rep = cv_coherence(f.model, cfg);
        ASSERT_EQ(rep.per_topic.size(), 2u);
        double mean = 0;
        for (std::size_t k = 0; k < 2; ++k) {
            ASSERT_TRUE(rep.per_topic[k]);
            const double want = oracle_cv(f.text, words_of(f.model, rep.top_words[k]), window, cfg.npmi_epsilon);
            EXPECT_NEAR(*rep.per_topic[k], want, 1e-9) << "window " << window << " topic " << k;
            mean += want / 2;
        }
        EXPECT_NEAR(*rep.mean, mean, 1e-9);
    }
    // top words follow phi
    EXPECT_EQ(words_of(f.model, cv_coherence(f.model, cfg).top_words[1]).size(), 3u);
}

TEST(CvCoherence, PerfectlyCooccurringTopicsScoreOne) {
    LdaCorpus c;
    c.vocabulary = {"a", "b", "c", "x", "y", "z"};
    for (int d = 0; d < 10; ++d) {
        c.doc_ids.push_back("d" + std::to_string(d));
        c.docs.push_back(d % 2 ? std::vector<int>{0, 1, 2} : std::vector<int>{3, 4, 5});
    }
    LdaConfig lc;
    lc.k = 2;
    std::vector<std::vector<int>> z;
    for (auto& d : c.docs)
        z.push_back(std::vector<int>(d.size(), d[0] == 0 ? 0 : 1));
    auto m = make_state(c, lc, z);
    CoherenceConfig cfg;
    cfg.top_n = 3;
    auto rep = cv_coherence(m, cfg);
    EXPECT_NEAR(*rep.per_topic[0], 1.0, 1e-9);
    EXPECT_NEAR(*rep.per_topic[1], 1.0, 1e-9);
}

TEST(CvCoherence, PermutationAndDuplicationInvariance) {
    auto f = tiny();
    CoherenceConfig cfg;
    cfg.top_n = 3;
    cfg.window = 3;
    const auto tab = build_windows(f.corpus.docs, cfg.window);
    auto rep = cv_coherence(f.model, cfg);
    for (std::size_t k = 0; k < 2; ++k) {
        auto words = rep.top_words[k];
        std::sort(words.begin(), words.end());
        do {
            EXPECT_NEAR(cv_topic(words, tab, cfg.npmi_epsilon), *rep.per_topic[k], 1e-12);
        } while (std::next_permutation(words.begin(), words.end()));
    }

    auto doubled = f.corpus;
    for (std::size_t d = 0; d < f.corpus.docs.size(); ++d) {
        doubled.doc_ids.push_back(f.corpus.doc_ids[d] + "x");
        doubled.docs.push_back(f.corpus.docs[d]);
    }
    auto z2 = f.model.z;
    z2.insert(z2.end(), f.model.z.begin(), f.model.z.end());
    auto m2 = make_state(doubled, f.model.config, z2);
    auto rep2 = cv_coherence(m2, cfg);
    for (std::size_t k = 0; k < 2; ++k)
        EXPECT_NEAR(*rep2.per_topic[k], *rep.per_topic[k], 1e-9);
}

TEST(CvCoherence, ExternalReferenceEqualToModelCorpus) {
    auto f = tiny();
    CoherenceConfig cfg;
    cfg.top_n = 3;
    cfg.window = 2;
    auto a = cv_coherence(f.model, cfg);
    auto b = cv_coherence(f.model, cfg, &f.text);
    ASSERT_EQ(a.per_topic.size(), b.per_topic.size());
    for (std::size_t k = 0; k < 2; ++k)
        EXPECT_EQ(*a.per_topic[k], *b.per_topic[k]);
    EXPECT_EQ(*a.mean, *b.mean);
}

TEST(CvCoherence, UnsupportedTopicsAreSkipped) {
    auto f = tiny();
    CoherenceConfig cfg;
    cfg.top_n = 3;
    std::vector<std::string> warnings;
    auto prev = set_warning_sink([&](const std::string& s) { warnings.push_back(s); });

    // missing words are replaced by the next supported ones in phi order
    std::vector<std::vector<std::string>> ref{{"flu", "mask", "virus", "home", "unknown"}};
    auto rep = cv_coherence(f.model, cfg, &ref);
    EXPECT_TRUE(rep.per_topic[0].has_value());
    EXPECT_TRUE(rep.per_topic[1].has_value());
    EXPECT_EQ(rep.top_words[1][0], 5);
    EXPECT_TRUE(warnings.empty());

    std::vector<std::vector<std::string>> thin{{"flu", "mask", "unknown"}};
    auto none = cv_coherence(f.model, cfg, &thin);
    set_warning_sink(prev);
    EXPECT_FALSE(none.per_topic[0].has_value());
    EXPECT_FALSE(none.per_topic[1].has_value());
    EXPECT_FALSE(none.mean.has_value());
    EXPECT_EQ(warnings.size(), 2u);
}

TEST(CvCoherence, NonNegativeNpmiBoundsCoherence) {
    auto pc = topicdyn::testing::planted_corpus(60, 3, 80, 30, 5);
    LdaConfig lc;
    lc.k = 3;
    lc.iterations = 100;
    lc.burn_in = 20;
    auto m = fit(pc.corpus, lc);
    CoherenceConfig cfg;
    cfg.window = 10;
    auto rep = cv_coherence(m, cfg);
    for (auto& v : rep.per_topic) {
        ASSERT_TRUE(v);
        EXPECT_GE(*v, -1.0);
        EXPECT_LE(*v, 1.0);
    }
}

TEST(CvCoherence, RemovingUbiquitousTermRaisesCoherence) {
    // synthetic analogue of removing a corpus-wide outlier term before fitting
    auto pc = topicdyn::testing::planted_corpus(60, 3, 150, 30, 12);
    LdaCorpus with = pc.corpus;
    const int outlier = static_cast<int>(with.vocabulary.size());
    with.vocabulary.push_back("zzz_outlier");
    for (auto& d : with.docs)
        for (std::size_t i = 0; i < d.size(); i += 3)
            d[i] = outlier;
    LdaCorpus without = with;
    without.vocabulary.pop_back();
    for (auto& d : without.docs)
        std::erase(d, outlier);

    LdaConfig lc;
    lc.k = 3;
    lc.iterations = 300;
    lc.burn_in = 50;
    CoherenceConfig cfg;
    cfg.window = 20;
    const double before = *cv_coherence(fit(with, lc), cfg).mean;
    const double after = *cv_coherence(fit(without, lc), cfg).mean;
    EXPECT_GT(after, before);
}

TEST(CoherenceReport, TsvRow) {
    CoherenceReport rep;
    rep.per_topic = {0.5, std::nullopt};
    rep.mean = 0.5;
    EXPECT_EQ(coherence_tsv_row(1, "lj", 2, 10, 7, rep), "1\tlj\t2\t10\t7\t0.500000\t0.500000,NA\n");
}
