#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "error.hpp"
#include "format.hpp"
#include "hash.hpp"
#include "log.hpp"
#include "text.hpp"
#include "timeutil.hpp"
#include "version.hpp"

namespace topicdyn {

struct NormalizedToken {
    std::string lemma;
    std::optional<std::string> pos;

    friend bool operator==(const NormalizedToken&, const NormalizedToken&) = default;
};

enum class DocStatus { raw, ok, empty, failed };

inline const char* to_string(DocStatus s) {
    switch (s) {
    case DocStatus::raw: return "raw";
    case DocStatus::ok: return "ok";
    case DocStatus::empty: return "empty";
    case DocStatus::failed: return "failed";
    }
    return "?";
}

struct Document {
    std::string id;
    std::string author_id;
    std::string network;
    Instant timestamp{};
    std::string raw_text;
    std::vector<NormalizedToken> tokens;
    /// Whole-document language tag.
    std::optional<std::string> lang;
    /// Per-sentence language tags, aligned with text::sentences(raw_text).
    std::vector<std::string> sentence_langs;
    /// Tokens came from the input record (lemmas/pos) rather than the normalizer.
    bool precomputed = false;
    DocStatus status = DocStatus::raw;
    std::string failure;

    std::size_t length() const noexcept { return tokens.size(); }
};

/// Lemmatizer/POS tagger plug-in. Receives one sentence with URLs already removed.
class Normalizer {
public:
    virtual ~Normalizer() = default;
    virtual std::string name() const = 0;
    virtual std::vector<NormalizedToken> analyze(std::string_view sentence) const = 0;
};

/// Built-in normalizer: whitespace tokens, punctuation trimmed, lowercased, no POS.
class WhitespaceNormalizer final : public Normalizer {
public:
    std::string name() const override { return "whitespace"; }

    std::vector<NormalizedToken> analyze(std::string_view sentence) const override {
        std::vector<NormalizedToken> out;
        for (auto& w : text::words(sentence))
            out.push_back({text::lowercase(w), std::nullopt});
        return out;
    }
};

inline std::shared_ptr<const Normalizer> make_normalizer(const std::string& name) {
    if (name.empty() || name == "whitespace")
        return std::make_shared<WhitespaceNormalizer>();
    throw InvalidArgument("unknown normalizer '" + name + "'");
}

/// Returns the language of a sentence, or nullopt when undecided (sentence kept).
using LanguageDetector = std::function<std::optional<std::string>(std::string_view)>;

struct PreprocessConfig {
    /// Sentences tagged with another language are dropped. Empty disables the filter.
    std::string target_language = "ru";
    std::set<std::string> networks;
    std::set<std::string> stopwords;
    /// Empty means no POS filtering.
    std::set<std::string> kept_pos;
    /// Nearest-rank quantile ranks bounding the retained document lengths.
    double lower_quantile = 0.2;
    double upper_quantile = 0.8;
    double outlier_iqr_multiplier = 3.0;
    std::size_t outlier_min_docs = 5;
    /// Networks whose one-token documents are always removed.
    std::set<std::string> single_token_floor;
    std::shared_ptr<const Normalizer> normalizer = std::make_shared<WhitespaceNormalizer>();
    LanguageDetector detector;

    void validate() const {
        if (!(lower_quantile > 0 && lower_quantile < 1 && upper_quantile > 0 && upper_quantile < 1))
            throw InvalidArgument("length quantile ranks must lie in (0,1)");
        if (!(lower_quantile < upper_quantile))
            throw InvalidArgument("lower length quantile must be below the upper one");
        if (!(outlier_iqr_multiplier >= 0))
            throw InvalidArgument("outlier IQR multiplier must be non-negative");
        if (!normalizer)
            throw InvalidArgument("no normalizer configured");
    }
};

// ---------------------------------------------------------------------------
// Ingestion

struct IngestError {
    std::size_t line = 0;
    std::string message;
};

struct IngestResult {
    std::vector<Document> documents;
    std::vector<IngestError> errors;
};

namespace detail {

inline std::string required_string(const json& rec, std::initializer_list<const char*> keys) {
    for (const char* k : keys) {
        auto it = rec.find(k);
        if (it != rec.end() && it->is_string())
            return it->get<std::string>();
        if (it != rec.end() && it->is_number_integer())
            return std::to_string(it->get<long long>());
    }
    throw DataError(std::string("missing field '") + *keys.begin() + "'");
}

inline Document parse_record(const json& rec, const PreprocessConfig& cfg) {
    if (!rec.is_object())
        throw DataError("record is not a JSON object");
    Document doc;
    doc.id = required_string(rec, {"id"});
    doc.author_id = required_string(rec, {"author_id", "author"});
    doc.network = required_string(rec, {"network"});
    if (!cfg.networks.empty() && !cfg.networks.count(doc.network))
        throw DataError("unknown network '" + doc.network + "'");
    const std::string ts = required_string(rec, {"timestamp"});
    auto t = parse_rfc3339(ts);
    if (!t)
        throw DataError("unparseable timestamp '" + ts + "'");
    doc.timestamp = *t;
    if (auto it = rec.find("text"); it != rec.end() && it->is_string())
        doc.raw_text = it->get<std::string>();
    if (text::trim(doc.raw_text).empty())
        if (auto it = rec.find("title"); it != rec.end() && it->is_string())
            doc.raw_text = it->get<std::string>();
    if (auto it = rec.find("lang"); it != rec.end()) {
        if (it->is_string())
            doc.lang = it->get<std::string>();
        else if (it->is_array())
            doc.sentence_langs = it->get<std::vector<std::string>>();
    }
    if (auto it = rec.find("lemmas"); it != rec.end() && it->is_array()) {
        const auto lemmas = it->get<std::vector<std::string>>();
        std::vector<std::string> pos;
        if (auto p = rec.find("pos"); p != rec.end() && p->is_array()) {
            pos = p->get<std::vector<std::string>>();
            if (pos.size() != lemmas.size())
                throw DataError("pos array not aligned with lemmas");
        }
        for (std::size_t i = 0; i < lemmas.size(); ++i) {
            NormalizedToken tok{lemmas[i], std::nullopt};
            if (!pos.empty())
                tok.pos = pos[i];
            doc.tokens.push_back(std::move(tok));
        }
        doc.precomputed = true;
    }
    return doc;
}

} // namespace detail

/// Parses line-delimited JSON records. Bad lines are reported and skipped.
inline IngestResult ingest(std::istream& in, const PreprocessConfig& cfg) {
    IngestResult res;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty())
            continue;
        try {
            auto rec = json::parse(line);
            auto doc = detail::parse_record(rec, cfg);
            if (!seen.insert(doc.id).second)
                throw DataError("duplicate document id '" + doc.id + "'");
            res.documents.push_back(std::move(doc));
        } catch (const json::exception& e) {
            res.errors.push_back({lineno, std::string("malformed JSON: ") + e.what()});
        } catch (const DataError& e) {
            res.errors.push_back({lineno, e.what()});
        }
    }
    if (res.documents.empty())
        throw DataError("no valid documents in input");
    return res;
}

inline IngestResult ingest(const std::filesystem::path& path, const PreprocessConfig& cfg) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open " + path.string());
    return ingest(in, cfg);
}

// ---------------------------------------------------------------------------
// Normalization

inline std::string strip_urls(std::string_view s) {
    static const std::regex url(R"((https?://|www\.)\S+)", std::regex::icase);
    return std::regex_replace(std::string(s), url, " ");
}

/// Language filter, URL removal, lemmatization, POS filter, stopword removal.
inline Document normalize(Document doc, const PreprocessConfig& cfg) {
    const auto& target = cfg.target_language;
    const bool filter_lang = !target.empty();
    const bool doc_foreign = filter_lang && doc.lang && *doc.lang != target;

    std::vector<NormalizedToken> raw_tokens;
    if (doc.precomputed) {
        if (!doc_foreign)
            raw_tokens = std::move(doc.tokens);
    } else if (!doc_foreign) {
        const auto sents = text::sentences(doc.raw_text);
        if (!doc.sentence_langs.empty() && doc.sentence_langs.size() != sents.size()) {
            doc.tokens.clear();
            doc.status = DocStatus::failed;
            doc.failure = "sentence language tags (" + std::to_string(doc.sentence_langs.size()) +
                          ") not aligned with sentences (" + std::to_string(sents.size()) + ")";
            return doc;
        }
        for (std::size_t i = 0; i < sents.size(); ++i) {
            if (filter_lang) {
                std::optional<std::string> lang;
                if (!doc.sentence_langs.empty())
                    lang = doc.sentence_langs[i];
                else if (cfg.detector)
                    lang = cfg.detector(sents[i]);
                if (lang && *lang != target)
                    continue;
            }
            try {
                auto toks = cfg.normalizer->analyze(strip_urls(sents[i]));
                raw_tokens.insert(raw_tokens.end(), std::make_move_iterator(toks.begin()),
                                  std::make_move_iterator(toks.end()));
            } catch (const std::exception& e) {
                doc.tokens.clear();
                doc.status = DocStatus::failed;
                doc.failure = "normalizer '" + cfg.normalizer->name() + "' failed: " + e.what();
                return doc;
            }
        }
    }

    doc.tokens.clear();
    for (auto& tok : raw_tokens) {
        tok.lemma = text::lowercase(tok.lemma);
        if (tok.lemma.empty())
            continue;
        if (doc.precomputed && (tok.lemma.starts_with("http://") || tok.lemma.starts_with("https://") ||
                                tok.lemma.starts_with("www.")))
            continue;
        if (!cfg.kept_pos.empty() && tok.pos && !cfg.kept_pos.count(*tok.pos))
            continue;
        if (cfg.stopwords.count(tok.lemma))
            continue;
        doc.tokens.push_back(std::move(tok));
    }
    doc.status = doc.tokens.empty() ? DocStatus::empty : DocStatus::ok;
    doc.failure.clear();
    return doc;
}

// ---------------------------------------------------------------------------
// Weekly partition

struct Window {
    Instant start{};
    Instant end{};

    bool contains(Instant t) const noexcept { return t >= start && t < end; }
    friend bool operator==(const Window&, const Window&) = default;
};

struct CorpusWeek {
    int week_index = 0; ///< 1-based
    Window window;
    std::string network;
    std::vector<Document> documents;
    /// Sorted distinct lemmas; the position is the term id.
    std::vector<std::string> terms;
    std::unordered_map<std::string, int> vocabulary;

    std::size_t size() const noexcept { return documents.size(); }

    int term_id(const std::string& t) const {
        auto it = vocabulary.find(t);
        return it == vocabulary.end() ? -1 : it->second;
    }

    /// Builds the dense sorted vocabulary from the documents' tokens.
    static CorpusWeek make(int week_index, Window window, std::string network, std::vector<Document> docs) {
        CorpusWeek w;
        w.week_index = week_index;
        w.window = window;
        w.network = std::move(network);
        w.documents = std::move(docs);
        std::set<std::string> lemmas;
        for (const auto& d : w.documents)
            for (const auto& t : d.tokens)
                lemmas.insert(t.lemma);
        w.terms.assign(lemmas.begin(), lemmas.end());
        for (std::size_t i = 0; i < w.terms.size(); ++i)
            w.vocabulary.emplace(w.terms[i], static_cast<int>(i));
        return w;
    }
};

struct Partition {
    std::vector<CorpusWeek> weeks; ///< ordered by (week_index, network)
    std::map<std::string, std::size_t> out_of_range;
    std::vector<Window> windows;
};

inline std::vector<Window> windows_from_boundaries(std::span<const Instant> boundaries) {
    if (boundaries.size() < 2)
        throw InvalidArgument("at least two week boundaries are required");
    std::vector<Window> ws;
    for (std::size_t i = 0; i + 1 < boundaries.size(); ++i) {
        if (!(boundaries[i] < boundaries[i + 1]))
            throw InvalidArgument("week boundaries must be strictly increasing");
        ws.push_back({boundaries[i], boundaries[i + 1]});
    }
    return ws;
}

/// `count` consecutive windows of `days` days each, starting at `start`.
inline std::vector<Instant> weekly_boundaries(Instant start, int count, int days = 7) {
    if (count < 1 || days < 1)
        throw InvalidArgument("week count and length must be positive");
    std::vector<Instant> b;
    for (int i = 0; i <= count; ++i)
        b.push_back(start + std::chrono::days{static_cast<long>(i) * days});
    return b;
}

/// Assigns each document to the half-open window containing its timestamp.
inline Partition partition_weeks(std::vector<Document> docs, std::span<const Instant> boundaries) {
    Partition p;
    p.windows = windows_from_boundaries(boundaries);
    std::map<std::pair<int, std::string>, std::vector<Document>> buckets;
    for (auto& d : docs) {
        auto it = std::upper_bound(boundaries.begin(), boundaries.end(), d.timestamp);
        if (it == boundaries.begin() || it == boundaries.end()) {
            ++p.out_of_range[d.network];
            continue;
        }
        const int week = static_cast<int>(it - boundaries.begin());
        buckets[{week, d.network}].push_back(std::move(d));
    }
    for (auto& [key, bucket] : buckets)
        p.weeks.push_back(CorpusWeek::make(key.first, p.windows[key.first - 1], key.second, std::move(bucket)));
    return p;
}

// ---------------------------------------------------------------------------
// Relative term frequency

struct TermFrequencyTable {
    int week_index = 0;
    std::string network;
    std::size_t T = 0;
    std::vector<std::string> terms;
    /// f_w per term id.
    std::vector<double> f;
    /// Number of documents containing each term.
    std::vector<std::size_t> doc_frequency;
    /// Per-document lengths N_d and sparse counts n_d (term id, count).
    std::vector<std::size_t> doc_lengths;
    std::vector<std::vector<std::pair<int, int>>> doc_counts;

    double at(const std::string& term) const {
        auto it = std::lower_bound(terms.begin(), terms.end(), term);
        if (it == terms.end() || *it != term)
            return 0.0;
        return f[static_cast<std::size_t>(it - terms.begin())];
    }
};

/// f_w = (1/T) * sum_d n_d(w) / N_d.
inline TermFrequencyTable term_frequencies(const CorpusWeek& week) {
    if (week.size() == 0)
        throw InvalidArgument("term frequencies of an empty week");
    TermFrequencyTable tab;
    tab.week_index = week.week_index;
    tab.network = week.network;
    tab.T = week.size();
    tab.terms = week.terms;
    tab.f.assign(week.terms.size(), 0.0);
    tab.doc_frequency.assign(week.terms.size(), 0);
    for (const auto& d : week.documents) {
        if (d.tokens.empty())
            throw InvalidArgument("document '" + d.id + "' has no tokens");
        std::map<int, int> counts;
        for (const auto& t : d.tokens)
            ++counts[week.vocabulary.at(t.lemma)];
        const double len = static_cast<double>(d.tokens.size());
        for (auto [id, n] : counts) {
            tab.f[static_cast<std::size_t>(id)] += n / len;
            ++tab.doc_frequency[static_cast<std::size_t>(id)];
        }
        tab.doc_lengths.push_back(d.tokens.size());
        tab.doc_counts.emplace_back(counts.begin(), counts.end());
    }
    for (auto& v : tab.f)
        v /= static_cast<double>(tab.T);
    return tab;
}

/// Nearest-rank quantile: the value at rank ceil(p*n) (1-based) of the sorted data.
template <typename T>
T nearest_rank(std::span<const T> sorted, double p) {
    if (sorted.empty())
        throw InvalidArgument("quantile of empty data");
    const auto n = sorted.size();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    return sorted[rank - 1];
}

/// Terms with f_w > Q3 + m*IQR among terms present in at least min_docs documents.
inline std::set<std::string> weekly_outliers(const TermFrequencyTable& tab, const PreprocessConfig& cfg) {
    std::vector<double> vals;
    for (std::size_t i = 0; i < tab.f.size(); ++i)
        if (tab.doc_frequency[i] >= cfg.outlier_min_docs)
            vals.push_back(tab.f[i]);
    if (vals.empty())
        return {};
    std::sort(vals.begin(), vals.end());
    const double q1 = nearest_rank<double>(vals, 0.25);
    const double q3 = nearest_rank<double>(vals, 0.75);
    const double cut = q3 + cfg.outlier_iqr_multiplier * (q3 - q1);
    std::set<std::string> out;
    for (std::size_t i = 0; i < tab.f.size(); ++i)
        if (tab.doc_frequency[i] >= cfg.outlier_min_docs && tab.f[i] > cut)
            out.insert(tab.terms[i]);
    return out;
}

/// Terms that are weekly outliers in every table.
inline std::set<std::string> detect_persistent_outliers(std::span<const TermFrequencyTable> tables,
                                                        const PreprocessConfig& cfg) {
    if (tables.empty())
        throw InvalidArgument("outlier detection needs at least one week");
    std::set<std::string> persistent = weekly_outliers(tables[0], cfg);
    for (std::size_t i = 1; i < tables.size() && !persistent.empty(); ++i) {
        const auto w = weekly_outliers(tables[i], cfg);
        std::set<std::string> keep;
        std::set_intersection(persistent.begin(), persistent.end(), w.begin(), w.end(),
                              std::inserter(keep, keep.end()));
        persistent = std::move(keep);
    }
    return persistent;
}

struct TermRemoval {
    CorpusWeek week;
    std::size_t dropped_documents = 0;
};

/// Removes the given lemmas from every document; documents left empty are dropped.
inline TermRemoval remove_terms(const CorpusWeek& week, const std::set<std::string>& terms) {
    TermRemoval r;
    std::vector<Document> docs;
    for (auto d : week.documents) {
        std::erase_if(d.tokens, [&](const NormalizedToken& t) { return terms.count(t.lemma) > 0; });
        if (d.tokens.empty()) {
            ++r.dropped_documents;
            continue;
        }
        docs.push_back(std::move(d));
    }
    r.week = CorpusWeek::make(week.week_index, week.window, week.network, std::move(docs));
    return r;
}

// ---------------------------------------------------------------------------
// Length pruning

struct LengthBounds {
    std::size_t lower = 0;
    std::size_t upper = 0;
    bool single_token_floor = false;
};

/// Lower bound is the first length above the bottom `lower_quantile` share of
/// documents (rank floor(p*n)+1); upper bound is the last length inside the
/// bottom `upper_quantile` share (rank ceil(p*n)).
inline LengthBounds length_bounds(const CorpusWeek& week, const PreprocessConfig& cfg) {
    cfg.validate();
    if (week.size() == 0)
        throw InvalidArgument("length bounds of an empty week");
    std::vector<std::size_t> lens;
    for (const auto& d : week.documents)
        lens.push_back(d.length());
    std::sort(lens.begin(), lens.end());
    const auto n = lens.size();
    auto lo_rank = static_cast<std::size_t>(std::floor(cfg.lower_quantile * static_cast<double>(n) + 1e-9)) + 1;
    lo_rank = std::clamp<std::size_t>(lo_rank, 1, n);
    LengthBounds b;
    b.lower = lens[lo_rank - 1];
    b.upper = nearest_rank<std::size_t>(lens, cfg.upper_quantile);
    if (b.lower > b.upper)
        b.lower = b.upper;
    b.single_token_floor = cfg.single_token_floor.count(week.network) > 0;
    return b;
}

/// Removes documents shorter than bounds.lower or longer than bounds.upper.
inline CorpusWeek prune_lengths(const CorpusWeek& week, const LengthBounds& bounds) {
    std::vector<Document> kept;
    for (const auto& d : week.documents) {
        const auto len = d.length();
        if (len < bounds.lower || len > bounds.upper)
            continue;
        if (bounds.single_token_floor && len <= 1)
            continue;
        kept.push_back(d);
    }
    if (kept.empty())
        throw DataError("length pruning removed every document of week " + std::to_string(week.week_index) +
                        " (" + week.network + ")");
    return CorpusWeek::make(week.week_index, week.window, week.network, std::move(kept));
}

inline CorpusWeek prune_lengths(const CorpusWeek& week, const PreprocessConfig& cfg) {
    return prune_lengths(week, length_bounds(week, cfg));
}

// ---------------------------------------------------------------------------
// Snapshots

inline json to_json(const Document& d) {
    json tokens = json::array();
    json pos = json::array();
    bool any_pos = false;
    for (const auto& t : d.tokens) {
        tokens.push_back(t.lemma);
        pos.push_back(t.pos ? json(*t.pos) : json());
        any_pos = any_pos || t.pos.has_value();
    }
    json j{{"id", d.id},
           {"author_id", d.author_id},
           {"network", d.network},
           {"timestamp", format_rfc3339(d.timestamp)},
           {"tokens", tokens},
           {"status", to_string(d.status)}};
    if (any_pos)
        j["pos"] = pos;
    return j;
}

inline Document document_from_json(const json& j) {
    Document d;
    d.id = j.at("id").get<std::string>();
    d.author_id = j.at("author_id").get<std::string>();
    d.network = j.at("network").get<std::string>();
    auto t = parse_rfc3339(j.at("timestamp").get<std::string>());
    if (!t)
        throw DataError("bad timestamp in snapshot");
    d.timestamp = *t;
    const auto& toks = j.at("tokens");
    const json* pos = j.contains("pos") ? &j.at("pos") : nullptr;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        NormalizedToken tok{toks[i].get<std::string>(), std::nullopt};
        if (pos && !(*pos)[i].is_null())
            tok.pos = (*pos)[i].get<std::string>();
        d.tokens.push_back(std::move(tok));
    }
    const auto st = j.value("status", std::string("ok"));
    d.status = st == "empty" ? DocStatus::empty : st == "failed" ? DocStatus::failed : DocStatus::ok;
    return d;
}

inline json to_json(const CorpusWeek& w) {
    json docs = json::array();
    for (const auto& d : w.documents)
        docs.push_back(to_json(d));
    return {{"format_version", kFormatVersion},
            {"kind", "corpus_week"},
            {"week_index", w.week_index},
            {"network", w.network},
            {"window", {{"start", format_rfc3339(w.window.start)}, {"end", format_rfc3339(w.window.end)}}},
            {"documents", docs},
            {"vocabulary", w.terms}};
}

inline CorpusWeek corpus_week_from_json(const json& j) {
    if (j.value("format_version", 0) != kFormatVersion || j.value("kind", "") != "corpus_week")
        throw DataError("not a corpus week snapshot of format version " + std::to_string(kFormatVersion));
    Window win{*parse_rfc3339(j.at("window").at("start").get<std::string>()),
               *parse_rfc3339(j.at("window").at("end").get<std::string>())};
    std::vector<Document> docs;
    for (const auto& d : j.at("documents"))
        docs.push_back(document_from_json(d));
    auto w = CorpusWeek::make(j.at("week_index").get<int>(), win, j.at("network").get<std::string>(), std::move(docs));
    if (w.terms != j.at("vocabulary").get<std::vector<std::string>>())
        throw DataError("corpus snapshot vocabulary does not match its documents");
    return w;
}

} // namespace topicdyn
