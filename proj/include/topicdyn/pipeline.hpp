#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coherence.hpp"
#include "corpus.hpp"
#include "dynamics.hpp"
#include "error.hpp"
#include "format.hpp"
#include "graphs.hpp"
#include "hash.hpp"
#include "lda.hpp"
#include "log.hpp"
#include "modelsel.hpp"
#include "topics.hpp"
#include "version.hpp"

namespace topicdyn {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// configuration

enum class SelectionMode { global, per_week };

struct PipelineConfig {
    fs::path base_dir;
    fs::path input;
    fs::path output_dir = "runs";
    std::vector<std::string> networks; ///< empty keeps every network
    std::vector<Instant> boundaries;
    PreprocessConfig preprocess;
    LdaConfig lda;
    SelectionMode selection = SelectionMode::global;
    std::vector<int> sweep_ks;
    std::vector<int> sweep_intervals;
    std::vector<std::uint64_t> sweep_seeds;
    SelectionRule rule;
    CoherenceConfig coherence;
    RelevanceConfig relevance;
    MatchConfig matching;
    std::optional<fs::path> theme_map;
    DispersionConfig dispersion;
    Granularity granularity = Granularity::theme;
    std::optional<std::size_t> clusters;
    std::size_t cluster_k_min = 1;
    std::size_t cluster_k_max = 8;
    std::vector<std::uint64_t> cluster_seeds{1, 2, 3, 4, 5};
    unsigned threads = 1;

    json snapshot; ///< the config document as given
    std::string hash;

    std::string run_id() const { return hash.substr(0, 16); }
    fs::path resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }
};

namespace detail {

inline std::vector<Instant> parse_boundaries(const json& list) {
    std::vector<Instant> out;
    for (const auto& b : list) {
        auto t = parse_rfc3339(b.get<std::string>());
        if (!t)
            throw InvalidArgument("bad week boundary '" + b.get<std::string>() + "'");
        out.push_back(*t);
    }
    return out;
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end() && !it->is_null())
        out = it->get<T>();
}

} // namespace detail

/// Parses a pipeline config document. Relative paths resolve against
/// `base_dir`.
inline PipelineConfig parse_config(const json& j, const fs::path& base_dir) {
    using detail::read_opt;
    PipelineConfig c;
    c.base_dir = base_dir;
    c.snapshot = j;
    c.hash = sha256_hex(j.dump());
    try {
        c.input = j.at("input").get<std::string>();
        if (auto it = j.find("output_dir"); it != j.end())
            c.output_dir = it->get<std::string>();
        read_opt(j, "networks", c.networks);
        read_opt(j, "threads", c.threads);

        const auto& weeks = j.at("weeks");
        if (weeks.contains("boundaries")) {
            c.boundaries = detail::parse_boundaries(weeks.at("boundaries"));
        } else if (weeks.contains("boundaries_file")) {
            const auto doc = json::parse(read_file(c.resolve(weeks.at("boundaries_file").get<std::string>())));
            c.boundaries = detail::parse_boundaries(doc.at("boundaries"));
        } else {
            auto start = parse_rfc3339(weeks.at("start").get<std::string>());
            if (!start)
                throw InvalidArgument("bad weeks.start");
            c.boundaries = weekly_boundaries(*start, weeks.at("count").get<int>(), weeks.value("days", 7));
        }
        windows_from_boundaries(c.boundaries);

        if (auto it = j.find("preprocess"); it != j.end()) {
            const auto& p = *it;
            auto& pc = c.preprocess;
            read_opt(p, "target_language", pc.target_language);
            read_opt(p, "stopwords", pc.stopwords);
            if (auto sw = p.find("stopwords_file"); sw != p.end()) {
                std::istringstream in(read_file(c.resolve(sw->get<std::string>())));
                for (std::string line; std::getline(in, line);)
                    if (auto t = text::trim(line); !t.empty() && t[0] != '#')
                        pc.stopwords.insert(text::lowercase(t));
            }
            read_opt(p, "kept_pos", pc.kept_pos);
            read_opt(p, "lower_quantile", pc.lower_quantile);
            read_opt(p, "upper_quantile", pc.upper_quantile);
            read_opt(p, "outlier_iqr_multiplier", pc.outlier_iqr_multiplier);
            read_opt(p, "outlier_min_docs", pc.outlier_min_docs);
            read_opt(p, "single_token_floor", pc.single_token_floor);
            if (auto n = p.find("normalizer"); n != p.end())
                pc.normalizer = make_normalizer(n->get<std::string>());
        }
        c.preprocess.networks.insert(c.networks.begin(), c.networks.end());
        c.preprocess.validate();

        if (auto it = j.find("lda"); it != j.end())
            c.lda = lda_config_from_json(*it);
        c.lda.validate();

        if (auto it = j.find("selection"); it != j.end()) {
            const auto& s = *it;
            const auto mode = s.value("mode", std::string("global"));
            if (mode == "global")
                c.selection = SelectionMode::global;
            else if (mode == "per_week")
                c.selection = SelectionMode::per_week;
            else
                throw InvalidArgument("selection.mode must be global or per_week");
            if (auto k = s.find("k"); k != s.end())
                c.lda.k = k->get<int>();
            if (auto ks = s.find("ks"); ks != s.end()) {
                if (ks->is_object())
                    c.sweep_ks = k_range(ks->at("from").get<int>(), ks->at("to").get<int>());
                else
                    c.sweep_ks = ks->get<std::vector<int>>();
            }
            read_opt(s, "intervals", c.sweep_intervals);
            read_opt(s, "seeds", c.sweep_seeds);
            if (auto r = s.find("rule"); r != s.end()) {
                if (auto e = r->find("epsilon"); e != r->end() && !e->is_null())
                    c.rule.epsilon = e->get<double>();
                read_opt(*r, "relative_epsilon", c.rule.relative_epsilon);
                read_opt(*r, "min_shared", c.rule.min_shared);
                read_opt(*r, "prefer_small_k", c.rule.prefer_small_k);
            }
            c.rule.validate();
            if (c.selection == SelectionMode::per_week && (c.sweep_ks.empty() || c.sweep_intervals.empty()))
                throw InvalidArgument("per-week selection needs selection.ks and selection.intervals");
            if (c.sweep_seeds.empty())
                c.sweep_seeds = {c.lda.seed};
        }
        c.lda.validate();

        if (auto it = j.find("coherence"); it != j.end()) {
            read_opt(*it, "top_n", c.coherence.top_n);
            read_opt(*it, "window", c.coherence.window);
            read_opt(*it, "npmi_epsilon", c.coherence.npmi_epsilon);
        }
        c.coherence.validate();
        if (auto it = j.find("relevance"); it != j.end()) {
            read_opt(*it, "lambda", c.relevance.lambda);
            read_opt(*it, "top_m", c.relevance.top_m);
        }
        c.relevance.validate();
        if (auto it = j.find("matching"); it != j.end()) {
            read_opt(*it, "threshold", c.matching.threshold);
            read_opt(*it, "top_m", c.matching.top_m);
        }
        c.matching.validate();
        if (c.matching.top_m > c.relevance.top_m)
            throw InvalidArgument("matching.top_m exceeds relevance.top_m");

        if (auto it = j.find("themes"); it != j.end() && !it->is_null())
            c.theme_map = it->get<std::string>();
        if (auto it = j.find("dispersion"); it != j.end()) {
            if (auto m = it->find("mode"); m != it->end())
                c.dispersion.mode = dispersion_mode_from_string(m->get<std::string>());
            read_opt(*it, "n_terms", c.dispersion.n_terms);
        }
        if (auto it = j.find("graphs"); it != j.end())
            if (auto g = it->find("granularity"); g != it->end())
                c.granularity = granularity_from_string(g->get<std::string>());
        if (auto it = j.find("clustering"); it != j.end()) {
            if (auto k = it->find("k"); k != it->end() && k->is_number())
                c.clusters = k->get<std::size_t>();
            read_opt(*it, "k_min", c.cluster_k_min);
            read_opt(*it, "k_max", c.cluster_k_max);
            read_opt(*it, "seeds", c.cluster_seeds);
            if (c.cluster_seeds.empty())
                throw InvalidArgument("clustering.seeds must not be empty");
            if (c.cluster_k_min < 1 || c.cluster_k_min > c.cluster_k_max)
                throw InvalidArgument("invalid clustering k range");
        }
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    return c;
}

inline PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
    return parse_config(j, fs::absolute(path).parent_path());
}

// ---------------------------------------------------------------------------
// stages

struct StageInfo {
    std::string name;
    std::vector<std::string> deps;
    std::vector<std::string> external; ///< "input", "themes"
    std::string summary;
};

inline const std::vector<StageInfo>& stage_table() {
    static const std::vector<StageInfo> t{
        {"ingest", {}, {"input"}, "parse, normalize and split the corpus into weeks"},
        {"preprocess", {"ingest"}, {}, "drop persistent outlier terms and prune document lengths"},
        {"sweep", {"preprocess"}, {}, "coherence sweep and k selection (or the global k)"},
        {"fit", {"preprocess", "sweep"}, {}, "fit one LDA model per week and network"},
        {"rank", {"preprocess", "fit"}, {}, "relevance ranking and prevalent topics"},
        {"match", {"rank"}, {}, "build the unique topic set per network"},
        {"themes", {"match"}, {"themes"}, "assign unique topics to themes"},
        {"dynamics", {"preprocess", "rank", "match", "themes"}, {}, "dispersion groups and topic time series"},
        {"cluster", {"preprocess"}, {}, "k-means clustering of account activity"},
        {"graphs", {"rank", "match", "themes", "dynamics", "cluster"}, {}, "bipartite graphs and the API index"},
        {"report", {"rank", "match", "themes", "dynamics"}, {}, "per-week theme tables and bar-chart data"},
    };
    return t;
}

inline const StageInfo& stage_info(const std::string& name) {
    for (const auto& s : stage_table())
        if (s.name == name)
            return s;
    throw InvalidArgument("unknown stage '" + name + "'");
}

inline std::string week_key(const std::string& network, int week) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_w%02d", week);
    return network + buf;
}

inline std::string file_safe(std::string id) {
    std::replace(id.begin(), id.end(), ':', '_');
    return id;
}

// ---------------------------------------------------------------------------
// manifest

struct StageRecord {
    bool complete = false;
    std::map<std::string, std::string> inputs;  ///< name -> sha256
    std::map<std::string, std::string> outputs; ///< run-relative path -> sha256
};

struct Manifest {
    std::string run_id;
    std::string config_hash;
    json config;
    std::map<std::string, StageRecord> stages;

    const std::string* hash_of(const std::string& rel) const {
        for (const auto& [_, s] : stages)
            if (auto it = s.outputs.find(rel); it != s.outputs.end())
                return &it->second;
        return nullptr;
    }
    bool complete(const std::string& stage) const {
        auto it = stages.find(stage);
        return it != stages.end() && it->second.complete;
    }
};

inline json to_json(const Manifest& m) {
    json stages = json::object();
    for (const auto& [name, s] : m.stages)
        stages[name] = {{"complete", s.complete}, {"inputs", s.inputs}, {"outputs", s.outputs}};
    return {{"format_version", kFormatVersion}, {"kind", "manifest"},      {"version", kPipelineVersion},
            {"run_id", m.run_id},               {"config_hash", m.config_hash}, {"config", m.config},
            {"stages", stages}};
}

inline Manifest manifest_from_json(const json& j) {
    if (j.value("kind", "") != "manifest")
        throw DataError("not a run manifest");
    Manifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config");
    for (const auto& [name, s] : j.at("stages").items())
        m.stages[name] = {s.at("complete").get<bool>(), s.at("inputs").get<std::map<std::string, std::string>>(),
                          s.at("outputs").get<std::map<std::string, std::string>>()};
    return m;
}

inline Manifest load_manifest(const fs::path& run_dir) {
    const auto p = run_dir / "manifest.json";
    if (!fs::exists(p))
        throw MissingArtifact("manifest.json", "ingest");
    try {
        return manifest_from_json(json::parse(read_file(p)));
    } catch (const json::exception& e) {
        throw DataError("corrupt manifest " + p.string() + ": " + e.what());
    }
}

inline void write_atomic(const fs::path& path, const std::string& bytes) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw Error("cannot write " + tmp.string());
        out << bytes;
        if (!out.flush())
            throw Error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// pipeline

enum class StageStatus { ran, up_to_date };

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, std::optional<fs::path> output_root = std::nullopt)
        : cfg_(std::move(cfg)) {
        const auto root = output_root ? *output_root : cfg_.resolve(cfg_.output_dir);
        dir_ = root / cfg_.run_id();
        if (fs::exists(dir_ / "manifest.json")) {
            manifest_ = load_manifest(dir_);
            if (manifest_.config_hash != cfg_.hash)
                throw DataError("run directory " + dir_.string() + " belongs to another config");
        } else {
            manifest_.run_id = cfg_.run_id();
            manifest_.config_hash = cfg_.hash;
            manifest_.config = cfg_.snapshot;
        }
    }

    const fs::path& run_dir() const noexcept { return dir_; }
    const Manifest& manifest() const noexcept { return manifest_; }
    const PipelineConfig& config() const noexcept { return cfg_; }
    /// Artifacts and external inputs read by the last stage run.
    const std::set<std::string>& reads() const noexcept { return reads_; }

    /// Current input fingerprints for `stage`; throws MissingArtifact when an
    /// upstream stage has not completed.
    /// Upstream stages whose artifacts `stage` reads under this config.
    std::vector<std::string> dependencies(const std::string& stage) const {
        auto deps = stage_info(stage).deps;
        if (stage == "dynamics" && cfg_.dispersion.mode == DispersionMode::plain)
            std::erase(deps, "preprocess");
        return deps;
    }

    std::map<std::string, std::string> stage_inputs(const std::string& stage) const {
        const auto& info = stage_info(stage);
        std::map<std::string, std::string> in{{"config", cfg_.hash}};
        for (const auto& d : dependencies(stage)) {
            if (!manifest_.complete(d))
                throw MissingArtifact(d + " outputs", d);
            for (const auto& [p, h] : manifest_.stages.at(d).outputs)
                in[p] = h;
        }
        for (const auto& e : info.external) {
            if (e == "input")
                in["input:" + cfg_.input.string()] = sha256_file(cfg_.resolve(cfg_.input));
            else if (e == "themes" && cfg_.theme_map)
                in["themes:" + cfg_.theme_map->string()] = sha256_file(cfg_.resolve(*cfg_.theme_map));
        }
        return in;
    }

    bool up_to_date(const std::string& stage) const {
        auto it = manifest_.stages.find(stage);
        if (it == manifest_.stages.end() || !it->second.complete)
            return false;
        if (it->second.inputs != stage_inputs(stage))
            return false;
        for (const auto& [rel, h] : it->second.outputs) {
            const auto p = dir_ / rel;
            if (!fs::exists(p) || sha256_file(p) != h)
                return false;
        }
        return true;
    }

    StageStatus run(const std::string& stage, bool force = false) {
        const auto inputs = stage_inputs(stage);
        reads_.clear();
        if (!force && up_to_date(stage))
            return StageStatus::up_to_date;
        // stale outputs of this stage go first
        if (auto it = manifest_.stages.find(stage); it != manifest_.stages.end())
            for (const auto& [rel, _] : it->second.outputs)
                fs::remove(dir_ / rel);
        manifest_.stages[stage] = {};
        writes_.clear();
        dispatch(stage);
        manifest_.stages[stage] = {true, inputs, writes_};
        save_manifest();
        return StageStatus::ran;
    }

    /// Runs every stage in order; returns the status of each.
    std::vector<std::pair<std::string, StageStatus>> run_all(bool force = false) {
        std::vector<std::pair<std::string, StageStatus>> out;
        for (const auto& s : stage_table())
            out.emplace_back(s.name, run(s.name, force));
        return out;
    }

    /// Reads a run artifact, checking it against the manifest.
    std::string load(const std::string& rel) {
        reads_.insert(rel);
        const auto* h = manifest_.hash_of(rel);
        const auto p = dir_ / rel;
        if (!h || !fs::exists(p))
            throw MissingArtifact(rel, producer_of(rel));
        auto bytes = read_file(p);
        if (sha256_hex(bytes) != *h)
            throw DataError("artifact " + rel + " does not match its manifest hash");
        return bytes;
    }

    json load_json(const std::string& rel) { return json::parse(load(rel)); }

private:
    PipelineConfig cfg_;
    fs::path dir_;
    Manifest manifest_;
    std::set<std::string> reads_;
    std::map<std::string, std::string> writes_;

    std::string producer_of(const std::string& rel) const {
        const auto slash = rel.find('/');
        static const std::map<std::string, std::string> by_dir{
            {"ingest", "ingest"}, {"corpus", "preprocess"}, {"sweep", "sweep"},       {"models", "fit"},
            {"topics", "rank"},   {"unique", "match"},      {"themes", "themes"},     {"dispersion", "dynamics"},
            {"timeseries", "dynamics"}, {"clusters", "cluster"}, {"graphs", "graphs"}, {"report", "report"}};
        if (slash != std::string::npos)
            if (auto it = by_dir.find(rel.substr(0, slash)); it != by_dir.end())
                return it->second;
        return rel == "meta.json" ? "graphs" : "ingest";
    }

    void save(const std::string& rel, const std::string& bytes) {
        write_atomic(dir_ / rel, bytes);
        writes_[rel] = sha256_hex(bytes);
    }
    void save_json(const std::string& rel, const json& j) { save(rel, j.dump(1) + "\n"); }

    void save_manifest() { write_atomic(dir_ / "manifest.json", to_json(manifest_).dump(2) + "\n"); }

    std::string read_external(const std::string& what, const fs::path& p) {
        reads_.insert(what + ":" + p.string());
        return read_file(cfg_.resolve(p));
    }

    // week listing from the ingest summary
    std::vector<std::pair<std::string, int>> weeks() {
        std::vector<std::pair<std::string, int>> out;
        const auto summary = load_json("ingest/summary.json");
        for (const auto& w : summary.at("weeks"))
            out.emplace_back(w.at("network").get<std::string>(), w.at("week").get<int>());
        return out;
    }
    std::vector<std::string> networks_of(const std::vector<std::pair<std::string, int>>& ws) {
        std::set<std::string> s;
        for (const auto& [n, _] : ws)
            s.insert(n);
        return {s.begin(), s.end()};
    }

    CorpusWeek corpus(const std::string& net, int w) {
        return corpus_week_from_json(load_json("corpus/" + week_key(net, w) + ".json"));
    }
    WeekTopics topics(const std::string& net, int w) {
        return week_topics_from_json(load_json("topics/" + week_key(net, w) + ".json"));
    }
    UniqueTopicSet unique(const std::string& net) { return unique_set_from_json(load_json("unique/" + net + ".json")); }
    ThemeAssignment themes() { return theme_assignment_from_json(load_json("themes/assignment.json")); }

    void dispatch(const std::string& stage) {
        if (stage == "ingest")
            stage_ingest();
        else if (stage == "preprocess")
            stage_preprocess();
        else if (stage == "sweep")
            stage_sweep();
        else if (stage == "fit")
            stage_fit();
        else if (stage == "rank")
            stage_rank();
        else if (stage == "match")
            stage_match();
        else if (stage == "themes")
            stage_themes();
        else if (stage == "dynamics")
            stage_dynamics();
        else if (stage == "cluster")
            stage_cluster();
        else if (stage == "graphs")
            stage_graphs();
        else if (stage == "report")
            stage_report();
        else
            throw InvalidArgument("unknown stage '" + stage + "'");
    }

    void stage_ingest() {
        std::istringstream in(read_external("input", cfg_.input));
        auto res = ingest(in, cfg_.preprocess);
        json summary = {{"records", res.documents.size() + res.errors.size()}};
        json errors = json::array();
        for (const auto& e : res.errors)
            errors.push_back({{"line", e.line}, {"message", e.message}});
        summary["errors"] = errors;
        std::vector<Document> keep;
        std::map<std::string, std::size_t> skipped_network, empty;
        json failed = json::array();
        const std::set<std::string> nets(cfg_.networks.begin(), cfg_.networks.end());
        for (auto& d : res.documents) {
            if (!nets.empty() && !nets.count(d.network)) {
                ++skipped_network[d.network];
                continue;
            }
            auto n = normalize(std::move(d), cfg_.preprocess);
            if (n.status == DocStatus::failed) {
                failed.push_back({{"id", n.id}, {"reason", n.failure}});
                continue;
            }
            if (n.status == DocStatus::empty) {
                ++empty[n.network];
                continue;
            }
            keep.push_back(std::move(n));
        }
        std::sort(keep.begin(), keep.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        auto part = partition_weeks(std::move(keep), cfg_.boundaries);
        json weeks = json::array();
        for (const auto& w : part.weeks) {
            save_json("ingest/" + week_key(w.network, w.week_index) + ".json", to_json(w));
            weeks.push_back({{"network", w.network}, {"week", w.week_index}, {"documents", w.size()}});
        }
        if (part.weeks.empty())
            throw DataError("no document falls inside the configured weeks");
        summary["failed"] = failed;
        summary["empty"] = empty;
        summary["skipped_network"] = skipped_network;
        summary["out_of_range"] = part.out_of_range;
        summary["weeks"] = weeks;
        save_json("ingest/summary.json", summary);
    }

    void stage_preprocess() {
        const auto ws = weeks();
        json summary = json::object();
        json week_list = json::array();
        for (const auto& net : networks_of(ws)) {
            std::vector<CorpusWeek> raw;
            std::vector<TermFrequencyTable> tables;
            for (const auto& [n, w] : ws)
                if (n == net) {
                    raw.push_back(corpus_week_from_json(load_json("ingest/" + week_key(n, w) + ".json")));
                    tables.push_back(term_frequencies(raw.back()));
                }
            const auto outliers = detect_persistent_outliers(tables, cfg_.preprocess);
            json per_week = json::array();
            for (const auto& week : raw) {
                auto removed = remove_terms(week, outliers);
                const auto bounds = length_bounds(removed.week, cfg_.preprocess);
                auto pruned = prune_lengths(removed.week, bounds);
                per_week.push_back({{"week", week.week_index},
                                    {"ingested", week.size()},
                                    {"emptied_by_outliers", removed.dropped_documents},
                                    {"length_bounds", {bounds.lower, bounds.upper}},
                                    {"kept", pruned.size()},
                                    {"vocabulary", pruned.terms.size()}});
                save_json("corpus/" + week_key(net, week.week_index) + ".json", to_json(pruned));
                week_list.push_back({{"network", net}, {"week", week.week_index}, {"documents", pruned.size()}});
            }
            summary[net] = {{"persistent_outliers", outliers}, {"weeks", per_week}};
        }
        save_json("corpus/summary.json", {{"networks", summary}, {"weeks", week_list}});
    }

    std::vector<std::pair<std::string, int>> corpus_weeks() {
        std::vector<std::pair<std::string, int>> out;
        const auto summary = load_json("corpus/summary.json");
        for (const auto& w : summary.at("weeks"))
            out.emplace_back(w.at("network").get<std::string>(), w.at("week").get<int>());
        return out;
    }

    void stage_sweep() {
        const auto ws = corpus_weeks();
        json sel = {{"mode", cfg_.selection == SelectionMode::global ? "global" : "per_week"}};
        json ks = json::object();
        for (const auto& [net, w] : ws) {
            const auto key = week_key(net, w);
            if (cfg_.selection == SelectionMode::global) {
                ks[key] = cfg_.lda.k;
                continue;
            }
            SweepSpec spec;
            spec.ks = cfg_.sweep_ks;
            spec.intervals = cfg_.sweep_intervals;
            spec.seeds = cfg_.sweep_seeds;
            spec.base = cfg_.lda;
            spec.coherence = cfg_.coherence;
            SweepOptions opt;
            opt.results_file = dir_ / "work" / "sweep" / (key + ".log.tsv");
            opt.threads = cfg_.threads;
            const auto records = sweep(corpus(net, w), spec, opt);
            save("sweep/" + key + ".tsv", serialize_results(records));
            const auto s = select_k(records, cfg_.rule);
            save_json("sweep/" + key + ".selection.json", s.to_json());
            save("sweep/" + key + ".audit.txt", s.audit());
            ks[key] = s.k;
        }
        sel["k"] = ks;
        save_json("sweep/selection.json", sel);
    }

    void stage_fit() {
        const auto sel = load_json("sweep/selection.json");
        for (const auto& [net, w] : corpus_weeks()) {
            const auto key = week_key(net, w);
            auto c = cfg_.lda;
            c.k = sel.at("k").at(key).get<int>();
            const auto m = fit(corpus(net, w), c);
            save("models/" + key + ".json", to_json(m).dump() + "\n");
        }
    }

    void stage_rank() {
        for (const auto& [net, w] : corpus_weeks()) {
            const auto key = week_key(net, w);
            const auto cw = corpus(net, w);
            const auto m = topic_model_from_json(load_json("models/" + key + ".json"), &cw.terms);
            save_json("topics/" + key + ".json", to_json(week_topics(m, cw, cfg_.relevance)));
        }
    }

    std::vector<std::pair<std::string, int>> topic_weeks() {
        // the rank stage writes one file per corpus week; recover the list from its outputs
        std::vector<std::pair<std::string, int>> out;
        for (const auto& [rel, _] : manifest_.stages.at("rank").outputs) {
            const auto j = load_json(rel);
            out.emplace_back(j.at("network").get<std::string>(), j.at("week").get<int>());
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    void stage_match() {
        const auto ws = topic_weeks();
        for (const auto& net : networks_of(ws)) {
            std::vector<WeekTopics> list;
            for (const auto& [n, w] : ws)
                if (n == net)
                    list.push_back(topics(n, w));
            std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) { return a.week < b.week; });
            save_json("unique/" + net + ".json", to_json(build_unique_set(list, cfg_.matching)));
        }
    }

    std::vector<std::string> unique_networks() {
        std::vector<std::string> out;
        for (const auto& [rel, _] : manifest_.stages.at("match").outputs)
            out.push_back(fs::path(rel).stem().string());
        return out;
    }

    void stage_themes() {
        ThemeMap map;
        if (cfg_.theme_map) {
            std::istringstream in(read_external("themes", *cfg_.theme_map));
            map = parse_theme_map(in, cfg_.theme_map->string());
        }
        std::vector<UniqueTopicSet> sets;
        for (const auto& net : unique_networks())
            sets.push_back(unique(net));
        const auto a = assign_themes(unique_ids(sets), map);
        save_json("themes/assignment.json", to_json(a));
        json sug = json::array();
        for (const auto& s : suggest_themes(sets, a, map)) {
            json ranked = json::array();
            for (const auto& [t, h] : s.ranked)
                ranked.push_back({{"theme", t}, {"hits", h}});
            sug.push_back({{"topic", s.topic_id}, {"ranked", ranked}});
        }
        save_json("themes/suggestions.json", sug);
        save("themes/topics.tsv", topic_report_tsv(sets, a));
    }

    void stage_dynamics() {
        const auto ws = topic_weeks();
        const auto a = themes();
        json all = json::array();
        std::vector<TopicTimeSeries> every;
        for (const auto& net : networks_of(ws)) {
            std::vector<WeekTopics> list;
            for (const auto& [n, w] : ws)
                if (n == net) {
                    list.push_back(topics(n, w));
                    std::optional<CorpusWeek> cw;
                    if (cfg_.dispersion.mode == DispersionMode::weighted)
                        cw = corpus(n, w);
                    const auto d = dispersion_groups(list.back(), cfg_.dispersion, cw ? &*cw : nullptr);
                    save_json("dispersion/" + week_key(n, w) + ".json", to_json(d));
                }
            const auto set = unique(net);
            for (const auto& ts : topic_timeseries(set, list)) {
                auto it = a.theme_of.find(ts.unique_id);
                const auto j = to_json(ts, it == a.theme_of.end() ? std::string(kUnassignedTheme) : it->second);
                save_json("timeseries/" + file_safe(ts.unique_id) + ".json", j);
                all.push_back(j);
                every.push_back(ts);
            }
        }
        save_json("timeseries/all.json", all);
        save("timeseries/all.tsv", timeseries_tsv(every));
    }

    void stage_cluster() {
        const auto ws = corpus_weeks();
        for (const auto& net : networks_of(ws)) {
            std::vector<CorpusWeek> list;
            for (const auto& [n, w] : ws)
                if (n == net)
                    list.push_back(corpus(n, w));
            const auto m = normalize(build_activity_matrix(list));
            const auto k_max = std::min(cfg_.cluster_k_max, m.accounts.size());
            const auto k_min = std::min(cfg_.cluster_k_min, k_max);
            const auto e = elbow(m.values, m.accounts, k_min, k_max, cfg_.cluster_seeds);
            const std::size_t k = cfg_.clusters ? std::min(*cfg_.clusters, m.accounts.size()) : e.suggested;
            const auto r = k >= k_min && k <= k_max ? e.fit(k) : kmeans(m.values, m.accounts, k, cfg_.cluster_seeds);
            auto j = to_json(r, m.weeks);
            j["network"] = net;
            j["elbow_suggestion"] = e.suggested;
            j["k_source"] = cfg_.clusters ? "config" : "elbow";
            save_json("clusters/" + net + ".json", j);
            save("clusters/" + net + "_elbow.tsv", elbow_tsv(e));
            save("clusters/" + net + "_assignments.tsv", clusters_tsv(r));
        }
    }

    void stage_graphs() {
        const auto ws = topic_weeks();
        const auto a = themes();
        json index = json::array();
        std::set<int> all_weeks;
        for (const auto& net : networks_of(ws)) {
            const auto set = unique(net);
            const auto cj = load_json("clusters/" + net + ".json");
            const auto clusters = cluster_result_from_json(cj);
            const auto cweeks = cj.at("weeks").get<std::vector<int>>();
            for (const auto& [n, w] : ws) {
                if (n != net)
                    continue;
                all_weeks.insert(w);
                const auto wt = topics(n, w);
                const auto disp = dispersion_from_json(load_json("dispersion/" + week_key(n, w) + ".json"));
                const auto keys = topic_keying(wt, set, cfg_.granularity, &a);
                const auto col = std::find(cweeks.begin(), cweeks.end(), w);
                for (auto sel : {ClusterSelector::all, ClusterSelector::main, ClusterSelector::peak}) {
                    std::optional<int> label;
                    std::optional<std::set<std::string>> accounts;
                    if (sel != ClusterSelector::all) {
                        if (col == cweeks.end() && sel == ClusterSelector::peak)
                            accounts = std::set<std::string>{};
                        else
                            accounts = select_accounts(clusters, sel, static_cast<std::size_t>(col - cweeks.begin()), &label);
                    }
                    const auto g = build_graph(wt, disp, keys, accounts, sel, label);
                    const auto rel = "graphs/" + week_key(n, w) + "_" + to_string(sel) + ".json";
                    save(rel, serialize_graph(g));
                    index.push_back({{"network", n}, {"week", w}, {"cluster", to_string(sel)}, {"path", rel}});
                }
            }
        }
        json topics_by_net = json::object();
        for (const auto& net : networks_of(ws)) {
            json ids = json::array();
            for (const auto& u : unique(net).base)
                ids.push_back(u.id);
            topics_by_net[net] = ids;
        }
        json meta = {{"format_version", kFormatVersion},
                     {"version", kPipelineVersion},
                     {"run_id", cfg_.run_id()},
                     {"weeks", all_weeks},
                     {"networks", networks_of(ws)},
                     {"clusters", {"all", "main", "peak"}},
                     {"granularity", to_string(cfg_.granularity)},
                     {"themes", a.themes},
                     {"unique_topics", topics_by_net},
                     {"graphs", index}};
        save("meta.json", meta.dump(1) + "\n");
    }

    void stage_report() {
        const auto ws = topic_weeks();
        const auto a = themes();
        std::ostringstream tsv;
        tsv << "# " << kPipelineVersion << '\n'
            << "network\tweek\ttheme\taccounts\tuser_ratio\ttexts\tpost_ratio\n";
        json bars = json::object();
        for (const auto& net : networks_of(ws)) {
            const auto set = unique(net);
            std::map<std::string, json> series;
            for (const auto& [n, w] : ws) {
                if (n != net)
                    continue;
                const auto wt = topics(n, w);
                const auto disp = dispersion_from_json(load_json("dispersion/" + week_key(n, w) + ".json"));
                const auto g = build_graph(wt, disp, topic_keying(wt, set, Granularity::theme, &a));
                json rows = json::array();
                for (const auto& t : g.topic_nodes) {
                    rows.push_back({{"theme", t.id},
                                    {"accounts", t.accounts},
                                    {"user_ratio", t.size},
                                    {"texts", t.texts},
                                    {"post_ratio", t.post_ratio}});
                    tsv << n << '\t' << w << '\t' << t.id << '\t' << t.accounts << '\t' << format_fixed(t.size) << '\t'
                        << t.texts << '\t' << format_fixed(t.post_ratio) << '\n';
                    auto& s = series[t.id];
                    if (s.is_null())
                        s = json::array();
                    s.push_back({{"week", w}, {"user_ratio", t.size}, {"post_ratio", t.post_ratio}});
                }
                json groups = json::array();
                for (const auto& gn : g.group_nodes)
                    groups.push_back({{"n", gn.n}, {"accounts", gn.accounts}, {"ratio", gn.size}});
                save("report/" + week_key(n, w) + ".json",
                     canonical_json({{"week", w},
                                     {"network", n},
                                     {"week_accounts", g.week_accounts},
                                     {"week_texts", g.week_texts},
                                     {"themes", rows},
                                     {"dispersion_groups", groups},
                                     {"version", kPipelineVersion}}));
            }
            json s = json::object();
            for (auto& [theme, pts] : series)
                s[theme] = pts;
            bars[net] = s;
        }
        save("report/report.tsv", tsv.str());
        save("report/bars.json", canonical_json(bars));
    }
};

inline const char* to_string(StageStatus s) { return s == StageStatus::ran ? "ran" : "up to date"; }

} // namespace topicdyn
