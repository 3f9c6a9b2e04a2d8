#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "coherence.hpp"
#include "error.hpp"
#include "format.hpp"
#include "lda.hpp"
#include "text.hpp"

namespace topicdyn {

struct SweepKey {
    int week = 0;
    std::string network;
    int k = 0;
    int interval = 0;
    std::uint64_t seed = 0;

    auto operator<=>(const SweepKey&) const = default;
};

struct SweepRecord {
    SweepKey key;
    std::optional<double> coherence; ///< mean C_v; empty when the fit failed
    double runtime_s = 0;
    std::string status = "ok"; ///< ok | failed
    std::string model_ref;
    std::string message;

    bool ok() const { return status == "ok" && coherence.has_value(); }
};

namespace detail {
inline std::string tsv_clean(std::string s) {
    for (auto& c : s)
        if (c == '\t' || c == '\n' || c == '\r')
            c = ' ';
    return s;
}
} // namespace detail

inline const char* sweep_tsv_header() {
    return "week\tnetwork\tk\toptimize_interval\tseed\tcoherence\truntime_s\tstatus\tmodel_ref\tmessage\n";
}

/// One TSV line. Runtime is written with millisecond resolution.
inline std::string to_tsv(const SweepRecord& r) {
    std::ostringstream o;
    o << r.key.week << '\t' << detail::tsv_clean(r.key.network) << '\t' << r.key.k << '\t' << r.key.interval << '\t'
      << r.key.seed << '\t' << (r.coherence ? format_fixed(*r.coherence, 9) : "NA") << '\t'
      << format_fixed(r.runtime_s, 3) << '\t' << r.status << '\t' << detail::tsv_clean(r.model_ref) << '\t'
      << detail::tsv_clean(r.message) << '\n';
    return o.str();
}

inline SweepRecord sweep_record_from_tsv(const std::string& line) {
    auto f = text::split(line, '\t');
    if (f.size() != 10)
        throw DataError("malformed sweep line: expected 10 fields, got " + std::to_string(f.size()));
    try {
        SweepRecord r;
        r.key.week = std::stoi(f[0]);
        r.key.network = f[1];
        r.key.k = std::stoi(f[2]);
        r.key.interval = std::stoi(f[3]);
        r.key.seed = std::stoull(f[4]);
        if (f[5] != "NA")
            r.coherence = std::stod(f[5]);
        r.runtime_s = std::stod(f[6]);
        r.status = f[7];
        r.model_ref = f[8];
        r.message = f[9];
        return r;
    } catch (const std::logic_error&) {
        throw DataError("malformed sweep line: " + line);
    }
}

/// Reads a sweep file, ignoring a trailing partial line from an interrupted
/// writer. Later duplicates of a key replace earlier ones.
inline std::vector<SweepRecord> read_sweep(const std::filesystem::path& path) {
    std::vector<SweepRecord> out;
    std::ifstream in(path, std::ios::binary);
    if (!in)
        return out;
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string data = buf.str();
    std::map<SweepKey, std::size_t> index;
    std::size_t start = 0;
    bool header = true;
    while (true) {
        const auto nl = data.find('\n', start);
        if (nl == std::string::npos)
            break;
        std::string line = data.substr(start, nl - start);
        start = nl + 1;
        if (header) {
            header = false;
            if (line.rfind("week\t", 0) == 0)
                continue;
        }
        if (line.empty())
            continue;
        auto r = sweep_record_from_tsv(line);
        auto [it, fresh] = index.emplace(r.key, out.size());
        if (fresh)
            out.push_back(std::move(r));
        else
            out[it->second] = std::move(r);
    }
    return out;
}

/// Canonical text of a result set, sorted by key and without runtimes.
inline std::string serialize_results(std::vector<SweepRecord> records) {
    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
    std::string out;
    for (auto r : records) {
        r.runtime_s = 0;
        out += to_tsv(r);
    }
    return out;
}

struct SweepSpec {
    int week = 0;
    std::string network;
    std::vector<int> ks;
    std::vector<int> intervals;
    std::vector<std::uint64_t> seeds;
    LdaConfig base;
    CoherenceConfig coherence;

    void validate() const {
        if (ks.empty() || intervals.empty() || seeds.empty())
            throw InvalidArgument("sweep needs non-empty k, interval and seed lists");
        for (int k : ks)
            if (k < 2)
                throw InvalidArgument("sweep k values must be >= 2");
        for (int i : intervals)
            if (i < 0)
                throw InvalidArgument("optimize_interval values must be >= 0");
        coherence.validate();
    }

    std::vector<SweepKey> keys() const {
        std::vector<SweepKey> out;
        for (int k : ks)
            for (int i : intervals)
                for (auto s : seeds)
                    out.push_back({week, network, k, i, s});
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

inline std::vector<int> k_range(int lo, int hi) {
    if (lo > hi)
        throw InvalidArgument("empty k range");
    std::vector<int> ks;
    for (int k = lo; k <= hi; ++k)
        ks.push_back(k);
    return ks;
}

struct SweepOptions {
    /// Append-only results file; combinations already recorded there are skipped.
    std::optional<std::filesystem::path> results_file;
    /// When set, every fitted model is written here as JSON.
    std::optional<std::filesystem::path> model_dir;
    unsigned threads = 1;
    /// Polled before each new fit; returning true stops the sweep early.
    std::function<bool()> cancelled;
};

inline std::string model_file_name(const SweepKey& key) {
    return "w" + std::to_string(key.week) + "-" + key.network + "-k" + std::to_string(key.k) + "-i" +
           std::to_string(key.interval) + "-s" + std::to_string(key.seed) + ".json";
}

/// Fits and scores one (k, interval, seed) combination. Failures are recorded.
inline SweepRecord run_combination(const LdaCorpus& corpus, const SweepSpec& spec, const SweepKey& key,
                                   const std::optional<std::filesystem::path>& model_dir = std::nullopt) {
    SweepRecord r;
    r.key = key;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        LdaConfig cfg = spec.base;
        cfg.k = key.k;
        cfg.optimize_interval = key.interval;
        cfg.seed = key.seed;
        const auto model = fit(corpus, cfg);
        const auto rep = cv_coherence(model, spec.coherence);
        if (!rep.mean)
            throw DataError("no topic had enough supported words for coherence");
        r.coherence = *rep.mean;
        if (model_dir) {
            std::filesystem::create_directories(*model_dir);
            r.model_ref = model_file_name(key);
            std::ofstream(*model_dir / r.model_ref, std::ios::binary) << canonical_json(to_json(model));
        }
    } catch (const std::exception& e) {
        r.status = "failed";
        r.coherence.reset();
        r.message = e.what();
    }
    r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Runs every combination not yet in the results file. Returns the full
/// result set (previous plus new) for this spec, sorted by key.
inline std::vector<SweepRecord> sweep(const LdaCorpus& corpus, const SweepSpec& spec, const SweepOptions& opt = {}) {
    spec.validate();
    const auto keys = spec.keys();
    std::map<SweepKey, SweepRecord> done;
    if (opt.results_file) {
        namespace fs = std::filesystem;
        if (fs::exists(*opt.results_file)) {
            // drop a partial trailing line left by an interrupted run
            const auto data = read_file(*opt.results_file);
            const auto nl = data.rfind('\n');
            const std::size_t keep = nl == std::string::npos ? 0 : nl + 1;
            if (keep != data.size())
                fs::resize_file(*opt.results_file, keep);
        }
        for (auto& r : read_sweep(*opt.results_file))
            done.emplace(r.key, std::move(r));
    }
    std::vector<SweepKey> todo;
    for (const auto& k : keys)
        if (!done.count(k))
            todo.push_back(k);

    std::ofstream out;
    if (opt.results_file) {
        if (opt.results_file->has_parent_path())
            std::filesystem::create_directories(opt.results_file->parent_path());
        const bool fresh = !std::filesystem::exists(*opt.results_file) || std::filesystem::file_size(*opt.results_file) == 0;
        out.open(*opt.results_file, std::ios::binary | std::ios::app);
        if (!out)
            throw Error("cannot open sweep results file " + opt.results_file->string());
        if (fresh)
            out << sweep_tsv_header() << std::flush;
    }

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            if (opt.cancelled) {
                std::lock_guard lock(mu);
                if (opt.cancelled())
                    return;
            }
            const auto i = next.fetch_add(1);
            if (i >= todo.size())
                return;
            auto r = run_combination(corpus, spec, todo[i], opt.model_dir);
            std::lock_guard lock(mu);
            if (out.is_open())
                out << to_tsv(r) << std::flush;
            done.emplace(r.key, std::move(r));
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(todo.size())));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < n; ++t)
            pool.emplace_back(worker);
    }

    std::vector<SweepRecord> result;
    for (const auto& k : keys)
        if (auto it = done.find(k); it != done.end())
            result.push_back(it->second);
    return result;
}

inline std::vector<SweepRecord> sweep(const CorpusWeek& week, SweepSpec spec, const SweepOptions& opt = {}) {
    spec.week = week.week_index;
    spec.network = week.network;
    return sweep(LdaCorpus::from_week(week), spec, opt);
}

// ---------------------------------------------------------------------------
// selection

struct SelectionRule {
    /// Absolute tolerance; when unset, `relative_epsilon` times |global max| is used.
    std::optional<double> epsilon;
    double relative_epsilon = 0.02;
    std::size_t min_shared = 3;
    bool prefer_small_k = true;

    void validate() const {
        if (epsilon && !(*epsilon >= 0))
            throw InvalidArgument("selection epsilon must be >= 0");
        if (!(relative_epsilon >= 0))
            throw InvalidArgument("relative epsilon must be >= 0");
        if (min_shared < 1)
            throw InvalidArgument("min_shared must be >= 1");
    }
};

struct Candidate {
    int k = 0;
    std::vector<int> peak_intervals; ///< intervals for which k is a local maximum
    double best = 0;                 ///< highest per-interval mean at k
    bool shared = false;
    bool near_max = false;
    bool chosen = false;
    std::string reason;
};

struct Selection {
    int k = 0;
    bool fallback = false; ///< no shared peak, global argmax used
    double global_max = 0;
    int global_argmax = 0;
    double epsilon = 0;
    std::size_t min_shared = 0; ///< after clamping to the number of intervals
    std::map<int, std::map<int, double>> curves; ///< interval -> k -> mean over seeds
    std::vector<Candidate> candidates;

    std::string audit() const;
    json to_json() const;
};

/// Mean coherence over seeds per (interval, k), failed fits excluded.
inline std::map<int, std::map<int, double>> coherence_curves(const std::vector<SweepRecord>& records) {
    std::map<int, std::map<int, std::pair<double, int>>> acc;
    for (const auto& r : records) {
        if (!r.ok())
            continue;
        if (!std::isfinite(*r.coherence))
            throw DataError("non-finite coherence in sweep results");
        auto& [s, n] = acc[r.key.interval][r.key.k];
        s += *r.coherence;
        ++n;
    }
    std::map<int, std::map<int, double>> out;
    for (const auto& [i, row] : acc)
        for (const auto& [k, sn] : row)
            out[i][k] = sn.first / sn.second;
    return out;
}

/// k values strictly above their neighbours on the curve's k-grid.
inline std::vector<int> local_maxima(const std::map<int, double>& curve) {
    std::vector<std::pair<int, double>> pts(curve.begin(), curve.end());
    std::vector<int> out;
    if (pts.size() < 2)
        return out;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const bool left = i == 0 || pts[i].second > pts[i - 1].second;
        const bool right = i + 1 == pts.size() || pts[i].second > pts[i + 1].second;
        if (left && right)
            out.push_back(pts[i].first);
    }
    return out;
}

inline Selection select_k(const std::vector<SweepRecord>& records, const SelectionRule& rule = {}) {
    rule.validate();
    Selection sel;
    sel.curves = coherence_curves(records);
    if (sel.curves.empty())
        throw DataError("no successful sweep results to select from");

    bool first = true;
    for (const auto& [i, curve] : sel.curves)
        for (const auto& [k, v] : curve)
            if (first || v > sel.global_max || (v == sel.global_max && k < sel.global_argmax)) {
                sel.global_max = v;
                sel.global_argmax = k;
                first = false;
            }
    sel.epsilon = rule.epsilon ? *rule.epsilon : rule.relative_epsilon * std::abs(sel.global_max);
    sel.min_shared = std::min(rule.min_shared, sel.curves.size());

    std::map<int, Candidate> cand;
    for (const auto& [i, curve] : sel.curves)
        for (int k : local_maxima(curve)) {
            auto& c = cand[k];
            if (c.peak_intervals.empty())
                c.best = curve.at(k);
            c.k = k;
            c.peak_intervals.push_back(i);
            c.best = std::max(c.best, curve.at(k));
        }

    const Candidate* pick = nullptr;
    for (auto& [k, c] : cand) {
        c.shared = c.peak_intervals.size() >= sel.min_shared;
        c.near_max = c.best >= sel.global_max - sel.epsilon;
        if (!c.shared || !c.near_max)
            continue;
        if (!pick || (!rule.prefer_small_k && c.best > pick->best))
            pick = &c;
    }
    if (pick) {
        sel.k = pick->k;
    } else {
        sel.k = sel.global_argmax;
        sel.fallback = true;
    }

    auto fmt = [](double v) { return format_fixed(v, 6); };
    for (auto& [k, c] : cand) {
        c.chosen = k == sel.k && !sel.fallback;
        if (c.chosen)
            c.reason = rule.prefer_small_k ? "smallest shared peak within epsilon of the global maximum"
                                           : "highest shared peak within epsilon of the global maximum";
        else if (!c.shared)
            c.reason = "local maximum for " + std::to_string(c.peak_intervals.size()) + " interval(s), needs " +
                       std::to_string(sel.min_shared);
        else if (!c.near_max)
            c.reason = "coherence " + fmt(c.best) + " below " + fmt(sel.global_max - sel.epsilon);
        else
            c.reason = rule.prefer_small_k ? "a smaller shared peak was chosen" : "a higher shared peak was chosen";
        sel.candidates.push_back(c);
    }
    if (sel.fallback) {
        Candidate g;
        g.k = sel.global_argmax;
        g.best = sel.global_max;
        g.chosen = true;
        g.near_max = true;
        g.reason = "no shared peak; global argmax used";
        if (auto it = cand.find(g.k); it != cand.end()) {
            for (auto& c : sel.candidates)
                if (c.k == g.k) {
                    c.chosen = true;
                    c.reason += "; chosen as global argmax";
                }
        } else {
            sel.candidates.push_back(g);
            std::sort(sel.candidates.begin(), sel.candidates.end(), [](auto& a, auto& b) { return a.k < b.k; });
        }
    }
    return sel;
}

inline std::string Selection::audit() const {
    std::ostringstream o;
    o << "selected k = " << k << (fallback ? " (fallback: global argmax)" : "") << '\n';
    o << "global max " << format_fixed(global_max, 6) << " at k = " << global_argmax << ", epsilon "
      << format_fixed(epsilon, 6) << ", min_shared " << min_shared << " of " << curves.size() << " interval(s)\n";
    for (const auto& c : candidates) {
        o << (c.chosen ? "* " : "  ") << "k = " << c.k << "  best " << format_fixed(c.best, 6) << "  peaks in [";
        for (std::size_t i = 0; i < c.peak_intervals.size(); ++i)
            o << (i ? "," : "") << c.peak_intervals[i];
        o << "]  " << c.reason << '\n';
    }
    return o.str();
}

inline json Selection::to_json() const {
    json j;
    j["k"] = k;
    j["fallback"] = fallback;
    j["global_max"] = global_max;
    j["global_argmax"] = global_argmax;
    j["epsilon"] = epsilon;
    j["min_shared"] = min_shared;
    json cs = json::array();
    for (const auto& c : candidates)
        cs.push_back({{"k", c.k},
                      {"peak_intervals", c.peak_intervals},
                      {"best", c.best},
                      {"shared", c.shared},
                      {"near_max", c.near_max},
                      {"chosen", c.chosen},
                      {"reason", c.reason}});
    j["candidates"] = cs;
    json cv = json::object();
    for (const auto& [i, curve] : curves) {
        json row = json::object();
        for (const auto& [kk, v] : curve)
            row[std::to_string(kk)] = v;
        cv[std::to_string(i)] = row;
    }
    j["curves"] = cv;
    return j;
}

} // namespace topicdyn
