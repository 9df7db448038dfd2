#pragma once
// Text formats: TSV qrels, runs and labeled pairs; JSON posteriors, synthetic
// specs and metric reports; CSV coefficient tables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "uec/convolution.hpp"
#include "uec/error.hpp"
#include "uec/laplace.hpp"
#include "uec/metrics.hpp"
#include "uec/pipeline.hpp"
#include "uec/retrieval.hpp"
#include "uec/store_io.hpp"
#include "uec/synth.hpp"

namespace uec {

using Json = nlohmann::json;

namespace detail {

// Splits on tabs when the line has any, otherwise on runs of spaces.
inline std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    if (line.find('\t') != std::string_view::npos) {
        std::size_t start = 0;
        for (;;) {
            const auto pos = line.find('\t', start);
            out.emplace_back(line.substr(start, pos - start));
            if (pos == std::string_view::npos) break;
            start = pos + 1;
        }
        return out;
    }
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && line[i] == ' ') ++i;
        const std::size_t j = line.find(' ', i);
        if (i < line.size()) out.emplace_back(line.substr(i, j == std::string_view::npos ? line.size() - i : j - i));
        i = j == std::string_view::npos ? line.size() : j;
    }
    return out;
}

// Reads lines, stripping a trailing CR; blank lines and '#' comments are
// skipped. `fn(fields, line_number)` sees the rest.
template <class Fn>
void for_each_record(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        fn(split_fields(line), lineno);
    }
}

inline long long parse_int(const std::string& s, std::size_t line, const char* what) {
    try {
        std::size_t used = 0;
        const long long v = std::stoll(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("invalid ") + what + " '" + s + "'");
    }
}

inline double parse_double(const std::string& s, std::size_t line, const char* what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, std::string("invalid ") + what + " '" + s + "'");
    }
}

inline std::ifstream open_text(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    return in;
}

}  // namespace detail

// Text that parses back to the same double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// ---- qrels: query_id, doc_id, grade (a 4-column TREC line "q 0 d g" is also accepted)

inline Qrels parse_qrels(std::istream& in) {
    Qrels qrels;
    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 3 && f.size() != 4)
            throw ParseError(line, "expected 3 fields (query_id, doc_id, grade), got " + std::to_string(f.size()));
        const auto& qid = f[0];
        const auto& did = f.size() == 3 ? f[1] : f[2];
        const auto grade = detail::parse_int(f.back(), line, "grade");
        if (qid.empty() || did.empty()) throw ParseError(line, "empty id");
        if (grade < 0) throw ParseError(line, "negative grade");
        if (!qrels[qid].emplace(did, static_cast<int>(grade)).second)
            throw DuplicateJudgmentError(line, "duplicate judgment for (" + qid + ", " + did + ")");
    });
    return qrels;
}

inline Qrels read_qrels(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return parse_qrels(in);
}

inline std::string format_qrels(const Qrels& qrels) {
    std::string out;
    for (const auto& [qid, docs] : qrels)
        for (const auto& [did, grade] : docs) out += qid + '\t' + did + '\t' + std::to_string(grade) + '\n';
    return out;
}

inline void write_qrels(const Qrels& qrels, const std::filesystem::path& path) {
    write_file_atomic(path, format_qrels(qrels));
}

// ---- runs: query_id, doc_id, rank (1-based), score

inline std::string format_run(const RunRanking& run) {
    std::string out;
    for (const auto& q : run)
        for (std::size_t r = 0; r < q.hits.size(); ++r)
            out += q.query_id + '\t' + q.hits[r].doc_id + '\t' + std::to_string(r + 1) + '\t' +
                   format_double(q.hits[r].score) + '\n';
    return out;
}

inline void write_run(const RunRanking& run, const std::filesystem::path& path) {
    write_file_atomic(path, format_run(run));
}

// Queries keep their first-appearance order; hits are ordered by rank and
// the confidence is the rank-1 score.
inline RunRanking parse_run(std::istream& in) {
    RunRanking run;
    std::map<std::string, std::size_t> slot;
    std::vector<std::map<long long, Hit>> ranked;
    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 4) throw ParseError(line, "expected 4 fields (query_id, doc_id, rank, score), got " + std::to_string(f.size()));
        const auto rank = detail::parse_int(f[2], line, "rank");
        if (rank < 1) throw ParseError(line, "rank must be >= 1");
        const double score = detail::parse_double(f[3], line, "score");
        auto [it, fresh] = slot.emplace(f[0], run.size());
        if (fresh) {
            run.push_back(QueryResult{f[0], {}, 0.0});
            ranked.emplace_back();
        }
        if (!ranked[it->second].emplace(rank, Hit{f[1], score}).second)
            throw ParseError(line, "duplicate rank " + f[2] + " for query '" + f[0] + "'");
    });
    for (std::size_t i = 0; i < run.size(); ++i) {
        for (auto& [rank, hit] : ranked[i]) run[i].hits.push_back(std::move(hit));
        run[i].confidence = run[i].hits.front().score;
    }
    return run;
}

inline RunRanking read_run(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return parse_run(in);
}

// ---- labeled pairs: query_id, doc_id, label in {0, 1}

inline std::vector<PairLabel> parse_pairs(std::istream& in) {
    std::vector<PairLabel> out;
    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 3) throw ParseError(line, "expected 3 fields (query_id, doc_id, label), got " + std::to_string(f.size()));
        const auto label = detail::parse_int(f[2], line, "label");
        if (label != 0 && label != 1) throw ParseError(line, "label must be 0 or 1");
        out.push_back({f[0], f[1], static_cast<int>(label)});
    });
    return out;
}

inline std::vector<PairLabel> read_pairs(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    return parse_pairs(in);
}

inline std::string format_pairs(const std::vector<PairLabel>& pairs) {
    std::string out;
    for (const auto& p : pairs) out += p.query_id + '\t' + p.doc_id + '\t' + std::to_string(p.label) + '\n';
    return out;
}

// ---- id -> label (classification) and scored STS pairs

inline std::map<std::string, std::string> read_labels(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    std::map<std::string, std::string> out;
    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 2) throw ParseError(line, "expected 2 fields (id, label)");
        if (!out.emplace(f[0], f[1]).second) throw ParseError(line, "duplicate id '" + f[0] + "'");
    });
    return out;
}

struct ScoredPair {
    std::string id;
    double predicted = 0.0;
    double gold = 0.0;
};

inline std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    std::vector<ScoredPair> out;
    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
        if (f.size() != 3) throw ParseError(line, "expected 3 fields (pair_id, predicted, gold)");
        out.push_back({f[0], detail::parse_double(f[1], line, "predicted score"), detail::parse_double(f[2], line, "gold score")});
    });
    return out;
}

// ---- posterior JSON

inline Json posterior_to_json(const LaplacePosterior& p) {
    return Json{{"model_name", p.model_name}, {"dim", p.dim()},          {"lambda", p.prior_precision},
                {"map_weights", p.map_weights}, {"post_var", p.post_var}, {"n_examples", p.n_examples}};
}

inline LaplacePosterior posterior_from_json(const Json& j) {
    try {
        LaplacePosterior p;
        p.model_name = j.at("model_name").get<std::string>();
        p.prior_precision = j.at("lambda").get<double>();
        p.map_weights = j.at("map_weights").get<Vector>();
        p.post_var = j.at("post_var").get<Vector>();
        p.n_examples = j.at("n_examples").get<std::size_t>();
        const auto dim = j.at("dim").get<std::size_t>();
        if (p.map_weights.size() != dim || p.post_var.size() != dim)
            throw FormatError("posterior vectors do not match dim " + std::to_string(dim));
        if (!(p.prior_precision > 0.0)) throw FormatError("posterior lambda must be positive");
        for (double v : p.post_var)
            if (!(v > 0.0) || !std::isfinite(v)) throw FormatError("posterior variances must be positive and finite");
        return p;
    } catch (const Json::exception& e) {
        throw FormatError(std::string("malformed posterior document: ") + e.what());
    }
}

inline void write_posterior(const LaplacePosterior& p, const std::filesystem::path& path) {
    write_file_atomic(path, posterior_to_json(p).dump(2) + "\n");
}

inline Json read_json(const std::filesystem::path& path) {
    auto in = detail::open_text(path);
    try {
        return Json::parse(in);
    } catch (const Json::exception& e) {
        throw FormatError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

inline LaplacePosterior read_posterior(const std::filesystem::path& path) { return posterior_from_json(read_json(path)); }

// ---- synthetic spec JSON (missing keys keep their defaults)

inline Json synth_spec_to_json(const SynthSpec& s) {
    return Json{{"n_models", s.n_models},
                {"n_domains", s.n_domains},
                {"queries_per_domain", s.queries_per_domain},
                {"docs_per_query", s.docs_per_query},
                {"dim", s.dim},
                {"specialist_noise", s.specialist_noise},
                {"offdomain_noise", s.offdomain_noise},
                {"difficulty_spread", s.difficulty_spread},
                {"distractor_similarity", s.distractor_similarity},
                {"seed", s.seed}};
}

inline SynthSpec synth_spec_from_json(const Json& j) {
    static const char* known[] = {"n_models",         "n_domains",       "queries_per_domain", "docs_per_query",
                                  "dim",              "specialist_noise", "offdomain_noise",    "difficulty_spread",
                                  "distractor_similarity", "seed"};
    if (!j.is_object()) throw FormatError("synthetic spec must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw FormatError("unknown synthetic spec key '" + key + "'");
    }
    SynthSpec s;
    try {
        s.n_models = j.value("n_models", s.n_models);
        s.n_domains = j.value("n_domains", s.n_domains);
        s.queries_per_domain = j.value("queries_per_domain", s.queries_per_domain);
        s.docs_per_query = j.value("docs_per_query", s.docs_per_query);
        s.dim = j.value("dim", s.dim);
        s.specialist_noise = j.value("specialist_noise", s.specialist_noise);
        s.offdomain_noise = j.value("offdomain_noise", s.offdomain_noise);
        s.difficulty_spread = j.value("difficulty_spread", s.difficulty_spread);
        s.distractor_similarity = j.value("distractor_similarity", s.distractor_similarity);
        s.seed = j.value("seed", s.seed);
    } catch (const Json::exception& e) {
        throw FormatError(std::string("malformed synthetic spec: ") + e.what());
    }
    s.validate();
    return s;
}

// ---- configs and reports

inline Json coefficient_config_to_json(const CoefficientConfig& c) {
    Json j{{"mode", std::string(to_string(c.mode))}, {"temperature", c.temperature}};
    if (c.fixed_weights) j["weights"] = *c.fixed_weights;
    return j;
}

inline Json similarity_config_to_json(const SimilarityConfig& c) {
    return Json{{"similarity", std::string(to_string(c.mode))},
                {"beta", c.beta},
                {"normalize_inputs", c.normalize_inputs},
                {"include_trace_term", c.include_trace_term}};
}

inline Json pipeline_config_to_json(const PipelineConfig& c) {
    return Json{{"coefficients", coefficient_config_to_json(c.coefficients)},
                {"similarity", similarity_config_to_json(c.similarity)},
                {"k", c.k}};
}

inline Json report_to_json(const MetricReport& r) {
    Json j = Json::object();
    for (const auto& [name, value] : r) j[name] = value;
    return j;
}

// ---- CSV coefficient tables

// record_id, pi_1..pi_K per line, with a header naming the models.
inline std::string format_coefficient_rows(const std::vector<std::string>& model_names, const ConvolvedStore& convolved) {
    std::string out = "record_id";
    for (const auto& m : model_names) out += ',' + m;
    out += '\n';
    for (std::size_t i = 0; i < convolved.store.size(); ++i) {
        out += convolved.store[i].id;
        for (double p : convolved.coefficients[i].pi) out += ',' + format_double(p);
        out += '\n';
    }
    return out;
}

inline std::string format_profile(const CoefficientProfile& p) {
    std::string out = "domain";
    for (const auto& m : p.models) out += ',' + m;
    out += '\n';
    for (std::size_t r = 0; r < p.domains.size(); ++r) {
        out += p.domains[r];
        for (double v : p.mean_pi[r]) out += ',' + format_double(v);
        out += '\n';
    }
    return out;
}

}  // namespace uec
