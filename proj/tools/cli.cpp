#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uec/uec.hpp"

namespace uec::cli {
namespace fs = std::filesystem;

namespace {

// Bad flag values detected after parsing; reported like parse errors.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Resolved hyperparameters, echoed as one JSON line on stderr.
void log_config(std::ostream& err, const std::string& command, Json cfg) {
    cfg["command"] = command;
    err << cfg.dump() << '\n';
}

std::vector<double> parse_weight_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw UsageError("invalid weight '" + item + "'");
        }
    }
    return out;
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

// Metric names like "ndcg@10"; a bare name takes `default_k`.
std::pair<std::string, std::size_t> split_metric(const std::string& m, std::size_t default_k) {
    const auto at = m.find('@');
    if (at == std::string::npos) return {m, default_k};
    const std::string k = m.substr(at + 1);
    std::size_t used = 0;
    std::size_t value = 0;
    try {
        value = std::stoul(k, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != k.size() || value == 0) throw UsageError("invalid metric cutoff in '" + m + "'");
    return {m.substr(0, at), value};
}

void print_report(std::ostream& out, const MetricReport& report) {
    std::size_t width = 6;
    for (const auto& [name, v] : report) width = std::max(width, name.size());
    for (const auto& [name, v] : report)
        out << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::fixed << std::setprecision(6) << v
            << '\n';
    out.unsetf(std::ios::floatfield);
}

void write_report(const MetricReport& report, const std::string& path) {
    if (!path.empty()) write_file_atomic(path, report_to_json(report).dump(2) + "\n");
}

EnsembleInput load_ensemble(const std::vector<std::string>& paths) {
    std::vector<EmbeddingStore> stores;
    for (const auto& p : paths) stores.push_back(read_store(p));
    return EnsembleInput(std::move(stores));
}

struct SynthFiles {
    std::vector<std::string> docs, queries;
    std::string qrels;
};

SynthFiles synth_layout(const fs::path& dir, std::size_t n_models) {
    SynthFiles f;
    for (std::size_t k = 0; k < n_models; ++k) {
        f.docs.push_back((dir / ("docs." + synth_model_name(k) + ".uecs")).string());
        f.queries.push_back((dir / ("queries." + synth_model_name(k) + ".uecs")).string());
    }
    f.qrels = (dir / "qrels.tsv").string();
    return f;
}

void write_synth(const SynthData& data, const SynthSpec& spec, const fs::path& dir) {
    fs::create_directories(dir);
    const auto files = synth_layout(dir, spec.n_models);
    for (std::size_t k = 0; k < spec.n_models; ++k) {
        write_store(data.docs.stores()[k], files.docs[k]);
        write_store(data.queries.stores()[k], files.queries[k]);
    }
    write_qrels(data.qrels, files.qrels);
    write_file_atomic(dir / "spec.json", synth_spec_to_json(spec).dump(2) + "\n");
}

SynthData load_synth(const fs::path& dir) {
    const auto spec = synth_spec_from_json(read_json(dir / "spec.json"));
    const auto files = synth_layout(dir, spec.n_models);
    return SynthData{load_ensemble(files.docs), load_ensemble(files.queries), read_qrels(files.qrels)};
}

CoefficientConfig make_coefficient_config(const std::string& mode, double temperature, const std::string& weights) {
    CoefficientConfig cfg;
    cfg.mode = parse_coefficient_mode(mode);
    cfg.temperature = temperature;
    if (!weights.empty()) cfg.fixed_weights = parse_weight_list(weights);
    if (cfg.mode != CoefficientMode::fixed && cfg.fixed_weights)
        throw UsageError("--weights only applies to --mode fixed");
    try {
        cfg.validate();
    } catch (const InvalidArgumentError& e) {
        throw UsageError(e.what());
    }
    return cfg;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Uncertainty-driven embedding convolution: probabilize, fuse, search and evaluate embeddings", "uec"};
    app.require_subcommand(1, 1);
    std::function<void()> action;

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a diagonal last-layer Laplace posterior from labeled pairs");
    std::string fit_pairs, fit_store, fit_out;
    LaplaceFitConfig fit_cfg;
    fit->add_option("--pairs", fit_pairs, "TSV of query_id, doc_id, label")->required()->check(CLI::ExistingFile);
    fit->add_option("--store", fit_store, "UECS store holding the paired embeddings")->required()->check(CLI::ExistingFile);
    fit->add_option("--prior-precision", fit_cfg.prior_precision, "Gaussian prior precision lambda")
        ->capture_default_str()->check(CLI::PositiveNumber);
    fit->add_option("--max-iterations", fit_cfg.max_iterations, "Newton iteration cap")->capture_default_str();
    fit->add_option("--tolerance", fit_cfg.gradient_tolerance, "gradient inf-norm tolerance")->capture_default_str();
    fit->add_option("--out", fit_out, "posterior JSON path")->required();
    fit->callback([&] {
        action = [&] {
            log_config(err, "fit", {{"lambda", fit_cfg.prior_precision}, {"max_iterations", fit_cfg.max_iterations},
                                    {"gradient_tolerance", fit_cfg.gradient_tolerance}});
            const auto store = read_store(fit_store);
            const auto examples = pair_examples(store, read_pairs(fit_pairs));
            const auto post = fit_laplace(examples, fit_cfg, store.dim(), store.model_name());
            write_posterior(post, fit_out);
            out << "fit " << post.n_examples << " pairs, dim " << post.dim() << " -> " << fit_out << '\n';
        };
    });

    // probabilize
    auto* prob = app.add_subcommand("probabilize", "Lift a deterministic store to Gaussian embeddings");
    std::string prob_store, prob_post, prob_out;
    prob->add_option("--store", prob_store, "deterministic UECS store")->required()->check(CLI::ExistingFile);
    prob->add_option("--posterior", prob_post, "posterior JSON from `fit`")->required()->check(CLI::ExistingFile);
    prob->add_option("--out", prob_out, "output UECS store")->required();
    prob->callback([&] {
        action = [&] {
            const auto post = read_posterior(prob_post);
            log_config(err, "probabilize", {{"lambda", post.prior_precision}, {"posterior_model", post.model_name}});
            const auto lifted = probabilize(read_store(prob_store), post);
            write_store(lifted, prob_out);
            out << "probabilized " << lifted.size() << " records -> " << prob_out << '\n';
        };
    });

    // convolve
    auto* conv = app.add_subcommand("convolve", "Fuse K aligned stores by Gaussian convolution");
    std::vector<std::string> conv_stores;
    std::string conv_mode = "bayes", conv_weights, conv_out, conv_coeffs, conv_name = "ensemble";
    double conv_temp = 1.5;
    conv->add_option("stores", conv_stores, "input UECS stores (one per model)")->required()->check(CLI::ExistingFile);
    conv->add_option("--mode", conv_mode, "coefficient mode")
        ->check(CLI::IsMember({"bayes", "full", "uniform", "fixed"}))->capture_default_str();
    conv->add_option("--weights", conv_weights, "comma-separated simplex weights for --mode fixed");
    conv->add_option("--temperature", conv_temp, "coefficient temperature tau")->capture_default_str();
    conv->add_option("--name", conv_name, "model name of the output store")->capture_default_str();
    conv->add_option("--coefficients", conv_coeffs, "also write per-record coefficients as CSV");
    conv->add_option("--out", conv_out, "output UECS store")->required();
    conv->callback([&] {
        action = [&] {
            const auto cfg = make_coefficient_config(conv_mode, conv_temp, conv_weights);
            log_config(err, "convolve", coefficient_config_to_json(cfg));
            const auto input = load_ensemble(conv_stores);
            const auto result = convolve_ensemble(input, cfg, conv_name);
            write_store(result.store, conv_out);
            if (!conv_coeffs.empty()) {
                std::vector<std::string> names;
                for (const auto& s : input.stores()) names.push_back(s.model_name());
                write_file_atomic(conv_coeffs, format_coefficient_rows(names, result));
            }
            out << "convolved " << input.n_models() << " models x " << input.n_records() << " records -> " << conv_out
                << '\n';
        };
    });

    // search
    auto* search = app.add_subcommand("search", "Exact top-k retrieval");
    std::string search_index, search_queries, search_run, search_sim = "probit";
    std::size_t search_k = 10;
    double search_beta = 0.01;
    bool search_raw = false;
    unsigned search_workers = default_workers();
    search->add_option("--index", search_index, "document UECS store")->required()->check(CLI::ExistingFile);
    search->add_option("--queries", search_queries, "query UECS store")->required()->check(CLI::ExistingFile);
    search->add_option("--k", search_k, "hits per query")->capture_default_str()->check(CLI::PositiveNumber);
    search->add_option("--beta", search_beta, "variance influence scale")->capture_default_str()->check(CLI::NonNegativeNumber);
    search->add_option("--similarity", search_sim, "similarity")->check(CLI::IsMember({"probit", "dot"}))->capture_default_str();
    search->add_flag("--no-normalize", search_raw, "score raw (unnormalized) embeddings");
    search->add_option("--workers", search_workers, "parallel query workers")->capture_default_str()->check(CLI::PositiveNumber);
    search->add_option("--run", search_run, "output run TSV")->required();
    search->callback([&] {
        action = [&] {
            SimilarityConfig sim{search_beta, parse_similarity_mode(search_sim), !search_raw, true};
            auto logged = similarity_config_to_json(sim);
            logged["k"] = search_k;
            logged["workers"] = search_workers;
            log_config(err, "search", logged);
            const auto index = build_index(read_store(search_index), sim);
            const auto run = search_all(index, read_store(search_queries), search_k, search_workers);
            write_run(run, search_run);
            out << "searched " << run.size() << " queries over " << index.size() << " documents -> " << search_run << '\n';
        };
    });

    // eval
    auto* eval = app.add_subcommand("eval", "Score a run, STS predictions or a classification probe");
    std::string eval_task = "retrieval", eval_run, eval_qrels, eval_metrics, eval_report;
    std::string eval_scores, eval_store, eval_pairs, eval_train, eval_test, eval_labels, eval_sim = "probit";
    double eval_beta = 0.01, eval_probe_lambda = ProbeConfig{}.prior_precision;
    eval->add_option("--task", eval_task, "task")->check(CLI::IsMember({"retrieval", "sts", "classification"}))->capture_default_str();
    eval->add_option("--run", eval_run, "run TSV (retrieval)")->check(CLI::ExistingFile);
    eval->add_option("--qrels", eval_qrels, "qrels TSV (retrieval)")->check(CLI::ExistingFile);
    eval->add_option("--metrics", eval_metrics, "comma-separated metrics; default per task");
    eval->add_option("--scores", eval_scores, "TSV of pair_id, predicted, gold (sts)")->check(CLI::ExistingFile);
    eval->add_option("--store", eval_store, "UECS store to score pairs from (sts)")->check(CLI::ExistingFile);
    eval->add_option("--pairs", eval_pairs, "TSV of id_a, id_b, gold (sts with --store)")->check(CLI::ExistingFile);
    eval->add_option("--beta", eval_beta, "variance influence scale (sts with --store)")->capture_default_str();
    eval->add_option("--similarity", eval_sim, "similarity (sts with --store)")->check(CLI::IsMember({"probit", "dot"}))->capture_default_str();
    eval->add_option("--train", eval_train, "training UECS store (classification)")->check(CLI::ExistingFile);
    eval->add_option("--test", eval_test, "test UECS store (classification)")->check(CLI::ExistingFile);
    eval->add_option("--labels", eval_labels, "TSV of id, label (classification)")->check(CLI::ExistingFile);
    eval->add_option("--probe-prior-precision", eval_probe_lambda, "probe L2 precision")->capture_default_str();
    eval->add_option("--report", eval_report, "also write the report as JSON");
    eval->callback([&] {
        action = [&] {
            MetricReport report;
            if (eval_task == "retrieval") {
                if (eval_run.empty() || eval_qrels.empty()) throw CLI::RequiredError("--run and --qrels");
                const auto metrics = split_list(eval_metrics.empty() ? "ndcg@10,recall@10,nauc@10" : eval_metrics);
                log_config(err, "eval", {{"task", eval_task}, {"metrics", metrics}});
                const auto run = read_run(eval_run);
                const auto qrels = read_qrels(eval_qrels);
                std::size_t skipped = 0;
                for (const auto& m : metrics) {
                    const auto [name, k] = split_metric(m, 10);
                    if (name == "ndcg") {
                        const auto v = ndcg_at_k(run, qrels, k);
                        skipped = v.skipped;
                        report[m] = v.value;
                    } else if (name == "recall") {
                        report[m] = recall_at_k(run, qrels, k).value;
                    } else if (name == "nauc") {
                        report[m] = nauc_abstention(per_query_ndcg(run, qrels, k));
                    } else {
                        throw UsageError("unknown retrieval metric '" + m + "'");
                    }
                }
                if (skipped) err << "warning: " << skipped << " run queries have no relevance judgments\n";
            } else if (eval_task == "sts") {
                Vector pred, gold;
                if (!eval_scores.empty()) {
                    log_config(err, "eval", {{"task", eval_task}, {"metrics", {"spearman"}}});
                    for (const auto& p : read_scored_pairs(eval_scores)) {
                        pred.push_back(p.predicted);
                        gold.push_back(p.gold);
                    }
                } else {
                    if (eval_store.empty() || eval_pairs.empty()) throw CLI::RequiredError("--scores or --store with --pairs");
                    const SimilarityConfig sim{eval_beta, parse_similarity_mode(eval_sim), true, true};
                    auto logged = similarity_config_to_json(sim);
                    logged["task"] = eval_task;
                    log_config(err, "eval", logged);
                    const auto store = read_store(eval_store);
                    std::ifstream in(eval_pairs);
                    detail::for_each_record(in, [&](const std::vector<std::string>& f, std::size_t line) {
                        if (f.size() != 3) throw ParseError(line, "expected 3 fields (id_a, id_b, gold)");
                        pred.push_back(score_pair(store.at(f[0]).embedding, store.at(f[1]).embedding, sim));
                        gold.push_back(detail::parse_double(f[2], line, "gold score"));
                    });
                }
                report["spearman"] = spearman(pred, gold);
            } else {
                if (eval_train.empty() || eval_test.empty() || eval_labels.empty())
                    throw CLI::RequiredError("--train, --test and --labels");
                log_config(err, "eval", {{"task", eval_task}, {"probe_prior_precision", eval_probe_lambda}});
                const auto labels = read_labels(eval_labels);
                const auto collect = [&](const EmbeddingStore& s, std::vector<Vector>& x, std::vector<std::string>& y) {
                    for (const auto& r : s.records()) {
                        auto it = labels.find(r.id);
                        if (it == labels.end()) throw InvalidArgumentError("no label for record '" + r.id + "'");
                        x.emplace_back(r.embedding.mean().begin(), r.embedding.mean().end());
                        y.push_back(it->second);
                    }
                };
                std::vector<Vector> xtr, xte;
                std::vector<std::string> ytr, yte;
                collect(read_store(eval_train), xtr, ytr);
                collect(read_store(eval_test), xte, yte);
                ProbeConfig pc;
                pc.prior_precision = eval_probe_lambda;
                const auto s = classify_probe(xtr, ytr, xte, yte, pc);
                report["accuracy"] = s.accuracy;
                report["f1"] = s.macro_f1;
            }
            print_report(out, report);
            write_report(report, eval_report);
        };
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Generate the synthetic specialist corpus");
    std::string synth_spec_path, synth_out;
    std::optional<std::uint64_t> synth_seed;
    synth->add_option("--seed", synth_seed, "RNG seed (overrides the spec file)");
    synth->add_option("--spec", synth_spec_path, "JSON spec; missing keys take defaults")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->callback([&] {
        action = [&] {
            SynthSpec spec = synth_spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_json(synth_spec_path));
            if (synth_seed) spec.seed = *synth_seed;
            spec.validate();
            log_config(err, "synth", synth_spec_to_json(spec));
            write_synth(synth_generate(spec), spec, synth_out);
            out << "wrote synthetic corpus (" << spec.n_models << " models, " << spec.n_domains << " domains) -> "
                << synth_out << '\n';
        };
    });

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the uncertainty ablation grid on a synthetic corpus");
    std::string ablate_data, ablate_out;
    PipelineConfig ablate_cfg;
    bool ablate_baselines = false;
    ablate->add_option("--data", ablate_data, "directory written by `synth`")->required()->check(CLI::ExistingDirectory);
    ablate->add_option("--temperature", ablate_cfg.coefficients.temperature, "coefficient temperature tau")->capture_default_str();
    ablate->add_option("--beta", ablate_cfg.similarity.beta, "variance influence scale")->capture_default_str();
    ablate->add_option("--k", ablate_cfg.k, "metric cutoff")->capture_default_str()->check(CLI::PositiveNumber);
    ablate->add_option("--workers", ablate_cfg.workers, "parallel query workers")->capture_default_str();
    ablate->add_flag("--baselines", ablate_baselines, "also report weighted-ensemble and task-arithmetic baselines");
    ablate->add_option("--out", ablate_out, "report JSON path")->required();
    ablate->callback([&] {
        action = [&] {
            log_config(err, "ablate", pipeline_config_to_json(ablate_cfg));
            const auto data = load_synth(ablate_data);
            auto report = ablation_report(data, ablate_cfg);
            if (ablate_baselines) {
                const auto w = weighted_ensemble_baseline(data, ablate_cfg);
                add_metrics(report, "weighted.", w.metrics, ablate_cfg.k);
                if (data.docs.n_models() >= 3) {
                    RetrievalMetrics best;
                    best.ndcg = -1.0;
                    for (double alpha : kTaskArithmeticAlphas) {
                        const auto d = task_arithmetic_store(data.docs, 0, 1, 2, alpha);
                        const auto q = task_arithmetic_store(data.queries, 0, 1, 2, alpha);
                        auto m = evaluate_retrieval(search_convolved(d, q, uniform_ensemble_config(ablate_cfg)),
                                                    data.qrels, ablate_cfg.k);
                        if (m.ndcg > best.ndcg) best = m;
                    }
                    add_metrics(report, "task_arithmetic.", best, ablate_cfg.k);
                }
            }
            print_report(out, report);
            write_file_atomic(ablate_out, report_to_json(report).dump(2) + "\n");
        };
    });

    // profile
    auto* profile = app.add_subcommand("profile", "Per-domain mean coefficients of a query ensemble");
    std::vector<std::string> profile_queries;
    std::string profile_out, profile_mode = "bayes", profile_records;
    double profile_temp = 1.5;
    profile->add_option("--queries", profile_queries, "query UECS stores (one per model)")
        ->required()->check(CLI::ExistingFile)->expected(1, -1);
    profile->add_option("--mode", profile_mode, "coefficient mode")
        ->check(CLI::IsMember({"bayes", "full", "uniform"}))->capture_default_str();
    profile->add_option("--temperature", profile_temp, "coefficient temperature tau")->capture_default_str();
    profile->add_option("--records", profile_records, "also write per-record coefficients as CSV");
    profile->add_option("--out", profile_out, "domain x model CSV")->required();
    profile->callback([&] {
        action = [&] {
            const auto cfg = make_coefficient_config(profile_mode, profile_temp, "");
            log_config(err, "profile", coefficient_config_to_json(cfg));
            const auto input = load_ensemble(profile_queries);
            const auto table = coefficient_profile(input, cfg);
            write_file_atomic(profile_out, format_profile(table));
            if (!profile_records.empty()) {
                std::vector<std::string> names;
                for (const auto& s : input.stores()) names.push_back(s.model_name());
                write_file_atomic(profile_records, format_coefficient_rows(names, convolve_ensemble(input, cfg)));
            }
            out << format_profile(table);
        };
    });

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        if (!rev.empty()) rev.pop_back();  // program name
        app.parse(rev);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    try {
        action();
    } catch (const CLI::ParseError& e) {
        err << "error: missing required option(s): " << e.what() << "\n\n" << app.help() << '\n';
        return kExitUsage;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitData;
    }
    return kExitOk;
}

}  // namespace uec::cli
