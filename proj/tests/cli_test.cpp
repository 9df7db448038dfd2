#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oracles.hpp"
#include "uec/uec.hpp"

using namespace uec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code;
    std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "uec");
    std::ostringstream out, err;
    const int code = cli::dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = oracle::temp_dir(::testing::UnitTest::GetInstance()->current_test_info()->name());
        spit(dir_ / "small.json", R"({"queries_per_domain": 6, "dim": 12})");
    }
    void TearDown() override { fs::remove_all(dir_); }
    std::string p(const std::string& name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SynthIsDeterministic) {
    ASSERT_EQ(run_cli({"synth", "--seed", "3", "--spec", p("small.json"), "--out", p("a")}).code, 0);
    ASSERT_EQ(run_cli({"synth", "--seed", "3", "--spec", p("small.json"), "--out", p("b")}).code, 0);
    for (const char* f : {"docs.model0.uecs", "queries.model2.uecs", "qrels.tsv", "spec.json"})
        EXPECT_EQ(slurp(dir_ / "a" / f), slurp(dir_ / "b" / f)) << f;
    EXPECT_EQ(read_store(dir_ / "a" / "docs.model1.uecs").size(), 3u * 6u * 4u);
}

TEST_F(CliTest, EchoesResolvedConfig) {
    const auto r = run_cli({"synth", "--spec", p("small.json"), "--out", p("c")});
    ASSERT_EQ(r.code, 0);
    const auto line = r.err.substr(0, r.err.find('\n'));
    const auto j = Json::parse(line);
    EXPECT_EQ(j.at("command"), "synth");
    EXPECT_EQ(j.at("seed"), 7);
    EXPECT_EQ(j.at("dim"), 12);
}

TEST_F(CliTest, UsageErrorsExitOne) {
    EXPECT_EQ(run_cli({}).code, 1);
    EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
    EXPECT_EQ(run_cli({"synth"}).code, 1);
    EXPECT_EQ(run_cli({"synth", "--out", p("x"), "--bogus"}).code, 1);
    EXPECT_EQ(run_cli({"search", "--index", p("nope.uecs"), "--queries", p("nope.uecs"), "--run", p("r")}).code, 1);
    EXPECT_EQ(run_cli({"eval", "--task", "retrieval"}).code, 1);
    EXPECT_EQ(run_cli({"eval", "--task", "ranking"}).code, 1);
    ASSERT_EQ(run_cli({"synth", "--spec", p("small.json"), "--out", p("d")}).code, 0);
    EXPECT_EQ(run_cli({"convolve", p("d/docs.model0.uecs"), "--mode", "fixed", "--out", p("e.uecs")}).code, 1);
    EXPECT_EQ(run_cli({"convolve", p("d/docs.model0.uecs"), "--temperature", "-1", "--out", p("e.uecs")}).code, 1);
    EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST_F(CliTest, DataErrorsExitTwo) {
    spit(dir_ / "garbage.uecs", "not a store at all");
    auto r = run_cli({"convolve", p("garbage.uecs"), "--out", p("o.uecs")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("magic"), std::string::npos);

    EmbeddingStore a("a", 2), b("b", 3);
    a.add("x", GaussianEmbedding({1.0, 0.0}, {0.5, 0.5}));
    b.add("x", GaussianEmbedding({1.0, 0.0, 0.0}, {0.5, 0.5, 0.5}));
    write_store(a, dir_ / "a.uecs");
    write_store(b, dir_ / "b.uecs");
    EXPECT_EQ(run_cli({"convolve", p("a.uecs"), p("b.uecs"), "--out", p("o.uecs")}).code, 2);

    spit(dir_ / "bad.qrels", "q1 d1\n");
    spit(dir_ / "ok.run", "q1\td1\t1\t0.5\n");
    r = run_cli({"eval", "--run", p("ok.run"), "--qrels", p("bad.qrels")});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("line 1"), std::string::npos);
}

TEST_F(CliTest, ConvolveMatchesLibrary) {
    ASSERT_EQ(run_cli({"synth", "--spec", p("small.json"), "--out", p("s")}).code, 0);
    std::vector<std::string> stores;
    for (int k = 0; k < 3; ++k) stores.push_back(p("s/docs.model" + std::to_string(k) + ".uecs"));
    auto args = std::vector<std::string>{"convolve"};
    args.insert(args.end(), stores.begin(), stores.end());
    for (const char* a : {"--mode", "full", "--temperature", "2", "--out"}) args.push_back(a);
    args.push_back(p("ens.uecs"));
    args.push_back("--coefficients");
    args.push_back(p("coeff.csv"));
    ASSERT_EQ(run_cli(args).code, 0);

    std::vector<EmbeddingStore> loaded;
    for (const auto& s : stores) loaded.push_back(read_store(s));
    const auto expected = convolve_ensemble(EnsembleInput(loaded), {CoefficientMode::full_form, 2.0, std::nullopt});
    const auto got = read_store(dir_ / "ens.uecs");
    ASSERT_EQ(got.size(), expected.store.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].id, expected.store[i].id);
        for (std::size_t d = 0; d < got.dim(); ++d) {
            EXPECT_EQ(got[i].embedding.mean()[d], static_cast<float>(expected.store[i].embedding.mean()[d]));
            EXPECT_EQ(got[i].embedding.var()[d], static_cast<float>(expected.store[i].embedding.var()[d]));
        }
    }
    const auto csv = slurp(dir_ / "coeff.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "record_id,model0,model1,model2");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(got.size() + 1));
}

TEST_F(CliTest, FitProbabilizeConvolveSearchEval) {
    const auto data = synth_generate(synth_spec_from_json(Json::parse(slurp(dir_ / "small.json"))));
    // per model: a deterministic store of query and doc means, plus labeled pairs
    std::vector<PairLabel> pairs;
    for (const auto& [qid, judged] : data.qrels) {
        for (const auto& [did, g] : judged) pairs.push_back({qid, did, 1});
        pairs.push_back({qid, data.docs.id(pairs.size() % data.docs.n_records()), 0});
    }
    spit(dir_ / "pairs.tsv", format_pairs(pairs));
    std::vector<std::string> prob_docs, prob_queries;
    for (std::size_t k = 0; k < 3; ++k) {
        const std::string m = "m" + std::to_string(k);
        EmbeddingStore det(m, data.docs.dim()), docs(m, data.docs.dim()), queries(m, data.docs.dim());
        for (std::size_t i = 0; i < data.docs.n_records(); ++i) {
            auto e = GaussianEmbedding::deterministic(Vector(data.docs.embedding(k, i).mean().begin(), data.docs.embedding(k, i).mean().end()));
            det.add(data.docs.id(i), e);
            docs.add(data.docs.id(i), e);
        }
        for (std::size_t i = 0; i < data.queries.n_records(); ++i) {
            auto e = GaussianEmbedding::deterministic(Vector(data.queries.embedding(k, i).mean().begin(), data.queries.embedding(k, i).mean().end()));
            det.add(data.queries.id(i), e);
            queries.add(data.queries.id(i), e);
        }
        write_store(det, dir_ / (m + ".all.uecs"));
        write_store(docs, dir_ / (m + ".docs.uecs"));
        write_store(queries, dir_ / (m + ".queries.uecs"));

        ASSERT_EQ(run_cli({"fit", "--pairs", p("pairs.tsv"), "--store", p(m + ".all.uecs"), "--prior-precision", "0.5",
                           "--out", p(m + ".post.json")}).code, 0);
        const auto post = read_posterior(dir_ / (m + ".post.json"));
        const auto lib_post = fit_laplace(pair_examples(read_store(dir_ / (m + ".all.uecs")), pairs), {0.5, 100, 1e-8},
                                          data.docs.dim(), m);
        EXPECT_EQ(post, lib_post);

        for (const char* side : {"docs", "queries"}) {
            const std::string out = m + "." + side + ".prob.uecs";
            ASSERT_EQ(run_cli({"probabilize", "--store", p(m + "." + side + ".uecs"), "--posterior", p(m + ".post.json"),
                               "--out", p(out)}).code, 0);
            (std::string(side) == "docs" ? prob_docs : prob_queries).push_back(p(out));
        }
    }
    auto conv = [&](const std::vector<std::string>& in, const std::string& out) {
        std::vector<std::string> args{"convolve"};
        args.insert(args.end(), in.begin(), in.end());
        args.push_back("--out");
        args.push_back(p(out));
        return run_cli(args).code;
    };
    ASSERT_EQ(conv(prob_docs, "docs.ens.uecs"), 0);
    ASSERT_EQ(conv(prob_queries, "queries.ens.uecs"), 0);
    write_qrels(data.qrels, dir_ / "qrels.tsv");
    ASSERT_EQ(run_cli({"search", "--index", p("docs.ens.uecs"), "--queries", p("queries.ens.uecs"), "--k", "10",
                       "--beta", "0.01", "--run", p("out.run")}).code, 0);
    ASSERT_EQ(run_cli({"search", "--index", p("docs.ens.uecs"), "--queries", p("queries.ens.uecs"), "--workers", "3",
                       "--run", p("out3.run")}).code, 0);
    EXPECT_EQ(slurp(dir_ / "out.run"), slurp(dir_ / "out3.run"));

    const auto lib_run = search_all(build_index(read_store(dir_ / "docs.ens.uecs"), {}),
                                    read_store(dir_ / "queries.ens.uecs"), 10);
    EXPECT_EQ(slurp(dir_ / "out.run"), format_run(lib_run));

    const auto r = run_cli({"eval", "--task", "retrieval", "--run", p("out.run"), "--qrels", p("qrels.tsv"), "--report",
                            p("report.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = Json::parse(slurp(dir_ / "report.json"));
    const auto expected = evaluate_retrieval(lib_run, data.qrels, 10);
    EXPECT_DOUBLE_EQ(report.at("ndcg@10").get<double>(), expected.ndcg);
    EXPECT_DOUBLE_EQ(report.at("recall@10").get<double>(), expected.recall);
    EXPECT_DOUBLE_EQ(report.at("nauc@10").get<double>(), expected.nauc);
    EXPECT_NE(r.out.find("ndcg@10"), std::string::npos);
}

TEST_F(CliTest, AblateAndProfile) {
    ASSERT_EQ(run_cli({"synth", "--spec", p("small.json"), "--out", p("s")}).code, 0);
    auto r = run_cli({"ablate", "--data", p("s"), "--baselines", "--out", p("abl.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto report = Json::parse(slurp(dir_ / "abl.json"));
    for (const char* key : {"full.ndcg@10", "no_unc_sim.ndcg@10", "no_unc_conv.ndcg@10", "no_unc_sim_no_unc_conv.nauc@10",
                            "weighted.ndcg@10", "task_arithmetic.ndcg@10"})
        EXPECT_TRUE(report.contains(key)) << key;

    r = run_cli({"profile", "--queries", p("s/queries.model0.uecs"), p("s/queries.model1.uecs"),
                 p("s/queries.model2.uecs"), "--out", p("profile.csv")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = slurp(dir_ / "profile.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "domain,model0,model1,model2");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

TEST_F(CliTest, EvalStsAndClassification) {
    spit(dir_ / "scores.tsv", "p1\t1\t1\np2\t2\t3\np3\t3\t2\np4\t4\t4\n");
    auto r = run_cli({"eval", "--task", "sts", "--scores", p("scores.tsv"), "--report", p("sts.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(Json::parse(slurp(dir_ / "sts.json")).at("spearman").get<double>(), 0.8, 1e-12);

    EmbeddingStore s("m", 2);
    s.add("a", GaussianEmbedding::deterministic({1.0, 0.0}));
    s.add("b", GaussianEmbedding::deterministic({0.8, 0.6}));
    s.add("c", GaussianEmbedding::deterministic({0.0, 1.0}));
    write_store(s, dir_ / "sts.uecs");
    spit(dir_ / "sts_pairs.tsv", "a\tb\t4\na\tc\t0\nb\tc\t2\n");
    r = run_cli({"eval", "--task", "sts", "--store", p("sts.uecs"), "--pairs", p("sts_pairs.tsv"), "--similarity", "dot",
                 "--report", p("sts2.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NEAR(Json::parse(slurp(dir_ / "sts2.json")).at("spearman").get<double>(), 1.0, 1e-12);

    EmbeddingStore train("m", 2), test("m", 2);
    std::string labels;
    for (int i = 0; i < 6; ++i) {
        const double off = 0.1 * i;
        train.add("tr" + std::to_string(i), GaussianEmbedding::deterministic({i % 2 ? 3.0 + off : -3.0 - off, off}));
        test.add("te" + std::to_string(i), GaussianEmbedding::deterministic({i % 2 ? 2.5 : -2.5, -off}));
        labels += "tr" + std::to_string(i) + '\t' + (i % 2 ? "pos" : "neg") + '\n';
        labels += "te" + std::to_string(i) + '\t' + (i % 2 ? "pos" : "neg") + '\n';
    }
    write_store(train, dir_ / "train.uecs");
    write_store(test, dir_ / "test.uecs");
    spit(dir_ / "labels.tsv", labels);
    r = run_cli({"eval", "--task", "classification", "--train", p("train.uecs"), "--test", p("test.uecs"), "--labels",
                 p("labels.tsv"), "--report", p("cls.json")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto cls = Json::parse(slurp(dir_ / "cls.json"));
    EXPECT_EQ(cls.at("accuracy").get<double>(), 1.0);
    EXPECT_EQ(cls.at("f1").get<double>(), 1.0);
}

TEST_F(CliTest, BinaryExitStatuses) {
    const std::string bin = UEC_CLI_PATH;
    const auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " --help"), 0);
    EXPECT_EQ(status(bin + " synth"), 1);
    EXPECT_EQ(status(bin + " synth --spec " + p("small.json") + " --out " + p("bin")), 0);
    spit(dir_ / "junk.uecs", "UECS");
    EXPECT_EQ(status(bin + " convolve " + p("junk.uecs") + " --out " + p("j.uecs")), 2);
}
