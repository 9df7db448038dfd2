#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "uec/text_io.hpp"

using namespace uec;

namespace {

Qrels qrels_of(const std::string& text) {
    std::istringstream in(text);
    return parse_qrels(in);
}

RunRanking run_of(const std::string& text) {
    std::istringstream in(text);
    return parse_run(in);
}

}  // namespace

TEST(Qrels, ParsesSpaceAndTabSeparatedLines) {
    const auto q = qrels_of("q1 d1 1\n");
    ASSERT_EQ(q.size(), 1u);
    EXPECT_EQ(q.at("q1").at("d1"), 1);
    const auto t = qrels_of("q1\td1\t2\nq1\td2\t0\n# comment\n\nq2 0 d9 3\n");
    EXPECT_EQ(t.at("q1").at("d1"), 2);
    EXPECT_EQ(t.at("q1").at("d2"), 0);
    EXPECT_EQ(t.at("q2").at("d9"), 3);
}

TEST(Qrels, CrlfMatchesLf) {
    EXPECT_EQ(qrels_of("q1\td1\t1\r\nq2\td2\t0\r\n"), qrels_of("q1\td1\t1\nq2\td2\t0\n"));
}

TEST(Qrels, ErrorsNameTheLine) {
    try {
        qrels_of("q1 d1 1\nq2 d2\n");
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    EXPECT_THROW(qrels_of("q1 d1 x\n"), ParseError);
    EXPECT_THROW(qrels_of("q1 d1 -1\n"), ParseError);
    EXPECT_THROW(qrels_of("q1 d1 1.5\n"), ParseError);
    try {
        qrels_of("q1 d1 1\nq1 d1 0\n");
        FAIL();
    } catch (const DuplicateJudgmentError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Qrels, FileRoundTrip) {
    const auto dir = oracle::temp_dir("qrels");
    const Qrels q{{"a", {{"x", 1}, {"y", 0}}}, {"b", {{"z", 3}}}};
    write_qrels(q, dir / "q.tsv");
    EXPECT_EQ(read_qrels(dir / "q.tsv"), q);
    EXPECT_THROW(read_qrels(dir / "absent.tsv"), IoError);
    std::filesystem::remove_all(dir);
}

TEST(Run, FormatIsTabSeparatedWithOneBasedRanks) {
    const RunRanking run{{"q1", {{"d2", 0.5}, {"d1", 0.25}}, 0.5}};
    EXPECT_EQ(format_run(run), "q1\td2\t1\t0.5\nq1\td1\t2\t0.25\n");
}

TEST(Run, RoundTripIsExact) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    RunRanking run;
    for (int q = 0; q < 5; ++q) {
        QueryResult r{"query-" + std::to_string(q), {}, 0.0};
        double s = 1.0;
        for (int d = 0; d < 4; ++d) r.hits.push_back({"doc" + std::to_string(d), s -= std::abs(normal(rng))});
        r.confidence = r.hits.front().score;
        run.push_back(r);
    }
    EXPECT_EQ(run_of(format_run(run)), run);
    EXPECT_EQ(format_run(run_of(format_run(run))), format_run(run));
}

TEST(Run, ParseErrors) {
    EXPECT_THROW(run_of("q d 1\n"), ParseError);
    EXPECT_THROW(run_of("q d 0 1.0\n"), ParseError);
    EXPECT_THROW(run_of("q d 1 abc\n"), ParseError);
    EXPECT_THROW(run_of("q d 1 1.0\nq e 1 0.5\n"), ParseError);
}

TEST(Pairs, RoundTripAndValidation) {
    const std::vector<PairLabel> pairs{{"q1", "d1", 1}, {"q1", "d7", 0}, {"q2", "d3", 1}};
    std::istringstream in(format_pairs(pairs));
    const auto back = parse_pairs(in);
    ASSERT_EQ(back.size(), pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        EXPECT_EQ(back[i].query_id, pairs[i].query_id);
        EXPECT_EQ(back[i].doc_id, pairs[i].doc_id);
        EXPECT_EQ(back[i].label, pairs[i].label);
    }
    std::istringstream bad_label("q d 2\n");
    EXPECT_THROW(parse_pairs(bad_label), ParseError);
    std::istringstream bad_fields("q d\n");
    EXPECT_THROW(parse_pairs(bad_fields), ParseError);
}

TEST(FormatDouble, RoundTripsExactly) {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int i = 0; i < 1000; ++i) {
        const double v = u(rng) * std::pow(10.0, i % 40 - 20);
        EXPECT_EQ(std::stod(format_double(v)), v);
    }
}

TEST(PosteriorJson, RoundTripIsBitExact) {
    const auto dir = oracle::temp_dir("posterior");
    LaplacePosterior p;
    p.model_name = "enc-a";
    p.prior_precision = 0.1;
    p.map_weights = {0.1, -2.0 / 3.0, 1e-300};
    p.post_var = {1.0 / 3.0, 9.999999999999999e-1, 2.5e-7};
    p.n_examples = 42;
    write_posterior(p, dir / "p.json");
    const auto back = read_posterior(dir / "p.json");
    EXPECT_EQ(back.model_name, p.model_name);
    EXPECT_EQ(back.prior_precision, p.prior_precision);
    EXPECT_EQ(back.map_weights, p.map_weights);
    EXPECT_EQ(back.post_var, p.post_var);
    EXPECT_EQ(back.n_examples, p.n_examples);
    std::filesystem::remove_all(dir);
}

TEST(PosteriorJson, RejectsInconsistentDocuments) {
    Json j = posterior_to_json(LaplacePosterior{"m", {0.0, 1.0}, {0.5, 0.5}, 1.0, 3});
    EXPECT_NO_THROW(posterior_from_json(j));
    Json bad = j;
    bad["dim"] = 3;
    EXPECT_THROW(posterior_from_json(bad), FormatError);
    bad = j;
    bad["post_var"] = Json::array({0.5, -0.5});
    EXPECT_THROW(posterior_from_json(bad), FormatError);
    bad = j;
    bad.erase("lambda");
    EXPECT_THROW(posterior_from_json(bad), FormatError);
    bad = j;
    bad["map_weights"] = "nope";
    EXPECT_THROW(posterior_from_json(bad), FormatError);
}

TEST(SynthSpecJson, RoundTripDefaultsAndUnknownKeys) {
    SynthSpec s;
    s.seed = 99;
    s.dim = 12;
    const auto back = synth_spec_from_json(synth_spec_to_json(s));
    EXPECT_EQ(synth_spec_to_json(back), synth_spec_to_json(s));
    const auto partial = synth_spec_from_json(Json{{"seed", 5}});
    EXPECT_EQ(partial.seed, 5u);
    EXPECT_EQ(partial.dim, SynthSpec{}.dim);
    EXPECT_THROW(synth_spec_from_json(Json{{"sed", 5}}), FormatError);
    EXPECT_THROW(synth_spec_from_json(Json{{"dim", "big"}}), FormatError);
    EXPECT_THROW(synth_spec_from_json(Json{{"specialist_noise", 0.9}}), InvalidArgumentError);
}

TEST(ProfileCsv, Layout) {
    CoefficientProfile p{{"dom0", "dom1"}, {"m0", "m1"}, {{0.75, 0.25}, {0.5, 0.5}}, {2, 3}};
    EXPECT_EQ(format_profile(p), "domain,m0,m1\ndom0,0.75,0.25\ndom1,0.5,0.5\n");
}
