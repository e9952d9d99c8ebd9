// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Metric tests: corpus BLEU@4 against a hand-computed clipped-precision
// table, CIDEr-D against an independently transcribed formula oracle, R@4
// enumerations, permutation/duplication/order invariants, the TSV evaluate
// path with id-mismatch errors, and the metric log line format.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mart/metrics.hpp"
#include "mart/rng.hpp"

using namespace mart;

namespace {

// ------------------------------------------------------------------
// Independent CIDEr-D transcription for the oracle comparison. Same
// formula, different shape: n-grams as space-joined strings in ordered
// maps, outer loop over n rather than over videos.
// ------------------------------------------------------------------

std::vector<std::string> grams(const std::vector<std::string>& toks, std::size_t n) {
    std::vector<std::string> out;
    if (toks.size() < n) return out;
    for (std::size_t i = 0; i + n <= toks.size(); ++i) {
        std::string g;
        for (std::size_t k = 0; k < n; ++k) {
            if (k) g += ' ';
            g += toks[i + k];
        }
        out.push_back(g);
    }
    return out;
}

double cider_reference_formula(const std::vector<std::string>& preds,
                               const std::vector<std::vector<std::string>>& refs) {
    const std::size_t V = preds.size();
    std::vector<double> video_score(V, 0.0);
    for (std::size_t n = 1; n <= 4; ++n) {
        std::map<std::string, double> df;
        for (const auto& rv : refs) {
            std::set<std::string> seen;
            for (const auto& r : rv)
                for (const auto& g : grams(tokenize(r), n)) seen.insert(g);
            for (const auto& g : seen) df[g] += 1.0;
        }
        const auto tfidf = [&](const std::vector<std::string>& toks) {
            std::map<std::string, double> vec;
            for (const auto& g : grams(toks, n)) vec[g] += 1.0;
            for (auto& [g, c] : vec) {
                const double d = df.count(g) ? df.at(g) : 0.0;
                c *= std::log(double(refs.size()) / std::max(1.0, d));
            }
            return vec;
        };
        for (std::size_t v = 0; v < V; ++v) {
            const auto ptoks = tokenize(preds[v]);
            auto pv = tfidf(ptoks);
            double pnorm = 0.0;
            for (const auto& [g, w] : pv) pnorm += w * w;
            pnorm = std::sqrt(pnorm);
            double acc = 0.0;
            for (const auto& r : refs[v]) {
                const auto rtoks = tokenize(r);
                auto rv2 = tfidf(rtoks);
                double rnorm = 0.0;
                for (const auto& [g, w] : rv2) rnorm += w * w;
                rnorm = std::sqrt(rnorm);
                if (pnorm == 0.0 || rnorm == 0.0) continue;
                double dot = 0.0;
                for (const auto& [g, w] : pv)
                    if (rv2.count(g)) dot += std::min(w, rv2.at(g)) * rv2.at(g);
                const double dl = double(ptoks.size()) - double(rtoks.size());
                acc += std::exp(-dl * dl / 72.0) * dot / (pnorm * rnorm);
            }
            video_score[v] += 10.0 * acc / (4.0 * double(refs[v].size()));
        }
    }
    double s = 0.0;
    for (double x : video_score) s += x;
    return s / double(V);
}

std::vector<std::string> toy_preds() {
    return {"a man is riding a bike", "the dog chases the ball", "a girl sings on stage"};
}

std::vector<std::vector<std::string>> toy_refs() {
    return {{"a man rides a bike", "a person is riding a bicycle"},
            {"the dog chases a red ball"},
            {"a woman sings on the stage"}};
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& p) : path(p) {}
    ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("bleu4 is exactly 1 when every prediction matches its reference") {
    std::vector<std::string> preds = {"a man walks the dog", "she sat by the lake"};
    std::vector<std::vector<std::string>> refs = {{preds[0]}, {preds[1]}};
    CHECK(bleu4(preds, refs) == 1.0);
    // Also exact with an extra distractor reference (clipping and the
    // closest-length brevity rule keep the perfect match perfect).
    refs[0].push_back("totally different words entirely here");
    CHECK(bleu4(preds, refs) == 1.0);
}

TEST_CASE("bleu4 with no overlap collapses to the epsilon floor") {
    std::vector<std::string> preds = {"aa bb cc dd", "ee ff gg hh"};
    std::vector<std::vector<std::string>> refs = {{"xx yy zz ww"}, {"qq rr ss tt"}};
    CHECK(bleu4(preds, refs) <= 1e-9 + 1e-15);
    CHECK(bleu4(preds, refs) > 0.0);
}

TEST_CASE("bleu4 matches the hand-computed 2-video clipped-precision table") {
    // Video A: pred "the cat sat on the mat" vs ref "the cat sat on a mat"
    //   1-grams: clipped 5 ("the" capped at 1) of 6
    //   2-grams: 3 of 5   3-grams: 2 of 4   4-grams: 1 of 3
    // Video B: pred "a dog runs" vs ref "a dog runs fast"
    //   1-grams 3/3, 2-grams 2/2, 3-grams 1/1, 4-grams 0/0
    // Corpus: p1=8/9 p2=5/7 p3=3/5 p4=1/3; c=9, r=6+4=10 -> BP=exp(1-10/9).
    std::vector<std::string> preds = {"the cat sat on the mat", "a dog runs"};
    std::vector<std::vector<std::string>> refs = {{"the cat sat on a mat"}, {"a dog runs fast"}};
    const double expected =
        std::exp(1.0 - 10.0 / 9.0) *
        std::pow((8.0 / 9.0) * (5.0 / 7.0) * (3.0 / 5.0) * (1.0 / 3.0), 0.25);
    CHECK(bleu4(preds, refs) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("bleu4 requires a reference per video") {
    std::vector<std::string> preds = {"a b c"};
    std::vector<std::vector<std::string>> refs = {{}};
    CHECK_THROWS_AS(bleu4(preds, refs), DataError);
    CHECK_THROWS_AS(bleu4(preds, {}), DataError);
}

TEST_CASE("cider_d on a single-video corpus is exactly 0") {
    // idf = log(1/1) = 0 for every reference n-gram: all tf-idf vectors
    // vanish, so every cosine term is 0.
    std::vector<std::string> preds = {"a man is riding a bike"};
    std::vector<std::vector<std::string>> refs = {{"a man is riding a bike"}};
    CHECK(cider_d(preds, refs) == 0.0);
}

TEST_CASE("cider_d positive for a matching prediction in a 2-video corpus") {
    std::vector<std::string> preds = {"a man rides a bike", "a dog chases a ball"};
    std::vector<std::vector<std::string>> refs = {{"a man rides a bike"},
                                                  {"a dog chases a ball"}};
    CHECK(cider_d(preds, refs) > 0.0);
}

TEST_CASE("cider_d matches the independently transcribed formula oracle") {
    const double got = cider_d(toy_preds(), toy_refs());
    const double want = cider_reference_formula(toy_preds(), toy_refs());
    CHECK(std::abs(got - want) < 1e-9);
    CHECK(got > 0.0);
}

TEST_CASE("cider_d is invariant to reference order within a video") {
    auto refs = toy_refs();
    const double a = cider_d(toy_preds(), refs);
    std::swap(refs[0][0], refs[0][1]);
    const double b = cider_d(toy_preds(), refs);
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("cider_d rejects an empty reference corpus") {
    CHECK_THROWS_AS(cider_d({}, {}), DataError);
}

TEST_CASE("r4 is 0 when all 4-grams are distinct") {
    CHECK(r4_repetition({"a b c d e f"}) == 0.0);
}

TEST_CASE("r4 on seven identical tokens is 0.75") {
    // 4 occurrences, 1 distinct -> (4-1)/4.
    CHECK(r4_repetition({"go go go go go go go"}) == doctest::Approx(0.75).epsilon(1e-15));
}

TEST_CASE("r4 of a paragraph under four tokens is 0") {
    CHECK(r4_repetition({"one two three"}) == 0.0);
    CHECK(r4_repetition({""}) == 0.0);
}

TEST_CASE("r4 never decreases when a sentence is duplicated within a paragraph") {
    SeedStreams streams(2026);
    Rng rng = streams.stream("r4-dup");
    const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e", "f"};
    for (int trial = 0; trial < 20; ++trial) {
        const auto sentence = [&](std::size_t len) {
            std::string s;
            for (std::size_t i = 0; i < len; ++i) {
                if (i) s += ' ';
                s += alphabet[rng.uniform_int(alphabet.size())];
            }
            return s;
        };
        const std::string s1 = sentence(4 + rng.uniform_int(9));
        const std::string s2 = sentence(4 + rng.uniform_int(9));
        const std::string orig = s1 + " " + s2;
        const std::string dup = s1 + " " + s2 + " " + s2;
        CHECK(r4_repetition({dup}) >= r4_repetition({orig}));
    }
}

TEST_CASE("all metrics are permutation-invariant over videos") {
    auto preds = toy_preds();
    auto refs = toy_refs();
    const double b0 = bleu4(preds, refs);
    const double c0 = cider_d(preds, refs);
    const double r0 = r4_repetition(preds);
    // Rotate the corpus.
    std::rotate(preds.begin(), preds.begin() + 1, preds.end());
    std::rotate(refs.begin(), refs.begin() + 1, refs.end());
    CHECK(bleu4(preds, refs) == doctest::Approx(b0).epsilon(1e-12));
    CHECK(cider_d(preds, refs) == doctest::Approx(c0).epsilon(1e-12));
    CHECK(r4_repetition(preds) == doctest::Approx(r0).epsilon(1e-12));
}

TEST_CASE("evaluate reads TSV files, merging repeated reference ids") {
    TempFile pf("metrics_pred_tmp.tsv"), rf("metrics_ref_tmp.tsv");
    write_file(pf.path,
               "vid-1\ta man is riding\ta bike\n"
               "vid-2\tthe dog chases the ball\n");
    write_file(rf.path,
               "vid-2\tthe dog chases a red ball\n"
               "vid-1\ta man rides a bike\n"
               "vid-1\ta person is riding a bicycle\n");
    const MetricReport rep = evaluate(pf.path, rf.path);

    std::vector<std::string> preds = {"a man is riding a bike", "the dog chases the ball"};
    std::vector<std::vector<std::string>> refs = {
        {"a man rides a bike", "a person is riding a bicycle"}, {"the dog chases a red ball"}};
    CHECK(rep.bleu4 == doctest::Approx(bleu4(preds, refs)).epsilon(1e-12));
    CHECK(rep.cider_d == doctest::Approx(cider_d(preds, refs)).epsilon(1e-12));
    CHECK(rep.r4 == doctest::Approx(r4_repetition(preds)).epsilon(1e-12));
}

TEST_CASE("evaluate of predictions identical to references gives BLEU 1") {
    TempFile pf("metrics_pred_id_tmp.tsv"), rf("metrics_ref_id_tmp.tsv");
    const std::string body =
        "v1\ta man walks\the waves\n"
        "v2\tshe sings loudly on the stage\n";
    write_file(pf.path, body);
    write_file(rf.path, body);
    const MetricReport rep = evaluate(pf.path, rf.path);
    CHECK(rep.bleu4 == 1.0);
    CHECK(rep.r4 ==
          doctest::Approx(r4_repetition({"a man walks he waves", "she sings loudly on the stage"}))
              .epsilon(1e-12));
}

TEST_CASE("evaluate with empty prediction strings stays near zero BLEU") {
    TempFile pf("metrics_pred_empty_tmp.tsv"), rf("metrics_ref_empty_tmp.tsv");
    write_file(pf.path, "v1\t\nv2\t\n");
    write_file(rf.path, "v1\ta man walks\nv2\tshe sings\n");
    const MetricReport rep = evaluate(pf.path, rf.path);
    CHECK(rep.bleu4 < 1e-9);
    CHECK(rep.r4 == 0.0);
}

TEST_CASE("evaluate rejects id mismatches and duplicate predictions") {
    TempFile pf("metrics_pred_err_tmp.tsv"), rf("metrics_ref_err_tmp.tsv");
    write_file(pf.path, "v1\ta walk\nv2\ta song\n");
    write_file(rf.path, "v1\ta walk\n");
    CHECK_THROWS_AS(evaluate(pf.path, rf.path), DataError);  // v2 has no reference

    write_file(rf.path, "v1\ta walk\nv2\ta song\nv3\textra\n");
    CHECK_THROWS_AS(evaluate(pf.path, rf.path), DataError);  // v3 has no prediction

    write_file(pf.path, "v1\ta walk\nv1\ta walk\n");
    write_file(rf.path, "v1\ta walk\n");
    CHECK_THROWS_AS(evaluate(pf.path, rf.path), DataError);  // duplicate prediction

    CHECK_THROWS_AS(evaluate("no_such_file.tsv", rf.path), DataError);
}

TEST_CASE("metric log line has the fixed key order and formatting") {
    MetricReport rep;
    rep.bleu4 = 0.25;
    rep.cider_d = 2.0;
    rep.r4 = 0.1;
    CHECK(format_metric_line(3, 1.5, rep, 2e-5) ==
          "epoch=3 loss=1.500000 cider=2.000000 bleu4=0.250000 r4=0.100000 lr=0.00002000");
}
