// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-surface tests: the synth/train/eval/decode/gradcheck/ablate/
// retrieve commands, their exit-code contract (0 success, 1 runtime failure,
// 2 usage/config error), determinism under fixed seeds, and the bundled
// config files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mart/cli.hpp"
#include "mart/config.hpp"
#include "mart/metrics.hpp"

using namespace mart;

namespace {

struct CliResult {
    int code;
    std::string out;
    std::string err;
};

CliResult run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

// Per-case scratch directory under the test working directory.
struct ScratchDir {
    std::filesystem::path path;
    explicit ScratchDir(const std::string& name)
        : path(std::filesystem::path("cli_scratch") / name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~ScratchDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::string operator/(const std::string& rest) const { return (path / rest).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(bool(out));
    out << content;
}

std::size_t line_count(const std::string& text) {
    std::size_t n = 0;
    for (const char c : text)
        if (c == '\n') ++n;
    return n;
}

std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(line);
    return out;
}

// Small fast training setup shared by the train/decode/ablate/retrieve cases.
const char* kTinyConfig =
    "model = mart\n"
    "d = 16\n"
    "layers = 1\n"
    "heads = 2\n"
    "memory_len = 1\n"
    "d_feat = 32\n"
    "max_video_len = 10\n"
    "dropout = 0\n"
    "lr = 1e-3\n"
    "warmup_epochs = 1\n"
    "max_epochs = 3\n"
    "batch_size = 4\n"
    "eval_every = 1\n"
    "patience = 5\n"
    "min_count = 1\n"
    "seed = 11\n";

// synth + config in one scratch dir; returns the config path.
std::string prepare_corpus(const ScratchDir& dir, std::size_t n_train = 10, std::size_t n_val = 4) {
    const CliResult r = run({"synth", "--seed", "7", "--n-videos", std::to_string(n_train),
                             "--n-val", std::to_string(n_val), "--out", dir / "data"});
    REQUIRE(r.code == 0);
    const std::string cfg = dir / "tiny.cfg";
    write_file(cfg, kTinyConfig);
    return cfg;
}

}  // namespace

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

TEST_CASE("synth writes byte-identical files under the same seed") {
    ScratchDir dir("synth_det");
    for (const char* sub : {"a", "b"}) {
        const CliResult r =
            run({"synth", "--seed", "5", "--n-videos", "6", "--n-val", "2", "--out", dir / sub});
        CHECK(r.code == 0);
        CHECK(r.out == "wrote 6 train / 2 val videos to " + (dir / sub) + "\n");
    }
    const CliResult other =
        run({"synth", "--seed", "6", "--n-videos", "6", "--n-val", "2", "--out", dir / "c"});
    REQUIRE(other.code == 0);
    for (const char* f : {"train.jsonl", "val.jsonl", "train_meta.tsv", "val_meta.tsv",
                          "train_refs.tsv", "val_refs.tsv"}) {
        CHECK(slurp(dir / (std::string("a/") + f)) == slurp(dir / (std::string("b/") + f)));
    }
    CHECK(slurp(dir / "a/train.jsonl") != slurp(dir / "c/train.jsonl"));
}

TEST_CASE("synth record counts match the flags, one record per line") {
    ScratchDir dir("synth_count");
    REQUIRE(run({"synth", "--seed", "3", "--n-videos", "12", "--n-val", "3", "--out", dir / "d"})
                .code == 0);
    CHECK(line_count(slurp(dir / "d/train.jsonl")) == 12);
    CHECK(line_count(slurp(dir / "d/val.jsonl")) == 3);
    CHECK(line_count(slurp(dir / "d/train_refs.tsv")) == 12);

    // Default validation size is a fifth of the training size.
    REQUIRE(run({"synth", "--seed", "3", "--n-videos", "10", "--out", dir / "e"}).code == 0);
    CHECK(line_count(slurp(dir / "e/val.jsonl")) == 2);
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

TEST_CASE("train writes best.ckpt plus train.log and repeats bit-for-bit under one seed") {
    ScratchDir dir("train_det");
    const std::string cfg = prepare_corpus(dir);
    for (const char* sub : {"r1", "r2"}) {
        const CliResult r = run({"train", "--config", cfg, "--model", "mart", "--data",
                                 dir / "data", "--out", dir / sub});
        REQUIRE(r.code == 0);
        CHECK(r.out.find("epoch=0 loss=") != std::string::npos);
        CHECK(r.out.find("checkpoint " + (dir / sub) + "/best.ckpt") != std::string::npos);
        CHECK(std::filesystem::exists(dir / (std::string(sub) + "/best.ckpt")));
    }
    const std::string log1 = slurp(dir / "r1/train.log");
    CHECK(log1 == slurp(dir / "r2/train.log"));
    CHECK(line_count(log1) == 3);  // max_epochs=3, eval_every=1
}

TEST_CASE("train usage errors exit with code 2") {
    ScratchDir dir("train_usage");
    const std::string cfg = prepare_corpus(dir, 4, 2);

    const CliResult bad_model = run({"train", "--config", cfg, "--model", "frobnicate", "--data",
                                     dir / "data", "--out", dir / "x"});
    CHECK(bad_model.code == 2);
    CHECK(bad_model.err.find("frobnicate") != std::string::npos);

    const CliResult no_data = run({"train", "--config", cfg, "--out", dir / "x"});
    CHECK(no_data.code == 2);
    CHECK(no_data.err.find("--data") != std::string::npos);

    const CliResult bad_key = run({"train", "--config", cfg, "--data", dir / "data", "--seed",
                                   "not-a-number", "--out", dir / "x"});
    CHECK(bad_key.code == 2);
}

TEST_CASE("a missing dataset file is a runtime failure, exit 1") {
    ScratchDir dir("train_missing");
    write_file(dir / "tiny.cfg", kTinyConfig);
    const CliResult r = run({"train", "--config", dir / "tiny.cfg", "--data", dir / "nowhere",
                             "--out", dir / "x"});
    CHECK(r.code == 1);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

TEST_CASE("eval prints the exact metric report for the given files") {
    ScratchDir dir("eval_golden");
    const std::string pred = dir / "pred.tsv";
    const std::string ref = dir / "ref.tsv";
    write_file(pred, "v1\ta cat sat on the mat\nv2\tthe dog ran fast\n");
    write_file(ref, "v1\ta cat sat on the mat\nv2\tthe dog ran very fast\n");

    const MetricReport want = evaluate(pred, ref);
    char expected[128];
    std::snprintf(expected, sizeof expected, "cider=%.6f bleu4=%.6f r4=%.6f\n", want.cider_d,
                  want.bleu4, want.r4);
    const CliResult r = run({"eval", "--pred", pred, "--ref", ref});
    CHECK(r.code == 0);
    CHECK(r.out == expected);

    const CliResult self = run({"eval", "--pred", ref, "--ref", ref});
    CHECK(self.code == 0);
    CHECK(self.out.find("bleu4=1.000000") != std::string::npos);
}

TEST_CASE("eval names the video missing a reference and exits 1") {
    ScratchDir dir("eval_missing");
    write_file(dir / "pred.tsv", "ghost_video\tsome words here\n");
    write_file(dir / "ref.tsv", "other\tsome words here\n");
    const CliResult r = run({"eval", "--pred", dir / "pred.tsv", "--ref", dir / "ref.tsv"});
    CHECK(r.code == 1);
    CHECK(r.err.find("ghost_video") != std::string::npos);
}

// ---------------------------------------------------------------------------
// decode
// ---------------------------------------------------------------------------

TEST_CASE("decode is deterministic and its output round-trips through eval") {
    ScratchDir dir("decode_roundtrip");
    const std::string cfg = prepare_corpus(dir);
    REQUIRE(run({"train", "--config", cfg, "--data", dir / "data", "--out", dir / "run"}).code ==
            0);
    const std::string ckpt = dir / "run/best.ckpt";
    for (const char* f : {"p1.tsv", "p2.tsv"}) {
        const CliResult r =
            run({"decode", "--checkpoint", ckpt, "--data", dir / "data/val.jsonl", "--out",
                 dir / f});
        REQUIRE(r.code == 0);
        CHECK(r.out == "wrote 4 paragraphs to " + (dir / f) + "\n");
    }
    CHECK(slurp(dir / "p1.tsv") == slurp(dir / "p2.tsv"));

    const CliResult scored =
        run({"eval", "--pred", dir / "p1.tsv", "--ref", dir / "data/val_refs.tsv"});
    CHECK(scored.code == 0);
    CHECK(scored.out.rfind("cider=", 0) == 0);
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

TEST_CASE("gradcheck passes all four kinds and reports per-op errors") {
    const CliResult r = run({"gradcheck"});
    CHECK(r.code == 0);
    CHECK(r.out.find("gradcheck: PASS") != std::string::npos);
    std::size_t passes = 0;
    for (std::size_t pos = 0; (pos = r.out.find("status=PASS", pos)) != std::string::npos; ++pos)
        ++passes;
    CHECK(passes == 4);
    CHECK(r.out.find("kind=mart op=emb.word max_rel_err=") != std::string::npos);
    CHECK(r.out.find("kind=vanilla op=dec.0.cross.wq max_rel_err=") != std::string::npos);
    CHECK(r.out.find("kind=xl op=rel.table max_rel_err=") != std::string::npos);
    CHECK(r.out.find(" FAIL ") == std::string::npos);
}

// ---------------------------------------------------------------------------
// ablate
// ---------------------------------------------------------------------------

TEST_CASE("ablate emits one row per grid cell with the cell config echoed") {
    ScratchDir dir("ablate_grid");
    const std::string cfg = prepare_corpus(dir, 6, 2);
    const CliResult r = run({"ablate", "--config", cfg, "--data", dir / "data", "--out",
                             dir / "ab", "--grid", "recurrence=on,off"});
    REQUIRE(r.code == 0);
    const std::vector<std::string> rows = lines_of(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].rfind("layers=1 memory_len=1 recurrence=on ", 0) == 0);
    CHECK(rows[1].rfind("layers=1 memory_len=1 recurrence=off ", 0) == 0);
    for (const auto& row : rows) {
        CHECK(row.find(" cider=") != std::string::npos);
        CHECK(row.find(" bleu4=") != std::string::npos);
        CHECK(row.find(" r4=") != std::string::npos);
    }
    CHECK(slurp(dir / "ab/ablation.log") == r.out);
    CHECK(std::filesystem::exists(dir / "ab/cell_l1_m1_re/best.ckpt"));
    CHECK(std::filesystem::exists(dir / "ab/cell_l1_m1_nore/best.ckpt"));
}

TEST_CASE("ablate rejects an unknown grid dimension with exit 2") {
    ScratchDir dir("ablate_bad");
    const std::string cfg = prepare_corpus(dir, 4, 2);
    const CliResult r = run({"ablate", "--config", cfg, "--data", dir / "data", "--out",
                             dir / "ab", "--grid", "width=1,2"});
    CHECK(r.code == 2);
    CHECK(r.err.find("width") != std::string::npos);
}

// ---------------------------------------------------------------------------
// retrieve
// ---------------------------------------------------------------------------

TEST_CASE("retrieve ranks the query first at similarity 1.0 and a twin record at 1.0") {
    ScratchDir dir("retrieve_self");
    const std::string cfg = prepare_corpus(dir);
    REQUIRE(run({"train", "--config", cfg, "--data", dir / "data", "--out", dir / "run"}).code ==
            0);

    // Duplicate the first validation record under a new id: identical inputs
    // must produce an identical memory state.
    const std::string val = slurp(dir / "data/val.jsonl");
    const std::string first = val.substr(0, val.find('\n') + 1);
    REQUIRE(first.find("\"video_id\":\"val_0\"") != std::string::npos);
    std::string twin = first;
    twin.replace(twin.find("val_0"), 5, "val_0_twin");
    write_file(dir / "with_twin.jsonl", val + twin);

    const CliResult r = run({"retrieve", "--checkpoint", dir / "run/best.ckpt", "--data",
                             dir / "with_twin.jsonl", "--query-id", "val_0", "--k", "3"});
    REQUIRE(r.code == 0);
    const std::vector<std::string> rows = lines_of(r.out);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "1\tval_0\t1.000000");
    CHECK(rows[1] == "2\tval_0_twin\t1.000000");

    // Oversized k clamps to the corpus size.
    const CliResult all = run({"retrieve", "--checkpoint", dir / "run/best.ckpt", "--data",
                               dir / "with_twin.jsonl", "--query-id", "val_0", "--k", "999"});
    REQUIRE(all.code == 0);
    CHECK(lines_of(all.out).size() == 5);
}

TEST_CASE("retrieve rejects checkpoints without a memory bank, exit 2") {
    ScratchDir dir("retrieve_kind");
    const std::string cfg = prepare_corpus(dir, 4, 2);
    REQUIRE(run({"train", "--config", cfg, "--model", "vanilla", "--data", dir / "data", "--out",
                 dir / "van"})
                .code == 0);
    const CliResult r = run({"retrieve", "--checkpoint", dir / "van/best.ckpt", "--data",
                             dir / "data/val.jsonl", "--query-id", "val_0"});
    CHECK(r.code == 2);
    CHECK(r.err.find("mart") != std::string::npos);

    const CliResult missing = run({"retrieve", "--checkpoint", dir / "van/best.ckpt", "--data",
                                   dir / "data/val.jsonl", "--query-id", "nope"});
    CHECK(missing.code == 2);  // still the kind error: checked before the query
}

TEST_CASE("retrieve reports an unknown query id as a runtime failure") {
    ScratchDir dir("retrieve_query");
    const std::string cfg = prepare_corpus(dir, 4, 2);
    REQUIRE(run({"train", "--config", cfg, "--data", dir / "data", "--out", dir / "run"}).code ==
            0);
    const CliResult r = run({"retrieve", "--checkpoint", dir / "run/best.ckpt", "--data",
                             dir / "data/val.jsonl", "--query-id", "nope"});
    CHECK(r.code == 1);
    CHECK(r.err.find("nope") != std::string::npos);
}

// ---------------------------------------------------------------------------
// flag handling and bundled configs
// ---------------------------------------------------------------------------

TEST_CASE("help exits 0; missing or unknown flags exit 2") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--help"}).out.find("synth") != std::string::npos);
    CHECK(run({"synth", "--help"}).code == 0);
    CHECK(run({}).code == 2);             // a subcommand is required
    CHECK(run({"bogus"}).code == 2);      // unknown subcommand
    CHECK(run({"eval"}).code == 2);       // --pred/--ref are required
    CHECK(run({"synth", "--frobnicate", "1"}).code == 2);
}

TEST_CASE("the bundled configs load and validate") {
    const std::string configs = std::string(MART_SOURCE_DIR) + "/configs";

    RunConfig full;
    load_config_file(full, configs + "/full.cfg");
    full.validate();
    CHECK(full.model.kind == ModelKind::mart);
    CHECK(full.model.d == 768);
    CHECK(full.model.layers == 2);
    CHECK(full.model.heads == 12);
    CHECK(full.model.memory_len == 1);
    CHECK(full.train.lr == doctest::Approx(1e-4));
    CHECK(full.train.batch_size == 16);
    CHECK(full.train.warmup_epochs == 5);
    CHECK(full.train.max_epochs == 50);

    RunConfig desk;
    load_config_file(desk, configs + "/desk.cfg");
    desk.validate();
    CHECK(desk.model.d == 64);
    CHECK(desk.model.heads == 4);
}
