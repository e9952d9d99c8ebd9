// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "mart/config.hpp"
#include "mart/data.hpp"

using namespace mart;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

RawVideo tiny_video(std::size_t segments, std::size_t rows, std::size_t d_feat) {
    RawVideo v;
    v.video_id = "vid";
    for (std::size_t s = 0; s < segments; ++s) {
        RawSegment seg;
        for (std::size_t r = 0; r < rows; ++r) {
            std::vector<float> row(d_feat);
            for (std::size_t j = 0; j < d_feat; ++j)
                row[j] = 0.25f * static_cast<float>(s + 1) + 0.125f * static_cast<float>(r * d_feat + j);
            seg.features.push_back(std::move(row));
        }
        seg.sentence = "segment number " + std::to_string(s);
        v.segments.push_back(std::move(seg));
    }
    return v;
}

}  // namespace

TEST_CASE("tokenize lowercases and strips punctuation to spaces") {
    const auto words = tokenize("The man, who RAN -- quickly!");
    const std::vector<std::string> want{"the", "man", "who", "ran", "quickly"};
    CHECK(words == want);
    CHECK(tokenize("").empty());
    CHECK(tokenize("...").empty());
}

TEST_CASE("vocabulary specials are fixed") {
    Vocabulary v;
    CHECK(v.size() == 4);
    CHECK(v.id("<pad>") == Vocabulary::kPad);
    CHECK(v.id("<bos>") == Vocabulary::kBos);
    CHECK(v.id("<eos>") == Vocabulary::kEos);
    CHECK(v.id("<unk>") == Vocabulary::kUnk);
    CHECK(v.id("anything") == Vocabulary::kUnk);
    CHECK_THROWS_AS(v.token(99), DataError);
}

TEST_CASE("build_vocab: min_count=1 keeps every distinct token") {
    Vocabulary v = build_vocab({"a b c", "c d"}, 1);
    CHECK(v.size() == 4 + 4);
    for (const char* t : {"a", "b", "c", "d"}) CHECK(v.contains(t));
}

TEST_CASE("build_vocab: threshold maps rare words to UNK") {
    Vocabulary v = build_vocab({"a a b"}, 2);
    CHECK(v.size() == 5);  // specials + a
    CHECK(v.contains("a"));
    CHECK_FALSE(v.contains("b"));
    CHECK(v.id("b") == Vocabulary::kUnk);
}

TEST_CASE("build_vocab: ids ordered by count desc then lexicographic, deterministic") {
    Vocabulary v1 = build_vocab({"pear pear apple banana banana cherry"}, 1);
    Vocabulary v2 = build_vocab({"pear pear apple banana banana cherry"}, 1);
    // banana and pear tie at 2 -> banana first; then apple/cherry tie at 1
    CHECK(v1.id("banana") == 4);
    CHECK(v1.id("pear") == 5);
    CHECK(v1.id("apple") == 6);
    CHECK(v1.id("cherry") == 7);
    for (int i = 0; i < 8; ++i) CHECK(v1.token(i) == v2.token(i));
    CHECK_THROWS_AS(build_vocab({}, 1), DataError);
}

TEST_CASE("encode then decode reproduces the tokenized sentence") {
    Vocabulary v = build_vocab({"the man jumped in the park"}, 1);
    const auto words = tokenize("the man jumped in the park");
    const auto ids = v.encode(words);
    CHECK(v.decode(ids) == "the man jumped in the park");
}

TEST_CASE("encode_example: under-limit input gains only BOS/EOS framing") {
    ModelConfig cfg;
    cfg.d_feat = 4;
    Vocabulary v = build_vocab({"segment number 0"}, 1);
    RawVideo raw = tiny_video(1, 2, 4);
    VideoExample ex = encode_example(raw, v, cfg);
    REQUIRE(ex.segments.size() == 1);
    const auto& tokens = ex.segments[0].tokens;
    REQUIRE(tokens.size() == 5);  // BOS + 3 words + EOS
    CHECK(tokens.front() == Vocabulary::kBos);
    CHECK(tokens.back() == Vocabulary::kEos);
    CHECK(ex.segments[0].features.dim(0) == 2);
    CHECK(ex.segments[0].features.dim(1) == 4);
    CHECK(ex.segments[0].features.at(1, 3) == raw.segments[0].features[1][3]);
}

TEST_CASE("encode_example: 25-word sentence truncates to max_text_len ending in EOS") {
    ModelConfig cfg;
    cfg.d_feat = 2;
    cfg.max_text_len = 20;
    std::string sent;
    for (int i = 0; i < 25; ++i) sent += "w" + std::to_string(i) + " ";
    Vocabulary v = build_vocab({sent}, 1);
    RawVideo raw;
    raw.video_id = "t";
    raw.segments.push_back(RawSegment{{{0.f, 0.f}}, sent});
    VideoExample ex = encode_example(raw, v, cfg);
    const auto& tokens = ex.segments[0].tokens;
    CHECK(tokens.size() == 20);
    CHECK(tokens.front() == Vocabulary::kBos);
    CHECK(tokens.back() == Vocabulary::kEos);
    CHECK(tokens[1] == v.id("w0"));
    CHECK(tokens[18] == v.id("w17"));
}

TEST_CASE("encode_example: segment and feature-row truncation keep the head") {
    ModelConfig cfg;
    cfg.d_feat = 4;
    cfg.max_segments = 6;
    cfg.max_video_len = 3;
    Vocabulary v = build_vocab({"segment number 0"}, 1);
    RawVideo raw = tiny_video(8, 5, 4);
    VideoExample ex = encode_example(raw, v, cfg);
    CHECK(ex.segments.size() == 6);
    CHECK(ex.segments[0].features.dim(0) == 3);
    // order check: kept segments are the first six
    CHECK(ex.segments[5].sentence == "segment number 5");

    // truncation is idempotent: re-encoding an already-encoded-shaped raw
    RawVideo again = tiny_video(6, 3, 4);
    VideoExample ex2 = encode_example(again, v, cfg);
    CHECK(ex2.segments.size() == 6);
    CHECK(ex2.segments[0].features.dim(0) == 3);
}

TEST_CASE("encode_example: d_feat mismatch is an error") {
    ModelConfig cfg;
    cfg.d_feat = 8;
    Vocabulary v = build_vocab({"x"}, 1);
    RawVideo raw = tiny_video(1, 1, 4);
    CHECK_THROWS_WITH_AS(encode_example(raw, v, cfg), doctest::Contains("d_feat"), DataError);
}

TEST_CASE("dataset save/load round-trip preserves sentences and float values") {
    const std::string path = "test_data_roundtrip.jsonl";
    std::vector<RawVideo> videos{tiny_video(2, 2, 3), tiny_video(1, 1, 3)};
    videos[0].video_id = "a";
    videos[1].video_id = "b";
    videos[1].segments[0].features[0][0] = 0.1f;  // not exactly representable
    save_dataset(path, videos);
    const auto loaded = load_raw_dataset(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].video_id == "a");
    CHECK(loaded[1].segments[0].features[0][0] == videos[1].segments[0].features[0][0]);
    CHECK(loaded[0].segments[1].sentence == videos[0].segments[1].sentence);
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t j = 0; j < 3; ++j)
            CHECK(loaded[0].segments[1].features[r][j] == videos[0].segments[1].features[r][j]);

    // format check: field names appear in the documented order
    const std::string body = slurp(path);
    CHECK(body.find("{\"video_id\":") == 0);
    CHECK(body.find("\"segments\":") != std::string::npos);
    CHECK(body.find("\"features\":") != std::string::npos);
    CHECK(body.find("\"sentence\":") != std::string::npos);
    std::remove(path.c_str());
}

TEST_CASE("malformed dataset line is reported with its line number") {
    const std::string path = "test_data_malformed.jsonl";
    {
        std::ofstream out(path);
        for (int i = 0; i < 6; ++i)
            out << R"({"video_id": "v)" << i
                << R"(", "segments": [{"features": [[1.0]], "sentence": "s"}]})" << '\n';
        out << "{ this is not json\n";
    }
    CHECK_THROWS_WITH_AS(load_raw_dataset(path), doctest::Contains(":7:"), DataError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_raw_dataset("missing_file.jsonl"), DataError);
}

TEST_CASE("synthetic generator: same seed gives byte-identical files") {
    SyntheticDataset a = generate_synthetic(99, 10, 4, 8);
    SyntheticDataset b = generate_synthetic(99, 10, 4, 8);
    save_dataset("synth_a.jsonl", a.train.videos);
    save_dataset("synth_b.jsonl", b.train.videos);
    CHECK(slurp("synth_a.jsonl") == slurp("synth_b.jsonl"));
    std::remove("synth_a.jsonl");
    std::remove("synth_b.jsonl");

    SyntheticDataset c = generate_synthetic(100, 10, 4, 8);
    CHECK(c.train.videos[0].segments[0].features[0] != a.train.videos[0].segments[0].features[0]);
}

TEST_CASE("synthetic generator: mean segment count near 3.65 over 500 videos") {
    SyntheticDataset d = generate_synthetic(7, 500, 2, 8);
    double total = 0;
    for (const auto& v : d.train.videos) total += static_cast<double>(v.segments.size());
    const double mean = total / 500.0;
    CHECK(mean > 3.35);
    CHECK(mean < 3.95);
    for (const auto& v : d.train.videos) {
        CHECK(v.segments.size() >= 2);
        CHECK(v.segments.size() <= 6);
    }
}

TEST_CASE("synthetic generator: history flags mark exactly the cross-segment tokens") {
    SyntheticDataset d = generate_synthetic(11, 40, 2, 8);
    for (std::size_t vi = 0; vi < d.train.videos.size(); ++vi) {
        const RawVideo& video = d.train.videos[vi];
        const SyntheticMeta& meta = d.train.meta[vi];
        REQUIRE(meta.segments.size() == video.segments.size());
        for (std::size_t si = 0; si < video.segments.size(); ++si) {
            const auto words = tokenize(video.segments[si].sentence);
            const auto& flags = meta.segments[si].history_flags;
            REQUIRE(flags.size() == words.size());
            if (si == 0) {
                for (auto f : flags) CHECK(f == 0);
                CHECK(words[1] == meta.actor);
            } else {
                // "after <gerund> in the <prev-place> <pronoun> ..."
                CHECK(flags[1] == 1);
                CHECK(flags[4] == 1);
                CHECK(flags[5] == 1);
                std::size_t flagged = 0;
                for (auto f : flags) flagged += f;
                CHECK(flagged == 3);
                CHECK(words[4] == meta.segments[si - 1].place);
                // gerund token derives from the previous segment's verb
                const std::string& prev_verb = meta.segments[si - 1].verb;
                CHECK(words[1].substr(0, 3) == prev_verb.substr(0, 3));
                CHECK(words[1].size() >= prev_verb.size());
            }
        }
    }
}

TEST_CASE("synthetic generator: actor/pronoun pairing and class labels") {
    SyntheticDataset d = generate_synthetic(13, 60, 2, 8);
    std::set<std::string> classes;
    for (const auto& meta : d.train.meta) {
        classes.insert(meta.cls);
        CHECK(meta.cls == meta.actor + "_" + meta.theme);
    }
    CHECK(classes.size() > 4);  // several actor x theme combinations show up
}

TEST_CASE("meta file round-trip") {
    SyntheticDataset d = generate_synthetic(17, 5, 2, 8);
    save_meta("test_meta.jsonl", d.train.meta);
    const auto loaded = load_meta("test_meta.jsonl");
    REQUIRE(loaded.size() == 5);
    CHECK(loaded[2].video_id == d.train.meta[2].video_id);
    CHECK(loaded[2].actor == d.train.meta[2].actor);
    CHECK(loaded[2].segments.size() == d.train.meta[2].segments.size());
    CHECK(loaded[2].segments[1].history_flags == d.train.meta[2].segments[1].history_flags);
    std::remove("test_meta.jsonl");
}

TEST_CASE("refs tsv: one tab-separated line per video") {
    SyntheticDataset d = generate_synthetic(19, 3, 2, 8);
    save_refs_tsv("test_refs.tsv", d.train.videos);
    std::ifstream in("test_refs.tsv");
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        std::size_t tabs = 0;
        for (char c : line) tabs += c == '\t';
        CHECK(tabs == d.train.videos[lines].segments.size());
        CHECK(line.substr(0, d.train.videos[lines].video_id.size()) == d.train.videos[lines].video_id);
        ++lines;
    }
    CHECK(lines == 3);
    std::remove("test_refs.tsv");
}

TEST_CASE("loaded segment counts match the generator record") {
    SyntheticDataset d = generate_synthetic(23, 12, 2, 6);
    save_dataset("test_counts.jsonl", d.train.videos);
    const auto loaded = load_raw_dataset("test_counts.jsonl");
    REQUIRE(loaded.size() == 12);
    for (std::size_t i = 0; i < 12; ++i)
        CHECK(loaded[i].segments.size() == d.train.meta[i].segments.size());
    std::remove("test_counts.jsonl");
}

TEST_CASE("load_dataset applies encoding over the whole file") {
    ModelConfig cfg;
    cfg.d_feat = 6;
    SyntheticDataset d = generate_synthetic(29, 4, 2, 6);
    save_dataset("test_load.jsonl", d.train.videos);
    std::vector<std::string> sentences;
    for (const auto& v : d.train.videos)
        for (const auto& s : v.segments) sentences.push_back(s.sentence);
    Vocabulary vocab = build_vocab(sentences, 1);
    const auto examples = load_dataset("test_load.jsonl", vocab, cfg);
    REQUIRE(examples.size() == 4);
    for (const auto& ex : examples)
        for (const auto& seg : ex.segments) {
            CHECK(seg.tokens.front() == Vocabulary::kBos);
            CHECK(seg.tokens.back() == Vocabulary::kEos);
            for (std::size_t i = 1; i + 1 < seg.tokens.size(); ++i)
                CHECK(seg.tokens[i] != Vocabulary::kUnk);  // closed grammar, min_count 1
        }
    std::remove("test_load.jsonl");
}
