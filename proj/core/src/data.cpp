// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>

#include "json.hpp"
#include "mart/rng.hpp"

namespace mart {

using ordered_json = nlohmann::ordered_json;

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        const unsigned char u = static_cast<unsigned char>(ch);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);
    return words;
}

Vocabulary::Vocabulary() {
    add("<pad>");
    add("<bos>");
    add("<eos>");
    add("<unk>");
}

int Vocabulary::id(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
        throw DataError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(id_to_token_.size()));
    return id_to_token_[static_cast<std::size_t>(id)];
}

int Vocabulary::add(const std::string& token) {
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
    token_to_id_.emplace(token, id);
    return id;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& words) const {
    std::vector<int> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(id(w));
    return ids;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kPad || id == kBos || id == kEos) continue;
        if (!out.empty()) out.push_back(' ');
        out += token(id);
    }
    return out;
}

Vocabulary build_vocab(const std::vector<std::string>& sentences, std::size_t min_count) {
    if (sentences.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
    if (min_count == 0) throw DataError("min_count must be >= 1");
    std::map<std::string, std::size_t> counts;
    for (const auto& s : sentences)
        for (const auto& w : tokenize(s)) ++counts[w];

    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [tok, n] : counts)
        if (n >= min_count) kept.emplace_back(tok, n);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });

    Vocabulary vocab;
    for (const auto& [tok, n] : kept) vocab.add(tok);
    return vocab;
}

// ---------------------------------------------------------------------------
// Dataset file IO
// ---------------------------------------------------------------------------

namespace {

RawVideo parse_video_record(const ordered_json& j) {
    if (!j.is_object() || !j.contains("video_id") || !j.contains("segments"))
        throw DataError("record must be an object with video_id and segments");
    RawVideo video;
    video.video_id = j.at("video_id").get<std::string>();
    const auto& segs = j.at("segments");
    if (!segs.is_array() || segs.empty()) throw DataError("segments must be a non-empty array");
    for (const auto& s : segs) {
        if (!s.is_object() || !s.contains("features") || !s.contains("sentence"))
            throw DataError("segment must have features and sentence");
        RawSegment seg;
        seg.sentence = s.at("sentence").get<std::string>();
        const auto& rows = s.at("features");
        if (!rows.is_array() || rows.empty()) throw DataError("features must be a non-empty array of rows");
        for (const auto& row : rows) {
            if (!row.is_array() || row.empty()) throw DataError("feature row must be a non-empty array");
            std::vector<float> r;
            r.reserve(row.size());
            for (const auto& x : row) r.push_back(static_cast<float>(x.get<double>()));
            if (!seg.features.empty() && r.size() != seg.features.front().size())
                throw DataError("feature rows have inconsistent widths");
            seg.features.push_back(std::move(r));
        }
        video.segments.push_back(std::move(seg));
    }
    return video;
}

}  // namespace

std::vector<RawVideo> load_raw_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open dataset file '" + path + "'");
    std::vector<RawVideo> videos;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            videos.push_back(parse_video_record(ordered_json::parse(line)));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return videos;
}

void save_dataset(const std::string& path, const std::vector<RawVideo>& videos) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write dataset file '" + path + "'");
    for (const auto& v : videos) {
        ordered_json j;
        j["video_id"] = v.video_id;
        ordered_json segs = ordered_json::array();
        for (const auto& s : v.segments) {
            ordered_json seg;
            ordered_json rows = ordered_json::array();
            for (const auto& row : s.features) {
                ordered_json r = ordered_json::array();
                for (float x : row) r.push_back(static_cast<double>(x));
                rows.push_back(std::move(r));
            }
            seg["features"] = std::move(rows);
            seg["sentence"] = s.sentence;
            segs.push_back(std::move(seg));
        }
        j["segments"] = std::move(segs);
        out << j.dump() << '\n';
    }
}

VideoExample encode_example(const RawVideo& raw, const Vocabulary& vocab, const ModelConfig& cfg) {
    VideoExample out;
    out.video_id = raw.video_id;
    const std::size_t n_segments = std::min(raw.segments.size(), cfg.max_segments);
    for (std::size_t si = 0; si < n_segments; ++si) {
        const RawSegment& seg = raw.segments[si];
        if (seg.features.empty()) throw DataError("segment without feature rows in " + raw.video_id);
        if (seg.features.front().size() != cfg.d_feat)
            throw DataError("features have width " + std::to_string(seg.features.front().size()) +
                            " but the config wants d_feat=" + std::to_string(cfg.d_feat));
        const std::size_t rows = std::min(seg.features.size(), cfg.max_video_len);
        Tensor feats({rows, cfg.d_feat});
        for (std::size_t i = 0; i < rows; ++i)
            for (std::size_t j = 0; j < cfg.d_feat; ++j) feats.at(i, j) = seg.features[i][j];

        std::vector<std::string> words = tokenize(seg.sentence);
        if (words.size() + 2 > cfg.max_text_len) words.resize(cfg.max_text_len - 2);
        std::vector<int> tokens;
        tokens.reserve(words.size() + 2);
        tokens.push_back(Vocabulary::kBos);
        for (const auto& w : words) tokens.push_back(vocab.id(w));
        tokens.push_back(Vocabulary::kEos);

        out.segments.push_back(EncodedSegment{std::move(feats), std::move(tokens), seg.sentence});
    }
    return out;
}

std::vector<VideoExample> load_dataset(const std::string& path, const Vocabulary& vocab,
                                       const ModelConfig& cfg) {
    const std::vector<RawVideo> raw = load_raw_dataset(path);
    std::vector<VideoExample> out;
    out.reserve(raw.size());
    for (const auto& v : raw) out.push_back(encode_example(v, vocab, cfg));
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic coherence corpus
// ---------------------------------------------------------------------------

namespace {

struct VerbForms {
    const char* base;
    const char* past;
    const char* gerund;
};

struct Theme {
    const char* name;
    VerbForms verbs[5];
};

constexpr Theme kThemes[4] = {
    {"sports",
     {{"jump", "jumped", "jumping"},
      {"stretch", "stretched", "stretching"},
      {"sprint", "sprinted", "sprinting"},
      {"vault", "vaulted", "vaulting"},
      {"skate", "skated", "skating"}}},
    {"cooking",
     {{"cook", "cooked", "cooking"},
      {"stir", "stirred", "stirring"},
      {"bake", "baked", "baking"},
      {"season", "seasoned", "seasoning"},
      {"knead", "kneaded", "kneading"}}},
    {"music",
     {{"strum", "strummed", "strumming"},
      {"drum", "drummed", "drumming"},
      {"hum", "hummed", "humming"},
      {"clap", "clapped", "clapping"},
      {"whistle", "whistled", "whistling"}}},
    {"crafts",
     {{"paint", "painted", "painting"},
      {"carve", "carved", "carving"},
      {"sketch", "sketched", "sketching"},
      {"fold", "folded", "folding"},
      {"glue", "glued", "gluing"}}},
};

constexpr const char* kActors[4] = {"man", "woman", "group", "dog"};
constexpr const char* kPronouns[4] = {"he", "she", "they", "it"};
constexpr const char* kPlaces[8] = {"park", "kitchen", "studio", "workshop",
                                    "garden", "hall", "gym", "yard"};

// Segment count distribution targeting a mean of 3.65 segments per video.
constexpr double kSegmentWeights[5] = {0.22, 0.25, 0.28, 0.16, 0.09};  // counts 2..6

struct Codebook {
    std::vector<std::vector<float>> verb;   // 20 x d_feat
    std::vector<std::vector<float>> place;  // 8 x d_feat
    std::vector<std::vector<float>> actor;  // 4 x d_feat
};

std::vector<float> gaussian_row(Rng& rng, std::size_t d) {
    std::vector<float> row(d);
    for (auto& x : row) x = static_cast<float>(rng.gaussian());
    return row;
}

Codebook make_codebook(Rng& rng, std::size_t d_feat) {
    Codebook cb;
    for (int i = 0; i < 20; ++i) cb.verb.push_back(gaussian_row(rng, d_feat));
    for (int i = 0; i < 8; ++i) cb.place.push_back(gaussian_row(rng, d_feat));
    for (int i = 0; i < 4; ++i) cb.actor.push_back(gaussian_row(rng, d_feat));
    return cb;
}

SyntheticCorpus make_corpus(SeedStreams& streams, const std::string& split, std::size_t n_videos,
                            const Codebook& cb, std::size_t d_feat) {
    SyntheticCorpus corpus;
    const std::vector<double> seg_weights(kSegmentWeights, kSegmentWeights + 5);
    for (std::size_t vi = 0; vi < n_videos; ++vi) {
        Rng rng = streams.stream(split, vi);
        const std::size_t actor = rng.uniform_int(4);
        const std::size_t theme = rng.uniform_int(4);
        const std::size_t n_segs = 2 + rng.weighted_choice(seg_weights);

        RawVideo video;
        video.video_id = split + "_" + std::to_string(vi);
        SyntheticMeta meta;
        meta.video_id = video.video_id;
        meta.actor = kActors[actor];
        meta.theme = kThemes[theme].name;
        meta.cls = meta.actor + "_" + meta.theme;

        std::size_t prev_verb = 0, prev_place = 0;
        for (std::size_t si = 0; si < n_segs; ++si) {
            std::size_t verb = rng.uniform_int(5);
            if (si > 0 && verb == prev_verb) verb = (verb + 1 + rng.uniform_int(4)) % 5;
            const std::size_t place = rng.uniform_int(8);
            const VerbForms& vf = kThemes[theme].verbs[verb];

            RawSegment seg;
            const std::size_t rows = 3 + rng.uniform_int(3);
            for (std::size_t r = 0; r < rows; ++r) {
                std::vector<float> row(d_feat);
                const std::vector<float>& vcode = cb.verb[theme * 5 + verb];
                const std::vector<float>& pcode = cb.place[place];
                for (std::size_t j = 0; j < d_feat; ++j) {
                    row[j] = vcode[j] + pcode[j] + static_cast<float>(rng.gaussian() * 0.1);
                    if (si == 0) row[j] += cb.actor[actor][j];
                }
                seg.features.push_back(std::move(row));
            }

            SyntheticSegmentMeta seg_meta;
            seg_meta.verb = vf.base;
            seg_meta.place = kPlaces[place];
            if (si == 0) {
                // "the <actor> <verb-past> in the <place>"
                seg.sentence = std::string("the ") + kActors[actor] + " " + vf.past + " in the " +
                               kPlaces[place];
                seg_meta.history_flags.assign(6, 0);
            } else {
                // "after <prev-gerund> in the <prev-place> <pronoun> <verb-past> in the <place>"
                const VerbForms& pf = kThemes[theme].verbs[prev_verb];
                seg.sentence = std::string("after ") + pf.gerund + " in the " + kPlaces[prev_place] +
                               " " + kPronouns[actor] + " " + vf.past + " in the " + kPlaces[place];
                seg_meta.history_flags = {0, 1, 0, 0, 1, 1, 0, 0, 0, 0};
            }
            video.segments.push_back(std::move(seg));
            meta.segments.push_back(std::move(seg_meta));
            prev_verb = verb;
            prev_place = place;
        }
        corpus.videos.push_back(std::move(video));
        corpus.meta.push_back(std::move(meta));
    }
    return corpus;
}

}  // namespace

SyntheticDataset generate_synthetic(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                                    std::size_t d_feat) {
    if (n_train < 2 || n_val < 1) throw DataError("synthetic corpus needs at least 2 train and 1 val videos");
    SeedStreams streams(seed);
    Rng cb_rng = streams.stream("codebook");
    const Codebook cb = make_codebook(cb_rng, d_feat);
    SyntheticDataset out;
    out.train = make_corpus(streams, "train", n_train, cb, d_feat);
    out.val = make_corpus(streams, "val", n_val, cb, d_feat);
    return out;
}

void save_meta(const std::string& path, const std::vector<SyntheticMeta>& meta) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write meta file '" + path + "'");
    for (const auto& m : meta) {
        ordered_json j;
        j["video_id"] = m.video_id;
        j["actor"] = m.actor;
        j["theme"] = m.theme;
        j["class"] = m.cls;
        ordered_json segs = ordered_json::array();
        for (const auto& s : m.segments) {
            ordered_json seg;
            seg["verb"] = s.verb;
            seg["place"] = s.place;
            ordered_json flags = ordered_json::array();
            for (std::uint8_t f : s.history_flags) flags.push_back(static_cast<int>(f));
            seg["history_flags"] = std::move(flags);
            segs.push_back(std::move(seg));
        }
        j["segments"] = std::move(segs);
        out << j.dump() << '\n';
    }
}

std::vector<SyntheticMeta> load_meta(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open meta file '" + path + "'");
    std::vector<SyntheticMeta> metas;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            const ordered_json j = ordered_json::parse(line);
            SyntheticMeta m;
            m.video_id = j.at("video_id").get<std::string>();
            m.actor = j.at("actor").get<std::string>();
            m.theme = j.at("theme").get<std::string>();
            m.cls = j.at("class").get<std::string>();
            for (const auto& s : j.at("segments")) {
                SyntheticSegmentMeta sm;
                sm.verb = s.at("verb").get<std::string>();
                sm.place = s.at("place").get<std::string>();
                for (const auto& f : s.at("history_flags"))
                    sm.history_flags.push_back(static_cast<std::uint8_t>(f.get<int>()));
                m.segments.push_back(std::move(sm));
            }
            metas.push_back(std::move(m));
        } catch (const std::exception& e) {
            throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return metas;
}

void save_refs_tsv(const std::string& path, const std::vector<RawVideo>& videos) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write references file '" + path + "'");
    for (const auto& v : videos) {
        out << v.video_id;
        for (const auto& s : v.segments) out << '\t' << s.sentence;
        out << '\n';
    }
}

}  // namespace mart
