// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset handling: tokenization, vocabulary construction, the line-delimited
// JSON dataset format with inline feature rows, truncation rules, and a
// synthetic coherence corpus whose later sentences can only be completed
// correctly by a model that carries state across segments.

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "mart/config.hpp"
#include "mart/tensor.hpp"

namespace mart {

struct DataError : std::runtime_error {
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

// Lowercase, strip punctuation to spaces, split on whitespace.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kUnk = 3;

    Vocabulary();

    int id(const std::string& token) const;  // kUnk for unknown tokens
    const std::string& token(int id) const;
    std::size_t size() const { return id_to_token_.size(); }
    bool contains(const std::string& token) const { return token_to_id_.count(token) != 0; }
    int add(const std::string& token);  // idempotent; returns the id

    std::vector<int> encode(const std::vector<std::string>& words) const;
    // Space-joined tokens; PAD/BOS/EOS skipped, UNK rendered literally.
    std::string decode(const std::vector<int>& ids) const;

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int> token_to_id_;
};

// Tokens occurring >= min_count times get ids in descending-count then
// lexicographic order; everything else maps to UNK at encode time.
Vocabulary build_vocab(const std::vector<std::string>& sentences, std::size_t min_count);

// ---------------------------------------------------------------------------
// Dataset file format: one JSON object per line,
//   {"video_id": str, "segments": [{"features": [[f,...],...], "sentence": str}, ...]}
// ---------------------------------------------------------------------------

struct RawSegment {
    std::vector<std::vector<float>> features;  // rows of d_feat floats
    std::string sentence;
};

struct RawVideo {
    std::string video_id;
    std::vector<RawSegment> segments;
};

std::vector<RawVideo> load_raw_dataset(const std::string& path);
void save_dataset(const std::string& path, const std::vector<RawVideo>& videos);

struct EncodedSegment {
    Tensor features;          // [t_video x d_feat]
    std::vector<int> tokens;  // BOS ... EOS, length <= max_text_len
    std::string sentence;     // reference text as written in the file
};

struct VideoExample {
    std::string video_id;
    std::vector<EncodedSegment> segments;
};

// Applies truncation (feature rows to max_video_len, BOS+words+EOS to
// max_text_len keeping the final EOS, segments to max_segments) and id
// encoding.
VideoExample encode_example(const RawVideo& raw, const Vocabulary& vocab, const ModelConfig& cfg);

std::vector<VideoExample> load_dataset(const std::string& path, const Vocabulary& vocab,
                                       const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Synthetic coherence corpus
// ---------------------------------------------------------------------------
//
// Each video fixes a latent actor and theme; segment features encode only the
// current event (verb + place), with the actor visible in segment 1 alone.
// Sentences after the first read "after <prev-verb>ing in the <prev-place>
// <pronoun> <verb>ed in the <place>", so the gerund, previous place and
// pronoun are predictable only from cross-segment history. history_flags
// marks exactly those tokens.

struct SyntheticSegmentMeta {
    std::string verb;   // base form of the current event's verb
    std::string place;
    std::vector<std::uint8_t> history_flags;  // one per sentence token
};

struct SyntheticMeta {
    std::string video_id;
    std::string actor;
    std::string theme;
    std::string cls;  // actor_theme retrieval class
    std::vector<SyntheticSegmentMeta> segments;
};

struct SyntheticCorpus {
    std::vector<RawVideo> videos;
    std::vector<SyntheticMeta> meta;
};

struct SyntheticDataset {
    SyntheticCorpus train;
    SyntheticCorpus val;
};

// Fully determined by (seed, n_train, n_val, d_feat); train and val share one
// event codebook so validation features live in the training feature space.
SyntheticDataset generate_synthetic(std::uint64_t seed, std::size_t n_train, std::size_t n_val,
                                    std::size_t d_feat);

void save_meta(const std::string& path, const std::vector<SyntheticMeta>& meta);
std::vector<SyntheticMeta> load_meta(const std::string& path);

// One line per video: video_id<TAB>sent_1<TAB>...<TAB>sent_T.
void save_refs_tsv(const std::string& path, const std::vector<RawVideo>& videos);

}  // namespace mart
