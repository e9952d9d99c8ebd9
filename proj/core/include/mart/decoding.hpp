// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Greedy autoregressive paragraph decoding. Each segment starts from BOS and
// extends by the argmax next token (ties broken toward the lowest id) until
// EOS or the window limit; the recurrent state is advanced exactly once per
// segment, from the completed window.

#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "mart/config.hpp"
#include "mart/data.hpp"
#include "mart/model.hpp"

namespace mart {

// Argmax with deterministic tie-breaking: the lowest index among maxima.
template <typename T>
std::size_t argmax_lowest(const T* row, std::size_t n) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

// The decode loop over an abstract next-token scorer, separated from the
// model so the argmax/stop rules are testable with rigged scores.
// `next_scores(window)` returns one score per vocabulary entry for the token
// following `window`. Returns the full window: BOS, words, and EOS when it
// was emitted before the length limit.
template <typename F>
std::vector<int> greedy_decode_window(F&& next_scores, const DecodeConfig& dc) {
    std::vector<int> window{dc.bos_id};
    while (window.size() < dc.max_text_len) {
        const auto scores = next_scores(window);
        const int next = static_cast<int>(argmax_lowest(scores.data(), scores.size()));
        window.push_back(next);
        if (next == dc.eos_id) break;
    }
    return window;
}

// Decodes one segment and advances `state` once, from the completed window.
// The in-loop forwards run on scratch copies so partial windows never touch
// the carried state.
template <typename T>
std::vector<int> greedy_decode_segment(CaptioningModel<T>& model, const TensorT<T>& features,
                                       ModelState<T>& state, const DecodeConfig& dc) {
    DecodeConfig eff = dc;
    eff.max_text_len = std::min(dc.max_text_len, model.cfg.max_text_len);
    std::vector<int> window = greedy_decode_window(
        [&](const std::vector<int>& w) {
            ModelState<T> scratch = state;
            TensorT<T> logits = model.step_forward(features, w, scratch);
            const std::size_t last = logits.dim(0) - 1;
            std::vector<T> row(logits.data() + last * logits.dim(1),
                               logits.data() + (last + 1) * logits.dim(1));
            return row;
        },
        eff);
    (void)model.step_forward(features, window, state);
    return window;
}

struct ParagraphPrediction {
    std::string video_id;
    std::vector<std::string> sentences;
};

template <typename T>
ParagraphPrediction decode_paragraph(CaptioningModel<T>& model, const VideoExample& ex,
                                     const Vocabulary& vocab, const DecodeConfig& dc) {
    if (ex.segments.empty()) throw ShapeError("video " + ex.video_id + " has no segments");
    ParagraphPrediction out;
    out.video_id = ex.video_id;
    ModelState<T> state = model.initial_state();
    for (const auto& seg : ex.segments) {
        TensorT<T> features = cast_tensor<T>(seg.features);
        std::vector<int> window = greedy_decode_segment(model, features, state, dc);
        out.sentences.push_back(vocab.decode(window));
    }
    return out;
}

inline void save_predictions_tsv(const std::string& path,
                                 const std::vector<ParagraphPrediction>& preds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write predictions file " + path);
    for (const auto& p : preds) {
        out << p.video_id;
        for (const auto& s : p.sentences) out << '\t' << s;
        out << '\n';
    }
}

}  // namespace mart
