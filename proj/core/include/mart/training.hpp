// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// The training loop: seeded shuffling, teacher-forced paragraph loss with
// gradient accumulation over the batch, global-norm clipping, Adam with
// per-epoch warmup, greedy validation decoding with CIDEr-D early stopping,
// and best-checkpoint retention.

#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mart/data.hpp"
#include "mart/metrics.hpp"
#include "mart/model.hpp"
#include "mart/optimizer.hpp"

namespace mart {

struct TrainError : std::runtime_error {
    explicit TrainError(const std::string& what) : std::runtime_error(what) {}
};

struct TrainResult {
    std::vector<std::string> log_lines;  // append-only metric log
    double best_cider = -std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::size_t epochs_run = 0;
    std::string checkpoint_path;  // best model, written under cfg.out_dir
};

// Trains in place; on return `model` holds the parameters of the best
// validation epoch (by CIDEr-D) and that model is saved as
// <out_dir>/best.ckpt. Evaluation runs every cfg.train.eval_every epochs and
// on the final epoch; `patience` counts non-improving evaluations. Throws
// TrainError on a non-finite loss.
TrainResult train(CaptioningModel<float>& model, OptimizerState& opt,
                  const std::vector<VideoExample>& train_set,
                  const std::vector<VideoExample>& val_set, const Vocabulary& vocab,
                  const RunConfig& cfg, std::ostream* live_log = nullptr);

// Greedy-decodes every validation video and scores the joined paragraphs
// against their references.
MetricReport validation_report(CaptioningModel<float>& model,
                               const std::vector<VideoExample>& val_set, const Vocabulary& vocab,
                               const DecodeConfig& dc);

struct AccuracyBreakdown {
    double overall = 0.0;        // fraction of next-token argmax hits
    double history = 0.0;        // same, restricted to history-flagged words
    std::size_t total = 0;       // positions counted overall
    std::size_t history_total = 0;
};

// Teacher-forced next-token accuracy under greedy argmax. When `metas` is
// given (aligned by video_id), positions whose target word carries a
// history flag are also scored separately.
AccuracyBreakdown teacher_forced_accuracy(CaptioningModel<float>& model,
                                          const std::vector<VideoExample>& data,
                                          const std::vector<SyntheticMeta>* metas = nullptr);

}  // namespace mart
