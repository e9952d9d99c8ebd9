// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Paragraph-level evaluation: corpus BLEU@4 with clipped n-gram precisions,
// CIDEr-D (tf-idf 1-4-gram cosine with gaussian length penalty), and R@4
// 4-gram repetition. Paragraphs are compared as whole token sequences after
// the shared tokenizer.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "mart/data.hpp"

namespace mart {

struct MetricReport {
    double bleu4 = 0.0;
    double cider_d = 0.0;
    double r4 = 0.0;
};

// Corpus BLEU@4 over paragraphs, aligned by index; every video needs at
// least one reference. Clipped n-gram counts are aggregated over the whole
// corpus before the geometric mean; zero-count buckets and the brevity
// penalty length are floored at 1e-9.
double bleu4(const std::vector<std::string>& predictions,
             const std::vector<std::vector<std::string>>& references);

// CIDEr-D over paragraphs: tf-idf vectors for 1..4-grams with idf from the
// reference corpus, candidate counts clipped to the reference, cosine
// similarity scaled by exp(-(len_c-len_r)^2 / (2*6^2)), averaged over n and
// references, times 10, then averaged over videos.
double cider_d(const std::vector<std::string>& predictions,
               const std::vector<std::vector<std::string>>& references);

// Mean over paragraphs of (total 4-gram occurrences - distinct 4-grams) /
// total; a paragraph under four tokens scores 0.
double r4_repetition(const std::vector<std::string>& predictions);

// Loads both tab-separated files (video_id<TAB>sentence...; multiple
// reference lines per id merge into one reference set), aligns them by id,
// and computes all three metrics. Throws DataError when ids mismatch.
MetricReport evaluate(const std::string& predictions_path, const std::string& references_path);

// One append-only metric log line.
std::string format_metric_line(std::size_t epoch, double loss, const MetricReport& report,
                               double lr);

}  // namespace mart
