// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace mart {

namespace {

constexpr double kFloor = 1e-9;
constexpr double kCiderSigma = 6.0;

using Counts = std::unordered_map<std::string, double>;

// n-gram key: tokens joined with an unprintable separator.
std::string ngram_key(const std::vector<std::string>& toks, std::size_t start, std::size_t n) {
    std::string key = toks[start];
    for (std::size_t i = 1; i < n; ++i) {
        key += '\x1f';
        key += toks[start + i];
    }
    return key;
}

// counts[n-1] maps each n-gram of `toks` to its occurrence count.
std::array<Counts, 4> ngram_counts(const std::vector<std::string>& toks) {
    std::array<Counts, 4> counts;
    for (std::size_t n = 1; n <= 4; ++n) {
        if (toks.size() < n) break;
        for (std::size_t i = 0; i + n <= toks.size(); ++i)
            counts[n - 1][ngram_key(toks, i, n)] += 1.0;
    }
    return counts;
}

std::vector<std::vector<std::string>> tokenize_all(const std::vector<std::string>& paragraphs) {
    std::vector<std::vector<std::string>> out;
    out.reserve(paragraphs.size());
    for (const auto& p : paragraphs) out.push_back(tokenize(p));
    return out;
}

void require_aligned(const std::vector<std::string>& predictions,
                     const std::vector<std::vector<std::string>>& references) {
    if (predictions.size() != references.size())
        throw DataError("prediction/reference corpus size mismatch");
    for (std::size_t i = 0; i < references.size(); ++i)
        if (references[i].empty())
            throw DataError("video #" + std::to_string(i) + " has no reference");
}

}  // namespace

double bleu4(const std::vector<std::string>& predictions,
             const std::vector<std::vector<std::string>>& references) {
    require_aligned(predictions, references);
    double clipped[4] = {0, 0, 0, 0};
    double total[4] = {0, 0, 0, 0};
    double pred_len = 0.0;
    double ref_len = 0.0;

    for (std::size_t v = 0; v < predictions.size(); ++v) {
        const std::vector<std::string> pred = tokenize(predictions[v]);
        const auto pred_counts = ngram_counts(pred);
        pred_len += double(pred.size());

        // Effective reference length: closest to the prediction, ties toward
        // the shorter reference.
        std::array<Counts, 4> max_ref;
        std::size_t best_len = 0;
        bool have_len = false;
        for (const auto& ref_text : references[v]) {
            const std::vector<std::string> ref = tokenize(ref_text);
            const auto ref_counts = ngram_counts(ref);
            for (std::size_t n = 0; n < 4; ++n)
                for (const auto& [g, c] : ref_counts[n]) {
                    double& slot = max_ref[n][g];
                    slot = std::max(slot, c);
                }
            const auto closer = [&](std::size_t cand, std::size_t cur) {
                const auto d = [&](std::size_t x) {
                    return x > pred.size() ? x - pred.size() : pred.size() - x;
                };
                return d(cand) < d(cur) || (d(cand) == d(cur) && cand < cur);
            };
            if (!have_len || closer(ref.size(), best_len)) {
                best_len = ref.size();
                have_len = true;
            }
        }
        ref_len += double(best_len);

        for (std::size_t n = 0; n < 4; ++n)
            for (const auto& [g, c] : pred_counts[n]) {
                const auto it = max_ref[n].find(g);
                clipped[n] += std::min(c, it == max_ref[n].end() ? 0.0 : it->second);
                total[n] += c;
            }
    }

    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        const double p = total[n] > 0 ? clipped[n] / total[n] : 0.0;
        log_sum += std::log(std::max(p, kFloor)) / 4.0;
    }
    const double c = std::max(pred_len, kFloor);
    const double bp = c >= ref_len ? 1.0 : std::exp(1.0 - ref_len / c);
    return bp * std::exp(log_sum);
}

double cider_d(const std::vector<std::string>& predictions,
               const std::vector<std::vector<std::string>>& references) {
    require_aligned(predictions, references);
    if (references.empty()) throw DataError("empty reference corpus");
    const double corpus_size = double(references.size());

    // Document frequency: number of videos whose reference set contains the
    // n-gram (in any of its references).
    std::array<Counts, 4> df;
    std::vector<std::vector<std::vector<std::string>>> ref_tokens;
    ref_tokens.reserve(references.size());
    for (const auto& refs : references) {
        ref_tokens.push_back(tokenize_all(refs));
        std::array<std::unordered_set<std::string>, 4> seen;
        for (const auto& toks : ref_tokens.back()) {
            const auto counts = ngram_counts(toks);
            for (std::size_t n = 0; n < 4; ++n)
                for (const auto& [g, c] : counts[n]) seen[n].insert(g);
        }
        for (std::size_t n = 0; n < 4; ++n)
            for (const auto& g : seen[n]) df[n][g] += 1.0;
    }
    const auto idf = [&](std::size_t n, const std::string& g) {
        const auto it = df[n].find(g);
        const double freq = it == df[n].end() ? 0.0 : it->second;
        return std::log(corpus_size / std::max(1.0, freq));
    };

    // tf-idf vector with its norm and token length.
    struct Vec {
        std::array<Counts, 4> w;
        std::array<double, 4> norm{};
        double len = 0.0;
    };
    const auto to_vec = [&](const std::vector<std::string>& toks) {
        Vec v;
        v.len = double(toks.size());
        const auto counts = ngram_counts(toks);
        for (std::size_t n = 0; n < 4; ++n) {
            double sq = 0.0;
            for (const auto& [g, c] : counts[n]) {
                const double w = c * idf(n, g);
                v.w[n][g] = w;
                sq += w * w;
            }
            v.norm[n] = std::sqrt(sq);
        }
        return v;
    };

    double corpus_score = 0.0;
    for (std::size_t vid = 0; vid < predictions.size(); ++vid) {
        const Vec cand = to_vec(tokenize(predictions[vid]));
        double video_score = 0.0;
        for (const auto& ref_toks : ref_tokens[vid]) {
            const Vec ref = to_vec(ref_toks);
            const double delta = cand.len - ref.len;
            const double penalty = std::exp(-delta * delta / (2.0 * kCiderSigma * kCiderSigma));
            for (std::size_t n = 0; n < 4; ++n) {
                if (cand.norm[n] == 0.0 || ref.norm[n] == 0.0) continue;
                double dot = 0.0;
                for (const auto& [g, w] : cand.w[n]) {
                    const auto it = ref.w[n].find(g);
                    if (it != ref.w[n].end()) dot += std::min(w, it->second) * it->second;
                }
                video_score += penalty * dot / (cand.norm[n] * ref.norm[n]);
            }
        }
        corpus_score += 10.0 * video_score / (4.0 * double(ref_tokens[vid].size()));
    }
    return corpus_score / corpus_size;
}

double r4_repetition(const std::vector<std::string>& predictions) {
    if (predictions.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& paragraph : predictions) {
        const std::vector<std::string> toks = tokenize(paragraph);
        if (toks.size() < 4) continue;  // contributes 0
        const double total = double(toks.size() - 3);
        std::unordered_set<std::string> distinct;
        for (std::size_t i = 0; i + 4 <= toks.size(); ++i)
            distinct.insert(ngram_key(toks, i, 4));
        sum += (total - double(distinct.size())) / total;
    }
    return sum / double(predictions.size());
}

namespace {

// One TSV line per paragraph: id<TAB>sentence... -> (id, space-joined text).
std::vector<std::pair<std::string, std::string>> load_tsv_paragraphs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::vector<std::pair<std::string, std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string id, text, field;
        std::stringstream ss(line);
        std::getline(ss, id, '\t');
        bool first = true;
        while (std::getline(ss, field, '\t')) {
            if (!first) text += ' ';
            text += field;
            first = false;
        }
        if (id.empty()) throw DataError("missing video id in " + path);
        rows.emplace_back(std::move(id), std::move(text));
    }
    return rows;
}

}  // namespace

MetricReport evaluate(const std::string& predictions_path, const std::string& references_path) {
    const auto pred_rows = load_tsv_paragraphs(predictions_path);
    const auto ref_rows = load_tsv_paragraphs(references_path);

    std::map<std::string, std::vector<std::string>> refs_by_id;
    for (const auto& [id, text] : ref_rows) refs_by_id[id].push_back(text);

    std::vector<std::string> predictions;
    std::vector<std::vector<std::string>> references;
    std::unordered_set<std::string> seen;
    for (const auto& [id, text] : pred_rows) {
        if (!seen.insert(id).second) throw DataError("duplicate prediction for video " + id);
        const auto it = refs_by_id.find(id);
        if (it == refs_by_id.end()) throw DataError("no reference for video " + id);
        predictions.push_back(text);
        references.push_back(it->second);
    }
    if (seen.size() != refs_by_id.size())
        for (const auto& [id, texts] : refs_by_id)
            if (!seen.count(id)) throw DataError("no prediction for video " + id);

    MetricReport report;
    report.bleu4 = bleu4(predictions, references);
    report.cider_d = cider_d(predictions, references);
    report.r4 = r4_repetition(predictions);
    return report;
}

std::string format_metric_line(std::size_t epoch, double loss, const MetricReport& report,
                               double lr) {
    char buf[192];
    std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f cider=%.6f bleu4=%.6f r4=%.6f lr=%.8f",
                  epoch, loss, report.cider_d, report.bleu4, report.r4, lr);
    return std::string(buf);
}

}  // namespace mart
