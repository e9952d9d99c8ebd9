// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/training.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>

#include "mart/checkpoint.hpp"
#include "mart/decoding.hpp"
#include "mart/gradcheck.hpp"

namespace mart {

namespace {

std::string join_sentences(const std::vector<std::string>& sentences) {
    std::string out;
    for (const auto& s : sentences) {
        if (!out.empty() && !s.empty()) out += ' ';
        out += s;
    }
    return out;
}

// Full-parameter snapshot for best-epoch retention.
std::map<std::string, std::vector<float>> snapshot_params(CaptioningModel<float>& model) {
    std::map<std::string, std::vector<float>> snap;
    model.for_each_param([&](const std::string& name, Tensor& t, bool) {
        snap[name].assign(t.data(), t.data() + t.numel());
    });
    return snap;
}

void restore_params(CaptioningModel<float>& model,
                    const std::map<std::string, std::vector<float>>& snap) {
    model.for_each_param([&](const std::string& name, Tensor& t, bool) {
        const auto& src = snap.at(name);
        std::copy(src.begin(), src.end(), t.data());
    });
}

}  // namespace

MetricReport validation_report(CaptioningModel<float>& model,
                               const std::vector<VideoExample>& val_set, const Vocabulary& vocab,
                               const DecodeConfig& dc) {
    std::vector<std::string> preds;
    std::vector<std::vector<std::string>> refs;
    for (const auto& ex : val_set) {
        ParagraphPrediction p = decode_paragraph(model, ex, vocab, dc);
        preds.push_back(join_sentences(p.sentences));
        std::string ref;
        for (const auto& seg : ex.segments) {
            if (!ref.empty()) ref += ' ';
            ref += seg.sentence;
        }
        refs.push_back({ref});
    }
    MetricReport report;
    report.bleu4 = bleu4(preds, refs);
    report.cider_d = cider_d(preds, refs);
    report.r4 = r4_repetition(preds);
    return report;
}

TrainResult train(CaptioningModel<float>& model, OptimizerState& opt,
                  const std::vector<VideoExample>& train_set,
                  const std::vector<VideoExample>& val_set, const Vocabulary& vocab,
                  const RunConfig& cfg, std::ostream* live_log) {
    if (train_set.empty()) throw TrainError("training set is empty");
    if (val_set.empty()) throw TrainError("validation set is empty");

    TrainResult result;
    model.set_requires_grad(true);
    SeedStreams streams(cfg.train.seed);

    std::map<std::string, std::vector<float>> best_params;
    std::size_t bad_evals = 0;

    for (std::size_t epoch = 0; epoch < cfg.train.max_epochs; ++epoch) {
        const double mult = lr_schedule(epoch, cfg.train);

        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = streams.stream("shuffle", epoch);
        shuffle_rng.shuffle(order);
        Rng dropout_rng = streams.stream("dropout", epoch);
        Rng* drop = model.cfg.dropout > 0.0 ? &dropout_rng : nullptr;

        double loss_sum = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.train.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.train.batch_size);
            const double batch_n = double(stop - start);
            model.zero_grad();
            for (std::size_t k = start; k < stop; ++k) {
                const VideoExample& ex = train_set[order[k]];
                try {
                    Tape<float> tape;
                    std::size_t count = 0;
                    Tensor sum = paragraph_loss_sum(model, ex, &count, true, drop);
                    Tensor mean = affine(sum, 1.0f / float(count));
                    const double value = double(mean.item());
                    if (!std::isfinite(value)) throw NumericError("loss is not finite");
                    loss_sum += value;
                    // Scale so the batch's accumulated gradient is the mean.
                    tape.backward(affine(mean, float(1.0 / batch_n)));
                } catch (const NumericError& e) {
                    throw TrainError("training diverged (loss not finite) at epoch " +
                                     std::to_string(epoch) + " on video " + ex.video_id + ": " +
                                     e.what() + "; lower the learning rate or check the data");
                }
            }
            clip_global_norm(model, cfg.train.clip_norm);
            adam_step(model, opt, cfg.train, mult);
        }
        const double epoch_loss = loss_sum / double(train_set.size());
        result.epochs_run = epoch + 1;

        const bool eval_now =
            (epoch + 1) % cfg.train.eval_every == 0 || epoch + 1 == cfg.train.max_epochs;
        if (!eval_now) continue;

        const MetricReport report = validation_report(model, val_set, vocab, cfg.decode);
        const std::string line =
            format_metric_line(epoch, epoch_loss, report, cfg.train.lr * mult);
        result.log_lines.push_back(line);
        if (live_log != nullptr) *live_log << line << std::endl;

        if (report.cider_d > result.best_cider) {
            result.best_cider = report.cider_d;
            result.best_epoch = epoch;
            best_params = snapshot_params(model);
            bad_evals = 0;
        } else {
            ++bad_evals;
            if (bad_evals > cfg.train.patience) break;
        }
    }

    if (!best_params.empty()) restore_params(model, best_params);
    result.checkpoint_path = cfg.out_dir.empty() ? "best.ckpt" : cfg.out_dir + "/best.ckpt";
    RunConfig saved = cfg;
    saved.model.vocab_size = model.cfg.vocab_size;
    save_checkpoint(result.checkpoint_path, model, vocab, saved);
    return result;
}

AccuracyBreakdown teacher_forced_accuracy(CaptioningModel<float>& model,
                                          const std::vector<VideoExample>& data,
                                          const std::vector<SyntheticMeta>* metas) {
    std::map<std::string, const SyntheticMeta*> by_id;
    if (metas != nullptr)
        for (const auto& m : *metas) by_id[m.video_id] = &m;

    AccuracyBreakdown acc;
    std::size_t hits = 0, history_hits = 0;
    for (const auto& ex : data) {
        const SyntheticMeta* meta = nullptr;
        if (metas != nullptr) {
            const auto it = by_id.find(ex.video_id);
            if (it == by_id.end())
                throw TrainError("no synthetic metadata for video " + ex.video_id);
            meta = it->second;
        }
        ModelState<float> state = model.initial_state();
        for (std::size_t s = 0; s < ex.segments.size(); ++s) {
            const auto& seg = ex.segments[s];
            Tensor logits = model.step_forward(seg.features, seg.tokens, state);
            const std::size_t vocab_n = logits.dim(1);
            for (std::size_t i = 0; i + 1 < seg.tokens.size(); ++i) {
                const int target = seg.tokens[i + 1];
                const std::size_t pred = argmax_lowest(logits.data() + i * vocab_n, vocab_n);
                const bool hit = int(pred) == target;
                acc.total += 1;
                hits += hit;
                if (meta != nullptr && s < meta->segments.size()) {
                    const auto& flags = meta->segments[s].history_flags;
                    // Position i predicts word i of the sentence (tokens are
                    // BOS, words..., EOS); flags align with words.
                    if (i < flags.size() && flags[i]) {
                        acc.history_total += 1;
                        history_hits += hit;
                    }
                }
            }
        }
    }
    if (acc.total > 0) acc.overall = double(hits) / double(acc.total);
    if (acc.history_total > 0) acc.history = double(history_hits) / double(acc.history_total);
    return acc;
}

}  // namespace mart
