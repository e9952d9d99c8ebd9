// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Loss, Adam with decoupled weight decay, global-norm gradient clipping, and
// the per-epoch warmup learning-rate schedule.

#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mart/config.hpp"
#include "mart/model.hpp"
#include "mart/tensor.hpp"

namespace mart {

// Mean negative log-likelihood over the active text positions. Video
// positions never reach this function; callers slice them away upstream.
// All-padded inputs fail inside cross_entropy_sum (NumericError).
template <typename T>
TensorT<T> masked_cross_entropy(const TensorT<T>& logits, const std::vector<int>& targets,
                                const std::vector<std::uint8_t>& active) {
    std::size_t count = 0;
    TensorT<T> sum = cross_entropy_sum(logits, targets, active, &count);
    return affine(sum, T(1) / T(count));
}

struct AdamSlot {
    std::vector<double> m;  // first moment
    std::vector<double> v;  // second moment, elementwise >= 0
};

struct OptimizerState {
    std::map<std::string, AdamSlot> slots;
    std::size_t step = 0;
};

// One Adam update of an n-element parameter from its gradient:
//   m <- b1*m + (1-b1)*g;  v <- b2*v + (1-b2)*g^2  (bias-corrected by `step`)
//   p <- p - lr * (m_hat / (sqrt(v_hat) + 1e-8) + wd*p)
// The decay term is decoupled from the moments; pass wd = 0 for parameters
// that should not decay. Arithmetic runs in double, parameters round to
// float once per step.
inline void adam_apply(float* x, const float* g, std::size_t n, AdamSlot& slot,
                       const TrainConfig& cfg, std::size_t step, double lr_mult, double wd) {
    if (slot.m.empty()) {
        slot.m.assign(n, 0.0);
        slot.v.assign(n, 0.0);
    }
    const double lr = cfg.lr * lr_mult;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(step));
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = double(g[i]);
        slot.m[i] = cfg.beta1 * slot.m[i] + (1.0 - cfg.beta1) * gi;
        slot.v[i] = cfg.beta2 * slot.v[i] + (1.0 - cfg.beta2) * gi * gi;
        const double m_hat = slot.m[i] / bc1;
        const double v_hat = slot.v[i] / bc2;
        x[i] = float(double(x[i]) - lr * (m_hat / (std::sqrt(v_hat) + 1e-8) + wd * double(x[i])));
    }
}

// Applies adam_apply to every registered parameter; weight decay is skipped
// for parameters registered no_decay (biases, layer norms).
inline void adam_step(CaptioningModel<float>& model, OptimizerState& opt, const TrainConfig& cfg,
                      double lr_mult) {
    opt.step += 1;
    model.for_each_param([&](const std::string& name, Tensor& p, bool no_decay) {
        adam_apply(p.data(), p.grad(), p.numel(), opt.slots[name], cfg, opt.step, lr_mult,
                   no_decay ? 0.0 : cfg.weight_decay);
    });
}

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm. max_norm <= 0 disables clipping.
inline double clip_global_norm(CaptioningModel<float>& model, double max_norm) {
    double sq = 0.0;
    model.for_each_param([&](const std::string&, Tensor& p, bool) {
        const float* g = p.grad();
        for (std::size_t i = 0; i < p.numel(); ++i) sq += double(g[i]) * double(g[i]);
    });
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const float scale = float(max_norm / norm);
        model.for_each_param([&](const std::string&, Tensor& p, bool) {
            float* g = p.grad();
            for (std::size_t i = 0; i < p.numel(); ++i) g[i] *= scale;
        });
    }
    return norm;
}

// Per-epoch linear warmup to 1, then constant; the optional linear decay
// runs from 1 after warmup down to 1/(max_epochs - warmup_epochs + 1) at the
// final epoch.
inline double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    if (epoch + 1 <= cfg.warmup_epochs) return double(epoch + 1) / double(cfg.warmup_epochs);
    if (cfg.lr_decay == "linear" && cfg.max_epochs > cfg.warmup_epochs) {
        const double span = double(cfg.max_epochs - cfg.warmup_epochs + 1);
        return double(cfg.max_epochs - epoch) / span;
    }
    return 1.0;
}

}  // namespace mart
