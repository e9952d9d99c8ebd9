// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Attention primitives shared by all three architectures: scaled dot-product
// and multi-head attention with boolean masks, the unified video+text mask,
// sinusoidal positional encodings, and multi-head attention with relative
// positional scores for the XL variants.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "mart/tensor.hpp"

namespace mart {

// Boolean attention mask; true = key attendable from that query position.
struct AttentionMask {
    std::size_t t_q = 0;
    std::size_t t_k = 0;
    std::vector<std::uint8_t> allow;  // row-major t_q x t_k

    AttentionMask() = default;
    AttentionMask(std::size_t q, std::size_t k, bool value = false)
        : t_q(q), t_k(k), allow(q * k, value ? 1 : 0) {
        if (q == 0 || k == 0) throw ShapeError("attention mask dimensions must be >= 1");
    }

    bool at(std::size_t i, std::size_t j) const { return allow[i * t_k + j] != 0; }
    void set(std::size_t i, std::size_t j, bool v) { allow[i * t_k + j] = v ? 1 : 0; }
};

inline AttentionMask full_mask(std::size_t t_q, std::size_t t_k) {
    return AttentionMask(t_q, t_k, true);
}

// Unified window over [video; text]: video positions attend to every video
// position and no text position; text position i attends to all video
// positions and to text positions <= i (causal).
inline AttentionMask build_unified_mask(std::size_t t_video, std::size_t t_text) {
    if (t_video == 0 || t_text == 0)
        throw ShapeError("unified mask needs t_video >= 1 and t_text >= 1");
    const std::size_t t = t_video + t_text;
    AttentionMask mask(t, t, false);
    for (std::size_t i = 0; i < t_video; ++i)
        for (std::size_t j = 0; j < t_video; ++j) mask.set(i, j, true);
    for (std::size_t i = 0; i < t_text; ++i) {
        for (std::size_t j = 0; j < t_video; ++j) mask.set(t_video + i, j, true);
        for (std::size_t j = 0; j <= i; ++j) mask.set(t_video + i, t_video + j, true);
    }
    return mask;
}

// Same queries, with n_ctx always-attendable key columns (memory slots or a
// hidden-state cache — history, never future text) prepended on the left.
inline AttentionMask with_context_columns(const AttentionMask& mask, std::size_t n_ctx) {
    AttentionMask out(mask.t_q, n_ctx + mask.t_k, false);
    for (std::size_t i = 0; i < mask.t_q; ++i) {
        for (std::size_t j = 0; j < n_ctx; ++j) out.set(i, j, true);
        for (std::size_t j = 0; j < mask.t_k; ++j) out.set(i, n_ctx + j, mask.at(i, j));
    }
    return out;
}

// PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(p / 10000^(2i/d)).
template <typename T>
TensorT<T> sinusoidal_positional_encoding(std::size_t t, std::size_t d) {
    if (d % 2 != 0) throw ShapeError("positional encoding needs even d, got " + std::to_string(d));
    TensorT<T> pe({t, d});
    for (std::size_t p = 0; p < t; ++p) {
        for (std::size_t i = 0; i < d / 2; ++i) {
            const double angle =
                static_cast<double>(p) / std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d));
            pe.data()[p * d + 2 * i] = static_cast<T>(std::sin(angle));
            pe.data()[p * d + 2 * i + 1] = static_cast<T>(std::cos(angle));
        }
    }
    return pe;
}

namespace detail {

// Additive mask bias: 0 where attendable, -1e9 where not (kept finite so
// 32-bit softmax never sees NaN). Rejects fully-masked query rows.
template <typename T>
TensorT<T> mask_bias(const AttentionMask& mask) {
    TensorT<T> bias({mask.t_q, mask.t_k});
    for (std::size_t i = 0; i < mask.t_q; ++i) {
        bool any = false;
        for (std::size_t j = 0; j < mask.t_k; ++j) {
            const bool ok = mask.at(i, j);
            any = any || ok;
            bias.data()[i * mask.t_k + j] = ok ? T(0) : T(-1e9);
        }
        if (!any)
            throw NumericError("attention mask row " + std::to_string(i) +
                               " is fully masked; softmax undefined");
    }
    return bias;
}

}  // namespace detail

template <typename T>
TensorT<T> scaled_dot_product_attention(const TensorT<T>& q, const TensorT<T>& k,
                                        const TensorT<T>& v, const AttentionMask& mask) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2)
        throw ShapeError("attention inputs must be 2-D");
    if (q.dim(1) != k.dim(1))
        throw ShapeError("query/key width mismatch: " + shape_str(q.shape()) + " vs " +
                         shape_str(k.shape()));
    if (k.dim(0) != v.dim(0))
        throw ShapeError("key/value row mismatch: " + shape_str(k.shape()) + " vs " +
                         shape_str(v.shape()));
    if (mask.t_q != q.dim(0) || mask.t_k != k.dim(0))
        throw ShapeError("mask is " + std::to_string(mask.t_q) + "x" + std::to_string(mask.t_k) +
                         " but attention is " + std::to_string(q.dim(0)) + "x" +
                         std::to_string(k.dim(0)));

    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(q.dim(1))));
    TensorT<T> scores = scalar_mul(matmul(q, transpose(k)), scale);
    TensorT<T> weights = softmax_rows(add(scores, detail::mask_bias<T>(mask)));
    return matmul(weights, v);
}

// Projection weights for multi-head attention, stored model-width and sliced
// into h heads of width d/h. Inputs are row vectors, so every projection is
// a right-multiplication x * W.
template <typename T>
struct MultiHeadParams {
    TensorT<T> w_q, w_k, w_v, w_o;  // each [d x d]
    std::size_t heads = 1;

    static MultiHeadParams init(std::size_t d, std::size_t h, Rng& rng, T stddev = T(0.02)) {
        if (h == 0 || d % h != 0)
            throw ShapeError("head count " + std::to_string(h) + " must divide d = " + std::to_string(d));
        MultiHeadParams p;
        p.heads = h;
        p.w_q = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_k = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_v = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_o = TensorT<T>::randn({d, d}, rng, stddev);
        return p;
    }
};

template <typename T>
TensorT<T> multi_head_attention(const MultiHeadParams<T>& p, const TensorT<T>& q_in,
                                const TensorT<T>& k_in, const TensorT<T>& v_in,
                                const AttentionMask& mask) {
    const std::size_t d = p.w_q.dim(0);
    if (q_in.dim(1) != d || k_in.dim(1) != d || v_in.dim(1) != d)
        throw ShapeError("multi_head_attention inputs must have width " + std::to_string(d));
    if (d % p.heads != 0) throw ShapeError("d must be divisible by the head count");
    const std::size_t dk = d / p.heads;

    TensorT<T> q = matmul(q_in, p.w_q);
    TensorT<T> k = matmul(k_in, p.w_k);
    TensorT<T> v = matmul(v_in, p.w_v);

    std::vector<TensorT<T>> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        TensorT<T> qh = slice_cols(q, h * dk, (h + 1) * dk);
        TensorT<T> kh = slice_cols(k, h * dk, (h + 1) * dk);
        TensorT<T> vh = slice_cols(v, h * dk, (h + 1) * dk);
        heads.push_back(scaled_dot_product_attention(qh, kh, vh, mask));
    }
    return matmul(concat(heads, 1), p.w_o);
}

// Relative positional machinery for the XL variants: an offset-indexed
// embedding table plus the content bias u and position bias v.
template <typename T>
struct RelativeAttentionParams {
    TensorT<T> table;  // [window x d], row (center + offset) encodes that offset
    TensorT<T> u;      // [d] content bias
    TensorT<T> v;      // [d] position bias
    std::size_t center = 0;

    // Sized so any query/key pair drawn from windows of at most max_window
    // positions (current window plus an equally long cache) is covered.
    static RelativeAttentionParams init(std::size_t d, std::size_t max_window, Rng& rng,
                                        T stddev = T(0.02)) {
        RelativeAttentionParams r;
        r.center = max_window - 1;
        r.table = TensorT<T>::randn({3 * max_window - 1, d}, rng, stddev);
        r.u = TensorT<T>({d});
        r.v = TensorT<T>({d});
        return r;
    }
};

// Multi-head attention where KV_in = [cache; current] and the score of query
// i against key j is ((q_i + u) . k_j + (q_i + v) . r_{i - (j - n_ctx)}) / sqrt(d_k),
// with n_ctx = rows(KV_in) - rows(Q_in) cached positions to the left.
template <typename T>
TensorT<T> relative_multi_head_attention(const MultiHeadParams<T>& p,
                                         const RelativeAttentionParams<T>& rel,
                                         const TensorT<T>& q_in, const TensorT<T>& kv_in,
                                         const AttentionMask& mask) {
    const std::size_t d = p.w_q.dim(0);
    const std::size_t t_q = q_in.dim(0), t_k = kv_in.dim(0);
    if (t_k < t_q) throw ShapeError("relative attention expects KV to contain the current window");
    const std::size_t n_ctx = t_k - t_q;
    if (mask.t_q != t_q || mask.t_k != t_k)
        throw ShapeError("mask does not match relative attention window");
    const std::size_t dk = d / p.heads;
    const std::size_t window = rel.table.dim(0);

    // offset(i, j) = i - (j - n_ctx); table row = center + offset
    std::vector<std::size_t> idx(t_q * t_k);
    for (std::size_t i = 0; i < t_q; ++i) {
        for (std::size_t j = 0; j < t_k; ++j) {
            const long long off = static_cast<long long>(i) + static_cast<long long>(n_ctx) -
                                  static_cast<long long>(j);
            const long long row = static_cast<long long>(rel.center) + off;
            if (row < 0 || row >= static_cast<long long>(window))
                throw ShapeError("relative offset " + std::to_string(off) +
                                 " outside the embedding window of " + std::to_string(window));
            idx[i * t_k + j] = static_cast<std::size_t>(row);
        }
    }

    TensorT<T> q = matmul(q_in, p.w_q);
    TensorT<T> k = matmul(kv_in, p.w_k);
    TensorT<T> v = matmul(kv_in, p.w_v);
    TensorT<T> u2 = reshape(rel.u, {1, d});
    TensorT<T> v2 = reshape(rel.v, {1, d});
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dk)));
    TensorT<T> bias = detail::mask_bias<T>(mask);

    std::vector<TensorT<T>> heads;
    heads.reserve(p.heads);
    for (std::size_t h = 0; h < p.heads; ++h) {
        TensorT<T> qh = slice_cols(q, h * dk, (h + 1) * dk);
        TensorT<T> kh = slice_cols(k, h * dk, (h + 1) * dk);
        TensorT<T> vh = slice_cols(v, h * dk, (h + 1) * dk);
        TensorT<T> uh = reshape(slice_cols(u2, h * dk, (h + 1) * dk), {dk});
        TensorT<T> vbh = reshape(slice_cols(v2, h * dk, (h + 1) * dk), {dk});
        TensorT<T> rh = slice_cols(rel.table, h * dk, (h + 1) * dk);

        // content term (q + u) . k, position term (q + v) . r gathered by offset
        TensorT<T> content = matmul(add_bias(qh, uh), transpose(kh));
        TensorT<T> pos_all = matmul(add_bias(qh, vbh), transpose(rh));  // [t_q x window]
        TensorT<T> pos = gather_cols(pos_all, idx, t_k);
        TensorT<T> scores = scalar_mul(add(content, pos), scale);
        TensorT<T> weights = softmax_rows(add(scores, bias));
        heads.push_back(matmul(weights, vh));
    }
    return matmul(concat(heads, 1), p.w_o);
}

}  // namespace mart
