// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// The three captioning architectures over a shared parameter layout:
//   vanilla — separate encoder/decoder stacks, stateless across segments;
//   mart    — unified stack with gated memory carried between segments;
//   xl/xlrg — unified stack with a cached previous window and relative
//             positional attention; xl stops gradients at the step boundary,
//             xlrg lets them flow.
// Every model steps one segment at a time; paragraph-level forward threads
// the per-kind recurrent state through the steps.

#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mart/attention.hpp"
#include "mart/config.hpp"
#include "mart/data.hpp"
#include "mart/rng.hpp"
#include "mart/tensor.hpp"

namespace mart {

template <typename T>
TensorT<T> cast_tensor(const Tensor& src) {
    TensorT<T> out(src.shape());
    for (std::size_t i = 0; i < src.numel(); ++i) out.data()[i] = static_cast<T>(src.data()[i]);
    return out;
}

template <>
inline Tensor cast_tensor<float>(const Tensor& src) {
    return src;
}

inline AttentionMask causal_mask(std::size_t t) {
    AttentionMask m(t, t, false);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
    return m;
}

template <typename T>
struct LayerNormParams {
    TensorT<T> gamma, beta;

    static LayerNormParams init(std::size_t d) {
        LayerNormParams p;
        p.gamma = TensorT<T>::full({d}, T(1));
        p.beta = TensorT<T>({d});
        return p;
    }
};

template <typename T>
TensorT<T> apply_layer_norm(const TensorT<T>& x, const LayerNormParams<T>& p) {
    return layer_norm(x, p.gamma, p.beta);
}

template <typename T>
struct FeedForwardParams {
    TensorT<T> w1, b1, w2, b2;  // d -> ff -> d with ReLU

    static FeedForwardParams init(std::size_t d, std::size_t ff, Rng& rng, T stddev = T(0.02)) {
        FeedForwardParams p;
        p.w1 = TensorT<T>::randn({d, ff}, rng, stddev);
        p.b1 = TensorT<T>({ff});
        p.w2 = TensorT<T>::randn({ff, d}, rng, stddev);
        p.b2 = TensorT<T>({d});
        return p;
    }
};

template <typename T>
TensorT<T> apply_feed_forward(const TensorT<T>& x, const FeedForwardParams<T>& p) {
    return add_bias(matmul(relu(add_bias(matmul(x, p.w1), p.b1)), p.w2), p.b2);
}

// Gated memory update: attention summary S over the current hidden window,
// candidate C = tanh(W_mc M + W_sc S + b_c), gate Z = sigmoid(W_mz M + W_sz S
// + b_z), then M_t = (1-Z).C + Z.M_prev. Rows of M are state vectors, so each
// weights-left product W M is implemented row-wise as M * W^T.
template <typename T>
struct MemoryUpdaterParams {
    MultiHeadParams<T> attn;        // S = MultiHeadAtt(M_prev, H_bar, H_bar)
    TensorT<T> w_mc, w_sc, w_mz, w_sz;  // [d x d]
    TensorT<T> b_c, b_z;                // [d]

    static MemoryUpdaterParams init(std::size_t d, std::size_t h, Rng& rng, T stddev = T(0.02)) {
        MemoryUpdaterParams p;
        p.attn = MultiHeadParams<T>::init(d, h, rng, stddev);
        p.w_mc = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_sc = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_mz = TensorT<T>::randn({d, d}, rng, stddev);
        p.w_sz = TensorT<T>::randn({d, d}, rng, stddev);
        p.b_c = TensorT<T>({d});
        p.b_z = TensorT<T>({d});
        return p;
    }
};

template <typename T>
TensorT<T> memory_update(const MemoryUpdaterParams<T>& p, const TensorT<T>& m_prev,
                         const TensorT<T>& h_bar) {
    const std::size_t t_m = m_prev.dim(0), t_c = h_bar.dim(0);
    TensorT<T> s = multi_head_attention(p.attn, m_prev, h_bar, h_bar, full_mask(t_m, t_c));
    TensorT<T> c = tanh(add_bias(add(matmul(m_prev, transpose(p.w_mc)), matmul(s, transpose(p.w_sc))), p.b_c));
    TensorT<T> z = sigmoid(add_bias(add(matmul(m_prev, transpose(p.w_mz)), matmul(s, transpose(p.w_sz))), p.b_z));
    return add(mul(affine(z, T(-1), T(1)), c), mul(z, m_prev));  // (1-Z).C + Z.M_prev
}

template <typename T>
struct EmbeddingLayers {
    TensorT<T> word;       // [vocab x d]
    TensorT<T> feat_proj;  // [d_feat x d]
    LayerNormParams<T> video_ln;
    LayerNormParams<T> text_ln;
    TensorT<T> type;       // [2 x d]; row 0 video, row 1 text (unified kinds only)
};

// One layer of the unified (mart / xl) stack; the vanilla stacks reuse the
// same pieces with mem_* left undefined.
template <typename T>
struct UnifiedLayerParams {
    MultiHeadParams<T> self_attn;
    LayerNormParams<T> ln1;
    MultiHeadParams<T> mem_attn;       // mart
    LayerNormParams<T> ln_mem;         // mart
    MemoryUpdaterParams<T> updater;    // mart
    FeedForwardParams<T> ff;
    LayerNormParams<T> ln2;
};

template <typename T>
struct DecoderLayerParams {
    MultiHeadParams<T> self_attn;
    LayerNormParams<T> ln1;
    MultiHeadParams<T> cross_attn;
    LayerNormParams<T> ln_cross;
    FeedForwardParams<T> ff;
    LayerNormParams<T> ln2;
};

// Per-kind recurrent state threaded between segment steps.
template <typename T>
struct ModelState {
    std::vector<TensorT<T>> memory;  // mart: per layer [T_m x d]
    std::vector<TensorT<T>> cache;   // xl/xlrg: per layer previous window [T_c x d]
    std::size_t step = 0;
};

template <typename T>
class CaptioningModel {
public:
    ModelConfig cfg;
    EmbeddingLayers<T> emb;
    std::vector<UnifiedLayerParams<T>> layers;       // mart / xl / xlrg
    std::vector<UnifiedLayerParams<T>> enc_layers;   // vanilla encoder (mem_* unused)
    std::vector<DecoderLayerParams<T>> dec_layers;   // vanilla decoder
    RelativeAttentionParams<T> rel;                  // xl / xlrg
    std::vector<TensorT<T>> memory_init;             // mart: per layer [T_m x d]
    TensorT<T> w_out;                                // [d x vocab] (untied)
    TensorT<T> b_out;                                // [vocab]

    static CaptioningModel init(const ModelConfig& cfg, Rng& rng, T init_stddev = T(0.02)) {
        if (cfg.vocab_size < 5)
            throw ConfigError("vocab_size must cover the four specials plus at least one word");
        CaptioningModel m;
        m.cfg = cfg;
        // The kind is authoritative for the step-boundary gradient flag:
        // xl stops gradients at the cache, xlrg lets them flow.
        if (cfg.kind == ModelKind::xl) m.cfg.cross_step_gradients = false;
        if (cfg.kind == ModelKind::xlrg) m.cfg.cross_step_gradients = true;
        const std::size_t d = cfg.d;
        const T sd = init_stddev;

        m.emb.word = TensorT<T>::randn({cfg.vocab_size, d}, rng, sd);
        m.emb.feat_proj = TensorT<T>::randn({cfg.d_feat, d}, rng, sd);
        m.emb.video_ln = LayerNormParams<T>::init(d);
        m.emb.text_ln = LayerNormParams<T>::init(d);
        if (cfg.kind != ModelKind::vanilla) m.emb.type = TensorT<T>::randn({2, d}, rng, sd);

        if (cfg.kind == ModelKind::vanilla) {
            for (std::size_t l = 0; l < cfg.layers; ++l) {
                UnifiedLayerParams<T> enc;
                enc.self_attn = MultiHeadParams<T>::init(d, cfg.heads, rng, sd);
                enc.ln1 = LayerNormParams<T>::init(d);
                enc.ff = FeedForwardParams<T>::init(d, cfg.ff(), rng, sd);
                enc.ln2 = LayerNormParams<T>::init(d);
                m.enc_layers.push_back(std::move(enc));

                DecoderLayerParams<T> dec;
                dec.self_attn = MultiHeadParams<T>::init(d, cfg.heads, rng, sd);
                dec.ln1 = LayerNormParams<T>::init(d);
                dec.cross_attn = MultiHeadParams<T>::init(d, cfg.heads, rng, sd);
                dec.ln_cross = LayerNormParams<T>::init(d);
                dec.ff = FeedForwardParams<T>::init(d, cfg.ff(), rng, sd);
                dec.ln2 = LayerNormParams<T>::init(d);
                m.dec_layers.push_back(std::move(dec));
            }
        } else {
            for (std::size_t l = 0; l < cfg.layers; ++l) {
                UnifiedLayerParams<T> layer;
                layer.self_attn = MultiHeadParams<T>::init(d, cfg.heads, rng, sd);
                layer.ln1 = LayerNormParams<T>::init(d);
                if (cfg.kind == ModelKind::mart) {
                    layer.mem_attn = MultiHeadParams<T>::init(d, cfg.heads, rng, sd);
                    layer.ln_mem = LayerNormParams<T>::init(d);
                    layer.updater = MemoryUpdaterParams<T>::init(d, cfg.heads, rng, sd);
                    if (!cfg.recurrence) {
                        // "w/o re." ablation: the memory path contributes nothing
                        layer.mem_attn.w_o = TensorT<T>({d, d});
                    }
                }
                layer.ff = FeedForwardParams<T>::init(d, cfg.ff(), rng, sd);
                layer.ln2 = LayerNormParams<T>::init(d);
                m.layers.push_back(std::move(layer));
            }
            if (m.uses_relative()) {
                m.rel = RelativeAttentionParams<T>::init(d, cfg.max_window(), rng, sd);
            }
            if (cfg.kind == ModelKind::mart) {
                for (std::size_t l = 0; l < cfg.layers; ++l) {
                    m.memory_init.push_back(cfg.zero_init_memory
                                                ? TensorT<T>({cfg.memory_len, d})
                                                : TensorT<T>::randn({cfg.memory_len, d}, rng, sd));
                }
            }
        }

        if (!cfg.tie_embeddings) m.w_out = TensorT<T>::randn({d, cfg.vocab_size}, rng, sd);
        m.b_out = TensorT<T>({cfg.vocab_size});
        return m;
    }

    bool uses_relative() const { return cfg.kind == ModelKind::xl || cfg.kind == ModelKind::xlrg; }
    bool is_unified() const { return cfg.kind != ModelKind::vanilla; }

    // Visits every trainable parameter as (name, tensor, no_decay). Weight
    // decay is skipped for biases and layer-norm parameters. The frozen
    // memory path of a recurrence-off mart model is not visited at all.
    void for_each_param(const std::function<void(const std::string&, TensorT<T>&, bool)>& fn) {
        fn("emb.word", emb.word, false);
        fn("emb.feat_proj", emb.feat_proj, false);
        visit_ln("emb.video_ln", emb.video_ln, fn);
        visit_ln("emb.text_ln", emb.text_ln, fn);
        if (is_unified()) fn("emb.type", emb.type, false);

        if (cfg.kind == ModelKind::vanilla) {
            for (std::size_t l = 0; l < enc_layers.size(); ++l) {
                const std::string p = "enc." + std::to_string(l) + ".";
                visit_mha(p + "self", enc_layers[l].self_attn, fn);
                visit_ln(p + "ln1", enc_layers[l].ln1, fn);
                visit_ff(p + "ff", enc_layers[l].ff, fn);
                visit_ln(p + "ln2", enc_layers[l].ln2, fn);
            }
            for (std::size_t l = 0; l < dec_layers.size(); ++l) {
                const std::string p = "dec." + std::to_string(l) + ".";
                visit_mha(p + "self", dec_layers[l].self_attn, fn);
                visit_ln(p + "ln1", dec_layers[l].ln1, fn);
                visit_mha(p + "cross", dec_layers[l].cross_attn, fn);
                visit_ln(p + "ln_cross", dec_layers[l].ln_cross, fn);
                visit_ff(p + "ff", dec_layers[l].ff, fn);
                visit_ln(p + "ln2", dec_layers[l].ln2, fn);
            }
        } else {
            for (std::size_t l = 0; l < layers.size(); ++l) {
                const std::string p = "layers." + std::to_string(l) + ".";
                visit_mha(p + "self", layers[l].self_attn, fn);
                visit_ln(p + "ln1", layers[l].ln1, fn);
                if (cfg.kind == ModelKind::mart && cfg.recurrence) {
                    visit_mha(p + "mem", layers[l].mem_attn, fn);
                    visit_ln(p + "ln_mem", layers[l].ln_mem, fn);
                    visit_mha(p + "upd.attn", layers[l].updater.attn, fn);
                    fn(p + "upd.w_mc", layers[l].updater.w_mc, false);
                    fn(p + "upd.w_sc", layers[l].updater.w_sc, false);
                    fn(p + "upd.w_mz", layers[l].updater.w_mz, false);
                    fn(p + "upd.w_sz", layers[l].updater.w_sz, false);
                    fn(p + "upd.b_c", layers[l].updater.b_c, true);
                    fn(p + "upd.b_z", layers[l].updater.b_z, true);
                } else if (cfg.kind == ModelKind::mart) {
                    visit_ln(p + "ln_mem", layers[l].ln_mem, fn);
                }
                visit_ff(p + "ff", layers[l].ff, fn);
                visit_ln(p + "ln2", layers[l].ln2, fn);
            }
            if (uses_relative()) {
                fn("rel.table", rel.table, false);
                fn("rel.u", rel.u, true);
                fn("rel.v", rel.v, true);
            }
            if (cfg.kind == ModelKind::mart && cfg.recurrence) {
                for (std::size_t l = 0; l < memory_init.size(); ++l)
                    fn("mem_init." + std::to_string(l), memory_init[l], false);
            }
        }

        if (!cfg.tie_embeddings) fn("out.w", w_out, false);
        fn("out.b", b_out, true);
    }

    void set_requires_grad(bool on) {
        for_each_param([on](const std::string&, TensorT<T>& t, bool) { t.set_requires_grad(on); });
    }

    void zero_grad() {
        for_each_param([](const std::string&, TensorT<T>& t, bool) { t.zero_grad(); });
    }

    std::size_t param_count() {
        std::size_t n = 0;
        for_each_param([&n](const std::string&, TensorT<T>& t, bool) { n += t.numel(); });
        return n;
    }

    ModelState<T> initial_state() const {
        ModelState<T> s;
        if (cfg.kind == ModelKind::mart) s.memory = memory_init;  // shared handles: grads reach M_0
        return s;
    }

    // One segment forward: logits for every text position (predicting the
    // next token), threading `state` per model kind. `rng` enables dropout
    // and must be non-null exactly when training with dropout > 0.
    TensorT<T> step_forward(const TensorT<T>& features, const std::vector<int>& tokens,
                            ModelState<T>& state, bool training = false, Rng* rng = nullptr) {
        if (tokens.empty()) throw ShapeError("step_forward needs at least one text token");
        if (features.dim(1) != cfg.d_feat)
            throw ShapeError("features are " + shape_str(features.shape()) + " but d_feat is " +
                             std::to_string(cfg.d_feat));
        if (features.dim(0) > cfg.max_video_len || tokens.size() > cfg.max_text_len)
            throw ShapeError("segment exceeds the configured window");
        if (cfg.kind == ModelKind::mart && cfg.recurrence && state.memory.empty())
            state.memory = memory_init;
        return cfg.kind == ModelKind::vanilla ? vanilla_step(features, tokens, training, rng)
                                              : unified_step(features, tokens, state, training, rng);
    }

    // Teacher-forced paragraph pass; returns per-segment logits and the final
    // recurrent state (the memory bank / cache after the last segment).
    struct ParagraphResult {
        std::vector<TensorT<T>> logits;
        ModelState<T> final_state;
    };

    ParagraphResult forward_paragraph(const VideoExample& ex, bool training = false,
                                      Rng* rng = nullptr) {
        if (ex.segments.empty()) throw ShapeError("video " + ex.video_id + " has no segments");
        ParagraphResult out;
        ModelState<T> state = initial_state();
        for (const auto& seg : ex.segments) {
            TensorT<T> features = cast_tensor<T>(seg.features);
            out.logits.push_back(step_forward(features, seg.tokens, state, training, rng));
        }
        out.final_state = std::move(state);
        return out;
    }

    // video rows: LN(project(features)) (+ PE) (+ type_0)
    // text rows:  LN(word_emb * sqrt(d)) (+ PE) (+ type_1)
    // The XL kinds carry position through relative attention, not absolute PE.
    TensorT<T> embed_video(const TensorT<T>& features, bool with_type) {
        TensorT<T> v = apply_layer_norm(matmul(features, emb.feat_proj), emb.video_ln);
        if (!uses_relative()) v = add(v, positional(v.dim(0)));
        if (with_type) v = add_bias(v, type_row(0));
        return v;
    }

    TensorT<T> embed_text(const std::vector<int>& tokens, bool with_type) {
        const T scale = static_cast<T>(std::sqrt(static_cast<double>(cfg.d)));
        TensorT<T> w = apply_layer_norm(scalar_mul(embedding_lookup(emb.word, tokens), scale), emb.text_ln);
        if (!uses_relative()) w = add(w, positional(w.dim(0)));
        if (with_type) w = add_bias(w, type_row(1));
        return w;
    }

    TensorT<T> output_logits(const TensorT<T>& text_hidden) {
        TensorT<T> proj = cfg.tie_embeddings ? matmul(text_hidden, transpose(emb.word))
                                             : matmul(text_hidden, w_out);
        return add_bias(proj, b_out);
    }

private:
    using ParamFn = std::function<void(const std::string&, TensorT<T>&, bool)>;

    static void visit_ln(const std::string& p, LayerNormParams<T>& ln, const ParamFn& fn) {
        fn(p + ".gamma", ln.gamma, true);
        fn(p + ".beta", ln.beta, true);
    }

    static void visit_mha(const std::string& p, MultiHeadParams<T>& a, const ParamFn& fn) {
        fn(p + ".wq", a.w_q, false);
        fn(p + ".wk", a.w_k, false);
        fn(p + ".wv", a.w_v, false);
        fn(p + ".wo", a.w_o, false);
    }

    static void visit_ff(const std::string& p, FeedForwardParams<T>& f, const ParamFn& fn) {
        fn(p + ".w1", f.w1, false);
        fn(p + ".b1", f.b1, true);
        fn(p + ".w2", f.w2, false);
        fn(p + ".b2", f.b2, true);
    }

    TensorT<T> maybe_dropout(const TensorT<T>& x, bool training, Rng* rng) {
        if (!training || cfg.dropout == 0.0) return x;
        if (rng == nullptr) throw ConfigError("training with dropout requires an rng");
        return dropout(x, cfg.dropout, *rng);
    }

    TensorT<T> positional(std::size_t t) {
        return slice_rows(sinusoidal_positional_encoding<T>(cfg.max_window(), cfg.d), 0, t);
    }

    TensorT<T> type_row(std::size_t which) {
        return reshape(slice_rows(emb.type, which, which + 1), {cfg.d});
    }

    TensorT<T> vanilla_step(const TensorT<T>& features, const std::vector<int>& tokens,
                            bool training, Rng* rng) {
        const std::size_t t_v = features.dim(0), t_t = tokens.size();
        TensorT<T> h = embed_video(features, false);
        const AttentionMask enc_mask = full_mask(t_v, t_v);
        for (auto& layer : enc_layers) {
            TensorT<T> a = multi_head_attention(layer.self_attn, h, h, h, enc_mask);
            h = apply_layer_norm(add(h, maybe_dropout(a, training, rng)), layer.ln1);
            TensorT<T> f = apply_feed_forward(h, layer.ff);
            h = apply_layer_norm(add(h, maybe_dropout(f, training, rng)), layer.ln2);
        }

        TensorT<T> x = embed_text(tokens, false);
        const AttentionMask self_mask = causal_mask(t_t);
        const AttentionMask cross = full_mask(t_t, t_v);
        for (auto& layer : dec_layers) {
            TensorT<T> a = multi_head_attention(layer.self_attn, x, x, x, self_mask);
            x = apply_layer_norm(add(x, maybe_dropout(a, training, rng)), layer.ln1);
            TensorT<T> c = multi_head_attention(layer.cross_attn, x, h, h, cross);
            x = apply_layer_norm(add(x, maybe_dropout(c, training, rng)), layer.ln_cross);
            TensorT<T> f = apply_feed_forward(x, layer.ff);
            x = apply_layer_norm(add(x, maybe_dropout(f, training, rng)), layer.ln2);
        }
        return output_logits(x);
    }

    TensorT<T> unified_step(const TensorT<T>& features, const std::vector<int>& tokens,
                            ModelState<T>& state, bool training, Rng* rng) {
        const std::size_t t_v = features.dim(0), t_t = tokens.size();
        const std::size_t t_c = t_v + t_t;
        const AttentionMask base_mask = build_unified_mask(t_v, t_t);

        TensorT<T> h = concat<T>({embed_video(features, true), embed_text(tokens, true)}, 0);

        if (cfg.kind == ModelKind::mart) {
            const bool carry_grads = cfg.cross_step_gradients;
            std::vector<TensorT<T>> new_memory;
            const AttentionMask mem_mask = with_context_columns(base_mask, cfg.memory_len);
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto& layer = layers[l];
                TensorT<T> a = multi_head_attention(layer.self_attn, h, h, h, base_mask);
                TensorT<T> h_bar = apply_layer_norm(add(h, maybe_dropout(a, training, rng)), layer.ln1);

                TensorT<T> x;
                if (cfg.recurrence) {
                    TensorT<T> m_prev = state.memory[l];
                    if (!carry_grads && state.step > 0) m_prev = detach(m_prev);
                    TensorT<T> kv = concat<T>({m_prev, h_bar}, 0);
                    TensorT<T> a2 = multi_head_attention(layer.mem_attn, h_bar, kv, kv, mem_mask);
                    x = apply_layer_norm(add(h_bar, maybe_dropout(a2, training, rng)), layer.ln_mem);
                    new_memory.push_back(memory_update(layer.updater, m_prev, h_bar));
                } else {
                    x = apply_layer_norm(h_bar, layer.ln_mem);
                }
                TensorT<T> f = apply_feed_forward(x, layer.ff);
                h = apply_layer_norm(add(x, maybe_dropout(f, training, rng)), layer.ln2);
            }
            if (cfg.recurrence) state.memory = std::move(new_memory);
        } else {
            const bool stop_gradient = !cfg.cross_step_gradients;
            std::vector<TensorT<T>> new_cache;
            const bool have_cache = !state.cache.empty();
            for (std::size_t l = 0; l < layers.size(); ++l) {
                auto& layer = layers[l];
                new_cache.push_back(h);  // this layer's input, cached for step t+1
                TensorT<T> kv = h;
                AttentionMask mask = base_mask;
                if (have_cache) {
                    TensorT<T> prev = stop_gradient ? detach(state.cache[l]) : state.cache[l];
                    kv = concat<T>({prev, h}, 0);
                    mask = with_context_columns(base_mask, prev.dim(0));
                }
                TensorT<T> a = relative_multi_head_attention(layer.self_attn, rel, h, kv, mask);
                TensorT<T> h_bar = apply_layer_norm(add(h, maybe_dropout(a, training, rng)), layer.ln1);
                TensorT<T> f = apply_feed_forward(h_bar, layer.ff);
                h = apply_layer_norm(add(h_bar, maybe_dropout(f, training, rng)), layer.ln2);
            }
            state.cache = std::move(new_cache);
        }

        state.step += 1;
        return output_logits(slice_rows(h, t_v, t_c));
    }
};

}  // namespace mart
