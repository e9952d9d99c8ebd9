// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Microbenchmarks for the hot paths: dense matmul, multi-head attention,
// the memory update, a full segment step (forward and forward+backward),
// and one greedily decoded segment.

#include <benchmark/benchmark.h>

#include <vector>

#include "mart/config.hpp"
#include "mart/data.hpp"
#include "mart/decoding.hpp"
#include "mart/gradcheck.hpp"
#include "mart/model.hpp"
#include "mart/rng.hpp"
#include "mart/tensor.hpp"

namespace {

using namespace mart;

ModelConfig bench_config(std::size_t d) {
    ModelConfig cfg;
    cfg.kind = ModelKind::mart;
    cfg.d = d;
    cfg.layers = 2;
    cfg.heads = d >= 768 ? 12 : 4;
    cfg.memory_len = 1;
    cfg.d_feat = 32;
    cfg.max_video_len = 10;
    cfg.max_text_len = 20;
    cfg.vocab_size = 60;
    cfg.dropout = 0.0;
    return cfg;
}

void BM_Matmul(benchmark::State& state) {
    const std::size_t n = std::size_t(state.range(0));
    SeedStreams streams(1);
    Rng rng = streams.stream("matmul");
    const Tensor a = Tensor::randn({n, n}, rng, 1.0f);
    const Tensor b = Tensor::randn({n, n}, rng, 1.0f);
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(std::int64_t(state.iterations()) * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256)->Arg(768);

void BM_MultiHeadAttention(benchmark::State& state) {
    const std::size_t d = std::size_t(state.range(0));
    const std::size_t rows = 25;  // one video+text window
    SeedStreams streams(2);
    Rng rng = streams.stream("attention");
    const auto params = MultiHeadParams<float>::init(d, d >= 768 ? 12 : 4, rng);
    const Tensor x = Tensor::randn({rows, d}, rng, 1.0f);
    const AttentionMask mask = causal_mask(rows);
    for (auto _ : state) {
        Tensor y = multi_head_attention(params, x, x, x, mask);
        benchmark::DoNotOptimize(y.data());
    }
}
BENCHMARK(BM_MultiHeadAttention)->Arg(64)->Arg(768);

void BM_MemoryUpdate(benchmark::State& state) {
    const std::size_t d = std::size_t(state.range(0));
    SeedStreams streams(3);
    Rng rng = streams.stream("memory");
    const auto params = MemoryUpdaterParams<float>::init(d, d >= 768 ? 12 : 4, rng);
    const Tensor m_prev = Tensor::randn({1, d}, rng, 1.0f);
    const Tensor h_bar = Tensor::randn({25, d}, rng, 1.0f);
    for (auto _ : state) {
        Tensor m = memory_update(params, m_prev, h_bar);
        benchmark::DoNotOptimize(m.data());
    }
}
BENCHMARK(BM_MemoryUpdate)->Arg(64)->Arg(768);

void BM_SegmentStepForward(benchmark::State& state) {
    const ModelConfig cfg = bench_config(std::size_t(state.range(0)));
    SeedStreams streams(4);
    Rng rng = streams.stream("init");
    auto model = CaptioningModel<float>::init(cfg, rng);
    const VideoExample ex = make_probe_example(cfg, 4);
    const Tensor features = ex.segments[0].features;
    for (auto _ : state) {
        ModelState<float> s = model.initial_state();
        Tensor logits = model.step_forward(features, ex.segments[0].tokens, s);
        benchmark::DoNotOptimize(logits.data());
    }
}
BENCHMARK(BM_SegmentStepForward)->Arg(64)->Arg(768)->Unit(benchmark::kMillisecond);

void BM_SegmentStepBackward(benchmark::State& state) {
    const ModelConfig cfg = bench_config(std::size_t(state.range(0)));
    SeedStreams streams(5);
    Rng rng = streams.stream("init");
    auto model = CaptioningModel<float>::init(cfg, rng);
    model.set_requires_grad(true);
    const VideoExample ex = make_probe_example(cfg, 5);
    for (auto _ : state) {
        model.zero_grad();
        Tape<float> tape;
        Tensor loss = paragraph_loss_sum(model, ex);
        tape.backward(loss);
        benchmark::DoNotOptimize(loss.data());
    }
}
BENCHMARK(BM_SegmentStepBackward)->Arg(64)->Arg(768)->Unit(benchmark::kMillisecond);

void BM_GreedyDecodeSegment(benchmark::State& state) {
    const ModelConfig cfg = bench_config(std::size_t(state.range(0)));
    SeedStreams streams(6);
    Rng rng = streams.stream("init");
    auto model = CaptioningModel<float>::init(cfg, rng);
    const VideoExample ex = make_probe_example(cfg, 6);
    const Tensor features = ex.segments[0].features;
    DecodeConfig dc;
    dc.max_text_len = cfg.max_text_len;
    for (auto _ : state) {
        ModelState<float> s = model.initial_state();
        std::vector<int> window = greedy_decode_segment(model, features, s, dc);
        benchmark::DoNotOptimize(window.data());
    }
}
BENCHMARK(BM_GreedyDecodeSegment)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
