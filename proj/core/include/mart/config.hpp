// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Run configuration: architecture, optimizer, decoding and path settings
// merged from a `key = value` config file plus command-line overrides.
// The key schema is closed — unknown keys are rejected.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mart {

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class ModelKind { vanilla, mart, xl, xlrg };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
    ModelKind kind = ModelKind::mart;
    std::size_t d = 64;              // hidden size
    std::size_t layers = 2;          // N
    std::size_t heads = 4;           // h
    std::size_t memory_len = 1;      // T_m (mart)
    std::size_t ff_size = 0;         // feed-forward inner size; 0 means 4*d
    std::size_t d_feat = 32;         // video feature dimension
    std::size_t max_video_len = 100;
    std::size_t max_text_len = 20;
    std::size_t max_segments = 6;
    std::size_t vocab_size = 0;      // filled in from the dataset vocabulary
    double dropout = 0.1;
    bool cross_step_gradients = true;  // mart only; xl is always off, xlrg always on
    bool tie_embeddings = false;       // share word embedding and output projection
    bool zero_init_memory = false;     // initial memory states zero instead of N(0, 0.02^2)
    bool recurrence = true;            // false = memory path zeroed and frozen ("w/o re.")

    std::size_t ff() const { return ff_size != 0 ? ff_size : 4 * d; }
    // Widest unified window this config can produce (video + text positions).
    std::size_t max_window() const { return max_video_len + max_text_len; }
};

struct TrainConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double weight_decay = 0.01;
    double clip_norm = 1.0;          // global-norm gradient clip; 0 disables
    std::size_t warmup_epochs = 5;
    std::size_t max_epochs = 50;
    std::size_t batch_size = 16;
    std::size_t patience = 5;        // non-improving validation epochs before stopping
    std::size_t eval_every = 1;      // validate every k-th epoch
    std::string lr_decay = "none";   // none | linear (after warmup)
    std::size_t min_count = 1;       // vocabulary frequency threshold
    std::uint64_t seed = 42;
};

struct DecodeConfig {
    std::size_t max_text_len = 20;   // window budget incl. BOS and EOS
    int pad_id = 0;
    int bos_id = 1;
    int eos_id = 2;
};

// Everything a command needs, merged from defaults <- config file <- flags.
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DecodeConfig decode;
    std::string train_data;
    std::string val_data;
    std::string out_dir = ".";
    std::string checkpoint;

    // Applies one key=value setting; throws ConfigError on unknown keys or
    // unparseable values.
    void set(const std::string& key, const std::string& value);

    // Cross-field invariants; throws ConfigError when violated.
    void validate() const;

    // Canonical serialization (stable order, round-trip exact numbers);
    // feeds checkpoints and the ablation row echo.
    std::vector<std::pair<std::string, std::string>> items() const;
};

// Reads `key = value` lines ('#' starts a comment) into an existing config.
void load_config_file(RunConfig& cfg, const std::string& path);

// "k1=v1 k2=v2 ..." rendering of items(), used by logs.
std::string config_summary(const RunConfig& cfg);

}  // namespace mart
