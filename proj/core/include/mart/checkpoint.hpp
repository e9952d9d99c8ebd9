// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint persistence. Binary layout, all integers little-endian:
//   "MRTC" | u32 version=1 | u32 tensor_count
//   per tensor: u16 name_len | name | u8 rank | u32 dims[rank] | f32 data
//   u32 line_count | per line: u32 byte_len | UTF-8 "key=value"
// Tensors are the registered parameters in registry order, then optimizer
// moments as optim.m.<name> / optim.v.<name> when optimizer state is saved
// (moments round to f32 in the file). Config lines are the run config in
// canonical order, vocabulary entries as vocab.<id>=<token>, and optim.step.
// Round-trips are bit-exact for every parameter.

#pragma once

#include <stdexcept>
#include <string>

#include "mart/data.hpp"
#include "mart/model.hpp"
#include "mart/optimizer.hpp"

namespace mart {

struct CheckpointError : std::runtime_error {
    explicit CheckpointError(const std::string& what) : std::runtime_error(what) {}
};

struct Checkpoint {
    RunConfig config;
    Vocabulary vocab;
    CaptioningModel<float> model;
    OptimizerState optim;
    bool has_optim = false;
};

void save_checkpoint(const std::string& path, const CaptioningModel<float>& model,
                     const Vocabulary& vocab, const RunConfig& config,
                     const OptimizerState* optim = nullptr);

// Fails without partial effects: any magic/version/truncation/shape problem
// throws CheckpointError before a model is returned.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mart
