// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0
//
// Batch command surface: data generation, training, evaluation, decoding,
// gradient checking, the ablation grid and the memory-retrieval probe.
// Every command returns a process exit code: 0 success, 1 runtime failure,
// 2 usage/config error. run_cli parses flags and dispatches.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mart {

struct SynthArgs {
    std::uint64_t seed = 42;
    std::size_t n_videos = 500;  // training videos
    std::size_t n_val = 0;       // 0 = n_videos / 5, at least 1
    std::size_t d_feat = 32;
    std::string out_dir = ".";
};

struct TrainArgs {
    std::string config_path;  // optional `key = value` file
    std::string model;        // vanilla | mart | xl | xlrg; empty keeps config
    std::string data_dir;     // directory holding train.jsonl / val.jsonl
    std::string out_dir;      // empty keeps the config's out_dir
    std::string seed;         // decimal override; empty keeps the config's seed
};

struct EvalArgs {
    std::string pred_path;
    std::string ref_path;
};

struct DecodeArgs {
    std::string checkpoint_path;
    std::string data_path;  // dataset file (.jsonl)
    std::string out_path;   // predictions .tsv
};

struct GradcheckArgs {
    std::string config_path;  // optional; default is the d=8 check geometry
};

struct AblateArgs {
    std::string config_path;
    std::string data_dir;
    std::string out_dir;  // empty keeps the config's out_dir
    // Cross-product grid, e.g. "layers=1,2,5;memory_len=1,2,5;recurrence=on,off".
    // Omitted dimensions keep the base config's single value.
    std::string grid = "layers=1,2,5;memory_len=1,2,5;recurrence=on,off";
};

struct RetrieveArgs {
    std::string checkpoint_path;
    std::string data_path;
    std::string query_id;
    std::size_t k = 5;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err);
int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err);
int cmd_decode(const DecodeArgs& a, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err);
int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err);
int cmd_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream& err);

// Full command line (without argv[0]); parses flags, dispatches, and maps
// flag errors to exit code 2.
int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace mart
