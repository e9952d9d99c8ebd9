// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "mart/checkpoint.hpp"
#include "mart/config.hpp"
#include "mart/data.hpp"
#include "mart/decoding.hpp"
#include "mart/gradcheck.hpp"
#include "mart/metrics.hpp"
#include "mart/model.hpp"
#include "mart/optimizer.hpp"
#include "mart/rng.hpp"
#include "mart/training.hpp"

namespace mart {

namespace {

// Exit-code policy: ConfigError means the user asked for something invalid
// (2); everything else that throws is a runtime failure (1).
int guard(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

std::string fixed6(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", x);
    return buf;
}

std::string sci3(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string::npos) return out;
        start = pos + 1;
    }
}

// Raw records -> vocabulary (from the training sentences) -> encoded examples.
struct LoadedData {
    Vocabulary vocab;
    std::vector<VideoExample> train;
    std::vector<VideoExample> val;
};

LoadedData load_train_val(const RunConfig& rc) {
    LoadedData d;
    const std::vector<RawVideo> raw = load_raw_dataset(rc.train_data);
    std::vector<std::string> sentences;
    for (const auto& v : raw)
        for (const auto& seg : v.segments) sentences.push_back(seg.sentence);
    d.vocab = build_vocab(sentences, rc.train.min_count);
    for (const auto& v : raw) d.train.push_back(encode_example(v, d.vocab, rc.model));
    d.val = load_dataset(rc.val_data, d.vocab, rc.model);
    return d;
}

RunConfig merged_config(const std::string& config_path, const std::string& model,
                        const std::string& data_dir, const std::string& out_dir,
                        const std::string& seed) {
    RunConfig rc;
    if (!config_path.empty()) load_config_file(rc, config_path);
    if (!model.empty()) rc.model.kind = model_kind_from_string(model);
    if (!data_dir.empty()) {
        rc.train_data = data_dir + "/train.jsonl";
        rc.val_data = data_dir + "/val.jsonl";
    }
    if (!out_dir.empty()) rc.out_dir = out_dir;
    if (!seed.empty()) rc.set("seed", seed);
    if (rc.train_data.empty() || rc.val_data.empty())
        throw ConfigError("no dataset: pass --data or set train_data/val_data in the config");
    rc.validate();
    return rc;
}

// One full training run on already-loaded data; returns the trained model's
// validation report (the model ends holding its best parameters).
struct CellOutcome {
    TrainResult result;
    MetricReport report;
};

CellOutcome run_training(const RunConfig& rc, const LoadedData& data, std::ostream* live_log) {
    std::filesystem::create_directories(rc.out_dir);
    SeedStreams streams(rc.train.seed);
    Rng init_rng = streams.stream("init");
    CaptioningModel<float> model = CaptioningModel<float>::init(rc.model, init_rng);
    OptimizerState opt;
    CellOutcome cell;
    cell.result = train(model, opt, data.train, data.val, data.vocab, rc, live_log);
    cell.report = validation_report(model, data.val, data.vocab, rc.decode);
    return cell;
}

struct AblationGrid {
    std::vector<std::size_t> layers;
    std::vector<std::size_t> memory_len;
    std::vector<bool> recurrence;
};

std::size_t grid_size_value(const std::string& dim, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("grid dimension '" + dim + "' wants non-negative integers, got '" + v + "'");
    }
}

bool grid_bool_value(const std::string& dim, const std::string& v) {
    if (v == "on" || v == "true" || v == "1") return true;
    if (v == "off" || v == "false" || v == "0") return false;
    throw ConfigError("grid dimension '" + dim + "' wants on/off, got '" + v + "'");
}

// "layers=1,2,5;memory_len=1,2;recurrence=on,off"; omitted dimensions keep
// the base config's single value.
AblationGrid parse_grid(const std::string& spec, const ModelConfig& base) {
    AblationGrid g;
    g.layers = {base.layers};
    g.memory_len = {base.memory_len};
    g.recurrence = {base.recurrence};
    if (spec.empty()) return g;
    for (const std::string& dim : split(spec, ';')) {
        if (dim.empty()) throw ConfigError("empty grid dimension in '" + spec + "'");
        const std::size_t eq = dim.find('=');
        if (eq == std::string::npos)
            throw ConfigError("grid dimension '" + dim + "' is not of the form key=v1,v2,...");
        const std::string key = dim.substr(0, eq);
        const std::vector<std::string> values = split(dim.substr(eq + 1), ',');
        if (values.empty() || values.front().empty())
            throw ConfigError("grid dimension '" + key + "' has no values");
        if (key == "layers" || key == "memory_len") {
            std::vector<std::size_t> parsed;
            for (const auto& v : values) parsed.push_back(grid_size_value(key, v));
            (key == "layers" ? g.layers : g.memory_len) = std::move(parsed);
        } else if (key == "recurrence") {
            std::vector<bool> parsed;
            for (const auto& v : values) parsed.push_back(grid_bool_value(key, v));
            g.recurrence = std::move(parsed);
        } else {
            throw ConfigError("unknown grid dimension '" + key +
                              "' (expected layers, memory_len or recurrence)");
        }
    }
    return g;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, naa = 0.0, nbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        naa += a[i] * a[i];
        nbb += b[i] * b[i];
    }
    const double denom = std::sqrt(naa * nbb);
    return denom == 0.0 ? 0.0 : dot / denom;
}

}  // namespace

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        const std::size_t n_val = a.n_val != 0 ? a.n_val : std::max<std::size_t>(1, a.n_videos / 5);
        const SyntheticDataset ds = generate_synthetic(a.seed, a.n_videos, n_val, a.d_feat);
        std::filesystem::create_directories(a.out_dir);
        save_dataset(a.out_dir + "/train.jsonl", ds.train.videos);
        save_dataset(a.out_dir + "/val.jsonl", ds.val.videos);
        save_meta(a.out_dir + "/train_meta.tsv", ds.train.meta);
        save_meta(a.out_dir + "/val_meta.tsv", ds.val.meta);
        save_refs_tsv(a.out_dir + "/train_refs.tsv", ds.train.videos);
        save_refs_tsv(a.out_dir + "/val_refs.tsv", ds.val.videos);
        out << "wrote " << ds.train.videos.size() << " train / " << ds.val.videos.size()
            << " val videos to " << a.out_dir << '\n';
        return 0;
    });
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        RunConfig rc = merged_config(a.config_path, a.model, a.data_dir, a.out_dir, a.seed);
        const LoadedData data = load_train_val(rc);
        rc.model.vocab_size = data.vocab.size();
        out << "training " << to_string(rc.model.kind) << " on " << data.train.size()
            << " train / " << data.val.size() << " val videos, vocab " << data.vocab.size()
            << '\n';
        const CellOutcome cell = run_training(rc, data, &out);
        std::ofstream log(rc.out_dir + "/train.log");
        if (!log) throw TrainError("cannot write " + rc.out_dir + "/train.log");
        for (const auto& line : cell.result.log_lines) log << line << '\n';
        out << "best epoch=" << cell.result.best_epoch
            << " cider=" << fixed6(cell.result.best_cider) << " checkpoint "
            << cell.result.checkpoint_path << '\n';
        return 0;
    });
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        const MetricReport r = evaluate(a.pred_path, a.ref_path);
        out << "cider=" << fixed6(r.cider_d) << " bleu4=" << fixed6(r.bleu4)
            << " r4=" << fixed6(r.r4) << '\n';
        return 0;
    });
}

int cmd_decode(const DecodeArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        Checkpoint ckpt = load_checkpoint(a.checkpoint_path);
        const std::vector<VideoExample> data =
            load_dataset(a.data_path, ckpt.vocab, ckpt.config.model);
        std::vector<ParagraphPrediction> preds;
        preds.reserve(data.size());
        for (const auto& ex : data)
            preds.push_back(decode_paragraph(ckpt.model, ex, ckpt.vocab, ckpt.config.decode));
        save_predictions_tsv(a.out_path, preds);
        out << "wrote " << preds.size() << " paragraphs to " << a.out_path << '\n';
        return 0;
    });
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        bool all_ok = true;
        for (const ModelKind kind :
             {ModelKind::mart, ModelKind::vanilla, ModelKind::xl, ModelKind::xlrg}) {
            ModelConfig mc;
            std::uint64_t seed;
            if (!a.config_path.empty()) {
                RunConfig rc;
                load_config_file(rc, a.config_path);
                rc.validate();
                mc = rc.model;
                mc.kind = kind;
                seed = rc.train.seed;
            } else {
                mc = gradcheck_config(kind);
                seed = default_gradcheck_seed(kind);
            }
            const GradCheckResult res = check_model_gradients(mc, seed);
            for (const auto& [name, e] : res.per_param)
                out << "kind=" << to_string(kind) << " op=" << name
                    << " max_rel_err=" << sci3(e) << '\n';
            for (const auto& f : res.failures)
                out << "kind=" << to_string(kind) << " FAIL op=" << f.param << " index=" << f.index
                    << " analytic=" << f.analytic << " numeric=" << f.numeric
                    << " rel_err=" << sci3(f.rel_err) << '\n';
            out << "kind=" << to_string(kind) << " checked=" << res.checked
                << " max_rel_err=" << sci3(res.max_rel_err)
                << " status=" << (res.ok ? "PASS" : "FAIL") << '\n';
            all_ok = all_ok && res.ok;
        }
        out << "gradcheck: " << (all_ok ? "PASS" : "FAIL") << '\n';
        return all_ok ? 0 : 1;
    });
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        RunConfig base = merged_config(a.config_path, "", a.data_dir, a.out_dir, "");
        // The grid ablates the memory design, so the kind is pinned.
        base.model.kind = ModelKind::mart;
        const AblationGrid grid = parse_grid(a.grid, base.model);
        const LoadedData data = load_train_val(base);
        std::filesystem::create_directories(base.out_dir);
        std::ofstream table(base.out_dir + "/ablation.log");
        if (!table) throw TrainError("cannot write " + base.out_dir + "/ablation.log");
        for (const std::size_t layers : grid.layers) {
            for (const std::size_t memory_len : grid.memory_len) {
                for (const bool recurrence : grid.recurrence) {
                    RunConfig rc = base;
                    rc.model.layers = layers;
                    rc.model.memory_len = memory_len;
                    rc.model.recurrence = recurrence;
                    rc.model.vocab_size = data.vocab.size();
                    rc.out_dir = base.out_dir + "/cell_l" + std::to_string(layers) + "_m" +
                                 std::to_string(memory_len) + (recurrence ? "_re" : "_nore");
                    rc.validate();
                    const CellOutcome cell = run_training(rc, data, nullptr);
                    const std::string row =
                        "layers=" + std::to_string(layers) +
                        " memory_len=" + std::to_string(memory_len) +
                        " recurrence=" + (recurrence ? "on" : "off") +
                        " best_epoch=" + std::to_string(cell.result.best_epoch) +
                        " cider=" + fixed6(cell.report.cider_d) +
                        " bleu4=" + fixed6(cell.report.bleu4) + " r4=" + fixed6(cell.report.r4);
                    out << row << '\n';
                    table << row << '\n';
                }
            }
        }
        return 0;
    });
}

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream& err) {
    return guard(err, [&] {
        Checkpoint ckpt = load_checkpoint(a.checkpoint_path);
        if (ckpt.config.model.kind != ModelKind::mart || !ckpt.config.model.recurrence)
            throw ConfigError("retrieval reads the memory bank and needs a mart checkpoint "
                              "with recurrence enabled (got " +
                              to_string(ckpt.config.model.kind) + ")");
        const std::vector<VideoExample> data =
            load_dataset(a.data_path, ckpt.vocab, ckpt.config.model);
        if (data.empty()) throw DataError("dataset " + a.data_path + " is empty");

        // Final first-layer memory state per video, flattened to T_m * d.
        std::vector<std::pair<std::string, std::vector<double>>> vecs;
        for (const auto& ex : data) {
            auto fwd = ckpt.model.forward_paragraph(ex);
            const Tensor& m = fwd.final_state.memory.at(0);
            std::vector<double> v(m.data(), m.data() + m.numel());
            vecs.emplace_back(ex.video_id, std::move(v));
        }
        const auto query = std::find_if(vecs.begin(), vecs.end(),
                                        [&](const auto& p) { return p.first == a.query_id; });
        if (query == vecs.end())
            throw DataError("query video '" + a.query_id + "' is not in " + a.data_path);

        std::vector<std::pair<double, std::string>> ranked;
        for (const auto& [id, v] : vecs) ranked.emplace_back(cosine(query->second, v), id);
        std::sort(ranked.begin(), ranked.end(), [](const auto& x, const auto& y) {
            return x.first != y.first ? x.first > y.first : x.second < y.second;
        });
        const std::size_t k = std::min(a.k, ranked.size());
        for (std::size_t i = 0; i < k; ++i)
            out << (i + 1) << '\t' << ranked[i].second << '\t' << fixed6(ranked[i].first) << '\n';
        return 0;
    });
}

int run_cli(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"memory-augmented recurrent transformer for video paragraph captioning"};
    app.require_subcommand(1);

    SynthArgs sa;
    CLI::App* synth = app.add_subcommand("synth", "generate the synthetic coherence corpus");
    synth->add_option("--seed", sa.seed, "generator seed");
    synth->add_option("--n-videos", sa.n_videos, "number of training videos");
    synth->add_option("--n-val", sa.n_val, "number of validation videos (default n-videos/5)");
    synth->add_option("--d-feat", sa.d_feat, "feature dimension");
    synth->add_option("--out", sa.out_dir, "output directory");

    TrainArgs ta;
    CLI::App* train = app.add_subcommand("train", "train a captioning model");
    train->add_option("--config", ta.config_path, "key = value config file");
    train->add_option("--model", ta.model, "vanilla | mart | xl | xlrg");
    train->add_option("--data", ta.data_dir, "directory with train.jsonl and val.jsonl");
    train->add_option("--out", ta.out_dir, "output directory for checkpoint and log");
    train->add_option("--seed", ta.seed, "seed override");

    EvalArgs ea;
    CLI::App* eval = app.add_subcommand("eval", "score a predictions file against references");
    eval->add_option("--pred", ea.pred_path, "predictions .tsv")->required();
    eval->add_option("--ref", ea.ref_path, "references .tsv")->required();

    DecodeArgs da;
    CLI::App* decode = app.add_subcommand("decode", "greedy-decode paragraphs from a checkpoint");
    decode->add_option("--checkpoint", da.checkpoint_path, "model checkpoint")->required();
    decode->add_option("--data", da.data_path, "dataset .jsonl file")->required();
    decode->add_option("--out", da.out_path, "predictions .tsv to write")->required();

    GradcheckArgs ga;
    CLI::App* gradcheck =
        app.add_subcommand("gradcheck", "finite-difference check of all four model kinds");
    gradcheck->add_option("--config", ga.config_path, "config overriding the d=8 check geometry");

    AblateArgs aa;
    CLI::App* ablate = app.add_subcommand("ablate", "train the layers x memory x recurrence grid");
    ablate->add_option("--config", aa.config_path, "key = value config file");
    ablate->add_option("--data", aa.data_dir, "directory with train.jsonl and val.jsonl");
    ablate->add_option("--out", aa.out_dir, "output directory for cells and table");
    ablate->add_option("--grid", aa.grid, "e.g. layers=1,2,5;memory_len=1,2,5;recurrence=on,off");

    RetrieveArgs ra;
    CLI::App* retrieve =
        app.add_subcommand("retrieve", "rank videos by final first-layer memory similarity");
    retrieve->add_option("--checkpoint", ra.checkpoint_path, "mart checkpoint")->required();
    retrieve->add_option("--data", ra.data_path, "dataset .jsonl file")->required();
    retrieve->add_option("--query-id", ra.query_id, "video id to query")->required();
    retrieve->add_option("--k", ra.k, "neighbors to print");

    try {
        std::reverse(args.begin(), args.end());  // CLI11 consumes from the back
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    if (*synth) return cmd_synth(sa, out, err);
    if (*train) return cmd_train(ta, out, err);
    if (*eval) return cmd_eval(ea, out, err);
    if (*decode) return cmd_decode(da, out, err);
    if (*gradcheck) return cmd_gradcheck(ga, out, err);
    if (*ablate) return cmd_ablate(aa, out, err);
    if (*retrieve) return cmd_retrieve(ra, out, err);
    err << "error: no command\n";
    return 2;
}

}  // namespace mart
