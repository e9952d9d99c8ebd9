// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/config.hpp"

#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>

namespace mart {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw ConfigError("config key '" + key + "' wants a boolean, got '" + v + "'");
}

std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long long n = std::stoll(v, &pos);
        if (pos != v.size() || n < 0) throw std::invalid_argument(v);
        return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' wants a non-negative integer, got '" + v + "'");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const unsigned long long n = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::uint64_t>(n);
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' wants an unsigned integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "' wants a number, got '" + v + "'");
    }
}

std::string fmt_double(double x) {
    std::ostringstream os;
    os.precision(std::numeric_limits<double>::max_digits10);
    os << x;
    return os.str();
}

}  // namespace

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::vanilla: return "vanilla";
        case ModelKind::mart: return "mart";
        case ModelKind::xl: return "xl";
        case ModelKind::xlrg: return "xlrg";
    }
    return "?";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "vanilla") return ModelKind::vanilla;
    if (name == "mart") return ModelKind::mart;
    if (name == "xl") return ModelKind::xl;
    if (name == "xlrg") return ModelKind::xlrg;
    throw ConfigError("unknown model '" + name + "' (expected vanilla, mart, xl or xlrg)");
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const std::string v = trim(value);
    if (key == "model") model.kind = model_kind_from_string(v);
    else if (key == "d") model.d = parse_size(key, v);
    else if (key == "layers") model.layers = parse_size(key, v);
    else if (key == "heads") model.heads = parse_size(key, v);
    else if (key == "memory_len") model.memory_len = parse_size(key, v);
    else if (key == "ff_size") model.ff_size = parse_size(key, v);
    else if (key == "d_feat") model.d_feat = parse_size(key, v);
    else if (key == "max_video_len") model.max_video_len = parse_size(key, v);
    else if (key == "max_text_len") { model.max_text_len = parse_size(key, v); decode.max_text_len = model.max_text_len; }
    else if (key == "max_segments") model.max_segments = parse_size(key, v);
    else if (key == "dropout") model.dropout = parse_double(key, v);
    else if (key == "cross_step_gradients") model.cross_step_gradients = parse_bool(key, v);
    else if (key == "tie_embeddings") model.tie_embeddings = parse_bool(key, v);
    else if (key == "zero_init_memory") model.zero_init_memory = parse_bool(key, v);
    else if (key == "recurrence") model.recurrence = parse_bool(key, v);
    else if (key == "lr") train.lr = parse_double(key, v);
    else if (key == "beta1") train.beta1 = parse_double(key, v);
    else if (key == "beta2") train.beta2 = parse_double(key, v);
    else if (key == "weight_decay") train.weight_decay = parse_double(key, v);
    else if (key == "clip_norm") train.clip_norm = parse_double(key, v);
    else if (key == "warmup_epochs") train.warmup_epochs = parse_size(key, v);
    else if (key == "max_epochs") train.max_epochs = parse_size(key, v);
    else if (key == "batch_size") train.batch_size = parse_size(key, v);
    else if (key == "patience") train.patience = parse_size(key, v);
    else if (key == "eval_every") train.eval_every = parse_size(key, v);
    else if (key == "lr_decay") {
        if (v != "none" && v != "linear") throw ConfigError("lr_decay must be 'none' or 'linear', got '" + v + "'");
        train.lr_decay = v;
    }
    else if (key == "min_count") train.min_count = parse_size(key, v);
    else if (key == "seed") train.seed = parse_u64(key, v);
    else if (key == "train_data") train_data = v;
    else if (key == "val_data") val_data = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "checkpoint") checkpoint = v;
    else throw ConfigError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
    if (model.d == 0 || model.layers == 0 || model.heads == 0)
        throw ConfigError("d, layers and heads must all be >= 1");
    if (model.d % model.heads != 0)
        throw ConfigError("d (" + std::to_string(model.d) + ") must be divisible by heads (" +
                          std::to_string(model.heads) + ")");
    if (model.d % 2 != 0)
        throw ConfigError("d must be even for the sinusoidal positional encoding");
    if (model.kind == ModelKind::mart && model.memory_len == 0)
        throw ConfigError("memory_len must be >= 1 for the mart model");
    if (model.max_video_len == 0 || model.max_text_len == 0 || model.max_segments == 0)
        throw ConfigError("max_video_len, max_text_len and max_segments must all be >= 1");
    if (model.max_text_len < 2)
        throw ConfigError("max_text_len must be >= 2 to hold BOS and EOS");
    if (model.d_feat == 0) throw ConfigError("d_feat must be >= 1");
    if (model.dropout < 0.0 || model.dropout >= 1.0)
        throw ConfigError("dropout must be in [0, 1)");
    if (train.beta1 < 0.0 || train.beta1 >= 1.0 || train.beta2 < 0.0 || train.beta2 >= 1.0)
        throw ConfigError("beta1 and beta2 must be in [0, 1)");
    if (train.warmup_epochs > train.max_epochs)
        throw ConfigError("warmup_epochs must not exceed max_epochs");
    if (train.warmup_epochs == 0) throw ConfigError("warmup_epochs must be >= 1");
    if (train.batch_size == 0) throw ConfigError("batch_size must be >= 1");
    if (train.eval_every == 0) throw ConfigError("eval_every must be >= 1");
    if (train.min_count == 0) throw ConfigError("min_count must be >= 1");
    if (train.lr <= 0.0) throw ConfigError("lr must be positive");
    if (train.clip_norm < 0.0) throw ConfigError("clip_norm must be >= 0 (0 disables clipping)");
}

std::vector<std::pair<std::string, std::string>> RunConfig::items() const {
    std::vector<std::pair<std::string, std::string>> out;
    out.emplace_back("model", to_string(model.kind));
    out.emplace_back("d", std::to_string(model.d));
    out.emplace_back("layers", std::to_string(model.layers));
    out.emplace_back("heads", std::to_string(model.heads));
    out.emplace_back("memory_len", std::to_string(model.memory_len));
    out.emplace_back("ff_size", std::to_string(model.ff_size));
    out.emplace_back("d_feat", std::to_string(model.d_feat));
    out.emplace_back("max_video_len", std::to_string(model.max_video_len));
    out.emplace_back("max_text_len", std::to_string(model.max_text_len));
    out.emplace_back("max_segments", std::to_string(model.max_segments));
    out.emplace_back("dropout", fmt_double(model.dropout));
    out.emplace_back("cross_step_gradients", model.cross_step_gradients ? "true" : "false");
    out.emplace_back("tie_embeddings", model.tie_embeddings ? "true" : "false");
    out.emplace_back("zero_init_memory", model.zero_init_memory ? "true" : "false");
    out.emplace_back("recurrence", model.recurrence ? "true" : "false");
    out.emplace_back("lr", fmt_double(train.lr));
    out.emplace_back("beta1", fmt_double(train.beta1));
    out.emplace_back("beta2", fmt_double(train.beta2));
    out.emplace_back("weight_decay", fmt_double(train.weight_decay));
    out.emplace_back("clip_norm", fmt_double(train.clip_norm));
    out.emplace_back("warmup_epochs", std::to_string(train.warmup_epochs));
    out.emplace_back("max_epochs", std::to_string(train.max_epochs));
    out.emplace_back("batch_size", std::to_string(train.batch_size));
    out.emplace_back("patience", std::to_string(train.patience));
    out.emplace_back("eval_every", std::to_string(train.eval_every));
    out.emplace_back("lr_decay", train.lr_decay);
    out.emplace_back("min_count", std::to_string(train.min_count));
    out.emplace_back("seed", std::to_string(train.seed));
    return out;
}

void load_config_file(RunConfig& cfg, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value', got '" +
                              stripped + "'");
        }
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
        try {
            cfg.set(key, value);
        } catch (const ConfigError& e) {
            throw ConfigError(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

std::string config_summary(const RunConfig& cfg) {
    std::ostringstream os;
    bool first = true;
    for (const auto& [k, v] : cfg.items()) {
        if (!first) os << ' ';
        first = false;
        os << k << '=' << v;
    }
    return os.str();
}

}  // namespace mart
