// Copyright (c) 2026 mart contributors
// SPDX-License-Identifier: Apache-2.0

#include "mart/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

namespace mart {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'T', 'C'};
constexpr std::uint32_t kVersion = 1;

// --- little-endian primitives -------------------------------------------

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int s = 0; s < 32; s += 8) out.push_back(char((v >> s) & 0xff));
}

void put_f32(std::string& out, float x) { put_u32(out, std::bit_cast<std::uint32_t>(x)); }

struct Reader {
    std::string bytes;
    std::size_t pos = 0;
    const std::string& path;

    explicit Reader(const std::string& p) : path(p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw CheckpointError("cannot open checkpoint " + p);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes = ss.str();
    }
    void need(std::size_t n) {
        if (pos + n > bytes.size()) throw CheckpointError("truncated checkpoint " + path);
    }
    std::uint8_t u8() {
        need(1);
        return std::uint8_t(bytes[pos++]);
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = std::uint16_t(std::uint8_t(bytes[pos])) |
                          std::uint16_t(std::uint8_t(bytes[pos + 1])) << 8;
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(std::uint8_t(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string str(std::size_t n) {
        need(n);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
};

void append_tensor(std::string& out, const std::string& name, const Shape& shape,
                   const float* data, std::size_t numel) {
    if (name.size() > 0xffff) throw CheckpointError("tensor name too long: " + name);
    put_u16(out, std::uint16_t(name.size()));
    out += name;
    out.push_back(char(shape.size()));
    for (std::size_t d : shape) put_u32(out, std::uint32_t(d));
    for (std::size_t i = 0; i < numel; ++i) put_f32(out, data[i]);
}

struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<float> data;
};

}  // namespace

void save_checkpoint(const std::string& path, const CaptioningModel<float>& model,
                     const Vocabulary& vocab, const RunConfig& config,
                     const OptimizerState* optim) {
    // The registry visitor is non-const but this pass only reads.
    auto& m = const_cast<CaptioningModel<float>&>(model);

    std::string body;
    std::uint32_t count = 0;
    std::string tensors;
    m.for_each_param([&](const std::string& name, Tensor& t, bool) {
        append_tensor(tensors, name, t.shape(), t.data(), t.numel());
        ++count;
    });
    if (optim != nullptr) {
        m.for_each_param([&](const std::string& name, Tensor& t, bool) {
            const auto it = optim->slots.find(name);
            if (it == optim->slots.end()) return;
            std::vector<float> buf(t.numel());
            for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(it->second.m[i]);
            append_tensor(tensors, "optim.m." + name, t.shape(), buf.data(), buf.size());
            for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(it->second.v[i]);
            append_tensor(tensors, "optim.v." + name, t.shape(), buf.data(), buf.size());
            count += 2;
        });
    }

    std::vector<std::string> lines;
    for (const auto& [k, v] : config.items()) lines.push_back(k + "=" + v);
    for (std::size_t i = Vocabulary::kUnk + 1; i < vocab.size(); ++i)
        lines.push_back("vocab." + std::to_string(i) + "=" + vocab.token(int(i)));
    if (optim != nullptr) lines.push_back("optim.step=" + std::to_string(optim->step));

    body.append(kMagic, 4);
    put_u32(body, kVersion);
    put_u32(body, count);
    body += tensors;
    put_u32(body, std::uint32_t(lines.size()));
    for (const auto& line : lines) {
        put_u32(body, std::uint32_t(line.size()));
        body += line;
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out.write(body.data(), std::streamsize(body.size()));
    if (!out) throw CheckpointError("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    Reader r(path);
    if (r.str(4) != std::string(kMagic, 4))
        throw CheckpointError("not a checkpoint (bad magic) in " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version) +
                              " in " + path + " (this build reads version 1)");

    const std::uint32_t count = r.u32();
    std::map<std::string, NamedTensor> by_name;
    std::vector<std::string> order;
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedTensor t;
        t.name = r.str(r.u16());
        const std::uint8_t rank = r.u8();
        std::size_t numel = 1;
        for (std::uint8_t k = 0; k < rank; ++k) {
            t.shape.push_back(r.u32());
            numel *= t.shape.back();
        }
        t.data.resize(numel);
        for (std::size_t k = 0; k < numel; ++k) t.data[k] = r.f32();
        if (by_name.count(t.name))
            throw CheckpointError("duplicate tensor " + t.name + " in " + path);
        order.push_back(t.name);
        by_name.emplace(t.name, std::move(t));
    }

    Checkpoint ckpt;
    std::map<int, std::string> vocab_entries;
    const std::uint32_t line_count = r.u32();
    for (std::uint32_t i = 0; i < line_count; ++i) {
        const std::string line = r.str(r.u32());
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw CheckpointError("malformed config line '" + line + "' in " + path);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key.rfind("vocab.", 0) == 0) {
            vocab_entries[std::stoi(key.substr(6))] = value;
        } else if (key == "optim.step") {
            ckpt.optim.step = std::stoull(value);
            ckpt.has_optim = true;
        } else {
            ckpt.config.set(key, value);
        }
    }

    for (const auto& [id, token] : vocab_entries) {
        const int got = ckpt.vocab.add(token);
        if (got != id)
            throw CheckpointError("vocabulary entry " + std::to_string(id) + "='" + token +
                                  "' out of order in " + path);
    }
    ckpt.config.model.vocab_size = ckpt.vocab.size();

    SeedStreams streams(0);
    Rng rng = streams.stream("checkpoint-load");
    ckpt.model = CaptioningModel<float>::init(ckpt.config.model, rng);

    std::size_t used = 0;
    ckpt.model.for_each_param([&](const std::string& name, Tensor& t, bool) {
        const auto it = by_name.find(name);
        if (it == by_name.end())
            throw CheckpointError("checkpoint " + path + " is missing tensor " + name);
        if (it->second.shape != t.shape())
            throw CheckpointError("tensor " + name + " is " + shape_str(it->second.shape) +
                                  " in " + path + " but the config wants " + shape_str(t.shape()));
        std::memcpy(t.data(), it->second.data.data(), t.numel() * sizeof(float));
        ++used;

        const auto mt = by_name.find("optim.m." + name);
        const auto vt = by_name.find("optim.v." + name);
        if (mt != by_name.end() && vt != by_name.end()) {
            AdamSlot& slot = ckpt.optim.slots[name];
            slot.m.assign(mt->second.data.begin(), mt->second.data.end());
            slot.v.assign(vt->second.data.begin(), vt->second.data.end());
            used += 2;
        }
    });
    if (used != by_name.size()) {
        // Identify one offending tensor for the message.
        std::map<std::string, bool> touched;
        ckpt.model.for_each_param([&](const std::string& name, Tensor&, bool) {
            touched[name] = true;
            touched["optim.m." + name] = true;
            touched["optim.v." + name] = true;
        });
        for (const auto& name : order)
            if (!touched.count(name))
                throw CheckpointError("unexpected tensor " + name + " in " + path);
    }
    return ckpt;
}

}  // namespace mart
