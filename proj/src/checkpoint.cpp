// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "wscod/hash.hpp"

namespace wscod::ckpt {
namespace {

constexpr std::string_view kMagic = "WSCODCK1";

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::string origin) : bytes_(bytes), origin_(std::move(origin)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        }
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::string raw(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }
    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(origin_ + ": " + what + " at byte " + std::to_string(pos_));
    }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            fail("truncated checkpoint");
        }
    }

    const std::string& bytes_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace

bool Checkpoint::has_group(const std::string& name) const {
    for (const auto& [n, p] : groups) {
        if (n == name) {
            return true;
        }
    }
    return false;
}

const ParameterSet& Checkpoint::group(const std::string& name) const {
    for (const auto& [n, p] : groups) {
        if (n == name) {
            return p;
        }
    }
    throw std::out_of_range("checkpoint has no group '" + name + "'");
}

void Checkpoint::set_group(const std::string& name, ParameterSet params) {
    for (auto& [n, p] : groups) {
        if (n == name) {
            p = std::move(params);
            return;
        }
    }
    groups.emplace_back(name, std::move(params));
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) {
        throw std::out_of_range("checkpoint has no metadata key '" + key + "'");
    }
    return it->second;
}

std::string serialize(const Checkpoint& c) {
    Writer w;
    w.raw(kMagic);
    w.u32(Checkpoint::kVersion);
    w.str(c.kind);
    w.str(c.config_hash);
    w.u64(c.step);
    w.u32(static_cast<std::uint32_t>(c.meta.size()));
    for (const auto& [k, v] : c.meta) {
        w.str(k);
        w.str(v);
    }
    w.u32(static_cast<std::uint32_t>(c.groups.size()));
    for (const auto& [name, params] : c.groups) {
        w.str(name);
        w.u32(static_cast<std::uint32_t>(params.size()));
        for (const auto& e : params.entries()) {
            w.str(e.name);
            w.u8(e.trainable ? 1 : 0);
            w.u32(static_cast<std::uint32_t>(e.value.shape.size()));
            for (auto d : e.value.shape) {
                w.u64(d);
            }
            for (double v : e.value.data) {
                w.f64(v);
            }
        }
    }
    return w.take();
}

Checkpoint deserialize(const std::string& bytes, const std::string& origin) {
    Reader r(bytes, origin);
    if (bytes.size() < kMagic.size() || r.raw(kMagic.size()) != kMagic) {
        r.fail("not a wscod checkpoint");
    }
    if (const auto v = r.u32(); v != Checkpoint::kVersion) {
        r.fail("unsupported checkpoint version " + std::to_string(v));
    }
    Checkpoint c;
    c.kind = r.str();
    c.config_hash = r.str();
    c.step = r.u64();
    for (std::uint32_t n = r.u32(); n > 0; --n) {
        std::string k = r.str();
        c.meta[k] = r.str();
    }
    for (std::uint32_t g = r.u32(); g > 0; --g) {
        std::string name = r.str();
        ParameterSet params;
        for (std::uint32_t n = r.u32(); n > 0; --n) {
            std::string pname = r.str();
            const bool trainable = r.u8() != 0;
            Shape shape(r.u32());
            for (auto& d : shape) {
                d = r.u64();
            }
            Array a(shape);
            for (auto& v : a.data) {
                v = r.f64();
            }
            params.add(std::move(pname), std::move(a), trainable);
        }
        c.groups.emplace_back(std::move(name), std::move(params));
    }
    if (!r.done()) {
        r.fail("trailing bytes");
    }
    return c;
}

void save(const Checkpoint& c, const fs::path& path) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        const std::string bytes = serialize(c);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw std::runtime_error(tmp.string() + ": write failed");
        }
    }
    fs::rename(tmp, path);
}

Checkpoint load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error(path.string() + ": cannot open checkpoint");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize(buf.str(), path.string());
}

ParameterSet from_map(const std::map<std::string, Array>& arrays) {
    ParameterSet p;
    for (const auto& [name, a] : arrays) {
        p.add(name, a, false);
    }
    return p;
}

std::map<std::string, Array> to_map(const ParameterSet& params) {
    std::map<std::string, Array> out;
    for (const auto& e : params.entries()) {
        out.emplace(e.name, e.value);
    }
    return out;
}

std::uint64_t params_hash(const ParameterSet& params) {
    std::uint64_t h = kFnvOffset;
    for (const auto& e : params.entries()) {
        h = fnv1a(e.name, h);
        h = fnv1a(shape_str(e.value.shape), h);
        h = fnv1a(std::string_view(reinterpret_cast<const char*>(e.value.data.data()),
                                   e.value.data.size() * sizeof(double)),
                  h);
    }
    return h;
}

}  // namespace wscod::ckpt
