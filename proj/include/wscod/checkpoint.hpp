// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wscod/params.hpp"

namespace wscod::ckpt {

namespace fs = std::filesystem;

/// Binary container: "WSCODCK1" magic, then little-endian fields. Every
/// array is stored as f64 with its shape and trainable flag.
struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::string kind;
    std::string config_hash;
    std::uint64_t step = 0;
    std::map<std::string, std::string> meta;
    std::vector<std::pair<std::string, ParameterSet>> groups;

    [[nodiscard]] bool has_group(const std::string& name) const;
    [[nodiscard]] const ParameterSet& group(const std::string& name) const;
    void set_group(const std::string& name, ParameterSet params);
    [[nodiscard]] const std::string& meta_at(const std::string& key) const;
};

std::string serialize(const Checkpoint& c);
Checkpoint deserialize(const std::string& bytes, const std::string& origin = "<memory>");

/// Writes via a temporary file and rename so readers never see a torn file.
void save(const Checkpoint& c, const fs::path& path);
Checkpoint load(const fs::path& path);

/// Named-array map (e.g. optimizer buffers) as a frozen ParameterSet, and back.
ParameterSet from_map(const std::map<std::string, Array>& arrays);
std::map<std::string, Array> to_map(const ParameterSet& params);

/// FNV-1a over names, shapes and values.
std::uint64_t params_hash(const ParameterSet& params);

}  // namespace wscod::ckpt
