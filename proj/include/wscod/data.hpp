// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wscod/tensor.hpp"

namespace wscod::data {

namespace fs = std::filesystem;

/// Inclusive pixel box.
struct Box {
    std::size_t row0 = 0;
    std::size_t col0 = 0;
    std::size_t row1 = 0;
    std::size_t col1 = 0;

    [[nodiscard]] bool contains(std::size_t r, std::size_t c) const {
        return r >= row0 && r <= row1 && c >= col0 && c <= col1;
    }
    [[nodiscard]] bool intersects(const Box& o) const {
        return row0 <= o.row1 && o.row0 <= row1 && col0 <= o.col1 && o.col0 <= col1;
    }
    bool operator==(const Box&) const = default;
};

/// Tight box around the pixels of an H x W mask that are > 0.5.
Box bbox_from_mask(const Array& mask);
/// H x W map that is 1 inside the box.
Array rasterize_box(const Box& box, std::size_t height, std::size_t width);

// 8-bit binary Netpbm I/O. Values in [0, 1] are stored as round(255 v).
void write_ppm(const fs::path& path, const Array& rgb);
Array read_ppm(const fs::path& path);
void write_pgm(const fs::path& path, const Array& gray);
Array read_pgm(const fs::path& path);
/// Rounds every value to the nearest multiple of 1/255, as a write/read round trip would.
Array quantize(const Array& a);

enum class Split { Train, Test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct GeneratorParams {
    std::size_t count = 200;
    std::size_t height = 64;
    std::size_t width = 64;
    double difficulty = 0.5;
    std::uint64_t seed = 0;
    double test_fraction = 0.2;

    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;
};

struct Sample {
    Array image;               ///< 3 x H x W in [0, 1]
    std::vector<Array> masks;  ///< per-instance H x W binary maps, pairwise disjoint
    std::vector<Box> boxes;    ///< tight box of each mask
};

/// The index-th sample of the corpus described by `params`. Pure function of its arguments.
Sample generate_sample(const GeneratorParams& params, std::size_t index);

/// Union of all instance masks.
Array union_mask(const std::vector<Array>& masks);

struct SampleRecord {
    std::string id;
    Split split = Split::Train;
    std::uint64_t seed = 0;
    std::string image;               ///< relative to the dataset root
    std::string ground_truth;        ///< union mask, relative
    std::vector<std::string> masks;  ///< instance masks, relative
    std::vector<Box> boxes;
};

struct Manifest {
    static constexpr int kVersion = 1;
    GeneratorParams params;
    std::vector<SampleRecord> samples;
    fs::path root;

    [[nodiscard]] std::vector<const SampleRecord*> split(Split s) const;
};

inline constexpr const char* kManifestName = "manifest.txt";

/// Validates params, then writes images, masks and the manifest under `root`.
Manifest generate_dataset(const GeneratorParams& params, const fs::path& root);
void save_manifest(const Manifest& m);
Manifest load_manifest(const fs::path& root);

/// Image and boxes of a record; instance masks only when asked for.
Sample load_sample(const Manifest& m, const SampleRecord& r, bool with_masks);

/// FNV-1a over the relative path and bytes of every regular file under `root`, in sorted order.
std::uint64_t directory_hash(const fs::path& root);

/// Records every path the readers above open while active. Thread-safe.
class FileAudit {
public:
    static void begin();
    static std::vector<std::string> end();
    static void record(const fs::path& p);
};

}  // namespace wscod::data
