// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "wscod/hash.hpp"
#include "wscod/params.hpp"

namespace wscod::data {

// ---------------------------------------------------------------- boxes

Box bbox_from_mask(const Array& mask) {
    if (mask.shape.size() != 2) {
        throw ShapeError("bbox_from_mask expects an H x W mask, got " + shape_str(mask.shape));
    }
    const std::size_t h = mask.shape[0];
    const std::size_t w = mask.shape[1];
    Box b{h, w, 0, 0};
    bool any = false;
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (mask[r * w + c] > 0.5) {
                any = true;
                b.row0 = std::min(b.row0, r);
                b.col0 = std::min(b.col0, c);
                b.row1 = std::max(b.row1, r);
                b.col1 = std::max(b.col1, c);
            }
        }
    }
    if (!any) {
        throw std::invalid_argument("bbox_from_mask: mask has no positive pixel");
    }
    return b;
}

Array rasterize_box(const Box& box, std::size_t height, std::size_t width) {
    if (box.row1 >= height || box.col1 >= width || box.row0 > box.row1 || box.col0 > box.col1) {
        throw std::invalid_argument("box does not fit a " + std::to_string(height) + "x" + std::to_string(width) +
                                    " image");
    }
    Array out(Shape{height, width}, 0.0);
    for (std::size_t r = box.row0; r <= box.row1; ++r) {
        for (std::size_t c = box.col0; c <= box.col1; ++c) {
            out[r * width + c] = 1.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------- netpbm

namespace {

std::mutex g_audit_mutex;
bool g_audit_active = false;
std::vector<std::string> g_audit_paths;

unsigned char to_byte(double v) {
    if (!std::isfinite(v)) {
        throw std::invalid_argument("cannot store a non-finite pixel value");
    }
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_netpbm(const fs::path& path, const char* magic, std::size_t h, std::size_t w,
                  const std::vector<unsigned char>& bytes) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << magic << '\n' << w << ' ' << h << '\n' << 255 << '\n';
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

std::vector<unsigned char> read_netpbm(const fs::path& path, const char* magic, std::size_t& h, std::size_t& w,
                                       std::size_t planes) {
    FileAudit::record(path);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::string m;
    std::size_t maxval = 0;
    in >> m >> w >> h >> maxval;
    if (m != magic || maxval != 255 || w == 0 || h == 0) {
        throw std::runtime_error(path.string() + ": not an 8-bit " + magic + " file");
    }
    in.get();
    std::vector<unsigned char> bytes(h * w * planes);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw std::runtime_error(path.string() + ": truncated pixel data");
    }
    return bytes;
}

}  // namespace

void write_ppm(const fs::path& path, const Array& rgb) {
    if (rgb.shape.size() != 3 || rgb.shape[0] != 3) {
        throw ShapeError("write_ppm expects 3 x H x W, got " + shape_str(rgb.shape));
    }
    const std::size_t h = rgb.shape[1];
    const std::size_t w = rgb.shape[2];
    std::vector<unsigned char> bytes(3 * h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            bytes[3 * i + c] = to_byte(rgb[c * h * w + i]);
        }
    }
    write_netpbm(path, "P6", h, w, bytes);
}

Array read_ppm(const fs::path& path) {
    std::size_t h = 0;
    std::size_t w = 0;
    const auto bytes = read_netpbm(path, "P6", h, w, 3);
    Array out(Shape{3, h, w});
    for (std::size_t i = 0; i < h * w; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            out[c * h * w + i] = bytes[3 * i + c] / 255.0;
        }
    }
    return out;
}

void write_pgm(const fs::path& path, const Array& gray) {
    if (gray.shape.size() != 2) {
        throw ShapeError("write_pgm expects H x W, got " + shape_str(gray.shape));
    }
    std::vector<unsigned char> bytes(gray.size());
    for (std::size_t i = 0; i < gray.size(); ++i) {
        bytes[i] = to_byte(gray[i]);
    }
    write_netpbm(path, "P5", gray.shape[0], gray.shape[1], bytes);
}

Array read_pgm(const fs::path& path) {
    std::size_t h = 0;
    std::size_t w = 0;
    const auto bytes = read_netpbm(path, "P5", h, w, 1);
    Array out(Shape{h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        out[i] = bytes[i] / 255.0;
    }
    return out;
}

Array quantize(const Array& a) {
    Array out = a;
    for (auto& v : out.data) {
        v = to_byte(v) / 255.0;
    }
    return out;
}

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
    if (s == "train") {
        return Split::Train;
    }
    if (s == "test") {
        return Split::Test;
    }
    throw std::invalid_argument("unknown split '" + s + "'");
}

// ---------------------------------------------------------------- generator

void GeneratorParams::validate() const {
    if (height < 32 || height > 128 || width < 32 || width > 128) {
        throw std::invalid_argument("image size must lie in [32, 128], got " + std::to_string(height) + "x" +
                                    std::to_string(width));
    }
    if (!(difficulty >= 0.0 && difficulty <= 1.0)) {
        throw std::invalid_argument("difficulty must lie in [0, 1]");
    }
    if (count == 0) {
        throw std::invalid_argument("sample count must be positive");
    }
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
        throw std::invalid_argument("test fraction must lie in [0, 1)");
    }
}

namespace {

// Smooth value noise: a coarse lattice of normal draws, bicubic-free smoothstep
// interpolation, two octaves. Roughly zero mean and unit spread.
Array value_noise(std::size_t h, std::size_t w, Rng& rng) {
    Array out(Shape{h, w}, 0.0);
    std::normal_distribution<double> n01(0.0, 1.0);
    const std::pair<double, double> octaves[] = {{8.0, 0.8}, {4.0, 0.6}};
    for (const auto& [cell, weight] : octaves) {
        const auto gh = static_cast<std::size_t>(std::ceil(h / cell)) + 2;
        const auto gw = static_cast<std::size_t>(std::ceil(w / cell)) + 2;
        std::vector<double> lattice(gh * gw);
        for (auto& v : lattice) {
            v = n01(rng);
        }
        const double oy = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        const double ox = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        for (std::size_t r = 0; r < h; ++r) {
            const double fy = r / cell + oy;
            const auto y0 = static_cast<std::size_t>(fy);
            double ty = fy - y0;
            ty = ty * ty * (3.0 - 2.0 * ty);
            for (std::size_t c = 0; c < w; ++c) {
                const double fx = c / cell + ox;
                const auto x0 = static_cast<std::size_t>(fx);
                double tx = fx - x0;
                tx = tx * tx * (3.0 - 2.0 * tx);
                const double a = lattice[y0 * gw + x0];
                const double b = lattice[y0 * gw + x0 + 1];
                const double cc = lattice[(y0 + 1) * gw + x0];
                const double d = lattice[(y0 + 1) * gw + x0 + 1];
                out[r * w + c] += weight * ((a * (1 - tx) + b * tx) * (1 - ty) + (cc * (1 - tx) + d * tx) * ty);
            }
        }
    }
    return out;
}

bool point_in_polygon(double y, double x, const std::vector<std::pair<double, double>>& poly) {
    bool inside = false;
    for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
        const auto [yi, xi] = poly[i];
        const auto [yj, xj] = poly[j];
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
    }
    return inside;
}

Array random_shape(std::size_t h, std::size_t w, Rng& rng) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const double side = static_cast<double>(std::min(h, w));
    const double radius = side * (0.12 + 0.12 * u01(rng));
    const double cy = radius + 1.0 + u01(rng) * (static_cast<double>(h) - 2.0 * radius - 2.0);
    const double cx = radius + 1.0 + u01(rng) * (static_cast<double>(w) - 2.0 * radius - 2.0);
    Array mask(Shape{h, w}, 0.0);
    if (u01(rng) < 0.5) {
        double amp[3];
        double phase[3];
        for (int k = 0; k < 3; ++k) {
            amp[k] = 0.15 * u01(rng);
            phase[k] = 2.0 * std::numbers::pi * u01(rng);
        }
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                const double dy = r + 0.5 - cy;
                const double dx = c + 0.5 - cx;
                const double theta = std::atan2(dy, dx);
                double rad = 1.0;
                for (int k = 0; k < 3; ++k) {
                    rad += amp[k] * std::cos((k + 2) * theta + phase[k]);
                }
                mask[r * w + c] = std::hypot(dy, dx) <= radius * rad ? 1.0 : 0.0;
            }
        }
    } else {
        const int vertices = 3 + static_cast<int>(u01(rng) * 5.0);
        std::vector<double> angles(static_cast<std::size_t>(vertices));
        for (auto& a : angles) {
            a = 2.0 * std::numbers::pi * u01(rng);
        }
        std::sort(angles.begin(), angles.end());
        std::vector<std::pair<double, double>> poly;
        for (double a : angles) {
            const double rr = radius * (0.7 + 0.3 * u01(rng));
            poly.emplace_back(cy + rr * std::sin(a), cx + rr * std::cos(a));
        }
        for (std::size_t r = 0; r < h; ++r) {
            for (std::size_t c = 0; c < w; ++c) {
                mask[r * w + c] = point_in_polygon(r + 0.5, c + 0.5, poly) ? 1.0 : 0.0;
            }
        }
    }
    return mask;
}

// True when `mask` keeps a two-pixel gap to every pixel of `occupied`.
bool clear_of(const Array& mask, const Array& occupied, std::size_t h, std::size_t w) {
    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            if (mask[r * w + c] == 0.0) {
                continue;
            }
            for (std::size_t y = r > 2 ? r - 2 : 0; y <= std::min(h - 1, r + 2); ++y) {
                for (std::size_t x = c > 2 ? c - 2 : 0; x <= std::min(w - 1, c + 2); ++x) {
                    if (occupied[y * w + x] != 0.0) {
                        return false;
                    }
                }
            }
        }
    }
    return true;
}

double mask_area(const Array& m) {
    double a = 0.0;
    for (double v : m.data) {
        a += v;
    }
    return a;
}

}  // namespace

Array union_mask(const std::vector<Array>& masks) {
    if (masks.empty()) {
        throw std::invalid_argument("union_mask needs at least one mask");
    }
    Array out(masks.front().shape, 0.0);
    for (const auto& m : masks) {
        if (m.shape != out.shape) {
            throw ShapeError("union_mask: masks disagree in shape");
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            out[i] = std::max(out[i], m[i] > 0.5 ? 1.0 : 0.0);
        }
    }
    return out;
}

Sample generate_sample(const GeneratorParams& params, std::size_t index) {
    params.validate();
    const std::size_t h = params.height;
    const std::size_t w = params.width;
    const double d = params.difficulty;
    Rng rng(derive_seed(params.seed, {0x5a3b1e, index}));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    Sample s;
    const int wanted = 1 + static_cast<int>(u01(rng) * 3.0);
    Array occupied(Shape{h, w}, 0.0);
    for (int attempt = 0; attempt < 200 && static_cast<int>(s.masks.size()) < wanted; ++attempt) {
        Array m = random_shape(h, w, rng);
        if (mask_area(m) < 24.0 || !clear_of(m, occupied, h, w)) {
            continue;
        }
        for (std::size_t i = 0; i < m.size(); ++i) {
            occupied[i] = std::max(occupied[i], m[i]);
        }
        s.boxes.push_back(bbox_from_mask(m));
        s.masks.push_back(std::move(m));
    }
    if (s.masks.empty()) {
        throw std::runtime_error("generator failed to place a shape for sample " + std::to_string(index));
    }

    // Background and foreground share a texture spectrum; the foreground mean is
    // shifted by a gap that shrinks with difficulty while the texture grows.
    const double gap = 0.05 + 0.33 * (1.0 - d);
    const double amp = 0.06 + 0.10 * d;
    const double lum = 0.3 + 0.4 * u01(rng);
    const double sign = lum > 0.5 ? -1.0 : 1.0;
    double bg_base[3];
    double fg_base[3];
    for (int c = 0; c < 3; ++c) {
        bg_base[c] = lum + 0.16 * (u01(rng) - 0.5);
        fg_base[c] = bg_base[c] + sign * gap + 0.06 * (1.0 - d) * (u01(rng) - 0.5);
    }
    s.image = Array(Shape{3, h, w});
    const std::size_t plane = h * w;
    for (int c = 0; c < 3; ++c) {
        const Array bg_noise = value_noise(h, w, rng);
        const Array fg_noise = value_noise(h, w, rng);
        for (std::size_t i = 0; i < plane; ++i) {
            const bool fg = occupied[i] != 0.0;
            const double v = fg ? fg_base[c] + amp * fg_noise[i] : bg_base[c] + amp * bg_noise[i];
            s.image[c * plane + i] = v;
        }
    }
    s.image = quantize(s.image);
    return s;
}

// ---------------------------------------------------------------- manifest

std::vector<const SampleRecord*> Manifest::split(Split s) const {
    std::vector<const SampleRecord*> out;
    for (const auto& r : samples) {
        if (r.split == s) {
            out.push_back(&r);
        }
    }
    return out;
}

namespace {

std::string sample_id(std::size_t i) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << i;
    return os.str();
}

std::string encode_boxes(const std::vector<Box>& boxes) {
    std::ostringstream os;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const auto& b = boxes[i];
        os << (i ? ";" : "") << b.row0 << ':' << b.col0 << ':' << b.row1 << ':' << b.col1;
    }
    return os.str();
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) {
        out.push_back(cur);
    }
    return out;
}

std::vector<Box> decode_boxes(const std::string& s) {
    std::vector<Box> out;
    for (const auto& part : split_on(s, ';')) {
        const auto f = split_on(part, ':');
        if (f.size() != 4) {
            throw std::runtime_error("malformed box '" + part + "'");
        }
        out.push_back(Box{std::stoul(f[0]), std::stoul(f[1]), std::stoul(f[2]), std::stoul(f[3])});
    }
    return out;
}

constexpr const char* kMagic = "WSCOD-MANIFEST";

}  // namespace

Manifest generate_dataset(const GeneratorParams& params, const fs::path& root) {
    params.validate();
    Manifest m;
    m.params = params;
    m.root = root;
    const auto n_test = static_cast<std::size_t>(std::lround(static_cast<double>(params.count) * params.test_fraction));
    fs::create_directories(root);
    for (std::size_t i = 0; i < params.count; ++i) {
        const Sample s = generate_sample(params, i);
        SampleRecord r;
        r.id = sample_id(i);
        r.split = i + n_test >= params.count ? Split::Test : Split::Train;
        r.seed = derive_seed(params.seed, {0x5a3b1e, i});
        r.image = "images/" + r.id + ".ppm";
        r.ground_truth = "gt/" + r.id + ".pgm";
        write_ppm(root / r.image, s.image);
        write_pgm(root / r.ground_truth, union_mask(s.masks));
        for (std::size_t j = 0; j < s.masks.size(); ++j) {
            r.masks.push_back("masks/" + r.id + "_" + std::to_string(j) + ".pgm");
            write_pgm(root / r.masks.back(), s.masks[j]);
        }
        r.boxes = s.boxes;
        m.samples.push_back(std::move(r));
    }
    save_manifest(m);
    return m;
}

void save_manifest(const Manifest& m) {
    std::ofstream out(m.root / kManifestName, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write manifest under " + m.root.string());
    }
    const auto& p = m.params;
    out << kMagic << ' ' << Manifest::kVersion << '\n';
    out << "count=" << p.count << '\n'
        << "height=" << p.height << '\n'
        << "width=" << p.width << '\n'
        << "difficulty=" << std::setprecision(17) << p.difficulty << '\n'
        << "seed=" << p.seed << '\n'
        << "test_fraction=" << std::setprecision(17) << p.test_fraction << '\n';
    for (const auto& r : m.samples) {
        std::string masks;
        for (std::size_t j = 0; j < r.masks.size(); ++j) {
            masks += (j ? "," : "") + r.masks[j];
        }
        out << "sample id=" << r.id << " split=" << to_string(r.split) << " seed=" << r.seed << " image=" << r.image
            << " gt=" << r.ground_truth << " masks=" << masks << " boxes=" << encode_boxes(r.boxes) << '\n';
    }
}

Manifest load_manifest(const fs::path& root) {
    const fs::path path = root / kManifestName;
    FileAudit::record(path);
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("no dataset manifest at " + path.string());
    }
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != kMagic || version != Manifest::kVersion) {
        throw std::runtime_error(path.string() + ": not a version " + std::to_string(Manifest::kVersion) +
                                 " manifest");
    }
    Manifest m;
    m.root = root;
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        if (line.starts_with("sample ")) {
            SampleRecord r;
            std::istringstream is(line.substr(7));
            std::string tok;
            while (is >> tok) {
                const auto eq = tok.find('=');
                if (eq == std::string::npos) {
                    throw std::runtime_error("malformed manifest token '" + tok + "'");
                }
                const std::string key = tok.substr(0, eq);
                const std::string val = tok.substr(eq + 1);
                if (key == "id") {
                    r.id = val;
                } else if (key == "split") {
                    r.split = parse_split(val);
                } else if (key == "seed") {
                    r.seed = std::stoull(val);
                } else if (key == "image") {
                    r.image = val;
                } else if (key == "gt") {
                    r.ground_truth = val;
                } else if (key == "masks") {
                    r.masks = split_on(val, ',');
                } else if (key == "boxes") {
                    r.boxes = decode_boxes(val);
                } else {
                    throw std::runtime_error("unknown manifest key '" + key + "'");
                }
            }
            m.samples.push_back(std::move(r));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error("malformed manifest line '" + line + "'");
        }
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "count") {
            m.params.count = std::stoul(val);
        } else if (key == "height") {
            m.params.height = std::stoul(val);
        } else if (key == "width") {
            m.params.width = std::stoul(val);
        } else if (key == "difficulty") {
            m.params.difficulty = std::stod(val);
        } else if (key == "seed") {
            m.params.seed = std::stoull(val);
        } else if (key == "test_fraction") {
            m.params.test_fraction = std::stod(val);
        } else {
            throw std::runtime_error("unknown manifest key '" + key + "'");
        }
    }
    if (m.samples.size() != m.params.count) {
        throw std::runtime_error(path.string() + ": expected " + std::to_string(m.params.count) + " samples, found " +
                                 std::to_string(m.samples.size()));
    }
    return m;
}

Sample load_sample(const Manifest& m, const SampleRecord& r, bool with_masks) {
    Sample s;
    s.image = read_ppm(m.root / r.image);
    if (s.image.shape != Shape{3, m.params.height, m.params.width}) {
        throw std::runtime_error(r.image + ": image size does not match the manifest");
    }
    s.boxes = r.boxes;
    if (with_masks) {
        for (const auto& p : r.masks) {
            s.masks.push_back(read_pgm(m.root / p));
        }
    }
    return s;
}

std::uint64_t directory_hash(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) {
            files.push_back(e.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = kFnvOffset;
    for (const auto& f : files) {
        h = fnv1a(fs::relative(f, root).generic_string(), h);
        std::ifstream in(f, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        h = fnv1a(buf.str(), h);
    }
    return h;
}

void FileAudit::begin() {
    std::lock_guard lock(g_audit_mutex);
    g_audit_active = true;
    g_audit_paths.clear();
}

std::vector<std::string> FileAudit::end() {
    std::lock_guard lock(g_audit_mutex);
    g_audit_active = false;
    return std::exchange(g_audit_paths, {});
}

void FileAudit::record(const fs::path& p) {
    std::lock_guard lock(g_audit_mutex);
    if (g_audit_active) {
        g_audit_paths.push_back(p.lexically_normal().generic_string());
    }
}

}  // namespace wscod::data
