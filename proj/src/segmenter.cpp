// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/segmenter.hpp"

#include <cmath>

#include "wscod/losses.hpp"

namespace wscod::seg {
namespace {

std::string block_name(std::size_t i) { return "block" + std::to_string(i); }

Array he_normal(Shape shape, std::size_t fan_in, Rng& rng, double gain = 2.0) {
    return random_normal(std::move(shape), std::sqrt(gain / static_cast<double>(fan_in)), rng);
}

}  // namespace

void SegmenterDims::validate() const {
    if (patch == 0 || image % patch != 0) {
        throw std::invalid_argument("segmenter patch size must divide the image size");
    }
    if (rank < 1 || 2 * rank > dim) {
        throw std::invalid_argument("adapter rank must lie in [1, dim/2]");
    }
    if (blocks == 0 || mlp == 0 || decoder_hidden == 0) {
        throw std::invalid_argument("segmenter widths must be positive");
    }
}

ParameterSet init_segmenter(const SegmenterDims& dims, Rng& rng) {
    dims.validate();
    const std::size_t d = dims.dim;
    const std::size_t patch_in = 3 * dims.patch * dims.patch;
    const std::size_t tokens = dims.grid().tokens();
    ParameterSet p;
    p.add("embed.w", he_normal({d, patch_in}, patch_in, rng, 1.0));
    p.add("embed.b", Array({d}, 0.0));
    p.add("pos", random_normal({tokens, d}, 0.1, rng));
    for (std::size_t i = 0; i < dims.blocks; ++i) {
        const std::string b = block_name(i);
        fora::add_adapter(p, b + ".q", he_normal({d, d}, d, rng, 1.0), dims.rank, rng);
        p.add(b + ".k", he_normal({d, d}, d, rng, 1.0));
        fora::add_adapter(p, b + ".v", he_normal({d, d}, d, rng, 1.0), dims.rank, rng);
        p.add(b + ".o", he_normal({d, d}, d, rng, 0.5));
        p.add(b + ".mlp1.w", he_normal({dims.mlp, d}, d, rng));
        p.add(b + ".mlp1.b", Array({dims.mlp}, 0.0));
        p.add(b + ".mlp2.w", he_normal({d, dims.mlp}, dims.mlp, rng, 0.5));
        p.add(b + ".mlp2.b", Array({d}, 0.0));
    }
    const std::size_t pp = dims.patch * dims.patch;
    const std::size_t hid = dims.decoder_hidden;
    p.add("dec.conv1.w", he_normal({hid, d + pp, 3, 3}, 9 * (d + pp), rng));
    p.add("dec.conv1.b", Array({hid}, 0.0));
    p.add("dec.conv2.w", he_normal({hid, hid, 3, 3}, 9 * hid, rng));
    p.add("dec.conv2.b", Array({hid}, 0.0));
    p.add("dec.conv3.w", he_normal({pp, hid, 3, 3}, 9 * hid, rng, 0.5));
    p.add("dec.conv3.b", Array({pp}, 0.0));
    // Base weights are fixed once pretrained; adaptation trains adapters and decoder.
    mark_adaptation_trainable(p);
    return p;
}

bool is_adapter_parameter(const std::string& name) {
    for (const char* suffix : {".enc", ".dec", ".spa1", ".spa3", ".spa5", ".fre"}) {
        if (name.ends_with(suffix) && name.starts_with("block")) {
            return true;
        }
    }
    return false;
}

void reset_adapters(ParameterSet& params, const SegmenterDims& dims, Rng& rng) {
    for (std::size_t i = 0; i < dims.blocks; ++i) {
        fora::reset_adapter(params, block_name(i) + ".q", rng);
        fora::reset_adapter(params, block_name(i) + ".v", rng);
    }
}

void mark_adaptation_trainable(ParameterSet& params) {
    for (auto& e : params.entries()) {
        e.trainable = is_adapter_parameter(e.name) || e.name.starts_with("dec.");
    }
}

void mark_pretraining_trainable(ParameterSet& params) {
    for (auto& e : params.entries()) {
        e.trainable = !is_adapter_parameter(e.name);
    }
}

Tensor encode(const BoundParameters& params, const SegmenterDims& dims, const Tensor& image, bool fora_stages) {
    if (image.shape() != Shape{3, dims.image, dims.image}) {
        throw ShapeError("segmenter expects a 3 x " + std::to_string(dims.image) + " x " + std::to_string(dims.image) +
                         " image, got " + shape_str(image.shape()));
    }
    const auto grid = dims.grid();
    const Tensor patches = fora::grid_to_tokens(space_to_depth(image, dims.patch));
    Tensor h = linear(patches, params["embed.w"], params["embed.b"]) + params["pos"];
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims.dim));
    for (std::size_t i = 0; i < dims.blocks; ++i) {
        const std::string b = block_name(i);
        const Tensor n = layer_norm_rows(h);
        const Tensor q = fora::apply_adapter(params, b + ".q", n, grid, fora_stages);
        const Tensor k = linear(n, params[b + ".k"]);
        const Tensor v = fora::apply_adapter(params, b + ".v", n, grid, fora_stages);
        const Tensor att = softmax_rows(matmul(q, transpose(k)) * scale);
        h = h + linear(matmul(att, v), params[b + ".o"]);
        const Tensor n2 = layer_norm_rows(h);
        h = h + linear(relu(linear(n2, params[b + ".mlp1.w"], params[b + ".mlp1.b"])), params[b + ".mlp2.w"],
                       params[b + ".mlp2.b"]);
    }
    return fora::tokens_to_grid(h, grid);
}

Tensor decode(const BoundParameters& params, const SegmenterDims& dims, const Tensor& features,
              const std::vector<data::Box>& boxes) {
    if (boxes.empty()) {
        throw std::invalid_argument("predict_masks needs at least one prompt box");
    }
    std::vector<Tensor> maps;
    maps.reserve(boxes.size());
    for (const auto& box : boxes) {
        Array raster = data::rasterize_box(box, dims.image, dims.image);
        raster.shape = Shape{1, dims.image, dims.image};
        const Tensor prompt = space_to_depth(Tensor(std::move(raster)), dims.patch);
        Tensor x = concat({features, prompt});
        x = relu(conv2d(x, params["dec.conv1.w"], params["dec.conv1.b"]));
        x = relu(conv2d(x, params["dec.conv2.w"], params["dec.conv2.b"]));
        x = conv2d(x, params["dec.conv3.w"], params["dec.conv3.b"]);
        maps.push_back(depth_to_space(x, dims.patch));
    }
    return maps.size() == 1 ? maps.front() : concat(maps);
}

MaskBundle bundle(const Tensor& logits) {
    MaskBundle b;
    b.logits = logits;
    b.probs = sigmoid(logits);
    b.binary = losses::binarize(b.probs);
    return b;
}

MaskBundle predict_masks(const BoundParameters& params, const SegmenterDims& dims, const Tensor& image,
                         const std::vector<data::Box>& boxes, bool fora_stages) {
    return bundle(decode(params, dims, encode(params, dims, image, fora_stages), boxes));
}

}  // namespace wscod::seg
