// SPDX-FileCopyrightText: © 2026 The wscod Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "wscod/gradsuite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "wscod/fft.hpp"
#include "wscod/fora.hpp"
#include "wscod/gcl.hpp"
#include "wscod/losses.hpp"
#include "wscod/msfa.hpp"
#include "wscod/ops.hpp"

namespace wscod::gradcheck {
namespace {

Array random_array(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Array a(std::move(shape));
    std::uniform_real_distribution<double> d(lo, hi);
    for (auto& v : a.data) {
        v = d(rng);
    }
    return a;
}

// Entries bounded away from zero so kinks and clamps stay out of the probe.
Array away_from_zero(Shape shape, Rng& rng) {
    Array a = random_array(std::move(shape), rng, 0.1, 1.0);
    std::bernoulli_distribution sign(0.5);
    for (auto& v : a.data) {
        v = sign(rng) ? v : -v;
    }
    return a;
}

Array random_binary(Shape shape, Rng& rng) {
    Array a(std::move(shape));
    std::bernoulli_distribution bit(0.5);
    for (auto& v : a.data) {
        v = bit(rng) ? 1.0 : 0.0;
    }
    return a;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Random output weights turn every map into a generic scalar.
Tensor weighted(const Tensor& y, const Tensor& w) { return sum(y * w); }

using InputGen = std::function<std::vector<Array>(Rng&)>;

Case fixed(std::string name, std::string group, InputGen inputs, ScalarFunction f) {
    return Case{std::move(name), std::move(group),
                [inputs = std::move(inputs), f = std::move(f)](Rng& rng) { return Instance{inputs(rng), f}; }};
}

void add_primitives(std::vector<Case>& cases) {
    auto unary = [&](const char* name, UnaryOp op, bool positive) {
        cases.push_back(fixed(
            name, "primitive",
            [=](Rng& rng) {
                const Shape s{pick(rng, 1, 4), pick(rng, 1, 4)};
                return std::vector<Array>{positive ? random_array(s, rng, 0.2, 2.0) : away_from_zero(s, rng),
                                          random_array(s, rng)};
            },
            [=](const std::vector<Tensor>& in) { return weighted(elementwise(op, in[0]), in[1]); }));
    };
    unary("neg", UnaryOp::Neg, false);
    unary("sigmoid", UnaryOp::Sigmoid, false);
    unary("relu", UnaryOp::Relu, false);
    unary("log", UnaryOp::Log, true);
    unary("exp", UnaryOp::Exp, false);
    unary("abs", UnaryOp::Abs, false);
    unary("sqrt", UnaryOp::Sqrt, true);
    unary("square", UnaryOp::Square, false);
    auto binary = [&](const char* name, BinaryOp op) {
        cases.push_back(fixed(
            name, "primitive",
            [=](Rng& rng) {
                const Shape s{pick(rng, 1, 5)};
                return std::vector<Array>{random_array(s, rng), away_from_zero(s, rng), random_array(s, rng)};
            },
            [=](const std::vector<Tensor>& in) { return weighted(elementwise(op, in[0], in[1]), in[2]); }));
    };
    binary("add", BinaryOp::Add);
    binary("sub", BinaryOp::Sub);
    binary("mul", BinaryOp::Mul);
    binary("div", BinaryOp::Div);
    cases.push_back(fixed(
        "broadcast_div", "primitive",
        [](Rng& rng) {
            return std::vector<Array>{random_array({pick(rng, 1, 5)}, rng), random_array({1}, rng, 0.5, 2.0)};
        },
        [](const std::vector<Tensor>& in) { return sum(square(in[0] / in[1])); }));
    cases.push_back(fixed(
        "pow", "primitive", [](Rng& rng) { return std::vector<Array>{random_array({pick(rng, 1, 5)}, rng, 0.2, 2.0)}; },
        [](const std::vector<Tensor>& in) { return sum(pow(in[0], 2.5)); }));
    cases.push_back(fixed(
        "reduce_axes", "primitive",
        [](Rng& rng) {
            const std::size_t a = pick(rng, 1, 3), b = pick(rng, 1, 3), c = pick(rng, 1, 3);
            return std::vector<Array>{random_array({a, b, c}, rng), random_array({a, c}, rng)};
        },
        [](const std::vector<Tensor>& in) { return sum(reduce(ReduceOp::Mean, in[0], {1}) * in[1]); }));
    cases.push_back(fixed(
        "global_avg_pool", "primitive",
        [](Rng& rng) {
            const std::size_t c = pick(rng, 1, 3);
            return std::vector<Array>{random_array({c, pick(rng, 1, 4), pick(rng, 1, 4)}, rng), random_array({c}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(global_avg_pool(in[0]), in[1]); }));
    cases.push_back(fixed(
        "logsumexp", "primitive",
        [](Rng& rng) { return std::vector<Array>{random_array({pick(rng, 1, 6)}, rng, -3.0, 3.0)}; },
        [](const std::vector<Tensor>& in) { return logsumexp(in[0]); }));
    cases.push_back(fixed(
        "dot", "primitive",
        [](Rng& rng) {
            const std::size_t n = pick(rng, 1, 6);
            return std::vector<Array>{random_array({n}, rng), random_array({n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return dot(in[0], in[1]); }));
    cases.push_back(fixed(
        "linear", "primitive",
        [](Rng& rng) {
            const std::size_t t = pick(rng, 1, 4), a = pick(rng, 1, 4), b = pick(rng, 1, 4);
            return std::vector<Array>{random_array({t, a}, rng), random_array({b, a}, rng), random_array({b}, rng),
                                      random_array({t, b}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(linear(in[0], in[1], in[2]), in[3]); }));
    cases.push_back(fixed(
        "matmul_transpose", "primitive",
        [](Rng& rng) {
            const std::size_t m = pick(rng, 1, 4), k = pick(rng, 1, 4), n = pick(rng, 1, 4);
            return std::vector<Array>{random_array({m, k}, rng), random_array({n, k}, rng), random_array({m, n}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(matmul(in[0], transpose(in[1])), in[2]); }));
    cases.push_back(fixed(
        "softmax_rows", "primitive",
        [](Rng& rng) {
            const Shape s{pick(rng, 1, 4), pick(rng, 2, 5)};
            return std::vector<Array>{random_array(s, rng, -2.0, 2.0), random_array(s, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(softmax_rows(in[0]), in[1]); }));
    cases.push_back(fixed(
        "layer_norm_rows", "primitive",
        [](Rng& rng) {
            const Shape s{pick(rng, 1, 4), pick(rng, 2, 6)};
            return std::vector<Array>{random_array(s, rng, -2.0, 2.0), random_array(s, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(layer_norm_rows(in[0]), in[1]); }));
    cases.push_back(fixed(
        "reshape_concat_slice", "primitive",
        [](Rng& rng) {
            const std::size_t a = pick(rng, 1, 3), b = pick(rng, 2, 4);
            return std::vector<Array>{random_array({a, b}, rng), random_array({a + 1, b}, rng)};
        },
        [](const std::vector<Tensor>& in) {
            const Tensor c = concat({in[0], in[1]});
            const Tensor s = slice(c, 1, c.dim(0) - 1);
            const Tensor r = reshape(s, Shape{s.numel()});
            return sum(square(r) * r);
        }));
    cases.push_back(fixed(
        "conv2d", "primitive",
        [](Rng& rng) {
            const std::size_t ci = pick(rng, 1, 3), co = pick(rng, 1, 3), k = 2 * pick(rng, 0, 2) + 1;
            const std::size_t h = pick(rng, 1, 6), w = pick(rng, 1, 6);
            return std::vector<Array>{random_array({ci, h, w}, rng), random_array({co, ci, k, k}, rng),
                                      random_array({co}, rng), random_array({co, h, w}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(conv2d(in[0], in[1], in[2]), in[3]); }));
    cases.push_back(Case{"pool_upsample", "primitive", [](Rng& rng) {
                             const std::size_t c = pick(rng, 1, 2), f = pick(rng, 1, 2);
                             const std::size_t h = f * pick(rng, 1, 3), w = f * pick(rng, 1, 3);
                             return Instance{{random_array({c, h, w}, rng), random_array({c, h, w}, rng)},
                                             [f](const std::vector<Tensor>& in) {
                                                 return weighted(upsample_nearest(square(avg_pool2d(in[0], f)), f),
                                                                 in[1]);
                                             }};
                         }});
    cases.push_back(fixed(
        "scale_channels_mul_spatial", "primitive",
        [](Rng& rng) {
            const std::size_t c = pick(rng, 1, 3), h = pick(rng, 1, 4), w = pick(rng, 1, 4);
            return std::vector<Array>{random_array({c, h, w}, rng), random_array({c}, rng), random_array({h, w}, rng),
                                      random_array({c, h, w}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(mul_spatial(scale_channels(in[0], in[1]), in[2]), in[3]); }));
    cases.push_back(Case{"depth_space", "primitive", [](Rng& rng) {
                             const std::size_t c = pick(rng, 1, 2), f = pick(rng, 1, 3);
                             const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
                             return Instance{{random_array({c * f * f, h, w}, rng), random_array({c, h * f, w * f}, rng)},
                                             [f](const std::vector<Tensor>& in) {
                                                 const Tensor y = depth_to_space(in[0], f);
                                                 return weighted(y, in[1]) + sum(square(space_to_depth(y * in[1], f)));
                                             }};
                         }});
    cases.push_back(fixed(
        "fft2_ifft2", "primitive",
        [](Rng& rng) {
            const std::size_t c = pick(rng, 1, 2), h = pick(rng, 1, 6), w = pick(rng, 1, 6);
            return std::vector<Array>{random_array({c, h, w}, rng), random_array({c, h, w}, rng),
                                      random_array({c, h, w}, rng)};
        },
        [](const std::vector<Tensor>& in) {
            const ComplexTensor s = fft2(in[0]);
            const ComplexTensor t = ifft2(ComplexTensor{s.real * in[1], s.imag});
            return weighted(t.real, in[2]) + sum(square(t.imag)) + sum(fft2(t).imag * in[1]);
        }));
}

void add_fora(std::vector<Case>& cases) {
    cases.push_back(Case{"fora_forward", "fora", [](Rng& rng) {
                             const fora::GridDims grid{pick(rng, 2, 4), pick(rng, 2, 4)};
                             const std::size_t a = pick(rng, 2, 5), b = pick(rng, 2, 5);
                             const std::size_t r = pick(rng, 1, std::min(a, b) / 2);
                             const Array base = random_array({b, a}, rng);
                             std::vector<Array> in{random_array({grid.tokens(), a}, rng),
                                                   random_array({r, a}, rng),
                                                   random_array({b, r}, rng),
                                                   random_array({r, r, 1, 1}, rng, -0.5, 0.5),
                                                   random_array({r, r, 3, 3}, rng, -0.5, 0.5),
                                                   random_array({r, r, 5, 5}, rng, -0.5, 0.5),
                                                   random_array({r, r, 3, 3}, rng, -0.5, 0.5),
                                                   random_array({grid.tokens(), b}, rng)};
                             return Instance{std::move(in), [base, grid](const std::vector<Tensor>& t) {
                                                 const fora::LowRankAdapter ad(Tensor(base), t[1], t[2], grid);
                                                 return weighted(fora::fora_forward(ad, {t[3], t[4], t[5]}, {t[6]}, t[0]),
                                                                 t[7]);
                                             }};
                         }});
    cases.push_back(Case{"lora_forward", "fora", [](Rng& rng) {
                             const fora::GridDims grid{pick(rng, 1, 3), pick(rng, 1, 3)};
                             const std::size_t a = pick(rng, 2, 5), b = pick(rng, 2, 5);
                             const std::size_t r = pick(rng, 1, std::min(a, b) / 2);
                             const Array base = random_array({b, a}, rng);
                             std::vector<Array> in{random_array({grid.tokens(), a}, rng), random_array({r, a}, rng),
                                                   random_array({b, r}, rng), random_array({grid.tokens(), b}, rng)};
                             return Instance{std::move(in), [base, grid](const std::vector<Tensor>& t) {
                                                 const fora::LowRankAdapter ad(Tensor(base), t[1], t[2], grid);
                                                 return weighted(fora::lora_forward(ad, t[0]), t[3]);
                                             }};
                         }});
}

void add_msfa(std::vector<Case>& cases) {
    cases.push_back(Case{"msfa_forward", "msfa", [](Rng& rng) {
                             const std::size_t c = 2 * pick(rng, 1, 2);
                             const std::size_t side = 4;
                             ParameterSet params;
                             msfa::add_block(params, "m", c, 2, rng);
                             std::vector<std::string> names;
                             std::vector<Array> in;
                             for (const auto& e : params.entries()) {
                                 names.push_back(e.name);
                                 in.push_back(random_array(e.value.shape, rng, -0.7, 0.7));
                             }
                             in.push_back(random_array({c, side, side}, rng));
                             in.push_back(random_array({c, side / 2, side / 2}, rng));
                             in.push_back(random_array({c, side / 4, side / 4}, rng));
                             in.push_back(random_array({c, side, side}, rng));
                             return Instance{std::move(in), [names](const std::vector<Tensor>& t) {
                                                 auto at = [&](const std::string& n) {
                                                     return t[static_cast<std::size_t>(
                                                         std::find(names.begin(), names.end(), n) - names.begin())];
                                                 };
                                                 msfa::MsfaBlock b;
                                                 b.spa1 = at("m.spa1");
                                                 b.spa2 = at("m.spa2");
                                                 b.fre = at("m.fre");
                                                 b.fuse_spa = at("m.fuse.spa");
                                                 b.fuse_fre = at("m.fuse.fre");
                                                 for (std::size_t i = 0; i < 3; ++i) {
                                                     for (std::size_t j = 0; j < 3; ++j) {
                                                         const std::string ij = std::to_string(i) + std::to_string(j);
                                                         b.att_fre[i][j] = {at("m.att.fre." + ij + ".w1"),
                                                                            at("m.att.fre." + ij + ".w2")};
                                                         b.att_spa[i][j] = {at("m.att.spa." + ij + ".w1"),
                                                                            at("m.att.spa." + ij + ".w2")};
                                                     }
                                                 }
                                                 const std::size_t n = names.size();
                                                 return weighted(msfa::msfa_forward(b, {t[n], t[n + 1], t[n + 2]}),
                                                                 t[n + 3]);
                                             }};
                         }});
}

Shape mask_shape(Rng& rng) { return Shape{pick(rng, 1, 3), pick(rng, 2, 4), pick(rng, 2, 4)}; }

void add_losses(std::vector<Case>& cases) {
    cases.push_back(Case{"focal", "loss", [](Rng& rng) {
                             const Shape s = mask_shape(rng);
                             const Array t = random_binary(s, rng);
                             const double gamma = pick(rng, 0, 1) == 0 ? 2.0 : 1.5;
                             return Instance{{random_array(s, rng, 0.05, 0.95)},
                                             [t, gamma](const std::vector<Tensor>& in) {
                                                 return losses::focal(in[0], t, gamma);
                                             }};
                         }});
    cases.push_back(Case{"dice", "loss", [](Rng& rng) {
                             const Shape s = mask_shape(rng);
                             const Array t = random_binary(s, rng);
                             return Instance{{random_array(s, rng, 0.05, 0.95)}, [t](const std::vector<Tensor>& in) {
                                                 return losses::dice(in[0], t, 1e-6);
                                             }};
                         }});
    cases.push_back(Case{"anchor", "loss", [](Rng& rng) {
                             const Shape s = mask_shape(rng);
                             const Array t = random_binary(s, rng);
                             return Instance{{random_array(s, rng, 0.05, 0.95), random_array(s, rng, 0.05, 0.95)},
                                             [t](const std::vector<Tensor>& in) {
                                                 return losses::anchor(in[0], in[1], t, 0.5, 0.5, 1e-6);
                                             }};
                         }});
    cases.push_back(Case{"bce", "loss", [](Rng& rng) {
                             const Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
                             const Array t = random_binary(s, rng);
                             return Instance{{random_array(s, rng, 0.05, 0.95)}, [t](const std::vector<Tensor>& in) {
                                                 return losses::bce(in[0], t);
                                             }};
                         }});
    cases.push_back(fixed(
        "uncertainty", "loss",
        [](Rng& rng) { return std::vector<Array>{random_array({pick(rng, 2, 5), pick(rng, 2, 5)}, rng, 0.05, 0.95)}; },
        [](const std::vector<Tensor>& in) { return losses::uncertainty(in[0]); }));
    cases.push_back(Case{"stage2", "loss", [](Rng& rng) {
                             const Shape s{pick(rng, 2, 5), pick(rng, 2, 5)};
                             const Array t = random_binary(s, rng);
                             const double progress = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                             return Instance{{random_array(s, rng, 0.05, 0.95)},
                                             [t, progress](const std::vector<Tensor>& in) {
                                                 return losses::stage2(in[0], t, progress);
                                             }};
                         }});
    cases.push_back(Case{"stage1_total", "loss", [](Rng& rng) {
                             const Shape s = mask_shape(rng);
                             const Array t = random_binary(s, rng);
                             const Array a = random_binary(s, rng);
                             gcl::Stage1Weights w;
                             w.anchor = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
                             w.focal = std::uniform_real_distribution<double>(1.0, 20.0)(rng);
                             return Instance{{random_array(s, rng, 0.05, 0.95), random_array(s, rng, 0.05, 0.95),
                                              random_array({1}, rng)},
                                             [t, a, w](const std::vector<Tensor>& in) {
                                                 gcl::Stage1Terms terms;
                                                 terms.dice = losses::dice(in[0], t, 1e-6);
                                                 terms.focal = losses::focal(in[0], t, 2.0);
                                                 terms.anchor = losses::anchor(in[0], in[1], a, 0.5, 0.5, 1e-6);
                                                 terms.gcl = sum(square(in[2]));
                                                 return gcl::total_stage1_loss(terms, w);
                                             }};
                         }});
}

void add_gcl(std::vector<Case>& cases) {
    cases.push_back(fixed(
        "l2_normalize_channels", "gcl",
        [](Rng& rng) {
            const std::size_t d = pick(rng, 2, 4), h = pick(rng, 1, 3), w = pick(rng, 1, 3);
            return std::vector<Array>{away_from_zero({d, h, w}, rng), random_array({d, h, w}, rng)};
        },
        [](const std::vector<Tensor>& in) { return weighted(gcl::l2_normalize_channels(in[0]), in[1]); }));
    cases.push_back(Case{"gcl_loss", "gcl", [](Rng& rng) {
                             const std::size_t d = pick(rng, 2, 4), h = 3, w = 4, n = pick(rng, 1, 3);
                             std::vector<Array> masks;
                             for (std::size_t j = 0; j < n; ++j) {
                                 Array m({h, w}, 0.0);
                                 m[j * 3] = m[j * 3 + 1] = 1.0;
                                 masks.push_back(m);
                             }
                             const Array bg = random_array({h, w}, rng, 0.0, 1.0);
                             const double tau = std::uniform_real_distribution<double>(0.2, 1.0)(rng);
                             const Array teacher = away_from_zero({d, h, w}, rng);
                             return Instance{{away_from_zero({d, h, w}, rng)},
                                             [masks, bg, tau, teacher](const std::vector<Tensor>& in) {
                                                 const auto ps = gcl::prototype_pool(
                                                     gcl::l2_normalize_channels(in[0]), masks, bg);
                                                 const auto pt = gcl::prototype_pool(
                                                     gcl::l2_normalize_channels(Tensor(teacher)), masks, bg);
                                                 return gcl::gcl_loss(ps, pt, tau).loss;
                                             }};
                         }});
}

}  // namespace

std::vector<Case> standard_cases() {
    std::vector<Case> cases;
    add_primitives(cases);
    add_fora(cases);
    add_msfa(cases);
    add_losses(cases);
    add_gcl(cases);
    return cases;
}

Case corrupted_case() {
    return fixed("corrupted_double", "fixture", [](Rng& rng) { return std::vector<Array>{away_from_zero({3}, rng)}; },
                 [](const std::vector<Tensor>& in) {
                     const Tensor& x = in[0];
                     auto out = std::make_shared<Array>(x.array());
                     for (auto& v : out->data) {
                         v *= 2.0;
                     }
                     const Tensor y = Tape::apply(out, {x}, [x](std::span<const double> g, GradChannel& ch) {
                         ch.accumulate(x, g);
                     });
                     return sum(square(y));
                 });
}

SuiteResult run_suite(const std::vector<Case>& cases, std::uint64_t seed, std::size_t trials, double h) {
    SuiteResult out;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        Rng rng(derive_seed(seed, {0x96ad, i}));
        CaseResult r{cases[i].name, cases[i].group, 0, 0.0};
        for (std::size_t t = 0; t < trials; ++t) {
            const Instance inst = cases[i].make(rng);
            r.max_rel_error = std::max(r.max_rel_error, check(inst.f, inst.inputs, h).max_rel_error);
            ++r.configs;
        }
        out.configs += r.configs;
        out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
        out.cases.push_back(std::move(r));
    }
    return out;
}

}  // namespace wscod::gradcheck
