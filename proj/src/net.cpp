#include "eml/net.hpp"

#include <algorithm>
#include <cmath>

#include "eml/simd.hpp"

namespace eml::net {

FeatureStack::FeatureStack(int channels, int width, int height)
    : channels_(channels), width_(width), height_(height) {
    if (channels < 1 || width < 1 || height < 1)
        throw ShapeMismatch("feature stack dims must be >= 1");
    values_.assign(std::size_t(channels) * width * height, 0.0);
}

FeatureStack::FeatureStack(int channels, int width, int height, std::vector<double> values)
    : channels_(channels), width_(width), height_(height), values_(std::move(values)) {
    if (channels < 1 || width < 1 || height < 1)
        throw ShapeMismatch("feature stack dims must be >= 1");
    if (values_.size() != std::size_t(channels) * width * height)
        throw ShapeMismatch("feature stack value count does not match dims");
}

FeatureStack FeatureStack::from_grid(const Grid& g) {
    return FeatureStack(1, g.width(), g.height(), g.values());
}

Grid FeatureStack::to_grid() const {
    if (channels_ != 1)
        throw ShapeMismatch("to_grid requires a single channel, have " +
                            std::to_string(channels_));
    return Grid(width_, height_, values_);
}

ConvLayer ConvLayer::make(int out_channels, int in_channels, int kh, int kw,
                          int stride, int padding, bool has_bias) {
    if (out_channels < 1 || in_channels < 1 || kh < 1 || kw < 1)
        throw ShapeMismatch("conv layer dims must be >= 1");
    if (stride < 1 || padding < 0)
        throw ShapeMismatch("conv stride must be >= 1 and padding >= 0");
    ConvLayer l;
    l.out_channels = out_channels;
    l.in_channels = in_channels;
    l.kh = kh;
    l.kw = kw;
    l.stride = stride;
    l.padding = padding;
    l.has_bias = has_bias;
    l.weights.assign(std::size_t(out_channels) * in_channels * kh * kw, 0.0);
    if (has_bias) l.bias.assign(out_channels, 0.0);
    return l;
}

namespace {

int conv_out_dim(int in, int k, int stride, int pad) {
    const int num = in + 2 * pad - k;
    if (num < 0) throw ShapeMismatch("kernel larger than padded input");
    return num / stride + 1;
}

} // namespace

FeatureStack conv2d_forward(const FeatureStack& x, const ConvLayer& layer) {
    if (x.channels() != layer.in_channels)
        throw ShapeMismatch("conv expects " + std::to_string(layer.in_channels) +
                            " channels, got " + std::to_string(x.channels()));
    const int ow = conv_out_dim(x.width(), layer.kw, layer.stride, layer.padding);
    const int oh = conv_out_dim(x.height(), layer.kh, layer.stride, layer.padding);
    FeatureStack out(layer.out_channels, ow, oh);
    const auto& k = simd::active_kernels();

    for (int oc = 0; oc < layer.out_channels; ++oc) {
        double* oplane = out.plane(oc);
        if (layer.has_bias && layer.bias[oc] != 0.0)
            std::fill(oplane, oplane + out.plane_size(), layer.bias[oc]);
        for (int ic = 0; ic < layer.in_channels; ++ic) {
            const double* iplane = x.plane(ic);
            for (int ky = 0; ky < layer.kh; ++ky) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * layer.stride - layer.padding + ky;
                    if (iy < 0 || iy >= x.height()) continue;
                    double* orow = oplane + std::size_t(oy) * ow;
                    const double* irow = iplane + std::size_t(iy) * x.width();
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const double w = layer.weight(oc, ic, ky, kx);
                        if (layer.stride == 1) {
                            const int shift = kx - layer.padding;
                            const int lo = std::max(0, -shift);
                            const int hi = std::min(ow - 1, x.width() - 1 - shift);
                            if (lo > hi) continue;
                            k.axpy(w, irow + lo + shift, orow + lo, std::size_t(hi - lo + 1));
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * layer.stride - layer.padding + kx;
                                if (ix < 0 || ix >= x.width()) continue;
                                orow[ox] += w * irow[ix];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

ConvGrads conv2d_backward(const FeatureStack& x, const ConvLayer& layer,
                          const FeatureStack& upstream) {
    if (x.channels() != layer.in_channels)
        throw ShapeMismatch("conv backward: input channels mismatch");
    const int ow = conv_out_dim(x.width(), layer.kw, layer.stride, layer.padding);
    const int oh = conv_out_dim(x.height(), layer.kh, layer.stride, layer.padding);
    if (upstream.channels() != layer.out_channels || upstream.width() != ow ||
        upstream.height() != oh)
        throw ShapeMismatch("conv backward: upstream shape mismatch");

    ConvGrads g;
    g.input = FeatureStack(x.channels(), x.width(), x.height());
    g.weights.assign(layer.weights.size(), 0.0);
    if (layer.has_bias) g.bias.assign(layer.out_channels, 0.0);
    const auto& k = simd::active_kernels();

    for (int oc = 0; oc < layer.out_channels; ++oc) {
        const double* uplane = upstream.plane(oc);
        if (layer.has_bias) g.bias[oc] = k.sum(uplane, upstream.plane_size());
        for (int ic = 0; ic < layer.in_channels; ++ic) {
            const double* iplane = x.plane(ic);
            double* gplane = g.input.plane(ic);
            for (int ky = 0; ky < layer.kh; ++ky) {
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * layer.stride - layer.padding + ky;
                    if (iy < 0 || iy >= x.height()) continue;
                    const double* urow = uplane + std::size_t(oy) * ow;
                    const double* irow = iplane + std::size_t(iy) * x.width();
                    double* grow = gplane + std::size_t(iy) * x.width();
                    for (int kx = 0; kx < layer.kw; ++kx) {
                        const std::size_t widx =
                            ((std::size_t(oc) * layer.in_channels + ic) * layer.kh + ky) *
                                layer.kw + kx;
                        const double w = layer.weights[widx];
                        if (layer.stride == 1) {
                            const int shift = kx - layer.padding;
                            const int lo = std::max(0, -shift);
                            const int hi = std::min(ow - 1, x.width() - 1 - shift);
                            if (lo > hi) continue;
                            const std::size_t len = std::size_t(hi - lo + 1);
                            g.weights[widx] += k.dot(urow + lo, irow + lo + shift, len);
                            k.axpy(w, urow + lo, grow + lo + shift, len);
                        } else {
                            for (int ox = 0; ox < ow; ++ox) {
                                const int ix = ox * layer.stride - layer.padding + kx;
                                if (ix < 0 || ix >= x.width()) continue;
                                g.weights[widx] += urow[ox] * irow[ix];
                                grow[ix] += w * urow[ox];
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

FeatureStack relu(const FeatureStack& x) {
    FeatureStack out(x.channels(), x.width(), x.height());
    simd::active_kernels().relu(x.values().data(), out.values().data(), x.size());
    return out;
}

FeatureStack relu_backward(const FeatureStack& pre, const FeatureStack& upstream) {
    if (!pre.same_shape(upstream))
        throw ShapeMismatch("relu backward: shapes differ");
    FeatureStack out(pre.channels(), pre.width(), pre.height());
    simd::active_kernels().relu_backward(pre.values().data(), upstream.values().data(),
                                         out.values().data(), pre.size());
    return out;
}

FeatureStack avg_pool2(const FeatureStack& x) {
    if (x.width() % 2 != 0 || x.height() % 2 != 0)
        throw OddDimension("avg_pool2 needs even dims, got " + std::to_string(x.width()) +
                           "x" + std::to_string(x.height()));
    const int ow = x.width() / 2, oh = x.height() / 2;
    FeatureStack out(x.channels(), ow, oh);
    for (int c = 0; c < x.channels(); ++c) {
        const double* ip = x.plane(c);
        double* op = out.plane(c);
        for (int oy = 0; oy < oh; ++oy) {
            const double* r0 = ip + std::size_t(2 * oy) * x.width();
            const double* r1 = r0 + x.width();
            for (int ox = 0; ox < ow; ++ox) {
                op[std::size_t(oy) * ow + ox] =
                    (r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1]) * 0.25;
            }
        }
    }
    return out;
}

FeatureStack avg_pool2_backward(int in_width, int in_height, const FeatureStack& upstream) {
    if (in_width != upstream.width() * 2 || in_height != upstream.height() * 2)
        throw ShapeMismatch("avg_pool2 backward: dims inconsistent");
    FeatureStack out(upstream.channels(), in_width, in_height);
    for (int c = 0; c < upstream.channels(); ++c) {
        const double* up = upstream.plane(c);
        double* op = out.plane(c);
        for (int oy = 0; oy < upstream.height(); ++oy) {
            for (int ox = 0; ox < upstream.width(); ++ox) {
                const double g = up[std::size_t(oy) * upstream.width() + ox] * 0.25;
                double* r0 = op + std::size_t(2 * oy) * in_width + 2 * ox;
                double* r1 = r0 + in_width;
                r0[0] += g;
                r0[1] += g;
                r1[0] += g;
                r1[1] += g;
            }
        }
    }
    return out;
}

namespace {

// Half-pixel-center source coordinates for one axis.
struct AxisMap {
    std::vector<int> i0, i1;
    std::vector<double> w1; // weight of i1; i0 gets 1-w1
};

AxisMap axis_map(int src, int dst) {
    AxisMap m;
    m.i0.resize(dst);
    m.i1.resize(dst);
    m.w1.resize(dst);
    const double scale = double(src) / double(dst);
    for (int o = 0; o < dst; ++o) {
        double pos = (o + 0.5) * scale - 0.5;
        pos = std::clamp(pos, 0.0, double(src - 1));
        int i0 = int(std::floor(pos));
        if (i0 > src - 1) i0 = src - 1;
        const int i1 = std::min(i0 + 1, src - 1);
        m.i0[o] = i0;
        m.i1[o] = i1;
        m.w1[o] = pos - double(i0);
    }
    return m;
}

} // namespace

FeatureStack bilinear_resize(const FeatureStack& x, int target_w, int target_h) {
    if (target_w < 1 || target_h < 1)
        throw ShapeMismatch("resize target dims must be >= 1");
    const auto& k = simd::active_kernels();
    const AxisMap xm = axis_map(x.width(), target_w);
    const AxisMap ym = axis_map(x.height(), target_h);

    // x pass, then y pass; bilinear is separable so this equals the
    // direct four-tap form.
    FeatureStack tmp(x.channels(), target_w, x.height());
    for (int c = 0; c < x.channels(); ++c) {
        const double* ip = x.plane(c);
        double* tp = tmp.plane(c);
        for (int y = 0; y < x.height(); ++y) {
            const double* irow = ip + std::size_t(y) * x.width();
            double* trow = tp + std::size_t(y) * target_w;
            for (int o = 0; o < target_w; ++o) {
                trow[o] = (1.0 - xm.w1[o]) * irow[xm.i0[o]] + xm.w1[o] * irow[xm.i1[o]];
            }
        }
    }
    FeatureStack out(x.channels(), target_w, target_h);
    for (int c = 0; c < x.channels(); ++c) {
        const double* tp = tmp.plane(c);
        double* op = out.plane(c);
        for (int o = 0; o < target_h; ++o) {
            const double* top = tp + std::size_t(ym.i0[o]) * target_w;
            const double* bot = tp + std::size_t(ym.i1[o]) * target_w;
            k.lerp(1.0 - ym.w1[o], top, ym.w1[o], bot,
                   op + std::size_t(o) * target_w, std::size_t(target_w));
        }
    }
    return out;
}

FeatureStack bilinear_resize_backward(const FeatureStack& upstream, int src_w, int src_h) {
    if (src_w < 1 || src_h < 1)
        throw ShapeMismatch("resize backward source dims must be >= 1");
    const auto& k = simd::active_kernels();
    const AxisMap xm = axis_map(src_w, upstream.width());
    const AxisMap ym = axis_map(src_h, upstream.height());

    // Transpose of the y pass, then of the x pass.
    FeatureStack tmp(upstream.channels(), upstream.width(), src_h);
    for (int c = 0; c < upstream.channels(); ++c) {
        const double* up = upstream.plane(c);
        double* tp = tmp.plane(c);
        for (int o = 0; o < upstream.height(); ++o) {
            const double* urow = up + std::size_t(o) * upstream.width();
            k.axpy(1.0 - ym.w1[o], urow,
                   tp + std::size_t(ym.i0[o]) * upstream.width(), std::size_t(upstream.width()));
            k.axpy(ym.w1[o], urow,
                   tp + std::size_t(ym.i1[o]) * upstream.width(), std::size_t(upstream.width()));
        }
    }
    FeatureStack out(upstream.channels(), src_w, src_h);
    for (int c = 0; c < upstream.channels(); ++c) {
        const double* tp = tmp.plane(c);
        double* op = out.plane(c);
        for (int y = 0; y < src_h; ++y) {
            const double* trow = tp + std::size_t(y) * upstream.width();
            double* orow = op + std::size_t(y) * src_w;
            for (int o = 0; o < upstream.width(); ++o) {
                orow[xm.i0[o]] += (1.0 - xm.w1[o]) * trow[o];
                orow[xm.i1[o]] += xm.w1[o] * trow[o];
            }
        }
    }
    return out;
}

FeatureStack concat_channels(const std::vector<FeatureStack>& stacks) {
    if (stacks.empty()) throw ShapeMismatch("concat of zero stacks");
    int channels = 0;
    for (const auto& s : stacks) {
        if (s.width() != stacks[0].width() || s.height() != stacks[0].height())
            throw ShapeMismatch("concat needs identical spatial dims");
        channels += s.channels();
    }
    FeatureStack out(channels, stacks[0].width(), stacks[0].height());
    double* dst = out.values().data();
    for (const auto& s : stacks) {
        std::copy(s.values().begin(), s.values().end(), dst);
        dst += s.size();
    }
    return out;
}

std::vector<FeatureStack> split_channels(const FeatureStack& x,
                                         const std::vector<int>& channel_counts) {
    int total = 0;
    for (int c : channel_counts) total += c;
    if (total != x.channels())
        throw ShapeMismatch("split counts sum to " + std::to_string(total) + ", stack has " +
                            std::to_string(x.channels()));
    std::vector<FeatureStack> out;
    out.reserve(channel_counts.size());
    const double* src = x.values().data();
    for (int c : channel_counts) {
        const std::size_t count = std::size_t(c) * x.plane_size();
        out.emplace_back(c, x.width(), x.height(),
                         std::vector<double>(src, src + count));
        src += count;
    }
    return out;
}

double SgdConfig::lr_at_epoch(int epoch) const {
    double lr = learning_rate;
    for (const auto& [e, mult] : schedule)
        if (epoch >= e) lr *= mult;
    return lr;
}

void SgdConfig::validate() const {
    if (!(learning_rate > 0.0)) throw DegenerateInput("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw DegenerateInput("momentum must be in [0,1)");
    if (!(weight_decay >= 0.0)) throw DegenerateInput("weight_decay must be >= 0");
}

void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdConfig& cfg, int epoch) {
    if (params.size() != grads.size() || params.size() != velocity.size())
        throw ShapeMismatch("sgd_step: params/grads/velocity sizes differ");
    const auto& k = simd::active_kernels();
    if (!k.all_finite(grads.data(), grads.size()))
        throw NonFiniteGradient("sgd_step received a non-finite gradient");
    k.momentum_update(params.data(), velocity.data(), grads.data(),
                      cfg.lr_at_epoch(epoch), cfg.momentum, cfg.weight_decay,
                      params.size());
}

double uniform_unit(std::mt19937_64& rng) {
    return double(rng() >> 11) * 0x1.0p-53;
}

std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t r;
    do {
        r = rng();
    } while (r >= limit);
    return r % n;
}

void kaiming_init(std::vector<double>& weights, int fan_in, std::mt19937_64& rng) {
    const double bound = std::sqrt(6.0 / double(fan_in));
    for (auto& w : weights) w = (2.0 * uniform_unit(rng) - 1.0) * bound;
}

TinyBackbone TinyBackbone::create(const BackboneConfig& cfg, std::uint64_t seed) {
    if (cfg.stage_channels.empty())
        throw ShapeMismatch("backbone needs at least one stage");
    TinyBackbone net;
    net.config = cfg;
    std::mt19937_64 rng(seed);
    int in_ch = cfg.in_channels;
    const int pad = cfg.kernel / 2;
    for (int c_out : cfg.stage_channels) {
        std::vector<ConvLayer> stage;
        for (int l = 0; l < cfg.convs_per_stage; ++l) {
            const int c_in = l == 0 ? in_ch : c_out;
            ConvLayer layer = ConvLayer::make(c_out, c_in, cfg.kernel, cfg.kernel,
                                              1, pad, true);
            kaiming_init(layer.weights, c_in * cfg.kernel * cfg.kernel, rng);
            stage.push_back(std::move(layer));
        }
        net.stages.push_back(std::move(stage));
        in_ch = c_out;
    }
    return net;
}

FeatureStack backbone_forward(const TinyBackbone& net, const FeatureStack& input,
                              BackboneTape* tape, std::vector<FeatureStack>* taps) {
    if (tape) tape->stages.assign(net.stages.size(), {});
    FeatureStack cur = input;
    for (std::size_t s = 0; s < net.stages.size(); ++s) {
        for (std::size_t l = 0; l < net.stages[s].size(); ++l) {
            FeatureStack pre = conv2d_forward(cur, net.stages[s][l]);
            FeatureStack post = relu(pre);
            if (tape) {
                tape->stages[s].conv_inputs.push_back(std::move(cur));
                tape->stages[s].conv_outputs.push_back(std::move(pre));
            }
            cur = std::move(post);
        }
        if (tape) {
            tape->stages[s].prepool_w = cur.width();
            tape->stages[s].prepool_h = cur.height();
        }
        cur = avg_pool2(cur);
        if (taps) taps->push_back(cur);
    }
    return cur;
}

std::vector<ParamRef> conv_params(ConvLayer& layer, const std::string& prefix) {
    std::vector<ParamRef> refs;
    refs.push_back({prefix + ".weight", &layer.weights,
                    {std::uint32_t(layer.out_channels), std::uint32_t(layer.in_channels),
                     std::uint32_t(layer.kh), std::uint32_t(layer.kw)}});
    if (layer.has_bias)
        refs.push_back({prefix + ".bias", &layer.bias, {std::uint32_t(layer.out_channels)}});
    return refs;
}

std::vector<ParamRef> backbone_params(TinyBackbone& net) {
    std::vector<ParamRef> refs;
    for (std::size_t s = 0; s < net.stages.size(); ++s) {
        for (std::size_t l = 0; l < net.stages[s].size(); ++l) {
            auto layer_refs = conv_params(net.stages[s][l],
                                          "stage" + std::to_string(s) + ".conv" +
                                              std::to_string(l));
            refs.insert(refs.end(), layer_refs.begin(), layer_refs.end());
        }
    }
    return refs;
}

void backbone_backward(const TinyBackbone& net, const BackboneTape& tape,
                       const FeatureStack& grad_output,
                       std::span<std::vector<double>> grads) {
    const auto& k = simd::active_kernels();
    FeatureStack g = grad_output;
    // grads is aligned with backbone_params order: per layer weight then bias.
    std::size_t ref_end = grads.size();
    for (int s = int(net.stages.size()) - 1; s >= 0; --s) {
        const auto& st = tape.stages[s];
        g = avg_pool2_backward(st.prepool_w, st.prepool_h, g);
        for (int l = int(net.stages[s].size()) - 1; l >= 0; --l) {
            const ConvLayer& layer = net.stages[s][l];
            g = relu_backward(st.conv_outputs[l], g);
            ConvGrads cg = conv2d_backward(st.conv_inputs[l], layer, g);
            const std::size_t bias_ref = ref_end - 1;
            const std::size_t weight_ref = layer.has_bias ? ref_end - 2 : ref_end - 1;
            k.axpy(1.0, cg.weights.data(), grads[weight_ref].data(), cg.weights.size());
            if (layer.has_bias)
                k.axpy(1.0, cg.bias.data(), grads[bias_ref].data(), cg.bias.size());
            ref_end = weight_ref;
            g = std::move(cg.input);
        }
    }
}

} // namespace eml::net
