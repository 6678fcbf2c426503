#ifndef EML_NET_HPP
#define EML_NET_HPP

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eml/grid.hpp"

namespace eml::net {

// Multi-channel activation grid: channel-major planes, each row-major.
class FeatureStack {
public:
    FeatureStack() = default;
    FeatureStack(int channels, int width, int height);
    FeatureStack(int channels, int width, int height, std::vector<double> values);

    static FeatureStack from_grid(const Grid& g);
    Grid to_grid() const; // requires channels == 1

    int channels() const { return channels_; }
    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t plane_size() const { return std::size_t(width_) * height_; }
    std::size_t size() const { return values_.size(); }

    double* plane(int c) { return values_.data() + std::size_t(c) * plane_size(); }
    const double* plane(int c) const { return values_.data() + std::size_t(c) * plane_size(); }

    double at(int c, int x, int y) const {
        return values_[std::size_t(c) * plane_size() + std::size_t(y) * width_ + x];
    }
    double& at(int c, int x, int y) {
        return values_[std::size_t(c) * plane_size() + std::size_t(y) * width_ + x];
    }

    const std::vector<double>& values() const { return values_; }
    std::vector<double>& values() { return values_; }

    bool same_shape(const FeatureStack& o) const {
        return channels_ == o.channels_ && width_ == o.width_ && height_ == o.height_;
    }

private:
    int channels_ = 0, width_ = 0, height_ = 0;
    std::vector<double> values_;
};

// Cross-correlation weights, [out][in][ky][kx] layout.
struct ConvLayer {
    int out_channels = 0, in_channels = 0, kh = 0, kw = 0;
    int stride = 1, padding = 0;
    bool has_bias = true;
    std::vector<double> weights;
    std::vector<double> bias; // empty when has_bias is false

    static ConvLayer make(int out_channels, int in_channels, int kh, int kw,
                          int stride = 1, int padding = 0, bool has_bias = true);

    std::size_t param_count() const {
        return weights.size() + bias.size();
    }
    double weight(int oc, int ic, int ky, int kx) const {
        return weights[((std::size_t(oc) * in_channels + ic) * kh + ky) * kw + kx];
    }
    double& weight(int oc, int ic, int ky, int kx) {
        return weights[((std::size_t(oc) * in_channels + ic) * kh + ky) * kw + kx];
    }
};

FeatureStack conv2d_forward(const FeatureStack& x, const ConvLayer& layer);

struct ConvGrads {
    FeatureStack input;
    std::vector<double> weights;
    std::vector<double> bias;
};
ConvGrads conv2d_backward(const FeatureStack& x, const ConvLayer& layer,
                          const FeatureStack& upstream);

FeatureStack relu(const FeatureStack& x);
// Mask of the pre-activation: upstream where pre > 0, else 0.
FeatureStack relu_backward(const FeatureStack& pre, const FeatureStack& upstream);

// 2x2 non-overlapping mean; requires even width and height.
FeatureStack avg_pool2(const FeatureStack& x);
FeatureStack avg_pool2_backward(int in_width, int in_height, const FeatureStack& upstream);

// Bilinear interpolation with half-pixel-center mapping, separable
// (x pass then y pass); backward is the exact transpose.
FeatureStack bilinear_resize(const FeatureStack& x, int target_w, int target_h);
FeatureStack bilinear_resize_backward(const FeatureStack& upstream, int src_w, int src_h);

FeatureStack concat_channels(const std::vector<FeatureStack>& stacks);
std::vector<FeatureStack> split_channels(const FeatureStack& x,
                                         const std::vector<int>& channel_counts);

struct SgdConfig {
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    // (epoch, multiplier): lr is multiplied by every entry whose epoch has
    // been reached, so {(5, 0.1)} gives 0.1*lr from epoch 5 on.
    std::vector<std::pair<int, double>> schedule;

    double lr_at_epoch(int epoch) const;
    void validate() const;
};

// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v.
void sgd_step(std::span<double> params, std::span<const double> grads,
              std::span<double> velocity, const SgdConfig& cfg, int epoch);

// Uniform draw in [0, 1) from the top 53 bits; stable across platforms.
double uniform_unit(std::mt19937_64& rng);
// Unbiased draw in [0, n).
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n);
// Kaiming fan-in scaled uniform init, bound sqrt(6/fan_in).
void kaiming_init(std::vector<double>& weights, int fan_in, std::mt19937_64& rng);

struct BackboneConfig {
    int in_channels = 1;
    std::vector<int> stage_channels = {16, 32, 64};
    int convs_per_stage = 2;
    int kernel = 3;
};

// Stages of (conv3x3 -> ReLU) x convs_per_stage followed by avg_pool2;
// the post-pool output of every stage is a tap.
struct TinyBackbone {
    BackboneConfig config;
    std::vector<std::vector<ConvLayer>> stages;

    static TinyBackbone create(const BackboneConfig& cfg, std::uint64_t seed);
    int tap_count() const { return int(stages.size()); }
    std::vector<int> tap_channels() const { return config.stage_channels; }
};

struct BackboneTape {
    struct Stage {
        std::vector<FeatureStack> conv_inputs;
        std::vector<FeatureStack> conv_outputs; // pre-ReLU
        int prepool_w = 0, prepool_h = 0;
    };
    std::vector<Stage> stages;
};

// Forward pass. tape (when given) records activations for backward; taps
// (when given) collects every stage's post-pool output. Returns the final
// stage output.
FeatureStack backbone_forward(const TinyBackbone& net, const FeatureStack& input,
                              BackboneTape* tape, std::vector<FeatureStack>* taps);

// Named view of every parameter tensor, in checkpoint order.
struct ParamRef {
    std::string name;
    std::vector<double>* data;
    std::vector<std::uint32_t> shape;
};
std::vector<ParamRef> conv_params(ConvLayer& layer, const std::string& prefix);
std::vector<ParamRef> backbone_params(TinyBackbone& net);

// Accumulates parameter gradients into `grads`, one vector per ParamRef in
// backbone_params order, and returns nothing further; grad w.r.t. the
// network input is discarded.
void backbone_backward(const TinyBackbone& net, const BackboneTape& tape,
                       const FeatureStack& grad_output,
                       std::span<std::vector<double>> grads);

} // namespace eml::net

#endif
