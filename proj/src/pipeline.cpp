#include "eml/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <json.hpp>

#include "eml/losses.hpp"
#include "eml/simd.hpp"

namespace eml::pipeline {

using json = nlohmann::ordered_json;
using net::ConvLayer;
using net::FeatureStack;
using net::ParamRef;
using net::TinyBackbone;

EncoderHead EncoderHead::create(int in_channels, bool bias, std::uint64_t seed) {
    EncoderHead head;
    head.compress = ConvLayer::make(1, in_channels, 1, 1, 1, 0, bias);
    std::mt19937_64 rng(seed);
    net::kaiming_init(head.compress.weights, in_channels, rng);
    return head;
}

EmlDecoder EmlDecoder::create(const std::vector<int>& tap_channels, bool bias,
                              std::uint64_t seed) {
    if (tap_channels.empty())
        throw ArchitectureMismatch("decoder needs at least one tap");
    EmlDecoder dec;
    std::mt19937_64 rng(seed);
    for (int c : tap_channels) {
        ConvLayer l = ConvLayer::make(1, c, 1, 1, 1, 0, bias);
        net::kaiming_init(l.weights, c, rng);
        dec.per_tap_compress.push_back(std::move(l));
    }
    const int k = int(tap_channels.size());
    dec.fuse = ConvLayer::make(1, k, 1, 1, 1, 0, bias);
    net::kaiming_init(dec.fuse.weights, k, rng);
    return dec;
}

std::size_t EmlDecoder::param_count() const {
    std::size_t n = fuse.param_count();
    for (const auto& l : per_tap_compress) n += l.param_count();
    return n;
}

std::vector<int> EmlDecoder::tap_channels() const {
    std::vector<int> out;
    for (const auto& l : per_tap_compress) out.push_back(l.in_channels);
    return out;
}

void TrainConfig::validate() const {
    if (input_w < 1 || input_h < 1) throw ShapeMismatch("input size must be >= 1");
    if (batch_size < 1) throw DegenerateInput("batch_size must be >= 1");
    if (epochs < 0) throw DegenerateInput("epochs must be >= 0");
    if (!(epsilon > 0.0)) throw DegenerateInput("epsilon must be > 0");
    sgd.validate();
}

EncoderSystem make_encoder(const net::BackboneConfig& cfg, bool head_bias,
                           std::uint64_t seed) {
    EncoderSystem enc;
    enc.backbone = TinyBackbone::create(cfg, seed);
    enc.head = EncoderHead::create(cfg.stage_channels.back(), head_bias, seed + 1);
    return enc;
}

// --- parameter naming ---------------------------------------------------

namespace {

std::vector<ParamRef> encoder_params(EncoderSystem& enc) {
    std::vector<ParamRef> refs = net::backbone_params(enc.backbone);
    for (auto& r : refs) r.name = "backbone." + r.name;
    auto head_refs = net::conv_params(enc.head.compress, "head.compress");
    refs.insert(refs.end(), head_refs.begin(), head_refs.end());
    return refs;
}

std::vector<ParamRef> decoder_params(EmlDecoder& dec) {
    std::vector<ParamRef> refs;
    for (std::size_t t = 0; t < dec.per_tap_compress.size(); ++t) {
        auto r = net::conv_params(dec.per_tap_compress[t], "tap" + std::to_string(t));
        refs.insert(refs.end(), r.begin(), r.end());
    }
    auto r = net::conv_params(dec.fuse, "fuse");
    refs.insert(refs.end(), r.begin(), r.end());
    return refs;
}

void check_dataset_shapes(const io::Dataset& data, const TrainConfig& cfg) {
    for (const auto& s : data) {
        if (s.image.width() != cfg.input_w || s.image.height() != cfg.input_h)
            throw ShapeMismatch("sample " + s.id + " is " + std::to_string(s.image.width()) +
                                "x" + std::to_string(s.image.height()) + ", config wants " +
                                std::to_string(cfg.input_w) + "x" + std::to_string(cfg.input_h));
    }
}

std::vector<std::size_t> shuffled_order(std::size_t n, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t(0));
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[net::bounded(rng, i)]);
    return order;
}

struct GradBuffers {
    std::vector<std::vector<double>> grads;
    std::vector<std::vector<double>> velocity;

    explicit GradBuffers(const std::vector<ParamRef>& refs) {
        for (const auto& r : refs) {
            grads.emplace_back(r.data->size(), 0.0);
            velocity.emplace_back(r.data->size(), 0.0);
        }
    }
    void zero_grads() {
        for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0);
    }
    void scale_grads(double a) {
        const auto& k = simd::active_kernels();
        for (auto& g : grads) k.scale(a, g.data(), g.size());
    }
    void step(const std::vector<ParamRef>& refs, const net::SgdConfig& sgd, int epoch) {
        for (std::size_t i = 0; i < refs.size(); ++i)
            net::sgd_step(*refs[i].data, grads[i], velocity[i], sgd, epoch);
    }
};

} // namespace

// --- encoder stage ------------------------------------------------------

namespace {

struct EncoderForward {
    net::BackboneTape tape;
    FeatureStack features;  // backbone final output
    FeatureStack head_pre;  // 1x1 output, pre-ReLU
    FeatureStack head_post;
    FeatureStack pred;      // resized to input size, 1 channel
};

EncoderForward encoder_forward(const EncoderSystem& enc, const Grid& image,
                               int input_w, int input_h, bool record_tape) {
    EncoderForward fw;
    fw.features = net::backbone_forward(enc.backbone, FeatureStack::from_grid(image),
                                        record_tape ? &fw.tape : nullptr, nullptr);
    fw.head_pre = net::conv2d_forward(fw.features, enc.head.compress);
    fw.head_post = net::relu(fw.head_pre);
    fw.pred = net::bilinear_resize(fw.head_post, input_w, input_h);
    return fw;
}

} // namespace

DensityMap encoder_predict(const EncoderSystem& enc, const Grid& image,
                           int input_w, int input_h) {
    return DensityMap(
        encoder_forward(enc, image, input_w, input_h, false).pred.to_grid());
}

ModelCheckpoint train_encoder(EncoderSystem& enc, const io::Dataset& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (data.empty()) throw EmptyDataset("train_encoder has no samples");
    check_dataset_shapes(data, cfg);
    const auto& k = simd::active_kernels();

    std::vector<ParamRef> all_refs = encoder_params(enc);
    const std::size_t backbone_ref_count =
        all_refs.size() - net::conv_params(enc.head.compress, "head.compress").size();
    std::vector<ParamRef> train_refs;
    if (cfg.update_backbone)
        train_refs = all_refs;
    else
        train_refs.assign(all_refs.begin() + backbone_ref_count, all_refs.end());
    const std::size_t head_grad_base = cfg.update_backbone ? backbone_ref_count : 0;

    GradBuffers buf(train_refs);
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> loss_curve;

    auto snapshot = std::make_shared<ModelCheckpoint>(
        snapshot_encoder(enc, cfg.input_w, cfg.input_h, 0, loss_curve, cfg.seed));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_order(data.size(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            buf.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const io::Sample& sample = data[order[b]];
                EncoderForward fw =
                    encoder_forward(enc, sample.image, cfg.input_w, cfg.input_h, true);
                const losses::LossValueGrad loss = losses::combined_loss(
                    DensityMap(fw.pred.to_grid()), sample.density, sample.fixations,
                    cfg.epsilon);
                batch_loss += loss.value;

                FeatureStack g = net::bilinear_resize_backward(
                    FeatureStack::from_grid(loss.grad), fw.head_post.width(),
                    fw.head_post.height());
                g = net::relu_backward(fw.head_pre, g);
                net::ConvGrads hg = net::conv2d_backward(fw.features, enc.head.compress, g);
                k.axpy(1.0, hg.weights.data(), buf.grads[head_grad_base].data(),
                       hg.weights.size());
                if (enc.head.compress.has_bias)
                    k.axpy(1.0, hg.bias.data(), buf.grads[head_grad_base + 1].data(),
                           hg.bias.size());
                if (cfg.update_backbone)
                    net::backbone_backward(enc.backbone, fw.tape, hg.input,
                                           std::span(buf.grads.data(), backbone_ref_count));
            }
            if (!std::isfinite(batch_loss))
                throw NonFiniteLoss("encoder batch loss " + std::to_string(batch_loss),
                                    snapshot, epoch);
            buf.scale_grads(1.0 / double(stop - start));
            try {
                buf.step(train_refs, cfg.sgd, epoch);
            } catch (const NonFiniteGradient& e) {
                throw NonFiniteLoss(e.what(), snapshot, epoch);
            }
            epoch_loss += batch_loss;
        }
        loss_curve.push_back(epoch_loss / double(data.size()));
        snapshot = std::make_shared<ModelCheckpoint>(snapshot_encoder(
            enc, cfg.input_w, cfg.input_h, epoch + 1, loss_curve, cfg.seed));
    }
    return *snapshot;
}

std::vector<FeatureStack> extract_multilevel(const TinyBackbone& backbone,
                                             const Grid& image) {
    std::vector<FeatureStack> taps;
    net::backbone_forward(backbone, FeatureStack::from_grid(image), nullptr, &taps);
    return taps;
}

// --- decoder stage ------------------------------------------------------

namespace {

struct DecoderForward {
    std::vector<FeatureStack> tap_pre;  // per-tap 1x1 outputs, pre-ReLU
    std::vector<FeatureStack> tap_post;
    FeatureStack cat;
    FeatureStack fuse_pre;
    FeatureStack fuse_post;
    FeatureStack pred;
};

// Alignment target: the tap with the largest area, never the input size.
std::pair<int, int> largest_tap_size(const std::vector<FeatureStack>& taps) {
    std::size_t best_area = 0;
    std::pair<int, int> size{0, 0};
    for (const auto& t : taps) {
        const std::size_t area = t.plane_size();
        if (area > best_area) {
            best_area = area;
            size = {t.width(), t.height()};
        }
    }
    return size;
}

DecoderForward decoder_forward(const EmlDecoder& dec,
                               const std::vector<FeatureStack>& taps,
                               int input_w, int input_h) {
    if (taps.size() != dec.per_tap_compress.size())
        throw ArchitectureMismatch("decoder has " +
                                   std::to_string(dec.per_tap_compress.size()) +
                                   " taps, got " + std::to_string(taps.size()));
    const auto [tw, th] = largest_tap_size(taps);
    DecoderForward fw;
    std::vector<FeatureStack> resized;
    for (std::size_t t = 0; t < taps.size(); ++t) {
        if (taps[t].channels() != dec.per_tap_compress[t].in_channels)
            throw ArchitectureMismatch("tap " + std::to_string(t) + " has " +
                                       std::to_string(taps[t].channels()) + " channels, " +
                                       "decoder expects " +
                                       std::to_string(dec.per_tap_compress[t].in_channels));
        FeatureStack pre = net::conv2d_forward(taps[t], dec.per_tap_compress[t]);
        FeatureStack post = net::relu(pre);
        resized.push_back(net::bilinear_resize(post, tw, th));
        fw.tap_pre.push_back(std::move(pre));
        fw.tap_post.push_back(std::move(post));
    }
    fw.cat = net::concat_channels(resized);
    fw.fuse_pre = net::conv2d_forward(fw.cat, dec.fuse);
    fw.fuse_post = net::relu(fw.fuse_pre);
    fw.pred = net::bilinear_resize(fw.fuse_post, input_w, input_h);
    return fw;
}

void decoder_backward(const EmlDecoder& dec, const std::vector<FeatureStack>& taps,
                      const DecoderForward& fw, const Grid& grad_pred,
                      GradBuffers& buf) {
    const auto& k = simd::active_kernels();
    FeatureStack g = net::bilinear_resize_backward(FeatureStack::from_grid(grad_pred),
                                                   fw.fuse_post.width(),
                                                   fw.fuse_post.height());
    g = net::relu_backward(fw.fuse_pre, g);
    net::ConvGrads fg = net::conv2d_backward(fw.cat, dec.fuse, g);
    // decoder_params order: per-tap tensors first, fuse last.
    const std::size_t refs_per_conv = dec.fuse.has_bias ? 2 : 1;
    const std::size_t fuse_ref = dec.per_tap_compress.size() * refs_per_conv;
    k.axpy(1.0, fg.weights.data(), buf.grads[fuse_ref].data(), fg.weights.size());
    if (dec.fuse.has_bias)
        k.axpy(1.0, fg.bias.data(), buf.grads[fuse_ref + 1].data(), fg.bias.size());

    const auto planes = net::split_channels(
        fg.input, std::vector<int>(dec.per_tap_compress.size(), 1));
    for (std::size_t t = 0; t < taps.size(); ++t) {
        FeatureStack gt = net::bilinear_resize_backward(planes[t], fw.tap_post[t].width(),
                                                        fw.tap_post[t].height());
        gt = net::relu_backward(fw.tap_pre[t], gt);
        net::ConvGrads tg = net::conv2d_backward(taps[t], dec.per_tap_compress[t], gt);
        k.axpy(1.0, tg.weights.data(), buf.grads[t * refs_per_conv].data(),
               tg.weights.size());
        if (dec.per_tap_compress[t].has_bias)
            k.axpy(1.0, tg.bias.data(), buf.grads[t * refs_per_conv + 1].data(),
                   tg.bias.size());
        // tg.input stops here: encoders are frozen at this stage.
    }
}

std::vector<FeatureStack> system_taps(const std::vector<EncoderSystem>& encoders,
                                      const Grid& image) {
    std::vector<FeatureStack> taps;
    for (const auto& enc : encoders) {
        auto t = extract_multilevel(enc.backbone, image);
        for (auto& f : t) taps.push_back(std::move(f));
    }
    return taps;
}

} // namespace

ModelCheckpoint train_decoder(const std::vector<EncoderSystem>& encoders,
                              EmlDecoder& decoder, const io::Dataset& data,
                              const TrainConfig& cfg) {
    cfg.validate();
    if (encoders.empty()) throw ArchitectureMismatch("train_decoder needs >= 1 encoder");
    if (data.empty()) throw EmptyDataset("train_decoder has no samples");
    check_dataset_shapes(data, cfg);

    // Encoders are frozen, so each sample's taps are computed once.
    std::vector<std::vector<FeatureStack>> taps(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        taps[i] = system_taps(encoders, data[i].image);

    std::vector<ParamRef> refs = decoder_params(decoder);
    GradBuffers buf(refs);
    std::mt19937_64 rng(cfg.seed);
    std::vector<double> loss_curve;

    auto snapshot = std::make_shared<ModelCheckpoint>(
        snapshot_decoder(decoder, cfg.input_w, cfg.input_h, 0, loss_curve, cfg.seed));

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto order = shuffled_order(data.size(), rng);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            buf.zero_grads();
            double batch_loss = 0.0;
            for (std::size_t b = start; b < stop; ++b) {
                const io::Sample& sample = data[order[b]];
                DecoderForward fw =
                    decoder_forward(decoder, taps[order[b]], cfg.input_w, cfg.input_h);
                const losses::LossValueGrad loss = losses::combined_loss(
                    DensityMap(fw.pred.to_grid()), sample.density, sample.fixations,
                    cfg.epsilon);
                batch_loss += loss.value;
                decoder_backward(decoder, taps[order[b]], fw, loss.grad, buf);
            }
            if (!std::isfinite(batch_loss))
                throw NonFiniteLoss("decoder batch loss " + std::to_string(batch_loss),
                                    snapshot, epoch);
            buf.scale_grads(1.0 / double(stop - start));
            try {
                buf.step(refs, cfg.sgd, epoch);
            } catch (const NonFiniteGradient& e) {
                throw NonFiniteLoss(e.what(), snapshot, epoch);
            }
            epoch_loss += batch_loss;
        }
        loss_curve.push_back(epoch_loss / double(data.size()));
        snapshot = std::make_shared<ModelCheckpoint>(snapshot_decoder(
            decoder, cfg.input_w, cfg.input_h, epoch + 1, loss_curve, cfg.seed));
    }
    return *snapshot;
}

DensityMap predict(const SaliencySystem& sys, const Grid& image) {
    const auto taps = system_taps(sys.encoders, image);
    DecoderForward fw = decoder_forward(sys.decoder, taps, sys.input_w, sys.input_h);
    return DensityMap(fw.pred.to_grid());
}

double encoder_mean_loss(const EncoderSystem& enc, const io::Dataset& data,
                         const TrainConfig& cfg) {
    if (data.empty()) throw EmptyDataset("encoder_mean_loss");
    double total = 0.0;
    for (const auto& s : data) {
        const DensityMap p = encoder_predict(enc, s.image, cfg.input_w, cfg.input_h);
        total += losses::combined_loss(p, s.density, s.fixations, cfg.epsilon).value;
    }
    return total / double(data.size());
}

double system_mean_loss(const SaliencySystem& sys, const io::Dataset& data,
                        const TrainConfig& cfg) {
    if (data.empty()) throw EmptyDataset("system_mean_loss");
    double total = 0.0;
    for (const auto& s : data) {
        const DensityMap p = predict(sys, s.image);
        total += losses::combined_loss(p, s.density, s.fixations, cfg.epsilon).value;
    }
    return total / double(data.size());
}

FinetuneResult finetune(std::vector<EncoderSystem>& encoders,
                        const io::Dataset& data, const TrainConfig& encoder_cfg,
                        const TrainConfig& decoder_cfg) {
    if (encoders.empty()) throw ArchitectureMismatch("finetune needs >= 1 encoder");
    FinetuneResult result;
    for (std::size_t i = 0; i < encoders.size(); ++i) {
        TrainConfig cfg = encoder_cfg;
        cfg.seed = encoder_cfg.seed + i;
        result.encoder_checkpoints.push_back(train_encoder(encoders[i], data, cfg));
    }
    // The decoder trains from scratch whenever the encoder set changes.
    std::vector<int> tap_channels;
    for (const auto& enc : encoders)
        for (int c : enc.backbone.tap_channels()) tap_channels.push_back(c);
    result.decoder = EmlDecoder::create(tap_channels, false, decoder_cfg.seed);
    result.decoder_checkpoint = train_decoder(encoders, result.decoder, data, decoder_cfg);
    return result;
}

// --- descriptors and loaders --------------------------------------------

std::string encoder_descriptor(const EncoderSystem& enc, int input_w, int input_h,
                               int epochs, const std::vector<double>& loss_curve,
                               std::uint64_t seed) {
    json j;
    j["kind"] = "encoder";
    j["backbone"] = {{"in_channels", enc.backbone.config.in_channels},
                     {"stage_channels", enc.backbone.config.stage_channels},
                     {"convs_per_stage", enc.backbone.config.convs_per_stage},
                     {"kernel", enc.backbone.config.kernel}};
    j["head_bias"] = enc.head.compress.has_bias;
    j["input"] = {{"w", input_w}, {"h", input_h}};
    j["training"] = {{"epochs", epochs}, {"seed", seed}, {"loss_curve", loss_curve}};
    return j.dump();
}

std::string decoder_descriptor(const EmlDecoder& dec, int input_w, int input_h,
                               int epochs, const std::vector<double>& loss_curve,
                               std::uint64_t seed) {
    json j;
    j["kind"] = "decoder";
    j["tap_channels"] = dec.tap_channels();
    j["bias"] = dec.fuse.has_bias;
    j["input"] = {{"w", input_w}, {"h", input_h}};
    j["training"] = {{"epochs", epochs}, {"seed", seed}, {"loss_curve", loss_curve}};
    return j.dump();
}

ModelCheckpoint snapshot_encoder(EncoderSystem& enc, int input_w, int input_h,
                                 int epochs, const std::vector<double>& loss_curve,
                                 std::uint64_t seed) {
    return ModelCheckpoint::pack(
        encoder_descriptor(enc, input_w, input_h, epochs, loss_curve, seed),
        encoder_params(enc));
}

ModelCheckpoint snapshot_decoder(EmlDecoder& dec, int input_w, int input_h,
                                 int epochs, const std::vector<double>& loss_curve,
                                 std::uint64_t seed) {
    return ModelCheckpoint::pack(
        decoder_descriptor(dec, input_w, input_h, epochs, loss_curve, seed),
        decoder_params(dec));
}

namespace {

json parse_descriptor(const ModelCheckpoint& ck) {
    json j = json::parse(ck.descriptor, nullptr, false);
    if (j.is_discarded())
        throw ArchitectureMismatch("checkpoint descriptor is not valid JSON");
    return j;
}

} // namespace

std::string checkpoint_kind(const ModelCheckpoint& ck) {
    return parse_descriptor(ck).value("kind", "");
}

std::pair<int, int> checkpoint_input_size(const ModelCheckpoint& ck) {
    const json j = parse_descriptor(ck);
    if (!j.contains("input")) throw ArchitectureMismatch("descriptor lacks input size");
    return {j["input"]["w"].get<int>(), j["input"]["h"].get<int>()};
}

std::vector<double> checkpoint_loss_curve(const ModelCheckpoint& ck) {
    const json j = parse_descriptor(ck);
    if (!j.contains("training")) return {};
    return j["training"].value("loss_curve", std::vector<double>{});
}

EncoderSystem load_encoder(const ModelCheckpoint& ck) {
    const json j = parse_descriptor(ck);
    if (j.value("kind", "") != "encoder")
        throw ArchitectureMismatch("checkpoint kind is '" + j.value("kind", "") +
                                   "', expected encoder");
    net::BackboneConfig cfg;
    cfg.in_channels = j["backbone"]["in_channels"].get<int>();
    cfg.stage_channels = j["backbone"]["stage_channels"].get<std::vector<int>>();
    cfg.convs_per_stage = j["backbone"]["convs_per_stage"].get<int>();
    cfg.kernel = j["backbone"]["kernel"].get<int>();
    EncoderSystem enc = make_encoder(cfg, j.value("head_bias", false), 0);
    ck.unpack_into(encoder_params(enc));
    return enc;
}

EmlDecoder load_decoder(const ModelCheckpoint& ck) {
    const json j = parse_descriptor(ck);
    if (j.value("kind", "") != "decoder")
        throw ArchitectureMismatch("checkpoint kind is '" + j.value("kind", "") +
                                   "', expected decoder");
    EmlDecoder dec = EmlDecoder::create(j["tap_channels"].get<std::vector<int>>(),
                                        j.value("bias", false), 0);
    auto refs = decoder_params(dec);
    ck.unpack_into(refs);
    return dec;
}

} // namespace eml::pipeline
