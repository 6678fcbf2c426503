#ifndef EML_PIPELINE_HPP
#define EML_PIPELINE_HPP

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "eml/checkpoint.hpp"
#include "eml/data_io.hpp"
#include "eml/grid.hpp"
#include "eml/net.hpp"

namespace eml::pipeline {

// 1x1 compression C -> 1 used at the encoding stage. Bias-free by default
// so the parameter count equals the input channel count.
struct EncoderHead {
    net::ConvLayer compress;

    static EncoderHead create(int in_channels, bool bias, std::uint64_t seed);
};

// Per-tap 1x1 compressions plus a 1x1 fusion over the K concatenated maps.
struct EmlDecoder {
    std::vector<net::ConvLayer> per_tap_compress;
    net::ConvLayer fuse;

    static EmlDecoder create(const std::vector<int>& tap_channels, bool bias,
                             std::uint64_t seed);
    std::size_t param_count() const;
    std::vector<int> tap_channels() const;
};

struct TrainConfig {
    int input_w = 640, input_h = 480;
    int batch_size = 8;   // decoder stage defaults to 32 in the CLI
    int epochs = 1;       // 0 is allowed and trains nothing
    net::SgdConfig sgd;
    std::uint64_t seed = 0;
    double epsilon = 1e-7;
    bool update_backbone = true;

    void validate() const;
};

struct EncoderSystem {
    net::TinyBackbone backbone;
    EncoderHead head;
};
EncoderSystem make_encoder(const net::BackboneConfig& cfg, bool head_bias,
                           std::uint64_t seed);

// Training hit a non-finite loss or gradient; carries the checkpoint of
// the last completed epoch (or the initial weights).
struct NonFiniteLoss : Error {
    NonFiniteLoss(const std::string& msg, std::shared_ptr<ModelCheckpoint> last,
                  int epochs_done)
        : Error("non-finite loss: " + msg),
          last_good(std::move(last)), completed_epochs(epochs_done) {}
    std::shared_ptr<ModelCheckpoint> last_good;
    int completed_epochs = 0;
};

// Encoder-stage forward: backbone final output -> 1x1 compress -> ReLU ->
// bilinear resize to the input size.
DensityMap encoder_predict(const EncoderSystem& enc, const Grid& image,
                           int input_w, int input_h);

// Trains backbone + head with the combined loss; only the final stage
// output feeds the head (no multi-level extraction at this stage).
ModelCheckpoint train_encoder(EncoderSystem& enc, const io::Dataset& data,
                              const TrainConfig& cfg);

// Post-pool output of every backbone stage, ordered by depth, unresized.
std::vector<net::FeatureStack> extract_multilevel(const net::TinyBackbone& backbone,
                                                  const Grid& image);

// Trains only the decoder over frozen encoders: per-tap compress -> ReLU ->
// resize to the largest tap -> concat -> fuse -> ReLU -> resize to input.
ModelCheckpoint train_decoder(const std::vector<EncoderSystem>& encoders,
                              EmlDecoder& decoder, const io::Dataset& data,
                              const TrainConfig& cfg);

struct SaliencySystem {
    std::vector<EncoderSystem> encoders;
    EmlDecoder decoder;
    int input_w = 640, input_h = 480;
};

// Deterministic full forward pass; output is nonnegative at input size.
DensityMap predict(const SaliencySystem& sys, const Grid& image);

// Mean combined loss over a dataset, forward only.
double encoder_mean_loss(const EncoderSystem& enc, const io::Dataset& data,
                         const TrainConfig& cfg);
double system_mean_loss(const SaliencySystem& sys, const io::Dataset& data,
                        const TrainConfig& cfg);

struct FinetuneResult {
    std::vector<ModelCheckpoint> encoder_checkpoints;
    ModelCheckpoint decoder_checkpoint;
    EmlDecoder decoder;
};

// Continues encoder training from current weights, then trains a freshly
// initialized decoder from scratch over the updated (frozen) encoders.
FinetuneResult finetune(std::vector<EncoderSystem>& encoders,
                        const io::Dataset& data, const TrainConfig& encoder_cfg,
                        const TrainConfig& decoder_cfg);

// --- checkpoint descriptors and loaders --------------------------------

std::string encoder_descriptor(const EncoderSystem& enc, int input_w, int input_h,
                               int epochs, const std::vector<double>& loss_curve,
                               std::uint64_t seed);
std::string decoder_descriptor(const EmlDecoder& dec, int input_w, int input_h,
                               int epochs, const std::vector<double>& loss_curve,
                               std::uint64_t seed);

ModelCheckpoint snapshot_encoder(EncoderSystem& enc, int input_w, int input_h,
                                 int epochs, const std::vector<double>& loss_curve,
                                 std::uint64_t seed);
ModelCheckpoint snapshot_decoder(EmlDecoder& dec, int input_w, int input_h,
                                 int epochs, const std::vector<double>& loss_curve,
                                 std::uint64_t seed);

// Rebuild models from checkpoints; ArchitectureMismatch when the
// descriptor and manifest disagree or the kind is wrong.
EncoderSystem load_encoder(const ModelCheckpoint& ck);
EmlDecoder load_decoder(const ModelCheckpoint& ck);
// Input size recorded in a checkpoint descriptor.
std::pair<int, int> checkpoint_input_size(const ModelCheckpoint& ck);
std::vector<double> checkpoint_loss_curve(const ModelCheckpoint& ck);
std::string checkpoint_kind(const ModelCheckpoint& ck);

} // namespace eml::pipeline

#endif
