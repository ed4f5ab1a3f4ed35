/*
 * xmsynth : anatomy-aware unpaired ultrasound-to-MR synthesis
 *
 * Copyright 2026 The xmsynth Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Network components of the synthesis model:
//
//   encoder-A (extractor F) -> decoder-B (G_U, US reconstruction)
//                           -> decoder-C (G_M, MR synthesis) <- cross-modal attention
//   encoder-D -> decoder-E (G_BU, backward inference of the US)
//   EdgeNet (frozen), discriminators D_app, D_stru, D_bi, D_app^back.
//
// Images travel as [B, 1, H, W] tensors with values in [0,1].

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "xmsynth/image.hpp"

namespace xmsynth::nets {

struct NetworkConfig {
    int base_channels = 32;
    int depth = 3;  // pooling stages
    int latent_channels = 128;
    int attention_embed_channels = 0;  // 0 selects half the attention-stage channels
    int discriminator_channels = 32;

    /// Channels of encoder/decoder stage `s` (0 = full resolution).
    [[nodiscard]] int stage_channels(int s) const { return base_channels << s; }
    /// Decoder stage whose output feeds the cross-modal attention (second to last).
    [[nodiscard]] int attention_stage() const { return depth >= 2 ? 1 : 0; }
    [[nodiscard]] int attention_channels() const { return stage_channels(attention_stage()); }
    [[nodiscard]] int embed_channels() const;

    void validate() const;
    /// Throws ConfigError unless H and W are divisible by 2^depth.
    void validate_size(Size2 size) const;

    friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

// ---------------------------------------------------------------------------

struct EncoderOutput {
    torch::Tensor latent;              // LatentFeature, [B, latent, H/2^d, W/2^d]
    std::vector<torch::Tensor> skips;  // one FeatureMap per stage, full resolution first
};

class EncoderImpl : public torch::nn::Module {
public:
    explicit EncoderImpl(const NetworkConfig& cfg);
    EncoderOutput forward(const torch::Tensor& x);

private:
    std::vector<torch::nn::Sequential> stages_;
    torch::nn::Sequential bottleneck_{nullptr};
};
TORCH_MODULE(Encoder);

struct DecoderOutput {
    torch::Tensor image;    // sigmoid of `logits`
    torch::Tensor logits;
    torch::Tensor feature;  // attention-stage feature before any modifier
};

/// Up-conv decoder. With skips, stage s concatenates the encoder skip of the same
/// resolution after upsampling.
class DecoderImpl : public torch::nn::Module {
public:
    using Modifier = std::function<torch::Tensor(const torch::Tensor&)>;

    DecoderImpl(const NetworkConfig& cfg, bool use_skips);

    /// `modify`, when set, rewrites the attention-stage feature before decoding continues.
    DecoderOutput forward(const torch::Tensor& latent, const std::vector<torch::Tensor>& skips,
                          const Modifier& modify = {});

    torch::nn::Conv2d& head() { return head_; }

private:
    NetworkConfig cfg_;
    bool use_skips_;
    std::vector<torch::nn::ConvTranspose2d> ups_;
    std::vector<torch::nn::Sequential> blocks_;
    torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(Decoder);

/// f~_M = eta(A g(f_M)) + f_M with A = row-softmax(delta(f_U)^T phi(f_U)) over
/// flattened positions; all four embeddings are 1x1 convolutions and eta starts at zero.
class CrossModalAttentionImpl : public torch::nn::Module {
public:
    CrossModalAttentionImpl(int channels, int embed_channels);
    torch::Tensor forward(const torch::Tensor& f_us, const torch::Tensor& f_mr);

    /// Attention branch before eta, shape [B, embed, h, w].
    torch::Tensor attend(const torch::Tensor& f_us, const torch::Tensor& f_mr);
    /// Position-affinity matrix [B, N, N] after softmax.
    torch::Tensor affinity(const torch::Tensor& f_us);

    torch::nn::Conv2d eta{nullptr}, delta{nullptr}, phi{nullptr}, g{nullptr};
};
TORCH_MODULE(CrossModalAttention);

/// Four fixed 3x3 convolutions: Gaussian, horizontal central difference,
/// vertical central difference, Gaussian. The two difference channels are
/// merged by magnitude before the final smoothing and the result is scaled
/// to [0,1]. Kernels are buffers, so no optimizer ever sees them.
class EdgeNetImpl : public torch::nn::Module {
public:
    EdgeNetImpl();
    torch::Tensor forward(const torch::Tensor& x);

    /// FNV-1a over the kernel values, in the order they are applied.
    [[nodiscard]] std::uint64_t checksum() const;

    torch::Tensor smooth_in, diff_x, diff_y, smooth_out;
};
TORCH_MODULE(EdgeNet);

/// Four stride-2 convolutions, global average pooling, linear logit.
class DiscriminatorImpl : public torch::nn::Module {
public:
    DiscriminatorImpl(int in_channels, int channels);
    torch::Tensor forward(const torch::Tensor& x);  // logits, [B]
    torch::Tensor probability(const torch::Tensor& x) { return torch::sigmoid(forward(x)); }

private:
    torch::nn::Sequential body_{nullptr};
    torch::nn::Linear out_{nullptr};
};
TORCH_MODULE(Discriminator);

// ---------------------------------------------------------------------------

enum class Head { App, Stru, Bi, AppBack };
std::string_view to_string(Head h);

enum class Component {
    Extractor,    // encoder-A
    DecoderUs,    // decoder-B
    DecoderMr,    // decoder-C
    Attention,
    EncoderBack,  // encoder-D
    DecoderBack,  // decoder-E
    DApp,
    DStru,
    DBi,
    DAppBack,
};
std::string_view to_string(Component c);
inline constexpr Component kGeneratorComponents[] = {
    Component::Extractor,   Component::DecoderUs,   Component::DecoderMr,
    Component::Attention,   Component::EncoderBack, Component::DecoderBack};
inline constexpr Component kDiscriminatorComponents[] = {Component::DApp, Component::DStru,
                                                         Component::DBi, Component::DAppBack};

struct ForwardResult {
    torch::Tensor y;
    std::vector<torch::Tensor> skips;
    torch::Tensor x_hat_us;
    torch::Tensor f_us;
    torch::Tensor x_hat_mr;
    torch::Tensor y_back;
    torch::Tensor x_tilde_us;
};

/// All learnable and frozen components; the NetworkBundle.
class SynthesisModelImpl : public torch::nn::Module {
public:
    explicit SynthesisModelImpl(const NetworkConfig& cfg);

    EncoderOutput extract_features(const torch::Tensor& x_us);
    /// Returns the reconstructed US and its attention-stage feature f_U.
    DecoderOutput decode_us(const torch::Tensor& y, const std::vector<torch::Tensor>& skips);
    /// Synthesized MR; f_U is ignored when attention is disabled.
    torch::Tensor decode_mr(const torch::Tensor& y, const std::vector<torch::Tensor>& skips,
                            const torch::Tensor& f_us);
    torch::Tensor encode_back(const torch::Tensor& x_hat_mr);
    torch::Tensor decode_back_us(const torch::Tensor& y_back);
    torch::Tensor edge_map(const torch::Tensor& x) { return edge_net->forward(x); }
    /// Probability in (0,1) per batch element. Throws InternalError on a
    /// head/input mismatch.
    torch::Tensor discriminate(Head head, const torch::Tensor& input);

    /// Full forward through both paths.
    ForwardResult forward(const torch::Tensor& x_us, bool with_reverse = true);
    /// Inference path: extractor, decoder-B (for f_U) and decoder-C.
    torch::Tensor synthesize(const torch::Tensor& x_us);

    Discriminator& discriminator(Head head);
    std::vector<torch::Tensor> parameters_of(Component c);

    void set_attention_enabled(bool on) { attention_enabled_ = on; }
    [[nodiscard]] bool attention_enabled() const { return attention_enabled_; }
    [[nodiscard]] const NetworkConfig& config() const { return cfg_; }

    Encoder extractor{nullptr};
    Decoder decoder_us{nullptr};
    Decoder decoder_mr{nullptr};
    CrossModalAttention attention{nullptr};
    Encoder encoder_back{nullptr};
    Decoder decoder_back{nullptr};
    EdgeNet edge_net{nullptr};
    Discriminator d_app{nullptr}, d_stru{nullptr}, d_bi{nullptr}, d_app_back{nullptr};

private:
    NetworkConfig cfg_;
    bool attention_enabled_ = true;
};
TORCH_MODULE(SynthesisModel);

// ---------------------------------------------------------------------------
// CycleGAN baseline generator: a skip-connected encoder/decoder whose logits
// are added to logit(x), so a zero head is (almost) the identity map.

class CycleGeneratorImpl : public torch::nn::Module {
public:
    CycleGeneratorImpl(const NetworkConfig& cfg, bool near_identity);
    torch::Tensor forward(const torch::Tensor& x);

    Encoder encoder{nullptr};
    Decoder decoder{nullptr};
};
TORCH_MODULE(CycleGenerator);

class CycleGanModelImpl : public torch::nn::Module {
public:
    CycleGanModelImpl(const NetworkConfig& cfg, bool near_identity = false);

    CycleGenerator us_to_mr{nullptr};
    CycleGenerator mr_to_us{nullptr};
    Discriminator d_mr{nullptr}, d_us{nullptr};

    std::vector<torch::Tensor> generator_parameters();
    std::vector<torch::Tensor> discriminator_parameters();
};
TORCH_MODULE(CycleGanModel);

// ---------------------------------------------------------------------------

/// Stacks images into a [B, 1, H, W] float32 tensor.
torch::Tensor to_tensor(std::span<const Image> images);
torch::Tensor to_tensor(const Image& image);
/// Splits a [B, 1, H, W] tensor into images (clipped to [0,1]).
std::vector<Image> to_images(const torch::Tensor& batch, Modality modality);

/// RAII: disables requires_grad on a module's parameters, restoring on exit.
class FrozenParameters {
public:
    explicit FrozenParameters(torch::nn::Module& module);
    ~FrozenParameters();
    FrozenParameters(const FrozenParameters&) = delete;
    FrozenParameters& operator=(const FrozenParameters&) = delete;

private:
    std::vector<std::pair<torch::Tensor, bool>> saved_;
};

/// Runs a default EdgeNet on one image.
Image edge_map(const Image& image);

}  // namespace xmsynth::nets
