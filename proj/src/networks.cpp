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

#include "xmsynth/networks.hpp"

#include <cmath>
#include <cstring>

namespace xmsynth::nets {

namespace F = torch::nn::functional;

namespace {

constexpr double kLeakySlope = 0.2;
// Keeps sqrt differentiable at zero gradient magnitude.
constexpr double kMagnitudeEps = 1e-12;

// Conv, per-sample instance normalization, LeakyReLU. Without the
// normalization the stacked encoder/decoder saturates the output sigmoid
// within a few dozen Adam steps.
torch::nn::Sequential conv_block(int in, int out) {
    return torch::nn::Sequential(
        torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1)),
        torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)),
        torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
}

void check_image_batch(const torch::Tensor& x, const char* what) {
    if (x.dim() != 4 || x.size(1) != 1)
        throw InternalError(std::string(what) + ": expected a [B,1,H,W] image batch");
}

torch::Tensor conv_replicate(const torch::Tensor& x, const torch::Tensor& kernel) {
    const auto padded = F::pad(x, F::PadFuncOptions({1, 1, 1, 1}).mode(torch::kReplicate));
    return F::conv2d(padded, kernel.to(x.dtype()));
}

}  // namespace

int NetworkConfig::embed_channels() const {
    return attention_embed_channels > 0 ? attention_embed_channels
                                        : std::max(1, attention_channels() / 2);
}

void NetworkConfig::validate() const {
    if (depth < 1) throw ConfigError("network depth must be >= 1");
    if (base_channels <= 0 || latent_channels <= 0 || discriminator_channels <= 0 ||
        attention_embed_channels < 0)
        throw ConfigError("network channel counts must be positive");
    if (depth > 8) throw ConfigError("network depth must be <= 8");
}

void NetworkConfig::validate_size(Size2 size) const {
    const int div = 1 << depth;
    if (size.height <= 0 || size.width <= 0 || size.height % div != 0 || size.width % div != 0)
        throw ConfigError("image size " + std::to_string(size.height) + "x" +
                          std::to_string(size.width) + " is not divisible by 2^" +
                          std::to_string(depth));
}

// ---------------------------------------------------------------------------

EncoderImpl::EncoderImpl(const NetworkConfig& cfg) {
    cfg.validate();
    int in = 1;
    for (int s = 0; s < cfg.depth; ++s) {
        const int c = cfg.stage_channels(s);
        auto stage = torch::nn::Sequential();
        stage->extend(*conv_block(in, c));
        stage->extend(*conv_block(c, c));
        stages_.push_back(register_module("stage" + std::to_string(s), stage));
        in = c;
    }
    bottleneck_ = register_module("bottleneck", conv_block(in, cfg.latent_channels));
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& x) {
    check_image_batch(x, "encoder");
    const auto div = std::int64_t{1} << stages_.size();
    if (x.size(2) % div != 0 || x.size(3) % div != 0)
        throw ConfigError("input size is not divisible by 2^depth");
    EncoderOutput out;
    torch::Tensor h = x;
    for (auto& stage : stages_) {
        h = stage->forward(h);
        out.skips.push_back(h);
        h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2));
    }
    out.latent = bottleneck_->forward(h);
    return out;
}

DecoderImpl::DecoderImpl(const NetworkConfig& cfg, bool use_skips)
    : cfg_(cfg), use_skips_(use_skips) {
    cfg.validate();
    int in = cfg.latent_channels;
    // Built from the coarsest stage up; index k handles stage depth-1-k.
    for (int s = cfg.depth - 1; s >= 0; --s) {
        const int c = cfg.stage_channels(s);
        ups_.push_back(register_module(
            "up" + std::to_string(s),
            torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(in, c, 2).stride(2))));
        blocks_.push_back(
            register_module("block" + std::to_string(s), conv_block(use_skips ? 2 * c : c, c)));
        in = c;
    }
    head_ = register_module("head", torch::nn::Conv2d(torch::nn::Conv2dOptions(in, 1, 1)));
}

DecoderOutput DecoderImpl::forward(const torch::Tensor& latent,
                                   const std::vector<torch::Tensor>& skips,
                                   const Modifier& modify) {
    if (use_skips_ && skips.size() != static_cast<std::size_t>(cfg_.depth))
        throw InternalError("decoder: expected " + std::to_string(cfg_.depth) + " skip features");
    DecoderOutput out;
    torch::Tensor h = latent;
    for (std::size_t k = 0; k < ups_.size(); ++k) {
        const int s = cfg_.depth - 1 - static_cast<int>(k);
        h = ups_[k]->forward(h);
        if (use_skips_) {
            const auto& skip = skips[static_cast<std::size_t>(s)];
            if (skip.size(2) != h.size(2) || skip.size(3) != h.size(3) || skip.size(0) != h.size(0))
                throw InternalError("decoder: skip feature shape mismatch at stage " +
                                    std::to_string(s));
            h = torch::cat({h, skip}, 1);
        }
        h = blocks_[k]->forward(h);
        if (s == cfg_.attention_stage()) {
            out.feature = h;
            if (modify) h = modify(h);
        }
    }
    out.logits = head_->forward(h);
    out.image = torch::sigmoid(out.logits);
    return out;
}

// ---------------------------------------------------------------------------

CrossModalAttentionImpl::CrossModalAttentionImpl(int channels, int embed_channels) {
    const auto conv1x1 = [](int in, int out) {
        return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 1));
    };
    delta = register_module("delta", conv1x1(channels, embed_channels));
    phi = register_module("phi", conv1x1(channels, embed_channels));
    g = register_module("g", conv1x1(channels, embed_channels));
    eta = register_module("eta", conv1x1(embed_channels, channels));
    torch::NoGradGuard no_grad;
    eta->weight.zero_();
    eta->bias.zero_();
}

torch::Tensor CrossModalAttentionImpl::affinity(const torch::Tensor& f_us) {
    const auto b = f_us.size(0);
    const auto n = f_us.size(2) * f_us.size(3);
    const auto d = delta->forward(f_us).reshape({b, -1, n});
    const auto p = phi->forward(f_us).reshape({b, -1, n});
    return torch::softmax(torch::bmm(d.transpose(1, 2), p), 2);
}

torch::Tensor CrossModalAttentionImpl::attend(const torch::Tensor& f_us, const torch::Tensor& f_mr) {
    if (f_us.dim() != 4 || f_mr.dim() != 4 || f_us.size(0) != f_mr.size(0) ||
        f_us.size(2) != f_mr.size(2) || f_us.size(3) != f_mr.size(3))
        throw InternalError("cross-modal attention: f_U and f_M spatial shapes differ");
    const auto b = f_mr.size(0);
    const auto n = f_mr.size(2) * f_mr.size(3);
    const auto a = affinity(f_us);
    const auto gm = g->forward(f_mr).reshape({b, -1, n});
    // out[:, :, i] = sum_j A[i, j] g(f_M)[:, :, j]
    return torch::bmm(gm, a.transpose(1, 2)).reshape({b, -1, f_mr.size(2), f_mr.size(3)});
}

torch::Tensor CrossModalAttentionImpl::forward(const torch::Tensor& f_us, const torch::Tensor& f_mr) {
    return eta->forward(attend(f_us, f_mr)) + f_mr;
}

// ---------------------------------------------------------------------------

EdgeNetImpl::EdgeNetImpl() {
    const auto gauss = torch::tensor({1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0},
                                     torch::kFloat64)
                           .div(16.0)
                           .reshape({1, 1, 3, 3});
    // Layer 2: channel 0 = d/dx of the smoothed image, channel 1 = pass-through.
    auto dx = torch::zeros({2, 1, 3, 3}, torch::kFloat64);
    dx[0][0][1][0] = -0.5;
    dx[0][0][1][2] = 0.5;
    dx[1][0][1][1] = 1.0;
    // Layer 3: channel 0 = pass-through of d/dx, channel 1 = d/dy.
    auto dy = torch::zeros({2, 2, 3, 3}, torch::kFloat64);
    dy[0][0][1][1] = 1.0;
    dy[1][1][0][1] = -0.5;
    dy[1][1][2][1] = 0.5;
    smooth_in = register_buffer("smooth_in", gauss.to(torch::kFloat32));
    diff_x = register_buffer("diff_x", dx.to(torch::kFloat32));
    diff_y = register_buffer("diff_y", dy.to(torch::kFloat32));
    smooth_out = register_buffer("smooth_out", gauss.clone().to(torch::kFloat32));
}

torch::Tensor EdgeNetImpl::forward(const torch::Tensor& x) {
    check_image_batch(x, "edge net");
    auto h = conv_replicate(x, smooth_in);
    h = conv_replicate(h, diff_x);
    h = conv_replicate(h, diff_y);
    const auto gx = h.select(1, 0), gy = h.select(1, 1);
    const double eps_root = std::sqrt(kMagnitudeEps);
    const auto mag = (torch::sqrt(gx * gx + gy * gy + kMagnitudeEps) - eps_root).unsqueeze(1);
    // |grad| of a [0,1] image under half-difference kernels is at most sqrt(2)/2.
    return torch::clamp(conv_replicate(mag, smooth_out) * std::sqrt(2.0), 0.0, 1.0);
}

std::uint64_t EdgeNetImpl::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& k : {smooth_in, diff_x, diff_y, smooth_out}) {
        const auto flat = k.detach().to(torch::kCPU).to(torch::kFloat64).contiguous();
        const auto* bytes = reinterpret_cast<const unsigned char*>(flat.data_ptr<double>());
        for (std::size_t i = 0; i < static_cast<std::size_t>(flat.numel()) * sizeof(double); ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    }
    return h;
}

// ---------------------------------------------------------------------------

DiscriminatorImpl::DiscriminatorImpl(int in_channels, int channels) {
    const int widths[4] = {channels, 2 * channels, 4 * channels, 4 * channels};
    body_ = torch::nn::Sequential();
    int in = in_channels;
    for (int w : widths) {
        body_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(in, w, 3).stride(2).padding(1)));
        body_->push_back(
            torch::nn::LeakyReLU(torch::nn::LeakyReLUOptions().negative_slope(kLeakySlope)));
        in = w;
    }
    body_ = register_module("body", body_);
    out_ = register_module("out", torch::nn::Linear(in, 1));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& x) {
    const auto h = body_->forward(x).mean({2, 3});
    return out_->forward(h).squeeze(1);
}

// ---------------------------------------------------------------------------

std::string_view to_string(Head h) {
    switch (h) {
    case Head::App: return "app";
    case Head::Stru: return "stru";
    case Head::Bi: return "bi";
    case Head::AppBack: return "app_back";
    }
    return "?";
}

std::string_view to_string(Component c) {
    switch (c) {
    case Component::Extractor: return "extractor";
    case Component::DecoderUs: return "decoder_us";
    case Component::DecoderMr: return "decoder_mr";
    case Component::Attention: return "attention";
    case Component::EncoderBack: return "encoder_back";
    case Component::DecoderBack: return "decoder_back";
    case Component::DApp: return "d_app";
    case Component::DStru: return "d_stru";
    case Component::DBi: return "d_bi";
    case Component::DAppBack: return "d_app_back";
    }
    return "?";
}

SynthesisModelImpl::SynthesisModelImpl(const NetworkConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    extractor = register_module("extractor", Encoder(cfg));
    decoder_us = register_module("decoder_us", Decoder(cfg, true));
    decoder_mr = register_module("decoder_mr", Decoder(cfg, true));
    attention = register_module("attention",
                                CrossModalAttention(cfg.attention_channels(), cfg.embed_channels()));
    encoder_back = register_module("encoder_back", Encoder(cfg));
    decoder_back = register_module("decoder_back", Decoder(cfg, false));
    edge_net = register_module("edge_net", EdgeNet());
    d_app = register_module("d_app", Discriminator(1, cfg.discriminator_channels));
    d_stru = register_module("d_stru", Discriminator(1, cfg.discriminator_channels));
    d_bi = register_module("d_bi", Discriminator(cfg.latent_channels, cfg.discriminator_channels));
    d_app_back = register_module("d_app_back", Discriminator(1, cfg.discriminator_channels));
}

EncoderOutput SynthesisModelImpl::extract_features(const torch::Tensor& x_us) {
    return extractor->forward(x_us);
}

DecoderOutput SynthesisModelImpl::decode_us(const torch::Tensor& y,
                                            const std::vector<torch::Tensor>& skips) {
    return decoder_us->forward(y, skips);
}

torch::Tensor SynthesisModelImpl::decode_mr(const torch::Tensor& y,
                                            const std::vector<torch::Tensor>& skips,
                                            const torch::Tensor& f_us) {
    if (!attention_enabled_) return decoder_mr->forward(y, skips).image;
    if (!f_us.defined()) throw InternalError("decode_mr: attention needs the f_U feature");
    return decoder_mr
        ->forward(y, skips, [&](const torch::Tensor& f_mr) { return attention->forward(f_us, f_mr); })
        .image;
}

torch::Tensor SynthesisModelImpl::encode_back(const torch::Tensor& x_hat_mr) {
    return encoder_back->forward(x_hat_mr).latent;
}

torch::Tensor SynthesisModelImpl::decode_back_us(const torch::Tensor& y_back) {
    return decoder_back->forward(y_back, {}).image;
}

Discriminator& SynthesisModelImpl::discriminator(Head head) {
    switch (head) {
    case Head::App: return d_app;
    case Head::Stru: return d_stru;
    case Head::Bi: return d_bi;
    case Head::AppBack: return d_app_back;
    }
    throw InternalError("unknown discriminator head");
}

torch::Tensor SynthesisModelImpl::discriminate(Head head, const torch::Tensor& input) {
    const bool latent_head = head == Head::Bi;
    const bool is_image = input.dim() == 4 && input.size(1) == 1;
    const bool is_latent = input.dim() == 4 && input.size(1) == cfg_.latent_channels;
    if ((latent_head && !is_latent) || (!latent_head && !is_image))
        throw InternalError("discriminator head '" + std::string(to_string(head)) +
                            "' received an input of the wrong kind");
    return discriminator(head)->probability(input);
}

ForwardResult SynthesisModelImpl::forward(const torch::Tensor& x_us, bool with_reverse) {
    ForwardResult r;
    auto enc = extract_features(x_us);
    r.y = enc.latent;
    r.skips = std::move(enc.skips);
    auto dec_us = decode_us(r.y, r.skips);
    r.x_hat_us = dec_us.image;
    r.f_us = dec_us.feature;
    r.x_hat_mr = decode_mr(r.y, r.skips, r.f_us);
    if (with_reverse) {
        r.y_back = encode_back(r.x_hat_mr);
        r.x_tilde_us = decode_back_us(r.y_back);
    }
    return r;
}

torch::Tensor SynthesisModelImpl::synthesize(const torch::Tensor& x_us) {
    return forward(x_us, false).x_hat_mr;
}

std::vector<torch::Tensor> SynthesisModelImpl::parameters_of(Component c) {
    switch (c) {
    case Component::Extractor: return extractor->parameters();
    case Component::DecoderUs: return decoder_us->parameters();
    case Component::DecoderMr: return decoder_mr->parameters();
    case Component::Attention: return attention->parameters();
    case Component::EncoderBack: return encoder_back->parameters();
    case Component::DecoderBack: return decoder_back->parameters();
    case Component::DApp: return d_app->parameters();
    case Component::DStru: return d_stru->parameters();
    case Component::DBi: return d_bi->parameters();
    case Component::DAppBack: return d_app_back->parameters();
    }
    return {};
}

// ---------------------------------------------------------------------------

CycleGeneratorImpl::CycleGeneratorImpl(const NetworkConfig& cfg, bool near_identity) {
    encoder = register_module("encoder", Encoder(cfg));
    decoder = register_module("decoder", Decoder(cfg, true));
    if (near_identity) {
        torch::NoGradGuard no_grad;
        decoder->head()->weight.zero_();
        decoder->head()->bias.zero_();
    }
}

torch::Tensor CycleGeneratorImpl::forward(const torch::Tensor& x) {
    auto enc = encoder->forward(x);
    const auto logits = decoder->forward(enc.latent, enc.skips).logits;
    return torch::sigmoid(logits + torch::logit(x, 1e-3));
}

CycleGanModelImpl::CycleGanModelImpl(const NetworkConfig& cfg, bool near_identity) {
    us_to_mr = register_module("us_to_mr", CycleGenerator(cfg, near_identity));
    mr_to_us = register_module("mr_to_us", CycleGenerator(cfg, near_identity));
    d_mr = register_module("d_mr", Discriminator(1, cfg.discriminator_channels));
    d_us = register_module("d_us", Discriminator(1, cfg.discriminator_channels));
}

std::vector<torch::Tensor> CycleGanModelImpl::generator_parameters() {
    auto p = us_to_mr->parameters();
    const auto q = mr_to_us->parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

std::vector<torch::Tensor> CycleGanModelImpl::discriminator_parameters() {
    auto p = d_mr->parameters();
    const auto q = d_us->parameters();
    p.insert(p.end(), q.begin(), q.end());
    return p;
}

// ---------------------------------------------------------------------------

torch::Tensor to_tensor(std::span<const Image> images) {
    if (images.empty()) throw InternalError("to_tensor: empty image list");
    const Size2 size = images.front().size();
    auto out = torch::empty({static_cast<std::int64_t>(images.size()), 1, size.height, size.width},
                            torch::kFloat32);
    auto* dst = out.data_ptr<float>();
    const std::size_t plane = static_cast<std::size_t>(size.height) * size.width;
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (images[i].size() != size) throw InternalError("to_tensor: images differ in size");
        std::memcpy(dst + i * plane, images[i].pixels().data(), plane * sizeof(float));
    }
    return out;
}

torch::Tensor to_tensor(const Image& image) { return to_tensor(std::span<const Image>(&image, 1)); }

std::vector<Image> to_images(const torch::Tensor& batch, Modality modality) {
    if (batch.dim() != 4 || batch.size(1) != 1) throw InternalError("to_images: expected [B,1,H,W]");
    const auto t = batch.detach().to(torch::kCPU).to(torch::kFloat32).contiguous();
    const Size2 size{static_cast<int>(t.size(2)), static_cast<int>(t.size(3))};
    const std::size_t plane = static_cast<std::size_t>(size.height) * size.width;
    std::vector<Image> out;
    out.reserve(static_cast<std::size_t>(t.size(0)));
    const float* src = t.data_ptr<float>();
    for (std::int64_t i = 0; i < t.size(0); ++i) {
        std::vector<float> px(src + i * plane, src + (i + 1) * plane);
        Image img(size, modality, std::move(px));
        img.clip();
        out.push_back(std::move(img));
    }
    return out;
}

FrozenParameters::FrozenParameters(torch::nn::Module& module) {
    for (auto& p : module.parameters()) {
        saved_.emplace_back(p, p.requires_grad());
        p.set_requires_grad(false);
    }
}

FrozenParameters::~FrozenParameters() {
    for (auto& [p, flag] : saved_) p.set_requires_grad(flag);
}

Image edge_map(const Image& image) {
    static thread_local EdgeNet net;
    torch::NoGradGuard no_grad;
    return to_images(net->forward(to_tensor(image)), image.modality()).front();
}

}  // namespace xmsynth::nets
