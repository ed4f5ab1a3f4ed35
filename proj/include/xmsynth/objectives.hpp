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

// Loss terms of the joint adversarial objective.
//
//   forward  L_f = lambda * L_lat  + L_app      + L_stru
//   reverse  L_r = lambda * L_proj + L_app_back + L_bi
//   total    L   = L_f + L_r
//
// Every adversarial term is split into a discriminator side (d) and a
// non-saturating generator side (g). The d side never reaches generator
// parameters and the g side never reaches discriminator parameters.

#pragma once

#include <torch/torch.h>

#include <string>

#include "xmsynth/networks.hpp"

namespace xmsynth::objectives {

/// Discriminator probabilities are clamped to [eps, 1 - eps] before any log.
inline constexpr double kProbEpsilon = 1e-7;

struct LossWeights {
    double lambda = 10.0;
    void validate() const;
};

/// Raw term values; g/d suffixes name the generator/discriminator side.
struct LossTerms {
    double lat = 0.0;
    double app_g = 0.0;
    double app_d = 0.0;
    double stru_g = 0.0;
    double stru_d = 0.0;
    double proj = 0.0;
    double app_back_g = 0.0;
    double app_back_d = 0.0;
    double bi_g = 0.0;
    double bi_d = 0.0;
};

struct LossBreakdown : LossTerms {
    double forward_total = 0.0;
    double reverse_total = 0.0;
    double total = 0.0;

    [[nodiscard]] bool finite() const;
    /// Name of the first non-finite field, or empty.
    [[nodiscard]] std::string first_non_finite() const;
    /// One-line JSON record; `step` is prepended.
    [[nodiscard]] std::string to_log_line(long long step) const;
};

LossBreakdown compose(const LossTerms& terms, const LossWeights& weights);

/// Mean absolute pixel difference (used for both L_lat and L_proj).
torch::Tensor loss_lat(const torch::Tensor& x_hat_us, const torch::Tensor& x_us);
torch::Tensor loss_proj(const torch::Tensor& x_tilde_us, const torch::Tensor& x_us);

struct AdversarialLoss {
    torch::Tensor d_loss;
    torch::Tensor g_loss;
};

/// Binary GAN objective from probabilities:
///   d = -mean log D(real) - mean log(1 - D(fake)),  g = -mean log D(fake).
AdversarialLoss adversarial_from_probs(const torch::Tensor& p_real, const torch::Tensor& p_fake);

/// Discriminator side with both inputs detached.
torch::Tensor discriminator_loss(nets::Discriminator& head, const torch::Tensor& real,
                                 const torch::Tensor& fake);
/// Generator side with the head's parameters frozen.
torch::Tensor generator_loss(nets::Discriminator& head, const torch::Tensor& fake);

AdversarialLoss adversarial_pair(nets::Discriminator& head, const torch::Tensor& real,
                                 const torch::Tensor& fake);

/// Appearance adversary: real MR vs synthesized MR.
AdversarialLoss loss_app(nets::SynthesisModel& model, const torch::Tensor& real_mr,
                         const torch::Tensor& synth_mr);
/// Structural adversary over EdgeNet maps of both batches.
AdversarialLoss loss_stru(nets::SynthesisModel& model, const torch::Tensor& synth_mr,
                          const torch::Tensor& real_mr);
/// Backward-inference adversary: real US vs back-inferred US.
AdversarialLoss loss_app_back(nets::SynthesisModel& model, const torch::Tensor& x_us,
                              const torch::Tensor& x_tilde_us);
/// Bi-directional latent adversary: y (real) vs y_back (fake).
AdversarialLoss loss_bi(nets::SynthesisModel& model, const torch::Tensor& y,
                        const torch::Tensor& y_back);

}  // namespace xmsynth::objectives
