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

#include "xmsynth/objectives.hpp"

#include <cmath>
#include <cstdio>
#include <utility>

namespace xmsynth::objectives {
namespace {

torch::Tensor clamp_prob(const torch::Tensor& p) {
    return torch::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
}

void check_batch(const torch::Tensor& t, const char* what) {
    if (!t.defined() || t.dim() == 0 || t.size(0) == 0)
        throw InternalError(std::string(what) + ": empty batch");
}

torch::Tensor l1(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes()) throw InternalError(std::string(what) + ": shape mismatch");
    return (a - b).abs().mean();
}

template <typename F>
void for_each_field(const LossBreakdown& b, F&& f) {
    f("lat", b.lat);
    f("app_g", b.app_g);
    f("app_d", b.app_d);
    f("stru_g", b.stru_g);
    f("stru_d", b.stru_d);
    f("proj", b.proj);
    f("app_back_g", b.app_back_g);
    f("app_back_d", b.app_back_d);
    f("bi_g", b.bi_g);
    f("bi_d", b.bi_d);
    f("forward_total", b.forward_total);
    f("reverse_total", b.reverse_total);
    f("total", b.total);
}

}  // namespace

void LossWeights::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be positive");
}

bool LossBreakdown::finite() const { return first_non_finite().empty(); }

std::string LossBreakdown::first_non_finite() const {
    std::string name;
    for_each_field(*this, [&](const char* key, double v) {
        if (name.empty() && !std::isfinite(v)) name = key;
    });
    return name;
}

std::string LossBreakdown::to_log_line(long long step) const {
    std::string line = "{\"step\":" + std::to_string(step);
    char buf[64];
    for_each_field(*this, [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        line += ",\"";
        line += key;
        line += "\":";
        line += std::isfinite(v) ? buf : "null";
    });
    return line + "}";
}

LossBreakdown compose(const LossTerms& terms, const LossWeights& weights) {
    weights.validate();
    LossBreakdown b;
    static_cast<LossTerms&>(b) = terms;
    b.forward_total = weights.lambda * terms.lat + terms.app_g + terms.stru_g;
    b.reverse_total = weights.lambda * terms.proj + terms.app_back_g + terms.bi_g;
    b.total = b.forward_total + b.reverse_total;
    return b;
}

torch::Tensor loss_lat(const torch::Tensor& x_hat_us, const torch::Tensor& x_us) {
    return l1(x_hat_us, x_us, "loss_lat");
}

torch::Tensor loss_proj(const torch::Tensor& x_tilde_us, const torch::Tensor& x_us) {
    return l1(x_tilde_us, x_us, "loss_proj");
}

AdversarialLoss adversarial_from_probs(const torch::Tensor& p_real, const torch::Tensor& p_fake) {
    check_batch(p_real, "adversarial_pair(real)");
    check_batch(p_fake, "adversarial_pair(fake)");
    const auto real = clamp_prob(p_real), fake = clamp_prob(p_fake);
    return {-torch::log(real).mean() - torch::log(1.0 - fake).mean(), -torch::log(fake).mean()};
}

torch::Tensor discriminator_loss(nets::Discriminator& head, const torch::Tensor& real,
                                 const torch::Tensor& fake) {
    check_batch(real, "discriminator_loss(real)");
    check_batch(fake, "discriminator_loss(fake)");
    const auto p_real = clamp_prob(head->probability(real.detach()));
    const auto p_fake = clamp_prob(head->probability(fake.detach()));
    return -torch::log(p_real).mean() - torch::log(1.0 - p_fake).mean();
}

torch::Tensor generator_loss(nets::Discriminator& head, const torch::Tensor& fake) {
    check_batch(fake, "generator_loss(fake)");
    nets::FrozenParameters frozen(*head);
    return -torch::log(clamp_prob(head->probability(fake))).mean();
}

AdversarialLoss adversarial_pair(nets::Discriminator& head, const torch::Tensor& real,
                                 const torch::Tensor& fake) {
    return {discriminator_loss(head, real, fake), generator_loss(head, fake)};
}

AdversarialLoss loss_app(nets::SynthesisModel& model, const torch::Tensor& real_mr,
                         const torch::Tensor& synth_mr) {
    return adversarial_pair(model->d_app, real_mr, synth_mr);
}

AdversarialLoss loss_stru(nets::SynthesisModel& model, const torch::Tensor& synth_mr,
                          const torch::Tensor& real_mr) {
    return adversarial_pair(model->d_stru, model->edge_map(real_mr), model->edge_map(synth_mr));
}

AdversarialLoss loss_app_back(nets::SynthesisModel& model, const torch::Tensor& x_us,
                              const torch::Tensor& x_tilde_us) {
    return adversarial_pair(model->d_app_back, x_us, x_tilde_us);
}

AdversarialLoss loss_bi(nets::SynthesisModel& model, const torch::Tensor& y,
                        const torch::Tensor& y_back) {
    if (y.sizes() != y_back.sizes()) throw InternalError("loss_bi: y and y_back shapes differ");
    return adversarial_pair(model->d_bi, y, y_back);
}

}  // namespace xmsynth::objectives
