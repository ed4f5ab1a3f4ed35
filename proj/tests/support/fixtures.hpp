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

// Shared helpers for the unit and acceptance tests.

#pragma once

#include <torch/torch.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "xmsynth/networks.hpp"
#include "xmsynth/objectives.hpp"
#include "xmsynth/phantom.hpp"
#include "xmsynth/trainer.hpp"

namespace xmsynth::fixtures {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        auto base = std::filesystem::temp_directory_path();
        path_ = base / ("xmsynth_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::filesystem::path path_;
};

/// 32x32 dataset, 300 US / 5 MR, small enough to render in well under a second.
inline phantom::DatasetConfig small_dataset_config(std::uint64_t seed = 11) {
    phantom::DatasetConfig cfg;
    cfg.master_seed = seed;
    cfg.n_us = 300;
    cfg.n_mr = 5;
    cfg.imbalance_ratio = 60.0;
    cfg.size = {32, 32};
    cfg.ranges.skull_cx = {15.0, 17.0};
    cfg.ranges.skull_cy = {15.0, 17.0};
    cfg.ranges.skull_semi_a = {11.0, 13.5};
    cfg.ranges.skull_semi_b = {9.0, 11.0};
    cfg.ranges.skull_thickness = {2.0, 2.5};
    return cfg;
}

inline nets::NetworkConfig tiny_network() {
    nets::NetworkConfig n;
    n.base_channels = 4;
    n.depth = 3;
    n.latent_channels = 8;
    n.discriminator_channels = 4;
    return n;
}

inline training::TrainConfig tiny_train_config(training::Variant v = training::Variant::Full,
                                               std::uint64_t seed = 5) {
    training::TrainConfig c;
    c.variant = v;
    c.steps = 10;
    c.batch_size = 4;
    c.seed = seed;
    c.network = tiny_network();
    return c;
}

/// Generator-side objective as the trainer assembles it, for the full variant.
inline torch::Tensor generator_objective(nets::SynthesisModel& m, const torch::Tensor& x_us,
                                         const torch::Tensor& x_mr, double lambda) {
    using namespace objectives;
    (void)x_mr;
    const auto f = m->forward(x_us, true);
    return lambda * loss_lat(f.x_hat_us, x_us) + generator_loss(m->d_app, f.x_hat_mr) +
           generator_loss(m->d_stru, m->edge_map(f.x_hat_mr)) + lambda * loss_proj(f.x_tilde_us, x_us) +
           generator_loss(m->d_app_back, f.x_tilde_us) + generator_loss(m->d_bi, f.y_back);
}

/// Sum of the four discriminator-side terms.
inline torch::Tensor discriminator_objective(nets::SynthesisModel& m, const torch::Tensor& x_us,
                                             const torch::Tensor& x_mr) {
    using namespace objectives;
    const auto f = m->forward(x_us, true);
    return discriminator_loss(m->d_app, x_mr, f.x_hat_mr) +
           discriminator_loss(m->d_stru, m->edge_map(x_mr), m->edge_map(f.x_hat_mr)) +
           discriminator_loss(m->d_bi, f.y, f.y_back) + discriminator_loss(m->d_app_back, x_us, f.x_tilde_us);
}

struct GradientCheck {
    int sampled = 0;
    int passed = 0;
    double worst = 0.0;
    [[nodiscard]] double fraction() const { return sampled ? static_cast<double>(passed) / sampled : 0.0; }
};

/// Compares autograd gradients of `loss` with central differences on a random
/// sample of the scalar entries of `params` (double precision expected).
/// Relative error is |a - n| / max(|a|, |n|, floor).
template <class Loss>
GradientCheck finite_difference_check(std::vector<torch::Tensor> params, Loss&& loss, int samples,
                                      std::uint64_t seed, double step = 1e-4, double tolerance = 1e-4,
                                      double floor = 1e-7) {
    for (auto& p : params)
        if (p.grad().defined()) p.mutable_grad().zero_();
    loss().backward();
    std::vector<std::pair<std::size_t, std::int64_t>> all;
    for (std::size_t i = 0; i < params.size(); ++i)
        for (std::int64_t k = 0; k < params[i].numel(); ++k) all.emplace_back(i, k);
    std::mt19937_64 rng(seed);
    std::shuffle(all.begin(), all.end(), rng);
    if (static_cast<std::size_t>(samples) < all.size()) all.resize(static_cast<std::size_t>(samples));

    GradientCheck r;
    torch::NoGradGuard no_grad;
    for (const auto& entry : all) {
        const std::size_t i = entry.first;
        const std::int64_t k = entry.second;
        auto flat = params[i].view(-1);
        const double analytic = params[i].grad().view(-1)[k].item<double>();
        const double orig = flat[k].item<double>();
        flat[k].fill_(orig + step);
        const double up = loss().template item<double>();
        flat[k].fill_(orig - step);
        const double down = loss().template item<double>();
        flat[k].fill_(orig);
        const double numeric = (up - down) / (2.0 * step);
        const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
        ++r.sampled;
        if (rel < tolerance) ++r.passed;
        r.worst = std::max(r.worst, rel);
    }
    return r;
}

}  // namespace xmsynth::fixtures
