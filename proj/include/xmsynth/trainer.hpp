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

// Training of the synthesis model, its ablations and the CycleGAN baseline.
//
// A run directory holds:
//   config.json   resolved configuration
//   losses.log    one JSON object per step
//   ckpt_<step>   checkpoints (see checkpoint.hpp); FINAL names the last one

#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmsynth/checkpoint.hpp"
#include "xmsynth/networks.hpp"
#include "xmsynth/objectives.hpp"
#include "xmsynth/phantom.hpp"

namespace xmsynth::training {

enum class Variant { Full, NoBilat, NoStruct, NoAttn, AE, GAN, CycleGAN };
inline constexpr Variant kAllVariants[] = {Variant::Full, Variant::NoBilat, Variant::NoStruct,
                                           Variant::NoAttn, Variant::AE, Variant::GAN,
                                           Variant::CycleGAN};
std::string_view to_string(Variant v);
/// Accepts full, no_bilat, no_struct, no_attn, ae, gan, cyclegan.
Variant variant_from_string(std::string_view s);

/// Which loss terms and components a variant trains.
struct VariantSpec {
    bool lat = true;
    bool app = true;
    bool stru = true;
    bool proj = true;
    bool app_back = true;
    bool bi = true;
    bool attention = true;
    bool reverse_path = true;
    std::vector<nets::Component> generators;
    std::vector<nets::Component> discriminators;
};
/// Not defined for CycleGAN, which has its own trainer.
VariantSpec variant_spec(Variant v);

struct TrainConfig {
    Variant variant = Variant::Full;
    long long steps = 2000;
    int batch_size = 16;
    double lr_generator = 2e-4;
    double lr_discriminator = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    std::uint64_t seed = 0;
    long long checkpoint_every = 1000;
    double lambda = 10.0;
    double cycle_weight = 10.0;  // CycleGAN only
    nets::NetworkConfig network;

    void validate() const;
};

nlohmann::ordered_json to_json(const TrainConfig& cfg);
/// Missing keys keep their defaults; unknown keys raise ConfigError.
TrainConfig train_config_from_json(const nlohmann::ordered_json& j, TrainConfig base = {});

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& term, long long step);
    [[nodiscard]] const std::string& term() const { return term_; }

private:
    std::string term_;
};

/// Enables deterministic kernels and a single intra-op thread when
/// XMSYNTH_DETERMINISTIC=1. Returns whether the mode is on.
bool configure_determinism();

/// In-memory training split of a dataset.
class DataPool {
public:
    DataPool(torch::Tensor us, torch::Tensor mr);
    static DataPool load(const std::filesystem::path& dataset_root,
                         phantom::Split split = phantom::Split::Train);

    struct Batch {
        torch::Tensor us;
        torch::Tensor mr;
    };
    /// Independent uniform draws with replacement from each modality.
    Batch sample(std::mt19937_64& rng, int batch_size) const;

    [[nodiscard]] std::int64_t us_count() const { return us_.size(0); }
    [[nodiscard]] std::int64_t mr_count() const { return mr_.size(0); }
    [[nodiscard]] Size2 image_size() const;

private:
    torch::Tensor us_, mr_;
};

class Trainer {
public:
    virtual ~Trainer() = default;
    /// Draws a batch and performs one update; returns the loss log line.
    virtual std::string step(const DataPool& pool) = 0;
    virtual void save(const std::filesystem::path& path, bool final) const = 0;

    [[nodiscard]] long long step_count() const { return step_; }
    [[nodiscard]] const TrainConfig& config() const { return cfg_; }
    std::mt19937_64& rng() { return rng_; }

protected:
    explicit Trainer(TrainConfig cfg);
    checkpoint::Archive base_archive(const char* kind, bool final) const;
    void restore_base(const checkpoint::Archive& archive);

    TrainConfig cfg_;
    long long step_ = 0;
    std::mt19937_64 rng_;
};

class SynthesisTrainer : public Trainer {
public:
    explicit SynthesisTrainer(TrainConfig cfg);

    std::string step(const DataPool& pool) override;
    /// One discriminator update then one generator update on the given batch.
    objectives::LossBreakdown step(const torch::Tensor& x_us, const torch::Tensor& x_mr);
    void save(const std::filesystem::path& path, bool final) const override;
    static std::unique_ptr<SynthesisTrainer> load(const std::filesystem::path& path);

    nets::SynthesisModel& model() { return model_; }

private:
    VariantSpec spec_;
    nets::SynthesisModel model_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
};

struct CycleLosses {
    double cycle = 0.0;  // weighted L1 of both round trips
    double mr_g = 0.0;
    double mr_d = 0.0;
    double us_g = 0.0;
    double us_d = 0.0;
    double total = 0.0;  // generator objective

    [[nodiscard]] std::string to_log_line(long long step) const;
};

class CycleGanTrainer : public Trainer {
public:
    explicit CycleGanTrainer(TrainConfig cfg);

    std::string step(const DataPool& pool) override;
    CycleLosses step(const torch::Tensor& x_us, const torch::Tensor& x_mr);
    void save(const std::filesystem::path& path, bool final) const override;
    static std::unique_ptr<CycleGanTrainer> load(const std::filesystem::path& path);

    nets::CycleGanModel& model() { return model_; }

private:
    nets::CycleGanModel model_{nullptr};
    std::unique_ptr<torch::optim::Adam> opt_g_, opt_d_;
};

std::unique_ptr<Trainer> make_trainer(const TrainConfig& cfg);
std::unique_ptr<Trainer> load_trainer(const std::filesystem::path& checkpoint);

/// Trains from scratch into `run_dir`; returns the final checkpoint path.
/// `progress`, when given, receives a line every `report_every` steps.
std::filesystem::path train(const TrainConfig& cfg, const std::filesystem::path& dataset_root,
                            const std::filesystem::path& run_dir, std::ostream* progress = nullptr,
                            long long report_every = 100);

/// Resolves a run directory (via FINAL) or a checkpoint file.
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

/// Translates US images with a trained checkpoint. The ae variant returns its
/// US reconstruction. Throws ConfigError when the image size does not suit the
/// checkpoint's network.
std::vector<Image> synthesize(const std::filesystem::path& checkpoint, std::span<const Image> us_images);

}  // namespace xmsynth::training
