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

#include "xmsynth/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>

#include "xmsynth/io.hpp"

namespace xmsynth::training {
namespace {

using json = nlohmann::ordered_json;
using nets::Component;

constexpr const char* kFinalTag = "FINAL";

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::vector<torch::Tensor> gather(nets::SynthesisModel& model, const std::vector<Component>& comps) {
    std::vector<torch::Tensor> out;
    for (const auto c : comps)
        for (auto& p : model->parameters_of(c)) out.push_back(p);
    return out;
}

std::unique_ptr<torch::optim::Adam> make_adam(std::vector<torch::Tensor> params, double lr,
                                              const TrainConfig& cfg) {
    if (params.empty()) return nullptr;
    return std::make_unique<torch::optim::Adam>(
        std::move(params), torch::optim::AdamOptions(lr).betas({cfg.beta1, cfg.beta2}));
}

double scalar(const torch::Tensor& t) { return t.item<double>(); }

void require_finite(double v, const char* term, long long step) {
    if (!std::isfinite(v)) throw TrainingDiverged(term, step);
}

void add_optimizer(checkpoint::Archive& a, const char* name, const torch::optim::Adam* opt) {
    if (opt) a.blobs[name] = checkpoint::serialize_optimizer(*opt);
}

void load_optimizer(const checkpoint::Archive& a, const char* name, torch::optim::Adam* opt) {
    if (!opt) return;
    const auto it = a.blobs.find(name);
    if (it == a.blobs.end())
        throw checkpoint::CheckpointError(std::string("checkpoint lacks optimizer state '") + name + "'");
    checkpoint::deserialize_optimizer(it->second, *opt);
}

std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
    case Variant::Full: return "full";
    case Variant::NoBilat: return "no_bilat";
    case Variant::NoStruct: return "no_struct";
    case Variant::NoAttn: return "no_attn";
    case Variant::AE: return "ae";
    case Variant::GAN: return "gan";
    case Variant::CycleGAN: return "cyclegan";
    }
    return "?";
}

Variant variant_from_string(std::string_view s) {
    for (const auto v : kAllVariants)
        if (to_string(v) == s) return v;
    throw ConfigError("unknown variant '" + std::string(s) +
                      "' (expected full, no_bilat, no_struct, no_attn, ae, gan or cyclegan)");
}

VariantSpec variant_spec(Variant v) {
    VariantSpec s;
    s.generators.assign(std::begin(nets::kGeneratorComponents), std::end(nets::kGeneratorComponents));
    s.discriminators.assign(std::begin(nets::kDiscriminatorComponents),
                            std::end(nets::kDiscriminatorComponents));
    switch (v) {
    case Variant::Full: break;
    case Variant::NoBilat:
        s.bi = false;
        s.discriminators = {Component::DApp, Component::DStru, Component::DAppBack};
        break;
    case Variant::NoStruct:
        s.stru = false;
        s.discriminators = {Component::DApp, Component::DBi, Component::DAppBack};
        break;
    case Variant::NoAttn:
        s.attention = false;
        s.generators = {Component::Extractor, Component::DecoderUs, Component::DecoderMr,
                        Component::EncoderBack, Component::DecoderBack};
        break;
    case Variant::AE:
        s = VariantSpec{true, false, false, false, false, false, true, false,
                        {Component::Extractor, Component::DecoderUs}, {}};
        break;
    case Variant::GAN:
        s.lat = s.stru = s.proj = s.bi = false;
        s.discriminators = {Component::DApp, Component::DAppBack};
        break;
    case Variant::CycleGAN:
        throw InternalError("the CycleGAN baseline has no synthesis-model variant spec");
    }
    return s;
}

void TrainConfig::validate() const {
    if (steps < 1) throw ConfigError("steps must be at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (!(lr_generator > 0.0) || !(lr_discriminator > 0.0)) throw ConfigError("learning rates must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("Adam betas must lie in [0, 1)");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be at least 1");
    if (!(cycle_weight >= 0.0) || !std::isfinite(cycle_weight)) throw ConfigError("cycle_weight must be non-negative");
    objectives::LossWeights{lambda}.validate();
    network.validate();
}

json to_json(const TrainConfig& cfg) {
    return json{{"variant", to_string(cfg.variant)},
                {"steps", cfg.steps},
                {"batch_size", cfg.batch_size},
                {"lr_generator", cfg.lr_generator},
                {"lr_discriminator", cfg.lr_discriminator},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"seed", cfg.seed},
                {"checkpoint_every", cfg.checkpoint_every},
                {"lambda", cfg.lambda},
                {"cycle_weight", cfg.cycle_weight},
                {"network",
                 {{"base_channels", cfg.network.base_channels},
                  {"depth", cfg.network.depth},
                  {"latent_channels", cfg.network.latent_channels},
                  {"attention_embed_channels", cfg.network.attention_embed_channels},
                  {"discriminator_channels", cfg.network.discriminator_channels}}}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig cfg) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    try {
        for (const auto& [key, value] : j.items()) {
            if (key == "variant") cfg.variant = variant_from_string(value.get<std::string>());
            else if (key == "steps") cfg.steps = value.get<long long>();
            else if (key == "batch_size") cfg.batch_size = value.get<int>();
            else if (key == "lr_generator") cfg.lr_generator = value.get<double>();
            else if (key == "lr_discriminator") cfg.lr_discriminator = value.get<double>();
            else if (key == "beta1") cfg.beta1 = value.get<double>();
            else if (key == "beta2") cfg.beta2 = value.get<double>();
            else if (key == "seed") cfg.seed = value.get<std::uint64_t>();
            else if (key == "checkpoint_every") cfg.checkpoint_every = value.get<long long>();
            else if (key == "lambda") cfg.lambda = value.get<double>();
            else if (key == "cycle_weight") cfg.cycle_weight = value.get<double>();
            else if (key == "network") {
                if (!value.is_object()) throw ConfigError("'network' must be an object");
                for (const auto& [nk, nv] : value.items()) {
                    if (nk == "base_channels") cfg.network.base_channels = nv.get<int>();
                    else if (nk == "depth") cfg.network.depth = nv.get<int>();
                    else if (nk == "latent_channels") cfg.network.latent_channels = nv.get<int>();
                    else if (nk == "attention_embed_channels") cfg.network.attention_embed_channels = nv.get<int>();
                    else if (nk == "discriminator_channels") cfg.network.discriminator_channels = nv.get<int>();
                    else throw ConfigError("unknown network config key '" + nk + "'");
                }
            } else {
                throw ConfigError("unknown training config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad training config value: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

TrainingDiverged::TrainingDiverged(const std::string& term, long long step)
    : std::runtime_error("non-finite loss term '" + term + "' at step " + std::to_string(step)),
      term_(term) {}

bool configure_determinism() {
    const char* env = std::getenv("XMSYNTH_DETERMINISTIC");
    const bool on = env && std::string_view(env) == "1";
    if (on) {
        torch::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
    return on;
}

// ---------------------------------------------------------------------------

DataPool::DataPool(torch::Tensor us, torch::Tensor mr) : us_(std::move(us)), mr_(std::move(mr)) {
    if (us_.dim() != 4 || mr_.dim() != 4 || us_.sizes().slice(1) != mr_.sizes().slice(1))
        throw InternalError("DataPool: US and MR tensors must share [C, H, W]");
    if (us_.size(0) == 0 || mr_.size(0) == 0) throw ConfigError("training split has no US or no MR images");
}

DataPool DataPool::load(const std::filesystem::path& root, phantom::Split split) {
    const auto manifest = phantom::load_manifest(root);
    const auto read = [&](Modality m) {
        std::vector<Image> images;
        for (const auto* item : manifest.select(m, split))
            images.push_back(io::read_f32(root / item->sidecar, m));
        if (images.empty())
            throw ConfigError("dataset has no " + std::string(to_string(m)) + " images in the " +
                              std::string(phantom::to_string(split)) + " split");
        return nets::to_tensor(images);
    };
    return DataPool(read(Modality::US), read(Modality::MR));
}

DataPool::Batch DataPool::sample(std::mt19937_64& rng, int batch_size) const {
    const auto draw = [&](const torch::Tensor& pool) {
        std::uniform_int_distribution<std::int64_t> pick(0, pool.size(0) - 1);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(batch_size));
        for (auto& i : idx) i = pick(rng);
        return pool.index_select(0, torch::tensor(idx, torch::kInt64));
    };
    Batch b;
    b.us = draw(us_);
    b.mr = draw(mr_);
    return b;
}

Size2 DataPool::image_size() const {
    return {static_cast<int>(us_.size(2)), static_cast<int>(us_.size(3))};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg) : cfg_(std::move(cfg)), rng_(cfg_.seed ^ 0x7472616e73ULL) {
    cfg_.validate();
    configure_determinism();
    torch::manual_seed(cfg_.seed);
}

checkpoint::Archive Trainer::base_archive(const char* kind, bool final) const {
    checkpoint::Archive a;
    a.meta["kind"] = kind;
    a.meta["variant"] = to_string(cfg_.variant);
    a.meta["step"] = step_;
    a.meta["final"] = final;
    a.meta["config"] = to_json(cfg_);
    std::ostringstream rng;
    rng << rng_;
    a.meta["rng_state"] = rng.str();
    a.tensors["rng.torch"] = at::detail::getDefaultCPUGenerator().get_state();
    return a;
}

void Trainer::restore_base(const checkpoint::Archive& a) {
    step_ = a.meta.at("step").get<long long>();
    std::istringstream rng(a.meta.at("rng_state").get<std::string>());
    rng >> rng_;
    if (!rng) throw checkpoint::CheckpointError("corrupt RNG state in checkpoint");
    const auto it = a.tensors.find("rng.torch");
    if (it != a.tensors.end()) {
        auto gen = at::detail::getDefaultCPUGenerator();
        gen.set_state(it->second);
    }
}

// ---------------------------------------------------------------------------

SynthesisTrainer::SynthesisTrainer(TrainConfig cfg) : Trainer(std::move(cfg)) {
    spec_ = variant_spec(cfg_.variant);
    model_ = nets::SynthesisModel(cfg_.network);
    model_->set_attention_enabled(spec_.attention);
    opt_g_ = make_adam(gather(model_, spec_.generators), cfg_.lr_generator, cfg_);
    opt_d_ = make_adam(gather(model_, spec_.discriminators), cfg_.lr_discriminator, cfg_);
}

std::string SynthesisTrainer::step(const DataPool& pool) {
    const auto batch = pool.sample(rng_, cfg_.batch_size);
    return step(batch.us, batch.mr).to_log_line(step_);
}

objectives::LossBreakdown SynthesisTrainer::step(const torch::Tensor& x_us, const torch::Tensor& x_mr) {
    using namespace objectives;
    model_->train();
    const long long n = step_ + 1;
    nets::ForwardResult fwd;
    if (spec_.app || spec_.stru || spec_.reverse_path) {
        fwd = model_->forward(x_us, spec_.reverse_path);
    } else {
        auto enc = model_->extract_features(x_us);
        fwd.x_hat_us = model_->decode_us(enc.latent, enc.skips).image;
    }
    torch::Tensor edge_fake, edge_real;
    if (spec_.stru) {
        edge_fake = model_->edge_map(fwd.x_hat_mr);
        edge_real = model_->edge_map(x_mr);
    }

    LossTerms t;
    if (opt_d_) {
        opt_d_->zero_grad();
        auto d_total = torch::zeros({}, x_us.options());
        const auto add_d = [&](bool on, nets::Discriminator& head, const torch::Tensor& real,
                               const torch::Tensor& fake, double& slot, const char* name) {
            if (!on) return;
            const auto d = discriminator_loss(head, real, fake);
            slot = scalar(d);
            require_finite(slot, name, n);
            d_total = d_total + d;
        };
        add_d(spec_.app, model_->d_app, x_mr, fwd.x_hat_mr, t.app_d, "app_d");
        add_d(spec_.stru, model_->d_stru, edge_real, edge_fake, t.stru_d, "stru_d");
        add_d(spec_.bi, model_->d_bi, fwd.y, fwd.y_back, t.bi_d, "bi_d");
        add_d(spec_.app_back, model_->d_app_back, x_us, fwd.x_tilde_us, t.app_back_d, "app_back_d");
        d_total.backward();
        opt_d_->step();
    }

    opt_g_->zero_grad();
    auto g_total = torch::zeros({}, x_us.options());
    const auto add_g = [&](bool on, const torch::Tensor& loss, double weight, double& slot, const char* name) {
        if (!on) return;
        slot = scalar(loss);
        require_finite(slot, name, n);
        g_total = g_total + weight * loss;
    };
    add_g(spec_.lat, loss_lat(fwd.x_hat_us, x_us), cfg_.lambda, t.lat, "lat");
    if (spec_.app) add_g(true, generator_loss(model_->d_app, fwd.x_hat_mr), 1.0, t.app_g, "app_g");
    if (spec_.stru) add_g(true, generator_loss(model_->d_stru, edge_fake), 1.0, t.stru_g, "stru_g");
    if (spec_.proj) add_g(true, loss_proj(fwd.x_tilde_us, x_us), cfg_.lambda, t.proj, "proj");
    if (spec_.app_back)
        add_g(true, generator_loss(model_->d_app_back, fwd.x_tilde_us), 1.0, t.app_back_g, "app_back_g");
    if (spec_.bi) add_g(true, generator_loss(model_->d_bi, fwd.y_back), 1.0, t.bi_g, "bi_g");
    g_total.backward();
    opt_g_->step();

    step_ = n;
    return compose(t, LossWeights{cfg_.lambda});
}

void SynthesisTrainer::save(const std::filesystem::path& path, bool final) const {
    auto a = base_archive("synthesis", final);
    a.meta["edge_checksum"] = hex64(model_->edge_net->checksum());
    checkpoint::add_module(a, *model_, "model.");
    add_optimizer(a, "optim.generator", opt_g_.get());
    add_optimizer(a, "optim.discriminator", opt_d_.get());
    checkpoint::write(path, a);
}

std::unique_ptr<SynthesisTrainer> SynthesisTrainer::load(const std::filesystem::path& path) {
    const auto a = checkpoint::read(path);
    if (a.meta.value("kind", "") != "synthesis")
        throw checkpoint::CheckpointError(path.string() + " is not a synthesis-model checkpoint");
    auto t = std::make_unique<SynthesisTrainer>(train_config_from_json(a.meta.at("config")));
    checkpoint::load_module(a, *t->model_, "model.");
    const auto fixed = hex64(nets::EdgeNet()->checksum());
    if (hex64(t->model_->edge_net->checksum()) != fixed || a.meta.value("edge_checksum", "") != fixed)
        throw checkpoint::CheckpointError("EdgeNet kernels in " + path.string() + " differ from the fixed ones");
    load_optimizer(a, "optim.generator", t->opt_g_.get());
    load_optimizer(a, "optim.discriminator", t->opt_d_.get());
    t->restore_base(a);
    return t;
}

// ---------------------------------------------------------------------------

std::string CycleLosses::to_log_line(long long step) const {
    std::string s = "{\"step\":" + std::to_string(step);
    const std::pair<const char*, double> fields[] = {{"cycle", cycle}, {"mr_g", mr_g}, {"mr_d", mr_d},
                                                     {"us_g", us_g},   {"us_d", us_d}, {"total", total}};
    for (const auto& [k, v] : fields) s += std::string(",\"") + k + "\":" + format_double(v);
    return s + "}";
}

CycleGanTrainer::CycleGanTrainer(TrainConfig cfg) : Trainer(std::move(cfg)) {
    model_ = nets::CycleGanModel(cfg_.network, true);
    opt_g_ = make_adam(model_->generator_parameters(), cfg_.lr_generator, cfg_);
    opt_d_ = make_adam(model_->discriminator_parameters(), cfg_.lr_discriminator, cfg_);
}

std::string CycleGanTrainer::step(const DataPool& pool) {
    const auto batch = pool.sample(rng_, cfg_.batch_size);
    return step(batch.us, batch.mr).to_log_line(step_);
}

CycleLosses CycleGanTrainer::step(const torch::Tensor& x_us, const torch::Tensor& x_mr) {
    using namespace objectives;
    model_->train();
    const long long n = step_ + 1;
    const auto fake_mr = model_->us_to_mr->forward(x_us);
    const auto fake_us = model_->mr_to_us->forward(x_mr);

    CycleLosses l;
    opt_d_->zero_grad();
    const auto d_mr = discriminator_loss(model_->d_mr, x_mr, fake_mr);
    const auto d_us = discriminator_loss(model_->d_us, x_us, fake_us);
    l.mr_d = scalar(d_mr);
    l.us_d = scalar(d_us);
    require_finite(l.mr_d, "mr_d", n);
    require_finite(l.us_d, "us_d", n);
    (d_mr + d_us).backward();
    opt_d_->step();

    opt_g_->zero_grad();
    const auto rec_us = model_->mr_to_us->forward(fake_mr);
    const auto rec_mr = model_->us_to_mr->forward(fake_us);
    const auto cycle = cfg_.cycle_weight * ((rec_us - x_us).abs().mean() + (rec_mr - x_mr).abs().mean());
    const auto g_mr = generator_loss(model_->d_mr, fake_mr);
    const auto g_us = generator_loss(model_->d_us, fake_us);
    const auto total = cycle + g_mr + g_us;
    l.cycle = scalar(cycle);
    l.mr_g = scalar(g_mr);
    l.us_g = scalar(g_us);
    l.total = scalar(total);
    require_finite(l.cycle, "cycle", n);
    require_finite(l.mr_g, "mr_g", n);
    require_finite(l.us_g, "us_g", n);
    total.backward();
    opt_g_->step();

    step_ = n;
    return l;
}

void CycleGanTrainer::save(const std::filesystem::path& path, bool final) const {
    auto a = base_archive("cyclegan", final);
    checkpoint::add_module(a, *model_, "model.");
    add_optimizer(a, "optim.generator", opt_g_.get());
    add_optimizer(a, "optim.discriminator", opt_d_.get());
    checkpoint::write(path, a);
}

std::unique_ptr<CycleGanTrainer> CycleGanTrainer::load(const std::filesystem::path& path) {
    const auto a = checkpoint::read(path);
    if (a.meta.value("kind", "") != "cyclegan")
        throw checkpoint::CheckpointError(path.string() + " is not a CycleGAN checkpoint");
    auto t = std::make_unique<CycleGanTrainer>(train_config_from_json(a.meta.at("config")));
    checkpoint::load_module(a, *t->model_, "model.");
    load_optimizer(a, "optim.generator", t->opt_g_.get());
    load_optimizer(a, "optim.discriminator", t->opt_d_.get());
    t->restore_base(a);
    return t;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Trainer> make_trainer(const TrainConfig& cfg) {
    if (cfg.variant == Variant::CycleGAN) return std::make_unique<CycleGanTrainer>(cfg);
    return std::make_unique<SynthesisTrainer>(cfg);
}

std::unique_ptr<Trainer> load_trainer(const std::filesystem::path& path) {
    const auto kind = checkpoint::read_meta(path).value("kind", "");
    if (kind == "cyclegan") return CycleGanTrainer::load(path);
    return SynthesisTrainer::load(path);
}

std::filesystem::path train(const TrainConfig& cfg, const std::filesystem::path& dataset_root,
                            const std::filesystem::path& run_dir, std::ostream* progress,
                            long long report_every) {
    cfg.validate();
    const auto pool = DataPool::load(dataset_root);
    cfg.network.validate_size(pool.image_size());

    std::filesystem::create_directories(run_dir);
    json echo = to_json(cfg);
    echo["dataset"] = std::filesystem::absolute(dataset_root).string();
    echo["deterministic"] = configure_determinism();
    io::write_text(run_dir / "config.json", echo.dump(2) + "\n");

    auto trainer = make_trainer(cfg);
    std::ofstream log(run_dir / "losses.log", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (run_dir / "losses.log").string());

    std::filesystem::path last;
    const auto checkpoint_at = [&](bool final) {
        last = run_dir / ("ckpt_" + std::to_string(trainer->step_count()));
        trainer->save(last, final);
    };
    while (trainer->step_count() < cfg.steps) {
        const auto line = trainer->step(pool);
        log << line << '\n';
        log.flush();
        const auto s = trainer->step_count();
        if (progress && report_every > 0 && (s % report_every == 0 || s == cfg.steps))
            *progress << "[" << to_string(cfg.variant) << "] " << line << '\n';
        if (s % cfg.checkpoint_every == 0 || s == cfg.steps) checkpoint_at(s == cfg.steps);
    }
    if (last.empty()) checkpoint_at(true);
    io::write_text(run_dir / kFinalTag, last.filename().string() + "\n");
    return last;
}

std::filesystem::path resolve_checkpoint(const std::filesystem::path& path) {
    if (std::filesystem::is_directory(path)) {
        const auto tag = path / kFinalTag;
        if (!std::filesystem::exists(tag))
            throw ConfigError("run directory " + path.string() + " has no final checkpoint");
        auto name = io::read_text(tag);
        while (!name.empty() && (name.back() == '\n' || name.back() == '\r')) name.pop_back();
        return path / name;
    }
    if (!std::filesystem::exists(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
    return path;
}

std::vector<Image> synthesize(const std::filesystem::path& checkpoint_path, std::span<const Image> us_images) {
    const auto path = resolve_checkpoint(checkpoint_path);
    const auto a = checkpoint::read(path);
    const auto kind = a.meta.value("kind", "");
    const auto cfg = train_config_from_json(a.meta.at("config"));
    for (const auto& img : us_images) cfg.network.validate_size(img.size());

    torch::NoGradGuard no_grad;
    std::function<torch::Tensor(const torch::Tensor&)> run;
    nets::SynthesisModel synth{nullptr};
    nets::CycleGanModel cycle{nullptr};
    if (kind == "synthesis") {
        synth = nets::SynthesisModel(cfg.network);
        checkpoint::load_module(a, *synth, "model.");
        const auto spec = variant_spec(cfg.variant);
        synth->set_attention_enabled(spec.attention);
        synth->eval();
        if (cfg.variant == Variant::AE)
            run = [&](const torch::Tensor& x) { return synth->forward(x, false).x_hat_us; };
        else
            run = [&](const torch::Tensor& x) { return synth->synthesize(x); };
    } else if (kind == "cyclegan") {
        cycle = nets::CycleGanModel(cfg.network, true);
        checkpoint::load_module(a, *cycle, "model.");
        cycle->eval();
        run = [&](const torch::Tensor& x) { return cycle->us_to_mr->forward(x); };
    } else {
        throw checkpoint::CheckpointError("unknown checkpoint kind '" + kind + "'");
    }

    std::vector<Image> out;
    constexpr std::size_t kChunk = 32;
    for (std::size_t i = 0; i < us_images.size(); i += kChunk) {
        const auto chunk = us_images.subspan(i, std::min(kChunk, us_images.size() - i));
        for (auto& img : nets::to_images(run(nets::to_tensor(chunk)), Modality::MR)) out.push_back(std::move(img));
    }
    return out;
}

}  // namespace xmsynth::training
