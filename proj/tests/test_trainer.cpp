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

#include <gtest/gtest.h>

#include <fstream>
#include <limits>
#include <sstream>

#include "support/fixtures.hpp"
#include "xmsynth/io.hpp"
#include "xmsynth/trainer.hpp"

using namespace xmsynth;
using namespace xmsynth::training;
using nets::Component;

namespace {

std::vector<torch::Tensor> snapshot(const std::vector<torch::Tensor>& params) {
    std::vector<torch::Tensor> out;
    for (const auto& p : params) out.push_back(p.detach().clone());
    return out;
}

bool unchanged(const std::vector<torch::Tensor>& before, const std::vector<torch::Tensor>& now) {
    if (before.size() != now.size()) return false;
    for (std::size_t i = 0; i < before.size(); ++i)
        if (!torch::equal(before[i], now[i])) return false;
    return true;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);)
        if (!l.empty()) out.push_back(l);
    return out;
}

DataPool random_pool(std::uint64_t seed = 0) {
    torch::manual_seed(seed);
    return DataPool(torch::rand({12, 1, 32, 32}), torch::rand({4, 1, 32, 32}));
}

class TrainerOnDataset : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir_ = new fixtures::TempDir("trainer_ds");
        phantom::build_dataset(fixtures::small_dataset_config(), dir_->path());
    }
    static void TearDownTestSuite() {
        delete dir_;
        dir_ = nullptr;
    }
    static const std::filesystem::path& dataset() { return dir_->path(); }

    static fixtures::TempDir* dir_;
};
fixtures::TempDir* TrainerOnDataset::dir_ = nullptr;

}  // namespace

TEST(Variants, NamesRoundTripAndUnknownIsAConfigError) {
    for (auto v : kAllVariants) EXPECT_EQ(variant_from_string(to_string(v)), v);
    EXPECT_THROW(variant_from_string("ours"), ConfigError);
}

TEST(Variants, SpecsMatchTheAblations) {
    const auto full = variant_spec(Variant::Full);
    EXPECT_EQ(full.generators.size(), 6u);
    EXPECT_EQ(full.discriminators.size(), 4u);
    EXPECT_FALSE(variant_spec(Variant::NoBilat).bi);
    EXPECT_FALSE(variant_spec(Variant::NoStruct).stru);
    EXPECT_FALSE(variant_spec(Variant::NoAttn).attention);
    const auto ae = variant_spec(Variant::AE);
    EXPECT_TRUE(ae.lat);
    EXPECT_FALSE(ae.app || ae.stru || ae.proj || ae.app_back || ae.bi || ae.reverse_path);
    EXPECT_TRUE(ae.discriminators.empty());
    const auto gan = variant_spec(Variant::GAN);
    EXPECT_TRUE(gan.app && gan.app_back);
    EXPECT_FALSE(gan.stru || gan.bi || gan.lat || gan.proj);
}

TEST(TrainConfigJson, RoundTripAndRejection) {
    auto cfg = fixtures::tiny_train_config(Variant::NoStruct, 9);
    cfg.lambda = 3.5;
    const auto back = train_config_from_json(to_json(cfg));
    EXPECT_EQ(back.variant, Variant::NoStruct);
    EXPECT_EQ(back.seed, 9u);
    EXPECT_EQ(back.lambda, 3.5);
    EXPECT_EQ(back.network, cfg.network);
    EXPECT_THROW(train_config_from_json(nlohmann::ordered_json::parse(R"({"stepz": 3})")), ConfigError);
    EXPECT_THROW(train_config_from_json(nlohmann::ordered_json::parse(R"({"network": {"wide": 1}})")),
                 ConfigError);
    EXPECT_THROW(train_config_from_json(nlohmann::ordered_json::parse(R"({"variant": "best"})")), ConfigError);
    TrainConfig zero;
    zero.steps = 0;
    EXPECT_THROW(zero.validate(), ConfigError);
}

TEST(Trainer, SameSeedGivesIdenticalFirstStep) {
    const auto pool = random_pool();
    auto a = make_trainer(fixtures::tiny_train_config());
    auto b = make_trainer(fixtures::tiny_train_config());
    EXPECT_EQ(a->step(pool), b->step(pool));
    auto c = make_trainer(fixtures::tiny_train_config(Variant::Full, 6));
    EXPECT_NE(a->step(pool), c->step(pool));
}

TEST(Trainer, EdgeNetNeverChanges) {
    SynthesisTrainer t(fixtures::tiny_train_config());
    const auto sum = t.model()->edge_net->checksum();
    const auto pool = random_pool();
    for (int i = 0; i < 5; ++i) t.step(pool);
    EXPECT_EQ(t.model()->edge_net->checksum(), sum);
}

TEST(Trainer, AblationsLeaveUnusedComponentsUntouched) {
    const auto pool = random_pool();
    struct Case {
        Variant v;
        std::vector<Component> frozen;
    };
    const std::vector<Case> cases{
        {Variant::NoAttn, {Component::Attention}},
        {Variant::NoStruct, {Component::DStru}},
        {Variant::NoBilat, {Component::DBi}},
        {Variant::GAN, {Component::DStru, Component::DBi}},
        {Variant::AE,
         {Component::DecoderMr, Component::Attention, Component::EncoderBack, Component::DecoderBack,
          Component::DApp, Component::DStru, Component::DBi, Component::DAppBack}},
    };
    for (const auto& c : cases) {
        SynthesisTrainer t(fixtures::tiny_train_config(c.v));
        std::vector<std::vector<torch::Tensor>> before;
        for (auto comp : c.frozen) before.push_back(snapshot(t.model()->parameters_of(comp)));
        const auto extractor = snapshot(t.model()->parameters_of(Component::Extractor));
        for (int i = 0; i < 3; ++i) t.step(pool);
        for (std::size_t k = 0; k < c.frozen.size(); ++k)
            EXPECT_TRUE(unchanged(before[k], t.model()->parameters_of(c.frozen[k])))
                << to_string(c.v) << " " << nets::to_string(c.frozen[k]);
        EXPECT_FALSE(unchanged(extractor, t.model()->parameters_of(Component::Extractor))) << to_string(c.v);
    }
}

TEST(Trainer, AeVariantReportsOnlyTheReconstructionTerm) {
    SynthesisTrainer t(fixtures::tiny_train_config(Variant::AE));
    torch::manual_seed(1);
    const auto b = t.step(torch::rand({4, 1, 32, 32}), torch::rand({4, 1, 32, 32}));
    EXPECT_GT(b.lat, 0.0);
    EXPECT_EQ(b.app_g, 0.0);
    EXPECT_EQ(b.proj, 0.0);
    EXPECT_NEAR(b.total, 10.0 * b.lat, 1e-12);
}

TEST(Trainer, NonFiniteLossRaisesTrainingDiverged) {
    SynthesisTrainer t(fixtures::tiny_train_config());
    auto x = torch::rand({4, 1, 32, 32});
    x[0][0][3][3] = std::numeric_limits<float>::quiet_NaN();
    try {
        t.step(x, torch::rand({4, 1, 32, 32}));
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        EXPECT_FALSE(e.term().empty());
    }
}

TEST(Trainer, CheckpointResumeMatchesUninterruptedRun) {
    fixtures::TempDir dir("resume");
    const auto pool = random_pool(3);
    for (auto v : {Variant::Full, Variant::CycleGAN}) {
        auto straight = make_trainer(fixtures::tiny_train_config(v));
        std::vector<std::string> expected;
        for (int i = 0; i < 4; ++i) expected.push_back(straight->step(pool));

        auto first = make_trainer(fixtures::tiny_train_config(v));
        first->step(pool);
        first->step(pool);
        first->save(dir / "mid", false);
        first.reset();
        torch::manual_seed(12345);  // the checkpoint carries its own RNG state
        auto resumed = load_trainer(dir / "mid");
        EXPECT_EQ(resumed->step_count(), 2);
        EXPECT_EQ(resumed->step(pool), expected[2]) << to_string(v);
        EXPECT_EQ(resumed->step(pool), expected[3]) << to_string(v);
    }
}

TEST(Trainer, LoadRejectsCorruptedEdgeNet) {
    fixtures::TempDir dir("edge");
    SynthesisTrainer t(fixtures::tiny_train_config());
    {
        torch::NoGradGuard ng;
        t.model()->edge_net->diff_x.mul_(2.0);
    }
    t.save(dir / "ckpt", false);
    EXPECT_ANY_THROW(SynthesisTrainer::load(dir / "ckpt"));
}

TEST(CycleGan, NearIdentityGeneratorsStartWithASmallCycleError) {
    torch::manual_seed(4);
    nets::CycleGanModel near(fixtures::tiny_network(), true), rnd(fixtures::tiny_network(), false);
    const auto x = torch::rand({4, 1, 32, 32}) * 0.8 + 0.1;
    const auto cycle = [&](nets::CycleGanModel& m) {
        torch::NoGradGuard ng;
        return (m->mr_to_us->forward(m->us_to_mr->forward(x)) - x).abs().mean().item<double>();
    };
    EXPECT_LT(cycle(near), 1e-3);
    EXPECT_LT(cycle(near), cycle(rnd));
}

TEST_F(TrainerOnDataset, SmokeRunWritesLogCheckpointAndConfig) {
    fixtures::TempDir run("run");
    auto cfg = fixtures::tiny_train_config();
    std::ostringstream progress;
    const auto final = train(cfg, dataset(), run.path(), &progress, 5);
    EXPECT_EQ(final.filename(), "ckpt_10");
    EXPECT_EQ(lines_of(run / "losses.log").size(), 10u);
    int ckpts = 0;
    for (const auto& e : std::filesystem::directory_iterator(run.path()))
        ckpts += e.path().filename().string().rfind("ckpt_", 0) == 0;
    EXPECT_EQ(ckpts, 1);
    EXPECT_EQ(resolve_checkpoint(run.path()), final);
    const auto j = nlohmann::json::parse(io::read_text(run / "config.json"));
    EXPECT_EQ(j["variant"], "full");
    EXPECT_FALSE(progress.str().empty());
    for (const auto& l : lines_of(run / "losses.log")) EXPECT_EQ(l.find("null"), std::string::npos);
}

TEST_F(TrainerOnDataset, EveryVariantLaunches) {
    for (auto v : kAllVariants) {
        fixtures::TempDir run("variant");
        auto cfg = fixtures::tiny_train_config(v);
        cfg.steps = 2;
        const auto ckpt = train(cfg, dataset(), run.path());
        EXPECT_TRUE(std::filesystem::exists(ckpt)) << to_string(v);
        EXPECT_EQ(lines_of(run / "losses.log").size(), 2u) << to_string(v);
        std::mt19937_64 rng(1);
        const auto pool = DataPool::load(dataset(), phantom::Split::Test);
        const auto imgs = nets::to_images(pool.sample(rng, 2).us, Modality::US);
        const auto out = synthesize(ckpt, imgs);
        ASSERT_EQ(out.size(), 2u);
        EXPECT_EQ(out[0].size(), imgs[0].size());
        EXPECT_TRUE(out[0].valid());
    }
}

TEST_F(TrainerOnDataset, SynthesizeIsDeterministicAndAeReturnsTheReconstruction) {
    fixtures::TempDir run("ae");
    auto cfg = fixtures::tiny_train_config(Variant::AE);
    cfg.steps = 3;
    const auto ckpt = train(cfg, dataset(), run.path());
    std::mt19937_64 rng(2);
    const auto batch = DataPool::load(dataset(), phantom::Split::Test).sample(rng, 3).us;
    const auto imgs = nets::to_images(batch, Modality::US);
    const auto a = synthesize(ckpt, imgs), b = synthesize(ckpt, imgs);
    EXPECT_EQ(a, b);

    auto t = SynthesisTrainer::load(ckpt);
    torch::NoGradGuard ng;
    const auto enc = t->model()->extract_features(nets::to_tensor(imgs));
    const auto rec = nets::to_images(t->model()->decode_us(enc.latent, enc.skips).image, Modality::MR);
    ASSERT_EQ(rec.size(), a.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], rec[i]);

    const std::vector<Image> odd{Image({30, 32}, Modality::US)};
    EXPECT_THROW(synthesize(ckpt, odd), ConfigError);
}

TEST_F(TrainerOnDataset, MissingInputsAreConfigErrors) {
    fixtures::TempDir run("missing");
    EXPECT_THROW(train(fixtures::tiny_train_config(), run / "no_such_dataset", run / "out"), ConfigError);
    EXPECT_THROW(resolve_checkpoint(run / "nothing"), ConfigError);
}

TEST_F(TrainerOnDataset, DataPoolLoadsTheTrainSplit) {
    const auto pool = DataPool::load(dataset());
    EXPECT_EQ(pool.us_count(), 240);
    EXPECT_EQ(pool.mr_count(), 4);
    EXPECT_EQ(pool.image_size(), (Size2{32, 32}));
    std::mt19937_64 a(1), b(1);
    EXPECT_TRUE(torch::equal(pool.sample(a, 5).us, pool.sample(b, 5).us));
}
