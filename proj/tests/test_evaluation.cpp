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

#include <json.hpp>

#include "support/fixtures.hpp"
#include "xmsynth/evaluation.hpp"
#include "xmsynth/phantom.hpp"
#include "xmsynth/registration.hpp"

using namespace xmsynth;
using namespace xmsynth::evaluation;

namespace {

constexpr Size2 k64{64, 64};

Image rotate90(const Image& img) {
    Image out({img.width(), img.height()}, img.modality());
    for (int r = 0; r < img.height(); ++r)
        for (int c = 0; c < img.width(); ++c) out.at(c, img.height() - 1 - r) = img.at(r, c);
    return out;
}

AnatomyMap rotate90(const AnatomyMap& m) {
    AnatomyMap out({m.width(), m.height()});
    for (int r = 0; r < m.height(); ++r)
        for (int c = 0; c < m.width(); ++c) out.at(c, m.height() - 1 - r) = m.at(r, c);
    return out;
}

MethodResult fake_method(const std::string& name, double def, double ana) {
    MethodResult m;
    m.method = name;
    m.pairs.push_back({"us_0", "mr_0", 0, 0, 0.1, 0.05, def, ana});
    m.deformation = def;
    m.anatomy = ana;
    return m;
}

}  // namespace

TEST(AnatomyPreservation, CleanMrScoresHigh) {
    double total = 0;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto map = phantom::rasterize_anatomy(phantom::sample_anatomy(s), k64);
        total += anatomy_preservation_score(phantom::render_mr(map, s), map);
    }
    EXPECT_GT(total / 8, 0.8);
}

TEST(AnatomyPreservation, ConstantImageScoresZero) {
    const auto map = phantom::rasterize_anatomy(phantom::sample_anatomy(1), k64);
    EXPECT_EQ(anatomy_preservation_score(Image(k64, Modality::MR, 0.4f), map), 0.0);
    EXPECT_THROW(anatomy_preservation_score(Image({32, 32}, Modality::MR), map), InternalError);
}

TEST(AnatomyPreservation, InvariantUnderQuarterTurns) {
    const auto map = phantom::rasterize_anatomy(phantom::sample_anatomy(2), k64);
    const auto img = phantom::render_mr(map, 3);
    EXPECT_NEAR(anatomy_preservation_score(rotate90(img), rotate90(map)), anatomy_preservation_score(img, map),
                1e-12);
}

TEST(AnatomyPreservation, UnrelatedAnatomyScoresLower) {
    const auto a = phantom::rasterize_anatomy(phantom::sample_anatomy(4), k64);
    const auto b = phantom::rasterize_anatomy(phantom::sample_anatomy(5), k64);
    const auto img = phantom::render_mr(a, 1);
    EXPECT_GT(anatomy_preservation_score(img, a), anatomy_preservation_score(img, b));
}

TEST(NearestReference, PicksTheShiftedCopy) {
    std::vector<Reference> pool;
    for (std::uint64_t s = 0; s < 4; ++s)
        pool.push_back({"mr_" + std::to_string(s),
                        phantom::render_mr(phantom::rasterize_anatomy(phantom::sample_anatomy(s), k64), s)});
    const auto query = registration::shift_image(pool[2].image, 2, -3);
    EXPECT_EQ(nearest_reference(query, pool), 2u);
    EXPECT_THROW(nearest_reference(query, {}), ConfigError);
}

TEST(ScoreReal, SelfRegistrationIsTheIdentityAnchor) {
    std::vector<Reference> pool;
    std::vector<AnatomyMap> truth;
    for (std::uint64_t s = 0; s < 2; ++s) {
        truth.push_back(phantom::rasterize_anatomy(phantom::sample_anatomy(s), k64));
        pool.push_back({"mr_" + std::to_string(s), phantom::render_mr(truth.back(), s)});
    }
    const auto m = score_real(pool, truth, {});
    EXPECT_EQ(m.method, "real");
    EXPECT_LT(m.deformation, 0.02);
    EXPECT_GT(m.anatomy, 0.8);
}

TEST(Report, TableHasCanonicalColumnsAndRows) {
    EvalReport r;
    for (const auto* v : {"full", "real", "ae", "no_attn", "gan", "no_struct", "cyclegan", "no_bilat"})
        r.methods.push_back(fake_method(v, 0.1, 0.5));
    mos::MosTable t;
    t.rows = {{"full", mos::Group::Expert, 4.1, 3}, {"full", mos::Group::Beginner, 3.9, 3},
              {"ae", mos::Group::Expert, 1.5, 2}};
    r.mos = t;
    const auto table = r.render_table();
    const auto header = table.substr(0, table.find('\n'));
    std::size_t last = 0;
    for (const auto* label : {"AE", "GAN", "CycleGAN", "Ours (w/o bi-lat)", "Ours (w/o struct.)", "Ours (w/o att.)",
                              "Ours ", "Real"}) {
        const auto pos = header.find(label, last);
        ASSERT_NE(pos, std::string::npos) << label;
        last = pos;
    }
    for (const auto* row : {"Deformation score", "Anatomy preservation", "MOS Expert", "MOS Beginner"})
        EXPECT_NE(table.find(row), std::string::npos) << row;
    EXPECT_NE(table.find("4.10"), std::string::npos);
    EXPECT_NE(table.find("1.50"), std::string::npos);
    EXPECT_EQ(column_rank("ae"), 0);
    EXPECT_EQ(column_rank("real"), 7);
    EXPECT_EQ(column_label("no_struct"), "Ours (w/o struct.)");
}

TEST(Report, EvalOnADatasetIsReproducible) {
    fixtures::TempDir ds("eval_ds"), run("eval_run");
    phantom::build_dataset(fixtures::small_dataset_config(), ds.path());
    auto cfg = fixtures::tiny_train_config(training::Variant::Full);
    cfg.steps = 2;
    training::train(cfg, ds.path(), run.path());

    EvalConfig ec;
    ec.max_items = 3;
    ec.registration.steps = 30;
    const std::vector<std::filesystem::path> runs{run.path()};
    const auto a = eval_report(runs, ds.path(), ec);
    const auto b = eval_report(runs, ds.path(), ec);
    EXPECT_EQ(a.to_json(), b.to_json());
    ASSERT_EQ(a.methods.size(), 2u);
    EXPECT_EQ(a.methods[0].method, "full");
    EXPECT_EQ(a.methods[0].pairs.size(), 3u);
    EXPECT_EQ(a.methods[1].method, "real");
    EXPECT_FALSE(a.warnings.empty());  // fewer than 20 pairs

    const std::vector<mos::MosRecord> none;
    const auto c = eval_report(runs, ds.path(), ec, std::span<const mos::MosRecord>(none));
    EXPECT_FALSE(c.mos.has_value());
    const auto j = nlohmann::json::parse(c.to_json());
    EXPECT_EQ(j["format"], "xmsynth-eval/1");
    bool mos_warning = false;
    for (const auto& w : j["warnings"]) mos_warning |= w.get<std::string>().find("MOS") != std::string::npos;
    EXPECT_TRUE(mos_warning);
}
