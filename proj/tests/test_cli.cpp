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

#include <sstream>

#include "support/fixtures.hpp"
#include "xmsynth/cli.hpp"
#include "xmsynth/io.hpp"
#include "xmsynth/mos.hpp"

using namespace xmsynth;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

// Small end-to-end configuration: 32x32 phantoms, tiny networks, cheap registration.
const char* kConfig = R"({
  "seed": 3,
  "dataset": {"n_us": 300, "n_mr": 5, "imbalance_ratio": 60, "size": [32, 32],
              "ranges": {"skull_cx": [15, 17], "skull_cy": [15, 17], "skull_semi_a": [11, 13.5],
                         "skull_semi_b": [9, 11], "skull_thickness": [2, 2.5]}},
  "train": {"steps": 2, "batch_size": 4,
            "network": {"base_channels": 4, "depth": 3, "latent_channels": 8, "discriminator_channels": 4}},
  "eval": {"max_items": 2, "registration": {"steps": 20}},
  "session": {"count": 6}
})";

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        io::write_text(dir_ / "cfg.json", kConfig);
        cfg_ = (dir_ / "cfg.json").string();
    }
    fixtures::TempDir dir_{"cli"};
    std::string cfg_;
};

}  // namespace

TEST(CliUsage, HelpAndBadArguments) {
    EXPECT_EQ(run({"--help"}).code, cli::kExitOk);
    EXPECT_EQ(run({}).code, cli::kExitUsage);
    EXPECT_EQ(run({"frobnicate"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"phantom-gen"}).code, cli::kExitUsage);  // --out is required
    EXPECT_EQ(run({"train", "/nonexistent", "--out", "/tmp/x", "--variant", "best"}).code, cli::kExitUsage);
    EXPECT_EQ(run({"phantom-gen", "--out", "/tmp/x", "--config", "/nonexistent.json"}).code, cli::kExitUsage);
}

TEST_F(Cli, UnknownConfigKeysAreUsageErrors) {
    io::write_text(dir_ / "bad.json", R"({"trian": {}})");
    const auto r = run({"phantom-gen", "--out", (dir_ / "ds").string(), "--config", (dir_ / "bad.json").string()});
    EXPECT_EQ(r.code, cli::kExitUsage);
    EXPECT_FALSE(r.err.empty());
    io::write_text(dir_ / "bad2.json", R"({"eval": {"registration": {"stepz": 1}}})");
    EXPECT_EQ(run({"phantom-gen", "--out", (dir_ / "ds").string(), "--config", (dir_ / "bad2.json").string()}).code,
              cli::kExitUsage);
}

TEST_F(Cli, PhantomGenWritesManifestAndRespectsForce) {
    const auto ds = (dir_ / "ds").string();
    const auto gen = run({"phantom-gen", "--config", cfg_, "--out", ds});
    ASSERT_EQ(gen.code, cli::kExitOk) << gen.err;
    const auto m = nlohmann::json::parse(io::read_text(fs::path(ds) / "manifest.json"));
    EXPECT_EQ(m["master_seed"], 3);
    EXPECT_EQ(run({"phantom-gen", "--config", cfg_, "--out", ds}).code, cli::kExitUsage);
    EXPECT_EQ(run({"phantom-gen", "--config", cfg_, "--out", ds, "--force", "--seed", "4"}).code, cli::kExitOk);
    EXPECT_EQ(nlohmann::json::parse(io::read_text(fs::path(ds) / "manifest.json"))["master_seed"], 4);

    const auto ratio = (dir_ / "ratio").string();
    ASSERT_EQ(run({"phantom-gen", "--config", cfg_, "--out", ratio, "--ratio", "20"}).code, cli::kExitOk);
    EXPECT_EQ(phantom::load_manifest(ratio).us_items.size(), 100u);
}

TEST_F(Cli, TrainSynthEvalAndSessionPipeline) {
    const auto ds = (dir_ / "ds").string(), run_dir = (dir_ / "run").string();
    ASSERT_EQ(run({"phantom-gen", "--config", cfg_, "--out", ds}).code, cli::kExitOk);

    auto r = run({"train", ds, "--config", cfg_, "--out", run_dir, "--variant", "no_attn", "--steps", "3"});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_TRUE(fs::exists(fs::path(run_dir) / "ckpt_3"));
    EXPECT_EQ(run({"train", ds, "--config", cfg_, "--out", run_dir}).code, cli::kExitUsage);
    EXPECT_EQ(run({"train", ds, "--config", cfg_, "--out", run_dir, "--steps", "0", "--force"}).code,
              cli::kExitUsage);

    // synth on a single file and on the dataset's test split
    const auto manifest_ds = phantom::load_manifest(ds);
    const auto* us = manifest_ds.select(Modality::US, phantom::Split::Test).front();
    const auto one = (dir_ / "one").string();
    r = run({"synth", run_dir, (fs::path(ds) / us->image).string(), "--out", one});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto stem = fs::path(us->image).stem().string();
    EXPECT_TRUE(fs::exists(fs::path(one) / (stem + ".png")));
    EXPECT_TRUE(fs::exists(fs::path(one) / (stem + ".f32")));
    const auto all = (dir_ / "all").string();
    ASSERT_EQ(run({"synth", run_dir, ds, "--out", all}).code, cli::kExitOk);
    EXPECT_EQ(std::distance(fs::directory_iterator(all), fs::directory_iterator{}), 2 * 60);
    EXPECT_EQ(run({"synth", (dir_ / "missing").string(), ds, "--out", all}).code, cli::kExitUsage);

    // session
    const auto sess = (dir_ / "session").string();
    r = run({"mos-session", ds, run_dir, "--config", cfg_, "--out", sess});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    const auto manifest = nlohmann::json::parse(io::read_text(fs::path(sess) / "session.json"));
    EXPECT_EQ(manifest["items"].size(), 6u);
    const auto key = mos::parse_answer_key(io::read_text(fs::path(sess) / "answer_key.json"));
    EXPECT_EQ(key.size(), 6u);
    for (const auto& it : manifest["items"])
        EXPECT_TRUE(fs::exists(fs::path(sess) / it["image"].get<std::string>()));

    // eval with ratings joined through the answer key
    std::string csv = std::string(mos::kCsvHeader) + "\n";
    int k = 0;
    for (const auto& [id, source] : key) {
        csv += "e1,expert," + id + ",," + std::to_string(1 + (k % 5)) + ",t\n";
        csv += "b1,beginner," + id + ",," + std::to_string(5 - (k % 5)) + ",t\n";
        ++k;
    }
    io::write_text(dir_ / "ratings.csv", csv);
    const auto rep = (dir_ / "report").string();
    r = run({"eval", ds, run_dir, "--config", cfg_, "--out", rep, "--mos-csv", (dir_ / "ratings.csv").string(),
             "--answer-key", (fs::path(sess) / "answer_key.json").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_NE(r.out.find("Deformation score"), std::string::npos);
    EXPECT_NE(r.out.find("MOS Expert"), std::string::npos);
    EXPECT_NE(r.out.find("Ours (w/o att.)"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(rep) / "report.json"));
    EXPECT_TRUE(fs::exists(fs::path(rep) / "report.txt"));

    // empty CSV: report without MOS rows, with a warning
    io::write_text(dir_ / "empty.csv", std::string(mos::kCsvHeader) + "\n");
    const auto rep2 = (dir_ / "report2").string();
    r = run({"eval", ds, run_dir, "--config", cfg_, "--out", rep2, "--mos-csv", (dir_ / "empty.csv").string()});
    ASSERT_EQ(r.code, cli::kExitOk) << r.err;
    EXPECT_EQ(r.out.find("MOS Expert"), std::string::npos);
    EXPECT_NE(io::read_text(fs::path(rep2) / "report.json").find("no records"), std::string::npos);

    // malformed CSV is a usage error
    io::write_text(dir_ / "bad.csv", "who,what\n");
    EXPECT_EQ(run({"eval", ds, run_dir, "--config", cfg_, "--out", (dir_ / "r3").string(), "--mos-csv",
                   (dir_ / "bad.csv").string()})
                  .code,
              cli::kExitUsage);
}
