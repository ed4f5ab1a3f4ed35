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

#include <set>

#include "xmsynth/mos.hpp"

using namespace xmsynth;
using namespace xmsynth::mos;

namespace {

MosRecord rec(std::string rater, Group g, std::string item, std::string source, int score) {
    return {std::move(rater), g, std::move(item), std::move(source), score, "2026-01-01T00:00:00Z"};
}

std::vector<SessionCandidate> candidates(const std::map<std::string, int>& per_source) {
    std::vector<SessionCandidate> c;
    for (const auto& [source, n] : per_source)
        for (int i = 0; i < n; ++i) c.push_back({Image({8, 8}, Modality::MR), source, source + std::to_string(i)});
    return c;
}

}  // namespace

TEST(MosCsv, RoundTripAndHeader) {
    const std::vector<MosRecord> rs{rec("r1", Group::Expert, "item_001", "full", 4),
                                    rec("r2", Group::Beginner, "item_002", "", 2)};
    const auto text = to_csv(rs);
    EXPECT_EQ(text.substr(0, text.find('\n')), kCsvHeader);
    EXPECT_EQ(parse_csv(text), rs);
    EXPECT_TRUE(parse_csv(std::string(kCsvHeader) + "\r\n").empty());
}

TEST(MosCsv, RejectsMalformedInput) {
    const std::string h = std::string(kCsvHeader) + "\n";
    EXPECT_THROW(parse_csv(""), ConfigError);
    EXPECT_THROW(parse_csv("rater,item,score\n"), ConfigError);
    EXPECT_THROW(parse_csv(h + "r1,expert,item_001,,6,t\n"), ConfigError);
    EXPECT_THROW(parse_csv(h + "r1,expert,item_001,,0,t\n"), ConfigError);
    EXPECT_THROW(parse_csv(h + "r1,expert,item_001,,x,t\n"), ConfigError);
    EXPECT_THROW(parse_csv(h + "r1,novice,item_001,,3,t\n"), ConfigError);
    EXPECT_THROW(parse_csv(h + "r1,expert,item_001,3,t\n"), ConfigError);
}

TEST(MosAggregate, HandComputedMeans) {
    // full/expert: 4, 5, 4 -> 4.33; full/beginner: 3, 4 -> 3.50
    // ae/expert: 1, 2, 2 -> 1.67; ae/beginner: 2, 3, 3, 3 -> 2.75
    const std::vector<MosRecord> rs{
        rec("e1", Group::Expert, "i1", "full", 4),   rec("e2", Group::Expert, "i1", "full", 5),
        rec("e3", Group::Expert, "i2", "full", 4),   rec("b1", Group::Beginner, "i1", "full", 3),
        rec("b2", Group::Beginner, "i2", "full", 4), rec("e1", Group::Expert, "i3", "ae", 1),
        rec("e2", Group::Expert, "i3", "ae", 2),     rec("e3", Group::Expert, "i4", "ae", 2),
        rec("b1", Group::Beginner, "i3", "ae", 2),   rec("b2", Group::Beginner, "i3", "ae", 3),
        rec("b3", Group::Beginner, "i4", "ae", 3),   rec("b4", Group::Beginner, "i4", "ae", 3)};
    const auto t = mos_aggregate(rs);
    EXPECT_DOUBLE_EQ(*t.mean("full", Group::Expert), 4.33);
    EXPECT_DOUBLE_EQ(*t.mean("full", Group::Beginner), 3.50);
    EXPECT_DOUBLE_EQ(*t.mean("ae", Group::Expert), 1.67);
    EXPECT_DOUBLE_EQ(*t.mean("ae", Group::Beginner), 2.75);
    EXPECT_EQ(t.rows.size(), 4u);
    EXPECT_EQ(t.rows.front().source, "ae");
    EXPECT_EQ(t.rater_counts.at("e1"), 2);
    EXPECT_TRUE(t.warnings.empty());
}

TEST(MosAggregate, MissingGroupIsOmittedWithAWarning) {
    const std::vector<MosRecord> rs{rec("e1", Group::Expert, "i1", "gan", 3)};
    const auto t = mos_aggregate(rs);
    EXPECT_TRUE(t.mean("gan", Group::Expert).has_value());
    EXPECT_FALSE(t.mean("gan", Group::Beginner).has_value());
    ASSERT_EQ(t.warnings.size(), 1u);
    EXPECT_NE(t.warnings[0].find("beginner"), std::string::npos);
}

TEST(MosAggregate, SourcelessRecordsAreRejected) {
    const std::vector<MosRecord> rs{rec("e1", Group::Expert, "i1", "", 3)};
    EXPECT_THROW(mos_aggregate(rs), ConfigError);
}

TEST(Session, DrawIsDeterministicDistinctAndCoversSources) {
    const auto c = candidates({{"real", 10}, {"full", 40}, {"ae", 40}, {"gan", 5}});
    const auto a = draw_session(c, 3), b = draw_session(c, 3);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.size(), static_cast<std::size_t>(kSessionSize));
    EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
    std::map<std::string, int> seen;
    for (auto i : a) ++seen[c[i].source];
    EXPECT_EQ(seen.size(), 4u);
    EXPECT_EQ(seen["gan"], 5);
    EXPECT_NE(draw_session(c, 4), a);
}

TEST(Session, TooFewCandidatesIsAConfigError) {
    EXPECT_THROW(draw_session(candidates({{"real", 10}}), 1), ConfigError);
    EXPECT_THROW(draw_session(candidates({{"real", 10}}), 1, 0), ConfigError);
}

TEST(Session, ManifestHidesSourcesAndKeyJoinsThem) {
    const std::vector<SessionItem> items{{"item_000", "images/item_000.png", "full", "run/full"},
                                         {"item_001", "images/item_001.png", "real", "mr_0042"}};
    const auto manifest = nlohmann::json::parse(session_manifest_json(items, "session-1"));
    EXPECT_EQ(manifest["session"], "session-1");
    EXPECT_EQ(manifest["csv_header"], std::string(kCsvHeader));
    ASSERT_EQ(manifest["items"].size(), 2u);
    for (const auto& it : manifest["items"]) {
        EXPECT_FALSE(it.contains("source"));
        EXPECT_FALSE(it.contains("origin"));
    }
    EXPECT_EQ(session_manifest_json(items, "session-1").find("full"), std::string::npos);

    const auto key = parse_answer_key(answer_key_json(items, "session-1"));
    EXPECT_EQ(key.at("item_000"), "full");
    EXPECT_EQ(key.at("item_001"), "real");

    const std::vector<MosRecord> rs{rec("e1", Group::Expert, "item_000", "", 5),
                                    rec("b1", Group::Beginner, "item_001", "real", 4)};
    const auto joined = join_answer_key(rs, key);
    EXPECT_EQ(joined[0].source, "full");
    EXPECT_EQ(joined[1].source, "real");

    const std::vector<MosRecord> unknown{rec("e1", Group::Expert, "item_999", "", 5)};
    EXPECT_THROW(join_answer_key(unknown, key), ConfigError);
    const std::vector<MosRecord> wrong{rec("e1", Group::Expert, "item_000", "ae", 5)};
    EXPECT_THROW(join_answer_key(wrong, key), ConfigError);
    EXPECT_THROW(parse_answer_key("{"), ConfigError);
}
