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

// Mean Opinion Score records, the rating CSV contract and blinded sessions.
//
// CSV contract (shared with the rating UI), one header line then one row per
// rating:
//
//   rater,group,item,source,score,timestamp
//
// `group` is "expert" or "beginner"; `score` an integer 1..5. The UI never
// knows the source, so it leaves that column empty; join_answer_key() fills it.

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xmsynth/image.hpp"

namespace xmsynth::mos {

inline constexpr std::string_view kCsvHeader = "rater,group,item,source,score,timestamp";
inline constexpr int kSessionSize = 80;

enum class Group { Expert, Beginner };
std::string_view to_string(Group g);
Group group_from_string(std::string_view s);

struct MosRecord {
    std::string rater;
    Group group = Group::Beginner;
    std::string item;
    std::string source;  // hidden from raters
    int score = 0;
    std::string timestamp;

    friend bool operator==(const MosRecord&, const MosRecord&) = default;
};

void validate(const MosRecord& r);

/// Throws ConfigError on a wrong header, malformed row or invalid record.
std::vector<MosRecord> parse_csv(std::string_view text);
std::string to_csv(std::span<const MosRecord> records);

struct MosRow {
    std::string source;
    Group group = Group::Expert;
    double mean = 0.0;  // rounded to 2 decimals
    int count = 0;
};

struct MosTable {
    std::vector<MosRow> rows;  // sorted by (source, group)
    std::map<std::string, int> rater_counts;
    std::vector<std::string> warnings;

    [[nodiscard]] std::optional<double> mean(std::string_view source, Group group) const;
};

/// Per-(source, group) arithmetic means. A (source, group) cell with no
/// records is omitted and reported in `warnings`.
MosTable mos_aggregate(std::span<const MosRecord> records);

// ---------------------------------------------------------------------------
// Blinded rating sessions

struct SessionItem {
    std::string id;      // opaque, e.g. "item_017"
    std::string image;   // relative path inside the session bundle
    std::string source;  // answer key only
    std::string origin;  // answer key only: dataset item or run the image came from
};

struct SessionCandidate {
    Image image;
    std::string source;
    std::string origin;
};

/// Draws `count` candidates without replacement (round-robin over sources so
/// every source is represented), then shuffles them with `seed`.
std::vector<std::size_t> draw_session(std::span<const SessionCandidate> candidates,
                                      std::uint64_t seed, int count = kSessionSize);

/// Rater-facing manifest: ids and image paths only.
std::string session_manifest_json(std::span<const SessionItem> items, const std::string& session_id);
/// Sealed answer key: id -> source, origin.
std::string answer_key_json(std::span<const SessionItem> items, const std::string& session_id);

/// Parses an answer key into id -> source.
std::map<std::string, std::string> parse_answer_key(std::string_view text);

/// Fills empty sources from the key; throws ConfigError on unknown items or
/// on a non-empty source that disagrees with the key.
std::vector<MosRecord> join_answer_key(std::span<const MosRecord> records,
                                       const std::map<std::string, std::string>& key);

}  // namespace xmsynth::mos
