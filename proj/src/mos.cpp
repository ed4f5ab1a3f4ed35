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

#include "xmsynth/mos.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <random>
#include <set>

#include <json.hpp>

namespace xmsynth::mos {
namespace {

using json = nlohmann::ordered_json;

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

bool has_separator(std::string_view s) {
    return s.find_first_of(",\r\n") != std::string_view::npos;
}

}  // namespace

std::string_view to_string(Group g) { return g == Group::Expert ? "expert" : "beginner"; }

Group group_from_string(std::string_view s) {
    if (s == "expert") return Group::Expert;
    if (s == "beginner") return Group::Beginner;
    throw ConfigError("unknown rater group '" + std::string(s) + "'");
}

void validate(const MosRecord& r) {
    if (r.score < 1 || r.score > 5)
        throw ConfigError("MOS score " + std::to_string(r.score) + " outside 1..5");
    if (r.rater.empty() || r.item.empty()) throw ConfigError("MOS record needs rater and item");
    if (has_separator(r.rater) || has_separator(r.item) || has_separator(r.source) ||
        has_separator(r.timestamp))
        throw ConfigError("MOS record fields must not contain commas or newlines");
}

std::vector<MosRecord> parse_csv(std::string_view text) {
    std::vector<MosRecord> records;
    std::size_t pos = 0;
    int line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!header_seen) {
            if (line != kCsvHeader)
                throw ConfigError("MOS CSV header must be '" + std::string(kCsvHeader) + "'");
            header_seen = true;
            continue;
        }
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 6)
            throw ConfigError("MOS CSV line " + std::to_string(line_no) + ": expected 6 fields");
        MosRecord r;
        r.rater = f[0];
        r.group = group_from_string(f[1]);
        r.item = f[2];
        r.source = f[3];
        const auto [ptr, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), r.score);
        if (ec != std::errc() || ptr != f[4].data() + f[4].size())
            throw ConfigError("MOS CSV line " + std::to_string(line_no) + ": bad score");
        r.timestamp = f[5];
        validate(r);
        records.push_back(std::move(r));
    }
    if (!header_seen) throw ConfigError("MOS CSV is empty (no header)");
    return records;
}

std::string to_csv(std::span<const MosRecord> records) {
    std::string out(kCsvHeader);
    out += '\n';
    for (const auto& r : records) {
        validate(r);
        out += r.rater + ',' + std::string(to_string(r.group)) + ',' + r.item + ',' + r.source +
               ',' + std::to_string(r.score) + ',' + r.timestamp + '\n';
    }
    return out;
}

std::optional<double> MosTable::mean(std::string_view source, Group group) const {
    for (const auto& row : rows)
        if (row.source == source && row.group == group) return row.mean;
    return std::nullopt;
}

MosTable mos_aggregate(std::span<const MosRecord> records) {
    MosTable table;
    std::map<std::pair<std::string, int>, std::pair<long long, int>> sums;
    std::set<std::string> sources;
    for (const auto& r : records) {
        validate(r);
        if (r.source.empty())
            throw ConfigError("MOS record for item '" + r.item + "' has no source; join the answer key first");
        auto& cell = sums[{r.source, static_cast<int>(r.group)}];
        cell.first += r.score;
        cell.second += 1;
        sources.insert(r.source);
        table.rater_counts[r.rater] += 1;
    }
    for (const auto& source : sources) {
        for (Group g : {Group::Expert, Group::Beginner}) {
            const auto it = sums.find({source, static_cast<int>(g)});
            if (it == sums.end()) {
                table.warnings.push_back("no " + std::string(to_string(g)) + " ratings for source '" +
                                         source + "'");
                continue;
            }
            const double mean = static_cast<double>(it->second.first) / it->second.second;
            table.rows.push_back({source, g, std::round(mean * 100.0) / 100.0, it->second.second});
        }
    }
    return table;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> draw_session(std::span<const SessionCandidate> candidates,
                                      std::uint64_t seed, int count) {
    if (count <= 0) throw ConfigError("session size must be positive");
    if (candidates.size() < static_cast<std::size_t>(count))
        throw ConfigError("only " + std::to_string(candidates.size()) +
                          " candidate images for a session of " + std::to_string(count));
    std::mt19937_64 rng(seed);
    std::map<std::string, std::vector<std::size_t>> by_source;
    for (std::size_t i = 0; i < candidates.size(); ++i) by_source[candidates[i].source].push_back(i);
    for (auto& [_, v] : by_source) std::shuffle(v.begin(), v.end(), rng);

    std::vector<std::size_t> picked;
    std::map<std::string, std::size_t> cursor;
    while (picked.size() < static_cast<std::size_t>(count)) {
        for (const auto& [source, pool] : by_source) {
            auto& k = cursor[source];
            if (k < pool.size() && picked.size() < static_cast<std::size_t>(count))
                picked.push_back(pool[k++]);
        }
    }
    std::shuffle(picked.begin(), picked.end(), rng);
    return picked;
}

std::string session_manifest_json(std::span<const SessionItem> items, const std::string& session_id) {
    json j;
    j["format"] = "xmsynth-mos-session/1";
    j["session"] = session_id;
    j["scale"] = json{{"min", 1}, {"max", 5}, {"labels", json{{"1", "bad"}, {"5", "excellent"}}}};
    j["csv_header"] = std::string(kCsvHeader);
    j["items"] = json::array();
    for (const auto& it : items) j["items"].push_back(json{{"id", it.id}, {"image", it.image}});
    return j.dump(2) + "\n";
}

std::string answer_key_json(std::span<const SessionItem> items, const std::string& session_id) {
    json j;
    j["format"] = "xmsynth-mos-key/1";
    j["session"] = session_id;
    j["items"] = json::array();
    for (const auto& it : items)
        j["items"].push_back(json{{"id", it.id}, {"source", it.source}, {"origin", it.origin}});
    return j.dump(2) + "\n";
}

std::map<std::string, std::string> parse_answer_key(std::string_view text) {
    std::map<std::string, std::string> key;
    try {
        const auto j = json::parse(text);
        for (const auto& it : j.at("items"))
            key[it.at("id").get<std::string>()] = it.at("source").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed answer key: ") + e.what());
    }
    return key;
}

std::vector<MosRecord> join_answer_key(std::span<const MosRecord> records,
                                       const std::map<std::string, std::string>& key) {
    std::vector<MosRecord> out(records.begin(), records.end());
    for (auto& r : out) {
        const auto it = key.find(r.item);
        if (it == key.end()) throw ConfigError("item '" + r.item + "' is not in the answer key");
        if (!r.source.empty() && r.source != it->second)
            throw ConfigError("item '" + r.item + "' source disagrees with the answer key");
        r.source = it->second;
    }
    return out;
}

}  // namespace xmsynth::mos
