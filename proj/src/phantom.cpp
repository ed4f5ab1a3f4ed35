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

#include "xmsynth/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <json.hpp>

#include "xmsynth/io.hpp"

namespace xmsynth::phantom {
namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kUsStream = 0x5553;  // "US"
constexpr std::uint64_t kMrStream = 0x4d52;  // "MR"
constexpr std::uint64_t kRenderStream = 0x52454e44;
constexpr int kPlacementAttempts = 64;

// Portable uniform draw in [0,1) from the top 53 bits.
double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double draw(std::mt19937_64& rng, const Range& r) { return r.min + (r.max - r.min) * unit(rng); }

void check_range(const Range& r, const char* name, double lo, double hi) {
    if (!std::isfinite(r.min) || !std::isfinite(r.max) || r.min > r.max || r.min < lo ||
        r.max > hi)
        throw ConfigError(std::string("parameter range '") + name + "' is invalid");
}

Ellipse rotate_ellipse(const Ellipse& e, double angle, double px, double py) {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = e.cx - px, dy = e.cy - py;
    Ellipse out = e;
    out.cx = px + c * dx - s * dy;
    out.cy = py + s * dx + c * dy;
    out.rotation = e.rotation + angle;
    return out;
}

bool inside_ellipse_with_margin(const Ellipse& container, const Ellipse& shape) {
    constexpr int kSamples = 360;
    const double c = std::cos(shape.rotation), s = std::sin(shape.rotation);
    for (int i = 0; i < kSamples; ++i) {
        const double t = 2.0 * std::numbers::pi * i / kSamples;
        const double lx = shape.semi_a * std::cos(t), ly = shape.semi_b * std::sin(t);
        const double x = shape.cx + c * lx - s * ly;
        const double y = shape.cy + s * lx + c * ly;
        if (container.level(x, y) > 0.98) return false;
    }
    return true;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Centroid {
    double x = 0.0;
    double y = 0.0;
    bool valid = false;
};

Centroid head_centroid(const AnatomyMap& map) {
    double sx = 0.0, sy = 0.0;
    std::size_t n = 0;
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c)
            if (map.at(r, c) >= 1) {
                sx += c + 0.5;
                sy += r + 0.5;
                ++n;
            }
    if (n == 0) return {};
    return {sx / n, sy / n, true};
}

}  // namespace

double Ellipse::level(double x, double y) const {
    const double c = std::cos(rotation), s = std::sin(rotation);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / semi_a;
    const double v = (-s * dx + c * dy) / semi_b;
    return u * u + v * v;
}

bool Structure::contains(double x, double y) const {
    if (outer.level(x, y) > 1.0) return false;
    if (kind == ShapeKind::Ellipse) return true;
    Ellipse carved = outer;
    carved.cx += std::cos(outer.rotation) * crescent_offset * outer.semi_a;
    carved.cy += std::sin(outer.rotation) * crescent_offset * outer.semi_a;
    return carved.level(x, y) > 1.0;
}

Ellipse AnatomySpec::inner_skull() const {
    Ellipse inner = skull;
    inner.semi_a -= skull_thickness;
    inner.semi_b -= skull_thickness;
    return inner;
}

bool AnatomySpec::same_geometry(const AnatomySpec& other) const {
    return skull == other.skull && skull_thickness == other.skull_thickness &&
           structures == other.structures;
}

void ParameterRanges::validate() const {
    constexpr double inf = std::numeric_limits<double>::infinity();
    check_range(skull_cx, "skull_cx", -inf, inf);
    check_range(skull_cy, "skull_cy", -inf, inf);
    check_range(skull_semi_a, "skull_semi_a", 1e-9, inf);
    check_range(skull_semi_b, "skull_semi_b", 1e-9, inf);
    check_range(skull_rotation, "skull_rotation", -inf, inf);
    check_range(skull_thickness, "skull_thickness", 2.0, inf);
    check_range(structure_count, "structure_count", 0.0, 64.0);
    check_range(structure_size, "structure_size", 1e-9, 1.0);
    check_range(structure_aspect, "structure_aspect", 1e-9, 1.0);
    check_range(structure_radius, "structure_radius", 0.0, 1.0);
    check_range(structure_angle, "structure_angle", -inf, inf);
    check_range(structure_rotation, "structure_rotation", -inf, inf);
    check_range(crescent_offset, "crescent_offset", 0.0, 2.0);
    if (tissue_classes < 1 || tissue_classes > kMaxTissueClasses)
        throw ConfigError("tissue_classes must lie in 1.." + std::to_string(kMaxTissueClasses));
    if (skull_thickness.max >= std::min(skull_semi_a.min, skull_semi_b.min))
        throw ConfigError("skull thickness must be smaller than the skull semi-axes");
}

AnatomySpec sample_anatomy(std::uint64_t seed, const ParameterRanges& ranges) {
    ranges.validate();
    std::mt19937_64 rng(seed);
    AnatomySpec spec;
    spec.seed = seed;
    spec.skull.cx = draw(rng, ranges.skull_cx);
    spec.skull.cy = draw(rng, ranges.skull_cy);
    spec.skull.semi_a = draw(rng, ranges.skull_semi_a);
    spec.skull.semi_b = draw(rng, ranges.skull_semi_b);
    spec.skull.rotation = draw(rng, ranges.skull_rotation);
    spec.skull_thickness = draw(rng, ranges.skull_thickness);

    const Ellipse inner = spec.inner_skull();
    const double inner_minor = std::min(inner.semi_a, inner.semi_b);
    const int count = static_cast<int>(std::floor(
        ranges.structure_count.min +
        (ranges.structure_count.max - ranges.structure_count.min + 1.0) * unit(rng)));
    const int n_structures =
        std::clamp(count, static_cast<int>(ranges.structure_count.min),
                   static_cast<int>(ranges.structure_count.max));
    const int tissue_span = std::max(ranges.tissue_classes - 1, 1);

    for (int i = 0; i < n_structures; ++i) {
        Structure st;
        st.kind = (i % 2 == 0) ? ShapeKind::Ellipse : ShapeKind::Crescent;
        st.tissue_class = ranges.tissue_classes == 1 ? 1 : 2 + (i % tissue_span);
        bool placed = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !placed; ++attempt) {
            const double size = draw(rng, ranges.structure_size) * inner_minor;
            const double aspect = draw(rng, ranges.structure_aspect);
            const double radius = draw(rng, ranges.structure_radius);
            const double angle = draw(rng, ranges.structure_angle);
            // Centre placed in the inner skull's normalised frame.
            const double lx = radius * inner.semi_a * std::cos(angle);
            const double ly = radius * inner.semi_b * std::sin(angle);
            const double c = std::cos(inner.rotation), s = std::sin(inner.rotation);
            st.outer.cx = inner.cx + c * lx - s * ly;
            st.outer.cy = inner.cy + s * lx + c * ly;
            st.outer.semi_a = size;
            st.outer.semi_b = size * aspect;
            st.outer.rotation = draw(rng, ranges.structure_rotation);
            st.crescent_offset = st.kind == ShapeKind::Crescent ? draw(rng, ranges.crescent_offset) : 0.0;
            placed = inside_ellipse_with_margin(inner, st.outer);
        }
        if (!placed)
            throw ConfigError("structure " + std::to_string(i) +
                              " cannot be placed inside the skull with the given ranges");
        spec.structures.push_back(st);
    }
    return spec;
}

void validate_spec(const AnatomySpec& spec) {
    const auto positive = [](const Ellipse& e) {
        return std::isfinite(e.cx) && std::isfinite(e.cy) && e.semi_a > 0.0 && e.semi_b > 0.0;
    };
    if (!positive(spec.skull)) throw SpecError("skull semi-axes must be positive");
    if (spec.skull_thickness < 2.0) throw SpecError("skull thickness must be at least 2 px");
    if (spec.skull_thickness >= std::min(spec.skull.semi_a, spec.skull.semi_b))
        throw SpecError("skull thickness exceeds the skull semi-axes");
    const Ellipse inner = spec.inner_skull();
    for (std::size_t i = 0; i < spec.structures.size(); ++i) {
        const auto& st = spec.structures[i];
        if (!positive(st.outer))
            throw SpecError("structure " + std::to_string(i) + " has non-positive semi-axes");
        if (st.tissue_class < 1 || st.tissue_class > kMaxTissueClasses)
            throw SpecError("structure " + std::to_string(i) + " has an invalid tissue class");
        if (!inside_ellipse_with_margin(inner, st.outer))
            throw SpecError("structure " + std::to_string(i) + " lies outside the skull");
    }
}

AnatomySpec rotated(const AnatomySpec& spec, double angle, double pivot_x, double pivot_y) {
    AnatomySpec out = spec;
    out.skull = rotate_ellipse(spec.skull, angle, pivot_x, pivot_y);
    for (auto& st : out.structures) st.outer = rotate_ellipse(st.outer, angle, pivot_x, pivot_y);
    return out;
}

AnatomyMap rasterize_anatomy(const AnatomySpec& spec, Size2 size) {
    if (size.height < 32 || size.width < 32)
        throw ConfigError("anatomy raster must be at least 32x32");
    validate_spec(spec);
    const Ellipse& outer = spec.skull;
    const Ellipse inner = spec.inner_skull();
    // The ring must close inside the raster.
    const double reach = std::max(outer.semi_a, outer.semi_b);
    if (outer.cx - reach < 0.0 || outer.cy - reach < 0.0 || outer.cx + reach > size.width ||
        outer.cy + reach > size.height)
        throw SpecError("skull does not fit inside the raster");

    AnatomyMap map(size);
    for (int r = 0; r < size.height; ++r) {
        for (int c = 0; c < size.width; ++c) {
            const double x = c + 0.5, y = r + 0.5;
            if (outer.level(x, y) > 1.0) continue;
            if (inner.level(x, y) > 1.0) {
                map.at(r, c) = 1;
                continue;
            }
            std::uint8_t label = 2;
            for (const auto& st : spec.structures)
                if (st.contains(x, y)) label = static_cast<std::uint8_t>(st.tissue_class + 1);
            map.at(r, c) = label;
        }
    }
    return map;
}

std::vector<std::uint8_t> shadow_mask(const AnatomyMap& map, const UsRenderConfig& cfg) {
    std::vector<std::uint8_t> out(map.labels().size(), 0);
    const Centroid centre = head_centroid(map);
    if (!centre.valid || cfg.shadow_half_angle <= 0.0) return out;
    // Probe sits at the top of the image; the sector points down from the centroid.
    const auto in_sector = [&](int r, int c, double& dist) {
        const double dx = c + 0.5 - centre.x, dy = r + 0.5 - centre.y;
        dist = std::hypot(dx, dy);
        if (dy <= 0.0) return false;
        return std::atan2(std::abs(dx), dy) <= cfg.shadow_half_angle;
    };
    double far_wall = 0.0;
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c) {
            double d = 0.0;
            if (map.at(r, c) == 1 && in_sector(r, c, d)) far_wall = std::max(far_wall, d);
        }
    const double start = cfg.shadow_start * far_wall;
    for (int r = 0; r < map.height(); ++r)
        for (int c = 0; c < map.width(); ++c) {
            double d = 0.0;
            if (in_sector(r, c, d) && d >= start)
                out[static_cast<std::size_t>(r) * map.width() + c] = 1;
        }
    return out;
}

Image render_us(const AnatomyMap& map, std::uint64_t seed, const UsRenderConfig& cfg) {
    if (cfg.speckle_variance < 0.0 || cfg.shadow_factor < 0.0 || cfg.shadow_factor > 1.0)
        throw ConfigError("invalid ultrasound render configuration");
    Image img(map.size(), Modality::US);
    std::mt19937_64 rng(seed);
    const bool speckle = cfg.speckle_variance > 0.0;
    // Unit-mean gamma speckle: shape 1/v, scale v gives variance v.
    std::gamma_distribution<double> gamma(speckle ? 1.0 / cfg.speckle_variance : 1.0,
                                          speckle ? cfg.speckle_variance : 1.0);
    const auto shadow = cfg.shadow_factor < 1.0 ? shadow_mask(map, cfg)
                                                : std::vector<std::uint8_t>(map.labels().size(), 0);
    for (int r = 0; r < map.height(); ++r) {
        for (int c = 0; c < map.width(); ++c) {
            const auto label = map.at(r, c);
            double v = cfg.intensities.at(label);
            if (speckle) v *= gamma(rng);
            if (shadow[static_cast<std::size_t>(r) * map.width() + c]) v *= cfg.shadow_factor;
            img.at(r, c) = static_cast<float>(v);
        }
    }
    img.clip();
    return img;
}

Image render_mr(const AnatomyMap& map, std::uint64_t seed, const MrRenderConfig& cfg) {
    if (cfg.noise_sigma < 0.0 || cfg.bias_amplitude < 0.0 || cfg.bias_amplitude >= 1.0)
        throw ConfigError("invalid MR render configuration");
    Image img(map.size(), Modality::MR);
    std::mt19937_64 rng(seed);
    // Bias: product of two sub-one-cycle cosines with random phases.
    const double phase_x = 2.0 * std::numbers::pi * unit(rng);
    const double phase_y = 2.0 * std::numbers::pi * unit(rng);
    const double freq_x = 0.5 + 0.5 * unit(rng);
    const double freq_y = 0.5 + 0.5 * unit(rng);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int r = 0; r < map.height(); ++r) {
        for (int c = 0; c < map.width(); ++c) {
            const double u = (c + 0.5) / map.width(), w = (r + 0.5) / map.height();
            const double bias =
                1.0 + cfg.bias_amplitude * 0.5 *
                          (std::cos(2.0 * std::numbers::pi * freq_x * u + phase_x) +
                           std::cos(2.0 * std::numbers::pi * freq_y * w + phase_y));
            double v = cfg.intensities.at(map.at(r, c)) * bias;
            if (cfg.noise_sigma > 0.0) v += cfg.noise_sigma * noise(rng);
            img.at(r, c) = static_cast<float>(v);
        }
    }
    img.clip();
    return img;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    }
    return "train";
}

Split split_from_string(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "val") return Split::Val;
    if (s == "test") return Split::Test;
    throw ConfigError("unknown split '" + std::string(s) + "'");
}

void DatasetConfig::validate() const {
    ranges.validate();
    if (n_us <= 0 || n_mr <= 0) throw ConfigError("dataset counts must be positive");
    if (size.height < 32 || size.width < 32) throw ConfigError("image size must be at least 32x32");
    if (!(imbalance_ratio > 0.0)) throw ConfigError("imbalance_ratio must be positive");
    const double ratio = static_cast<double>(n_us) / n_mr;
    if (std::abs(ratio - imbalance_ratio) > 1.0)
        throw ConfigError("n_us / n_mr does not match imbalance_ratio within 1");
    const double sum = split.train + split.val + split.test;
    if (split.train < 0 || split.val < 0 || split.test < 0 || std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions must be non-negative and sum to 1");
}

std::vector<const DatasetItem*> DatasetManifest::select(Modality m, Split s) const& {
    std::vector<const DatasetItem*> out;
    for (const auto& item : m == Modality::US ? us_items : mr_items)
        if (item.split == s) out.push_back(&item);
    return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index);
}

DatasetManifest plan_dataset(const DatasetConfig& config) {
    config.validate();
    DatasetManifest manifest;
    manifest.master_seed = config.master_seed;
    manifest.size = config.size;
    manifest.split = config.split;
    manifest.imbalance_ratio = config.imbalance_ratio;

    const auto make_items = [&](Modality m, int count) {
        const std::uint64_t stream = m == Modality::US ? kUsStream : kMrStream;
        const std::string prefix = m == Modality::US ? "us" : "mr";
        const int n_train = static_cast<int>(std::lround(config.split.train * count));
        const int n_val = static_cast<int>(std::lround(config.split.val * count));
        std::vector<DatasetItem> items;
        items.reserve(count);
        for (int i = 0; i < count; ++i) {
            DatasetItem item;
            char id[32];
            std::snprintf(id, sizeof(id), "%s_%05d", prefix.c_str(), i);
            item.id = id;
            item.modality = m;
            // Low bit partitions the seed pools: even for US, odd for MR.
            const std::uint64_t raw = derive_seed(config.master_seed, stream, static_cast<std::uint64_t>(i));
            item.anatomy_seed = (raw & ~std::uint64_t{1}) | (m == Modality::MR ? 1u : 0u);
            item.render_seed = derive_seed(config.master_seed, stream ^ kRenderStream, static_cast<std::uint64_t>(i));
            item.image = prefix + "/" + item.id + ".png";
            item.sidecar = prefix + "/" + item.id + ".f32";
            item.labels = prefix + "/" + item.id + ".lbl";
            item.split = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
            items.push_back(std::move(item));
        }
        return items;
    };
    manifest.us_items = make_items(Modality::US, config.n_us);
    manifest.mr_items = make_items(Modality::MR, config.n_mr);

    std::set<std::uint64_t> us_seeds;
    for (const auto& it : manifest.us_items) us_seeds.insert(it.anatomy_seed);
    for (const auto& it : manifest.mr_items)
        if (us_seeds.count(it.anatomy_seed))
            throw InternalError("US and MR anatomy seed pools overlap");
    return manifest;
}

namespace {

json ranges_to_json(const ParameterRanges& r) {
    const auto rj = [](const Range& x) { return json::array({x.min, x.max}); };
    return json{{"skull_cx", rj(r.skull_cx)},
                {"skull_cy", rj(r.skull_cy)},
                {"skull_semi_a", rj(r.skull_semi_a)},
                {"skull_semi_b", rj(r.skull_semi_b)},
                {"skull_rotation", rj(r.skull_rotation)},
                {"skull_thickness", rj(r.skull_thickness)},
                {"structure_count", rj(r.structure_count)},
                {"structure_size", rj(r.structure_size)},
                {"structure_aspect", rj(r.structure_aspect)},
                {"structure_radius", rj(r.structure_radius)},
                {"structure_angle", rj(r.structure_angle)},
                {"structure_rotation", rj(r.structure_rotation)},
                {"crescent_offset", rj(r.crescent_offset)},
                {"tissue_classes", r.tissue_classes}};
}

json item_to_json(const DatasetItem& item) {
    return json{{"id", item.id},
                {"modality", std::string(to_string(item.modality))},
                {"anatomy_seed", item.anatomy_seed},
                {"render_seed", item.render_seed},
                {"image", item.image},
                {"sidecar", item.sidecar},
                {"labels", item.labels},
                {"split", std::string(to_string(item.split))}};
}

DatasetItem item_from_json(const json& j) {
    DatasetItem item;
    item.id = j.at("id").get<std::string>();
    item.modality = modality_from_string(j.at("modality").get<std::string>());
    item.anatomy_seed = j.at("anatomy_seed").get<std::uint64_t>();
    item.render_seed = j.at("render_seed").get<std::uint64_t>();
    item.image = j.at("image").get<std::string>();
    item.sidecar = j.at("sidecar").get<std::string>();
    item.labels = j.at("labels").get<std::string>();
    item.split = split_from_string(j.at("split").get<std::string>());
    return item;
}

}  // namespace

std::string manifest_to_json(const DatasetManifest& manifest, const DatasetConfig& config) {
    json j;
    j["format"] = "xmsynth-dataset/1";
    j["master_seed"] = manifest.master_seed;
    j["size"] = json::array({manifest.size.height, manifest.size.width});
    j["split"] = json{{"train", manifest.split.train},
                      {"val", manifest.split.val},
                      {"test", manifest.split.test}};
    j["imbalance_ratio"] = manifest.imbalance_ratio;
    j["n_us"] = manifest.us_items.size();
    j["n_mr"] = manifest.mr_items.size();
    j["ranges"] = ranges_to_json(config.ranges);
    j["us_render"] = json{{"intensities", config.us.intensities},
                          {"speckle_variance", config.us.speckle_variance},
                          {"shadow_factor", config.us.shadow_factor},
                          {"shadow_half_angle", config.us.shadow_half_angle},
                          {"shadow_start", config.us.shadow_start}};
    j["mr_render"] = json{{"intensities", config.mr.intensities},
                          {"noise_sigma", config.mr.noise_sigma},
                          {"bias_amplitude", config.mr.bias_amplitude}};
    j["us_items"] = json::array();
    for (const auto& it : manifest.us_items) j["us_items"].push_back(item_to_json(it));
    j["mr_items"] = json::array();
    for (const auto& it : manifest.mr_items) j["mr_items"].push_back(item_to_json(it));
    return j.dump(2) + "\n";
}

DatasetConfig dataset_config_from_json(const json& j, DatasetConfig cfg) {
    if (!j.is_object()) throw ConfigError("dataset config must be a JSON object");
    const auto unknown = [](const std::string& where, const std::string& key) {
        return ConfigError("unknown " + where + " key '" + key + "'");
    };
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "master_seed") cfg.master_seed = v.get<std::uint64_t>();
            else if (key == "size") cfg.size = {v.at(0).get<int>(), v.at(1).get<int>()};
            else if (key == "imbalance_ratio") cfg.imbalance_ratio = v.get<double>();
            else if (key == "n_us") cfg.n_us = v.get<int>();
            else if (key == "n_mr") cfg.n_mr = v.get<int>();
            else if (key == "split") {
                for (const auto& [k, f] : v.items()) {
                    if (k == "train") cfg.split.train = f.get<double>();
                    else if (k == "val") cfg.split.val = f.get<double>();
                    else if (k == "test") cfg.split.test = f.get<double>();
                    else throw unknown("split", k);
                }
            } else if (key == "ranges") {
                auto& r = cfg.ranges;
                const std::pair<const char*, Range*> fields[] = {
                    {"skull_cx", &r.skull_cx},
                    {"skull_cy", &r.skull_cy},
                    {"skull_semi_a", &r.skull_semi_a},
                    {"skull_semi_b", &r.skull_semi_b},
                    {"skull_rotation", &r.skull_rotation},
                    {"skull_thickness", &r.skull_thickness},
                    {"structure_count", &r.structure_count},
                    {"structure_size", &r.structure_size},
                    {"structure_aspect", &r.structure_aspect},
                    {"structure_radius", &r.structure_radius},
                    {"structure_angle", &r.structure_angle},
                    {"structure_rotation", &r.structure_rotation},
                    {"crescent_offset", &r.crescent_offset}};
                for (const auto& [k, f] : v.items()) {
                    if (k == "tissue_classes") {
                        r.tissue_classes = f.get<int>();
                        continue;
                    }
                    const auto it = std::find_if(std::begin(fields), std::end(fields),
                                                 [&](const auto& e) { return k == e.first; });
                    if (it == std::end(fields)) throw unknown("ranges", k);
                    *it->second = {f.at(0).get<double>(), f.at(1).get<double>()};
                }
            } else if (key == "us_render") {
                for (const auto& [k, f] : v.items()) {
                    if (k == "intensities") cfg.us.intensities = f.get<IntensityTable>();
                    else if (k == "speckle_variance") cfg.us.speckle_variance = f.get<double>();
                    else if (k == "shadow_factor") cfg.us.shadow_factor = f.get<double>();
                    else if (k == "shadow_half_angle") cfg.us.shadow_half_angle = f.get<double>();
                    else if (k == "shadow_start") cfg.us.shadow_start = f.get<double>();
                    else throw unknown("us_render", k);
                }
            } else if (key == "mr_render") {
                for (const auto& [k, f] : v.items()) {
                    if (k == "intensities") cfg.mr.intensities = f.get<IntensityTable>();
                    else if (k == "noise_sigma") cfg.mr.noise_sigma = f.get<double>();
                    else if (k == "bias_amplitude") cfg.mr.bias_amplitude = f.get<double>();
                    else throw unknown("mr_render", k);
                }
            } else {
                throw unknown("dataset config", key);
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad dataset config value: ") + e.what());
    }
    return cfg;
}

DatasetManifest load_manifest(const std::filesystem::path& root) {
    const auto path = root / kManifestFile;
    if (!std::filesystem::exists(path))
        throw ConfigError("dataset manifest not found: " + path.string());
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
    }
    DatasetManifest m;
    try {
        m.master_seed = j.at("master_seed").get<std::uint64_t>();
        m.size = {j.at("size").at(0).get<int>(), j.at("size").at(1).get<int>()};
        m.split = {j.at("split").at("train").get<double>(), j.at("split").at("val").get<double>(),
                   j.at("split").at("test").get<double>()};
        m.imbalance_ratio = j.at("imbalance_ratio").get<double>();
        for (const auto& it : j.at("us_items")) m.us_items.push_back(item_from_json(it));
        for (const auto& it : j.at("mr_items")) m.mr_items.push_back(item_from_json(it));
    } catch (const json::exception& e) {
        throw ConfigError("malformed manifest " + path.string() + ": " + e.what());
    }
    return m;
}

DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root) {
    DatasetManifest manifest = plan_dataset(config);
    std::filesystem::create_directories(root / "us");
    std::filesystem::create_directories(root / "mr");
    const auto emit = [&](const DatasetItem& item) {
        const AnatomySpec spec = sample_anatomy(item.anatomy_seed, config.ranges);
        const AnatomyMap map = rasterize_anatomy(spec, config.size);
        const Image img = item.modality == Modality::US ? render_us(map, item.render_seed, config.us)
                                                        : render_mr(map, item.render_seed, config.mr);
        io::write_png(root / item.image, img);
        io::write_f32(root / item.sidecar, img);
        io::write_labels(root / item.labels, map);
    };
    for (const auto& item : manifest.us_items) emit(item);
    for (const auto& item : manifest.mr_items) emit(item);
    io::write_text(root / kManifestFile, manifest_to_json(manifest, config));
    return manifest;
}

}  // namespace xmsynth::phantom
