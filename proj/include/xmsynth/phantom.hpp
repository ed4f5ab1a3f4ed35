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

// Synthetic two-modality head phantoms. Both renderers consume the same
// AnatomyMap, so US and MR images of one seed share the hidden anatomy;
// datasets draw the two modalities from disjoint seed pools.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "xmsynth/image.hpp"

namespace xmsynth::phantom {

/// Thrown by rasterize_anatomy for specs violating the AnatomySpec invariants.
class SpecError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

inline constexpr int kMaxTissueClasses = 6;

/// Ellipse in pixel coordinates: x runs along columns, y along rows; pixel
/// (r, c) has its centre at (c + 0.5, r + 0.5).
struct Ellipse {
    double cx = 0.0;
    double cy = 0.0;
    double semi_a = 1.0;  // along the rotated local x axis
    double semi_b = 1.0;
    double rotation = 0.0;  // radians

    /// Implicit function value; <= 1 inside.
    [[nodiscard]] double level(double x, double y) const;
    friend bool operator==(const Ellipse&, const Ellipse&) = default;
};

enum class ShapeKind { Ellipse, Crescent };

struct Structure {
    ShapeKind kind = ShapeKind::Ellipse;
    Ellipse outer;
    /// Crescent only: the carved-out ellipse is `outer` shifted along its local
    /// x axis by this fraction of semi_a.
    double crescent_offset = 0.0;
    int tissue_class = 2;  // 1..K; rendered label = tissue_class + 1

    [[nodiscard]] bool contains(double x, double y) const;
    friend bool operator==(const Structure&, const Structure&) = default;
};

struct AnatomySpec {
    Ellipse skull;  // outer boundary of the skull ring
    double skull_thickness = 3.0;
    std::vector<Structure> structures;
    std::uint64_t seed = 0;

    [[nodiscard]] Ellipse inner_skull() const;
    /// Geometry equality (ignores the seed).
    [[nodiscard]] bool same_geometry(const AnatomySpec& other) const;
};

struct Range {
    double min = 0.0;
    double max = 0.0;
};

struct ParameterRanges {
    Range skull_cx{30.0, 34.0};
    Range skull_cy{30.0, 34.0};
    Range skull_semi_a{22.0, 27.0};
    Range skull_semi_b{18.0, 22.0};
    Range skull_rotation{-0.4, 0.4};
    Range skull_thickness{2.5, 3.5};
    Range structure_count{2.0, 4.0};  // integer, inclusive
    Range structure_size{0.15, 0.32};  // semi-axis as a fraction of the inner skull minor axis
    Range structure_aspect{0.5, 1.0};
    Range structure_radius{0.0, 0.5};  // centre radius as a fraction of the inner skull
    Range structure_angle{0.0, 6.283185307179586};
    Range structure_rotation{0.0, 3.141592653589793};
    Range crescent_offset{0.3, 0.6};
    int tissue_classes = kMaxTissueClasses;  // K

    /// Throws ConfigError on inverted, non-finite or out-of-domain ranges.
    void validate() const;
};

/// Deterministic in `seed`; retries structure placement until it fits.
AnatomySpec sample_anatomy(std::uint64_t seed, const ParameterRanges& ranges = {});

/// Throws SpecError when `spec` violates the AnatomySpec invariants.
void validate_spec(const AnatomySpec& spec);

/// Rotates every shape of `spec` by `angle` about (pivot_x, pivot_y).
AnatomySpec rotated(const AnatomySpec& spec, double angle, double pivot_x, double pivot_y);

AnatomyMap rasterize_anatomy(const AnatomySpec& spec, Size2 size);

// Per-label base intensities, index = label (0 background, 1 skull, 2..7 tissue).
using IntensityTable = std::array<float, kMaxTissueClasses + 2>;

struct UsRenderConfig {
    IntensityTable intensities{0.04f, 0.92f, 0.32f, 0.10f, 0.55f, 0.72f, 0.20f, 0.45f};
    double speckle_variance = 0.05;  // multiplicative, unit mean
    double shadow_factor = 0.35;     // 1 disables shadowing
    double shadow_half_angle = 0.45;  // radians
    double shadow_start = 0.3;  // fraction of the centroid-to-far-wall distance
};

struct MrRenderConfig {
    IntensityTable intensities{0.02f, 0.25f, 0.55f, 0.95f, 0.35f, 0.80f, 0.12f, 0.72f};
    double noise_sigma = 0.01;
    double bias_amplitude = 0.04;  // 0 gives a flat bias field
};

/// Far-field acoustic shadow sector (1 = shadowed). Depends only on the map.
std::vector<std::uint8_t> shadow_mask(const AnatomyMap& map, const UsRenderConfig& cfg = {});

Image render_us(const AnatomyMap& map, std::uint64_t seed, const UsRenderConfig& cfg = {});
Image render_mr(const AnatomyMap& map, std::uint64_t seed, const MrRenderConfig& cfg = {});

// ---------------------------------------------------------------------------
// Dataset

enum class Split { Train, Val, Test };
std::string_view to_string(Split s);
Split split_from_string(std::string_view s);

struct SplitFractions {
    double train = 0.8;
    double val = 0.0;
    double test = 0.2;
};

struct DatasetConfig {
    std::uint64_t master_seed = 0;
    int n_us = 3000;
    int n_mr = 50;
    double imbalance_ratio = 60.0;
    Size2 size{64, 64};
    SplitFractions split;
    ParameterRanges ranges;
    UsRenderConfig us;
    MrRenderConfig mr;

    void validate() const;
};

struct DatasetItem {
    std::string id;
    Modality modality = Modality::US;
    std::uint64_t anatomy_seed = 0;
    std::uint64_t render_seed = 0;
    std::string image;    // PNG, relative to the dataset root
    std::string sidecar;  // float32 raster
    std::string labels;   // ground-truth AnatomyMap (evaluation only)
    Split split = Split::Train;
};

struct DatasetManifest {
    std::uint64_t master_seed = 0;
    Size2 size;
    SplitFractions split;
    double imbalance_ratio = 0.0;
    std::vector<DatasetItem> us_items;
    std::vector<DatasetItem> mr_items;

    [[nodiscard]] std::vector<const DatasetItem*> select(Modality m, Split s) const&;
    std::vector<const DatasetItem*> select(Modality m, Split s) const&& = delete;  // pointers would dangle
};

/// splitmix64-based stream derivation used for every per-item seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index);

/// Computes the manifest (seeds, paths, splits) without touching the disk.
DatasetManifest plan_dataset(const DatasetConfig& config);

/// Renders every item into `root` and writes `manifest.json`.
DatasetManifest build_dataset(const DatasetConfig& config, const std::filesystem::path& root);

std::string manifest_to_json(const DatasetManifest& manifest, const DatasetConfig& config);
/// Reads a dataset config using the manifest's key names (master_seed, size,
/// split, imbalance_ratio, n_us, n_mr, ranges, us_render, mr_render). Missing
/// keys keep the values of `base`; unknown keys raise ConfigError.
DatasetConfig dataset_config_from_json(const nlohmann::ordered_json& j, DatasetConfig base = {});
DatasetManifest load_manifest(const std::filesystem::path& root);

inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace xmsynth::phantom
