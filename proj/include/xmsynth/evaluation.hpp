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

// Evaluation of trained runs: registration-based deformation score against
// the real-MR pool, anatomy preservation against the phantom ground truth,
// and the comparison table with optional MOS rows.

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmsynth/image.hpp"
#include "xmsynth/mos.hpp"
#include "xmsynth/registration.hpp"

namespace xmsynth::evaluation {

struct EdgeMaskConfig {
    double threshold = 0.08;  // on the [0,1] EdgeNet response
    int dilation = 1;
};

/// Thresholded EdgeNet response, before dilation.
std::vector<std::uint8_t> edge_mask(const Image& image, const EdgeMaskConfig& cfg = {});

/// Dice between the dilated edge mask of `synthesized` and the dilated label
/// boundary of `truth`.
double anatomy_preservation_score(const Image& synthesized, const AnatomyMap& truth,
                                  const EdgeMaskConfig& cfg = {});

struct PairResult {
    std::string item;       // synthesized (source US) item id
    std::string reference;  // real MR item id
    int dx = 0;             // rigid pre-alignment of the synthesized image
    int dy = 0;
    double initial_ssd = 0.0;
    double final_ssd = 0.0;
    double deformation = 0.0;
    double anatomy = 0.0;
};

struct MethodResult {
    std::string method;  // variant id, or "real"
    std::string run;     // checkpoint path, empty for the real anchor
    std::vector<PairResult> pairs;
    double deformation = 0.0;  // mean over pairs
    double anatomy = 0.0;
};

struct Reference {
    std::string id;
    Image image;
};

/// Index of the reference with the lowest SSD after rigid pre-alignment.
std::size_t nearest_reference(const Image& image, std::span<const Reference> pool, int max_shift = 4);

struct EvalConfig {
    int max_items = 24;  // test US images per method (0 = all)
    int max_shift = 4;
    registration::RegistrationConfig registration;
    EdgeMaskConfig edges;
};

/// Scores synthesized images: pairs each with its nearest reference, shifts it
/// by the pre-alignment, registers it to the reference and scores the field.
MethodResult score_method(const std::string& method, std::span<const Image> synthesized,
                          std::span<const std::string> item_ids, std::span<const AnatomyMap> truth,
                          std::span<const Reference> pool, const EvalConfig& cfg);

/// Self-registration of every reference: the identity anchor.
MethodResult score_real(std::span<const Reference> pool, std::span<const AnatomyMap> truth,
                        const EvalConfig& cfg);

struct EvalReport {
    std::vector<MethodResult> methods;
    std::optional<mos::MosTable> mos;
    std::vector<std::string> warnings;

    [[nodiscard]] const MethodResult* find(std::string_view method) const;
    [[nodiscard]] std::string to_json() const;
    /// Comparison table: one column per method in the canonical order.
    [[nodiscard]] std::string render_table() const;
};

/// Column label for a method id (e.g. "no_struct" -> "Ours (w/o struct.)").
std::string column_label(std::string_view method);
/// Canonical column order: ae, gan, cyclegan, no_bilat, no_struct, no_attn, full, real.
int column_rank(std::string_view method);

/// Evaluates run directories or checkpoints on the dataset's test split.
EvalReport eval_report(std::span<const std::filesystem::path> runs, const std::filesystem::path& dataset_root,
                       const EvalConfig& cfg = {}, std::optional<std::span<const mos::MosRecord>> mos = std::nullopt);

}  // namespace xmsynth::evaluation
