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

#include "xmsynth/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <set>

#include <json.hpp>

#include "xmsynth/io.hpp"
#include "xmsynth/networks.hpp"
#include "xmsynth/phantom.hpp"
#include "xmsynth/trainer.hpp"

namespace xmsynth::evaluation {
namespace {

using json = nlohmann::ordered_json;

constexpr std::string_view kColumns[] = {"ae", "gan", "cyclegan", "no_bilat", "no_struct", "no_attn", "full", "real"};
constexpr std::string_view kLabels[] = {"AE", "GAN", "CycleGAN", "Ours (w/o bi-lat)", "Ours (w/o struct.)",
                                        "Ours (w/o att.)", "Ours", "Real"};

std::string fixed2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

void finish(MethodResult& m) {
    double def = 0.0, ana = 0.0;
    for (const auto& p : m.pairs) {
        def += p.deformation;
        ana += p.anatomy;
    }
    const auto n = static_cast<double>(std::max<std::size_t>(m.pairs.size(), 1));
    m.deformation = def / n;
    m.anatomy = ana / n;
}

}  // namespace

std::vector<std::uint8_t> edge_mask(const Image& image, const EdgeMaskConfig& cfg) {
    const auto edges = nets::edge_map(image);
    std::vector<std::uint8_t> m(edges.pixels().size());
    std::transform(edges.pixels().begin(), edges.pixels().end(), m.begin(),
                   [&](float v) { return static_cast<std::uint8_t>(v > cfg.threshold); });
    return m;
}

double anatomy_preservation_score(const Image& synthesized, const AnatomyMap& truth, const EdgeMaskConfig& cfg) {
    if (synthesized.size() != truth.size())
        throw InternalError("anatomy_preservation_score: image and label map sizes differ");
    const auto a = mask::dilate(edge_mask(synthesized, cfg), synthesized.size(), cfg.dilation);
    const auto b = mask::dilate(truth.boundary_mask(), truth.size(), cfg.dilation);
    const bool a_empty = std::none_of(a.begin(), a.end(), [](auto v) { return v != 0; });
    if (a_empty) return 0.0;
    return mask::dice(a, b);
}

std::size_t nearest_reference(const Image& image, std::span<const Reference> pool, int max_shift) {
    if (pool.empty()) throw ConfigError("the real-MR reference pool is empty");
    std::size_t best = 0;
    double best_ssd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const double s = registration::rigid_prealign(image, pool[i].image, max_shift).ssd;
        if (s < best_ssd) {
            best_ssd = s;
            best = i;
        }
    }
    return best;
}

MethodResult score_method(const std::string& method, std::span<const Image> synthesized,
                          std::span<const std::string> item_ids, std::span<const AnatomyMap> truth,
                          std::span<const Reference> pool, const EvalConfig& cfg) {
    if (synthesized.size() != item_ids.size() || synthesized.size() != truth.size())
        throw InternalError("score_method: images, ids and label maps differ in count");
    MethodResult m;
    m.method = method;
    for (std::size_t i = 0; i < synthesized.size(); ++i) {
        const auto& img = synthesized[i];
        const auto& ref = pool[nearest_reference(img, pool, cfg.max_shift)];
        const auto rigid = registration::rigid_prealign(img, ref.image, cfg.max_shift);
        const auto moving = registration::shift_image(img, rigid.dx, rigid.dy);
        const auto reg = registration::register_ffd(moving, ref.image, cfg.registration);
        PairResult p;
        p.item = item_ids[i];
        p.reference = ref.id;
        p.dx = rigid.dx;
        p.dy = rigid.dy;
        p.initial_ssd = reg.initial_ssd;
        p.final_ssd = reg.final_ssd;
        p.deformation = registration::deformation_score(reg.field, cfg.registration.margin_cells);
        p.anatomy = anatomy_preservation_score(img, truth[i], cfg.edges);
        m.pairs.push_back(std::move(p));
    }
    finish(m);
    return m;
}

MethodResult score_real(std::span<const Reference> pool, std::span<const AnatomyMap> truth, const EvalConfig& cfg) {
    if (pool.size() != truth.size()) throw InternalError("score_real: pool and label maps differ in count");
    MethodResult m;
    m.method = "real";
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const auto reg = registration::register_ffd(pool[i].image, pool[i].image, cfg.registration);
        PairResult p;
        p.item = pool[i].id;
        p.reference = pool[i].id;
        p.initial_ssd = reg.initial_ssd;
        p.final_ssd = reg.final_ssd;
        p.deformation = registration::deformation_score(reg.field, cfg.registration.margin_cells);
        p.anatomy = anatomy_preservation_score(pool[i].image, truth[i], cfg.edges);
        m.pairs.push_back(std::move(p));
    }
    finish(m);
    return m;
}

const MethodResult* EvalReport::find(std::string_view method) const {
    for (const auto& m : methods)
        if (m.method == method) return &m;
    return nullptr;
}

std::string column_label(std::string_view method) {
    for (std::size_t i = 0; i < std::size(kColumns); ++i)
        if (kColumns[i] == method) return std::string(kLabels[i]);
    return std::string(method);
}

int column_rank(std::string_view method) {
    for (std::size_t i = 0; i < std::size(kColumns); ++i)
        if (kColumns[i] == method) return static_cast<int>(i);
    return static_cast<int>(std::size(kColumns));
}

std::string EvalReport::to_json() const {
    json j;
    j["format"] = "xmsynth-eval/1";
    j["methods"] = json::array();
    for (const auto& m : methods) {
        json pairs = json::array();
        for (const auto& p : m.pairs)
            pairs.push_back(json{{"item", p.item},
                                 {"reference", p.reference},
                                 {"shift", {p.dx, p.dy}},
                                 {"initial_ssd", p.initial_ssd},
                                 {"final_ssd", p.final_ssd},
                                 {"deformation_score", p.deformation},
                                 {"anatomy_preservation", p.anatomy}});
        j["methods"].push_back(json{{"method", m.method},
                                    {"label", column_label(m.method)},
                                    {"run", m.run},
                                    {"pairs_scored", m.pairs.size()},
                                    {"deformation_score", m.deformation},
                                    {"anatomy_preservation", m.anatomy},
                                    {"pairs", pairs}});
    }
    if (mos) {
        json rows = json::array();
        for (const auto& r : mos->rows)
            rows.push_back(json{{"source", r.source}, {"group", mos::to_string(r.group)}, {"mean", r.mean}, {"count", r.count}});
        json raters = json::object();
        for (const auto& [rater, n] : mos->rater_counts) raters[rater] = n;
        j["mos"] = json{{"rows", rows}, {"rater_counts", raters}};
    }
    j["warnings"] = warnings;
    for (const auto& w : mos ? mos->warnings : std::vector<std::string>{}) j["warnings"].push_back(w);
    return j.dump(2) + "\n";
}

std::string EvalReport::render_table() const {
    std::vector<std::string> cols;
    for (const auto& m : methods) cols.push_back(m.method);
    if (mos)
        for (const auto& r : mos->rows)
            if (std::find(cols.begin(), cols.end(), r.source) == cols.end()) cols.push_back(r.source);
    std::stable_sort(cols.begin(), cols.end(),
                     [](const auto& a, const auto& b) { return column_rank(a) < column_rank(b); });

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Method"};
    for (const auto& c : cols) header.push_back(column_label(c));
    rows.push_back(header);

    const auto method_row = [&](const char* name, auto value) {
        std::vector<std::string> row{name};
        for (const auto& c : cols) {
            const auto* m = find(c);
            row.push_back(m && !m->pairs.empty() ? fixed2(value(*m)) : "-");
        }
        rows.push_back(std::move(row));
    };
    if (!methods.empty()) {
        method_row("Deformation score", [](const MethodResult& m) { return m.deformation; });
        method_row("Anatomy preservation", [](const MethodResult& m) { return m.anatomy; });
    }
    if (mos && !mos->rows.empty()) {
        for (const auto g : {mos::Group::Expert, mos::Group::Beginner}) {
            std::vector<std::string> row{g == mos::Group::Expert ? "MOS Expert" : "MOS Beginner"};
            for (const auto& c : cols) {
                const auto v = mos->mean(c, g);
                row.push_back(v ? fixed2(*v) : "-");
            }
            rows.push_back(std::move(row));
        }
    }

    std::vector<std::size_t> width(header.size(), 0);
    for (const auto& r : rows)
        for (std::size_t i = 0; i < r.size(); ++i) width[i] = std::max(width[i], r[i].size());
    std::string out;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
        std::string line;
        for (std::size_t i = 0; i < rows[ri].size(); ++i) {
            const auto& cell = rows[ri][i];
            const auto pad = std::string(width[i] - cell.size(), ' ');
            line += i == 0 ? cell + pad : "  " + pad + cell;
        }
        out += line + "\n";
        if (ri == 0) out += std::string(line.size(), '-') + "\n";
    }
    return out;
}

EvalReport eval_report(std::span<const std::filesystem::path> runs, const std::filesystem::path& root,
                       const EvalConfig& cfg, std::optional<std::span<const mos::MosRecord>> records) {
    cfg.registration.validate();
    const auto manifest = phantom::load_manifest(root);

    auto us_items = manifest.select(Modality::US, phantom::Split::Test);
    if (cfg.max_items > 0 && us_items.size() > static_cast<std::size_t>(cfg.max_items))
        us_items.resize(static_cast<std::size_t>(cfg.max_items));
    const auto mr_items = manifest.select(Modality::MR, phantom::Split::Test);
    if (us_items.empty() || mr_items.empty()) throw ConfigError("dataset test split lacks US or MR images");

    std::vector<Image> us;
    std::vector<std::string> us_ids;
    std::vector<AnatomyMap> us_truth;
    for (const auto* item : us_items) {
        us.push_back(io::read_f32(root / item->sidecar, Modality::US));
        us_ids.push_back(item->id);
        us_truth.push_back(io::read_labels(root / item->labels));
    }
    std::vector<Reference> pool;
    std::vector<AnatomyMap> pool_truth;
    for (const auto* item : mr_items) {
        pool.push_back({item->id, io::read_f32(root / item->sidecar, Modality::MR)});
        pool_truth.push_back(io::read_labels(root / item->labels));
    }

    EvalReport report;
    if (us.size() < 20)
        report.warnings.push_back("only " + std::to_string(us.size()) + " test pairs per method (fewer than 20)");
    for (const auto& run : runs) {
        const auto ckpt = training::resolve_checkpoint(run);
        const auto meta = checkpoint::read_meta(ckpt);
        const auto method = meta.at("variant").get<std::string>();
        const auto synth = training::synthesize(ckpt, us);
        auto m = score_method(method, synth, us_ids, us_truth, pool, cfg);
        m.run = ckpt.string();
        report.methods.push_back(std::move(m));
    }
    report.methods.push_back(score_real(pool, pool_truth, cfg));
    std::stable_sort(report.methods.begin(), report.methods.end(),
                     [](const auto& a, const auto& b) { return column_rank(a.method) < column_rank(b.method); });

    if (records) {
        if (records->empty()) report.warnings.push_back("MOS CSV has no records; MOS rows omitted");
        else report.mos = mos::mos_aggregate(*records);
    }
    return report;
}

}  // namespace xmsynth::evaluation
