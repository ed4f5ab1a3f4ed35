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

#include "xmsynth/cli.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "xmsynth/checkpoint.hpp"
#include "xmsynth/evaluation.hpp"
#include "xmsynth/io.hpp"
#include "xmsynth/mos.hpp"
#include "xmsynth/phantom.hpp"
#include "xmsynth/trainer.hpp"

namespace xmsynth::cli {
namespace {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct FileConfig {
    std::optional<std::uint64_t> seed;
    json dataset = json::object();
    json train = json::object();
    json eval = json::object();
    json session = json::object();
};

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool force = false;
    std::string variant;
    std::optional<long long> steps;
    std::optional<double> ratio;
    std::string mos_csv;
    std::string answer_key;
    std::string dataset;
    std::string checkpoint;
    std::string input;
    std::vector<std::string> runs;
};

evaluation::EvalConfig eval_config_from_json(const json& j) {
    evaluation::EvalConfig cfg;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "max_items") cfg.max_items = v.get<int>();
            else if (key == "max_shift") cfg.max_shift = v.get<int>();
            else if (key == "edge_threshold") cfg.edges.threshold = v.get<double>();
            else if (key == "edge_dilation") cfg.edges.dilation = v.get<int>();
            else if (key == "registration") {
                auto& r = cfg.registration;
                for (const auto& [k, f] : v.items()) {
                    if (k == "grid_spacing") r.grid_spacing = f.get<double>();
                    else if (k == "smoothness") r.smoothness = f.get<double>();
                    else if (k == "steps") r.steps = f.get<int>();
                    else if (k == "step_size") r.step_size = f.get<double>();
                    else if (k == "smoothing_sigmas") r.smoothing_sigmas = f.get<std::vector<double>>();
                    else if (k == "margin_cells") r.margin_cells = f.get<int>();
                    else throw ConfigError("unknown registration config key '" + k + "'");
                }
            } else {
                throw ConfigError("unknown eval config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad eval config value: ") + e.what());
    }
    if (cfg.max_items < 0 || cfg.max_shift < 0 || cfg.edges.dilation < 0)
        throw ConfigError("eval counts must be non-negative");
    cfg.registration.validate();
    return cfg;
}

int session_count_from_json(const json& j) {
    int count = mos::kSessionSize;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "count") count = v.get<int>();
            else throw ConfigError("unknown session config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad session config value: ") + e.what());
    }
    return count;
}

FileConfig load_config(const std::string& path) {
    FileConfig fc;
    if (path.empty()) return fc;
    if (!fs::exists(path)) throw ConfigError("config file " + path + " does not exist");
    json j;
    try {
        j = json::parse(io::read_text(path));
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    for (const auto& [key, v] : j.items()) {
        if (key == "seed") {
            if (!v.is_number_unsigned()) throw ConfigError("'seed' must be a non-negative integer");
            fc.seed = v.get<std::uint64_t>();
        } else if (key == "dataset" || key == "train" || key == "eval" || key == "session") {
            if (!v.is_object()) throw ConfigError("config section '" + key + "' must be an object");
            (key == "dataset" ? fc.dataset : key == "train" ? fc.train : key == "eval" ? fc.eval : fc.session) = v;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    // Validate every section up front so a typo fails regardless of the subcommand.
    phantom::dataset_config_from_json(fc.dataset);
    training::train_config_from_json(fc.train);
    eval_config_from_json(fc.eval);
    session_count_from_json(fc.session);
    return fc;
}

/// Refuses to reuse a non-empty output directory unless --force.
void prepare_out(const fs::path& out, bool force, const char* marker) {
    if (out.empty()) throw ConfigError("--out is required");
    if (fs::exists(out) && !fs::is_directory(out)) throw ConfigError(out.string() + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out)) {
        if (!force) throw ConfigError(out.string() + " already exists and is not empty (use --force)");
        if (!fs::exists(out / marker))
            throw ConfigError("refusing to overwrite " + out.string() + ": it does not look like xmsynth output");
    }
}

std::vector<Image> load_test_us(const fs::path& root, std::vector<std::string>* ids) {
    const auto manifest = phantom::load_manifest(root);
    std::vector<Image> images;
    for (const auto* item : manifest.select(Modality::US, phantom::Split::Test)) {
        images.push_back(io::read_f32(root / item->sidecar, Modality::US));
        if (ids) ids->push_back(item->id);
    }
    return images;
}

// ---------------------------------------------------------------------------

int cmd_phantom_gen(const Options& o, std::ostream& out) {
    const auto fc = load_config(o.config);
    auto cfg = phantom::dataset_config_from_json(fc.dataset);
    if (fc.seed) cfg.master_seed = *fc.seed;
    if (o.seed) cfg.master_seed = *o.seed;
    const bool file_ratio = fc.dataset.contains("imbalance_ratio");
    const bool file_n_us = fc.dataset.contains("n_us");
    if (o.ratio) {
        if (!(*o.ratio > 0.0)) throw ConfigError("--ratio must be positive");
        cfg.imbalance_ratio = *o.ratio;
        cfg.n_us = static_cast<int>(std::lround(*o.ratio * cfg.n_mr));
    } else if (file_ratio && !file_n_us) {
        cfg.n_us = static_cast<int>(std::lround(cfg.imbalance_ratio * cfg.n_mr));
    } else if (!file_ratio) {
        cfg.imbalance_ratio = static_cast<double>(cfg.n_us) / cfg.n_mr;
    }
    cfg.validate();

    const fs::path root = o.out;
    prepare_out(root, o.force, phantom::kManifestFile);
    if (fs::exists(root / phantom::kManifestFile)) {
        fs::remove_all(root / "us");
        fs::remove_all(root / "mr");
        fs::remove(root / phantom::kManifestFile);
    }
    const auto m = phantom::build_dataset(cfg, root);
    out << "wrote " << m.us_items.size() << " US and " << m.mr_items.size() << " MR images to " << root.string()
        << " (seed " << cfg.master_seed << ")\n";
    return kExitOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    const auto fc = load_config(o.config);
    auto cfg = training::train_config_from_json(fc.train);
    if (fc.seed) cfg.seed = *fc.seed;
    if (o.seed) cfg.seed = *o.seed;
    if (!o.variant.empty()) cfg.variant = training::variant_from_string(o.variant);
    if (o.steps) cfg.steps = *o.steps;
    cfg.validate();

    const fs::path run_dir = o.out;
    prepare_out(run_dir, o.force, "losses.log");
    if (fs::exists(run_dir))
        for (const auto& entry : fs::directory_iterator(run_dir))
            if (entry.path().filename().string().starts_with("ckpt_")) fs::remove(entry.path());
    const auto final_ckpt = training::train(cfg, o.dataset, run_dir, &out, 100);
    out << "final checkpoint: " << final_ckpt.string() << "\n";
    return kExitOk;
}

int cmd_synth(const Options& o, std::ostream& out) {
    load_config(o.config);
    if (o.seed) torch::manual_seed(*o.seed);
    const auto ckpt = training::resolve_checkpoint(o.checkpoint);

    std::vector<Image> inputs;
    std::vector<std::string> names;
    const fs::path in = o.input;
    if (!fs::exists(in)) throw ConfigError("input " + in.string() + " does not exist");
    if (fs::is_directory(in) && fs::exists(in / phantom::kManifestFile)) {
        inputs = load_test_us(in, &names);
    } else if (fs::is_directory(in)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(in)) {
            const auto ext = e.path().extension();
            if (e.is_regular_file() && (ext == ".png" || ext == ".f32")) files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            inputs.push_back(io::read_image(f, Modality::US));
            names.push_back(f.stem().string());
        }
    } else {
        inputs.push_back(io::read_image(in, Modality::US));
        names.push_back(in.stem().string());
    }
    if (inputs.empty()) throw ConfigError("no input images found in " + in.string());

    const fs::path dir = o.out;
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(dir);
    const auto synth = training::synthesize(ckpt, inputs);
    for (std::size_t i = 0; i < synth.size(); ++i) {
        io::write_png(dir / (names[i] + ".png"), synth[i]);
        io::write_f32(dir / (names[i] + ".f32"), synth[i]);
    }
    out << "synthesized " << synth.size() << " images into " << dir.string() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
    const auto fc = load_config(o.config);
    const auto cfg = eval_config_from_json(fc.eval);
    if (o.seed) torch::manual_seed(*o.seed);

    std::optional<std::vector<mos::MosRecord>> records;
    if (!o.mos_csv.empty()) {
        if (!fs::exists(o.mos_csv)) throw ConfigError("MOS CSV " + o.mos_csv + " does not exist");
        const auto text = io::read_text(o.mos_csv);
        records.emplace();
        if (text.find_first_not_of(" \t\r\n") != std::string::npos) *records = mos::parse_csv(text);
        if (!o.answer_key.empty())
            *records = mos::join_answer_key(*records, mos::parse_answer_key(io::read_text(o.answer_key)));
    } else if (!o.answer_key.empty()) {
        throw ConfigError("--answer-key needs --mos-csv");
    }

    std::vector<fs::path> runs(o.runs.begin(), o.runs.end());
    std::optional<std::span<const mos::MosRecord>> mos_span;
    if (records) mos_span = std::span<const mos::MosRecord>(*records);
    const auto report = evaluation::eval_report(runs, o.dataset, cfg, mos_span);

    const fs::path dir = o.out;
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(dir);
    io::write_text(dir / "report.json", report.to_json());
    const auto table = report.render_table();
    io::write_text(dir / "report.txt", table);
    out << table;
    for (const auto& w : report.warnings) err << "warning: " << w << "\n";
    if (report.mos)
        for (const auto& w : report.mos->warnings) err << "warning: " << w << "\n";
    return kExitOk;
}

int cmd_mos_session(const Options& o, std::ostream& out) {
    const auto fc = load_config(o.config);
    const int count = session_count_from_json(fc.session);
    std::uint64_t seed = fc.seed.value_or(0);
    if (o.seed) seed = *o.seed;

    const fs::path root = o.dataset;
    const auto manifest = phantom::load_manifest(root);
    std::vector<mos::SessionCandidate> candidates;
    for (const auto* item : manifest.select(Modality::MR, phantom::Split::Test))
        candidates.push_back({io::read_f32(root / item->sidecar, Modality::MR), "real", item->id});
    std::vector<std::string> us_ids;
    const auto us = o.runs.empty() ? std::vector<Image>{} : load_test_us(root, &us_ids);
    for (const auto& run : o.runs) {
        const auto ckpt = training::resolve_checkpoint(run);
        const auto variant = checkpoint::read_meta(ckpt).at("variant").get<std::string>();
        auto synth = training::synthesize(ckpt, us);
        for (std::size_t i = 0; i < synth.size(); ++i)
            candidates.push_back({std::move(synth[i]), variant, variant + ":" + us_ids[i]});
    }

    const fs::path dir = o.out;
    prepare_out(dir, o.force, "session.json");
    const auto picked = mos::draw_session(candidates, seed, count);
    fs::remove_all(dir / "images");
    fs::create_directories(dir / "images");
    std::vector<mos::SessionItem> items;
    for (std::size_t k = 0; k < picked.size(); ++k) {
        char id[32];
        std::snprintf(id, sizeof(id), "item_%03zu", k + 1);
        const auto& c = candidates[picked[k]];
        const std::string image = std::string("images/") + id + ".png";
        io::write_png(dir / image, c.image);
        items.push_back({id, image, c.source, c.origin});
    }
    const std::string session_id = "session-" + std::to_string(seed);
    io::write_text(dir / "session.json", mos::session_manifest_json(items, session_id));
    io::write_text(dir / "answer_key.json", mos::answer_key_json(items, session_id));
    out << "session of " << items.size() << " items written to " << dir.string() << "\n";
    return kExitOk;
}

void add_common(CLI::App* sub, Options& o) {
    sub->add_option("--config", o.config, "JSON config file");
    sub->add_option("--seed", o.seed, "random seed");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"xmsynth: unpaired ultrasound-to-MR synthesis on head phantoms", "xmsynth"};
    app.require_subcommand(1);
    Options o;

    auto* gen = app.add_subcommand("phantom-gen", "generate the unpaired phantom dataset");
    add_common(gen, o);
    gen->add_option("--out", o.out, "dataset directory")->required();
    gen->add_option("--ratio", o.ratio, "US:MR imbalance ratio (n_us = ratio * n_mr)");
    gen->add_flag("--force", o.force, "overwrite an existing dataset");

    auto* train = app.add_subcommand("train", "train a variant or baseline");
    add_common(train, o);
    train->add_option("dataset", o.dataset, "dataset directory")->required();
    train->add_option("--out", o.out, "run directory")->required();
    train->add_option("--variant", o.variant, "full, no_bilat, no_struct, no_attn, ae, gan or cyclegan");
    train->add_option("--steps", o.steps, "training steps");
    train->add_flag("--force", o.force, "overwrite an existing run directory");

    auto* synth = app.add_subcommand("synth", "translate US images with a checkpoint");
    add_common(synth, o);
    synth->add_option("checkpoint", o.checkpoint, "checkpoint file or run directory")->required();
    synth->add_option("input", o.input, "image, image directory or dataset (test split)")->required();
    synth->add_option("--out", o.out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "score runs on the test split");
    add_common(eval, o);
    eval->add_option("dataset", o.dataset, "dataset directory")->required();
    eval->add_option("runs", o.runs, "run directories or checkpoints");
    eval->add_option("--out", o.out, "report directory")->required();
    eval->add_option("--mos-csv", o.mos_csv, "rating CSV (rater,group,item,source,score,timestamp)");
    eval->add_option("--answer-key", o.answer_key, "session answer key used to fill CSV sources");

    auto* session = app.add_subcommand("mos-session", "build a blinded rating session");
    add_common(session, o);
    session->add_option("dataset", o.dataset, "dataset directory")->required();
    session->add_option("runs", o.runs, "run directories or checkpoints");
    session->add_option("--out", o.out, "session directory")->required();
    session->add_flag("--force", o.force, "overwrite an existing session");

    std::vector<std::string> argv_store{"xmsynth"};
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_phantom_gen(o, out);
        if (train->parsed()) return cmd_train(o, out);
        if (synth->parsed()) return cmd_synth(o, out);
        if (eval->parsed()) return cmd_eval(o, out, err);
        if (session->parsed()) return cmd_mos_session(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace xmsynth::cli
